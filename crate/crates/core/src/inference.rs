//! Nonparametric bootstrap percentile confidence intervals. Individuals are
//! resampled with replacement and the full procedure, including every
//! nuisance fit, is recomputed per replicate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{BootError, EstimError};
use crate::util::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub n_boot: usize,
    pub seed: u64,
    /// Two-sided coverage level, e.g. 0.95.
    pub ci_level: f64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            n_boot: 500,
            seed: 0,
            ci_level: 0.95,
        }
    }
}

impl BootstrapPlan {
    pub fn check(&self) -> Result<(), BootError> {
        if self.n_boot < 2 || !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(BootError::TooManyFailures {
                failed: 0,
                total: self.n_boot,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub lo: f64,
    pub hi: f64,
    /// Successful replicate estimates, in replicate order.
    pub replicates: Vec<f64>,
    pub n_failed: usize,
    /// Standard deviation of the replicate estimates.
    pub se: f64,
}

/// Resampled copy of the dataset for one replicate; records keep their
/// original content, ids are re-labelled to stay unique.
pub fn resample(ds: &TrialDataset, rng: &mut ChaCha8Rng) -> TrialDataset {
    let n = ds.n();
    let records = (0..n)
        .map(|j| {
            let pick = rng.gen_range(0..n);
            let mut r = ds.records[pick].clone();
            r.id = format!("b{j}");
            r
        })
        .collect();
    TrialDataset {
        grid: ds.grid,
        records,
        baseline_names: ds.baseline_names.clone(),
        tv_names: ds.tv_names.clone(),
        partition: ds.partition.clone(),
    }
}

/// Percentile bootstrap for any pure estimator procedure. Replicates run in
/// parallel with per-replicate seed streams, so the result is independent of
/// thread count; failed replicates (separation, empty risk sets) are
/// excluded and counted, with more than 10% failures an error.
pub fn bootstrap_ci<F>(
    ds: &TrialDataset,
    estimator: F,
    plan: &BootstrapPlan,
) -> Result<BootstrapResult, BootError>
where
    F: Fn(&TrialDataset) -> Result<f64, EstimError> + Sync,
{
    plan.check()?;
    let results: Vec<Option<f64>> = (0..plan.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
            rng.set_stream(0x8000_0000_0000_0000u64 | r as u64);
            let sample = resample(ds, &mut rng);
            estimator(&sample).ok()
        })
        .collect();
    let n_failed = results.iter().filter(|r| r.is_none()).count();
    if n_failed * 10 > plan.n_boot {
        return Err(BootError::TooManyFailures {
            failed: n_failed,
            total: plan.n_boot,
        });
    }
    let replicates: Vec<f64> = results.into_iter().flatten().collect();
    let mut sorted = replicates.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = 1.0 - plan.ci_level;
    let lo = quantile_sorted(&sorted, alpha / 2.0);
    let hi = quantile_sorted(&sorted, 1.0 - alpha / 2.0);
    let mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
    let var = if replicates.len() > 1 {
        replicates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (replicates.len() as f64 - 1.0)
    } else {
        0.0
    };
    Ok(BootstrapResult {
        lo,
        hi,
        replicates,
        n_failed,
        se: var.sqrt(),
    })
}

//! A small formula grammar for model specs:
//!
//! ```text
//! D ~ 1 + A + t + L0_age + L_prog | A
//! ```
//!
//! The response is `D`, `C`, `Y`, or `L_<name>`; terms are `1` (intercept),
//! `A` (arm), `t` (interval index), `L0_<name>` (baseline), `L_<name>` (most
//! recent time-varying value), and `:`-joined products. The optional `| A`
//! suffix stratifies the fit by arm.

use crate::error::FitError;

use super::design::{Link, ModelSpec, ResponseChannel, Term};

pub fn parse_formula(input: &str) -> Result<ModelSpec, FitError> {
    let (lhs, rest) = input
        .split_once('~')
        .ok_or_else(|| FitError::Formula(format!("`{input}` is missing `~`")))?;
    let (rhs, stratum) = match rest.split_once('|') {
        Some((r, s)) => (r, Some(s.trim())),
        None => (rest, None),
    };
    let stratify_by_arm = match stratum {
        None => false,
        Some("A") => true,
        Some(other) => {
            return Err(FitError::Formula(format!(
                "unsupported stratum `{other}` (only `A`)"
            )))
        }
    };
    let response = parse_response(lhs.trim())?;
    let mut terms = Vec::new();
    for piece in rhs.split('+') {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(FitError::Formula("empty term".into()));
        }
        terms.push(parse_term(piece)?);
    }
    let link = match response {
        ResponseChannel::Outcome => Link::Identity,
        _ => Link::Logit,
    };
    let spec = ModelSpec {
        response,
        terms,
        link,
        stratify_by_arm,
    };
    spec.check()?;
    Ok(spec)
}

fn parse_response(s: &str) -> Result<ResponseChannel, FitError> {
    match s {
        "D" => Ok(ResponseChannel::Event),
        "C" => Ok(ResponseChannel::Censoring),
        "Y" => Ok(ResponseChannel::Outcome),
        other => match other.strip_prefix("L_") {
            Some(name) if !name.is_empty() => Ok(ResponseChannel::Covariate {
                name: name.to_string(),
            }),
            _ => Err(FitError::Formula(format!("unknown response `{other}`"))),
        },
    }
}

fn parse_term(s: &str) -> Result<Term, FitError> {
    if s.contains(':') {
        let parts: Vec<Term> = s
            .split(':')
            .map(|p| parse_base_term(p.trim()))
            .collect::<Result<_, _>>()?;
        return Ok(Term::Interaction(parts));
    }
    parse_base_term(s)
}

fn parse_base_term(s: &str) -> Result<Term, FitError> {
    match s {
        "1" => Ok(Term::Intercept),
        "A" => Ok(Term::Arm),
        "t" => Ok(Term::TimeIndex),
        other => {
            if let Some(name) = other.strip_prefix("L0_") {
                if !name.is_empty() {
                    return Ok(Term::Baseline(name.to_string()));
                }
            }
            if let Some(name) = other.strip_prefix("L_") {
                if !name.is_empty() {
                    return Ok(Term::Lagged(name.to_string()));
                }
            }
            Err(FitError::Formula(format!("unknown term `{other}`")))
        }
    }
}

/// Round-trip printer for a model spec.
pub fn format_formula(spec: &ModelSpec) -> String {
    let terms = spec
        .terms
        .iter()
        .map(Term::label)
        .collect::<Vec<_>>()
        .join(" + ");
    let stratum = if spec.stratify_by_arm { " | A" } else { "" };
    format!("{} ~ {terms}{stratum}", spec.response.label())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let spec = parse_formula("D ~ 1 + t + L0_age + L_prog | A").unwrap();
        assert!(spec.stratify_by_arm);
        assert_eq!(spec.link, Link::Logit);
        assert_eq!(format_formula(&spec), "D ~ 1 + t + L0_age + L_prog | A");

        let y = parse_formula("Y ~ 1 + A + L0_x + L_prog").unwrap();
        assert_eq!(y.link, Link::Identity);

        let inter = parse_formula("Y ~ 1 + A + A:L0_x").unwrap();
        assert_eq!(format_formula(&inter), "Y ~ 1 + A + A:L0_x");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_formula("D + 1").is_err());
        assert!(parse_formula("Q ~ 1").is_err());
        assert!(parse_formula("D ~ 1 + banana").is_err());
        assert!(parse_formula("D ~ 1 | L0_x").is_err());
    }
}

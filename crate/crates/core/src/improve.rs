//! Cross-project threshold improvement check.
//!
//! A threshold is kept when at least half of the projects stay within the
//! level-2 band and more than a quarter stay within the level-0 band at the
//! same milestone; otherwise corrective actions are suggested.

use std::collections::HashSet;
use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use crate::evaluate::DeviationPct;
use crate::fixed::{Fixed, SCALE};
use crate::schedule::DeviationBands;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImproveError {
    #[error("no observations")]
    Empty,
    #[error("observations mix metrics `{0}` and `{1}`")]
    MixedMetrics(String, String),
    #[error("observations mix milestones `{0}` and `{1}`")]
    MixedMilestones(String, String),
    #[error("project `{0}` observed more than once")]
    DuplicateProject(String),
    #[error("portfolio CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortfolioObservation {
    pub project_id: String,
    pub metric_name: String,
    pub milestone_name: String,
    pub pct: DeviationPct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    KeepThreshold,
    ActionNeeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImprovementVerdict {
    pub decision: Decision,
    pub frac_within_l2: Fixed,
    pub frac_within_l0: Fixed,
    pub suggestions: Vec<String>,
}

/// Decision constants. The level-2 share is inclusive, the level-0 share strict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImprovementRule {
    pub min_within_l2: Fixed,
    pub min_within_l0_exclusive: Fixed,
}

impl Default for ImprovementRule {
    fn default() -> Self {
        ImprovementRule { min_within_l2: "0.5".parse().unwrap(), min_within_l0_exclusive: "0.25".parse().unwrap() }
    }
}

pub const MODIFY_THRESHOLDS: &str = "modification of the thresholds";
pub const COMMUNICATE_IMPORTANCE: &str = "communication of the importance of the metric";
pub const REDEFINE_METRIC: &str = "redefinition of the metric";

pub fn suggestions_catalog() -> Vec<String> {
    [MODIFY_THRESHOLDS, COMMUNICATE_IMPORTANCE, REDEFINE_METRIC].map(String::from).to_vec()
}

pub fn improvement_check(
    observations: &[PortfolioObservation],
    bands: &DeviationBands,
) -> Result<ImprovementVerdict, ImproveError> {
    improvement_check_with(observations, bands, &ImprovementRule::default())
}

pub fn improvement_check_with(
    observations: &[PortfolioObservation],
    bands: &DeviationBands,
    rule: &ImprovementRule,
) -> Result<ImprovementVerdict, ImproveError> {
    let first = observations.first().ok_or(ImproveError::Empty)?;
    let mut projects = HashSet::new();
    for obs in observations {
        if obs.metric_name != first.metric_name {
            return Err(ImproveError::MixedMetrics(first.metric_name.clone(), obs.metric_name.clone()));
        }
        if obs.milestone_name != first.milestone_name {
            return Err(ImproveError::MixedMilestones(first.milestone_name.clone(), obs.milestone_name.clone()));
        }
        if !projects.insert(obs.project_id.as_str()) {
            return Err(ImproveError::DuplicateProject(obs.project_id.clone()));
        }
    }

    let n = observations.len() as i64;
    let within_l2 = observations.iter().filter(|o| o.pct.within(bands.level2)).count() as i64;
    let within_l0 = observations.iter().filter(|o| o.pct.within(bands.level0)).count() as i64;

    // count / n compared against the rule fractions without rounding
    let share_at_least =
        |count: i64, frac: Fixed| i128::from(count) * i128::from(SCALE) >= i128::from(frac.raw()) * i128::from(n);
    let share_above =
        |count: i64, frac: Fixed| i128::from(count) * i128::from(SCALE) > i128::from(frac.raw()) * i128::from(n);
    let keep = share_at_least(within_l2, rule.min_within_l2) && share_above(within_l0, rule.min_within_l0_exclusive);

    Ok(ImprovementVerdict {
        decision: if keep { Decision::KeepThreshold } else { Decision::ActionNeeded },
        frac_within_l2: Fixed::ratio(within_l2, n),
        frac_within_l0: Fixed::ratio(within_l0, n),
        suggestions: if keep { Vec::new() } else { suggestions_catalog() },
    })
}

#[derive(Debug, Deserialize)]
struct PortfolioRow {
    project: String,
    metric: String,
    milestone: String,
    pct: String,
}

/// Reads observations from CSV with header `project,metric,milestone,pct`.
pub fn parse_portfolio_csv<R: Read>(input: R) -> Result<Vec<PortfolioObservation>, ImproveError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| ImproveError::Csv(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["project", "metric", "milestone", "pct"] {
        return Err(ImproveError::Csv("expected header `project,metric,milestone,pct`".into()));
    }
    reader
        .deserialize::<PortfolioRow>()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 2;
            let row = row.map_err(|e| ImproveError::Csv(format!("line {line}: {e}")))?;
            let pct = row.pct.parse().map_err(|e| ImproveError::Csv(format!("line {line}: {e}")))?;
            Ok(PortfolioObservation {
                project_id: row.project,
                metric_name: row.metric,
                milestone_name: row.milestone,
                pct,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bands() -> DeviationBands {
        DeviationBands::from_ints(10, 20, 30).unwrap()
    }

    fn portfolio(pcts: &[DeviationPct]) -> Vec<PortfolioObservation> {
        pcts.iter()
            .enumerate()
            .map(|(i, pct)| PortfolioObservation {
                project_id: format!("P{i}"),
                metric_name: "Open defects (excluding customer)".into(),
                milestone_name: "Release 3.0.0".into(),
                pct: *pct,
            })
            .collect()
    }

    fn pct(v: i64) -> DeviationPct {
        DeviationPct::Finite(Fixed::from_int(v))
    }

    #[test]
    fn keeps_threshold_with_six_and_three() {
        // 3 within l0, 3 more within l2, 4 beyond
        let obs = portfolio(&[
            pct(5),
            pct(-2),
            pct(10),
            pct(15),
            pct(25),
            pct(30),
            pct(31),
            pct(50),
            pct(90),
            DeviationPct::Infinite,
        ]);
        let v = improvement_check(&obs, &bands()).unwrap();
        assert_eq!(v.decision, Decision::KeepThreshold);
        assert_eq!(v.frac_within_l2, "0.6".parse().unwrap());
        assert_eq!(v.frac_within_l0, "0.3".parse().unwrap());
        assert!(v.suggestions.is_empty());
    }

    #[test]
    fn level0_share_must_exceed_a_quarter() {
        let obs = portfolio(&[pct(1), pct(2), pct(15), pct(20), pct(30), pct(40), pct(40), pct(40), pct(40), pct(40)]);
        let v = improvement_check(&obs, &bands()).unwrap();
        assert_eq!(v.decision, Decision::ActionNeeded);
        assert_eq!(v.frac_within_l0, "0.2".parse().unwrap());
        assert_eq!(v.suggestions, suggestions_catalog());
    }

    #[test]
    fn exactly_half_within_level2_is_enough() {
        let obs = portfolio(&[pct(0), pct(10), pct(31), pct(45)]);
        let v = improvement_check(&obs, &bands()).unwrap();
        assert_eq!(v.decision, Decision::KeepThreshold);
        assert_eq!(v.frac_within_l2, "0.5".parse().unwrap());
    }

    #[test]
    fn exactly_a_quarter_within_level0_is_not_enough() {
        let obs = portfolio(&[pct(5), pct(20), pct(25), pct(50)]);
        assert_eq!(improvement_check(&obs, &bands()).unwrap().decision, Decision::ActionNeeded);
    }

    #[test]
    fn input_errors() {
        assert_eq!(improvement_check(&[], &bands()), Err(ImproveError::Empty));
        let mut obs = portfolio(&[pct(1), pct(2)]);
        obs[1].metric_name = "other".into();
        assert!(matches!(improvement_check(&obs, &bands()), Err(ImproveError::MixedMetrics(..))));
        let mut obs = portfolio(&[pct(1), pct(2)]);
        obs[1].milestone_name = "other".into();
        assert!(matches!(improvement_check(&obs, &bands()), Err(ImproveError::MixedMilestones(..))));
        let mut obs = portfolio(&[pct(1), pct(2)]);
        obs[1].project_id = "P0".into();
        assert!(matches!(improvement_check(&obs, &bands()), Err(ImproveError::DuplicateProject(_))));
    }

    #[test]
    fn catalog_lists_three_actions() {
        let c = suggestions_catalog();
        assert_eq!(c.len(), 3);
        assert!(c.iter().any(|s| s == "modification of the thresholds"));
        assert!(c.iter().any(|s| s == "redefinition of the metric"));
    }

    #[test]
    fn custom_rule() {
        let obs = portfolio(&[pct(5), pct(20), pct(25), pct(50)]);
        let lax = ImprovementRule { min_within_l2: "0.25".parse().unwrap(), min_within_l0_exclusive: Fixed::ZERO };
        assert_eq!(improvement_check_with(&obs, &bands(), &lax).unwrap().decision, Decision::KeepThreshold);
    }

    #[test]
    fn csv_accepts_inf() {
        let csv = "project,metric,milestone,pct\nA,m,R1,12.5\nB,m,R1,inf\nC,m,R1,-3\n";
        let obs = parse_portfolio_csv(csv.as_bytes()).unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[1].pct, DeviationPct::Infinite);
        assert_eq!(obs[0].pct, DeviationPct::Finite("12.5".parse().unwrap()));
        assert!(parse_portfolio_csv("project,metric,milestone,pct\nA,m,R1,x\n".as_bytes()).is_err());
    }
}

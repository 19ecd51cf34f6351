//! Deterministic synthetic projects for exercising the whole pipeline.
//!
//! Randomness comes from ChaCha8 seeded through `seed_from_u64`, so a seed
//! reproduces the same event log byte for byte on every platform.
//!
//! Each simulated week:
//! 1. new defects arrive (`arrival_rate`, plus the initial backlog in week 0)
//!    as `issued`;
//! 2. every open defect advances one status with probability 1/2;
//! 3. the team closes defects, at most `close_rate` of them, until the open
//!    count reaches the week's goal: the interpolated threshold scaled by
//!    `1 + noise·u` with `u` uniform in [-1, 1], rounded down.
//!
//! Rates are perturbed by the same noise and accumulated with a fractional
//! carry so their long-run mean is exact.

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::evaluate::{evaluate_week, EscalationEvent, EvaluateError};
use crate::improve::PortfolioObservation;
use crate::ingest::{
    builtin_metric_definitions, eval_metric, parse_event_log, Domain, EventLine, IngestError, ItemKind,
    MetricDefinition, Origin, DEFECT_OPEN_STATUSES, OPEN_DEFECTS,
};
use crate::schedule::ThresholdSchedule;
use crate::week::IsoWeek;

/// Terminal status of a simulated defect.
pub const CLOSED_STATUS: &str = "closed";

const DAY: i64 = 86_400;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("a portfolio needs at least one seed")]
    NoSeeds,
    #[error("schedule has no milestone `{0}`")]
    UnknownMilestone(String),
    #[error("milestone week {0} lies outside the simulated weeks")]
    MilestoneOutsideRun(IsoWeek),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub weeks: u32,
    pub schedule: ThresholdSchedule,
    /// Mean new defects per week.
    pub arrival_rate: f64,
    /// Mean closing capacity per week.
    pub close_rate: f64,
    /// Relative perturbation amplitude in [0, 1].
    pub noise: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::InvalidConfig(msg.to_string()));
        if self.weeks < 1 {
            return bad("weeks must be at least 1");
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return bad("arrival_rate must be a non-negative number");
        }
        if !(self.close_rate.is_finite() && self.close_rate >= 0.0) {
            return bad("close_rate must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn first_week(&self) -> IsoWeek {
        self.schedule.first_week()
    }

    pub fn last_week(&self) -> IsoWeek {
        self.first_week().offset(i64::from(self.weeks) - 1)
    }

    /// The open-defect metric, renamed to the schedule's metric.
    pub fn metric_definition(&self) -> MetricDefinition {
        let mut def = builtin_metric_definitions()
            .into_iter()
            .find(|d| d.name == OPEN_DEFECTS)
            .expect("builtin open-defect metric");
        def.name = self.schedule.metric_name().to_string();
        def.direction = self.schedule.direction();
        def
    }
}

struct Item {
    id: String,
    domain: Domain,
    stage: usize,
}

struct Draw {
    carry: f64,
}

impl Draw {
    fn next(&mut self, rate: f64, noise: f64, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        self.carry += (rate * (1.0 + noise * u)).max(0.0);
        let n = self.carry.floor();
        self.carry -= n;
        n as usize
    }
}

fn line(item: &Item, ts: chrono::DateTime<chrono::Utc>, status: &str) -> String {
    EventLine {
        item: item.id.clone(),
        kind: ItemKind::Defect,
        origin: Origin::Internal,
        domain: item.domain,
        planned_release: None,
        ts,
        status: status.to_string(),
    }
    .to_json()
}

/// Generates an `events.jsonl` log for one synthetic project.
pub fn simulate_events(cfg: &SimConfig) -> Result<String, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut arrivals = Draw { carry: 0.0 };
    let mut capacity = Draw { carry: 0.0 };
    let mut open: Vec<Item> = Vec::new();
    let mut next_id = 0u64;
    let mut out = String::new();
    let last_stage = DEFECT_OPEN_STATUSES.len() - 1;

    for i in 0..i64::from(cfg.weeks) {
        let week = cfg.first_week().offset(i);
        let monday = week.start();
        let threshold = cfg.schedule.interpolate(week).threshold.to_f64();
        let u: f64 = rng.gen_range(-1.0..=1.0);
        let goal = (threshold * (1.0 + cfg.noise * u)).floor().max(0.0) as usize;

        let mut new_items = arrivals.next(cfg.arrival_rate, cfg.noise, &mut rng);
        if i == 0 {
            new_items += goal;
        }
        for _ in 0..new_items {
            let item = Item {
                id: format!("SIM-{}-{next_id:05}", cfg.seed),
                domain: if rng.gen_bool(0.5) { Domain::Sw } else { Domain::Hw },
                stage: 0,
            };
            next_id += 1;
            let ts = monday + Duration::seconds(rng.gen_range(0..2 * DAY));
            out.push_str(&line(&item, ts, DEFECT_OPEN_STATUSES[0]));
            out.push('\n');
            open.push(item);
        }

        for item in open.iter_mut() {
            if item.stage < last_stage && rng.gen_bool(0.5) {
                item.stage += 1;
                let ts = monday + Duration::seconds(rng.gen_range(2 * DAY..4 * DAY));
                out.push_str(&line(item, ts, DEFECT_OPEN_STATUSES[item.stage]));
                out.push('\n');
            }
        }

        let cap = capacity.next(cfg.close_rate, cfg.noise, &mut rng);
        let to_close = cap.min(open.len().saturating_sub(goal));
        for _ in 0..to_close {
            let item = open.swap_remove(rng.gen_range(0..open.len()));
            let ts = monday + Duration::seconds(rng.gen_range(4 * DAY..6 * DAY));
            out.push_str(&line(&item, ts, CLOSED_STATUS));
            out.push('\n');
        }
    }
    Ok(out)
}

/// Simulates, ingests and evaluates every simulated week.
pub fn run_pipeline(cfg: &SimConfig) -> Result<Vec<EscalationEvent>, HarnessError> {
    let log = simulate_events(cfg)?;
    let records = parse_event_log(log.as_bytes())?;
    let def = cfg.metric_definition();
    cfg.first_week()
        .range_inclusive(cfg.last_week())
        .map(|week| {
            let snapshot = eval_metric(&records, &def, week, None)?;
            Ok(evaluate_week(&snapshot, &cfg.schedule)?)
        })
        .collect()
}

/// One observation per seed: the deviation at `milestone` of a project
/// simulated from `template` with that seed.
pub fn simulate_portfolio(
    seeds: &[u64],
    template: &SimConfig,
    milestone: &str,
) -> Result<Vec<PortfolioObservation>, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::NoSeeds);
    }
    let week = template
        .schedule
        .milestone(milestone)
        .ok_or_else(|| HarnessError::UnknownMilestone(milestone.to_string()))?
        .week;
    if week > template.last_week() {
        return Err(HarnessError::MilestoneOutsideRun(week));
    }
    let def = template.metric_definition();
    seeds
        .iter()
        .map(|&seed| {
            let cfg = SimConfig { seed, ..template.clone() };
            let records = parse_event_log(simulate_events(&cfg)?.as_bytes())?;
            let snapshot = eval_metric(&records, &def, week, None)?;
            let event = evaluate_week(&snapshot, &cfg.schedule)?;
            Ok(PortfolioObservation {
                project_id: format!("sim-{seed}"),
                metric_name: cfg.schedule.metric_name().to_string(),
                milestone_name: milestone.to_string(),
                pct: event.deviation.pct,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{DeviationPct, Level};
    use crate::improve::{improvement_check, Decision};
    use crate::schedule::tests::table4;
    use std::collections::HashSet;

    fn cfg(seed: u64, arrival: f64, close: f64, noise: f64) -> SimConfig {
        SimConfig { seed, weeks: 61, schedule: table4(), arrival_rate: arrival, close_rate: close, noise }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = simulate_events(&cfg(7, 12.0, 15.0, 0.3)).unwrap();
        let b = simulate_events(&cfg(7, 12.0, 15.0, 0.3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_events(&cfg(8, 12.0, 15.0, 0.3)).unwrap());
    }

    #[test]
    fn tuned_noiseless_run_stays_on_track() {
        let events = run_pipeline(&cfg(1, 5.0, 20.0, 0.0)).unwrap();
        assert_eq!(events.len(), 61);
        assert!(events.iter().all(|e| e.level.is_on_track()), "{:?}", events.iter().find(|e| !e.level.is_on_track()));
        // the open count rides the threshold line
        assert_eq!(events[0].deviation.actual, events[0].deviation.threshold);
    }

    #[test]
    fn overloaded_team_escalates_to_level2() {
        let events = run_pipeline(&cfg(1, 30.0, 5.0, 0.2)).unwrap();
        let last = events.last().unwrap();
        assert_eq!(last.level.value, Level::Level2);
        assert_eq!(last.deviation.pct, DeviationPct::Infinite);
    }

    #[test]
    fn statuses_are_legal_and_logs_parse() {
        let log = simulate_events(&cfg(3, 10.0, 12.0, 0.5)).unwrap();
        let records = parse_event_log(log.as_bytes()).unwrap();
        let legal: HashSet<&str> = DEFECT_OPEN_STATUSES.iter().copied().chain([CLOSED_STATUS]).collect();
        assert!(records.iter().flat_map(|r| &r.events).all(|e| legal.contains(e.status.as_str())));
        assert!(records.iter().all(|r| r.events[0].status == "issued"));
    }

    #[test]
    fn config_validation() {
        assert!(simulate_events(&SimConfig { weeks: 0, ..cfg(1, 1.0, 1.0, 0.0) }).is_err());
        assert!(simulate_events(&cfg(1, -1.0, 1.0, 0.0)).is_err());
        assert!(simulate_events(&cfg(1, 1.0, f64::NAN, 0.0)).is_err());
        assert!(simulate_events(&cfg(1, 1.0, 1.0, 1.5)).is_err());
    }

    #[test]
    fn portfolio_one_observation_per_seed() {
        let seeds: Vec<u64> = (1..=10).collect();
        let obs = simulate_portfolio(&seeds, &cfg(0, 5.0, 20.0, 0.0), "Release 3.0.0").unwrap();
        assert_eq!(obs.len(), 10);
        assert!(obs.iter().all(|o| !o.pct.is_adverse()));
        let bands = table4().milestone("Release 3.0.0").map(|m| table4().anchors()[m.index].bands).unwrap();
        let verdict = improvement_check(&obs, &bands).unwrap();
        assert_eq!(verdict.decision, Decision::KeepThreshold);
        assert_eq!(verdict.frac_within_l2, crate::fixed::Fixed::ONE);
    }

    #[test]
    fn portfolio_errors() {
        let template = cfg(0, 5.0, 20.0, 0.0);
        assert!(matches!(simulate_portfolio(&[], &template, "Release 3.0.0"), Err(HarnessError::NoSeeds)));
        assert!(matches!(simulate_portfolio(&[1], &template, "Release 9"), Err(HarnessError::UnknownMilestone(_))));
        let short = SimConfig { weeks: 10, ..template };
        assert!(matches!(simulate_portfolio(&[1], &short, "Release 4.0.0"), Err(HarnessError::MilestoneOutsideRun(_))));
    }
}

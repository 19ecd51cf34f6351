//! Deviation from the scheduled threshold, escalation levels and routing.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fixed::{Fixed, SCALE};
use crate::ingest::StatusSnapshot;
use crate::schedule::{DeviationBands, Direction, SchedulePoint, ThresholdSchedule};
use crate::week::IsoWeek;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvaluateError {
    #[error("snapshot metric `{snapshot}` does not match schedule metric `{schedule}`")]
    MetricMismatch { snapshot: String, schedule: String },
    #[error("an on-track week has no escalation to dispose of")]
    NothingToDispose,
}

/// Deviation in percent of the threshold; infinite when the threshold is zero
/// and the actual value misses it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviationPct {
    Finite(Fixed),
    Infinite,
}

impl DeviationPct {
    pub fn finite(self) -> Option<Fixed> {
        match self {
            DeviationPct::Finite(v) => Some(v),
            DeviationPct::Infinite => None,
        }
    }

    pub fn is_adverse(self) -> bool {
        match self {
            DeviationPct::Finite(v) => v > Fixed::ZERO,
            DeviationPct::Infinite => true,
        }
    }

    /// Within a band of width `limit` percent (favorable values always are).
    pub fn within(self, limit: Fixed) -> bool {
        match self {
            DeviationPct::Finite(v) => v <= limit,
            DeviationPct::Infinite => false,
        }
    }
}

impl PartialOrd for DeviationPct {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DeviationPct {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (DeviationPct::Finite(a), DeviationPct::Finite(b)) => a.cmp(b),
            (DeviationPct::Finite(_), DeviationPct::Infinite) => Ordering::Less,
            (DeviationPct::Infinite, DeviationPct::Finite(_)) => Ordering::Greater,
            (DeviationPct::Infinite, DeviationPct::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for DeviationPct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviationPct::Finite(v) => v.fmt(f),
            DeviationPct::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for DeviationPct {
    type Err = crate::fixed::ParseFixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("inf") {
            Ok(DeviationPct::Infinite)
        } else {
            s.parse().map(DeviationPct::Finite)
        }
    }
}

impl Serialize for DeviationPct {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DeviationPct {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deviation {
    pub metric_name: String,
    pub week: IsoWeek,
    pub actual: Fixed,
    pub threshold: Fixed,
    /// Rounded to four digits; classification uses the exact ratio.
    pub pct: DeviationPct,
    pub adverse: bool,
    pub direction: Direction,
}

impl Deviation {
    /// Signed distance from the goal, positive when adverse.
    fn excess(&self) -> Fixed {
        match self.direction {
            Direction::LowerIsBetter => self.actual - self.threshold,
            Direction::HigherIsBetter => self.threshold - self.actual,
        }
    }

    /// Exact test of `pct <= limit`.
    pub fn within(&self, limit: Fixed) -> bool {
        if self.threshold.is_zero() {
            return !self.adverse;
        }
        // excess / |threshold| * 100 <= limit, cross-multiplied in raw units
        let lhs = i128::from(self.excess().raw()) * 100 * i128::from(SCALE);
        let rhs = i128::from(limit.raw()) * i128::from(self.threshold.abs().raw());
        lhs <= rhs
    }
}

/// Deviation of `actual` from the threshold in effect at `point`.
pub fn deviation(actual: Fixed, point: &SchedulePoint, direction: Direction) -> Deviation {
    let threshold = point.threshold;
    let excess = match direction {
        Direction::LowerIsBetter => actual - threshold,
        Direction::HigherIsBetter => threshold - actual,
    };
    let pct = if threshold.is_zero() {
        if excess > Fixed::ZERO {
            DeviationPct::Infinite
        } else {
            DeviationPct::Finite(Fixed::ZERO)
        }
    } else {
        DeviationPct::Finite(excess.mul_div(Fixed::HUNDRED, threshold.abs()))
    };
    Deviation {
        metric_name: String::new(),
        week: point.week,
        actual,
        threshold,
        pct,
        adverse: excess > Fixed::ZERO,
        direction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "ontrack")]
    OnTrack,
    #[serde(rename = "l0")]
    Level0,
    #[serde(rename = "l1")]
    Level1,
    #[serde(rename = "l2")]
    Level2,
}

impl Level {
    pub fn tag(self) -> &'static str {
        match self {
            Level::OnTrack => "ontrack",
            Level::Level0 => "l0",
            Level::Level1 => "l1",
            Level::Level2 => "l2",
        }
    }
}

/// Ordered by severity; `out_of_range` sorts above plain level 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EscalationLevel {
    pub value: Level,
    pub out_of_range: bool,
}

impl EscalationLevel {
    pub const ON_TRACK: EscalationLevel = EscalationLevel { value: Level::OnTrack, out_of_range: false };

    pub fn new(value: Level) -> Self {
        EscalationLevel { value, out_of_range: false }
    }

    pub fn out_of_range() -> Self {
        EscalationLevel { value: Level::Level2, out_of_range: true }
    }

    pub fn is_on_track(self) -> bool {
        self.value == Level::OnTrack
    }
}

impl fmt::Display for EscalationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.value.tag())?;
        if self.out_of_range {
            f.write_str(" (out of range)")?;
        }
        Ok(())
    }
}

/// Level for a deviation; each band's upper edge belongs to that band.
pub fn classify(dev: &Deviation, bands: &DeviationBands) -> EscalationLevel {
    if !dev.adverse {
        EscalationLevel::ON_TRACK
    } else if dev.within(bands.level0) {
        EscalationLevel::new(Level::Level0)
    } else if dev.within(bands.level1) {
        EscalationLevel::new(Level::Level1)
    } else if dev.within(bands.level2) {
        EscalationLevel::new(Level::Level2)
    } else {
        EscalationLevel::out_of_range()
    }
}

pub const PROJECT_QUALITY_LEADER: &str = "Project Quality Leader";
pub const PROJECT_LEADER: &str = "Project Leader";
pub const QUALITY_DEPARTMENT_LEADER: &str = "Quality Department Leader";
pub const HIGHER_LEVEL_MANAGEMENT: &str = "Higher Level Management";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoleRoute {
    pub from_role: String,
    pub to_role: String,
}

impl fmt::Display for RoleRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} → {}", self.from_role, self.to_role)
    }
}

pub fn route(level: EscalationLevel) -> Option<RoleRoute> {
    let (from, to) = match level.value {
        Level::OnTrack => return None,
        Level::Level0 => (PROJECT_QUALITY_LEADER, PROJECT_LEADER),
        Level::Level1 => (PROJECT_QUALITY_LEADER, QUALITY_DEPARTMENT_LEADER),
        Level::Level2 => (QUALITY_DEPARTMENT_LEADER, HIGHER_LEVEL_MANAGEMENT),
    };
    Some(RoleRoute { from_role: from.to_string(), to_role: to.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Open,
    RootCauseRecorded,
    /// Milestones or thresholds were re-baselined.
    Replanned,
    Resolved,
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disposition::Open => "open",
            Disposition::RootCauseRecorded => "root_cause_recorded",
            Disposition::Replanned => "replanned",
            Disposition::Resolved => "resolved",
        })
    }
}

impl FromStr for Disposition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown disposition `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscalationEvent {
    pub deviation: Deviation,
    pub level: EscalationLevel,
    pub route: Option<RoleRoute>,
    /// `None` for on-track weeks.
    pub disposition: Option<Disposition>,
    pub note: String,
}

/// Interpolates the schedule at the snapshot's week and classifies its total.
pub fn evaluate_week(
    snapshot: &StatusSnapshot,
    schedule: &ThresholdSchedule,
) -> Result<EscalationEvent, EvaluateError> {
    if snapshot.metric_name != schedule.metric_name() {
        return Err(EvaluateError::MetricMismatch {
            snapshot: snapshot.metric_name.clone(),
            schedule: schedule.metric_name().to_string(),
        });
    }
    let point = schedule.interpolate(snapshot.week);
    let mut dev = deviation(Fixed::from(snapshot.total), &point, schedule.direction());
    dev.metric_name = snapshot.metric_name.clone();
    let level = classify(&dev, &point.bands);
    Ok(EscalationEvent {
        deviation: dev,
        level,
        route: route(level),
        disposition: (!level.is_on_track()).then_some(Disposition::Open),
        note: String::new(),
    })
}

fn append_note(existing: &str, note: &str) -> String {
    match (existing.is_empty(), note.is_empty()) {
        (_, true) => existing.to_string(),
        (true, false) => note.to_string(),
        (false, false) => format!("{existing}; {note}"),
    }
}

pub fn record_disposition(
    event: &EscalationEvent,
    disposition: Disposition,
    note: &str,
) -> Result<EscalationEvent, EvaluateError> {
    if event.level.is_on_track() {
        return Err(EvaluateError::NothingToDispose);
    }
    Ok(EscalationEvent { disposition: Some(disposition), note: append_note(&event.note, note), ..event.clone() })
}

/// One line of `escalations.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscalationRecord {
    pub metric: String,
    pub week: IsoWeek,
    pub actual: Fixed,
    pub threshold: Fixed,
    pub pct: DeviationPct,
    pub level: Level,
    pub out_of_range: bool,
    pub from_role: Option<String>,
    pub to_role: Option<String>,
    pub disposition: Disposition,
    pub note: String,
}

impl EscalationRecord {
    /// Fails for on-track events, which are never recorded.
    pub fn from_event(event: &EscalationEvent) -> Result<Self, EvaluateError> {
        let disposition = event.disposition.ok_or(EvaluateError::NothingToDispose)?;
        Ok(EscalationRecord {
            metric: event.deviation.metric_name.clone(),
            week: event.deviation.week,
            actual: event.deviation.actual,
            threshold: event.deviation.threshold,
            pct: event.deviation.pct,
            level: event.level.value,
            out_of_range: event.level.out_of_range,
            from_role: event.route.as_ref().map(|r| r.from_role.clone()),
            to_role: event.route.as_ref().map(|r| r.to_role.clone()),
            disposition,
            note: event.note.clone(),
        })
    }

    pub fn escalation_level(&self) -> EscalationLevel {
        EscalationLevel { value: self.level, out_of_range: self.out_of_range }
    }

    pub fn route(&self) -> Option<RoleRoute> {
        match (&self.from_role, &self.to_role) {
            (Some(from), Some(to)) => Some(RoleRoute { from_role: from.clone(), to_role: to.clone() }),
            _ => None,
        }
    }

    pub fn with_disposition(&self, disposition: Disposition, note: &str) -> Self {
        EscalationRecord { disposition, note: append_note(&self.note, note), ..self.clone() }
    }
}

//! Threshold schedules anchored at milestones, with escalation bands that
//! decay towards zero at the final milestone.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::Fixed;
use crate::week::IsoWeek;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LowerIsBetter => "lower_is_better",
            Direction::HigherIsBetter => "higher_is_better",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("a schedule needs at least 2 milestones, got {0}")]
    TooFewMilestones(usize),
    #[error("milestone weeks must strictly increase: `{name}` ({week}) does not follow its predecessor")]
    NonIncreasingWeeks { name: String, week: IsoWeek },
    #[error("duplicate milestone name `{0}`")]
    DuplicateMilestone(String),
    #[error("invalid deviation bands: {0}")]
    InvalidBands(String),
    #[error("invalid schedule for `{metric}`: {}", join_violations(.violations))]
    Invalid { metric: String, violations: Vec<Violation> },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Escalation band widths, in percent of the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeviationBands {
    pub level0: Fixed,
    pub level1: Fixed,
    pub level2: Fixed,
}

impl DeviationBands {
    pub const ZERO: DeviationBands = DeviationBands { level0: Fixed::ZERO, level1: Fixed::ZERO, level2: Fixed::ZERO };

    pub fn new(level0: Fixed, level1: Fixed, level2: Fixed) -> Result<Self, ScheduleError> {
        let bands = DeviationBands { level0, level1, level2 };
        if bands.is_ordered() {
            Ok(bands)
        } else {
            Err(ScheduleError::InvalidBands(format!("expected 0 <= l0 <= l1 <= l2, got {level0}/{level1}/{level2}")))
        }
    }

    pub fn from_ints(level0: i64, level1: i64, level2: i64) -> Result<Self, ScheduleError> {
        Self::new(level0.into(), level1.into(), level2.into())
    }

    pub fn is_ordered(&self) -> bool {
        Fixed::ZERO <= self.level0 && self.level0 <= self.level1 && self.level1 <= self.level2
    }

    pub fn is_zero(&self) -> bool {
        self.level0.is_zero() && self.level1.is_zero() && self.level2.is_zero()
    }

    pub fn as_array(&self) -> [Fixed; 3] {
        [self.level0, self.level1, self.level2]
    }

    fn map(&self, f: impl Fn(Fixed) -> Fixed) -> Self {
        DeviationBands { level0: f(self.level0), level1: f(self.level1), level2: f(self.level2) }
    }

    fn lerp(&self, other: &Self, step: i64, steps: i64) -> Self {
        DeviationBands {
            level0: self.level0.lerp(other.level0, step, steps),
            level1: self.level1.lerp(other.level1, step, steps),
            level2: self.level2.lerp(other.level2, step, steps),
        }
    }

    fn dominates(&self, other: &Self) -> bool {
        self.level0 >= other.level0 && self.level1 >= other.level1 && self.level2 >= other.level2
    }
}

impl fmt::Display for DeviationBands {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.level0, self.level1, self.level2)
    }
}

/// A checkpoint at which project quality is assessed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Milestone {
    pub name: String,
    pub week: IsoWeek,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor {
    pub milestone: Milestone,
    pub threshold: Fixed,
    pub bands: DeviationBands,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdSchedule {
    metric_name: String,
    direction: Direction,
    anchors: Vec<Anchor>,
}

/// Threshold and absolute escalation bounds in effect during one week.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulePoint {
    pub week: IsoWeek,
    pub threshold: Fixed,
    pub bands: DeviationBands,
    pub bound0: Fixed,
    pub bound1: Fixed,
    pub bound2: Fixed,
}

impl SchedulePoint {
    pub fn bounds(&self) -> [Fixed; 3] {
        [self.bound0, self.bound1, self.bound2]
    }
}

/// One broken schedule invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewAnchors(usize),
    WeeksNotIncreasing { index: usize },
    DuplicateName { name: String },
    IndexMismatch { index: usize },
    BandsUnordered { index: usize },
    BandsNotNonIncreasing { index: usize },
    FinalBandsNonzero,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewAnchors(n) => write!(f, "fewer than 2 anchors ({n})"),
            Violation::WeeksNotIncreasing { index } => write!(f, "weeks not strictly increasing at anchor {index}"),
            Violation::DuplicateName { name } => write!(f, "duplicate milestone name `{name}`"),
            Violation::IndexMismatch { index } => write!(f, "milestone index mismatch at anchor {index}"),
            Violation::BandsUnordered { index } => write!(f, "bands unordered at anchor {index}"),
            Violation::BandsNotNonIncreasing { index } => write!(f, "bands not non-increasing at anchor {index}"),
            Violation::FinalBandsNonzero => f.write_str("final bands nonzero"),
        }
    }
}

/// Absolute escalation bound for a band width given in percent.
pub fn band_bound(threshold: Fixed, pct: Fixed, direction: Direction) -> Fixed {
    let factor = match direction {
        Direction::LowerIsBetter => Fixed::HUNDRED + pct,
        Direction::HigherIsBetter => Fixed::HUNDRED - pct,
    };
    threshold.mul_div(factor, Fixed::HUNDRED)
}

/// Builds a schedule whose thresholds fall linearly from `start_threshold` to
/// `end_threshold` across the milestones while the bands decay linearly from
/// `base_bands` to zero: anchor `k` of `M` gets `base × (1 − k/(M−1))`.
pub fn build_schedule<S: AsRef<str>>(
    metric_name: &str,
    direction: Direction,
    milestones: &[(S, IsoWeek)],
    start_threshold: Fixed,
    end_threshold: Fixed,
    base_bands: DeviationBands,
) -> Result<ThresholdSchedule, ScheduleError> {
    if milestones.len() < 2 {
        return Err(ScheduleError::TooFewMilestones(milestones.len()));
    }
    if !base_bands.is_ordered() {
        return Err(ScheduleError::InvalidBands(base_bands.to_string()));
    }
    let mut seen = HashSet::new();
    for (i, (name, week)) in milestones.iter().enumerate() {
        if !seen.insert(name.as_ref()) {
            return Err(ScheduleError::DuplicateMilestone(name.as_ref().to_string()));
        }
        if i > 0 && *week <= milestones[i - 1].1 {
            return Err(ScheduleError::NonIncreasingWeeks { name: name.as_ref().to_string(), week: *week });
        }
    }

    let last = (milestones.len() - 1) as i64;
    let anchors = milestones
        .iter()
        .enumerate()
        .map(|(k, (name, week))| {
            let remaining = Fixed::from_int(last - k as i64);
            Anchor {
                milestone: Milestone { name: name.as_ref().to_string(), week: *week, index: k },
                threshold: start_threshold.lerp(end_threshold, k as i64, last),
                bands: base_bands.map(|pct| pct.mul_div(remaining, Fixed::from_int(last))),
            }
        })
        .collect();
    ThresholdSchedule::from_anchors(metric_name, direction, anchors)
}

impl ThresholdSchedule {
    /// Accepts hand-authored anchors if they pass [`validate_schedule`].
    pub fn from_anchors(
        metric_name: impl Into<String>,
        direction: Direction,
        anchors: Vec<Anchor>,
    ) -> Result<Self, ScheduleError> {
        let schedule = ThresholdSchedule { metric_name: metric_name.into(), direction, anchors };
        let violations = validate_schedule(&schedule);
        if violations.is_empty() {
            Ok(schedule)
        } else {
            Err(ScheduleError::Invalid { metric: schedule.metric_name, violations })
        }
    }

    pub fn metric_name(&self) -> &str {
        &self.metric_name
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn milestones(&self) -> impl Iterator<Item = &Milestone> {
        self.anchors.iter().map(|a| &a.milestone)
    }

    pub fn milestone(&self, name: &str) -> Option<&Milestone> {
        self.milestones().find(|m| m.name == name)
    }

    pub fn first_week(&self) -> IsoWeek {
        self.anchors[0].milestone.week
    }

    pub fn last_week(&self) -> IsoWeek {
        self.anchors[self.anchors.len() - 1].milestone.week
    }

    /// Same schedule under a different metric name.
    pub fn renamed(&self, metric_name: impl Into<String>) -> Self {
        ThresholdSchedule { metric_name: metric_name.into(), ..self.clone() }
    }

    fn point_at_anchor(&self, anchor: &Anchor, week: IsoWeek) -> SchedulePoint {
        self.point(week, anchor.threshold, anchor.bands)
    }

    fn point(&self, week: IsoWeek, threshold: Fixed, bands: DeviationBands) -> SchedulePoint {
        SchedulePoint {
            week,
            threshold,
            bands,
            bound0: band_bound(threshold, bands.level0, self.direction),
            bound1: band_bound(threshold, bands.level1, self.direction),
            bound2: band_bound(threshold, bands.level2, self.direction),
        }
    }

    /// Threshold and bounds for `week`, piecewise-linear in week index between
    /// the enclosing anchors and clamped outside the milestone range.
    pub fn interpolate(&self, week: IsoWeek) -> SchedulePoint {
        let first = &self.anchors[0];
        let last = &self.anchors[self.anchors.len() - 1];
        if week <= first.milestone.week {
            return self.point_at_anchor(first, week);
        }
        if week >= last.milestone.week {
            return self.point_at_anchor(last, week);
        }
        // first.week < week < last.week, so a segment exists
        let upper = self.anchors.partition_point(|a| a.milestone.week <= week);
        let (a, b) = (&self.anchors[upper - 1], &self.anchors[upper]);
        if a.milestone.week == week {
            return self.point_at_anchor(a, week);
        }
        let step = a.milestone.week.weeks_until(week);
        let steps = a.milestone.week.weeks_until(b.milestone.week);
        self.point(week, a.threshold.lerp(b.threshold, step, steps), a.bands.lerp(&b.bands, step, steps))
    }
}

/// Lists every broken schedule invariant; empty means valid.
pub fn validate_schedule(schedule: &ThresholdSchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let anchors = &schedule.anchors;
    if anchors.len() < 2 {
        out.push(Violation::TooFewAnchors(anchors.len()));
    }
    let mut names = HashSet::new();
    for (i, anchor) in anchors.iter().enumerate() {
        if anchor.milestone.index != i {
            out.push(Violation::IndexMismatch { index: i });
        }
        if !names.insert(anchor.milestone.name.as_str()) {
            out.push(Violation::DuplicateName { name: anchor.milestone.name.clone() });
        }
        if !anchor.bands.is_ordered() {
            out.push(Violation::BandsUnordered { index: i });
        }
        if i > 0 {
            let prev = &anchors[i - 1];
            if anchor.milestone.week <= prev.milestone.week {
                out.push(Violation::WeeksNotIncreasing { index: i });
            }
            if !prev.bands.dominates(&anchor.bands) {
                out.push(Violation::BandsNotNonIncreasing { index: i });
            }
        }
    }
    if let Some(last) = anchors.last() {
        if !last.bands.is_zero() {
            out.push(Violation::FinalBandsNonzero);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// schedule.json

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnchorDoc {
    name: String,
    iso_week: IsoWeek,
    threshold: Fixed,
    bands: [Fixed; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleDoc {
    metric: String,
    direction: Direction,
    anchors: Vec<AnchorDoc>,
}

impl From<&ThresholdSchedule> for ScheduleDoc {
    fn from(s: &ThresholdSchedule) -> Self {
        ScheduleDoc {
            metric: s.metric_name.clone(),
            direction: s.direction,
            anchors: s
                .anchors
                .iter()
                .map(|a| AnchorDoc {
                    name: a.milestone.name.clone(),
                    iso_week: a.milestone.week,
                    threshold: a.threshold,
                    bands: a.bands.as_array(),
                })
                .collect(),
        }
    }
}

impl TryFrom<ScheduleDoc> for ThresholdSchedule {
    type Error = ScheduleError;

    fn try_from(doc: ScheduleDoc) -> Result<Self, Self::Error> {
        let anchors = doc
            .anchors
            .into_iter()
            .enumerate()
            .map(|(index, a)| Anchor {
                milestone: Milestone { name: a.name, week: a.iso_week, index },
                threshold: a.threshold,
                bands: DeviationBands { level0: a.bands[0], level1: a.bands[1], level2: a.bands[2] },
            })
            .collect();
        ThresholdSchedule::from_anchors(doc.metric, doc.direction, anchors)
    }
}

impl Serialize for ThresholdSchedule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ScheduleDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ThresholdSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = ScheduleDoc::deserialize(deserializer)?;
        ThresholdSchedule::try_from(doc).map_err(serde::de::Error::custom)
    }
}

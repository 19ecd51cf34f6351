use std::collections::BTreeMap;

use serde::Serialize;

use super::ReportError;
use crate::fixed::Fixed;
use crate::ingest::StatusSnapshot;
use crate::schedule::{Direction, ThresholdSchedule};
use crate::week::IsoWeek;

/// Every n-th week carries an x-axis label.
pub const LABEL_EVERY: usize = 6;

pub const THRESHOLD_COLOR: &str = "green";
pub const LEVEL0_COLOR: &str = "yellow";
pub const LEVEL1_COLOR: &str = "orange";
pub const LEVEL2_COLOR: &str = "red";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Overlays {
    pub threshold: Vec<Fixed>,
    pub l0: Vec<Fixed>,
    pub l1: Vec<Fixed>,
    pub l2: Vec<Fixed>,
}

impl Overlays {
    /// `(name, color, values)` in drawing order.
    pub fn lines(&self) -> [(&'static str, &'static str, &[Fixed]); 4] {
        [
            ("threshold", THRESHOLD_COLOR, &self.threshold),
            ("l0", LEVEL0_COLOR, &self.l0),
            ("l1", LEVEL1_COLOR, &self.l1),
            ("l2", LEVEL2_COLOR, &self.l2),
        ]
    }
}

/// Weekly stacked open-item counts with threshold and escalation overlays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChartSeries {
    pub metric: String,
    #[serde(skip)]
    pub direction: Direction,
    pub weeks: Vec<IsoWeek>,
    /// Count per status per week, aligned with `weeks`.
    pub stacks: BTreeMap<String, Vec<u64>>,
    #[serde(skip)]
    pub totals: Vec<u64>,
    pub overlays: Overlays,
    pub x_labels: Vec<IsoWeek>,
}

impl ChartSeries {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chart serializes")
    }
}

pub fn chart_data(series: &[StatusSnapshot], schedule: &ThresholdSchedule) -> Result<ChartSeries, ReportError> {
    if series.is_empty() {
        return Err(ReportError::EmptySeries);
    }
    if let Some(s) = series.iter().find(|s| s.metric_name != schedule.metric_name()) {
        return Err(ReportError::MetricMismatch {
            series: s.metric_name.clone(),
            schedule: schedule.metric_name().into(),
        });
    }
    if let Some(pair) = series.windows(2).find(|p| p[0].week >= p[1].week) {
        return Err(ReportError::Unsorted(pair[1].week));
    }

    let weeks: Vec<IsoWeek> = series.iter().map(|s| s.week).collect();
    let mut stacks: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for (i, snap) in series.iter().enumerate() {
        for (status, &count) in &snap.per_status {
            stacks.entry(status.clone()).or_insert_with(|| vec![0; series.len()])[i] = count;
        }
    }

    let mut overlays = Overlays { threshold: Vec::new(), l0: Vec::new(), l1: Vec::new(), l2: Vec::new() };
    for &week in &weeks {
        let p = schedule.interpolate(week);
        overlays.threshold.push(p.threshold);
        overlays.l0.push(p.bound0);
        overlays.l1.push(p.bound1);
        overlays.l2.push(p.bound2);
    }

    Ok(ChartSeries {
        metric: schedule.metric_name().to_string(),
        direction: schedule.direction(),
        x_labels: weeks.iter().copied().step_by(LABEL_EVERY).collect(),
        weeks,
        stacks,
        totals: series.iter().map(|s| s.total).collect(),
        overlays,
    })
}

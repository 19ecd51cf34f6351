//! Charts, weekly status reports and the process compliance mapping.

pub mod chart;
pub mod compliance;
pub mod svg;

use std::fmt::Write;

use thiserror::Error;

use crate::evaluate::{evaluate_week, EvaluateError};
use crate::store::{ProjectStore, StoreError};
use crate::week::IsoWeek;

pub use chart::{chart_data, ChartSeries, Overlays};
pub use compliance::{compliance_report, compliance_table, ComplianceElement, ComplianceReport, Stereotype};
pub use svg::render_svg;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot chart an empty series")]
    EmptySeries,
    #[error("series metric `{series}` does not match schedule metric `{schedule}`")]
    MetricMismatch { series: String, schedule: String },
    #[error("series is not strictly week-sorted at {0}")]
    Unsorted(IsoWeek),
    #[error("no snapshots recorded for {0}")]
    NoData(IsoWeek),
    #[error("unknown process element `{0}`")]
    UnknownElement(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
}

/// Plain-text status of every metric with a snapshot in `week`, followed by
/// the escalations still open in the store.
pub fn weekly_report(store: &ProjectStore, week: IsoWeek) -> Result<String, ReportError> {
    let snapshots = store.snapshots_in_week(week)?;
    if snapshots.is_empty() {
        return Err(ReportError::NoData(week));
    }
    let schedules = store.schedules()?;

    let mut out = String::new();
    let _ = writeln!(out, "quality report: project {} week {week}", store.project_id());
    for snap in &snapshots {
        let Some(schedule) = schedules.iter().find(|s| s.metric_name() == snap.metric_name) else {
            let _ = writeln!(out, "metric {:?}: actual {} (no schedule)", snap.metric_name, snap.total);
            continue;
        };
        let event = evaluate_week(snap, schedule)?;
        let _ = writeln!(out, "{}", summary_line(&event));
        if let Some(route) = &event.route {
            let _ = writeln!(out, "  escalate: {route}");
        }
    }

    let open = store.list_open_escalations()?;
    let _ = writeln!(out, "open escalations: {}", open.len());
    for rec in &open {
        let route = rec.route().map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "  {:?} {} level {} deviation {}% {route}",
            rec.metric,
            rec.week,
            rec.escalation_level(),
            rec.pct
        );
    }
    Ok(out)
}

/// One-line verdict: actual, threshold, deviation and level.
pub fn summary_line(event: &crate::evaluate::EscalationEvent) -> String {
    let d = &event.deviation;
    format!(
        "metric {:?}: actual {} threshold {} deviation {}% level {}",
        d.metric_name, d.actual, d.threshold, d.pct, event.level
    )
}

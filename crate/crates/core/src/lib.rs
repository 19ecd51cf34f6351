//! Milestone-anchored software quality gates.
//!
//! Metrics are counted from issue-tracker event logs week by week, compared
//! against threshold schedules whose escalation bands narrow towards the end
//! of a project, and classified into escalation levels routed to roles. The
//! crate also carries portfolio-level threshold review, module goal
//! breakdown, chart and compliance reporting, a file-based project store and
//! a deterministic project simulator.

pub mod breakdown;
pub mod cli;
pub mod evaluate;
pub mod fixed;
pub mod harness;
pub mod improve;
pub mod ingest;
pub mod report;
pub mod schedule;
pub mod store;
pub mod week;

pub use evaluate::{
    classify, deviation, evaluate_week, record_disposition, route, Deviation, DeviationPct, Disposition,
    EscalationEvent, EscalationLevel, EscalationRecord, Level, RoleRoute,
};
pub use fixed::Fixed;
pub use ingest::{
    eval_metric, parse_event_log, status_at, weekly_series, MetricDefinition, StatusSnapshot, TrackerRecord,
};
pub use schedule::{
    band_bound, build_schedule, validate_schedule, DeviationBands, Direction, SchedulePoint, ThresholdSchedule,
};
pub use store::{init_project, ProjectStore};
pub use week::IsoWeek;

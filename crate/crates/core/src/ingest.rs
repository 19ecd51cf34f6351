//! Tracker event logs, status-filtered count metrics and weekly snapshots.
//!
//! An event log is JSON lines, one status transition per line. Records are
//! replayed to find each item's status at the last instant of an ISO week,
//! and the items whose status is one of a metric's open statuses are counted.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Read};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{Direction, Milestone, ThresholdSchedule};
use crate::week::IsoWeek;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate event ({item}, {ts}, {status})")]
    DuplicateEvent { line: usize, item: String, ts: DateTime<Utc>, status: String },
    #[error("line {line}: timestamp {ts} of `{item}` precedes its previous event")]
    DecreasingTimestamp { line: usize, item: String, ts: DateTime<Utc> },
    #[error("line {line}: attributes of `{item}` differ from its earlier lines")]
    AttributeMismatch { line: usize, item: String },
    #[error("metric `{0}` filters by release but no current release was supplied")]
    MissingRelease(String),
    #[error("inverted week range {from}..{to}")]
    InvertedRange { from: IsoWeek, to: IsoWeek },
    #[error("metric `{0}` has no open statuses")]
    NoOpenStatuses(String),
    #[error("snapshot CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    #[serde(rename = "defect")]
    Defect,
    #[serde(rename = "cr")]
    ChangeRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Internal,
    Customer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Hw,
    Sw,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusEvent {
    pub ts: DateTime<Utc>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackerRecord {
    pub item_id: String,
    pub kind: ItemKind,
    pub origin: Origin,
    pub domain: Domain,
    pub planned_release: Option<String>,
    pub events: Vec<StatusEvent>,
}

/// One line of `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventLine {
    pub item: String,
    pub kind: ItemKind,
    pub origin: Origin,
    pub domain: Domain,
    pub planned_release: Option<String>,
    pub ts: DateTime<Utc>,
    pub status: String,
}

impl EventLine {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event line serializes")
    }
}

impl TrackerRecord {
    fn same_attributes(&self, line: &EventLine) -> bool {
        self.kind == line.kind
            && self.origin == line.origin
            && self.domain == line.domain
            && self.planned_release == line.planned_release
    }

    /// Event lines for this record, in event order.
    pub fn to_lines(&self) -> impl Iterator<Item = EventLine> + '_ {
        self.events.iter().map(|e| EventLine {
            item: self.item_id.clone(),
            kind: self.kind,
            origin: self.origin,
            domain: self.domain,
            planned_release: self.planned_release.clone(),
            ts: e.ts,
            status: e.status.clone(),
        })
    }
}

/// Parses a JSON-lines event log into records, in order of first appearance.
/// Blank lines are skipped.
pub fn parse_event_log<R: BufRead>(input: R) -> Result<Vec<TrackerRecord>, IngestError> {
    let mut records: Vec<TrackerRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(String, DateTime<Utc>, String)> = HashSet::new();

    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let ev: EventLine = serde_json::from_str(&text)
            .map_err(|e| IngestError::Malformed { line: line_no, message: e.to_string() })?;
        if ev.item.is_empty() || ev.status.is_empty() {
            return Err(IngestError::Malformed { line: line_no, message: "empty item or status".into() });
        }
        if !seen.insert((ev.item.clone(), ev.ts, ev.status.clone())) {
            return Err(IngestError::DuplicateEvent { line: line_no, item: ev.item, ts: ev.ts, status: ev.status });
        }
        match by_id.get(&ev.item) {
            Some(&idx) => {
                let record = &mut records[idx];
                if !record.same_attributes(&ev) {
                    return Err(IngestError::AttributeMismatch { line: line_no, item: ev.item });
                }
                if record.events.last().is_some_and(|last| ev.ts < last.ts) {
                    return Err(IngestError::DecreasingTimestamp { line: line_no, item: ev.item, ts: ev.ts });
                }
                record.events.push(StatusEvent { ts: ev.ts, status: ev.status });
            }
            None => {
                by_id.insert(ev.item.clone(), records.len());
                records.push(TrackerRecord {
                    item_id: ev.item,
                    kind: ev.kind,
                    origin: ev.origin,
                    domain: ev.domain,
                    planned_release: ev.planned_release,
                    events: vec![StatusEvent { ts: ev.ts, status: ev.status }],
                });
            }
        }
    }
    Ok(records)
}

/// Status of the latest event at or before `instant`.
pub fn status_at(record: &TrackerRecord, instant: DateTime<Utc>) -> Option<&str> {
    let upto = record.events.partition_point(|e| e.ts <= instant);
    upto.checked_sub(1).map(|i| record.events[i].status.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginFilter {
    Internal,
    Customer,
    Any,
}

impl OriginFilter {
    pub fn matches(self, origin: Origin) -> bool {
        match self {
            OriginFilter::Any => true,
            OriginFilter::Internal => origin == Origin::Internal,
            OriginFilter::Customer => origin == Origin::Customer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseFilter {
    None,
    CurrentOrPrevious,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricDefinition {
    pub name: String,
    pub kind: ItemKind,
    pub origin: OriginFilter,
    pub open_statuses: BTreeSet<String>,
    pub release_filter: ReleaseFilter,
    pub direction: Direction,
    pub process_area: String,
}

impl MetricDefinition {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.open_statuses.is_empty() {
            return Err(IngestError::NoOpenStatuses(self.name.clone()));
        }
        Ok(())
    }

    fn selects(&self, record: &TrackerRecord, release: Option<&ReleaseWindow>) -> bool {
        if record.kind != self.kind || !self.origin.matches(record.origin) {
            return false;
        }
        match (self.release_filter, release) {
            (ReleaseFilter::None, _) => true,
            (ReleaseFilter::CurrentOrPrevious, Some(window)) => {
                record.planned_release.as_deref().is_some_and(|r| window.contains(r))
            }
            (ReleaseFilter::CurrentOrPrevious, None) => false,
        }
    }
}

/// The release a week is planned towards, plus the one before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseWindow {
    pub current: String,
    pub previous: Option<String>,
}

impl ReleaseWindow {
    pub fn new(current: impl Into<String>, previous: Option<String>) -> Self {
        ReleaseWindow { current: current.into(), previous }
    }

    pub fn contains(&self, release: &str) -> bool {
        self.current == release || self.previous.as_deref() == Some(release)
    }
}

/// Ordered release milestones, used to derive a [`ReleaseWindow`] per week.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseCalendar {
    milestones: Vec<Milestone>,
}

impl ReleaseCalendar {
    pub fn new(milestones: Vec<Milestone>) -> Self {
        ReleaseCalendar { milestones }
    }

    pub fn from_schedule(schedule: &ThresholdSchedule) -> Self {
        Self::new(schedule.milestones().cloned().collect())
    }

    /// The current release is the first milestone due on or after `week`
    /// (the last one once all have passed); previous is the one before it.
    pub fn window_at(&self, week: IsoWeek) -> Option<ReleaseWindow> {
        if self.milestones.is_empty() {
            return None;
        }
        let idx = self.milestones.partition_point(|m| m.week < week).min(self.milestones.len() - 1);
        Some(ReleaseWindow {
            current: self.milestones[idx].name.clone(),
            previous: idx.checked_sub(1).map(|p| self.milestones[p].name.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SnapshotDoc")]
pub struct StatusSnapshot {
    #[serde(rename = "metric")]
    pub metric_name: String,
    pub week: IsoWeek,
    pub per_status: BTreeMap<String, u64>,
    pub total: u64,
}

#[derive(Deserialize)]
struct SnapshotDoc {
    metric: String,
    week: IsoWeek,
    per_status: BTreeMap<String, u64>,
    total: u64,
}

impl TryFrom<SnapshotDoc> for StatusSnapshot {
    type Error = String;

    fn try_from(doc: SnapshotDoc) -> Result<Self, Self::Error> {
        let snap = StatusSnapshot::new(doc.metric, doc.week, doc.per_status);
        if snap.total != doc.total {
            return Err(format!("total {} does not equal the per-status sum {}", doc.total, snap.total));
        }
        Ok(snap)
    }
}

impl StatusSnapshot {
    pub fn new(metric_name: impl Into<String>, week: IsoWeek, per_status: BTreeMap<String, u64>) -> Self {
        let total = per_status.values().sum();
        StatusSnapshot { metric_name: metric_name.into(), week, per_status, total }
    }

    pub fn empty(metric_name: impl Into<String>, week: IsoWeek) -> Self {
        Self::new(metric_name, week, BTreeMap::new())
    }
}

/// Counts the records selected by `def` whose status at the end of `week` is
/// one of its open statuses.
pub fn eval_metric(
    records: &[TrackerRecord],
    def: &MetricDefinition,
    week: IsoWeek,
    release: Option<&ReleaseWindow>,
) -> Result<StatusSnapshot, IngestError> {
    def.validate()?;
    if def.release_filter == ReleaseFilter::CurrentOrPrevious && release.is_none() {
        return Err(IngestError::MissingRelease(def.name.clone()));
    }
    let end = week.end_instant();
    let mut per_status: BTreeMap<String, u64> = BTreeMap::new();
    for record in records.iter().filter(|r| def.selects(r, release)) {
        if let Some(status) = status_at(record, end).filter(|s| def.open_statuses.contains(*s)) {
            *per_status.entry(status.to_string()).or_default() += 1;
        }
    }
    Ok(StatusSnapshot::new(def.name.clone(), week, per_status))
}

/// One snapshot per week of `from..=to`. A release calendar is required for
/// release-filtered metrics.
pub fn weekly_series(
    records: &[TrackerRecord],
    def: &MetricDefinition,
    from: IsoWeek,
    to: IsoWeek,
    calendar: Option<&ReleaseCalendar>,
) -> Result<Vec<StatusSnapshot>, IngestError> {
    if to < from {
        return Err(IngestError::InvertedRange { from, to });
    }
    from.range_inclusive(to)
        .map(|week| {
            let window = calendar.and_then(|c| c.window_at(week));
            eval_metric(records, def, week, window.as_ref())
        })
        .collect()
}

/// Statuses in which a defect counts as open.
pub const DEFECT_OPEN_STATUSES: [&str; 8] = [
    "issued",
    "analyzing",
    "getting analysis",
    "assigned",
    "implemented",
    "verifying",
    "getting info",
    "internally closed",
];

pub const CCB_EXIT_STATUS: &str = "exit CCB";

pub const OPEN_DEFECTS: &str = "Open defects (excluding customer)";
pub const OPEN_CUSTOMER_DEFECTS: &str = "Open customer defects";
pub const OPEN_CHANGE_REQUESTS: &str = "Open change requests (excluding customer)";
pub const OPEN_CUSTOMER_CHANGE_REQUESTS: &str = "Open customer change requests";

/// The organization-level open-item metrics for problem resolution (SUP.9)
/// and change request management (SUP.10).
pub fn builtin_metric_definitions() -> Vec<MetricDefinition> {
    let defect: BTreeSet<String> = DEFECT_OPEN_STATUSES.iter().map(|s| s.to_string()).collect();
    let mut change = defect.clone();
    change.insert(CCB_EXIT_STATUS.to_string());

    let def = |name: &str, kind, origin, statuses: &BTreeSet<String>, release_filter, area: &str| MetricDefinition {
        name: name.to_string(),
        kind,
        origin,
        open_statuses: statuses.clone(),
        release_filter,
        direction: Direction::LowerIsBetter,
        process_area: area.to_string(),
    };
    vec![
        def(OPEN_DEFECTS, ItemKind::Defect, OriginFilter::Internal, &defect, ReleaseFilter::None, "SUP.9"),
        def(OPEN_CUSTOMER_DEFECTS, ItemKind::Defect, OriginFilter::Customer, &defect, ReleaseFilter::None, "SUP.9"),
        def(
            OPEN_CHANGE_REQUESTS,
            ItemKind::ChangeRequest,
            OriginFilter::Internal,
            &change,
            ReleaseFilter::CurrentOrPrevious,
            "SUP.10",
        ),
        def(
            OPEN_CUSTOMER_CHANGE_REQUESTS,
            ItemKind::ChangeRequest,
            OriginFilter::Customer,
            &change,
            ReleaseFilter::CurrentOrPrevious,
            "SUP.10",
        ),
    ]
}

#[derive(Debug, Deserialize)]
struct SnapshotCsvRow {
    metric: String,
    week: String,
    status: String,
    count: u64,
}

/// Imports precomputed snapshots from CSV with header `metric,week,status,count`.
/// Rows sharing a metric and week are merged into one snapshot.
pub fn parse_snapshot_csv<R: Read>(input: R) -> Result<Vec<StatusSnapshot>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| IngestError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["metric", "week", "status", "count"] {
        return Err(IngestError::Csv("expected header `metric,week,status,count`".into()));
    }
    let mut grouped: BTreeMap<(String, IsoWeek), BTreeMap<String, u64>> = BTreeMap::new();
    let mut order: Vec<(String, IsoWeek)> = Vec::new();
    for (i, row) in reader.deserialize::<SnapshotCsvRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| IngestError::Csv(format!("line {line}: {e}")))?;
        let week: IsoWeek = row.week.parse().map_err(|e| IngestError::Csv(format!("line {line}: {e}")))?;
        let key = (row.metric, week);
        let counts = grouped.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            BTreeMap::new()
        });
        if counts.insert(row.status.clone(), row.count).is_some() {
            return Err(IngestError::Csv(format!("line {line}: duplicate status `{}`", row.status)));
        }
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let counts = grouped.remove(&key).unwrap_or_default();
            StatusSnapshot::new(key.0, key.1, counts)
        })
        .collect())
}

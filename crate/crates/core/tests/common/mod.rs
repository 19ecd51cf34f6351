//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc, Weekday};
use msqgate::harness::SimConfig;
use msqgate::ingest::{MetricDefinition, OriginFilter, ReleaseFilter, ReleaseWindow};
use msqgate::schedule::{build_schedule, DeviationBands, Direction, ThresholdSchedule};
use msqgate::{Fixed, IsoWeek, StatusSnapshot};

pub const RELEASES: [&str; 6] =
    ["Release 2.0.0", "Release 2.1.0", "Release 2.2.0", "Release 3.0.0", "Release 3.1.0", "Release 4.0.0"];

/// Rows of the pilot open-defect plan: threshold, then (band %, bound) per level.
pub const PLAN_ROWS: [(&str, [i64; 7]); 6] = [
    ("Release 2.0.0", [500, 10, 550, 20, 600, 30, 650]),
    ("Release 2.1.0", [400, 8, 432, 16, 464, 24, 496]),
    ("Release 2.2.0", [300, 6, 318, 12, 336, 18, 354]),
    ("Release 3.0.0", [200, 4, 208, 8, 216, 12, 224]),
    ("Release 3.1.0", [100, 2, 102, 4, 104, 6, 106]),
    ("Release 4.0.0", [0, 0, 0, 0, 0, 0, 0]),
];

pub const METRIC: &str = "Open defects (excluding customer)";

pub fn week(s: &str) -> IsoWeek {
    s.parse().unwrap()
}

pub fn fx(s: &str) -> Fixed {
    s.parse().unwrap()
}

pub fn pilot_milestones() -> Vec<(&'static str, IsoWeek)> {
    let start = week("2013-W34");
    RELEASES.iter().enumerate().map(|(k, n)| (*n, start.offset(12 * k as i64))).collect()
}

/// Six releases twelve weeks apart from 2013-W34, 500 down to 0, bands 10/20/30.
pub fn pilot_schedule() -> ThresholdSchedule {
    build_schedule(
        METRIC,
        Direction::LowerIsBetter,
        &pilot_milestones(),
        Fixed::from_int(500),
        Fixed::ZERO,
        DeviationBands::from_ints(10, 20, 30).unwrap(),
    )
    .unwrap()
}

pub fn sim(seed: u64, arrival: f64, close: f64, noise: f64) -> SimConfig {
    SimConfig { seed, weeks: 61, schedule: pilot_schedule(), arrival_rate: arrival, close_rate: close, noise }
}

/// 45 weekly snapshots from 2013-W34 to 2014-W26 with a fixed status mix.
pub fn fixture_45_weeks() -> Vec<StatusSnapshot> {
    let statuses = ["assigned", "implemented", "verifying", "issued", "getting info"];
    let first = week("2013-W34");
    (0..45)
        .map(|i: u64| {
            let counts = statuses
                .iter()
                .enumerate()
                .map(|(k, s)| (s.to_string(), (i * 7 + k as u64 * 13) % 40 + if k == 4 { 0 } else { 5 }))
                .filter(|(_, c)| *c > 0)
                .collect();
            StatusSnapshot::new(METRIC, first.offset(i as i64), counts)
        })
        .collect()
}

/// Last nanosecond of the ISO week, computed from the Sunday of that week.
pub fn oracle_week_end(w: IsoWeek) -> DateTime<Utc> {
    let sunday = NaiveDate::from_isoywd_opt(w.year(), w.week(), Weekday::Sun).unwrap();
    let t = NaiveTime::from_hms_nano_opt(23, 59, 59, 999_999_999).unwrap();
    Utc.from_utc_datetime(&sunday.and_time(t))
}

/// One event line decoded field by field from raw JSON.
#[derive(Debug, Clone)]
pub struct RawEvent {
    pub item: String,
    pub kind: String,
    pub origin: String,
    pub release: Option<String>,
    pub ts: DateTime<Utc>,
    pub status: String,
}

pub fn raw_events(log: &str) -> Vec<RawEvent> {
    log.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            RawEvent {
                item: v["item"].as_str().unwrap().to_string(),
                kind: v["kind"].as_str().unwrap().to_string(),
                origin: v["origin"].as_str().unwrap().to_string(),
                release: v["planned_release"].as_str().map(String::from),
                ts: DateTime::parse_from_rfc3339(v["ts"].as_str().unwrap()).unwrap().with_timezone(&Utc),
                status: v["status"].as_str().unwrap().to_string(),
            }
        })
        .collect()
}

fn selected(ev: &RawEvent, def: &MetricDefinition, window: Option<&ReleaseWindow>) -> bool {
    let kind = match def.kind {
        msqgate::ingest::ItemKind::Defect => "defect",
        msqgate::ingest::ItemKind::ChangeRequest => "cr",
    };
    let origin_ok = match def.origin {
        OriginFilter::Internal => ev.origin == "internal",
        OriginFilter::Customer => ev.origin == "customer",
        OriginFilter::Any => true,
    };
    let release_ok = match def.release_filter {
        ReleaseFilter::None => true,
        ReleaseFilter::CurrentOrPrevious => {
            let w = window.unwrap();
            ev.release.as_deref().is_some_and(|r| r == w.current || Some(r) == w.previous.as_deref())
        }
    };
    ev.kind == kind && origin_ok && release_ok && def.open_statuses.contains(&ev.status)
}

/// Replays the raw log up to the end of `w` and counts the open items that
/// pass the definition's filters, per status.
pub fn oracle_counts(
    events: &[RawEvent],
    def: &MetricDefinition,
    w: IsoWeek,
    window: Option<&ReleaseWindow>,
) -> BTreeMap<String, u64> {
    oracle_series(events, def, &[(w, window.cloned())]).pop().unwrap()
}

/// The same replay for ascending weeks, sweeping the log once in time order.
pub fn oracle_series(
    events: &[RawEvent],
    def: &MetricDefinition,
    weeks: &[(IsoWeek, Option<ReleaseWindow>)],
) -> Vec<BTreeMap<String, u64>> {
    let mut sorted: Vec<&RawEvent> = events.iter().collect();
    // stable, so equal timestamps keep log order
    sorted.sort_by_key(|e| e.ts);
    let mut latest: HashMap<&str, &RawEvent> = HashMap::new();
    let mut next = 0;
    weeks
        .iter()
        .map(|(w, window)| {
            let end = oracle_week_end(*w);
            while next < sorted.len() && sorted[next].ts <= end {
                latest.insert(&sorted[next].item, sorted[next]);
                next += 1;
            }
            let mut out = BTreeMap::new();
            for ev in latest.values().filter(|ev| selected(ev, def, window.as_ref())) {
                *out.entry(ev.status.clone()).or_insert(0) += 1;
            }
            out
        })
        .collect()
}

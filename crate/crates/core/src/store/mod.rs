//! Per-project measurement database kept as plain files.
//!
//! ```text
//! <root>/<project_id>/
//!     manifest.json      {"format_version": "1", "project_id": ...}
//!     schedule.json      array of threshold schedules
//!     metrics.json       array of project metric definitions
//!     events.jsonl       tracker event log
//!     snapshots.jsonl    weekly status snapshots
//!     escalations.jsonl  escalation records, superseded by later lines
//! ```
//!
//! Writers take an exclusive advisory lock on `.lock`; readers never lock.

pub mod jsonl;

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{Disposition, EscalationEvent, EscalationRecord};
use crate::ingest::{self, builtin_metric_definitions, EventLine, MetricDefinition, StatusSnapshot, TrackerRecord};
use crate::schedule::ThresholdSchedule;
use crate::week::IsoWeek;

pub const FORMAT_VERSION: &str = "1";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const ESCALATIONS_FILE: &str = "escalations.jsonl";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("project directory {0} exists and is not empty")]
    NotEmpty(PathBuf),
    #[error("{0} is not a project store (missing manifest)")]
    NotAStore(PathBuf),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("invalid project id `{0}`")]
    InvalidProjectId(String),
    #[error("{path}:{line}: corrupt line: {message}")]
    CorruptLine { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: truncated final line")]
    TruncatedTail { path: PathBuf, line: usize },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("snapshot for `{metric}` in {week} already recorded")]
    DuplicateSnapshot { metric: String, week: IsoWeek },
    #[error("escalation `{metric}` {week} already recorded")]
    DuplicateEscalation { metric: String, week: IsoWeek },
    #[error("no escalation recorded for `{metric}` in {week}")]
    UnknownEscalation { metric: String, week: IsoWeek },
    #[error("another writer holds the lock on {0}")]
    Locked(PathBuf),
    #[error("{0}")]
    Rejected(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub project_id: String,
}

/// Escalations are keyed by metric and week.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EscalationKey {
    pub metric: String,
    pub week: IsoWeek,
}

impl EscalationKey {
    fn of(rec: &EscalationRecord) -> Self {
        EscalationKey { metric: rec.metric.clone(), week: rec.week }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectStore {
    project_id: String,
    dir: PathBuf,
}

/// Exclusive writer lock, released on drop.
#[derive(Debug)]
pub struct WriteLock {
    file: File,
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

fn valid_project_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Creates `<root>/<project_id>` with an empty layout.
pub fn init_project(root: &Path, project_id: &str) -> Result<ProjectStore, StoreError> {
    if !valid_project_id(project_id) {
        return Err(StoreError::InvalidProjectId(project_id.to_string()));
    }
    let dir = root.join(project_id);
    if dir.exists() {
        let mut entries = fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))?;
        if entries.next().is_some() {
            return Err(StoreError::NotEmpty(dir));
        }
    }
    fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
    let store = ProjectStore { project_id: project_id.to_string(), dir };
    let _lock = store.lock()?;
    store.write_json(SCHEDULE_FILE, &Vec::<ThresholdSchedule>::new())?;
    store.write_json(METRICS_FILE, &Vec::<MetricDefinition>::new())?;
    for name in [EVENTS_FILE, SNAPSHOTS_FILE, ESCALATIONS_FILE] {
        let path = store.path(name);
        File::create(&path).map_err(|e| StoreError::io(&path, e))?;
    }
    // manifest last: its presence marks a complete layout
    store.write_json(
        MANIFEST_FILE,
        &Manifest { format_version: FORMAT_VERSION.to_string(), project_id: project_id.to_string() },
    )?;
    Ok(store)
}

impl ProjectStore {
    pub fn open(root: &Path, project_id: &str) -> Result<Self, StoreError> {
        if !valid_project_id(project_id) {
            return Err(StoreError::InvalidProjectId(project_id.to_string()));
        }
        let dir = root.join(project_id);
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.is_file() {
            return Err(StoreError::NotAStore(dir));
        }
        let store = ProjectStore { project_id: project_id.to_string(), dir };
        let manifest: Manifest = store.read_json(MANIFEST_FILE)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(StoreError::Manifest(format!("unsupported format version `{}`", manifest.format_version)));
        }
        if manifest.project_id != project_id {
            return Err(StoreError::Manifest(format!(
                "manifest names project `{}` but the directory is `{project_id}`",
                manifest.project_id
            )));
        }
        Ok(store)
    }

    pub fn project_id(&self) -> &str {
        &self.project_id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Takes the single-writer lock without waiting.
    pub fn lock(&self) -> Result<WriteLock, StoreError> {
        let path = self.path(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        match file.try_lock() {
            Ok(()) => Ok(WriteLock { file }),
            Err(fs::TryLockError::WouldBlock) => Err(StoreError::Locked(self.dir.clone())),
            Err(fs::TryLockError::Error(e)) => Err(StoreError::io(&path, e)),
        }
    }

    fn read_json<T: serde::de::DeserializeOwned>(&self, file: &str) -> Result<T, StoreError> {
        let path = self.path(file);
        let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path, message: e.to_string() })
    }

    /// Whole-file JSON documents are replaced via a temporary file and rename.
    fn write_json<T: Serialize>(&self, file: &str, value: &T) -> Result<(), StoreError> {
        let path = self.path(file);
        let tmp = self.path(&format!(".{file}.tmp"));
        let mut text = serde_json::to_string_pretty(value).map_err(|e| StoreError::Serialize(e.to_string()))?;
        text.push('\n');
        fs::write(&tmp, text).map_err(|e| StoreError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| StoreError::io(&path, e))
    }

    // -- schedules ---------------------------------------------------------

    pub fn schedules(&self) -> Result<Vec<ThresholdSchedule>, StoreError> {
        self.read_json(SCHEDULE_FILE)
    }

    pub fn schedule(&self, metric: &str) -> Result<Option<ThresholdSchedule>, StoreError> {
        Ok(self.schedules()?.into_iter().find(|s| s.metric_name() == metric))
    }

    /// Replaces the schedule for the same metric, or adds it.
    pub fn save_schedule(&self, schedule: &ThresholdSchedule) -> Result<(), StoreError> {
        let _lock = self.lock()?;
        let mut all = self.schedules()?;
        match all.iter_mut().find(|s| s.metric_name() == schedule.metric_name()) {
            Some(existing) => *existing = schedule.clone(),
            None => all.push(schedule.clone()),
        }
        self.write_json(SCHEDULE_FILE, &all)
    }

    // -- metric definitions ------------------------------------------------

    pub fn project_metrics(&self) -> Result<Vec<MetricDefinition>, StoreError> {
        let defs: Vec<MetricDefinition> = self.read_json(METRICS_FILE)?;
        for d in &defs {
            d.validate()?;
        }
        Ok(defs)
    }

    /// Project definitions first, then the built-in organizational ones.
    pub fn metric_definition(&self, name: &str) -> Result<Option<MetricDefinition>, StoreError> {
        Ok(self.project_metrics()?.into_iter().chain(builtin_metric_definitions()).find(|d| d.name == name))
    }

    pub fn save_metric(&self, def: &MetricDefinition) -> Result<(), StoreError> {
        def.validate()?;
        let _lock = self.lock()?;
        let mut all = self.project_metrics()?;
        match all.iter_mut().find(|d| d.name == def.name) {
            Some(existing) => *existing = def.clone(),
            None => all.push(def.clone()),
        }
        self.write_json(METRICS_FILE, &all)
    }

    // -- tracker events ----------------------------------------------------

    /// Appends event lines after checking that the combined log still parses.
    pub fn append_events(&self, lines: &[EventLine]) -> Result<usize, StoreError> {
        let _lock = self.lock()?;
        let path = self.path(EVENTS_FILE);
        let existing = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
        if !existing.is_empty() && !existing.ends_with('\n') {
            return Err(StoreError::TruncatedTail { path, line: existing.lines().count() });
        }
        let mut added = String::new();
        for line in lines {
            added.push_str(&line.to_json());
            added.push('\n');
        }
        let combined = format!("{existing}{added}");
        ingest::parse_event_log(combined.as_bytes())?;
        jsonl::append_raw(&path, &added)?;
        Ok(lines.len())
    }

    pub fn load_events(&self) -> Result<Vec<TrackerRecord>, StoreError> {
        let path = self.path(EVENTS_FILE);
        let file = File::open(&path).map_err(|e| StoreError::io(&path, e))?;
        Ok(ingest::parse_event_log(std::io::BufReader::new(file))?)
    }

    // -- snapshots ---------------------------------------------------------

    /// Appends a batch of snapshots; any `(metric, week)` already present, in
    /// the file or twice in the batch, rejects the whole batch.
    pub fn append_snapshots(&self, snapshots: &[StatusSnapshot]) -> Result<usize, StoreError> {
        let _lock = self.lock()?;
        let path = self.path(SNAPSHOTS_FILE);
        let existing: Vec<StatusSnapshot> = jsonl::read_strict(&path)?;
        let mut keys: HashSet<(String, IsoWeek)> = existing.into_iter().map(|s| (s.metric_name, s.week)).collect();
        for s in snapshots {
            if !keys.insert((s.metric_name.clone(), s.week)) {
                return Err(StoreError::DuplicateSnapshot { metric: s.metric_name.clone(), week: s.week });
            }
        }
        jsonl::append(&path, snapshots)?;
        Ok(snapshots.len())
    }

    pub fn snapshots(&self) -> Result<Vec<StatusSnapshot>, StoreError> {
        jsonl::read_strict(&self.path(SNAPSHOTS_FILE))
    }

    /// All snapshots of `metric`, sorted by week.
    pub fn load_series(&self, metric: &str) -> Result<Vec<StatusSnapshot>, StoreError> {
        let mut series: Vec<StatusSnapshot> =
            self.snapshots()?.into_iter().filter(|s| s.metric_name == metric).collect();
        series.sort_by_key(|s| s.week);
        Ok(series)
    }

    pub fn snapshot_at(&self, metric: &str, week: IsoWeek) -> Result<Option<StatusSnapshot>, StoreError> {
        Ok(self.snapshots()?.into_iter().find(|s| s.metric_name == metric && s.week == week))
    }

    /// Snapshots of every metric in `week`, sorted by metric name.
    pub fn snapshots_in_week(&self, week: IsoWeek) -> Result<Vec<StatusSnapshot>, StoreError> {
        let mut found: Vec<StatusSnapshot> = self.snapshots()?.into_iter().filter(|s| s.week == week).collect();
        found.sort_by(|a, b| a.metric_name.cmp(&b.metric_name));
        Ok(found)
    }

    // -- escalations -------------------------------------------------------

    fn escalation_lines(&self) -> Result<Vec<EscalationRecord>, StoreError> {
        jsonl::read_strict(&self.path(ESCALATIONS_FILE))
    }

    /// Latest line per escalation, in order of first appearance.
    pub fn escalations(&self) -> Result<Vec<EscalationRecord>, StoreError> {
        let mut latest: BTreeMap<EscalationKey, (usize, EscalationRecord)> = BTreeMap::new();
        for (i, rec) in self.escalation_lines()?.into_iter().enumerate() {
            let key = EscalationKey::of(&rec);
            let first_seen = latest.get(&key).map_or(i, |(first, _)| *first);
            latest.insert(key, (first_seen, rec));
        }
        let mut out: Vec<_> = latest.into_values().collect();
        out.sort_by_key(|(first, _)| *first);
        Ok(out.into_iter().map(|(_, rec)| rec).collect())
    }

    pub fn escalation(&self, metric: &str, week: IsoWeek) -> Result<Option<EscalationRecord>, StoreError> {
        Ok(self.escalations()?.into_iter().find(|r| r.metric == metric && r.week == week))
    }

    pub fn append_escalation(&self, event: &EscalationEvent) -> Result<EscalationKey, StoreError> {
        let record = EscalationRecord::from_event(event).map_err(|e| StoreError::Rejected(e.to_string()))?;
        let _lock = self.lock()?;
        let key = EscalationKey::of(&record);
        if self.escalation_lines()?.iter().any(|r| EscalationKey::of(r) == key) {
            return Err(StoreError::DuplicateEscalation { metric: key.metric, week: key.week });
        }
        jsonl::append(&self.path(ESCALATIONS_FILE), &[record])?;
        Ok(key)
    }

    /// Appends a superseding line with the new disposition and the note appended.
    pub fn update_disposition(
        &self,
        key: &EscalationKey,
        disposition: Disposition,
        note: &str,
    ) -> Result<EscalationRecord, StoreError> {
        let _lock = self.lock()?;
        let current = self
            .escalation(&key.metric, key.week)?
            .ok_or_else(|| StoreError::UnknownEscalation { metric: key.metric.clone(), week: key.week })?;
        let updated = current.with_disposition(disposition, note);
        jsonl::append(&self.path(ESCALATIONS_FILE), std::slice::from_ref(&updated))?;
        Ok(updated)
    }

    pub fn list_open_escalations(&self) -> Result<Vec<EscalationRecord>, StoreError> {
        Ok(self.escalations()?.into_iter().filter(|r| r.disposition == Disposition::Open).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::evaluate_week;
    use crate::schedule::tests::table4;
    use std::collections::BTreeMap;

    fn w(s: &str) -> IsoWeek {
        s.parse().unwrap()
    }

    fn snap(metric: &str, week: &str, n: u64) -> StatusSnapshot {
        StatusSnapshot::new(metric, w(week), BTreeMap::from([("assigned".to_string(), n)]))
    }

    fn fresh() -> (tempfile::TempDir, ProjectStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = init_project(dir.path(), "project-a").unwrap();
        (dir, store)
    }

    #[test]
    fn init_creates_layout() {
        let (dir, store) = fresh();
        for f in [MANIFEST_FILE, SCHEDULE_FILE, METRICS_FILE, EVENTS_FILE, SNAPSHOTS_FILE, ESCALATIONS_FILE] {
            assert!(store.path(f).is_file(), "{f}");
        }
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(store.path(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest, Manifest { format_version: "1".into(), project_id: "project-a".into() });

        let loaded = ProjectStore::open(dir.path(), "project-a").unwrap();
        assert_eq!(loaded, store);
        assert!(loaded.schedules().unwrap().is_empty());
        assert!(loaded.project_metrics().unwrap().is_empty());
        assert!(loaded.snapshots().unwrap().is_empty());
        assert!(loaded.escalations().unwrap().is_empty());
        assert!(loaded.load_events().unwrap().is_empty());
    }

    #[test]
    fn init_refuses_non_empty_directory() {
        let (dir, _store) = fresh();
        assert!(matches!(init_project(dir.path(), "project-a"), Err(StoreError::NotEmpty(_))));
        fs::create_dir(dir.path().join("empty")).unwrap();
        assert!(init_project(dir.path(), "empty").is_ok());
        assert!(matches!(init_project(dir.path(), "../x"), Err(StoreError::InvalidProjectId(_))));
    }

    #[test]
    fn open_checks_manifest() {
        let (dir, store) = fresh();
        fs::rename(store.dir(), dir.path().join("renamed")).unwrap();
        assert!(matches!(ProjectStore::open(dir.path(), "renamed"), Err(StoreError::Manifest(_))));
        assert!(matches!(ProjectStore::open(dir.path(), "missing"), Err(StoreError::NotAStore(_))));
    }

    #[test]
    fn snapshots_append_and_sort() {
        let (_dir, store) = fresh();
        assert!(store.load_series("m").unwrap().is_empty());
        assert_eq!(store.append_snapshots(&[snap("m", "2014-W03", 3), snap("m", "2014-W01", 1)]).unwrap(), 2);
        assert_eq!(
            store
                .append_snapshots(&[snap("m", "2014-W02", 2), snap("x", "2014-W02", 9), snap("m", "2013-W52", 0)])
                .unwrap(),
            3
        );
        let series = store.load_series("m").unwrap();
        assert_eq!(series.len(), 4);
        assert_eq!(series.iter().map(|s| s.total).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(store.snapshots().unwrap().len(), 5);
    }

    #[test]
    fn duplicate_snapshots_reject_the_batch() {
        let (_dir, store) = fresh();
        store.append_snapshots(&[snap("m", "2014-W01", 1)]).unwrap();
        let before = fs::read(store.path(SNAPSHOTS_FILE)).unwrap();
        let err = store.append_snapshots(&[snap("m", "2014-W02", 1), snap("m", "2014-W01", 5)]).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateSnapshot { .. }));
        let err = store.append_snapshots(&[snap("m", "2014-W05", 1), snap("m", "2014-W05", 2)]).unwrap_err();
        assert!(matches!(err, StoreError::DuplicateSnapshot { .. }));
        assert_eq!(fs::read(store.path(SNAPSHOTS_FILE)).unwrap(), before);
    }

    #[test]
    fn truncated_tail_is_detected_and_prior_lines_survive() {
        let (_dir, store) = fresh();
        store.append_snapshots(&[snap("m", "2014-W01", 1), snap("m", "2014-W02", 2)]).unwrap();
        let path = store.path(SNAPSHOTS_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str(r#"{"metric":"m","week":"2014-W0"#);
        fs::write(&path, text).unwrap();

        assert!(matches!(store.load_series("m"), Err(StoreError::TruncatedTail { line: 3, .. })));
        let contents = jsonl::read_log::<StatusSnapshot>(&path).unwrap();
        assert_eq!(contents.records.len(), 2);
        assert_eq!(contents.truncated_tail, Some(3));
        assert!(matches!(store.append_snapshots(&[snap("m", "2014-W09", 1)]), Err(StoreError::TruncatedTail { .. })));
    }

    #[test]
    fn corrupt_middle_line_reports_its_number() {
        let (_dir, store) = fresh();
        store.append_snapshots(&[snap("m", "2014-W01", 1)]).unwrap();
        let path = store.path(SNAPSHOTS_FILE);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("garbage\n");
        fs::write(&path, text).unwrap();
        store_append_unchecked(&path, &snap("m", "2014-W02", 1));
        assert!(matches!(store.load_series("m"), Err(StoreError::CorruptLine { line: 2, .. })));
    }

    fn store_append_unchecked(path: &Path, s: &StatusSnapshot) {
        jsonl::append(path, std::slice::from_ref(s)).unwrap();
    }

    #[test]
    fn escalations_are_event_sourced() {
        let (_dir, store) = fresh();
        let schedule = table4();
        let week = schedule.anchors()[1].milestone.week;
        // 440 against 400 is 10 %: level 1 at 8/16/24
        let event = evaluate_week(&snap(schedule.metric_name(), &week.to_string(), 440), &schedule).unwrap();
        let key = store.append_escalation(&event).unwrap();
        assert_eq!(store.list_open_escalations().unwrap().len(), 1);
        assert!(matches!(store.append_escalation(&event), Err(StoreError::DuplicateEscalation { .. })));

        let rec = store.update_disposition(&key, Disposition::RootCauseRecorded, "integration backlog").unwrap();
        assert_eq!(rec.disposition, Disposition::RootCauseRecorded);
        assert!(store.list_open_escalations().unwrap().is_empty());
        store.update_disposition(&key, Disposition::Open, "reopened").unwrap();
        assert_eq!(store.list_open_escalations().unwrap()[0].note, "integration backlog; reopened");
        store.update_disposition(&key, Disposition::Resolved, "").unwrap();
        assert!(store.list_open_escalations().unwrap().is_empty());
        assert_eq!(store.escalations().unwrap().len(), 1);
        assert_eq!(fs::read_to_string(store.path(ESCALATIONS_FILE)).unwrap().lines().count(), 4);

        let unknown = EscalationKey { metric: "nope".into(), week };
        assert!(matches!(
            store.update_disposition(&unknown, Disposition::Resolved, ""),
            Err(StoreError::UnknownEscalation { .. })
        ));
    }

    #[test]
    fn on_track_events_are_not_stored() {
        let (_dir, store) = fresh();
        let schedule = table4();
        let event = evaluate_week(&snap(schedule.metric_name(), "2013-W34", 10), &schedule).unwrap();
        assert!(matches!(store.append_escalation(&event), Err(StoreError::Rejected(_))));
    }

    #[test]
    fn schedules_and_metrics_are_replaced_by_name() {
        let (_dir, store) = fresh();
        store.save_schedule(&table4()).unwrap();
        store.save_schedule(&table4().renamed("other")).unwrap();
        store.save_schedule(&table4()).unwrap();
        assert_eq!(store.schedules().unwrap().len(), 2);
        assert_eq!(store.schedule(table4().metric_name()).unwrap().unwrap(), table4());

        let builtin = store.metric_definition("Open customer defects").unwrap().unwrap();
        let mut custom = builtin.clone();
        custom.open_statuses.remove("internally closed");
        store.save_metric(&custom).unwrap();
        assert_eq!(store.metric_definition("Open customer defects").unwrap().unwrap(), custom);
        custom.open_statuses.clear();
        assert!(store.save_metric(&custom).is_err());
    }

    #[test]
    fn second_writer_is_refused() {
        let (_dir, store) = fresh();
        let held = store.lock().unwrap();
        assert!(matches!(store.append_snapshots(&[snap("m", "2014-W01", 1)]), Err(StoreError::Locked(_))));
        drop(held);
        assert!(store.append_snapshots(&[snap("m", "2014-W01", 1)]).is_ok());
    }
}

//! `msqgate` command line. The process exit code carries the gate verdict.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::breakdown::{self, BreakdownMode};
use crate::evaluate::{evaluate_week, Disposition, EscalationLevel, Level};
use crate::fixed::Fixed;
use crate::harness::{self, SimConfig};
use crate::improve::{self, Decision};
use crate::ingest::{self, EventLine, ReleaseCalendar, ReleaseFilter};
use crate::report::{self, summary_line};
use crate::schedule::{build_schedule, DeviationBands, Direction, ThresholdSchedule};
use crate::store::{init_project, EscalationKey, ProjectStore};
use crate::week::IsoWeek;

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExitCode(pub i32);

impl ExitCode {
    pub const SUCCESS: ExitCode = ExitCode(0);
    pub const DATA_ERROR: ExitCode = ExitCode(1);
    pub const USAGE_ERROR: ExitCode = ExitCode(2);
    pub const LEVEL0: ExitCode = ExitCode(10);
    pub const LEVEL1: ExitCode = ExitCode(11);
    pub const LEVEL2: ExitCode = ExitCode(12);

    pub fn from_level(level: EscalationLevel) -> Self {
        match level.value {
            Level::OnTrack => Self::SUCCESS,
            Level::Level0 => Self::LEVEL0,
            Level::Level1 => Self::LEVEL1,
            Level::Level2 => Self::LEVEL2,
        }
    }

    pub fn value(self) -> i32 {
        self.0
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::USAGE_ERROR,
            CliError::Data(_) => ExitCode::DATA_ERROR,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "msqgate", version, about = "Milestone-anchored software quality gate")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StoreArgs {
    /// Project identifier (directory name under the root)
    #[arg(long)]
    project: String,
    /// Directory holding project stores
    #[arg(long)]
    root: PathBuf,
}

impl StoreArgs {
    fn open(&self) -> Result<ProjectStore, CliError> {
        ProjectStore::open(&self.root, &self.project).map_err(data)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Lower,
    Higher,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Lower => Direction::LowerIsBetter,
            DirectionArg::Higher => Direction::HigherIsBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Count,
    Ratio,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create an empty project store
    Init(StoreArgs),
    /// Build or show threshold schedules
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    /// Append tracker events or precomputed snapshots to the store
    Ingest {
        #[command(flatten)]
        store: StoreArgs,
        /// Event log in JSON-lines format
        #[arg(long, conflicts_with = "snapshots", required_unless_present = "snapshots")]
        events: Option<PathBuf>,
        /// Snapshot CSV with header metric,week,status,count
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Compute weekly snapshots of a metric from the stored events
    Snapshot {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        from: IsoWeek,
        #[arg(long)]
        to: IsoWeek,
    },
    /// Evaluate one week of a metric; exits 0, 10, 11 or 12 by escalation level
    Evaluate {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        week: IsoWeek,
    },
    /// List escalations or record a disposition
    #[command(subcommand)]
    Escalations(EscalationCommand),
    /// Charts, weekly status reports and compliance coverage
    #[command(subcommand)]
    Report(ReportCommand),
    /// Check a project portfolio against the threshold improvement rule
    ImproveCheck {
        /// CSV with header project,metric,milestone,pct
        #[arg(long)]
        portfolio: PathBuf,
        /// Escalation bands at the milestone, as l0,l1,l2 percent
        #[arg(long)]
        bands: String,
    },
    /// Break a project goal down to module targets
    Breakdown {
        #[arg(long)]
        target: u64,
        /// CSV with header module,size,priority
        #[arg(long)]
        modules: PathBuf,
        #[arg(long, value_enum, default_value = "count")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic event log following a stored schedule
    Simulate {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        seed: u64,
        /// Number of weeks from the first milestone (default: through the last milestone)
        #[arg(long)]
        weeks: Option<u32>,
        /// Mean new defects per week
        #[arg(long, default_value_t = 10.0)]
        arrival: f64,
        /// Mean closing capacity per week
        #[arg(long, default_value_t = 20.0)]
        close: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ScheduleCommand {
    /// Build a schedule with linear thresholds and decaying bands
    Build {
        #[arg(long)]
        project: Option<String>,
        #[arg(long, requires = "project")]
        root: Option<PathBuf>,
        #[arg(long)]
        metric: String,
        #[arg(long, value_enum, default_value = "lower")]
        direction: DirectionArg,
        /// CSV with header name,week
        #[arg(long)]
        milestones: PathBuf,
        #[arg(long)]
        start: Fixed,
        #[arg(long)]
        end: Fixed,
        /// Bands at the first milestone, as l0,l1,l2 percent
        #[arg(long)]
        bands: String,
        /// Write the schedule file here instead of into a store
        #[arg(long, required_unless_present = "root")]
        out: Option<PathBuf>,
    },
    /// Print a stored schedule, or its values in one week
    Show {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        week: Option<IsoWeek>,
    },
}

#[derive(Debug, Subcommand)]
enum EscalationCommand {
    /// List escalations (only open ones unless --all)
    List {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        all: bool,
    },
    /// Record a disposition for an escalation
    Set {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        week: IsoWeek,
        /// open, root_cause_recorded, replanned or resolved
        #[arg(long)]
        disposition: Disposition,
        #[arg(long, default_value = "")]
        note: String,
    },
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Weekly stacked chart with threshold and escalation overlays (SVG)
    Chart {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        from: Option<IsoWeek>,
        #[arg(long)]
        to: Option<IsoWeek>,
        /// SVG output (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the chart data as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Text status of every metric in a week
    Weekly {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        week: IsoWeek,
    },
    /// Practice coverage of the implemented process elements (JSON)
    Compliance {
        /// File listing implemented element names, one per line (default: all)
        #[arg(long)]
        implemented: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return ExitCode::USAGE_ERROR.value();
            }
            let _ = write!(out, "{rendered}");
            return ExitCode::SUCCESS.value();
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code.value(),
        Err(e) => {
            let prefix = if matches!(e, CliError::Usage(_)) { "usage error" } else { "error" };
            let _ = writeln!(err, "{prefix}: {}", e.message());
            e.code().value()
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_or_print(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
        None => out.write_all(bytes).map_err(data),
    }
}

fn parse_bands(text: &str) -> Result<DeviationBands, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("--bands expects l0,l1,l2, got `{text}`")));
    }
    let v: Vec<Fixed> = parts.iter().map(|p| p.parse::<Fixed>()).collect::<Result<_, _>>().map_err(usage)?;
    DeviationBands::new(v[0], v[1], v[2]).map_err(usage)
}

#[derive(Deserialize)]
struct MilestoneRow {
    name: String,
    week: String,
}

fn read_milestones(path: &Path) -> Result<Vec<(String, IsoWeek)>, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(data)?;
    if headers.iter().collect::<Vec<_>>() != ["name", "week"] {
        return Err(CliError::Data(format!("{}: expected header `name,week`", path.display())));
    }
    reader
        .deserialize::<MilestoneRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 2)))?;
            let week = row.week.parse().map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 2)))?;
            Ok((row.name, week))
        })
        .collect()
}

fn require_schedule(store: &ProjectStore, metric: &str) -> Result<ThresholdSchedule, CliError> {
    store.schedule(metric).map_err(data)?.ok_or_else(|| CliError::Data(format!("no schedule for metric `{metric}`")))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    match command {
        Command::Init(args) => {
            let store = init_project(&args.root, &args.project).map_err(data)?;
            writeln!(out, "initialized {}", store.dir().display()).map_err(data)?;
        }
        Command::Schedule(cmd) => schedule_command(cmd, out)?,
        Command::Ingest { store, events, snapshots } => {
            let store = store.open()?;
            if let Some(path) = events {
                let text = read_text(&path)?;
                let lines: Vec<EventLine> = ingest::parse_event_log(text.as_bytes())
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
                    .iter()
                    .flat_map(|r| r.to_lines().collect::<Vec<_>>())
                    .collect();
                let n = store.append_events(&lines).map_err(data)?;
                writeln!(out, "appended {n} events").map_err(data)?;
            } else if let Some(path) = snapshots {
                let snaps = ingest::parse_snapshot_csv(read_text(&path)?.as_bytes()).map_err(data)?;
                let n = store.append_snapshots(&snaps).map_err(data)?;
                writeln!(out, "appended {n} snapshots").map_err(data)?;
            }
        }
        Command::Snapshot { store, metric, from, to } => {
            let store = store.open()?;
            let def = store
                .metric_definition(&metric)
                .map_err(data)?
                .ok_or_else(|| CliError::Data(format!("unknown metric `{metric}`")))?;
            let calendar = match def.release_filter {
                ReleaseFilter::None => None,
                ReleaseFilter::CurrentOrPrevious => {
                    Some(ReleaseCalendar::from_schedule(&require_schedule(&store, &metric)?))
                }
            };
            let records = store.load_events().map_err(data)?;
            let series = ingest::weekly_series(&records, &def, from, to, calendar.as_ref()).map_err(data)?;
            let n = store.append_snapshots(&series).map_err(data)?;
            writeln!(out, "appended {n} snapshots for `{metric}`").map_err(data)?;
        }
        Command::Evaluate { store, metric, week } => {
            let store = store.open()?;
            let schedule = require_schedule(&store, &metric)?;
            let snapshot = store
                .snapshot_at(&metric, week)
                .map_err(data)?
                .ok_or_else(|| CliError::Data(format!("no snapshot for `{metric}` in {week}")))?;
            let event = evaluate_week(&snapshot, &schedule).map_err(data)?;
            writeln!(out, "{week} {}", summary_line(&event)).map_err(data)?;
            if let Some(route) = &event.route {
                writeln!(out, "  escalate: {route}").map_err(data)?;
                if store.escalation(&metric, week).map_err(data)?.is_none() {
                    store.append_escalation(&event).map_err(data)?;
                }
            }
            return Ok(ExitCode::from_level(event.level));
        }
        Command::Escalations(EscalationCommand::List { store, all }) => {
            let store = store.open()?;
            let records = if all { store.escalations() } else { store.list_open_escalations() }.map_err(data)?;
            for rec in records {
                writeln!(out, "{}", serde_json::to_string(&rec).map_err(data)?).map_err(data)?;
            }
        }
        Command::Escalations(EscalationCommand::Set { store, metric, week, disposition, note }) => {
            let store = store.open()?;
            let rec = store.update_disposition(&EscalationKey { metric, week }, disposition, &note).map_err(data)?;
            writeln!(out, "{}", serde_json::to_string(&rec).map_err(data)?).map_err(data)?;
        }
        Command::Report(cmd) => report_command(cmd, out)?,
        Command::ImproveCheck { portfolio, bands } => {
            let bands = parse_bands(&bands)?;
            let obs = improve::parse_portfolio_csv(read_text(&portfolio)?.as_bytes()).map_err(data)?;
            let verdict = improve::improvement_check(&obs, &bands).map_err(data)?;
            let decision = match verdict.decision {
                Decision::KeepThreshold => "keep_threshold",
                Decision::ActionNeeded => "action_needed",
            };
            writeln!(out, "decision: {decision}").map_err(data)?;
            writeln!(out, "within_l2: {}", verdict.frac_within_l2).map_err(data)?;
            writeln!(out, "within_l0: {}", verdict.frac_within_l0).map_err(data)?;
            for s in &verdict.suggestions {
                writeln!(out, "suggestion: {s}").map_err(data)?;
            }
        }
        Command::Breakdown { target, modules, mode, out: out_path } => {
            let mods = breakdown::parse_modules_csv(read_text(&modules)?.as_bytes()).map_err(data)?;
            let mode = match mode {
                ModeArg::Count => BreakdownMode::CountShare,
                ModeArg::Ratio => BreakdownMode::PerModuleRatio,
            };
            let targets = breakdown::breakdown_targets(target, &mods, mode).map_err(data)?;
            let mut buf = Vec::new();
            breakdown::write_targets_csv(&targets, &mut buf).map_err(data)?;
            write_or_print(out_path.as_deref(), &buf, out)?;
        }
        Command::Simulate { store, metric, seed, weeks, arrival, close, noise, out: out_path } => {
            let store = store.open()?;
            let schedule = require_schedule(&store, &metric)?;
            let weeks = weeks.unwrap_or_else(|| (schedule.first_week().weeks_until(schedule.last_week()) + 1) as u32);
            let cfg = SimConfig { seed, weeks, schedule, arrival_rate: arrival, close_rate: close, noise };
            cfg.validate().map_err(usage)?;
            let log = harness::simulate_events(&cfg).map_err(data)?;
            write_or_print(out_path.as_deref(), log.as_bytes(), out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn schedule_command(cmd: ScheduleCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ScheduleCommand::Build { project, root, metric, direction, milestones, start, end, bands, out: out_path } => {
            let bands = parse_bands(&bands)?;
            let milestones = read_milestones(&milestones)?;
            let schedule = build_schedule(&metric, direction.into(), &milestones, start, end, bands).map_err(usage)?;
            if let Some(path) = out_path {
                let text = serde_json::to_string_pretty(&[&schedule]).map_err(data)? + "\n";
                write_or_print(Some(&path), text.as_bytes(), out)?;
            }
            if let (Some(project), Some(root)) = (project, root) {
                StoreArgs { project, root }.open()?.save_schedule(&schedule).map_err(data)?;
            }
            print_schedule(&schedule, out)?;
        }
        ScheduleCommand::Show { store, metric, week } => {
            let schedule = require_schedule(&store.open()?, &metric)?;
            match week {
                Some(week) => {
                    let p = schedule.interpolate(week);
                    writeln!(
                        out,
                        "{week} threshold {} bands {} bounds {}/{}/{}",
                        p.threshold, p.bands, p.bound0, p.bound1, p.bound2
                    )
                    .map_err(data)?;
                }
                None => print_schedule(&schedule, out)?,
            }
        }
    }
    Ok(())
}

fn print_schedule(schedule: &ThresholdSchedule, out: &mut dyn Write) -> Result<(), CliError> {
    writeln!(out, "metric {:?} ({})", schedule.metric_name(), schedule.direction()).map_err(data)?;
    writeln!(out, "milestone\tweek\tthreshold\tl0 %\tl0\tl1 %\tl1\tl2 %\tl2").map_err(data)?;
    for a in schedule.anchors() {
        let p = schedule.interpolate(a.milestone.week);
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            a.milestone.name,
            a.milestone.week,
            a.threshold,
            a.bands.level0,
            p.bound0,
            a.bands.level1,
            p.bound1,
            a.bands.level2,
            p.bound2
        )
        .map_err(data)?;
    }
    Ok(())
}

fn report_command(cmd: ReportCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ReportCommand::Chart { store, metric, from, to, out: out_path, json } => {
            let store = store.open()?;
            let schedule = require_schedule(&store, &metric)?;
            let series: Vec<_> = store
                .load_series(&metric)
                .map_err(data)?
                .into_iter()
                .filter(|s| from.is_none_or(|f| s.week >= f) && to.is_none_or(|t| s.week <= t))
                .collect();
            let chart = report::chart_data(&series, &schedule).map_err(data)?;
            if let Some(path) = json {
                write_or_print(Some(&path), (chart.to_json() + "\n").as_bytes(), out)?;
            }
            write_or_print(out_path.as_deref(), &report::render_svg(&chart), out)?;
        }
        ReportCommand::Weekly { store, week } => {
            let text = report::weekly_report(&store.open()?, week).map_err(data)?;
            out.write_all(text.as_bytes()).map_err(data)?;
        }
        ReportCommand::Compliance { implemented, out: out_path } => {
            let names: Vec<String> = match implemented {
                Some(path) => {
                    read_text(&path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
                }
                None => report::compliance_table().into_iter().map(|e| e.element_name).collect(),
            };
            let rep = report::compliance_report(&names).map_err(data)?;
            write_or_print(out_path.as_deref(), (rep.to_json() + "\n").as_bytes(), out)?;
        }
    }
    Ok(())
}

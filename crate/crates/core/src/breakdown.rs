//! Breaking a project-level goal down into module-level targets.

use std::cmp::Reverse;
use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BreakdownError {
    #[error("no modules to break the goal down to")]
    Empty,
    #[error("module `{0}` has a non-positive size")]
    NonPositiveSize(String),
    #[error("duplicate module `{0}`")]
    DuplicateModule(String),
    #[error("module CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSpec {
    #[serde(rename = "module")]
    pub name: String,
    pub size: u64,
    /// Higher is more urgent.
    pub priority: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleTarget {
    pub module: ModuleSpec,
    pub target: u64,
    pub plan_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownMode {
    /// Count goals (e.g. open defects) split in proportion to module size.
    CountShare,
    /// Ratio goals (e.g. coverage) apply unchanged to every module.
    PerModuleRatio,
}

/// Module targets in input order. In [`BreakdownMode::CountShare`] the targets
/// are a largest-remainder apportionment of `project_target` by size, with
/// remainder ties going to higher priority and then to earlier modules.
pub fn breakdown_targets(
    project_target: u64,
    modules: &[ModuleSpec],
    mode: BreakdownMode,
) -> Result<Vec<ModuleTarget>, BreakdownError> {
    if modules.is_empty() {
        return Err(BreakdownError::Empty);
    }
    let mut names = HashSet::new();
    for m in modules {
        if m.size == 0 {
            return Err(BreakdownError::NonPositiveSize(m.name.clone()));
        }
        if !names.insert(m.name.as_str()) {
            return Err(BreakdownError::DuplicateModule(m.name.clone()));
        }
    }

    let targets = match mode {
        BreakdownMode::PerModuleRatio => vec![project_target; modules.len()],
        BreakdownMode::CountShare => largest_remainder(project_target, modules),
    };

    let mut ranks = vec![0; modules.len()];
    let mut by_priority: Vec<usize> = (0..modules.len()).collect();
    by_priority.sort_by_key(|&i| (Reverse(modules[i].priority), i));
    for (rank, &i) in by_priority.iter().enumerate() {
        ranks[i] = rank + 1;
    }

    Ok(modules
        .iter()
        .zip(targets)
        .zip(ranks)
        .map(|((m, target), plan_rank)| ModuleTarget { module: m.clone(), target, plan_rank })
        .collect())
}

fn largest_remainder(total: u64, modules: &[ModuleSpec]) -> Vec<u64> {
    let size_sum: u128 = modules.iter().map(|m| u128::from(m.size)).sum();
    let mut targets = Vec::with_capacity(modules.len());
    let mut remainders = Vec::with_capacity(modules.len());
    for m in modules {
        let share = u128::from(total) * u128::from(m.size);
        targets.push((share / size_sum) as u64);
        remainders.push(share % size_sum);
    }
    let assigned: u64 = targets.iter().sum();
    let mut order: Vec<usize> = (0..modules.len()).collect();
    order.sort_by_key(|&i| (Reverse(remainders[i]), Reverse(modules[i].priority), i));
    // the leftover is strictly less than the module count
    for &i in order.iter().take((total - assigned) as usize) {
        targets[i] += 1;
    }
    targets
}

/// Reads modules from CSV with header `module,size,priority`.
pub fn parse_modules_csv<R: Read>(input: R) -> Result<Vec<ModuleSpec>, BreakdownError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| BreakdownError::Csv(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["module", "size", "priority"] {
        return Err(BreakdownError::Csv("expected header `module,size,priority`".into()));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| BreakdownError::Csv(format!("line {}: {e}", i + 2))))
        .collect()
}

/// Writes `module,target,plan_rank` rows in input order.
pub fn write_targets_csv<W: Write>(targets: &[ModuleTarget], out: W) -> Result<(), BreakdownError> {
    let mut writer = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| BreakdownError::Csv(e.to_string());
    writer.write_record(["module", "target", "plan_rank"]).map_err(csv_err)?;
    for t in targets {
        writer
            .write_record([t.module.name.as_str(), &t.target.to_string(), &t.plan_rank.to_string()])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|e| BreakdownError::Csv(e.to_string()))
}

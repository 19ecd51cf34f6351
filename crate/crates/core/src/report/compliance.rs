//! Mapping of the measurement process elements to CMMI-DEV Measurement and
//! Analysis and Automotive SPICE MAN.6 practices, and coverage reporting.

use std::collections::BTreeSet;

use serde::Serialize;

use super::ReportError;
use crate::fixed::Fixed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Stereotype {
    Activity,
    DataObject,
    DataStore,
    Pool,
    StartEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceElement {
    pub element_name: String,
    pub stereotype: Stereotype,
    pub cmmi_refs: Vec<String>,
    pub aspice_refs: Vec<String>,
    pub implemented: bool,
}

use Stereotype::*;

// (element, stereotype, CMMI-DEV MA, ASPICE MAN.6)
const TABLE: [(&str, Stereotype, &[&str], &[&str]); 30] = [
    ("EE Quality Assurance Strategy", DataObject, &["MA GP 2.1"], &["MAN.6.BP1", "MAN.6.BP2"]),
    ("Maintain quality assurance strategy", Activity, &["MA GP 2.1", "MA GP 2.6"], &[]),
    (
        "Hold sprint meeting",
        Activity,
        &["MA GP 2.10", "MA GP 2.3", "MA GP 2.4"],
        &["MAN.6 GP 2.1.4", "MAN.6 GP 2.1.5", "MAN.6 GP 2.1.6", "MAN.6 GP 2.2.1", "MAN.6 GP 2.2.2", "MAN.6 GP 2.2.3"],
    ),
    ("Communicate results", Activity, &["MA GP 2.10", "MA.SP 2.4"], &["MAN.6.BP9"]),
    (
        "Plan measurement sprint",
        Activity,
        &["MA GP 2.2"],
        &["MAN.6 GP 2.1.1", "MAN.6 GP 2.1.2", "MAN.6 GP 2.1.5", "MAN.6 GP 2.2.3"],
    ),
    ("Sprint Planning Document", DataObject, &["MA GP 2.2", "MA GP 2.6"], &[]),
    ("Quality Department (not represented on figures in Appendix)", Pool, &["MA GP 2.4"], &[]),
    ("Train employee", Activity, &["MA GP 2.5"], &[]),
    ("Measurement and Analysis Training Material", DataObject, &["MA GP 2.5"], &[]),
    ("Training Attendance Sheet", DataObject, &["MA GP 2.5"], &[]),
    ("Training Evaluation Sheet", DataObject, &["MA GP 2.5"], &[]),
    ("Collect measurement data", Activity, &["MA GP 2.7", "MA.SP 2.1", "MA.SP 2.3"], &["MAN.6.BP6"]),
    (
        "Monitor and control measurement process and its work products",
        Activity,
        &["MA GP 2.8"],
        &["MAN.6 GP 2.1.3", "MAN.6 GP 2.2.4"],
    ),
    ("Evaluate adherence", Activity, &["MA GP 2.9"], &[]),
    ("Start", StartEvent, &["MA GP 3.1"], &[]),
    ("Propose new metric", Activity, &["MA GP 3.2"], &["MAN.6 GP 2.2.1", "MAN.6.BP3"]),
    (
        "Define/refine measurement goal",
        Activity,
        &["MA GP 3.2", "MA.SP 1.1"],
        &[
            "ENG.2-10.GP 2.1.1",
            "MAN.3.GP 2.1.1",
            "MAN.6.BP3",
            "SUP.1.GP 2.1.1",
            "SUP.10.GP 2.1.1",
            "SUP.8.GP 2.1.1",
            "SUP.9.GP 2.1.1",
        ],
    ),
    ("Define/refine metrics and thresholds", Activity, &["MA GP 3.2", "MA.SP 1.2"], &["MAN.6.BP4"]),
    ("Define metric", Activity, &["MA.SP 1.2"], &[]),
    ("Define abstract milestones", Activity, &["MA.SP 1.2", "MA.SP 1.3"], &[]),
    ("Define measurement data collection", Activity, &["MA.SP 1.3"], &[]),
    ("Measure and analyse", Activity, &["MA.SP 1.4"], &["MAN.6.BP5"]),
    ("Analyze measurement data", Activity, &["MA.SP 2.2", "MA.SP 2.3"], &["MAN.6.BP7"]),
    ("Measurement and Analysis Database", DataStore, &["MA.SP 2.3", "OPD.SP 1.4"], &["MAN.6.BP6"]),
    ("Measurement and Analysis Process Responsible", Pool, &[], &["MAN.6 GP 2.1.4"]),
    ("Improve measurement approach", Activity, &[], &["MAN.6.BP10", "MAN.6.BP11"]),
    ("Act", Activity, &[], &["MAN.6.BP8"]),
    ("Take appropriate action", Activity, &[], &["MAN.6.BP8"]),
    ("Project Quality Plan", DataObject, &[], &["SUP.1.BP1"]),
    ("Escalate violation of thresholds", Activity, &[], &["SUP.1.BP10"]),
];

/// All process elements, each marked implemented.
pub fn compliance_table() -> Vec<ComplianceElement> {
    TABLE
        .iter()
        .map(|(name, stereotype, cmmi, aspice)| ComplianceElement {
            element_name: name.to_string(),
            stereotype: *stereotype,
            cmmi_refs: cmmi.iter().map(|s| s.to_string()).collect(),
            aspice_refs: aspice.iter().map(|s| s.to_string()).collect(),
            implemented: true,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coverage {
    pub covered: Vec<String>,
    /// Percent of the practices referenced anywhere in the mapping.
    pub pct: Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceReport {
    pub implemented: Vec<String>,
    pub cmmi: Coverage,
    pub aspice: Coverage,
}

impl ComplianceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn coverage(universe: &BTreeSet<&str>, covered: BTreeSet<&str>) -> Coverage {
    Coverage {
        pct: Fixed::ratio(100 * covered.len() as i64, universe.len() as i64),
        covered: covered.into_iter().map(String::from).collect(),
    }
}

/// Practices touched by at least one implemented element, per standard.
pub fn compliance_report<S: AsRef<str>>(implemented: &[S]) -> Result<ComplianceReport, ReportError> {
    let table = compliance_table();
    let mut chosen = BTreeSet::new();
    for name in implemented {
        let name = name.as_ref();
        if !table.iter().any(|e| e.element_name == name) {
            return Err(ReportError::UnknownElement(name.to_string()));
        }
        chosen.insert(name);
    }

    let all_cmmi: BTreeSet<&str> = table.iter().flat_map(|e| e.cmmi_refs.iter().map(String::as_str)).collect();
    let all_aspice: BTreeSet<&str> = table.iter().flat_map(|e| e.aspice_refs.iter().map(String::as_str)).collect();
    let active: Vec<&ComplianceElement> = table.iter().filter(|e| chosen.contains(e.element_name.as_str())).collect();
    let cmmi = active.iter().flat_map(|e| e.cmmi_refs.iter().map(String::as_str)).collect();
    let aspice = active.iter().flat_map(|e| e.aspice_refs.iter().map(String::as_str)).collect();

    Ok(ComplianceReport {
        // table order
        implemented: active.iter().map(|e| e.element_name.clone()).collect(),
        cmmi: coverage(&all_cmmi, cmmi),
        aspice: coverage(&all_aspice, aspice),
    })
}

//! Assembles classified runs into the result tables.
//!
//! Each table is a header plus string rows. Cells are filled from every
//! explored run that maps onto them; two runs that disagree on a cell are
//! reported as a [`TableError::Conflict`] instead of being silently merged.

use crate::classify::{self, fmt_set, BmeOutcome, BmeRow, ClassifyError, Family, Sra3pOutcome, Sra3pResult};
use crate::engine::{EngineError, RunResult};
use crate::explorer::{explore, Exploration};
use crate::scenario::{preset, ScenarioError};
use crate::term::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const TABLE_IDS: &[&str] = &[
    "bme.traces",
    "bme.extended.case1",
    "bme.extended.case2",
    "bme.extended.case3",
    "bme.extended.case4",
    "bme.extended.case5",
    "bme.extended.case6",
    "guardian.bme",
    "sra3p.case1",
    "sra3p.case2",
    "sra3p.case3",
    "sra3p.case4",
    "sra3p.case5",
    "sra3p.case6",
    "guardian.sra3p",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("unknown table `{0}` (known: {})", TABLE_IDS.join(", "))]
    Unknown(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("table {table}: runs disagree on cell {cell}: `{a}` vs `{b}`")]
    Conflict { table: String, cell: String, a: String, b: String },
}

fn explore_preset(name: &str) -> Result<Exploration, TableError> {
    Ok(explore(&preset(name)?)?)
}

fn case_of(id: &str, prefix: &str) -> Option<u8> {
    id.strip_prefix(prefix)?.parse().ok().filter(|c| (1..=6).contains(c))
}

/// Builds the table with the given id by exploring the relevant presets.
pub fn build_table(id: &str) -> Result<Table, TableError> {
    if id == "bme.traces" {
        return bme_traces();
    }
    if id == "guardian.bme" {
        return guardian_bme();
    }
    if id == "guardian.sra3p" {
        return guardian_sra3p();
    }
    if let Some(c) = case_of(id, "bme.extended.case") {
        return bme_extended(c);
    }
    if let Some(c) = case_of(id, "sra3p.case") {
        return sra3p_case(c);
    }
    Err(TableError::Unknown(id.into()))
}

fn put<K: Ord, V: Clone + PartialEq + std::fmt::Debug>(
    table: &str,
    m: &mut BTreeMap<K, V>,
    k: K,
    v: V,
    cell: impl FnOnce() -> String,
) -> Result<(), TableError> {
    match m.get(&k) {
        Some(old) if *old != v => {
            Err(TableError::Conflict { table: table.into(), cell: cell(), a: format!("{old:?}"), b: format!("{v:?}") })
        }
        Some(_) => Ok(()),
        None => {
            m.insert(k, v);
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- BME

/// Trace families reachable in each BME case.
pub fn bme_families(case: u8) -> Result<BTreeSet<Family>, TableError> {
    let ex = explore_preset(&format!("bme-case{case}"))?;
    ex.runs.iter().map(|r| Ok(classify::bme_family(r)?)).collect()
}

fn bme_traces() -> Result<Table, TableError> {
    let mut rows = Vec::new();
    for case in 1..=6 {
        let fams = bme_families(case)?;
        rows.push(vec![case.to_string(), fams.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")]);
    }
    Ok(Table { id: "bme.traces".into(), header: vec!["case".into(), "families".into()], rows })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BmeNaming {
    /// The attacker served first is called E1.
    ServedFirst,
    /// Names are kept; the attacker served first is marked with `*`.
    Starred,
    Fixed,
}

fn bme_naming(case: u8) -> BmeNaming {
    match case {
        4 | 6 => BmeNaming::Starred,
        5 => BmeNaming::Fixed,
        _ => BmeNaming::ServedFirst,
    }
}

/// Maps actual attacker ids to (set name, row label).
fn bme_names(o: &BmeOutcome, attackers: &[AgentId], naming: BmeNaming) -> BTreeMap<AgentId, (String, String)> {
    let first = o.served.first();
    let mut out = BTreeMap::new();
    for a in attackers {
        let (set_name, row) = match naming {
            BmeNaming::Fixed => (a.clone(), a.clone()),
            BmeNaming::Starred => {
                let star = if Some(a) == first { "*" } else { "" };
                (a.clone(), format!("{a}{star}"))
            }
            BmeNaming::ServedFirst => {
                let swap = attackers.len() == 2 && first.is_some_and(|f| f != "E1");
                let n = match (swap, a.as_str()) {
                    (true, "E1") => "E2".to_string(),
                    (true, _) => "E1".to_string(),
                    (false, _) => a.clone(),
                };
                (n.clone(), n)
            }
        };
        out.insert(a.clone(), (set_name, row));
    }
    out
}

fn cansee_order(label: &str) -> usize {
    ["stops", "--", "{E1,E2}", "{E1}", "{E2}"].iter().position(|x| *x == label).unwrap_or(99)
}

fn agent_order(label: &str) -> usize {
    ["E1*", "E1", "E2*", "E2", "A", "A (E2*)"].iter().position(|x| *x == label).unwrap_or(99)
}

/// Table rows contributed by one BME run: (family, canSee label, agent label, row).
pub fn bme_run_rows(case: u8, r: &RunResult) -> Result<Vec<(Family, String, String, BmeRow)>, ClassifyError> {
    let naming = bme_naming(case);
    let o = classify::classify_bme(r)?;
    let attackers = classify::adversaries(r);
    let names = bme_names(&o, &attackers, naming);
    let cansee = match &o.step3_observers {
        None => "--".to_string(),
        Some(s) => fmt_set(&s.iter().map(|a| names.get(a).map(|n| n.0.clone()).unwrap_or(a.clone())).collect()),
    };
    let mut out = Vec::new();
    for (agent, row) in &o.rows {
        let mut label = names.get(agent).map(|n| n.1.clone()).unwrap_or(agent.clone());
        // with starred names the initiator's row depends on who was served first
        if naming == BmeNaming::Starred && !names.contains_key(agent) {
            if let Some(first) = o.served.first().filter(|f| f.as_str() != "E1") {
                label = format!("{agent} ({first}*)");
            }
        }
        out.push((o.family, cansee.clone(), label, row.clone()));
    }
    Ok(out)
}

fn bme_extended(case: u8) -> Result<Table, TableError> {
    let id = format!("bme.extended.case{case}");
    let ex = explore_preset(&format!("bme-case{case}"))?;
    let mut cells: BTreeMap<(Family, String, String), BmeRow> = BTreeMap::new();
    for r in &ex.runs {
        for (family, cansee, label, row) in bme_run_rows(case, r)? {
            let cell = format!("{family} {cansee} {label}");
            put(&id, &mut cells, (family, cansee, label), row, || cell)?;
        }
    }
    let mut keys: Vec<_> = cells.keys().cloned().collect();
    keys.sort_by_key(|(f, c, a)| (*f, cansee_order(c), agent_order(a), c.clone(), a.clone()));
    let rows = keys
        .into_iter()
        .map(|k| {
            let v = &cells[&k];
            vec![
                k.0.to_string(),
                k.1,
                k.2,
                v.result.clone(),
                v.belief.clone(),
                v.key.clone(),
                v.detection.clone(),
                v.guardian.clone(),
            ]
        })
        .collect();
    let header = ["trace", "cansee", "agent", "result", "belief", "key", "detection", "guardian"];
    Ok(Table { id, header: header.iter().map(|s| s.to_string()).collect(), rows })
}

// ---------------------------------------------------------------- guardians

const GUARDIAN_ROWS: [&str; 3] = ["{E,G}", "{G}", "{E}"];

/// Guardian id and the single other adversarial agent.
fn guardian_pair(r: &RunResult) -> Option<(AgentId, AgentId)> {
    let g = r.roles.iter().find(|(_, role)| **role == crate::strategies::Role::Guardian)?.0.clone();
    let e = classify::adversaries(r).into_iter().find(|a| *a != g)?;
    Some((g, e))
}

/// Which guardian-matrix rows a run contributes to.
fn guardian_rows(observers: Option<&BTreeSet<AgentId>>, g: &str, all: bool) -> Vec<&'static str> {
    match observers {
        Some(o) if !all && !o.is_empty() => {
            let has_g = o.contains(g);
            let has_e = o.iter().any(|x| x != g);
            vec![match (has_e, has_g) {
                (true, true) => "{E,G}",
                (false, true) => "{G}",
                _ => "{E}",
            }]
        }
        _ => GUARDIAN_ROWS.to_vec(),
    }
}

fn guardian_table(id: &str, header: &[&str], cols: Vec<BTreeMap<&'static str, String>>) -> Table {
    let rows = GUARDIAN_ROWS
        .iter()
        .map(|row| {
            let mut v = vec![row.to_string()];
            v.extend(cols.iter().map(|c| c.get(row).cloned().unwrap_or_default()));
            v
        })
        .collect();
    Table { id: id.into(), header: header.iter().map(|s| s.to_string()).collect(), rows }
}

/// Per-row verdict over (protected, listening) observations.
fn bme_verdict(obs: &[(bool, bool)]) -> String {
    let listening: Vec<bool> = obs.iter().filter(|(_, l)| *l).map(|(p, _)| *p).collect();
    if obs.iter().all(|(p, _)| *p) {
        "√"
    } else if !listening.is_empty() && listening.iter().all(|p| *p) {
        "∼+"
    } else if obs.iter().any(|(p, _)| *p) {
        "∼"
    } else {
        ""
    }
    .into()
}

fn guardian_bme_column(presets: &[String]) -> Result<BTreeMap<&'static str, String>, TableError> {
    let mut per_row: BTreeMap<&'static str, Vec<(bool, bool)>> = BTreeMap::new();
    for p in presets {
        for r in explore_preset(p)?.runs {
            let (g, e) = guardian_pair(&r).ok_or_else(|| ClassifyError::MissingAgent("guardian".into()))?;
            let o = classify::classify_bme(&r)?;
            let protected = o.a_flagged || o.rows[&e].result != "success";
            for row in guardian_rows(o.step3_observers.as_ref(), &g, false) {
                per_row.entry(row).or_default().push((protected, r.toggles.listen_after_step3));
            }
        }
    }
    Ok(per_row.into_iter().map(|(k, v)| (k, bme_verdict(&v))).collect())
}

fn both_guardians(cases: &[u8], proto: &str) -> Vec<String> {
    cases.iter().flat_map(|c| ["gE1", "gE2"].map(|g| format!("{proto}-case{c}-{g}"))).collect()
}

fn guardian_bme() -> Result<Table, TableError> {
    let cols = vec![
        guardian_bme_column(&both_guardians(&[1, 3, 4, 6], "bme"))?,
        guardian_bme_column(&both_guardians(&[2], "bme"))?,
        guardian_bme_column(&["bme-case5-gE2".into()])?,
        guardian_bme_column(&["bme-case5-gE1".into()])?,
    ];
    let header = ["cansee", "cases 1,3,4,6", "case 2", "case 5 (E dishonest to G)", "case 5 (G dishonest to E)"];
    Ok(guardian_table("guardian.bme", &header, cols))
}

fn sra3p_verdict(sec: &[&str]) -> String {
    if sec.iter().all(|s| matches!(*s, "restored" | "enforced")) {
        "√"
    } else if sec.iter().all(|s| *s == "uncertain E") {
        "∼+"
    } else if !sec.contains(&"compromised") {
        "∼"
    } else {
        ""
    }
    .into()
}

fn guardian_sra3p_column(
    presets: &[String],
    e_echoes_first_in: &[&str],
) -> Result<BTreeMap<&'static str, String>, TableError> {
    let mut per_row: BTreeMap<&'static str, Vec<&'static str>> = BTreeMap::new();
    for p in presets {
        for r in explore_preset(p)?.runs {
            let (g, e) = guardian_pair(&r).ok_or_else(|| ClassifyError::MissingAgent("guardian".into()))?;
            let o = classify::classify_sra3p(&r)?;
            if e_echoes_first_in.contains(&p.as_str()) && o.echo_order.first() != Some(&e) {
                continue;
            }
            let erow = &o.attackers[&e];
            let sec = classify::security(erow.result, o.a_aborted);
            for row in guardian_rows(o.mstar_observers.as_ref(), &g, erow.stopped) {
                per_row.entry(row).or_default().push(sec);
            }
        }
    }
    Ok(per_row.into_iter().map(|(k, v)| (k, sra3p_verdict(&v))).collect())
}

fn guardian_sra3p() -> Result<Table, TableError> {
    let mut col3 = vec!["sra3p-case1-gE2".to_string()];
    col3.extend([4, 5, 6].map(|c| format!("sra3p-case{c}-gE2")));
    let cols = vec![
        guardian_sra3p_column(&both_guardians(&[2], "sra3p"), &[])?,
        guardian_sra3p_column(&both_guardians(&[3], "sra3p"), &[])?,
        guardian_sra3p_column(&col3, &["sra3p-case1-gE2"])?,
        guardian_sra3p_column(&[4, 5, 6].map(|c| format!("sra3p-case{c}-gE1")), &[])?,
    ];
    let header = ["cansee", "case 2", "case 3", "cases 1,4,5,6 (E attentive to G)", "cases 4,5,6 (G attentive to E)"];
    Ok(guardian_table("guardian.sra3p", &header, cols))
}

// ---------------------------------------------------------------- SRA3P

/// Canonical renaming of the two attackers for an SRA3P case table.
fn sra3p_names(case: u8, o: &Sra3pOutcome) -> BTreeMap<AgentId, AgentId> {
    let ids: Vec<AgentId> = o.attackers.keys().cloned().collect();
    let first_name = match case {
        1 | 3 => Some("E1"),
        2 => Some("E2"),
        _ => None,
    };
    let mut m: BTreeMap<AgentId, AgentId> = ids.iter().map(|a| (a.clone(), a.clone())).collect();
    if let (Some(name), Some(first), 2) = (first_name, o.echo_order.first(), ids.len()) {
        if first != name {
            m.insert(ids[0].clone(), ids[1].clone());
            m.insert(ids[1].clone(), ids[0].clone());
        }
    }
    m
}

const SRA3P_FEATURES: [&str; 4] = ["Attack", "Detection", "Messages", "Result"];

fn sra3p_cells(case: u8, o: &Sra3pOutcome) -> (String, BTreeMap<(String, String), String>) {
    let names = sra3p_names(case, o);
    let by_name: BTreeMap<&AgentId, &classify::Sra3pAttackerRow> =
        o.attackers.iter().map(|(a, row)| (&names[a], row)).collect();
    let column = if by_name.get(&"E1".to_string()).is_some_and(|r| r.stopped) {
        "stops".to_string()
    } else {
        match &o.mstar_observers {
            Some(s) if !s.is_empty() => {
                fmt_set(&s.iter().map(|a| names.get(a).cloned().unwrap_or(a.clone())).collect())
            }
            _ => "--".to_string(),
        }
    };
    let mut cells = BTreeMap::new();
    for (name, row) in &by_name {
        let vals = [row.attack.clone(), row.detection.clone(), row.messages.clone(), row.result.label().to_string()];
        for (f, v) in SRA3P_FEATURES.iter().zip(vals) {
            cells.insert((name.to_string(), f.to_string()), v);
        }
    }
    cells.insert(("A".into(), "Result".into()), o.a_result().into());
    for (g, e) in [("E1", "E2"), ("E2", "E1")] {
        let (Some(grow), Some(erow)) = (by_name.get(&g.to_string()), by_name.get(&e.to_string())) else { continue };
        let gname = format!("G_{g}");
        cells.insert((gname.clone(), "Detection".into()), classify::guardian_detection(&grow.detection).into());
        cells.insert((gname, "Security".into()), classify::security(erow.result, o.a_aborted).into());
    }
    (column, cells)
}

fn sra3p_case(case: u8) -> Result<Table, TableError> {
    let id = format!("sra3p.case{case}");
    let ex = explore_preset(&format!("sra3p-case{case}"))?;
    let mut grid: BTreeMap<(String, String, String), String> = BTreeMap::new();
    let mut columns = BTreeSet::new();
    for r in &ex.runs {
        let o = classify::classify_sra3p(r)?;
        let (col, cells) = sra3p_cells(case, &o);
        columns.insert(col.clone());
        for ((agent, feat), v) in cells {
            let cell = format!("{agent} {feat} [{col}]");
            put(&id, &mut grid, (agent, feat, col.clone()), v, || cell)?;
        }
    }
    let mut columns: Vec<String> = columns.into_iter().collect();
    columns.sort_by_key(|c| cansee_order(c));
    let mut order: Vec<(String, String)> = Vec::new();
    for a in ["E1", "E2"] {
        order.extend(SRA3P_FEATURES.iter().map(|f| (a.to_string(), f.to_string())));
    }
    order.push(("A".into(), "Result".into()));
    for g in ["G_E1", "G_E2"] {
        order.push((g.into(), "Detection".into()));
        order.push((g.into(), "Security".into()));
    }
    let rows = order
        .into_iter()
        .map(|(a, f)| {
            let mut row = vec![a.clone(), f.clone()];
            row.extend(
                columns.iter().map(|c| grid.get(&(a.clone(), f.clone(), c.clone())).cloned().unwrap_or_default()),
            );
            row
        })
        .collect();
    let mut header = vec!["agent".to_string(), "feature".to_string()];
    header.extend(columns);
    Ok(Table { id, header, rows })
}

/// Results of a single classified SRA3P run, keyed by actual attacker id.
pub fn sra3p_results(r: &RunResult) -> Result<BTreeMap<AgentId, Sra3pResult>, ClassifyError> {
    Ok(classify::classify_sra3p(r)?.attackers.into_iter().map(|(a, row)| (a, row.result)).collect())
}

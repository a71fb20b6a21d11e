//! Rendering of tables and run records, and comparison with the bundled
//! golden fixtures.

use crate::classify::{classify_run, Outcome};
use crate::engine::{Choice, RunResult};
use crate::network::TraceEvent;
use crate::tables::Table;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            o => Err(format!("unknown format `{o}` (expected text, csv or json)")),
        }
    }
}

pub fn table_csv(t: &Table) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(&t.header).expect("in-memory write");
    for r in &t.rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub fn table_text(t: &Table) -> String {
    let ncol = t.header.len();
    let mut width = vec![0usize; ncol];
    for row in std::iter::once(&t.header).chain(&t.rows) {
        for (i, c) in row.iter().enumerate().take(ncol) {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let line = |row: &Vec<String>| {
        let cells: Vec<String> =
            row.iter().enumerate().map(|(i, c)| format!("{c}{}", " ".repeat(width[i] - c.chars().count()))).collect();
        format!("{}\n", cells.join("  ").trim_end())
    };
    let mut out = format!("{}\n", t.id);
    out += &line(&t.header);
    out += &format!("{}\n", width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in &t.rows {
        out += &line(r);
    }
    out
}

pub fn render_table(t: &Table, f: Format) -> String {
    match f {
        Format::Text => table_text(t),
        Format::Csv => table_csv(t),
        Format::Json => serde_json::to_string_pretty(t).expect("tables serialize") + "\n",
    }
}

/// One run in machine-readable form.
#[derive(Serialize)]
pub struct RunRecord<'a> {
    pub listen_after_step3: bool,
    pub stop_after_first: bool,
    pub choices: &'a [Choice],
    pub trace: &'a [TraceEvent],
    pub outcomes: Vec<Outcome>,
}

pub fn run_record<'a>(protocol: &str, r: &'a RunResult) -> RunRecord<'a> {
    RunRecord {
        listen_after_step3: r.toggles.listen_after_step3,
        stop_after_first: r.toggles.stop_after_first,
        choices: &r.choices,
        trace: &r.trace,
        outcomes: vec![classify_run(protocol, r)],
    }
}

pub fn render_runs(protocol: &str, runs: &[RunResult], f: Format) -> String {
    match f {
        Format::Json => {
            let recs: Vec<RunRecord> = runs.iter().map(|r| run_record(protocol, r)).collect();
            serde_json::to_string_pretty(&recs).expect("run records serialize") + "\n"
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
            let _ = w.write_record([
                "run", "listen", "stop", "index", "actor", "kind", "step", "sender", "message", "receiver", "cansee",
            ]);
            for (n, r) in runs.iter().enumerate() {
                for e in &r.trace {
                    let obs = e
                        .cansee
                        .as_ref()
                        .map(|c| format!("{{{}}}", c.observers.iter().cloned().collect::<Vec<_>>().join(",")))
                        .unwrap_or_else(|| "-".into());
                    let _ = w.write_record([
                        n.to_string(),
                        r.toggles.listen_after_step3.to_string(),
                        r.toggles.stop_after_first.to_string(),
                        e.index.to_string(),
                        e.actor.clone(),
                        e.kind.clone(),
                        e.step.clone(),
                        e.sender.to_string(),
                        e.message.to_string(),
                        e.receiver.clone(),
                        obs,
                    ]);
                }
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        }
        Format::Text => {
            let mut out = String::new();
            for (n, r) in runs.iter().enumerate() {
                out += &format!(
                    "run {n} (listen_after_step3={}, stop_after_first={})\n{}",
                    r.toggles.listen_after_step3,
                    r.toggles.stop_after_first,
                    r.rendered_trace()
                );
                out += &match classify_run(protocol, r) {
                    Outcome::Bme(o) => {
                        let mut s = format!("  family {}\n", o.family);
                        for (a, row) in &o.rows {
                            s += &format!(
                                "  {a}: result={} belief={} key={} detection={}\n",
                                row.result, row.belief, row.key, row.detection
                            );
                        }
                        s
                    }
                    Outcome::Sra3p(o) => {
                        let mut s = String::new();
                        for (a, row) in &o.attackers {
                            s += &format!(
                                "  {a}: attack={} detection={} messages={} result={}\n",
                                row.attack,
                                row.detection,
                                row.messages,
                                row.result.label()
                            );
                        }
                        s + &format!("  A: {}\n", o.a_result())
                    }
                    Outcome::Unclassified { reason } => format!("  unclassified: {reason}\n"),
                };
                out += "\n";
            }
            out
        }
    }
}

macro_rules! fixtures {
    ($($id:literal),* $(,)?) => {
        /// The bundled golden CSV for a table id.
        pub fn golden(id: &str) -> Option<&'static str> {
            match id {
                $($id => Some(include_str!(concat!("../fixtures/", $id, ".csv"))),)*
                _ => None,
            }
        }
    };
}

fixtures!(
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
);

/// Drops `#` provenance lines from a fixture.
pub fn strip_comments(src: &str) -> String {
    src.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diff {
    pub id: String,
    pub expected_lines: usize,
    pub actual_lines: usize,
    /// `-expected` / `+actual` pairs for every line that differs.
    pub mismatches: Vec<String>,
}

impl Diff {
    pub fn is_match(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.is_match() {
            format!("{}: ok ({} lines)", self.id, self.actual_lines)
        } else {
            let mut s = format!("{}: MISMATCH ({} differing lines)\n", self.id, self.mismatches.len() / 2);
            for m in &self.mismatches {
                s += &format!("    {m}\n");
            }
            s.trim_end().to_string()
        }
    }
}

/// Line-by-line comparison of `actual` CSV against a fixture.
pub fn diff_csv(id: &str, expected: &str, actual: &str) -> Diff {
    let exp: Vec<&str> = expected.lines().collect();
    let act: Vec<&str> = actual.lines().collect();
    let mut mismatches = Vec::new();
    for i in 0..exp.len().max(act.len()) {
        let (e, a) = (exp.get(i), act.get(i));
        if e != a {
            mismatches.push(format!("-{}", e.unwrap_or(&"<missing>")));
            mismatches.push(format!("+{}", a.unwrap_or(&"<missing>")));
        }
    }
    Diff { id: id.into(), expected_lines: exp.len(), actual_lines: act.len(), mismatches }
}

/// Compares a built table with its golden fixture, byte for byte.
pub fn verify_table(t: &Table) -> Option<Diff> {
    let expected = strip_comments(golden(&t.id)?);
    Some(diff_csv(&t.id, &expected, &table_csv(t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_id_has_a_fixture() {
        for id in crate::tables::TABLE_IDS {
            assert!(golden(id).is_some(), "{id}");
        }
    }

    #[test]
    fn csv_quotes_only_cells_with_commas() {
        let t = Table {
            id: "x".into(),
            header: vec!["a".into(), "b".into()],
            rows: vec![vec!["{E1,E2}".into(), "".into()]],
        };
        assert_eq!(table_csv(&t), "a,b\n\"{E1,E2}\",\n");
    }

    #[test]
    fn diff_reports_changed_lines() {
        let d = diff_csv("x", "a\nb\n", "a\nc\n");
        assert_eq!(d.mismatches, vec!["-b".to_string(), "+c".to_string()]);
        assert!(diff_csv("x", "a\n", "a\n").is_match());
    }
}

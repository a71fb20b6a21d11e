//! Command-line driver. Kept as a library so tests can call [`run_cli`]
//! in-process and inspect the exit code and output.

use clap::{Args, Parser, Subcommand};
use dysim_core::engine::{EngineError, World};
use dysim_core::explorer::{explore_with, with_jobs};
use dysim_core::network::ScriptedChoice;
use dysim_core::report::{render_runs, render_table, verify_table, Format};
use dysim_core::scenario::{parse_cansee, preset, Scenario, ScenarioError};
use dysim_core::strategies::ToggleValues;
use dysim_core::tables::{build_table, TableError, TABLE_IDS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "dysim", version, about = "Symbolic simulator for protocol runs with competing Dolev-Yao attackers")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, default_value = "text", value_parser = parse_format)]
    pub format: Format,
    /// Worker threads for exploration (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Follow a single branch, picking options by index at each branch point.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated option indices for successive branch points (default: always 0).
        #[arg(long, value_delimiter = ',')]
        choose: Vec<usize>,
        /// Value of the listen-after-step-3 toggle for this run.
        #[arg(long)]
        listen_after_step3: Option<bool>,
        /// Value of the stop-after-first toggle for this run.
        #[arg(long)]
        stop_after_first: Option<bool>,
    },
    /// Enumerate every run of a scenario.
    Explore {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Print one result table.
    Table {
        /// Table id, e.g. `guardian.bme` or `sra3p.case2`.
        id: String,
    },
    /// Rebuild every table and compare it with the bundled fixture.
    Verify,
    /// List preset and table names.
    List,
}

#[derive(Args, Debug, Default)]
pub struct ScenarioArgs {
    /// Scenario file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub scenario: Option<std::path::PathBuf>,
    /// Built-in case preset, e.g. `bme-case3` or `sra3p-case1-gE2`.
    #[arg(long)]
    pub preset: Option<String>,
    /// canSee override `STEP=POLICY` (policy: all, enumerate, ids, or `ids erased-by ID`). Repeatable.
    #[arg(long)]
    pub cansee: Vec<String>,
    /// Maximum number of network actions per run.
    #[arg(long)]
    pub budget: Option<u32>,
    /// Namespace for fresh values.
    #[arg(long)]
    pub seed_namespace: Option<String>,
}

/// Outcome of one invocation.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { code: EXIT_OK, stdout, stderr: String::new() }
    }
    fn fail(code: i32, msg: impl std::fmt::Display) -> Self {
        Outcome { code, stdout: String::new(), stderr: format!("error: {msg}\n") }
    }
}

enum Failure {
    Usage(String),
    Engine(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Engine(e.to_string())
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        match e {
            TableError::Unknown(_) | TableError::Scenario(_) => Failure::Usage(e.to_string()),
            _ => Failure::Engine(e.to_string()),
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    let mut sc = match (&args.preset, &args.scenario) {
        (Some(p), _) => preset(p)?,
        (None, Some(path)) => {
            let src = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            Scenario::parse(&src).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(Failure::Usage("one of --scenario or --preset is required".into())),
    };
    for spec in &args.cansee {
        let (step, pol) = spec
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--cansee expects STEP=POLICY, got `{spec}`")))?;
        sc.cansee.insert(step.trim().into(), parse_cansee(pol));
    }
    if let Some(b) = args.budget {
        sc.budget = b;
    }
    if let Some(ns) = &args.seed_namespace {
        sc.fresh_ns = ns.clone();
    }
    sc.validate()?;
    Ok(sc)
}

fn dispatch(cli: &Cli) -> Result<Outcome, Failure> {
    let fmt = cli.format;
    match &cli.command {
        Command::Run { scenario, choose, listen_after_step3, stop_after_first } => {
            let sc = load(scenario)?;
            let mut tv: ToggleValues = sc.toggle_values()[0];
            if let Some(l) = listen_after_step3 {
                tv.listen_after_step3 = *l;
            }
            if let Some(s) = stop_after_first {
                tv.stop_after_first = *s;
            }
            let world = World::new(&sc, &tv)?;
            let r = world.run(&mut ScriptedChoice { script: choose.clone(), pos: 0 })?;
            Ok(Outcome::ok(render_runs(&sc.protocol, &[r], fmt)))
        }
        Command::Explore { scenario } => {
            let sc = load(scenario)?;
            let ex = with_jobs(cli.jobs, || explore_with(&sc, &sc.toggle_values()))?;
            Ok(Outcome::ok(render_runs(&sc.protocol, &ex.runs, fmt)))
        }
        Command::Table { id } => {
            let t = with_jobs(cli.jobs, || build_table(id))?;
            Ok(Outcome::ok(render_table(&t, fmt)))
        }
        Command::Verify => {
            let mut out = String::new();
            let mut all = true;
            for id in TABLE_IDS {
                let t = with_jobs(cli.jobs, || build_table(id))?;
                let d = verify_table(&t).ok_or_else(|| Failure::Engine(format!("no fixture for {id}")))?;
                all &= d.is_match();
                out += &d.summary();
                out.push('\n');
            }
            out += if all { "all tables match\n" } else { "some tables differ\n" };
            Ok(Outcome { code: if all { EXIT_OK } else { EXIT_MISMATCH }, stdout: out, stderr: String::new() })
        }
        Command::List => {
            let mut out = String::from("presets:\n");
            for p in dysim_core::scenario::preset_names() {
                out += &format!("  {p}\n");
            }
            out += "tables:\n";
            for t in TABLE_IDS {
                out += &format!("  {t}\n");
            }
            Ok(Outcome::ok(out))
        }
    }
}

/// Parses `argv` (including the program name) and executes it.
pub fn run_cli<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome::ok(text)
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    match dispatch(&cli) {
        Ok(o) => o,
        Err(Failure::Usage(m)) => Outcome::fail(EXIT_USAGE, m),
        Err(Failure::Engine(m)) => Outcome::fail(EXIT_ENGINE, m),
    }
}

//! Exhaustive exploration of every handler branch.
//!
//! The explorer clones the [`World`] at each branch point and follows every
//! admissible option to quiescence. Toggle combinations are fanned out up
//! front. Results are deduplicated by rendered trace and sorted, so the
//! output does not depend on the number of worker threads.

use crate::engine::{EngineError, RunResult, World};
use crate::scenario::Scenario;
use crate::strategies::ToggleValues;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exploration {
    pub runs: Vec<RunResult>,
}

fn dfs(mut w: World, out: &mut Vec<RunResult>) -> Result<(), EngineError> {
    loop {
        let opts = w.options()?;
        match opts.len() {
            0 => {
                if w.quiesce()? {
                    continue;
                }
                out.push(w.result());
                return Ok(());
            }
            1 => w.apply(&opts[0])?,
            _ => {
                for i in 0..opts.len() - 1 {
                    let mut branch = w.clone();
                    branch.choose(&opts, i)?;
                    dfs(branch, out)?;
                }
                w.choose(&opts, opts.len() - 1)?;
            }
        }
    }
}

/// Splits the search at the first branch point so the subtrees can run in
/// parallel.
fn frontier(mut w: World) -> Result<Vec<World>, EngineError> {
    loop {
        let opts = w.options()?;
        match opts.len() {
            0 => {
                if w.quiesce()? {
                    continue;
                }
                return Ok(vec![w]);
            }
            1 => w.apply(&opts[0])?,
            _ => {
                return opts
                    .iter()
                    .enumerate()
                    .map(|(i, _)| {
                        let mut b = w.clone();
                        b.choose(&opts, i)?;
                        Ok(b)
                    })
                    .collect()
            }
        }
    }
}

fn run_key(r: &RunResult) -> (bool, bool, String) {
    (r.toggles.listen_after_step3, r.toggles.stop_after_first, r.rendered_trace())
}

/// Explores every run of `sc` under every toggle combination.
pub fn explore(sc: &Scenario) -> Result<Exploration, EngineError> {
    explore_with(sc, &sc.toggle_values())
}

pub fn explore_with(sc: &Scenario, toggles: &[ToggleValues]) -> Result<Exploration, EngineError> {
    let mut roots = Vec::new();
    for tv in toggles {
        let w = World::new(sc, tv)?;
        if w.is_finished() {
            roots.push(w);
        } else {
            roots.extend(frontier(w)?);
        }
    }
    let chunks: Vec<Vec<RunResult>> = roots
        .into_par_iter()
        .map(|w| {
            let mut out = Vec::new();
            if w.is_finished() {
                out.push(w.result());
            } else {
                dfs(w, &mut out)?;
            }
            Ok(out)
        })
        .collect::<Result<_, EngineError>>()?;
    let mut unique: BTreeMap<(bool, bool, String), RunResult> = BTreeMap::new();
    for r in chunks.into_iter().flatten() {
        unique.entry(run_key(&r)).or_insert(r);
    }
    Ok(Exploration { runs: unique.into_values().collect() })
}

/// Runs `f` on a dedicated pool with `jobs` threads (0 means rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

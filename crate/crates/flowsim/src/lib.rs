//! Scenario-driven driver for flowsim: configuration, verification suites and
//! CSV reports. The `flowsim` binary is a thin clap front end over [`run`].
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod report;
pub mod scenario;
pub mod suites;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use flowsim_core::cbi_flow::simulate_cbi_flow;
use flowsim_core::fv_flow::simulate_fv_flow;
use flowsim_core::parallel::run_replicas;

pub use error::{CliError, Result};

use config::RawConfig;
use scenario::{Kind, Scenario};
use suites::{run_suite, Suite};

/// Environment variable that replaces the scenario seed.
pub const SEED_ENV: &str = "FLOWSIM_SEED";

#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub scenario: PathBuf,
    /// `key=value` overrides, applied after [`SEED_ENV`].
    pub sets: Vec<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Loaded scenario plus the override note for the CSV comment line.
pub struct Loaded {
    pub scenario: Scenario,
    pub note: Option<String>,
}

pub fn load(inv: &Invocation, env_seed: Option<&str>) -> Result<Loaded> {
    let mut raw = RawConfig::load(&inv.scenario)?;
    let mut notes = Vec::new();
    if let Some(seed) = env_seed {
        let seed = seed.trim();
        seed.parse::<u64>()
            .map_err(|e| CliError::Config(format!("{SEED_ENV}: bad seed `{seed}`: {e}")))?;
        raw.set("seed", seed);
        notes.push(format!("seed={seed} ({SEED_ENV})"));
    }
    for s in &inv.sets {
        let (k, v) = raw.apply_override(s)?;
        notes.push(format!("{k}={v} (--set)"));
    }
    let scenario = Scenario::from_config(&raw)?;
    let note = (!notes.is_empty()).then(|| format!("overrides: {}", notes.join("; ")));
    Ok(Loaded { scenario, note })
}

fn output(inv: &Invocation, sc: &Scenario) -> Result<Box<dyn Write>> {
    match inv.out.as_ref().or(sc.out.as_ref()) {
        Some(path) => {
            let f = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

/// Runs every suite named by the scenario's `check` keys and writes the
/// report. Returns whether every row passed.
pub fn verify(inv: &Invocation, env_seed: Option<&str>) -> Result<bool> {
    let Loaded { scenario: sc, note } = load(inv, env_seed)?;
    if sc.checks.is_empty() {
        return Err(CliError::Config("no `check` keys: nothing to verify".into()));
    }
    let mut rows = Vec::new();
    for &suite in &sc.checks {
        for row in run_suite(suite, &sc, inv.workers)? {
            eprintln!(
                "{:<16} {:<6} {}",
                suite.name(),
                if row.pass { "pass" } else { "FAIL" },
                row.check
            );
            rows.push((suite.name().to_string(), row));
        }
    }
    report::write_report(output(inv, &sc)?, &rows, note.as_deref())?;
    Ok(rows.iter().all(|(_, r)| r.pass))
}

/// Writes sample paths at the scenario's output times.
pub fn simulate(inv: &Invocation, env_seed: Option<&str>) -> Result<()> {
    let Loaded { scenario: sc, note } = load(inv, env_seed)?;
    let init = sc.initial_state()?;
    let rc = sc.run_config(sc.dt);
    let paths = match sc.kind {
        Kind::Cbi => {
            let params = sc.cbi_params()?;
            run_replicas(sc.replicas, inv.workers, |r| {
                simulate_cbi_flow(&params, &init, &rc, sc.mode, sc.seed, r)
            })?
        }
        Kind::Fv => {
            let params = sc.fv_params()?;
            run_replicas(sc.replicas, inv.workers, |r| {
                simulate_fv_flow(&params, &init, &rc, sc.seed, r)
            })?
        }
        Kind::Scaling => return Err(CliError::Usage("simulate supports kind = cbi or fv".into())),
    };
    report::write_paths(output(inv, &sc)?, &paths, note.as_deref())
}

pub fn list_checks() -> String {
    Suite::ALL
        .iter()
        .map(|s| format!("{:<16} {}\n", s.name(), s.description()))
        .collect()
}

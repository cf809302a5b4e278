//! Typed scenarios built from a [`RawConfig`].

use std::path::PathBuf;

use flowsim_core::cbi_flow::{CbiMode, CbiParams};
use flowsim_core::fv_flow::FvParams;
use flowsim_core::grid::{GridState, RunConfig, StepFunction};
use flowsim_core::mechanisms::{BranchingMechanism, ImmigrationFunction, JumpMeasure, LabelDomain, PowerPart};
use flowsim_core::scaling::{ScalingFamily, ScalingRun};

use crate::config::RawConfig;
use crate::error::{CliError, Result};
use crate::suites::Suite;

const KNOWN_KEYS: &[&str] = &[
    "kind",
    "sigma",
    "b",
    "atom",
    "power",
    "gamma_knot",
    "eta_knot",
    "window",
    "label",
    "x0",
    "horizon",
    "dt",
    "eps",
    "replicas",
    "seed",
    "output_time",
    "check",
    "out",
    "moment_order",
    "lambda",
    "allowance",
    "delta",
    "residual_time",
    "restart_time",
    "indicator",
    "inverse_grid",
    "inverse_point",
    "inverse_replicas",
    "k",
    "mode",
];

/// Largest Laplace argument accepted by scenarios.
pub const MAX_LAMBDA: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Cbi,
    Fv,
    Scaling,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Cbi => "cbi",
            Kind::Fv => "fv",
            Kind::Scaling => "scaling",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: Kind,
    pub sigma: f64,
    pub b: f64,
    pub jumps: JumpMeasure,
    pub gamma_knots: Vec<(f64, f64)>,
    pub eta_knots: Vec<(f64, f64)>,
    pub window: f64,
    pub labels: Vec<f64>,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub eps: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub output_times: Vec<f64>,
    pub checks: Vec<Suite>,
    pub out: Option<PathBuf>,
    pub moment_order: usize,
    pub lambdas: Vec<f64>,
    /// Discretization allowance per unit of `dt`.
    pub allowance: f64,
    pub delta: f64,
    pub residual_time: f64,
    pub restart_time: f64,
    pub indicator: (f64, f64),
    pub inverse_grid: usize,
    pub inverse_points: Vec<f64>,
    pub inverse_replicas: usize,
    pub ks: Vec<u32>,
    pub mode: CbiMode,
}

fn field<T>(key: &str, r: flowsim_core::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn pairs(rows: Vec<Vec<f64>>) -> Vec<(f64, f64)> {
    rows.into_iter().map(|r| (r[0], r[1])).collect()
}

impl Scenario {
    pub fn from_config(c: &RawConfig) -> Result<Self> {
        for e in c.entries() {
            if !KNOWN_KEYS.contains(&e.key.as_str()) {
                return Err(CliError::Config(format!("{}: unknown key `{}`", e.origin, e.key)));
            }
        }
        let kind = match c.require::<String>("kind")?.as_str() {
            "cbi" => Kind::Cbi,
            "fv" => Kind::Fv,
            "scaling" => Kind::Scaling,
            other => {
                return Err(CliError::Config(format!(
                    "kind: expected cbi, fv or scaling, got `{other}`"
                )))
            }
        };
        let horizon: f64 = c.require("horizon")?;
        let dt: f64 = c.require("dt")?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Config(format!("dt: must be positive, got {dt}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(CliError::Config(format!("horizon: must be >= 0, got {horizon}")));
        }
        let eps =
            match c.get::<String>("eps")?.as_deref() {
                None | Some("auto") => None,
                Some(s) => Some(s.parse::<f64>().ok().filter(|e| *e > 0.0).ok_or_else(|| {
                    CliError::Config(format!("eps: expected `auto` or a positive number, got `{s}`"))
                })?),
            };
        let power = c.tuples("power", 3)?;
        if power.len() > 1 {
            return Err(CliError::Config("power: at most one power-law part".into()));
        }
        let power = power.first().map(|p| PowerPart {
            coeff: p[0],
            exponent: p[1],
            cutoff: p[2],
        });
        let jumps = field("atom/power", JumpMeasure::new(pairs(c.tuples("atom", 2)?), power))?;
        let labels: Vec<f64> = c.list("label")?;
        let mut x0: Vec<f64> = c.list("x0")?;
        if x0.is_empty() {
            x0 = labels.clone();
        }
        if x0.len() != labels.len() {
            return Err(CliError::Config(format!(
                "x0: {} values for {} labels",
                x0.len(),
                labels.len()
            )));
        }
        let replicas: usize = c.get_or("replicas", 1000)?;
        if replicas < 1 {
            return Err(CliError::Config("replicas: must be >= 1".into()));
        }
        let checks = c
            .list::<String>("check")?
            .iter()
            .map(|name| Suite::parse(name).ok_or_else(|| CliError::Config(format!("check: unknown suite `{name}`"))))
            .collect::<Result<Vec<_>>>()?;
        let indicator = match c.tuples("indicator", 2)?.as_slice() {
            [] => (0.0, labels.last().copied().unwrap_or(1.0)),
            [r] => (r[0], r[1]),
            _ => return Err(CliError::Config("indicator: given more than once".into())),
        };
        let mode = match c.get::<String>("mode")?.as_deref() {
            None | Some("coupled") => CbiMode::Coupled,
            Some("increments") => CbiMode::IndependentIncrements,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "mode: expected coupled or increments, got `{other}`"
                )))
            }
        };
        let s = Self {
            kind,
            sigma: c.get_or("sigma", 0.0)?,
            b: c.get_or("b", 0.0)?,
            jumps,
            gamma_knots: pairs(c.tuples("gamma_knot", 2)?),
            eta_knots: pairs(c.tuples("eta_knot", 2)?),
            window: c.get_or("window", 1.0)?,
            labels,
            x0,
            horizon,
            dt,
            eps,
            replicas,
            seed: c.get_or("seed", 0)?,
            output_times: c.list("output_time")?,
            checks,
            out: c.get::<String>("out")?.map(PathBuf::from),
            moment_order: c.get_or("moment_order", 3)?,
            lambdas: c.list("lambda")?,
            allowance: c.get_or("allowance", 1.0)?,
            delta: c.get_or("delta", 1e-2)?,
            residual_time: c.get_or("residual_time", 0.0)?,
            restart_time: c.get_or("restart_time", horizon / 2.0)?,
            indicator,
            inverse_grid: c.get_or("inverse_grid", 1025)?,
            inverse_points: c.list("inverse_point")?,
            inverse_replicas: c.get_or("inverse_replicas", replicas)?,
            ks: c.list("k")?,
            mode,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.allowance >= 0.0) {
            return Err(CliError::Config("allowance: must be >= 0".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=MAX_LAMBDA).contains(*l)) {
            return Err(CliError::Config(format!("lambda: must lie in [0, {MAX_LAMBDA}], got {l}")));
        }
        match self.kind {
            Kind::Cbi => {
                self.cbi_params()?;
            }
            Kind::Fv => {
                self.fv_params()?;
            }
            Kind::Scaling => {
                self.scaling_family()?;
            }
        }
        if self.labels.is_empty() {
            return Err(CliError::Config("label: at least one label is required".into()));
        }
        field("label/x0", self.initial_state().map(|_| ()))?;
        field("output_time", self.run_config(self.dt).schedule().map(|_| ()))?;
        if !(self.delta > 0.0) {
            return Err(CliError::Config("delta: must be positive".into()));
        }
        Ok(())
    }

    pub fn mechanism(&self) -> Result<BranchingMechanism> {
        field(
            "sigma/b/atom",
            BranchingMechanism::new(self.sigma, self.b, self.jumps.clone()),
        )
    }

    fn immigration(&self, knots: &[(f64, f64)], domain: LabelDomain, key: &str) -> Result<ImmigrationFunction> {
        if knots.is_empty() {
            return field(key, ImmigrationFunction::constant(0.0, domain));
        }
        field(key, ImmigrationFunction::new(knots.to_vec(), domain))
    }

    pub fn cbi_params(&self) -> Result<CbiParams> {
        let gamma = self.immigration(&self.gamma_knots, LabelDomain::HalfLine, "gamma_knot")?;
        Ok(CbiParams::new(self.mechanism()?, gamma))
    }

    pub fn fv_params(&self) -> Result<FvParams> {
        let gamma = self.immigration(&self.gamma_knots, LabelDomain::UnitInterval, "gamma_knot")?;
        field(
            "sigma/b/atom/gamma_knot",
            FvParams::new(self.sigma, self.b, gamma, self.jumps.clone()),
        )
    }

    pub fn scaling_family(&self) -> Result<ScalingFamily> {
        let eta = self.immigration(&self.eta_knots, LabelDomain::HalfLine, "eta_knot")?;
        field(
            "k/window",
            ScalingFamily::new(self.mechanism()?, eta, self.window, self.ks.clone()),
        )
    }

    pub fn scaling_run(&self, dt: f64) -> ScalingRun {
        ScalingRun {
            labels: self.labels.clone(),
            horizon: self.horizon,
            dt,
            eps: self.eps,
            replicas: self.replicas,
            seed: self.seed,
            allowance: self.allowance * dt,
        }
    }

    pub fn initial_state(&self) -> flowsim_core::Result<GridState> {
        GridState::new(self.labels.clone().into(), self.x0.clone())
    }

    pub fn run_config(&self, dt: f64) -> RunConfig {
        RunConfig::new(self.horizon, dt)
            .with_eps(self.eps)
            .with_outputs(self.output_times.clone())
    }

    /// Test function of the martingale suite; an interval starting at 0
    /// includes the origin.
    pub fn indicator_function(&self) -> Result<StepFunction> {
        let (lo, hi) = self.indicator;
        let f = if lo == 0.0 {
            StepFunction::closed_indicator(hi)
        } else {
            StepFunction::indicator(lo, hi)
        };
        field("indicator", f)
    }
}

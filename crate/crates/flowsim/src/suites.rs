//! Verification suites. Each suite turns a scenario into report rows; rows
//! that carry a discretization allowance get the `dt/2` refinement escape.

use std::sync::Arc;

use flowsim_core::cbi_flow::{cbi_generator, cbi_moment_ode, simulate_cbi_flow, CbiMode, CbiParams};
use flowsim_core::coalescent::duality_moment;
use flowsim_core::fv_flow::{
    fv_generator, fv_jump_value, fv_mean, fv_moment_ode, fv_moment_ode_from, invert_flow_interpolated,
    simulate_fv_flow, FvParams,
};
use flowsim_core::grid::{martingale_residual, GridState, Polynomial, RunConfig};
use flowsim_core::laplace::{cbi_laplace, cbi_mean};
use flowsim_core::mechanisms::{ImmigrationFunction, LabelDomain};
use flowsim_core::noise::{derive_substream, Channel};
use flowsim_core::parallel::run_replicas;
use flowsim_core::scaling::scaling_report;
use flowsim_core::stats::{
    correlation, ks_two_sample, mc_estimate, refinement_shrinks, CheckRow, DEFAULT_KS_ALPHA, DEFAULT_K_SIGMA,
    REFINEMENT_SHRINK,
};

use crate::error::{CliError, Result};
use crate::scenario::{Kind, Scenario};

/// Tolerance of the deterministic duality identity.
pub const DUALITY_TOL: f64 = 1e-8;
/// Random cases drawn by the jump-map invariant check.
pub const JUMP_MAP_CASES: usize = 1_000_000;

const INDEPENDENT_SALT: u64 = 0x1d3e_0000_0000_0001;
const RESTART_FIRST_SALT: u64 = 0x7e57_0000_0000_0001;
const RESTART_SECOND_SALT: u64 = 0x7e57_0000_0000_0002;
const JUMP_MAP_SALT: u64 = 0x1a3b_0000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Duality,
    Laplace,
    MomentsCbi,
    MomentsFv,
    FlowProperties,
    Generator,
    Martingale,
    Scaling,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Duality,
        Suite::Laplace,
        Suite::MomentsCbi,
        Suite::MomentsFv,
        Suite::FlowProperties,
        Suite::Generator,
        Suite::Martingale,
        Suite::Scaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Duality => "duality",
            Suite::Laplace => "laplace",
            Suite::MomentsCbi => "moments-cbi",
            Suite::MomentsFv => "moments-fv",
            Suite::FlowProperties => "flow-properties",
            Suite::Generator => "generator",
            Suite::Martingale => "martingale",
            Suite::Scaling => "scaling",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Suite::Duality => "fv: moment equations vs block-counting chain, |diff| <= 1e-8 (b = 0)",
            Suite::Laplace => "cbi: empirical E[exp(-lambda Y_T)] vs the cumulant ODE",
            Suite::MomentsCbi => "cbi: empirical moments vs closed mean and moment equations",
            Suite::MomentsFv => "fv: empirical moments vs closed mean and moment equations",
            Suite::FlowProperties => "cbi|fv: exact order/range counts, independence, restart KS, jump map",
            Suite::Generator => "fv: one-step covariance and inverse-flow drift (no jumps for the drift)",
            Suite::Martingale => "cbi|fv: martingale residual of G(<X,f>) = <X,f>^2",
            Suite::Scaling => "scaling: rescaled Fleming-Viot flows vs the limiting CBI flow",
        }
    }

    fn kinds(self) -> &'static [Kind] {
        match self {
            Suite::Duality | Suite::MomentsFv | Suite::Generator => &[Kind::Fv],
            Suite::Laplace | Suite::MomentsCbi => &[Kind::Cbi],
            Suite::FlowProperties | Suite::Martingale => &[Kind::Cbi, Kind::Fv],
            Suite::Scaling => &[Kind::Scaling],
        }
    }
}

struct SuiteRow {
    row: CheckRow,
    /// Carries a `dt` allowance and may be rescued by refinement.
    refinable: bool,
}

fn fixed(row: CheckRow) -> SuiteRow {
    SuiteRow { row, refinable: false }
}

fn refinable(row: CheckRow) -> SuiteRow {
    SuiteRow { row, refinable: true }
}

/// Runs `suite` on `sc`. A failing row with an allowance is re-evaluated at
/// `dt/2`; it passes iff its defect shrinks by [`REFINEMENT_SHRINK`], and a
/// `refine[...]` row records the comparison.
pub fn run_suite(suite: Suite, sc: &Scenario, workers: Option<usize>) -> Result<Vec<CheckRow>> {
    if !suite.kinds().contains(&sc.kind) {
        return Err(CliError::Config(format!(
            "check `{}` does not apply to kind `{}`",
            suite.name(),
            sc.kind.name()
        )));
    }
    let rows = evaluate(suite, sc, workers, sc.dt)?;
    if !rows.iter().any(|r| r.refinable && !r.row.pass) {
        return Ok(rows.into_iter().map(|r| r.row).collect());
    }
    let half = evaluate(suite, sc, workers, sc.dt / 2.0)?;
    let mut out = Vec::with_capacity(rows.len());
    for (r, h) in rows.into_iter().zip(half) {
        let mut row = r.row;
        if r.refinable && !row.pass {
            let defect = (row.statistic - row.target).abs();
            let defect_half = (h.row.statistic - h.row.target).abs();
            row.pass = refinement_shrinks(defect, defect_half);
            let check = format!("refine[{}]", row.check);
            out.push(row);
            out.push(CheckRow::at_most(
                check,
                defect_half,
                defect / REFINEMENT_SHRINK,
                h.row.stderr,
                0.0,
            ));
        } else {
            out.push(row);
        }
    }
    Ok(out)
}

fn evaluate(suite: Suite, sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    match suite {
        Suite::Duality => duality(sc),
        Suite::Laplace => laplace(sc, workers, dt),
        Suite::MomentsCbi => moments_cbi(sc, workers, dt),
        Suite::MomentsFv => moments_fv(sc, workers, dt),
        Suite::FlowProperties => flow_properties(sc, workers, dt),
        Suite::Generator => generator(sc, workers, dt),
        Suite::Martingale => martingale(sc, workers, dt),
        Suite::Scaling => scaling(sc, workers, dt),
    }
}

/// Output times of the scenario, or the horizon alone.
fn times(sc: &Scenario) -> Vec<f64> {
    if sc.output_times.is_empty() {
        vec![sc.horizon]
    } else {
        sc.output_times.clone()
    }
}

type Paths = Vec<Vec<GridState>>;

fn cbi_paths(
    params: &CbiParams,
    init: &GridState,
    rc: &RunConfig,
    mode: CbiMode,
    seed: u64,
    replicas: usize,
    workers: Option<usize>,
) -> Result<Paths> {
    Ok(run_replicas(replicas, workers, |r| {
        simulate_cbi_flow(params, init, rc, mode, seed, r)
    })?)
}

fn fv_paths(
    params: &FvParams,
    init: &GridState,
    rc: &RunConfig,
    seed: u64,
    replicas: usize,
    workers: Option<usize>,
) -> Result<Paths> {
    Ok(run_replicas(replicas, workers, |r| {
        simulate_fv_flow(params, init, rc, seed, r)
    })?)
}

fn column(paths: &Paths, out: usize, label: usize) -> Vec<f64> {
    paths.iter().map(|p| p[out].values[label]).collect()
}

fn duality(sc: &Scenario) -> Result<Vec<SuiteRow>> {
    let params = sc.fv_params()?;
    if params.b != 0.0 {
        return Err(CliError::Config("duality: the identity needs b = 0".into()));
    }
    let mut rows = Vec::new();
    for &v in &sc.labels {
        for &t in &times(sc) {
            let moments = fv_moment_ode(&params, v, sc.moment_order, t)?;
            for (p, &m) in moments.iter().enumerate().skip(1) {
                let dual = duality_moment(params.sigma, &params.nu, v, p, t)?;
                let name = format!("duality[v={v},p={p},t={t}]");
                rows.push(fixed(CheckRow::within(name, m, dual, 0.0, DUALITY_TOL)));
            }
        }
    }
    Ok(rows)
}

fn laplace(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let params = sc.cbi_params()?;
    let paths = cbi_paths(
        &params,
        &sc.initial_state()?,
        &sc.run_config(dt),
        sc.mode,
        sc.seed,
        sc.replicas,
        workers,
    )?;
    let mut rows = Vec::new();
    for (o, &t) in times(sc).iter().enumerate() {
        for (i, &v) in sc.labels.iter().enumerate() {
            let ys = column(&paths, o, i);
            let beta = params.gamma.eval(v);
            for &lambda in &sc.lambdas {
                let samples: Vec<f64> = ys.iter().map(|y| (-lambda * y).exp()).collect();
                let est = mc_estimate(&samples)?;
                let target = cbi_laplace(&params.mech, beta, sc.x0[i], lambda, t)?;
                let name = format!("laplace[v={v},lambda={lambda},t={t}]");
                rows.push(refinable(CheckRow::estimate(
                    name,
                    &est,
                    target,
                    DEFAULT_K_SIGMA,
                    sc.allowance * dt,
                )));
            }
        }
    }
    Ok(rows)
}

/// Moment rows: `p = 1` against `mean`, higher orders against `moments[p]`,
/// with allowance `C·dt·max(1, |target|)`.
fn moment_rows(rows: &mut Vec<SuiteRow>, tag: &str, ys: &[f64], mean: f64, moments: &[f64], c_dt: f64) -> Result<()> {
    for (p, &m) in moments.iter().enumerate().skip(1) {
        let target = if p == 1 { mean } else { m };
        let samples: Vec<f64> = ys.iter().map(|y| y.powi(p as i32)).collect();
        let est = mc_estimate(&samples)?;
        let name = format!("moment[{tag},p={p}]");
        rows.push(refinable(CheckRow::estimate(
            name,
            &est,
            target,
            DEFAULT_K_SIGMA,
            c_dt * target.abs().max(1.0),
        )));
    }
    Ok(())
}

fn moments_cbi(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let params = sc.cbi_params()?;
    let paths = cbi_paths(
        &params,
        &sc.initial_state()?,
        &sc.run_config(dt),
        sc.mode,
        sc.seed,
        sc.replicas,
        workers,
    )?;
    let mut rows = Vec::new();
    for (o, &t) in times(sc).iter().enumerate() {
        for (i, &v) in sc.labels.iter().enumerate() {
            let beta = params.gamma.eval(v);
            let (x0, ys) = (sc.x0[i], column(&paths, o, i));
            let mean = cbi_mean(&params.mech, beta, x0, t);
            let moments = cbi_moment_ode(&params.mech, beta, x0, sc.moment_order, t)?;
            moment_rows(
                &mut rows,
                &format!("v={v},t={t}"),
                &ys,
                mean,
                &moments,
                sc.allowance * dt,
            )?;
        }
    }
    Ok(rows)
}

fn moments_fv(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let params = sc.fv_params()?;
    let paths = fv_paths(
        &params,
        &sc.initial_state()?,
        &sc.run_config(dt),
        sc.seed,
        sc.replicas,
        workers,
    )?;
    let mut rows = Vec::new();
    for (o, &t) in times(sc).iter().enumerate() {
        for (i, &v) in sc.labels.iter().enumerate() {
            let (x0, ys) = (sc.x0[i], column(&paths, o, i));
            let mean = fv_mean(&params, v, x0, t);
            let moments = fv_moment_ode_from(&params, v, x0, sc.moment_order, t)?;
            moment_rows(
                &mut rows,
                &format!("v={v},t={t}"),
                &ys,
                mean,
                &moments,
                sc.allowance * dt,
            )?;
        }
    }
    Ok(rows)
}

/// Exact counts of monotonicity and range violations over every emitted state.
fn invariant_rows(paths: &Paths, upper: Option<f64>) -> Vec<SuiteRow> {
    let (mut order, mut range) = (0usize, 0usize);
    for s in paths.iter().flatten() {
        order += s.values.windows(2).filter(|w| !(w[0] <= w[1])).count();
        range += s
            .values
            .iter()
            .filter(|&&x| !(x >= 0.0 && upper.is_none_or(|u| x <= u)))
            .count();
    }
    vec![
        fixed(CheckRow::within("monotone_violations", order as f64, 0.0, 0.0, 0.0)),
        fixed(CheckRow::within("range_violations", range as f64, 0.0, 0.0, 0.0)),
    ]
}

/// One-shot marginals at the horizon against runs restarted at
/// `restart_time` from the intermediate state, on fresh noise.
fn restart_rows<L>(sc: &Scenario, dt: f64, finals: &Paths, workers: Option<usize>, leg: L) -> Result<Vec<SuiteRow>>
where
    L: Fn(&GridState, &RunConfig, u64, u64) -> flowsim_core::Result<GridState> + Sync,
{
    let s = sc.restart_time;
    if !(s > 0.0 && s < sc.horizon) {
        return Err(CliError::Config(format!(
            "restart_time: must lie in (0, {}), got {s}",
            sc.horizon
        )));
    }
    let init = sc.initial_state()?;
    let first = RunConfig::new(s, dt).with_eps(sc.eps);
    let second = RunConfig::new(sc.horizon - s, dt).with_eps(sc.eps);
    let restarted = run_replicas(sc.replicas, workers, |r| {
        let mid = leg(&init, &first, sc.seed ^ RESTART_FIRST_SALT, r)?;
        leg(&mid, &second, sc.seed ^ RESTART_SECOND_SALT, r)
    })?;
    let last = finals[0].len() - 1;
    let mut rows = Vec::new();
    for (i, &v) in sc.labels.iter().enumerate() {
        let a = column(finals, last, i);
        let b: Vec<f64> = restarted.iter().map(|st| st.values[i]).collect();
        let ks = ks_two_sample(&a, &b, DEFAULT_KS_ALPHA)?;
        rows.push(fixed(CheckRow::ks(format!("restart_ks[v={v},s={s}]"), &ks)));
    }
    Ok(rows)
}

fn flow_properties(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let init = sc.initial_state()?;
    let mut rc = sc.run_config(dt);
    if !rc.output_times.is_empty() && *rc.output_times.last().unwrap() < sc.horizon {
        rc.output_times.push(sc.horizon);
    }
    match sc.kind {
        Kind::Cbi => {
            let params = sc.cbi_params()?;
            let paths = cbi_paths(&params, &init, &rc, CbiMode::Coupled, sc.seed, sc.replicas, workers)?;
            let mut rows = invariant_rows(&paths, None);
            if sc.labels.len() >= 2 {
                rows.extend(independence_rows(sc, &params, &paths, dt, workers)?);
            }
            rows.extend(restart_rows(sc, dt, &paths, workers, |s, rc, seed, r| {
                Ok(simulate_cbi_flow(&params, s, rc, CbiMode::Coupled, seed, r)?
                    .pop()
                    .unwrap())
            })?);
            Ok(rows)
        }
        Kind::Fv => {
            let params = sc.fv_params()?;
            let paths = fv_paths(&params, &init, &rc, sc.seed, sc.replicas, workers)?;
            let mut rows = invariant_rows(&paths, Some(1.0));
            rows.extend(restart_rows(sc, dt, &paths, workers, |s, rc, seed, r| {
                Ok(simulate_fv_flow(&params, s, rc, seed, r)?.pop().unwrap())
            })?);
            rows.push(fixed(CheckRow::within(
                format!("jump_map_violations[cases={JUMP_MAP_CASES}]"),
                jump_map_violations(sc.seed, JUMP_MAP_CASES) as f64,
                0.0,
                0.0,
                0.0,
            )));
            Ok(rows)
        }
        Kind::Scaling => unreachable!("checked by run_suite"),
    }
}

/// Increment `Y(v2) - Y(v1)` of the coupled flow against the base `Y(v1)` and
/// against an independently simulated CBI with immigration `γ(v2) - γ(v1)`.
fn independence_rows(
    sc: &Scenario,
    params: &CbiParams,
    paths: &Paths,
    dt: f64,
    workers: Option<usize>,
) -> Result<Vec<SuiteRow>> {
    let last = paths[0].len() - 1;
    let (v1, v2) = (sc.labels[0], sc.labels[1]);
    let base = column(paths, last, 0);
    let inc: Vec<f64> = column(paths, last, 1).iter().zip(&base).map(|(a, b)| a - b).collect();
    let r = sc.replicas as f64;
    let rho = correlation(&inc, &base)?;
    let mut rows = vec![fixed(CheckRow::at_most(
        format!("increment_correlation[v1={v1},v2={v2}]"),
        rho.abs(),
        0.0,
        0.0,
        3.0 / r.sqrt(),
    ))];
    let rate = params.gamma.eval(v2) - params.gamma.eval(v1);
    let single = CbiParams::new(
        params.mech.clone(),
        ImmigrationFunction::constant(rate, LabelDomain::HalfLine)?,
    );
    let init = GridState::new(Arc::from(vec![1.0]), vec![sc.x0[1] - sc.x0[0]])?;
    let rc = RunConfig::new(sc.horizon, dt).with_eps(sc.eps);
    let seed = sc.seed ^ INDEPENDENT_SALT;
    let indep = cbi_paths(&single, &init, &rc, CbiMode::Coupled, seed, sc.replicas, workers)?;
    let ks = ks_two_sample(&inc, &column(&indep, 0, 0), DEFAULT_KS_ALPHA)?;
    rows.push(fixed(CheckRow::ks(format!("increment_ks[v1={v1},v2={v2}]"), &ks)));
    Ok(rows)
}

/// Random triples `x1 <= x2 <= x3` in `[0, 1]` pushed through one resampling
/// event; counts cases whose image is unordered or leaves `[0, 1]`.
pub fn jump_map_violations(seed: u64, cases: usize) -> usize {
    let mut rng = derive_substream(seed ^ JUMP_MAP_SALT, 0, Channel::Jumps);
    let mut bad = 0;
    for _ in 0..cases {
        let mut x = [rng.uniform(), rng.uniform(), rng.uniform()];
        // boundary and tie cases
        match (rng.uniform() * 8.0) as u32 {
            0 => x[0] = 0.0,
            1 => x[2] = 1.0,
            2 => x[1] = x[0],
            _ => {}
        }
        x.sort_by(f64::total_cmp);
        let z = 1.0 - rng.uniform();
        let u = if rng.uniform() < 0.1 { x[1] } else { rng.uniform() };
        let y = x.map(|xi| fv_jump_value(xi, z, u));
        if !(y[0] <= y[1] && y[1] <= y[2] && y[0] >= 0.0 && y[2] <= 1.0) {
            bad += 1;
        }
    }
    bad
}

fn generator(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let params = sc.fv_params()?;
    let mut rows = covariance_rows(sc, &params, workers, dt)?;
    if !sc.inverse_points.is_empty() {
        rows.extend(inverse_drift_rows(sc, &params, workers, dt)?);
    }
    Ok(rows)
}

/// One step from `x0`: `E[Δx_i Δx_j]/dt` against `Λ([0,1])·x_{i∧j}(1 - x_{i∨j})`.
fn covariance_rows(sc: &Scenario, params: &FvParams, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let init = sc.initial_state()?;
    let rc = RunConfig::new(dt, dt).with_eps(sc.eps);
    let paths = fv_paths(params, &init, &rc, sc.seed, sc.replicas, workers)?;
    let lambda = params.lambda_mass()?;
    let x = &sc.x0;
    let mut rows = Vec::new();
    for i in 0..x.len() {
        let di: Vec<f64> = column(&paths, 0, i).iter().map(|y| y - x[i]).collect();
        for j in i..x.len() {
            let dj: Vec<f64> = column(&paths, 0, j).iter().map(|y| y - x[j]).collect();
            let samples: Vec<f64> = di.iter().zip(&dj).map(|(a, b)| a * b / dt).collect();
            let est = mc_estimate(&samples)?;
            let target = lambda * x[i] * (1.0 - x[j]);
            let name = format!("step_covariance[{i},{j}]");
            rows.push(fixed(CheckRow::estimate(name, &est, target, DEFAULT_K_SIGMA, 0.0)));
        }
    }
    Ok(rows)
}

/// Drift of the inverse flow over a short time `Δ` on a dense bridge grid,
/// against `σ²(1/2 - r)`, within `3 SE + C·Δ`.
fn inverse_drift_rows(sc: &Scenario, params: &FvParams, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    if !params.nu.is_zero() || params.b != 0.0 {
        return Err(CliError::Config(
            "inverse_point: the inverse-flow drift check needs b = 0 and no jumps".into(),
        ));
    }
    let n = sc.inverse_grid;
    if n < 2 {
        return Err(CliError::Config("inverse_grid: need at least two grid points".into()));
    }
    let grid: Arc<[f64]> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect::<Vec<_>>().into();
    let init = GridState::new(grid.clone(), grid.to_vec())?;
    let delta = sc.delta;
    let rc = RunConfig::new(delta, dt).with_eps(sc.eps);
    let inverses = run_replicas(sc.inverse_replicas, workers, |r| {
        let end = simulate_fv_flow(params, &init, &rc, sc.seed, r)?.pop().unwrap();
        Ok(invert_flow_interpolated(&end, &sc.inverse_points))
    })?;
    let s2 = params.sigma * params.sigma;
    let mut rows = Vec::new();
    for (q, &r) in sc.inverse_points.iter().enumerate() {
        let samples: Vec<f64> = inverses.iter().map(|inv| (inv[q] - r) / delta).collect();
        let est = mc_estimate(&samples)?;
        let name = format!("inverse_drift[r={r},delta={delta}]");
        rows.push(fixed(CheckRow::estimate(
            name,
            &est,
            s2 * (0.5 - r),
            DEFAULT_K_SIGMA,
            sc.allowance * delta,
        )));
    }
    Ok(rows)
}

fn martingale(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let (t, delta) = (sc.residual_time, sc.delta);
    let rc = RunConfig::new(t + delta, dt)
        .with_eps(sc.eps)
        .with_outputs(vec![t, t + delta]);
    let init = sc.initial_state()?;
    let g = Polynomial::monomial(2);
    let f = sc.indicator_function()?;
    let (paths, est) = match sc.kind {
        Kind::Cbi => {
            let params = sc.cbi_params()?;
            let paths = cbi_paths(&params, &init, &rc, sc.mode, sc.seed, sc.replicas, workers)?;
            let pairs = to_pairs(&paths);
            let est = martingale_residual(&pairs, &g, &f, delta, |s| cbi_generator(&params, &g, &f, s))?;
            (paths, est)
        }
        Kind::Fv => {
            let params = sc.fv_params()?;
            let paths = fv_paths(&params, &init, &rc, sc.seed, sc.replicas, workers)?;
            let pairs = to_pairs(&paths);
            let est = martingale_residual(&pairs, &g, &f, delta, |s| fv_generator(&params, &g, &f, s))?;
            (paths, est)
        }
        Kind::Scaling => unreachable!("checked by run_suite"),
    };
    drop(paths);
    let (lo, hi) = sc.indicator;
    let name = format!("residual[G=x^2,f=1({lo},{hi}],t={t},delta={delta}]");
    Ok(vec![fixed(CheckRow::estimate(name, &est, 0.0, DEFAULT_K_SIGMA, 0.0))])
}

fn to_pairs(paths: &Paths) -> Vec<(GridState, GridState)> {
    paths.iter().map(|p| (p[0].clone(), p[1].clone())).collect()
}

fn scaling(sc: &Scenario, workers: Option<usize>, dt: f64) -> Result<Vec<SuiteRow>> {
    let fam = sc.scaling_family()?;
    let rows = scaling_report(&fam, &sc.scaling_run(dt), workers)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let allowance = row.check.starts_with("mean[") || row.check.starts_with("second_moment[");
            SuiteRow {
                row,
                refinable: allowance,
            }
        })
        .collect())
}

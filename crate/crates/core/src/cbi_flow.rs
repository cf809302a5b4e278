//! Flows of CBI-processes on a label grid.
//!
//! The coupled scheme drives all labels with one white noise and one Poisson
//! random measure on the `u`-axis: label `v_i` sees the noise on `(0, Y(v_i)]`.
//! The increment scheme instead simulates `Y(v_i) - Y(v_{i-1})` as independent
//! one-dimensional CBI-processes and sums them.

use std::sync::Arc;

use crate::error::{config, domain, Result};
use crate::grid::{pair_step_function, project_monotone, GridState, Polynomial, RunConfig, StepFunction};
use crate::mechanisms::{BranchingMechanism, ImmigrationFunction, Integrand};
use crate::noise::{
    derive_indexed_substream, derive_substream, gaussian_partition_increments_into, AtomSource, Channel, PoissonAtom,
    RandomStream,
};
use crate::ode::{integrate, OdeOptions, DEFAULT_TOL};

pub type FlowState = GridState;

#[derive(Debug, Clone, PartialEq)]
pub struct CbiParams {
    pub mech: BranchingMechanism,
    pub gamma: ImmigrationFunction,
}

impl CbiParams {
    pub fn new(mech: BranchingMechanism, gamma: ImmigrationFunction) -> Self {
        Self { mech, gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbiMode {
    Coupled,
    IndependentIncrements,
}

/// Euler stepper for the coupled flow with its scratch buffers.
#[derive(Debug, Clone)]
pub struct CbiStepper {
    b: f64,
    diffusion_var: f64,
    compensator: f64,
    immigration: Vec<f64>,
    atoms: Option<AtomSource>,
    bounds: Vec<f64>,
    gauss: Vec<f64>,
    atom_buf: Vec<PoissonAtom>,
    crossings: u64,
}

impl CbiStepper {
    pub fn new(params: &CbiParams, labels: &[f64], eps: f64) -> Result<Self> {
        let imm = labels.iter().map(|&v| params.gamma.eval(v)).collect();
        Self::with_immigration(&params.mech, imm, eps)
    }

    /// Stepper whose `i`-th coordinate receives immigration rate `immigration[i]`.
    pub fn with_immigration(mech: &BranchingMechanism, immigration: Vec<f64>, eps: f64) -> Result<Self> {
        if immigration.iter().any(|g| !(*g >= 0.0)) || immigration.windows(2).any(|w| w[0] > w[1]) {
            return domain("immigration rates must be nonnegative and nondecreasing");
        }
        let m = &mech.m;
        let (small, comp, atoms) = if m.is_zero() {
            (0.0, 0.0, None)
        } else {
            let src = AtomSource::new(m, eps)?;
            let atoms = (src.rate() > 0.0).then_some(src);
            (m.small_jump_variance(eps)?, m.large_jump_mean(eps)?, atoms)
        };
        let p = immigration.len();
        Ok(Self {
            b: mech.b,
            diffusion_var: mech.sigma * mech.sigma + small,
            compensator: comp,
            immigration,
            atoms,
            bounds: Vec::with_capacity(p + 1),
            gauss: Vec::with_capacity(p),
            atom_buf: Vec::new(),
            crossings: 0,
        })
    }

    /// Steps in which the monotone rearrangement had to move a value.
    pub fn crossings(&self) -> u64 {
        self.crossings
    }

    /// One Euler step drawing fresh noise.
    pub fn step(
        &mut self,
        state: &mut FlowState,
        dt: f64,
        diffusion: &mut RandomStream,
        jumps: &mut RandomStream,
    ) -> Result<()> {
        self.bounds.clear();
        self.bounds.push(0.0);
        self.bounds.extend_from_slice(&state.values);
        gaussian_partition_increments_into(&self.bounds, dt, self.diffusion_var, diffusion, &mut self.gauss);
        let top = *state.values.last().unwrap();
        match &self.atoms {
            Some(src) if top > 0.0 => src.sample_into(top, dt, jumps, &mut self.atom_buf)?,
            _ => self.atom_buf.clear(),
        }
        let crossed = cbi_update(
            &mut state.values,
            &self.immigration,
            self.b,
            self.compensator,
            dt,
            &self.gauss,
            &self.atom_buf,
        );
        self.crossings += crossed as u64;
        state.clock += dt;
        Ok(())
    }

    /// One Euler step with the noise supplied: `gaussians[j]` is the white-noise
    /// integral over the `j`-th cell of `(0, y_p]`, already scaled.
    pub fn apply_step(&mut self, state: &mut FlowState, dt: f64, gaussians: &[f64], atoms: &[PoissonAtom]) {
        let crossed = cbi_update(
            &mut state.values,
            &self.immigration,
            self.b,
            self.compensator,
            dt,
            gaussians,
            atoms,
        );
        self.crossings += crossed as u64;
        state.clock += dt;
    }
}

#[inline]
fn cbi_update(
    values: &mut [f64],
    immigration: &[f64],
    b: f64,
    compensator: f64,
    dt: f64,
    gauss: &[f64],
    atoms: &[PoissonAtom],
) -> bool {
    let mut prefix = 0.0;
    for i in 0..values.len() {
        let y = values[i];
        prefix += gauss[i];
        let mut jump = 0.0;
        for a in atoms {
            if a.u <= y {
                jump += a.z;
            }
        }
        values[i] = y + prefix + dt * (immigration[i] - b * y) - dt * y * compensator + jump;
    }
    project_monotone(values, f64::INFINITY)
}

/// One coupled Euler step from `state` (convenience wrapper around [`CbiStepper`]).
pub fn step_cbi_coupled(
    state: &FlowState,
    params: &CbiParams,
    dt: f64,
    eps: f64,
    diffusion: &mut RandomStream,
    jumps: &mut RandomStream,
) -> Result<FlowState> {
    let mut stepper = CbiStepper::new(params, &state.labels, eps)?;
    let mut next = state.clone();
    stepper.step(&mut next, dt, diffusion, jumps)?;
    Ok(next)
}

/// Simulates replica `replica` from `initial` and returns the states at the
/// configured output times.
pub fn simulate_cbi_flow(
    params: &CbiParams,
    initial: &FlowState,
    run: &RunConfig,
    mode: CbiMode,
    seed: u64,
    replica: u64,
) -> Result<Vec<FlowState>> {
    let (n, outs) = run.schedule()?;
    let eps = run.eps_for(&params.mech.m)?;
    if !initial.is_ordered_within(None) {
        return config("initial CBI values must be nonnegative and nondecreasing");
    }
    let path = match mode {
        CbiMode::Coupled => {
            let mut stepper = CbiStepper::new(params, &initial.labels, eps)?;
            let mut diff = derive_substream(seed, replica, Channel::Diffusion);
            let mut jump = derive_substream(seed, replica, Channel::Jumps);
            let mut state = initial.clone();
            let mut path = Vec::with_capacity(outs.len());
            let mut k = 0;
            for step in 0..=n {
                while k < outs.len() && outs[k] == step {
                    path.push(state.clone());
                    k += 1;
                }
                if step < n {
                    stepper.step(&mut state, run.dt, &mut diff, &mut jump)?;
                }
            }
            path
        }
        CbiMode::IndependentIncrements => simulate_increments(params, initial, run.dt, eps, n, &outs, seed, replica)?,
    };
    if let Some(bad) = path.iter().find(|s| !s.is_ordered_within(None)) {
        return domain(format!("flow state left the ordered cone at t = {}", bad.clock));
    }
    Ok(path)
}

#[allow(clippy::too_many_arguments)]
fn simulate_increments(
    params: &CbiParams,
    initial: &FlowState,
    dt: f64,
    eps: f64,
    n: usize,
    outs: &[usize],
    seed: u64,
    replica: u64,
) -> Result<Vec<FlowState>> {
    let labels = &initial.labels;
    let p = labels.len();
    let mut totals = vec![vec![0.0; p]; outs.len()];
    let mut prev_gamma = 0.0;
    let mut prev_x = 0.0;
    for i in 0..p {
        let g = params.gamma.eval(labels[i]);
        let rate = if i == 0 { g } else { g - prev_gamma };
        prev_gamma = g;
        let x = initial.values[i] - prev_x;
        prev_x = initial.values[i];
        let single: Arc<[f64]> = vec![labels[i]].into();
        let mut state = FlowState::new(single, vec![x])?;
        let mut stepper = CbiStepper::with_immigration(&params.mech, vec![rate], eps)?;
        let mut diff = derive_indexed_substream(seed, replica, Channel::Diffusion, i as u64);
        let mut jump = derive_indexed_substream(seed, replica, Channel::Jumps, i as u64);
        let mut k = 0;
        for step in 0..=n {
            while k < outs.len() && outs[k] == step {
                totals[k][i] = state.values[0];
                k += 1;
            }
            if step < n {
                stepper.step(&mut state, dt, &mut diff, &mut jump)?;
            }
        }
    }
    totals
        .into_iter()
        .zip(outs)
        .map(|(incs, &step)| {
            let mut acc = 0.0;
            let values = incs
                .iter()
                .map(|d| {
                    acc += d;
                    acc
                })
                .collect();
            let mut s = FlowState::new(labels.clone(), values)?;
            s.clock = initial.clock + step as f64 * dt;
            Ok(s)
        })
        .collect()
}

/// `(E[Y_t^0], …, E[Y_t^order])` for the one-dimensional CBI with immigration
/// rate `beta` started at `x0`, from the closed moment equations.
pub fn cbi_moment_ode(mech: &BranchingMechanism, beta: f64, x0: f64, order: usize, t: f64) -> Result<Vec<f64>> {
    if !(beta >= 0.0) || !(x0 >= 0.0) || !(t >= 0.0) {
        return domain(format!(
            "cbi_moment_ode needs beta, x0, t >= 0, got ({beta}, {x0}, {t})"
        ));
    }
    let mu: Vec<f64> = (0..=order as u32)
        .map(|j| if j < 2 { Ok(0.0) } else { mech.m.moment(j) })
        .collect::<Result<_>>()?;
    let binom = binomials(order);
    let s2 = mech.sigma * mech.sigma;
    let b = mech.b;
    let mut y: Vec<f64> = (0..=order).map(|p| x0.powi(p as i32)).collect();
    let opts = OdeOptions {
        rel_tol: 1e-12,
        ..OdeOptions::with_tol(DEFAULT_TOL)
    };
    integrate(
        |_, m, d| {
            d[0] = 0.0;
            for p in 1..=order {
                let pf = p as f64;
                let mut r = pf * (beta * m[p - 1] - b * m[p]) + 0.5 * s2 * pf * (pf - 1.0) * m[p - 1];
                for j in 2..=p {
                    r += binom[p][j] * mu[j] * m[p - j + 1];
                }
                d[p] = r;
            }
        },
        0.0,
        &mut y,
        t,
        opts,
        |_| {},
    )?;
    Ok(y)
}

pub(crate) fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        c[i][0] = 1.0;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j < i { c[i - 1][j] } else { 0.0 };
        }
    }
    c
}

/// Generator of the measure-valued CBI-process applied to `Y ↦ G(⟨Y, f⟩)` for
/// a polynomial `G` and a step function `f` on the grid.
pub fn cbi_generator(params: &CbiParams, g: &Polynomial, f: &StepFunction, state: &FlowState) -> Result<f64> {
    let mech = &params.mech;
    let y = pair_step_function(state, f)?;
    let y2 = pair_step_function(state, &f.powi(2))?;
    let gamma_f = f.pair_with(|v| Ok(params.gamma.eval(v)))?;
    let mut lg = 0.5 * mech.sigma * mech.sigma * g.derivative(2, y) * y2 + g.derivative(1, y) * (gamma_f - mech.b * y);
    let mut factorial = 1.0;
    for j in 2..=g.degree() {
        factorial *= j as f64;
        let mu = mech.m.integrate(Integrand::Power(j as u32), 0.0, f64::INFINITY)?;
        if mu == 0.0 {
            continue;
        }
        let yj = pair_step_function(state, &f.powi(j as i32))?;
        lg += g.derivative(j, y) / factorial * mu * yj;
    }
    Ok(lg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::cbi_mean;
    use crate::mechanisms::{JumpMeasure, LabelDomain};
    use crate::stats::mc_estimate;
    use approx::assert_relative_eq;

    fn mech(sigma: f64, b: f64, m: JumpMeasure) -> BranchingMechanism {
        BranchingMechanism::new(sigma, b, m).unwrap()
    }

    fn state(labels: &[f64], values: &[f64]) -> FlowState {
        FlowState::new(labels.into(), values.to_vec()).unwrap()
    }

    fn zero_gamma() -> ImmigrationFunction {
        ImmigrationFunction::constant(0.0, LabelDomain::HalfLine).unwrap()
    }

    fn linear_gamma(slope: f64) -> ImmigrationFunction {
        ImmigrationFunction::linear(slope, 100.0, LabelDomain::HalfLine).unwrap()
    }

    #[test]
    fn deterministic_linear_decay() {
        let params = CbiParams::new(mech(0.0, 1.0, JumpMeasure::empty()), zero_gamma());
        let mut d = derive_substream(1, 0, Channel::Diffusion);
        let mut j = derive_substream(1, 0, Channel::Jumps);
        let next = step_cbi_coupled(&state(&[1.0], &[2.0]), &params, 0.1, 0.1, &mut d, &mut j).unwrap();
        assert_eq!(next.values[0], 1.8);
        assert!((next.clock - 0.1).abs() < 1e-15);
    }

    #[test]
    fn equal_values_move_together() {
        let params = CbiParams::new(mech(1.0, 0.5, JumpMeasure::dirac(1.0, 2.0).unwrap()), linear_gamma(0.0));
        let mut d = derive_substream(2, 0, Channel::Diffusion);
        let mut j = derive_substream(2, 0, Channel::Jumps);
        let mut s = state(&[0.5, 1.0], &[1.0, 1.0]);
        let mut stepper = CbiStepper::new(&params, &s.labels, 0.5).unwrap();
        for _ in 0..200 {
            stepper.step(&mut s, 0.01, &mut d, &mut j).unwrap();
            assert_eq!(s.values[0], s.values[1]);
        }
    }

    #[test]
    fn forced_atom_and_compensator() {
        let params = CbiParams::new(mech(0.0, 0.0, JumpMeasure::dirac(1.0, 1.0).unwrap()), zero_gamma());
        let mut s = state(&[1.0], &[1.0]);
        let mut stepper = CbiStepper::new(&params, &s.labels, 0.5).unwrap();
        let atom = PoissonAtom {
            time: 0.0,
            z: 1.0,
            u: 0.5,
        };
        stepper.apply_step(&mut s, 0.01, &[0.0], &[atom]);
        assert_relative_eq!(s.values[0], 1.99, epsilon = 1e-15);
    }

    #[test]
    fn atom_above_a_coordinate_skips_it() {
        let params = CbiParams::new(mech(0.0, 0.0, JumpMeasure::dirac(1.0, 1.0).unwrap()), zero_gamma());
        let mut s = state(&[1.0, 2.0], &[1.0, 2.0]);
        let mut stepper = CbiStepper::new(&params, &s.labels, 0.5).unwrap();
        let atom = PoissonAtom {
            time: 0.0,
            z: 0.5,
            u: 1.5,
        };
        stepper.apply_step(&mut s, 0.0, &[0.0, 0.0], &[atom]);
        assert_eq!(s.values, vec![1.0, 2.5]);
    }

    #[test]
    fn deterministic_fixed_point() {
        // y' = 1 - y from y(0) = 1 stays at 1
        let params = CbiParams::new(mech(0.0, 1.0, JumpMeasure::empty()), linear_gamma(1.0));
        let init = state(&[1.0], &[1.0]);
        let run = RunConfig::new(1.0, 1e-3);
        let path = simulate_cbi_flow(&params, &init, &run, CbiMode::Coupled, 0, 0).unwrap();
        assert!((path[0].values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_matches_mean_formula() {
        let params = CbiParams::new(mech(0.0, 1.0, JumpMeasure::empty()), linear_gamma(0.5));
        let init = state(&[2.0], &[2.0]);
        let run = RunConfig::new(1.0, 1e-4);
        let y = simulate_cbi_flow(&params, &init, &run, CbiMode::Coupled, 0, 0).unwrap()[0].values[0];
        let exact = cbi_mean(&params.mech, 1.0, 2.0, 1.0);
        // explicit Euler error is first order
        assert!((y - exact).abs() < 1e-4, "{y} vs {exact}");
    }

    #[test]
    fn null_increment_stays_null() {
        let params = CbiParams::new(
            mech(1.0, 0.3, JumpMeasure::dirac(0.5, 1.0).unwrap()),
            ImmigrationFunction::new(vec![(0.0, 0.2), (1.0, 0.5)], LabelDomain::HalfLine).unwrap(),
        );
        // labels 1 and 2 share γ = 0.5 and start at equal values
        let init = state(&[1.0, 2.0], &[1.0, 1.0]);
        let run = RunConfig::new(0.5, 1e-3).with_outputs(vec![0.25, 0.5]);
        for r in 0..5 {
            let path = simulate_cbi_flow(&params, &init, &run, CbiMode::IndependentIncrements, 9, r).unwrap();
            for s in &path {
                assert_eq!(s.values[0], s.values[1]);
            }
        }
    }

    #[test]
    fn unordered_labels_are_rejected() {
        assert!(FlowState::new(vec![2.0, 1.0].into(), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn monte_carlo_mean_both_modes() {
        let params = CbiParams::new(mech(1.0, 0.5, JumpMeasure::dirac(1.0, 0.3).unwrap()), linear_gamma(0.4));
        let init = state(&[0.5, 1.0], &[0.5, 1.0]);
        let run = RunConfig::new(1.0, 1e-2);
        for mode in [CbiMode::Coupled, CbiMode::IndependentIncrements] {
            let ys: Vec<f64> = (0..4000)
                .map(|r| simulate_cbi_flow(&params, &init, &run, mode, 5, r).unwrap()[0].values[1])
                .collect();
            let e = mc_estimate(&ys).unwrap();
            let target = cbi_mean(&params.mech, 0.4, 1.0, 1.0);
            assert!(
                (e.mean - target).abs() < 4.0 * e.stderr + 0.02,
                "{mode:?}: {} vs {target}",
                e.mean
            );
        }
    }

    #[test]
    fn moment_ode_examples() {
        let m = mech(0.7, 0.4, JumpMeasure::dirac(0.5, 1.0).unwrap());
        let mo = cbi_moment_ode(&m, 0.3, 1.5, 1, 2.0).unwrap();
        assert!((mo[1] - cbi_mean(&m, 0.3, 1.5, 2.0)).abs() < 1e-9);
        let frozen = mech(0.0, 0.0, JumpMeasure::empty());
        let mo = cbi_moment_ode(&frozen, 0.0, 1.3, 4, 5.0).unwrap();
        for (p, v) in mo.iter().enumerate() {
            assert_relative_eq!(*v, 1.3f64.powi(p as i32), max_relative = 1e-12);
        }
        let feller = mech(1.0, 0.0, JumpMeasure::empty());
        let mo = cbi_moment_ode(&feller, 0.0, 1.0, 2, 0.75).unwrap();
        assert!((mo[2] - 1.75).abs() < 1e-9);
    }

    #[test]
    fn second_moment_with_jumps_closed_form() {
        // b = 0, β = 0: M_1 = x, dM_2/dt = (σ² + μ_2) x
        let m = mech(0.6, 0.0, JumpMeasure::dirac(0.5, 2.0).unwrap());
        let mo = cbi_moment_ode(&m, 0.0, 2.0, 2, 1.5).unwrap();
        assert!((mo[2] - (4.0 + 1.5 * (0.36 + 0.5) * 2.0)).abs() < 1e-9);
    }

    #[test]
    fn generator_matches_moment_ode_derivative() {
        // at a one-label state, LG for G = x^p equals dM_p/dt at t = 0
        let params = CbiParams::new(mech(0.8, 0.3, JumpMeasure::dirac(0.7, 1.2).unwrap()), linear_gamma(0.5));
        let s = state(&[2.0], &[1.4]);
        let f = StepFunction::indicator(0.0, 2.0).unwrap();
        let h = 1e-3;
        for p in 1..=4usize {
            let lg = cbi_generator(&params, &Polynomial::monomial(p), &f, &s).unwrap();
            let a = cbi_moment_ode(&params.mech, 1.0, 1.4, p, h).unwrap()[p];
            let b = cbi_moment_ode(&params.mech, 1.0, 1.4, p, 2.0 * h).unwrap()[p];
            let fd = (-3.0 * 1.4f64.powi(p as i32) + 4.0 * a - b) / (2.0 * h);
            assert!((lg - fd).abs() < 1e-4 * lg.abs().max(1.0), "p={p}: {lg} vs {fd}");
        }
    }
}

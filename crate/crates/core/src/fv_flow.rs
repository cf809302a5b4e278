//! Generalized Fleming–Viot flows as `p`-point jump-diffusions on `[0, 1]`.
//!
//! Each coordinate `x_i = X_t(v_i)` is driven by the same white noise on
//! `(0, 1]` through `∫ (1_{u ≤ x_i} - x_i) W(ds, du)`, by resampling events
//! `x ↦ (1 - z)x + z 1_{u ≤ x}` and by the drift `b(γ(v_i) - x_i)`.

use crate::cbi_flow::binomials;
use crate::error::{config, domain, Result};
use crate::grid::{pair_step_function, project_monotone, GridState, Polynomial, RunConfig, StepFunction};
use crate::mechanisms::{beta_coeff, ImmigrationFunction, JumpMeasure, LabelDomain};
use crate::noise::{
    derive_substream, gaussian_partition_increments_into, AtomSource, Channel, PoissonAtom, RandomStream,
};
use crate::ode::{integrate, OdeOptions, DEFAULT_TOL};

pub type PPointState = GridState;

#[derive(Debug, Clone, PartialEq)]
pub struct FvParams {
    pub sigma: f64,
    pub b: f64,
    pub gamma: ImmigrationFunction,
    pub nu: JumpMeasure,
}

impl FvParams {
    pub fn new(sigma: f64, b: f64, gamma: ImmigrationFunction, nu: JumpMeasure) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return domain(format!("sigma must be >= 0, got {sigma}"));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return domain(format!("Fleming-Viot drift b must be >= 0, got {b}"));
        }
        if gamma.domain() != LabelDomain::UnitInterval {
            return domain("Fleming-Viot immigration function must live on the unit interval");
        }
        nu.ensure_unit_support()?;
        Ok(Self { sigma, b, gamma, nu })
    }

    /// `σ² + ∫ z² ν(dz)`: the total pair-merger intensity `Λ([0, 1])`.
    pub fn lambda_mass(&self) -> Result<f64> {
        Ok(self.sigma * self.sigma + self.nu.moment(2)?)
    }
}

/// Resampling map applied to every coordinate: `x ↦ (1 - z)x + z 1_{u ≤ x}`.
/// Order and `[0, 1]` bounds are preserved exactly in floating point.
#[inline]
pub fn fv_jump_value(x: f64, z: f64, u: f64) -> f64 {
    let shrunk = (1.0 - z) * x;
    if u <= x {
        (shrunk + z).min(1.0)
    } else {
        shrunk
    }
}

pub fn apply_fv_jump(state: &PPointState, z: f64, u: f64) -> PPointState {
    let mut next = state.clone();
    for x in next.values.iter_mut() {
        *x = fv_jump_value(*x, z, u);
    }
    next
}

/// `a_ij = σ_eff² x_{i∧j}(1 - x_{i∨j})` for ordered `x`.
pub fn fv_covariance(values: &[f64], sigma_eff: f64) -> Vec<Vec<f64>> {
    let s2 = sigma_eff * sigma_eff;
    let p = values.len();
    let mut a = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..p {
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            a[i][j] = s2 * values[lo] * (1.0 - values[hi]);
        }
    }
    a
}

/// Euler stepper for the `p`-point motion with its scratch buffers.
#[derive(Debug, Clone)]
pub struct FvStepper {
    b: f64,
    diffusion_var: f64,
    immigration: Vec<f64>,
    atoms: Option<AtomSource>,
    bounds: Vec<f64>,
    gauss: Vec<f64>,
    atom_buf: Vec<PoissonAtom>,
    crossings: u64,
}

impl FvStepper {
    pub fn new(params: &FvParams, labels: &[f64], eps: f64) -> Result<Self> {
        let (small, atoms) = if params.nu.is_zero() {
            (0.0, None)
        } else {
            let src = AtomSource::new(&params.nu, eps)?;
            let atoms = (src.rate() > 0.0).then_some(src);
            (params.nu.small_jump_variance(eps)?, atoms)
        };
        let p = labels.len();
        Ok(Self {
            b: params.b,
            diffusion_var: params.sigma * params.sigma + small,
            immigration: labels.iter().map(|&v| params.gamma.eval(v)).collect(),
            atoms,
            bounds: Vec::with_capacity(p + 2),
            gauss: Vec::with_capacity(p + 1),
            atom_buf: Vec::new(),
            crossings: 0,
        })
    }

    /// `σ_eff² = σ² + ∫_{(0,eps]} z² ν(dz)`.
    pub fn diffusion_var(&self) -> f64 {
        self.diffusion_var
    }

    /// Steps in which the monotone rearrangement had to move a value.
    pub fn crossings(&self) -> u64 {
        self.crossings
    }

    pub fn step(
        &mut self,
        state: &mut PPointState,
        dt: f64,
        diffusion: &mut RandomStream,
        jumps: &mut RandomStream,
    ) -> Result<()> {
        self.bounds.clear();
        self.bounds.push(0.0);
        self.bounds.extend_from_slice(&state.values);
        self.bounds.push(1.0);
        gaussian_partition_increments_into(&self.bounds, dt, self.diffusion_var, diffusion, &mut self.gauss);
        match &self.atoms {
            Some(src) => src.sample_into(1.0, dt, jumps, &mut self.atom_buf)?,
            None => self.atom_buf.clear(),
        }
        let crossed = fv_update(
            &mut state.values,
            &self.immigration,
            self.b,
            dt,
            &self.gauss,
            &self.atom_buf,
        );
        self.crossings += crossed as u64;
        state.clock += dt;
        Ok(())
    }

    /// One Euler step with the noise supplied: `gaussians` holds the `p + 1`
    /// cell integrals over the partition `{0, x_1, …, x_p, 1}`; `atoms` must be
    /// sorted by time.
    pub fn apply_step(&mut self, state: &mut PPointState, dt: f64, gaussians: &[f64], atoms: &[PoissonAtom]) {
        let crossed = fv_update(&mut state.values, &self.immigration, self.b, dt, gaussians, atoms);
        self.crossings += crossed as u64;
        state.clock += dt;
    }
}

#[inline]
fn fv_update(values: &mut [f64], immigration: &[f64], b: f64, dt: f64, gauss: &[f64], atoms: &[PoissonAtom]) -> bool {
    let total: f64 = gauss.iter().sum();
    let mut prefix = 0.0;
    for i in 0..values.len() {
        let x = values[i];
        prefix += gauss[i];
        let mut jx = x;
        for a in atoms {
            jx = fv_jump_value(jx, a.z, a.u);
        }
        values[i] = jx + (prefix - x * total) + dt * b * (immigration[i] - x);
    }
    project_monotone(values, 1.0)
}

/// Simulates replica `replica` from `initial` (labels in `[0, 1]`) and returns
/// the states at the configured output times.
pub fn simulate_fv_flow(
    params: &FvParams,
    initial: &PPointState,
    run: &RunConfig,
    seed: u64,
    replica: u64,
) -> Result<Vec<PPointState>> {
    let (n, outs) = run.schedule()?;
    let eps = run.eps_for(&params.nu)?;
    if initial.labels.last().is_some_and(|&v| v > 1.0) {
        return config("Fleming-Viot labels must lie in [0, 1]");
    }
    if !initial.is_ordered_within(Some(1.0)) {
        return config("initial Fleming-Viot values must be nondecreasing in [0, 1]");
    }
    let mut stepper = FvStepper::new(params, &initial.labels, eps)?;
    let mut diff = derive_substream(seed, replica, Channel::Diffusion);
    let mut jump = derive_substream(seed, replica, Channel::Jumps);
    let mut state = initial.clone();
    let mut path = Vec::with_capacity(outs.len());
    let mut k = 0;
    for step in 0..=n {
        while k < outs.len() && outs[k] == step {
            if !state.is_ordered_within(Some(1.0)) {
                return domain(format!("flow state left the ordered cone at t = {}", state.clock));
            }
            path.push(state.clone());
            k += 1;
        }
        if step < n {
            stepper.step(&mut state, run.dt, &mut diff, &mut jump)?;
        }
    }
    Ok(path)
}

/// Right-continuous generalized inverse `inf{u : X(u) > v}` on the grid,
/// equal to the last label when no grid value exceeds `v`.
pub fn invert_flow(state: &PPointState, queries: &[f64]) -> Vec<f64> {
    let last = *state.labels.last().unwrap();
    queries
        .iter()
        .map(|&v| {
            let j = state.values.partition_point(|&x| x <= v);
            state.labels.get(j).copied().unwrap_or(last)
        })
        .collect()
}

/// The grid inverse refined by linear interpolation inside the bracketing cell.
pub fn invert_flow_interpolated(state: &PPointState, queries: &[f64]) -> Vec<f64> {
    let last = *state.labels.last().unwrap();
    queries
        .iter()
        .map(|&v| {
            let j = state.values.partition_point(|&x| x <= v);
            if j == 0 {
                return state.labels[0];
            }
            if j == state.values.len() {
                return last;
            }
            let (u0, u1) = (state.labels[j - 1], state.labels[j]);
            let (x0, x1) = (state.values[j - 1], state.values[j]);
            u0 + (u1 - u0) * (v - x0) / (x1 - x0)
        })
        .collect()
}

/// `β_{p,k}` for `2 <= k <= p <= order`, indexed `[p][k]`.
fn beta_table(nu: &JumpMeasure, order: usize) -> Result<Vec<Vec<f64>>> {
    let mut t = vec![vec![0.0; order + 1]; order + 1];
    if nu.is_zero() {
        return Ok(t);
    }
    for p in 2..=order {
        for k in 2..=p {
            t[p][k] = beta_coeff(nu, p as u32, k as u32)?;
        }
    }
    Ok(t)
}

/// `E[X_t(v)] = γ(v) + (x0 - γ(v)) e^{-bt}` for `X_0(v) = x0`.
pub fn fv_mean(params: &FvParams, v: f64, x0: f64, t: f64) -> f64 {
    let g = params.gamma.eval(v);
    g + (x0 - g) * (-params.b * t).exp()
}

/// `(E[X_t(v)^0], …, E[X_t(v)^order])` from the generator closed on indicator
/// test functions, started from `X_0(v) = v`.
pub fn fv_moment_ode(params: &FvParams, v: f64, order: usize, t: f64) -> Result<Vec<f64>> {
    fv_moment_ode_from(params, v, v, order, t)
}

/// As [`fv_moment_ode`] with an explicit initial value `x0 = X_0(v)`.
pub fn fv_moment_ode_from(params: &FvParams, v: f64, x0: f64, order: usize, t: f64) -> Result<Vec<f64>> {
    if order < 1 {
        return domain("moment order must be >= 1");
    }
    if !(0.0..=1.0).contains(&v) || !(0.0..=1.0).contains(&x0) || !(t >= 0.0) {
        return domain(format!(
            "fv_moment_ode needs v, x0 in [0,1], t >= 0, got ({v}, {x0}, {t})"
        ));
    }
    let beta = beta_table(&params.nu, order)?;
    let binom = binomials(order);
    let s2 = params.sigma * params.sigma;
    let (b, g) = (params.b, params.gamma.eval(v));
    let mut y: Vec<f64> = (0..=order).map(|p| x0.powi(p as i32)).collect();
    integrate(
        |_, m, d| {
            d[0] = 0.0;
            for p in 1..=order {
                let pf = p as f64;
                let mut r = b * pf * (g * m[p - 1] - m[p]);
                if p >= 2 {
                    r += s2 * binom[p][2] * (m[p - 1] - m[p]);
                }
                for k in 2..=p {
                    r += binom[p][k] * beta[p][k] * (m[p - k + 1] - m[p]);
                }
                d[p] = r;
            }
        },
        0.0,
        &mut y,
        t,
        OdeOptions::with_tol(DEFAULT_TOL),
        |_| {},
    )?;
    Ok(y)
}

/// Generator of the measure-valued process applied to `X ↦ G(⟨X, f⟩)`.
pub fn fv_generator(params: &FvParams, g: &Polynomial, f: &StepFunction, state: &PPointState) -> Result<f64> {
    let order = g.degree();
    let beta = beta_table(&params.nu, order)?;
    let binom = binomials(order);
    let s2 = params.sigma * params.sigma;
    let y = pair_step_function(state, f)?;
    let gamma_f = f.pair_with(|v| Ok(params.gamma.eval(v)))?;
    let fk: Vec<f64> = (0..=order)
        .map(|k| {
            if k < 2 {
                Ok(0.0)
            } else {
                pair_step_function(state, &f.powi(k as i32))
            }
        })
        .collect::<Result<_>>()?;
    let mut lg = 0.0;
    for (p, &c) in g.coeffs.iter().enumerate().skip(1) {
        if c == 0.0 {
            continue;
        }
        let pf = p as f64;
        let yp = y.powi(p as i32);
        let mut term = params.b * pf * (gamma_f * y.powi(p as i32 - 1) - yp);
        if p >= 2 {
            term += s2 * binom[p][2] * (fk[2] * y.powi(p as i32 - 2) - yp);
        }
        for k in 2..=p {
            term += binom[p][k] * beta[p][k] * (fk[k] * y.powi((p - k) as i32) - yp);
        }
        lg += c * term;
    }
    Ok(lg)
}

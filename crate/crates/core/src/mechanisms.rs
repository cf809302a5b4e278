//! Model parameters: jump measures, branching mechanisms and immigration
//! functions, together with the closed-form integrals built from them.
//!
//! A [`JumpMeasure`] is a finite list of weighted atoms plus at most one power
//! density `c·z^β` on `(0, ζ]`. Every integral the simulators and oracles need
//! (`∫ z^k`, `∫ (z∧z²)`, tail masses, Beta-type integrals) is available in
//! closed form for that family.

use rand::Rng;

use crate::error::{domain, FlowError, Result};
use crate::quad::adaptive_simpson;

/// Absolute tolerance for the quadrature inside [`BranchingMechanism::phi`].
pub const PHI_QUAD_TOL: f64 = 1e-12;

/// Density `coeff · z^exponent` on `(0, cutoff]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPart {
    pub coeff: f64,
    pub exponent: f64,
    pub cutoff: f64,
}

/// What to integrate against a [`JumpMeasure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    /// `z^k`
    Power(u32),
    /// `min(z, z²)`
    MinLinearSquare,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    atoms: Vec<(f64, f64)>,
    power: Option<PowerPart>,
}

impl JumpMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut atoms: Vec<(f64, f64)>, power: Option<PowerPart>) -> Result<Self> {
        for &(z, w) in &atoms {
            if !(z > 0.0 && z.is_finite()) {
                return domain(format!("atom size must be positive and finite, got {z}"));
            }
            if !(w > 0.0 && w.is_finite()) {
                return domain(format!("atom weight must be positive and finite, got {w}"));
            }
        }
        if let Some(pp) = power {
            if !(pp.coeff > 0.0 && pp.coeff.is_finite()) {
                return domain(format!("power coefficient must be positive, got {}", pp.coeff));
            }
            if !(pp.exponent > -3.0 && pp.exponent.is_finite()) {
                return domain(format!(
                    "power exponent must exceed -3 for a finite second moment near 0, got {}",
                    pp.exponent
                ));
            }
            if !(pp.cutoff > 0.0 && pp.cutoff.is_finite()) {
                return domain(format!("power cutoff must be positive and finite, got {}", pp.cutoff));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { atoms, power })
    }

    pub fn dirac(z: f64, weight: f64) -> Result<Self> {
        Self::new(vec![(z, weight)], None)
    }

    pub fn power_law(coeff: f64, exponent: f64, cutoff: f64) -> Result<Self> {
        Self::new(
            Vec::new(),
            Some(PowerPart {
                coeff,
                exponent,
                cutoff,
            }),
        )
    }

    /// Atoms sorted by size.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn power(&self) -> Option<PowerPart> {
        self.power
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.power.is_none()
    }

    /// Largest point of the support.
    pub fn support_max(&self) -> f64 {
        let a = self.atoms.last().map_or(0.0, |a| a.0);
        let p = self.power.map_or(0.0, |p| p.cutoff);
        a.max(p)
    }

    /// Errors unless the measure lives on `(0, 1]`, as required of `ν`.
    pub fn ensure_unit_support(&self) -> Result<()> {
        if self.support_max() > 1.0 {
            return domain(format!(
                "measure must be supported in (0,1], support reaches {}",
                self.support_max()
            ));
        }
        Ok(())
    }

    /// `∫_{(lo,hi]} integrand(z) measure(dz)`; `hi` may be `f64::INFINITY`.
    pub fn integrate(&self, integrand: Integrand, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 0.0) || !(lo < hi) {
            return domain(format!("integration range must satisfy 0 <= lo < hi, got ({lo}, {hi}]"));
        }
        match integrand {
            Integrand::Power(k) => self.integrate_power(k, lo, hi),
            Integrand::MinLinearSquare => {
                let mut total = 0.0;
                if lo < 1.0 {
                    total += self.integrate_power(2, lo, hi.min(1.0))?;
                }
                if hi > 1.0 {
                    total += self.integrate_power(1, lo.max(1.0), hi)?;
                }
                Ok(total)
            }
        }
    }

    fn integrate_power(&self, k: u32, lo: f64, hi: f64) -> Result<f64> {
        let mut total: f64 = self
            .atoms
            .iter()
            .filter(|(z, _)| *z > lo && *z <= hi)
            .map(|(z, w)| w * z.powi(k as i32))
            .sum();
        if let Some(pp) = self.power {
            let a = lo.max(0.0);
            let b = hi.min(pp.cutoff);
            if a < b {
                let e = pp.exponent + k as f64;
                let val = if e == -1.0 {
                    if a == 0.0 {
                        return Err(FlowError::Divergent(format!(
                            "∫ z^{k} c z^{} dz diverges at 0",
                            pp.exponent
                        )));
                    }
                    pp.coeff * (b.ln() - a.ln())
                } else if e < -1.0 && a == 0.0 {
                    return Err(FlowError::Divergent(format!(
                        "∫ z^{k} c z^{} dz diverges at 0",
                        pp.exponent
                    )));
                } else {
                    pp.coeff * (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0)
                };
                total += val;
            }
        }
        Ok(total)
    }

    /// `measure((eps, ∞))`.
    pub fn mass_above(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return domain(format!("tail mass needs eps > 0, got {eps}"));
        }
        self.integrate(Integrand::Power(0), eps, f64::INFINITY)
    }

    /// `∫ z^k measure(dz)` over the whole support.
    pub fn moment(&self, k: u32) -> Result<f64> {
        self.integrate(Integrand::Power(k), 0.0, f64::INFINITY)
    }

    /// `∫_{(0,eps]} z² measure(dz)`, the variance carried by the small jumps.
    pub fn small_jump_variance(&self, eps: f64) -> Result<f64> {
        self.integrate(Integrand::Power(2), 0.0, eps)
    }

    /// `∫_{(eps,∞)} z measure(dz)`, the compensator rate of the simulated jumps.
    pub fn large_jump_mean(&self, eps: f64) -> Result<f64> {
        self.integrate(Integrand::Power(1), eps, f64::INFINITY)
    }

    /// Truncation level such that the small-jump variance is at most
    /// `1e-3 · ∫(z∧z²)` and no atom is truncated.
    pub fn auto_eps(&self) -> Result<f64> {
        let mut eps = self.atoms.first().map_or(1.0, |a| 0.5 * a.0);
        if let Some(pp) = self.power {
            let total = self.integrate(Integrand::MinLinearSquare, 0.0, f64::INFINITY)?;
            let e = pp.exponent + 3.0;
            let cand = (1e-3 * total * e / pp.coeff).powf(1.0 / e);
            eps = eps.min(cand).min(pp.cutoff);
        }
        Ok(eps)
    }

    /// Image of the measure under `z ↦ z·factor`, keeping only the part that
    /// lands in `(0, upper]`.
    pub fn rescaled(&self, factor: f64, upper: f64) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|&(z, w)| (z * factor, w))
            .filter(|&(z, _)| z <= upper)
            .collect();
        let power = self.power.and_then(|pp| {
            // c z^β dz pushed forward by z ↦ f z: density c f^{-β-1} y^β on (0, f ζ].
            let cutoff = (pp.cutoff * factor).min(upper);
            (cutoff > 0.0).then(|| PowerPart {
                coeff: pp.coeff * factor.powf(-pp.exponent - 1.0),
                exponent: pp.exponent,
                cutoff,
            })
        });
        Self::new(atoms, power)
    }

    /// Precomputes the mark distribution restricted to `(eps, ∞)`.
    pub fn jump_sampler(&self, eps: f64) -> Result<JumpSampler> {
        if !(eps > 0.0) {
            return domain(format!("jump sampler needs eps > 0, got {eps}"));
        }
        let atoms: Vec<(f64, f64)> = self.atoms.iter().copied().filter(|a| a.0 > eps).collect();
        let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &(_, w) in &atoms {
            acc += w;
            cumulative.push(acc);
        }
        let power = match self.power {
            Some(pp) if pp.cutoff > eps => {
                let m = JumpMeasure::new(Vec::new(), Some(pp))?.mass_above(eps)?;
                Some((pp, m))
            }
            _ => None,
        };
        let power_mass = power.map_or(0.0, |p| p.1);
        Ok(JumpSampler {
            eps,
            sizes: atoms.iter().map(|a| a.0).collect(),
            cumulative,
            atom_mass,
            power: power.map(|p| p.0),
            power_mass,
        })
    }

    /// One draw from `measure(dz) / measure((eps,∞))` on `(eps, ∞)`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, eps: f64, rng: &mut R) -> Result<f64> {
        let sampler = self.jump_sampler(eps)?;
        if sampler.total_mass() == 0.0 {
            return domain(format!("measure has no mass above eps = {eps}"));
        }
        Ok(sampler.sample(rng))
    }
}

/// Normalized mark distribution of a [`JumpMeasure`] above a threshold.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    eps: f64,
    sizes: Vec<f64>,
    cumulative: Vec<f64>,
    atom_mass: f64,
    power: Option<PowerPart>,
    power_mass: f64,
}

impl JumpSampler {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `measure((eps, ∞))`.
    pub fn total_mass(&self) -> f64 {
        self.atom_mass + self.power_mass
    }

    /// Caller must ensure `total_mass() > 0`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.total_mass();
        if u < self.atom_mass {
            let idx = self.cumulative.partition_point(|&c| c <= u);
            return self.sizes[idx.min(self.sizes.len() - 1)];
        }
        let pp = self.power.expect("power part carries the remaining mass");
        let v: f64 = rng.random();
        let (lo, hi) = (self.eps, pp.cutoff);
        let e = pp.exponent + 1.0;
        let z = if e == 0.0 {
            lo * (hi / lo).powf(v)
        } else {
            let (a, b) = (lo.powf(e), hi.powf(e));
            (a + v * (b - a)).powf(1.0 / e)
        };
        if z > lo {
            z.min(hi)
        } else {
            lo.next_up()
        }
    }
}

/// `(σ, b, m)` of the branching mechanism
/// `φ(z) = b z + σ² z²/2 + ∫ (e^{-zu} - 1 + zu) m(du)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingMechanism {
    pub sigma: f64,
    pub b: f64,
    pub m: JumpMeasure,
}

/// `e^{-x} - 1 + x`, accurate near 0.
fn exp_defect(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0)
    } else {
        x + (-x).exp_m1()
    }
}

impl BranchingMechanism {
    pub fn new(sigma: f64, b: f64, m: JumpMeasure) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return domain(format!("sigma must be finite and >= 0, got {sigma}"));
        }
        if !b.is_finite() {
            return domain(format!("b must be finite, got {b}"));
        }
        m.integrate(Integrand::MinLinearSquare, 0.0, f64::INFINITY)?;
        Ok(Self { sigma, b, m })
    }

    pub fn phi(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return domain(format!("phi is defined on [0,∞), got z = {z}"));
        }
        if z == 0.0 {
            return Ok(0.0);
        }
        let mut val = self.b * z + 0.5 * self.sigma * self.sigma * z * z;
        for &(u, w) in self.m.atoms() {
            val += w * exp_defect(z * u);
        }
        if let Some(pp) = self.m.power() {
            val += power_part_laplace_defect(pp, z);
        }
        Ok(val)
    }
}

/// `∫_0^ζ (e^{-zu} - 1 + zu) c u^β du`: power series on `(0, δ]`, adaptive
/// Simpson in `ln u` on `[δ, ζ]`.
fn power_part_laplace_defect(pp: PowerPart, z: f64) -> f64 {
    let delta = pp.cutoff.min(0.5 / z);
    let mut series = 0.0;
    let mut coef = 1.0; // (-z)^j / j!
    for j in 1..=80u32 {
        coef *= -z / j as f64;
        if j < 2 {
            continue;
        }
        let e = j as f64 + pp.exponent + 1.0;
        let term = coef * delta.powf(e) / e;
        series += term;
        if term.abs() < 1e-18 * series.abs().max(1e-300) {
            break;
        }
    }
    let mut val = pp.coeff * series;
    if delta < pp.cutoff {
        let beta1 = pp.exponent + 1.0;
        let f = |s: f64| {
            let u = s.exp();
            exp_defect(z * u) * (s * beta1).exp()
        };
        val += pp.coeff * adaptive_simpson(f, delta.ln(), pp.cutoff.ln(), PHI_QUAD_TOL / pp.coeff);
    }
    val
}

/// `∫_0^1 z^k (1-z)^{p-k} ν(dz)`, the merger coefficient of `k` among `p` lineages.
pub fn beta_coeff(nu: &JumpMeasure, p: u32, k: u32) -> Result<f64> {
    if k < 2 || k > p {
        return domain(format!("beta_coeff needs 2 <= k <= p, got k = {k}, p = {p}"));
    }
    nu.ensure_unit_support()?;
    let rest = (p - k) as i32;
    let mut total: f64 = nu
        .atoms()
        .iter()
        .map(|&(z, w)| w * z.powi(k as i32) * (1.0 - z).powi(rest))
        .sum();
    if let Some(pp) = nu.power() {
        // c ∫_0^ζ z^{a-1}(1-z)^{b-1} dz = c B(a,b) I_ζ(a,b).
        let a = k as f64 + pp.exponent + 1.0;
        let b = (p - k) as f64 + 1.0;
        let full = statrs::function::beta::beta(a, b);
        let frac = if pp.cutoff >= 1.0 {
            1.0
        } else {
            statrs::function::beta::beta_reg(a, b, pp.cutoff)
        };
        total += pp.coeff * full * frac;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelDomain {
    /// `[0, 1]` with values in `[0, 1]` (Fleming–Viot immigration).
    UnitInterval,
    /// `[0, ∞)` (CBI immigration), extended constantly past the last knot.
    HalfLine,
}

/// Piecewise-linear nondecreasing function given by knots `(v, value)`,
/// starting at `v = 0` and constant past the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmigrationFunction {
    knots: Vec<(f64, f64)>,
    domain: LabelDomain,
}

impl ImmigrationFunction {
    pub fn new(knots: Vec<(f64, f64)>, domain: LabelDomain) -> Result<Self> {
        let Some(&(v0, g0)) = knots.first() else {
            return self::domain("immigration function needs at least one knot");
        };
        if v0 != 0.0 {
            return self::domain(format!("first knot must sit at v = 0, got {v0}"));
        }
        if !(g0 >= 0.0) {
            return self::domain(format!("immigration value at 0 must be >= 0, got {g0}"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return self::domain("knot positions must be strictly increasing");
            }
            if !(w[1].1 >= w[0].1) {
                return self::domain("immigration function must be nondecreasing");
            }
        }
        if knots.iter().any(|k| !k.0.is_finite() || !k.1.is_finite()) {
            return self::domain("knots must be finite");
        }
        if domain == LabelDomain::UnitInterval {
            let (vl, gl) = *knots.last().unwrap();
            if vl > 1.0 {
                return self::domain(format!("unit-interval knots must lie in [0,1], got {vl}"));
            }
            if gl > 1.0 {
                return self::domain(format!("unit-interval values must lie in [0,1], got {gl}"));
            }
        }
        Ok(Self { knots, domain })
    }

    pub fn constant(value: f64, domain: LabelDomain) -> Result<Self> {
        Self::new(vec![(0.0, value)], domain)
    }

    /// `v ↦ slope·v` on `[0, v_max]`, constant afterwards.
    pub fn linear(slope: f64, v_max: f64, domain: LabelDomain) -> Result<Self> {
        Self::new(vec![(0.0, 0.0), (v_max, slope * v_max)], domain)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn domain(&self) -> LabelDomain {
        self.domain
    }

    pub fn eval(&self, v: f64) -> f64 {
        let idx = self.knots.partition_point(|k| k.0 <= v);
        if idx == 0 {
            return self.knots[0].1;
        }
        if idx == self.knots.len() {
            return self.knots[idx - 1].1;
        }
        let (v0, g0) = self.knots[idx - 1];
        let (v1, g1) = self.knots[idx];
        g0 + (g1 - g0) * (v - v0) / (v1 - v0)
    }

    /// Pointwise multiple `factor·γ` (`factor >= 0`), as a half-line function.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) {
            return domain(format!("scale factor must be >= 0, got {factor}"));
        }
        Self::new(
            self.knots.iter().map(|&(v, g)| (v, g * factor)).collect(),
            LabelDomain::HalfLine,
        )
    }
}

//! Driving randomness: counter-based substreams, white-noise cell integrals
//! and Poisson random measure atoms.
//!
//! Every stream is a ChaCha8 keystream keyed by the run seed and positioned on
//! a 64-bit stream id derived from `(replica, channel)`, so replicas can run on
//! any thread in any order and still draw identical numbers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{domain, FlowError, Result};
use crate::mechanisms::{JumpMeasure, JumpSampler};

/// Upper bound on the expected number of atoms per step.
pub const MAX_ATOMS_PER_STEP: f64 = 1e6;

const INDEX_BITS: u32 = 20;
const CHANNEL_BITS: u32 = 4;
const REPLICA_BITS: u32 = 64 - INDEX_BITS - CHANNEL_BITS;

/// Independent noise sources used inside one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Diffusion,
    Jumps,
}

impl Channel {
    fn tag(self) -> u64 {
        match self {
            Channel::Diffusion => 0,
            Channel::Jumps => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Diffusion => "diffusion",
            Channel::Jumps => "jumps",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [Channel::Diffusion, Channel::Jumps]
            .into_iter()
            .find(|c| c.name() == name)
    }
}

/// A single-owner random stream identified by `(seed, replica, channel)`.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    replica: u64,
    channel: Channel,
    rng: ChaCha8Rng,
}

/// Deterministic, collision-free stream for `(seed, replica, channel)`.
pub fn derive_substream(seed: u64, replica: u64, channel: Channel) -> RandomStream {
    derive_indexed_substream(seed, replica, channel, 0)
}

/// Like [`derive_substream`], with an extra index for components that need
/// several independent streams per channel (one per label increment, say).
pub fn derive_indexed_substream(seed: u64, replica: u64, channel: Channel, index: u64) -> RandomStream {
    assert!(replica < (1u64 << REPLICA_BITS), "replica index out of range");
    assert!(index < (1u64 << INDEX_BITS), "substream index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replica << (CHANNEL_BITS + INDEX_BITS)) | (channel.tag() << INDEX_BITS) | index);
    RandomStream {
        seed,
        replica,
        channel,
        rng,
    }
}

impl RandomStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Poisson count with the given mean (`mean >= 0`).
    #[inline]
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let p = Poisson::new(mean).expect("finite positive Poisson mean");
        let n: f64 = p.sample(&mut self.rng);
        n as u64
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Integrals of a space-time white noise over `(0, dt] × (b_{j-1}, b_j]`:
/// independent `N(0, dt·(b_j - b_{j-1}))`, exactly 0 for empty cells.
pub fn gaussian_partition_increments(boundaries: &[f64], dt: f64, rng: &mut RandomStream) -> Vec<f64> {
    let mut out = Vec::with_capacity(boundaries.len().saturating_sub(1));
    gaussian_partition_increments_into(boundaries, dt, 1.0, rng, &mut out);
    out
}

/// Allocation-free variant with an extra variance multiplier per unit width.
#[inline]
pub fn gaussian_partition_increments_into(
    boundaries: &[f64],
    dt: f64,
    intensity: f64,
    rng: &mut RandomStream,
    out: &mut Vec<f64>,
) {
    out.clear();
    for w in boundaries.windows(2) {
        let width = w[1] - w[0];
        if width > 0.0 {
            out.push((dt * width * intensity).sqrt() * rng.normal());
        } else {
            out.push(0.0);
        }
    }
}

/// One atom of a Poisson random measure inside a time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonAtom {
    /// Offset from the start of the step, in `[0, dt)`.
    pub time: f64,
    pub z: f64,
    /// Position on the `u`-axis, in `(0, u_range]`.
    pub u: f64,
}

/// Atoms of the PRM with intensity `ds · measure(dz) · du` on
/// `[0, dt) × (eps, ∞) × (0, u_range]`, sorted by time.
pub fn sample_atoms(
    measure: &JumpMeasure,
    u_range: f64,
    dt: f64,
    eps: f64,
    rng: &mut RandomStream,
) -> Result<Vec<PoissonAtom>> {
    let source = AtomSource::new(measure, eps)?;
    let mut out = Vec::new();
    source.sample_into(u_range, dt, rng, &mut out)?;
    Ok(out)
}

/// Reusable atom generator for a fixed measure and truncation level.
#[derive(Debug, Clone)]
pub struct AtomSource {
    sampler: JumpSampler,
}

impl AtomSource {
    pub fn new(measure: &JumpMeasure, eps: f64) -> Result<Self> {
        let sampler = measure.jump_sampler(eps)?;
        if !sampler.total_mass().is_finite() {
            return domain("measure above eps must be finite");
        }
        Ok(Self { sampler })
    }

    /// `measure((eps, ∞))`.
    pub fn rate(&self) -> f64 {
        self.sampler.total_mass()
    }

    pub fn eps(&self) -> f64 {
        self.sampler.eps()
    }

    pub fn sample_into(&self, u_range: f64, dt: f64, rng: &mut RandomStream, out: &mut Vec<PoissonAtom>) -> Result<()> {
        out.clear();
        let mass = self.sampler.total_mass();
        if mass == 0.0 || !(u_range > 0.0) {
            return Ok(());
        }
        let mean = dt * u_range * mass;
        if mean > MAX_ATOMS_PER_STEP {
            return Err(FlowError::RateCap {
                rate: mean,
                cap: MAX_ATOMS_PER_STEP,
            });
        }
        let n = rng.poisson(mean);
        for _ in 0..n {
            let time = dt * rng.uniform();
            let z = self.sampler.sample(rng);
            let u = (1.0 - rng.uniform()) * u_range;
            out.push(PoissonAtom { time, z, u });
        }
        if out.len() > 1 {
            out.sort_by(|a, b| a.time.total_cmp(&b.time));
        }
        Ok(())
    }
}

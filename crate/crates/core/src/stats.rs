//! Seeded random streams and the empirical distributions built from their samples.
//!
//! Every stochastic routine in the crate draws from a [`RandomStream`]. A stream
//! is a ChaCha8 generator keyed by 256 bits derived from a 64-bit seed; forking
//! derives a fresh key from the parent key and a task index, so parallel work is
//! reproducible regardless of scheduling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid_arg, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_from_key(key: &[u64; 4]) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    for (chunk, word) in bytes.chunks_exact_mut(8).zip(key) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// A reproducible, forkable source of uniform deviates.
#[derive(Debug)]
pub struct RandomStream {
    seed: u64,
    key: [u64; 4],
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

/// Creates the root stream for `seed`.
pub fn make_stream(seed: u64) -> RandomStream {
    RandomStream::new(seed)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let key = [
            splitmix64(&mut state),
            splitmix64(&mut state),
            splitmix64(&mut state),
            splitmix64(&mut state),
        ];
        Self::from_key(seed, key)
    }

    fn from_key(seed: u64, key: [u64; 4]) -> Self {
        Self {
            seed,
            rng: rng_from_key(&key),
            key,
            spare_normal: None,
        }
    }

    /// The seed of the root stream this stream descends from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives the `index`-th child stream. The parent is not advanced, so
    /// `fork(k)` always yields the same child.
    pub fn fork(&self, index: u64) -> RandomStream {
        let mut state = self.key[0] ^ index.wrapping_mul(GOLDEN_GAMMA) ^ 0x6A09_E667_F3BC_C909;
        let mut key = [0u64; 4];
        for (slot, parent) in key.iter_mut().zip(&self.key) {
            *slot = splitmix64(&mut state) ^ parent.rotate_left(23);
        }
        Self::from_key(self.seed, key)
    }

    /// Uniform deviate in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform deviate in `(0, 1]`, safe to pass to `ln`.
    #[inline]
    pub fn uniform_open_left(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Fair sign, `+1.0` or `-1.0`.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal deviate (Box-Muller; the second variate of each pair is cached).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open_left();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }
}

/// Draws from `N(mean, stddev²)`. A zero `stddev` returns `mean` without
/// consuming randomness.
pub fn sample_gaussian(stream: &mut RandomStream, mean: f64, stddev: f64) -> Result<f64> {
    if !(stddev >= 0.0) || !stddev.is_finite() || !mean.is_finite() {
        return Err(invalid_arg!(
            "gaussian needs finite mean and stddev >= 0, got mean={mean}, stddev={stddev}"
        ));
    }
    if stddev == 0.0 {
        return Ok(mean);
    }
    Ok(mean + stddev * stream.standard_normal())
}

/// Inverse CDF of the planar cosine law: maps a uniform deviate to the angle
/// `θ ∈ [-π/2, π/2]` whose density is `½ cos θ`.
pub fn cosine_angle_from_uniform(u: f64) -> f64 {
    (2.0 * u - 1.0).clamp(-1.0, 1.0).asin()
}

/// CDF of the planar cosine law, `(1 + sin θ) / 2`.
pub fn cosine_angle_cdf(theta: f64) -> f64 {
    let t = theta.clamp(-PI / 2.0, PI / 2.0);
    0.5 * (1.0 + t.sin())
}

/// Unit vector in the upper half-space of `R^{k+1}` with density proportional
/// to `⟨v, n⟩` on the hemisphere, `n` being the last basis vector.
///
/// For `k = 1` the result is `(sin θ, cos θ)` with `θ` drawn by
/// [`cosine_angle_from_uniform`]; for `k = 2`, `cos θ = √U` and the azimuth is
/// uniform.
pub fn sample_cosine_direction(stream: &mut RandomStream, k: usize) -> Result<Vec<f64>> {
    match k {
        1 => {
            let theta = cosine_angle_from_uniform(stream.uniform());
            let (s, c) = theta.sin_cos();
            Ok(vec![s, c])
        }
        2 => {
            let cos_t = stream.uniform().sqrt();
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let (s, c) = (2.0 * PI * stream.uniform()).sin_cos();
            Ok(vec![sin_t * c, sin_t * s, cos_t])
        }
        _ => Err(invalid_arg!("cosine direction supports k in {{1, 2}}, got {k}")),
    }
}

/// A normalized histogram over strictly increasing bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Builds a distribution from bin edges and nonnegative bin weights, which
    /// are normalized to unit total mass.
    pub fn new(edges: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_edges(&edges)?;
        if weights.len() + 1 != edges.len() {
            return Err(invalid_arg!(
                "{} edges need {} masses, got {}",
                edges.len(),
                edges.len() - 1,
                weights.len()
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(invalid_arg!("bin masses must be finite and nonnegative, found {w}"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid_arg!("histogram has zero total mass"));
        }
        let masses = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { edges, masses })
    }

    /// Histogram of `samples`. Samples below the first or above the last edge
    /// are counted in the end bins.
    pub fn from_samples(edges: Vec<f64>, samples: &[f64]) -> Result<Self> {
        validate_edges(&edges)?;
        let mut counts = vec![0.0; edges.len() - 1];
        for &x in samples {
            counts[bin_index(&edges, x)] += 1.0;
        }
        Self::new(edges, counts)
    }

    /// Bin masses `F(e_{i+1}) - F(e_i)` of a distribution given by its CDF,
    /// renormalized to the covered range.
    pub fn from_cdf(edges: Vec<f64>, cdf: impl Fn(f64) -> f64) -> Result<Self> {
        validate_edges(&edges)?;
        let weights = edges
            .windows(2)
            .map(|w| (cdf(w[1]) - cdf(w[0])).max(0.0))
            .collect();
        Self::new(edges, weights)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Piecewise-constant density value on each bin.
    pub fn densities(&self) -> Vec<f64> {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, w)| m / (w[1] - w[0]))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, w)| m * 0.5 * (w[0] + w[1]))
            .sum()
    }
}

/// Uniform bin edges `lo, lo + h, ..., hi`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let h = (hi - lo) / bins as f64;
    (0..=bins).map(|i| lo + h * i as f64).collect()
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid_arg!("need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid_arg!("bin edges must be finite and strictly increasing"));
    }
    Ok(())
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    // partition_point gives the number of edges <= x
    let k = edges.partition_point(|&e| e <= x);
    k.saturating_sub(1).min(bins - 1)
}

/// Total variation distance `½ Σ |p_i - q_i|` between histograms on the same bins.
pub fn tv_distance(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    let same_edges = p.edges.len() == q.edges.len()
        && p.edges
            .iter()
            .zip(&q.edges)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    if !same_edges {
        return Err(invalid_arg!("total variation needs identical bin edges"));
    }
    let tv = 0.5 * p.masses.iter().zip(&q.masses).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(tv.clamp(0.0, 1.0))
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid_arg!("KS distance needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(invalid_arg!("KS distance got a NaN sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut prev_f = f64::NEG_INFINITY;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(invalid_arg!("cdf returned {f} at {x}, outside [0, 1]"));
        }
        if f < prev_f - 1e-12 {
            return Err(invalid_arg!("cdf is decreasing near {x}"));
        }
        prev_f = f;
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

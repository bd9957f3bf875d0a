//! Gibbs canonical wall states and equilibrium molecule states.
//!
//! A wall with configuration space `M` (dimension `m`), potential `U` and inverse
//! temperature `β` is in thermal equilibrium when its state `(q, v)` has density
//! proportional to `exp(-β(½|v|² + U(q)))`. Writing the state as total energy
//! `ℰ`, position `q` and direction `u`, the speed is `h_ℰ(q) = √(2(ℰ - U(q)))`
//! and the Liouville volume picks up a factor `h_ℰ(q)^{m-2}`.
//!
//! Two families of samplers live here. The `sequential` ones follow the
//! energy-first recipe literally: draw `ℰ` with density `∝ e^{-βℰ}`, then `q`
//! with density `∝ h_ℰ^{m-2}` on the sublevel set. That recipe is exactly Gibbs
//! only when `∫ h_ℰ^{m-2} dq` does not depend on `ℰ` (for instance `m = 2` with
//! the sublevel set covering the domain). The plain samplers draw from the
//! canonical law directly and are what the spring-mass chain relies on.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid_arg, Error, Result};
use crate::stats::{sample_cosine_direction, RandomStream};

/// Attempt budget for rejection samplers.
pub const MAX_REJECTION_ATTEMPTS: usize = 10_000_000;

/// Potential energy of the wall as a function of position.
#[derive(Clone)]
pub enum Potential {
    Flat,
    /// `½·stiffness·|q - center|²`
    Quadratic { center: Vec<f64>, stiffness: f64 },
    /// Arbitrary potential with a known lower bound on the domain.
    Custom {
        func: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        floor: f64,
    },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Flat => write!(f, "Flat"),
            Potential::Quadratic { center, stiffness } => f
                .debug_struct("Quadratic")
                .field("center", center)
                .field("stiffness", stiffness)
                .finish(),
            Potential::Custom { floor, .. } => f.debug_struct("Custom").field("floor", floor).finish_non_exhaustive(),
        }
    }
}

impl Potential {
    pub fn eval(&self, q: &[f64]) -> f64 {
        match self {
            Potential::Flat => 0.0,
            Potential::Quadratic { center, stiffness } => {
                0.5 * stiffness * q.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum::<f64>()
            }
            Potential::Custom { func, .. } => func(q),
        }
    }

    /// A lower bound of the potential.
    pub fn floor(&self) -> f64 {
        match self {
            Potential::Flat | Potential::Quadratic { .. } => 0.0,
            Potential::Custom { floor, .. } => *floor,
        }
    }
}

/// A wall system: a potential on a configuration box at inverse temperature `β`.
#[derive(Debug, Clone)]
pub struct GibbsSystemSpec {
    pub dim: usize,
    pub potential: Potential,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub beta: f64,
}

impl GibbsSystemSpec {
    pub fn new(potential: Potential, lower: Vec<f64>, upper: Vec<f64>, beta: f64) -> Result<Self> {
        let spec = Self {
            dim: lower.len(),
            potential,
            lower,
            upper,
            beta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.lower.len() != self.dim || self.upper.len() != self.dim {
            return Err(invalid_arg!(
                "domain needs one bound pair per coordinate (dim {}, {} lower, {} upper)",
                self.dim,
                self.lower.len(),
                self.upper.len()
            ));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return Err(invalid_arg!("every domain interval must be finite and nonempty"));
        }
        check_beta(self.beta)?;
        if let Potential::Quadratic { center, stiffness } = &self.potential {
            if center.len() != self.dim || !(*stiffness > 0.0) {
                return Err(invalid_arg!("quadratic potential needs a {}-dim center and stiffness > 0", self.dim));
            }
        }
        Ok(())
    }

    fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    fn uniform_point(&self, stream: &mut RandomStream) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * stream.uniform())
            .collect()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid_arg!("inverse temperature must be positive, got {beta}"));
    }
    Ok(())
}

/// `h_ℰ = √(2(ℰ - u))` where `ℰ > u`, zero elsewhere.
pub fn h_energy(energy: f64, u: f64) -> f64 {
    if energy > u {
        (2.0 * (energy - u)).sqrt()
    } else {
        0.0
    }
}

/// Inverse-CDF map for the exponential energy law: `ℰ = -ln(u)/β`.
pub fn energy_from_uniform(u: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(u > 0.0 && u <= 1.0) {
        return Err(invalid_arg!("uniform deviate must lie in (0, 1], got {u}"));
    }
    Ok(-u.ln() / beta)
}

/// Energy with density `β e^{-βℰ}`.
pub fn sample_energy(beta: f64, stream: &mut RandomStream) -> Result<f64> {
    energy_from_uniform(stream.uniform_open_left(), beta)
}

/// Uniform unit vector on the sphere `S^{m-1}`.
pub fn sample_sphere(m: usize, stream: &mut RandomStream) -> Result<Vec<f64>> {
    match m {
        0 => Err(invalid_arg!("sphere dimension must be at least 1")),
        1 => Ok(vec![stream.sign()]),
        _ => loop {
            let v: Vec<f64> = (0..m).map(|_| stream.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                return Ok(v.into_iter().map(|x| x / norm).collect());
            }
        },
    }
}

/// Position in `{q : U(q) < ℰ}` with density `∝ h_ℰ(q)^exponent`.
///
/// One-dimensional quadratic potentials with exponent `-1` use the exact arcsine
/// transform; other one-dimensional cases with exponent `> -2` use an inverse CDF
/// tabulated on a fine grid; nonnegative exponents in any dimension use rejection
/// against the uniform law on the domain.
pub fn sample_position_weighted(
    energy: f64,
    spec: &GibbsSystemSpec,
    exponent: f64,
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if !energy.is_finite() || energy <= spec.potential.floor() {
        return Err(invalid_arg!(
            "energy {energy} does not exceed the potential floor {}; sublevel set is empty",
            spec.potential.floor()
        ));
    }
    if spec.dim == 1 {
        if let (Potential::Quadratic { center, stiffness }, true) = (&spec.potential, exponent == -1.0) {
            return Ok(vec![arcsine_position(energy, center[0], *stiffness, spec.lower[0], spec.upper[0], stream.uniform())?]);
        }
        if exponent > -2.0 {
            return Ok(vec![TabulatedSublevel::new(energy, spec, exponent)?.sample(stream.uniform())]);
        }
    }
    if exponent >= 0.0 {
        return rejection_position(energy, spec, exponent, stream);
    }
    Err(invalid_arg!(
        "exponent {exponent} is only supported in one dimension (got dimension {})",
        spec.dim
    ))
}

/// `c + A sin θ`, `θ` uniform between the angles where the oscillation of
/// amplitude `A = √(2ℰ/k)` meets the domain ends. This has density `∝ h_ℰ⁻¹`.
fn arcsine_position(energy: f64, c: f64, stiffness: f64, lo: f64, hi: f64, u: f64) -> Result<f64> {
    let amp = (2.0 * energy / stiffness).sqrt();
    let th_lo = ((lo - c) / amp).clamp(-1.0, 1.0).asin();
    let th_hi = ((hi - c) / amp).clamp(-1.0, 1.0).asin();
    if !(th_hi > th_lo) {
        return Err(invalid_arg!("sublevel set at energy {energy} misses the domain [{lo}, {hi}]"));
    }
    Ok(c + amp * (th_lo + u * (th_hi - th_lo)).sin())
}

const TABLE_POINTS: usize = 4096;

/// Inverse CDF for density `∝ G^{e/2}` with `G = 2(ℰ - U)` interpolated linearly
/// between grid points and clipped at zero.
struct TabulatedSublevel {
    x: Vec<f64>,
    g: Vec<f64>,
    cum: Vec<f64>,
    half_exp: f64,
}

impl TabulatedSublevel {
    fn new(energy: f64, spec: &GibbsSystemSpec, exponent: f64) -> Result<Self> {
        let (lo, hi) = (spec.lower[0], spec.upper[0]);
        let mut x = Vec::with_capacity(TABLE_POINTS + 64);
        let mut g = Vec::with_capacity(TABLE_POINTS + 64);
        let g_at = |q: f64| 2.0 * (energy - spec.potential.eval(&[q]));
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=TABLE_POINTS {
            let q = lo + (hi - lo) * i as f64 / TABLE_POINTS as f64;
            let gq = g_at(q);
            if let Some((xp, gp)) = prev {
                // split at the zero of the linear interpolant
                if (gp > 0.0) != (gq > 0.0) && gp != 0.0 && gq != 0.0 {
                    let t = gp / (gp - gq);
                    x.push(xp + t * (q - xp));
                    g.push(0.0);
                }
            }
            prev = Some((q, gq));
            x.push(q);
            g.push(gq.max(0.0));
        }
        let half_exp = exponent / 2.0;
        let mut cum = vec![0.0; x.len()];
        for i in 1..x.len() {
            cum[i] = cum[i - 1] + segment_mass(g[i - 1], g[i], x[i] - x[i - 1], half_exp);
        }
        let total = *cum.last().unwrap();
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid_arg!("sublevel set at energy {energy} has no mass on the domain"));
        }
        Ok(Self { x, g, cum, half_exp })
    }

    fn sample(&self, u: f64) -> f64 {
        let target = u * self.cum.last().unwrap();
        let i = self.cum.partition_point(|c| *c <= target).clamp(1, self.cum.len() - 1);
        let (g0, g1, dx) = (self.g[i - 1], self.g[i], self.x[i] - self.x[i - 1]);
        let r = target - self.cum[i - 1];
        let p = self.half_exp + 1.0;
        let slope = (g1 - g0) / dx;
        let t = if slope.abs() < 1e-12 * (g0.abs() + g1.abs()).max(1e-300) {
            if g0 > 0.0 { r / g0.powf(self.half_exp) } else { 0.0 }
        } else {
            // ∫₀ᵗ (g0 + s τ)^{e/2} dτ = ((g0 + s t)^p - g0^p) / (s p)
            let inner = g0.powf(p) + r * slope * p;
            (inner.max(0.0).powf(1.0 / p) - g0) / slope
        };
        self.x[i - 1] + t.clamp(0.0, dx)
    }
}

fn segment_mass(g0: f64, g1: f64, dx: f64, half_exp: f64) -> f64 {
    if g0 <= 0.0 && g1 <= 0.0 {
        return 0.0;
    }
    let p = half_exp + 1.0;
    if (g1 - g0).abs() < 1e-12 * (g0 + g1) {
        return dx * (0.5 * (g0 + g1)).powf(half_exp);
    }
    (g1.powf(p) - g0.powf(p)) / ((g1 - g0) / dx * p)
}

fn rejection_position(energy: f64, spec: &GibbsSystemSpec, exponent: f64, stream: &mut RandomStream) -> Result<Vec<f64>> {
    let h_max = h_energy(energy, spec.potential.floor());
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let q = spec.uniform_point(stream);
        let u = spec.potential.eval(&q);
        if u >= energy {
            continue;
        }
        if exponent == 0.0 || stream.uniform() < (h_energy(energy, u) / h_max).powf(exponent) {
            return Ok(q);
        }
    }
    Err(Error::Numeric(format!(
        "rejection sampling at energy {energy} accepted nothing in {MAX_REJECTION_ATTEMPTS} attempts"
    )))
}

/// Position with density `∝ h_ℰ^{m-2}` (the wall's microcanonical position law).
pub fn sample_wall_position(energy: f64, spec: &GibbsSystemSpec, stream: &mut RandomStream) -> Result<Vec<f64>> {
    sample_position_weighted(energy, spec, spec.dim as f64 - 2.0, stream)
}

/// Phase-space point of a wall or molecule, with its total energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub velocity: Vec<f64>,
    pub energy: f64,
}

/// Energy-first wall state: `ℰ` exponential, `q ∝ h_ℰ^{m-2}`, direction
/// uniform on the sphere and speed `h_ℰ(q)`.
pub fn sample_wall_state_sequential(spec: &GibbsSystemSpec, stream: &mut RandomStream) -> Result<PhaseState> {
    spec.validate()?;
    let floor = spec.potential.floor();
    let energy = floor + sample_energy(spec.beta, stream)?;
    let q = sample_wall_position(energy, spec, stream)?;
    let speed = h_energy(energy, spec.potential.eval(&q));
    let velocity = sample_sphere(spec.dim, stream)?.into_iter().map(|u| speed * u).collect();
    Ok(PhaseState { q, velocity, energy })
}

/// Wall state drawn from the canonical law `∝ exp(-β(½|v|² + U(q)))`.
pub fn sample_wall_state(spec: &GibbsSystemSpec, stream: &mut RandomStream) -> Result<PhaseState> {
    spec.validate()?;
    let q = boltzmann_position(&spec.potential, spec, stream)?;
    let sd = 1.0 / spec.beta.sqrt();
    let velocity: Vec<f64> = (0..spec.dim).map(|_| sd * stream.standard_normal()).collect();
    let energy = 0.5 * velocity.iter().map(|v| v * v).sum::<f64>() + spec.potential.eval(&q);
    Ok(PhaseState { q, velocity, energy })
}

/// `q ∝ e^{-βU(q)}` on the domain, by rejection from the uniform law.
fn boltzmann_position(potential: &Potential, spec: &GibbsSystemSpec, stream: &mut RandomStream) -> Result<Vec<f64>> {
    if let Potential::Flat = potential {
        return Ok(spec.uniform_point(stream));
    }
    let floor = potential.floor();
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let q = spec.uniform_point(stream);
        let excess = potential.eval(&q) - floor;
        if excess < -1e-12 {
            return Err(invalid_arg!("potential {} dips below its declared floor {floor}", excess + floor));
        }
        if stream.uniform() < (-spec.beta * excess.max(0.0)).exp() {
            return Ok(q);
        }
    }
    Err(Error::Numeric(format!(
        "Boltzmann position sampler accepted nothing in {MAX_REJECTION_ATTEMPTS} attempts (volume {})",
        spec.volume()
    )))
}

/// Molecule side of an equilibrium: the boundary coordinates it can enter at
/// (possibly none) and the dimension of its velocity.
#[derive(Debug, Clone)]
pub struct MoleculeSpec {
    pub velocity_dim: usize,
    /// Position on the entry boundary; `None` for a point molecule at a flat wall.
    pub boundary: Option<GibbsSystemSpec>,
    pub beta: f64,
}

impl MoleculeSpec {
    /// A point molecule moving along the wall normal.
    pub fn point(beta: f64) -> Self {
        Self {
            velocity_dim: 1,
            boundary: None,
            beta,
        }
    }

    fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(1..=3).contains(&self.velocity_dim) {
            return Err(invalid_arg!("molecule velocity dimension must be 1, 2 or 3, got {}", self.velocity_dim));
        }
        if let Some(b) = &self.boundary {
            b.validate()?;
        }
        Ok(())
    }

    fn cosine_direction(&self, stream: &mut RandomStream) -> Result<Vec<f64>> {
        match self.velocity_dim {
            1 => Ok(vec![1.0]),
            d => sample_cosine_direction(stream, d - 1),
        }
    }
}

/// Equilibrium state of a molecule crossing into the wall region: position
/// `∝ e^{-βU}` on the entry boundary, velocity with density
/// `∝ cos θ · exp(-β|v|²/2)` on the inward half-space.
///
/// The kinetic energy `|v|²/2` of that law is `Gamma((d+1)/2, β)` for
/// velocity dimension `d`, drawn as a sum of `d + 1` squared normals.
pub fn sample_stationary_molecule(spec: &MoleculeSpec, stream: &mut RandomStream) -> Result<PhaseState> {
    spec.validate()?;
    let (q, potential) = match &spec.boundary {
        Some(b) => {
            let q = boltzmann_position(&b.potential, b, stream)?;
            let u = b.potential.eval(&q);
            (q, u)
        }
        None => (Vec::new(), 0.0),
    };
    let kinetic: f64 = (0..=spec.velocity_dim).map(|_| stream.standard_normal().powi(2)).sum::<f64>() / (2.0 * spec.beta);
    let speed = (2.0 * kinetic).sqrt();
    let velocity = spec.cosine_direction(stream)?.into_iter().map(|u| speed * u).collect();
    Ok(PhaseState {
        q,
        velocity,
        energy: kinetic + potential,
    })
}

/// Energy-first equilibrium molecule: `ℰ` exponential, boundary position
/// `∝ h_ℰ^{m-1}` (`m` the boundary dimension), cosine-law direction, speed `h_ℰ(q)`.
pub fn sample_stationary_molecule_sequential(spec: &MoleculeSpec, stream: &mut RandomStream) -> Result<PhaseState> {
    spec.validate()?;
    let (energy, q, u) = match &spec.boundary {
        Some(b) => {
            let energy = b.potential.floor() + sample_energy(spec.beta, stream)?;
            let q = sample_position_weighted(energy, b, b.dim as f64 - 1.0, stream)?;
            let u = b.potential.eval(&q);
            (energy, q, u)
        }
        None => (sample_energy(spec.beta, stream)?, Vec::new(), 0.0),
    };
    let speed = h_energy(energy, u);
    let velocity = spec.cosine_direction(stream)?.into_iter().map(|d| speed * d).collect();
    Ok(PhaseState { q, velocity, energy })
}

/// Physical parameters of the spring-mass wall.
///
/// The bound mass `m1` sits on a spring centred at `l/2` inside `[0, l]`, with
/// hard walls at both ends; the free mass `m2` enters through the top at `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringMassParams {
    pub m1: f64,
    pub m2: f64,
    pub k: f64,
    pub l: f64,
    pub beta: f64,
}

impl SpringMassParams {
    pub fn new(m1: f64, m2: f64, k: f64, l: f64, beta: f64) -> Result<Self> {
        let p = Self { m1, m2, k, l, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("m1", self.m1), ("m2", self.m2), ("k", self.k), ("l", self.l), ("beta", self.beta)] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(invalid_arg!("spring-mass parameter {name} must be positive, got {x}"));
            }
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        (self.k / self.m1).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega()
    }

    /// `L(ℰ) = min{1, (l/2)√(k/2ℰ)}`.
    pub fn reach(&self, energy: f64) -> f64 {
        (0.5 * self.l * (self.k / (2.0 * energy)).sqrt()).min(1.0)
    }

    /// Spring energy `½k(x₁ - l/2)²`.
    pub fn spring_energy(&self, x1: f64) -> f64 {
        0.5 * self.k * (x1 - 0.5 * self.l).powi(2)
    }

    /// Density `βm₂u e^{-βm₂u²/2}` of the free mass's speed at equilibrium.
    pub fn stationary_density(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let a = self.beta * self.m2;
        a * u * (-0.5 * a * u * u).exp()
    }

    pub fn stationary_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        -(-0.5 * self.beta * self.m2 * u * u).exp_m1()
    }
}

/// Bound-mass position `l/2 + √(2ℰ/k)·sin((2U₂ - 1) arcsin L(ℰ))`, which has
/// density `∝ h_ℰ⁻¹` on the part of `[0, l]` the spring can reach with energy `ℰ`.
pub fn spring_wall_position(energy: f64, u2: f64, params: &SpringMassParams) -> f64 {
    let amp = (2.0 * energy / params.k).sqrt();
    0.5 * params.l + amp * ((2.0 * u2 - 1.0) * params.reach(energy).asin()).sin()
}

/// Bound-mass state in equilibrium with the spring at inverse temperature `β`.
///
/// The energy is exponential but accepted with probability
/// `arcsin L(ℰ) / (π/2)`: the arcsine position law has total weight
/// proportional to `arcsin L(ℰ)`, and without this factor energies large
/// enough to reach the walls would be over-represented.
pub fn sample_spring_wall(params: &SpringMassParams, stream: &mut RandomStream) -> Result<(f64, f64)> {
    params.validate()?;
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let energy = sample_energy(params.beta, stream)?;
        if stream.uniform() * FRAC_PI_2 < params.reach(energy).asin() {
            return Ok(spring_wall_state(energy, stream.uniform(), stream.sign(), params));
        }
    }
    Err(Error::Numeric("spring energy sampler accepted nothing".into()))
}

fn spring_wall_state(energy: f64, u2: f64, sign: f64, params: &SpringMassParams) -> (f64, f64) {
    let x1 = spring_wall_position(energy, u2, params);
    let kinetic = (energy - params.spring_energy(x1)).max(0.0);
    (x1, sign * (2.0 * kinetic / params.m1).sqrt())
}

/// Summary of one deterministic spring-mass flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringFlight {
    /// Outgoing speed of the free mass.
    pub speed: f64,
    pub collisions: usize,
    pub events: usize,
    pub energy_in: f64,
    pub energy_out: f64,
}

pub const SPRING_EVENT_CAP: usize = 1_000_000;
const TIME_TOL: f64 = 1e-12;
const SCAN_DIVISIONS: f64 = 64.0;

/// Bound-mass trajectory `x₁(t) = c + R cos(ωt - φ)`.
struct Oscillation {
    c: f64,
    r: f64,
    phi: f64,
    omega: f64,
}

impl Oscillation {
    fn new(x1: f64, v1: f64, c: f64, omega: f64) -> Self {
        let (dx, dv) = (x1 - c, v1 / omega);
        Self {
            c,
            r: dx.hypot(dv),
            phi: dv.atan2(dx),
            omega,
        }
    }

    fn pos(&self, t: f64) -> f64 {
        self.c + self.r * (self.omega * t - self.phi).cos()
    }

    fn vel(&self, t: f64) -> f64 {
        -self.r * self.omega * (self.omega * t - self.phi).sin()
    }

    /// First time the oscillation reaches `c ± half_width` moving outward.
    fn wall_time(&self, half_width: f64, v_now: f64, x_now: f64) -> f64 {
        if self.r <= half_width {
            return f64::INFINITY;
        }
        let theta = (half_width / self.r).acos();
        let tau = std::f64::consts::TAU;
        let period = tau / self.omega;
        let first = |target: f64, at_this_wall: bool, moving_out: bool| {
            let t = (target + self.phi).rem_euclid(tau) / self.omega;
            if at_this_wall && !moving_out && (t < 1e-9 * period || period - t < 1e-9 * period) {
                // sitting on the wall right after a reflection
                if t < 0.5 * period { t + period } else { t }
            } else {
                t
            }
        };
        let eps = 1e-12 * (1.0 + self.c);
        let at_top = (x_now - (self.c + half_width)).abs() < eps;
        let at_bottom = (x_now - (self.c - half_width)).abs() < eps;
        let t_top = first(-theta, at_top, v_now > 0.0);
        let t_bottom = first(std::f64::consts::PI - theta, at_bottom, v_now < 0.0);
        t_top.min(t_bottom)
    }
}

/// Deterministic evolution of the spring-mass system from the moment the free
/// mass (speed `v_old`) enters at `l` until it leaves through `l` again.
pub fn spring_mass_flight(v_old: f64, x1: f64, v1: f64, params: &SpringMassParams) -> Result<SpringFlight> {
    params.validate()?;
    if !(v_old > 0.0) || !v_old.is_finite() {
        return Err(invalid_arg!("incoming speed must be positive, got {v_old}"));
    }
    let (m1, m2, l) = (params.m1, params.m2, params.l);
    let (c, omega) = (0.5 * l, params.omega());
    let energy = |x1: f64, v1: f64, v2: f64| 0.5 * m1 * v1 * v1 + params.spring_energy(x1) + 0.5 * m2 * v2 * v2;

    let (mut x1, mut v1) = (x1.clamp(0.0, l), v1);
    let (mut x2, mut v2) = (l, -v_old);
    let energy_in = energy(x1, v1, v2);
    let dt_scan = params.period() / SCAN_DIVISIONS;
    let mut collisions = 0;

    for events in 0..SPRING_EVENT_CAP {
        let osc = Oscillation::new(x1, v1, c, omega);
        let t_wall = osc.wall_time(c, v1, x1);
        let t_exit = if v2 > 0.0 { (l - x2) / v2 } else { f64::INFINITY };
        let horizon = t_wall.min(t_exit);
        let (x2_0, v2_0) = (x2, v2);
        let gap = |t: f64| x2_0 + v2_0 * t - osc.pos(t);
        let gap_rate = |t: f64| v2_0 - osc.vel(t);

        // when the free mass is falling it must meet the bound mass before passing below 0
        let limit = if horizon.is_finite() {
            horizon
        } else if v2 < 0.0 {
            x2 / -v2 + dt_scan
        } else {
            return Err(Error::Simulation(format!("free mass stalled at x2={x2}, v2={v2}")));
        };
        let t_coll = first_contact(&gap, &gap_rate, osc.r * omega * omega, limit, dt_scan)?;

        match t_coll {
            Some(t) if t <= horizon => {
                let xc = osc.pos(t);
                let u1 = osc.vel(t);
                let m = m1 + m2;
                v1 = ((m1 - m2) * u1 + 2.0 * m2 * v2) / m;
                v2 = ((m2 - m1) * v2 + 2.0 * m1 * u1) / m;
                x1 = xc.clamp(0.0, l);
                x2 = x1;
                collisions += 1;
            }
            _ if horizon.is_infinite() => {
                return Err(Error::Numeric(format!(
                    "falling free mass never met the bound mass (x2={x2}, v2={v2}, x1={x1}, v1={v1})"
                )));
            }
            _ if t_exit <= t_wall => {
                let energy_out = energy(osc.pos(t_exit), osc.vel(t_exit), v2);
                return Ok(SpringFlight {
                    speed: v2,
                    collisions,
                    events,
                    energy_in,
                    energy_out,
                });
            }
            _ => {
                x2 += v2 * t_wall;
                v1 = -osc.vel(t_wall);
                x1 = if osc.pos(t_wall) > c { l } else { 0.0 };
            }
        }
        if !(x1.is_finite() && v1.is_finite() && x2.is_finite() && v2.is_finite()) {
            return Err(Error::Numeric("non-finite state in spring-mass flight".into()));
        }
    }
    Err(Error::Simulation(format!(
        "spring-mass flight exceeded {SPRING_EVENT_CAP} events (v_old={v_old})"
    )))
}

/// First `t ∈ (0, limit]` with `gap(t) ≤ 0`, to within [`TIME_TOL`].
///
/// The scan moves in steps of `dt`; a step is skipped when the concave lower
/// bound `g(a) + g'(a)τ - ½·curv·τ²` certifies the gap stays positive, and is
/// halved otherwise.
fn first_contact(
    gap: &impl Fn(f64) -> f64,
    rate: &impl Fn(f64) -> f64,
    curv: f64,
    limit: f64,
    dt: f64,
) -> Result<Option<f64>> {
    fn search(
        gap: &impl Fn(f64) -> f64,
        rate: &impl Fn(f64) -> f64,
        curv: f64,
        a: f64,
        b: f64,
    ) -> Option<f64> {
        let (ga, ra) = (gap(a), rate(a));
        let h = b - a;
        let bound_end = ga + ra * h - 0.5 * curv * h * h;
        if (ga > 0.0 || (ga >= 0.0 && ra > 0.0)) && bound_end > 0.0 {
            return None;
        }
        if h <= TIME_TOL {
            return (gap(b) <= 0.0).then_some(b);
        }
        let m = 0.5 * (a + b);
        search(gap, rate, curv, a, m).or_else(|| search(gap, rate, curv, m, b))
    }

    let steps = (limit / dt).ceil();
    if steps > 1e9 {
        return Err(Error::Numeric(format!("contact scan over {limit} needs {steps} steps")));
    }
    let mut a = 0.0;
    while a < limit {
        let b = (a + dt).min(limit);
        if let Some(t) = search(gap, rate, curv, a, b) {
            return Ok(Some(t));
        }
        a = b;
    }
    Ok(None)
}

fn checked_flight(v_old: f64, x1: f64, v1: f64, params: &SpringMassParams) -> Result<f64> {
    let f = spring_mass_flight(v_old, x1, v1, params)?;
    let drift = (f.energy_out - f.energy_in).abs() / f.energy_in;
    if drift > 1e-8 {
        return Err(Error::Numeric(format!(
            "spring-mass flight changed the energy by a relative {drift:e}"
        )));
    }
    if !(f.speed > 0.0) {
        return Err(Error::Simulation(format!("free mass left with speed {}", f.speed)));
    }
    Ok(f.speed)
}

/// One transition `v_old ↦ v_new` of the spring-mass chain, speeds in physical units.
///
/// The wall is drawn from its canonical law with [`sample_spring_wall`].
pub fn spring_mass_step(v_old: f64, params: &SpringMassParams, stream: &mut RandomStream) -> Result<f64> {
    let (x1, v1) = sample_spring_wall(params, stream)?;
    checked_flight(v_old, x1, v1, params)
}

/// The same transition with the energy taken as a plain exponential draw
/// `ℰ = -ln(U₁)/β`, without the reach correction of [`sample_spring_wall`].
pub fn spring_mass_step_sequential(v_old: f64, params: &SpringMassParams, stream: &mut RandomStream) -> Result<f64> {
    params.validate()?;
    let energy = sample_energy(params.beta, stream)?;
    let (x1, v1) = spring_wall_state(energy, stream.uniform(), stream.sign(), params);
    checked_flight(v_old, x1, v1, params)
}

/// Runs `steps` transitions of the spring-mass chain from `v0`.
pub fn run_spring_chain(v0: f64, steps: usize, params: &SpringMassParams, stream: &mut RandomStream) -> Result<Vec<f64>> {
    let mut v = v0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        v = spring_mass_step(v, params, stream)?;
        out.push(v);
    }
    Ok(out)
}

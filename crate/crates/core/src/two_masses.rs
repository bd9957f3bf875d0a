//! The two-masses wall model.
//!
//! A free mass `m₂` (the molecule) enters the interval `[0, l]` where a bound
//! mass `m₁` bounces between walls at `0` and `l`. After one or more elastic
//! collisions the free mass leaves again. With the bound mass's position
//! uniform and its velocity random, the outgoing speed is a random function of
//! the incoming one. In the scaled variables `v = √(m₂/m)·s`, `w = √(m₁/m)·v₁`
//! (`m = m₁ + m₂`) this random map is piecewise affine in `v` with at most three
//! branches, and the Markov operator it defines has an explicit integral kernel.
//!
//! Everything here assumes the mass ratio `γ = √(m₂/m₁)` is below `1/√3`,
//! where at most three collisions can happen; only [`oracle_step`], which
//! integrates the mechanics directly, accepts larger `γ`.

use std::f64::consts::PI;

use crate::error::{invalid_arg, Error, Result};
use crate::stats::RandomStream;

/// Upper limit `1/√3` on the mass ratio for the closed-form random map.
pub const GAMMA_MAX: f64 = 0.577_350_269_189_625_8;

/// Gaussian factors with log-value below this are treated as exactly zero.
pub const LOG_UNDERFLOW: f64 = -700.0;

/// Event budget for [`oracle_step`].
pub const ORACLE_EVENT_CAP: usize = 1_000_000;

/// Mass ratio and wall temperature, with the random-map constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoMassParams {
    /// `γ = √(m₂/m₁) = tan α`.
    pub gamma: f64,
    /// Standard deviation of the bound mass's scaled velocity.
    pub sigma: f64,
    /// `(1 - γ²)/(1 + γ²)`
    pub a: f64,
    /// `2γ/(1 + γ²)`
    pub b: f64,
    /// `(1 - 6γ² + γ⁴)/(1 + γ²)²`
    pub a_bar: f64,
    /// `4γ(1 - γ²)/(1 + γ²)²`
    pub b_bar: f64,
    /// `tan α`
    pub t1: f64,
    /// `tan 2α`
    pub t2: f64,
    /// `tan 3α`
    pub t3: f64,
    /// Lower end `v/c̄` of the third branch's range, as a multiple of `v`.
    pub c_lo: f64,
    /// `c̄ = (3 - γ²)/(1 + γ²)`
    pub c_hi: f64,
}

/// Computes all map constants for mass ratio `gamma` and wall temperature `sigma²`.
pub fn derive_params(gamma: f64, sigma: f64) -> Result<TwoMassParams> {
    TwoMassParams::new(gamma, sigma)
}

impl TwoMassParams {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < GAMMA_MAX) {
            return Err(invalid_arg!(
                "mass ratio gamma must lie in (0, 1/sqrt(3)), got {gamma}"
            ));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid_arg!("wall temperature sigma must be positive, got {sigma}"));
        }
        let g2 = gamma * gamma;
        let d = 1.0 + g2;
        let c_hi = (3.0 - g2) / d;
        Ok(Self {
            gamma,
            sigma,
            a: (1.0 - g2) / d,
            b: 2.0 * gamma / d,
            a_bar: (1.0 - 6.0 * g2 + g2 * g2) / (d * d),
            b_bar: 4.0 * gamma * (1.0 - g2) / (d * d),
            t1: gamma,
            t2: 2.0 * gamma / (1.0 - g2),
            t3: gamma * (3.0 - g2) / (1.0 - 3.0 * g2),
            c_lo: 1.0 / c_hi,
            c_hi,
        })
    }

    /// Probability `γ|w|/v` of the one-collision branch when `w < 0`.
    #[inline]
    pub fn p(&self, v: f64, w_abs: f64) -> f64 {
        self.gamma * w_abs / v
    }

    /// Probability `2(1-γ²)/(1+γ²) - (4γ/(1+γ²))|w|/v` of the two-collision branch on `I3`.
    #[inline]
    pub fn q(&self, v: f64, w_abs: f64) -> f64 {
        let g2 = self.gamma * self.gamma;
        2.0 * (1.0 - g2) / (1.0 + g2) - 4.0 * self.gamma / (1.0 + g2) * w_abs / v
    }
}

/// Law of the bound mass's scaled velocity `w` at the moment the free mass enters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallLaw {
    /// Centered Gaussian with the given standard deviation.
    Gaussian { sigma: f64 },
    /// `±speed` with probability ½ each.
    Bernoulli { speed: f64 },
}

impl WallLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WallLaw::Gaussian { sigma } if !(sigma > 0.0) || !sigma.is_finite() => {
                Err(invalid_arg!("gaussian wall law needs sigma > 0, got {sigma}"))
            }
            WallLaw::Bernoulli { speed } if !(speed >= 0.0) || !speed.is_finite() => {
                Err(invalid_arg!("bernoulli wall law needs speed >= 0, got {speed}"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, stream: &mut RandomStream) -> f64 {
        match *self {
            WallLaw::Gaussian { sigma } => sigma * stream.standard_normal(),
            WallLaw::Bernoulli { speed } => speed * stream.sign(),
        }
    }
}

/// Which piece of the partition of `(0, ∞)` the incoming speed falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Bound mass moving away from the origin (`w ≥ 0`).
    WNonneg,
    /// `v/|w| ∈ (0, tan α]`
    I1,
    /// `v/|w| ∈ (tan α, tan 2α]`
    I2,
    /// `v/|w| ∈ (tan 2α, tan 3α]`
    I3,
    /// `v/|w| ∈ (tan 3α, ∞)`
    I4,
}

/// Deterministic branches of the random map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `a v + b |w|` (or `a v + b w` for `w ≥ 0`)
    F1,
    /// `a v - b |w|`
    F2,
    /// `-ā v + b̄ |w|`
    F3,
}

/// One possible outcome of the random map at fixed `(v, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOutcome {
    pub branch: Branch,
    pub probability: f64,
    /// Outgoing scaled speed.
    pub value: f64,
}

pub fn classify_region(v: f64, w: f64, params: &TwoMassParams) -> Result<Region> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid_arg!("incoming speed must be positive, got {v}"));
    }
    if w.is_nan() {
        return Err(invalid_arg!("wall velocity is NaN"));
    }
    Ok(region_unchecked(v, w, params))
}

#[inline]
fn region_unchecked(v: f64, w: f64, params: &TwoMassParams) -> Region {
    if w >= 0.0 {
        return Region::WNonneg;
    }
    let ratio = v / -w;
    if ratio <= params.t1 {
        Region::I1
    } else if ratio <= params.t2 {
        Region::I2
    } else if ratio <= params.t3 {
        Region::I3
    } else {
        Region::I4
    }
}

#[derive(Clone, Copy)]
struct Menu {
    items: [BranchOutcome; 3],
    len: usize,
}

impl Menu {
    fn push(&mut self, branch: Branch, probability: f64, value: f64) {
        self.items[self.len] = BranchOutcome {
            branch,
            probability,
            value,
        };
        self.len += 1;
    }

    fn as_slice(&self) -> &[BranchOutcome] {
        &self.items[..self.len]
    }
}

const PROB_SLACK: f64 = 1e-12;

fn menu(v: f64, w: f64, params: &TwoMassParams) -> Result<Menu> {
    let empty = BranchOutcome {
        branch: Branch::F1,
        probability: 0.0,
        value: 0.0,
    };
    let mut m = Menu {
        items: [empty; 3],
        len: 0,
    };
    let region = classify_region(v, w, params)?;
    let s = w.abs();
    let f1 = params.a * v + params.b * s;
    let f2 = params.a * v - params.b * s;
    let f3 = -params.a_bar * v + params.b_bar * s;
    let p = params.p(v, s);
    let q = params.q(v, s);
    match region {
        Region::WNonneg | Region::I1 => m.push(Branch::F1, 1.0, f1),
        Region::I2 => {
            m.push(Branch::F1, p, f1);
            m.push(Branch::F3, 1.0 - p, f3);
        }
        Region::I3 => {
            m.push(Branch::F1, p, f1);
            m.push(Branch::F2, q, f2);
            m.push(Branch::F3, 1.0 - p - q, f3);
        }
        Region::I4 => {
            m.push(Branch::F1, p, f1);
            m.push(Branch::F2, 1.0 - p, f2);
        }
    }
    for o in m.as_slice() {
        if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&o.probability) {
            return Err(Error::Consistency(format!(
                "branch {:?} has probability {} at v={v}, w={w} ({region:?})",
                o.branch, o.probability
            )));
        }
    }
    for o in &mut m.items[..m.len] {
        o.probability = o.probability.clamp(0.0, 1.0);
    }
    Ok(m)
}

/// Possible outcomes, with probabilities, of the random map at `(v, w)`.
pub fn branch_menu(v: f64, w: f64, params: &TwoMassParams) -> Result<Vec<BranchOutcome>> {
    Ok(menu(v, w, params)?.as_slice().to_vec())
}

/// Expected value of `f` over the branch menu at `(v, w)`.
pub fn branch_expectation(v: f64, w: f64, params: &TwoMassParams, f: impl Fn(f64) -> f64) -> Result<f64> {
    Ok(menu(v, w, params)?
        .as_slice()
        .iter()
        .map(|o| o.probability * f(o.value))
        .sum())
}

/// One step of the random map: draws `w` from `law`, then a branch.
pub fn random_map_step(
    v: f64,
    law: &WallLaw,
    stream: &mut RandomStream,
    params: &TwoMassParams,
) -> Result<f64> {
    let w = law.sample(stream);
    let m = menu(v, w, params)?;
    if m.len == 1 {
        return Ok(m.items[0].value);
    }
    let u = stream.uniform();
    let mut acc = 0.0;
    for o in m.as_slice() {
        acc += o.probability;
        if u < acc {
            return Ok(o.value);
        }
    }
    Ok(m.items[m.len - 1].value)
}

/// Runs `steps` iterations of the random map from `v0`, returning every visited speed
/// (excluding `v0`).
pub fn run_chain(
    v0: f64,
    steps: usize,
    law: &WallLaw,
    stream: &mut RandomStream,
    params: &TwoMassParams,
) -> Result<Vec<f64>> {
    law.validate()?;
    let mut v = v0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        v = random_map_step(v, law, stream, params)?;
        out.push(v);
    }
    Ok(out)
}

/// Result of an exact event-driven collision sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    /// Scaled outgoing speed of the free mass.
    pub speed: f64,
    /// Scaled velocity of the bound mass when the free mass leaves.
    pub wall_velocity: f64,
    /// Number of mass-mass collisions.
    pub collisions: usize,
    /// Total number of events (collisions and wall bounces).
    pub events: usize,
}

/// Exact simulation of one collision event in the original coordinates.
///
/// `x ∈ [0, 1]` is the bound mass's position as a fraction of the interval,
/// `v > 0` the scaled incoming speed and `w` the scaled bound-mass velocity.
/// Any `γ > 0` is accepted.
pub fn oracle_collision(v: f64, x: f64, w: f64, gamma: f64) -> Result<OracleOutcome> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid_arg!("incoming speed must be positive, got {v}"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(invalid_arg!("bound-mass position must lie in [0, 1], got {x}"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() || !w.is_finite() {
        return Err(invalid_arg!("need gamma > 0 and finite w"));
    }
    let l = 1.0;
    let m1 = 1.0;
    let m2 = gamma * gamma;
    let m = m1 + m2;
    let (scale1, scale2) = ((m1 / m).sqrt(), (m2 / m).sqrt());

    let mut x1 = x * l;
    let mut v1 = w / scale1;
    let mut x2 = l;
    let mut v2 = -v / scale2;
    let mut collisions = 0;

    for events in 0..ORACLE_EVENT_CAP {
        // candidate event times; the free mass is always to the right of the bound one
        let t_coll = if v1 > v2 { (x2 - x1) / (v1 - v2) } else { f64::INFINITY };
        let t_wall = if v1 < 0.0 {
            x1 / -v1
        } else if v1 > 0.0 {
            (l - x1) / v1
        } else {
            f64::INFINITY
        };
        let t_exit = if v2 > 0.0 { (l - x2) / v2 } else { f64::INFINITY };

        if t_exit <= t_coll && t_exit <= t_wall {
            return Ok(OracleOutcome {
                speed: v2 * scale2,
                wall_velocity: v1 * scale1,
                collisions,
                events,
            });
        }
        if t_coll <= t_wall {
            let t = t_coll.max(0.0);
            x1 += v1 * t;
            x2 = x1;
            let new_v1 = ((m1 - m2) * v1 + 2.0 * m2 * v2) / m;
            let new_v2 = ((m2 - m1) * v2 + 2.0 * m1 * v1) / m;
            v1 = new_v1;
            v2 = new_v2;
            collisions += 1;
        } else {
            let t = t_wall.max(0.0);
            x1 = if v1 < 0.0 { 0.0 } else { l };
            x2 += v2 * t;
            v1 = -v1;
        }
        if !(x1.is_finite() && x2.is_finite() && v1.is_finite() && v2.is_finite()) {
            return Err(Error::Simulation("non-finite state in collision oracle".into()));
        }
    }
    Err(Error::Simulation(format!(
        "collision oracle exceeded {ORACLE_EVENT_CAP} events (v={v}, x={x}, w={w}, gamma={gamma})"
    )))
}

/// Outgoing scaled speed from the exact event-driven dynamics.
pub fn oracle_step(v: f64, x: f64, w: f64, gamma: f64) -> Result<f64> {
    oracle_collision(v, x, w, gamma).map(|o| o.speed)
}

/// Maxwell-Boltzmann boundary density `σ⁻² v exp(-v²/2σ²)`; zero for `v ≤ 0`.
pub fn stationary_density(v: f64, sigma: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let s2 = sigma * sigma;
    v / s2 * (-v * v / (2.0 * s2)).exp()
}

/// CDF `1 - exp(-v²/2σ²)` of [`stationary_density`].
pub fn stationary_cdf(v: f64, sigma: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    -(-v * v / (2.0 * sigma * sigma)).exp_m1()
}

fn log_stationary_density(u: f64, sigma: f64) -> f64 {
    u.ln() - 2.0 * sigma.ln() - u * u / (2.0 * sigma * sigma)
}

fn log_gaussian(z: f64, sd: f64) -> f64 {
    let t = z / sd;
    -0.5 * t * t - (sd * (2.0 * PI).sqrt()).ln()
}

/// Indicator of the open interval `(lo, hi)`, valued ½ at the end points so that
/// point evaluations at a jump return the mean of the one-sided limits.
#[inline]
fn indicator(u: f64, lo: f64, hi: f64) -> f64 {
    if u > lo && u < hi {
        1.0
    } else if u == lo || u == hi {
        0.5
    } else {
        0.0
    }
}

/// Weights and log Gaussian factors of the two kernel families at `(v, u)`:
/// `κ = w₁·exp(g₁) + w₃·exp(g₃)`.
fn kernel_parts(v: f64, u: f64, p: &TwoMassParams) -> [(f64, f64); 2] {
    let av = p.a * v;
    let cv = p.c_hi * v;
    let v_over_c = p.c_lo * v;

    // F1/F2 family: u = a v ± b |w|
    let w1 = (u - av).abs() / p.b;
    let pr1 = p.p(v, w1);
    let weight1 = indicator(u, av, f64::INFINITY)
        + indicator(u, cv, f64::INFINITY)
        + indicator(u, av, cv) * pr1
        + indicator(u, 0.0, v_over_c) * p.q(v, w1)
        + indicator(u, v_over_c, av) * (1.0 - pr1);
    let g1 = log_gaussian(u - av, p.b * p.sigma);

    // F3 family: u = -ā v + b̄ |w|
    let z3 = u + p.a_bar * v;
    let w3 = z3 / p.b_bar;
    let pr3 = p.p(v, w3);
    let weight3 = indicator(u, v, cv) * (1.0 - pr3)
        + indicator(u, v_over_c, v) * (1.0 - pr3 - p.q(v, w3));
    let g3 = log_gaussian(z3, p.b_bar * p.sigma);

    [(weight1.max(0.0), g1), (weight3.max(0.0), g3)]
}

/// Transition density `κ(v, u)` of the random map with Gaussian wall law of
/// standard deviation `params.sigma`: `(Pf)(v) = ∫ κ(v, u) f(u) du`.
pub fn kernel_kappa(v: f64, u: f64, params: &TwoMassParams) -> f64 {
    if !(v > 0.0 && u > 0.0) {
        return 0.0;
    }
    kernel_parts(v, u, params)
        .iter()
        .filter(|(w, g)| *w > 0.0 && *g > LOG_UNDERFLOW)
        .map(|(w, g)| w * g.exp())
        .sum()
}

/// Kernel value relative to the stationary measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeKernel {
    pub value: f64,
    /// `ρ(u)` underflowed; `value` was set to zero.
    pub underflow: bool,
}

/// `K(v, u) = κ(v, u)/ρ(u)`, the kernel of `P` relative to the stationary
/// measure `μ`, evaluated in log space.
pub fn kernel_k(v: f64, u: f64, params: &TwoMassParams) -> RelativeKernel {
    if !(v > 0.0 && u > 0.0) {
        return RelativeKernel {
            value: 0.0,
            underflow: false,
        };
    }
    let log_rho = log_stationary_density(u, params.sigma);
    if log_rho < LOG_UNDERFLOW {
        return RelativeKernel {
            value: 0.0,
            underflow: true,
        };
    }
    let value = kernel_parts(v, u, params)
        .iter()
        .filter(|(w, g)| *w > 0.0 && *g > LOG_UNDERFLOW)
        .map(|(w, g)| {
            let lt = g - log_rho;
            if lt < LOG_UNDERFLOW {
                0.0
            } else {
                w * lt.exp()
            }
        })
        .sum();
    RelativeKernel {
        value,
        underflow: false,
    }
}

/// Points in `u` where `κ(v, ·)` jumps or changes formula.
pub fn kernel_breaks(v: f64, params: &TwoMassParams) -> [f64; 4] {
    [params.c_lo * v, params.a * v, v, params.c_hi * v]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_with_breaks;
    use crate::stats::make_stream;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn derived_constants_gamma_0_1() {
        let p = derive_params(0.1, 1.0).unwrap();
        assert!(close(p.a, 0.980198, 1e-6));
        assert!(close(p.b, 0.198020, 1e-6));
        assert!(close(p.a_bar, 0.921576, 1e-6));
        assert!(close(p.b_bar, 0.388197, 1e-6));
        assert!(close(p.t1, 0.1, 1e-15));
        assert!(close(p.t2, 0.202020, 1e-6));
        assert!(close(p.t3, 0.308247, 1e-6));
        assert!(close(p.c_hi, 2.960396, 1e-6));
        assert!(close(p.c_lo, 0.337793, 1e-6));
        assert!(close(p.a * p.a + p.b * p.b, 1.0, 1e-12));
        assert!(p.t1 < p.t2 && p.t2 < p.t3 && p.c_lo < 1.0 && 1.0 < p.c_hi);
        // tan 2α, tan 3α from the angle itself
        let alpha = 0.1f64.atan();
        assert!(close(p.t2, (2.0 * alpha).tan(), 1e-14));
        assert!(close(p.t3, (3.0 * alpha).tan(), 1e-14));
    }

    #[test]
    fn derive_params_rejects_out_of_range() {
        assert!(matches!(derive_params(0.6, 1.0), Err(Error::InvalidArgument(_))));
        assert!(derive_params(0.0, 1.0).is_err());
        assert!(derive_params(0.1, 0.0).is_err());
    }

    #[test]
    fn regions() {
        let p = derive_params(0.1, 1.0).unwrap();
        assert_eq!(classify_region(1.0, 0.3, &p).unwrap(), Region::WNonneg);
        assert_eq!(classify_region(1.0, -4.0, &p).unwrap(), Region::I3);
        assert_eq!(classify_region(1.0, -0.5, &p).unwrap(), Region::I4);
        assert_eq!(classify_region(1.0, -20.0, &p).unwrap(), Region::I1);
        assert_eq!(classify_region(1.0, -6.0, &p).unwrap(), Region::I2);
        // right-closed boundaries
        assert_eq!(classify_region(0.1, -1.0, &p).unwrap(), Region::I1);
        assert!(classify_region(0.0, 1.0, &p).is_err());
    }

    #[test]
    fn branch_menu_examples() {
        let p = derive_params(0.1, 1.0).unwrap();
        let m = branch_menu(1.0, -0.5, &p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].branch, Branch::F1);
        assert!(close(m[0].probability, 0.05, 1e-12) && close(m[0].value, 1.079208, 1e-6));
        assert!(close(m[1].probability, 0.95, 1e-12) && close(m[1].value, 0.881188, 1e-6));

        let m = branch_menu(1.0, -4.0, &p).unwrap();
        assert_eq!(m.iter().map(|o| o.branch).collect::<Vec<_>>(), [Branch::F1, Branch::F2, Branch::F3]);
        assert!(close(m[0].probability, 0.4, 1e-12) && close(m[0].value, 1.772277, 1e-6));
        assert!(close(m[1].probability, 0.376238, 1e-6) && close(m[1].value, 0.188119, 1e-6));
        assert!(close(m[2].probability, 0.223762, 1e-6) && close(m[2].value, 0.631213, 1e-6));

        let m = branch_menu(1.0, 0.0, &p).unwrap();
        assert_eq!(m.len(), 1);
        assert!(close(m[0].value, 0.980198, 1e-6) && m[0].probability == 1.0);
    }

    #[test]
    fn oracle_reproduces_branch_frequencies() {
        // exact fractions of entry positions, on a fine deterministic grid
        let p = derive_params(0.1, 1.0).unwrap();
        for &(v, w) in &[(1.0, -4.0), (1.0, -7.0), (1.0, -0.5), (2.0, -7.5)] {
            let menu = branch_menu(v, w, &p).unwrap();
            let n = 20_000;
            let mut hits = vec![0usize; menu.len()];
            for i in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                let out = oracle_step(v, x, w, 0.1).unwrap();
                let k = menu
                    .iter()
                    .position(|o| (o.value - out).abs() < 1e-9)
                    .unwrap_or_else(|| panic!("oracle value {out} not on the menu at v={v}, w={w}"));
                hits[k] += 1;
            }
            for (o, h) in menu.iter().zip(&hits) {
                let freq = *h as f64 / n as f64;
                assert!(close(freq, o.probability, 2e-4), "{:?}: {freq} vs {}", o.branch, o.probability);
            }
        }
    }

    #[test]
    fn oracle_zero_wall_velocity() {
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert!(close(oracle_step(1.0, x, 0.0, 0.1).unwrap(), 0.980198, 1e-6));
        }
    }

    #[test]
    fn oracle_support_and_energy() {
        let o = oracle_collision(1.0, 0.3, -0.5, 0.1).unwrap();
        assert!(close(o.speed, 1.079208, 1e-6) || close(o.speed, 0.881188, 1e-6));
        let mut s = make_stream(4);
        for _ in 0..1000 {
            let v = 0.05 + 3.0 * s.uniform();
            let w = 2.0 * s.standard_normal();
            let gamma = 0.05 + 0.9 * s.uniform();
            let o = oracle_collision(v, s.uniform(), w, gamma).unwrap();
            let before = v * v + w * w;
            let after = o.speed * o.speed + o.wall_velocity * o.wall_velocity;
            assert!(((before - after) / before).abs() < 1e-10);
            assert!(o.speed > 0.0);
        }
    }

    #[test]
    fn bernoulli_zero_is_deterministic() {
        let p = derive_params(0.1, 1.0).unwrap();
        let mut s = make_stream(1);
        let law = WallLaw::Bernoulli { speed: 0.0 };
        for v in [0.2, 1.0, 3.3] {
            assert_eq!(random_map_step(v, &law, &mut s, &p).unwrap(), p.a * v);
        }
    }

    #[test]
    fn stationary_density_values() {
        assert!(close(stationary_density(1.0, 1.0), (-0.5f64).exp(), 1e-15));
        assert_eq!(stationary_density(0.0, 1.0), 0.0);
        for sigma in [0.5, 1.0, 2.0] {
            let total = integrate_with_breaks(&|v| stationary_density(v, sigma), 0.0, 10.0 * sigma, &[], 1e-12);
            assert!(close(total, 1.0, 1e-8), "sigma={sigma}: {total}");
        }
    }

    #[test]
    fn kernel_rows_integrate_to_one() {
        for gamma in [0.1, 0.3] {
            let p = derive_params(gamma, 1.0).unwrap();
            for v in [0.5, 1.0, 2.0] {
                let total =
                    integrate_with_breaks(&|u| kernel_kappa(v, u, &p), 0.0, 20.0, &kernel_breaks(v, &p), 1e-10);
                assert!(close(total, 1.0, 1e-6), "gamma={gamma} v={v}: {total}");
            }
        }
    }

    #[test]
    fn kernel_far_tail_vanishes() {
        let p = derive_params(0.1, 1.0).unwrap();
        let u = p.c_hi * (1.0 + 10.0 / p.b) * 2.0;
        assert_eq!(kernel_kappa(1.0, u, &p), 0.0);
        let k = kernel_k(1.0, 60.0, &p);
        assert!(k.underflow && k.value == 0.0);
    }

    #[test]
    fn relative_kernel_is_symmetric() {
        let p = derive_params(0.1, 1.0).unwrap();
        let (a, b) = (kernel_k(1.0, 1.3, &p).value, kernel_k(1.3, 1.0, &p).value);
        assert!(((a - b) / a).abs() < 1e-6);
        let total = integrate_with_breaks(
            &|u| kernel_k(1.0, u, &p).value * stationary_density(u, 1.0),
            0.0,
            20.0,
            &kernel_breaks(1.0, &p),
            1e-10,
        );
        assert!(close(total, 1.0, 1e-3));
    }

    proptest! {
        #[test]
        fn branch_probabilities_are_a_distribution(
            gamma in 0.05f64..0.55,
            v in 0.01f64..10.0,
            w in -50.0f64..5.0,
        ) {
            let p = derive_params(gamma, 1.0).unwrap();
            let m = branch_menu(v, w, &p).unwrap();
            let total: f64 = m.iter().map(|o| o.probability).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for o in &m {
                prop_assert!((0.0..=1.0).contains(&o.probability));
                prop_assert!(o.value > 0.0 || o.probability == 0.0);
            }
        }

        #[test]
        fn detailed_balance(gamma in 0.05f64..0.55, v in 0.05f64..4.0, u in 0.05f64..4.0) {
            let p = derive_params(gamma, 1.0).unwrap();
            let lhs = stationary_density(v, 1.0) * kernel_kappa(v, u, &p);
            let rhs = stationary_density(u, 1.0) * kernel_kappa(u, v, &p);
            if lhs.max(rhs) > 1e-12 {
                prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.max(rhs), "{} vs {}", lhs, rhs);
            }
            prop_assert!(kernel_k(v, u, &p).value >= 0.0);
        }
    }
}

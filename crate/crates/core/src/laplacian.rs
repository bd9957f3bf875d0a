//! The billiard Laplacian and its Laguerre eigenfunctions.
//!
//! For small mass ratio the two-masses operator behaves like `I + 2γ²ℒ` with
//! `ℒφ = (1/z - z)φ' + φ''`, which in Sturm-Liouville form reads
//! `ℒφ = ρ⁻¹(ρφ')'` for `ρ(z) = z e^{-z²/2}`. After `x = z²/2` this is Laguerre's
//! equation, so `φₙ(z) = Lₙ(z²/2)` are eigenfunctions with eigenvalue `-2n`,
//! and the operator's eigenvalues are predicted to be near `1 - 4nγ²`.

use rayon::prelude::*;

use crate::error::{invalid_arg, Result};
use crate::quadrature::integrate_with_breaks;
use crate::stats::RandomStream;
use crate::two_masses::{branch_expectation, random_map_step, TwoMassParams, WallLaw};

/// Largest Laguerre index with well-conditioned coefficients.
pub const MAX_LAGUERRE_INDEX: usize = 20;

/// A real function of one variable with first and second derivatives.
///
/// Derivatives default to central differences with step `max(1e-4, 1e-4·z)`.
pub trait SmoothFunction {
    fn value(&self, z: f64) -> f64;

    fn derivative(&self, z: f64) -> f64 {
        let h = fd_step(z);
        (self.value(z + h) - self.value(z - h)) / (2.0 * h)
    }

    fn second_derivative(&self, z: f64) -> f64 {
        let h = fd_step(z);
        (self.value(z + h) - 2.0 * self.value(z) + self.value(z - h)) / (h * h)
    }
}

fn fd_step(z: f64) -> f64 {
    (1e-4 * z.abs()).max(1e-4)
}

impl<F: Fn(f64) -> f64> SmoothFunction for F {
    fn value(&self, z: f64) -> f64 {
        self(z)
    }
}

/// Polynomial in `z`, coefficients in increasing powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coefficients: Vec<f64>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        let mut p = Self { coefficients };
        while p.coefficients.len() > 1 && *p.coefficients.last().unwrap() == 0.0 {
            p.coefficients.pop();
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * z + c)
    }

    pub fn differentiate(&self) -> Polynomial {
        if self.coefficients.len() <= 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }
}

impl SmoothFunction for Polynomial {
    fn value(&self, z: f64) -> f64 {
        self.eval(z)
    }

    fn derivative(&self, z: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * z + k as f64 * c)
    }

    fn second_derivative(&self, z: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * z + (k * (k - 1)) as f64 * c)
    }
}

/// `ℒf(z) = (1/z - z) f'(z) + f''(z)`.
pub fn apply_laplacian(f: &impl SmoothFunction, z: f64) -> Result<f64> {
    check_z(z)?;
    Ok((1.0 / z - z) * f.derivative(z) + f.second_derivative(z))
}

/// `ℒf(z) = ρ⁻¹(ρ f')'`, differentiating the flux `ρ f'` numerically with
/// twice Richardson-extrapolated central differences.
pub fn apply_laplacian_sturm_liouville(f: &impl SmoothFunction, z: f64) -> Result<f64> {
    check_z(z)?;
    let rho = |x: f64| x * (-0.5 * x * x).exp();
    let flux = |x: f64| rho(x) * f.derivative(x);
    let h = (2e-3f64).min(0.25 * z);
    let central = |h: f64| (flux(z + h) - flux(z - h)) / (2.0 * h);
    let (d1, d2, d4) = (central(h), central(0.5 * h), central(0.25 * h));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    Ok((16.0 * r2 - r1) / 15.0 / rho(z))
}

fn check_z(z: f64) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid_arg!("the Laplacian is defined for z > 0, got {z}"));
    }
    Ok(())
}

/// Polynomial eigenfunction `φₙ(z) = Lₙ(z²/2)` of `ℒ` with eigenvalue `-2n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaguerreEigenpair {
    pub n: usize,
    pub eigenvalue: f64,
    pub phi: Polynomial,
}

impl LaguerreEigenpair {
    pub fn coefficients(&self) -> &[f64] {
        &self.phi.coefficients
    }
}

pub fn laguerre_eigenpair(n: usize) -> Result<LaguerreEigenpair> {
    if n > MAX_LAGUERRE_INDEX {
        return Err(invalid_arg!("Laguerre index {n} exceeds {MAX_LAGUERRE_INDEX}"));
    }
    // coefficients of L_k(x) in powers of x
    let mut prev = vec![1.0];
    let mut cur = vec![1.0, -1.0];
    let lx = if n == 0 {
        prev
    } else {
        for k in 1..n {
            let kf = k as f64;
            let mut next = vec![0.0; k + 2];
            for (j, c) in cur.iter().enumerate() {
                next[j] += (2.0 * kf + 1.0) * c;
                next[j + 1] -= c;
            }
            for (j, c) in prev.iter().enumerate() {
                next[j] -= kf * c;
            }
            next.iter_mut().for_each(|c| *c /= kf + 1.0);
            prev = cur;
            cur = next;
        }
        cur
    };
    let mut coeffs = vec![0.0; 2 * n + 1];
    for (j, c) in lx.iter().enumerate() {
        coeffs[2 * j] = c / 2f64.powi(j as i32);
    }
    Ok(LaguerreEigenpair {
        n,
        eigenvalue: -2.0 * n as f64,
        phi: Polynomial::new(coeffs),
    })
}

/// Eigenvalue `1 + 2γ²(-2n)` of the approximating operator `I + 2γ²ℒ`.
pub fn predicted_eigenvalue(n: usize, gamma: f64) -> f64 {
    1.0 - 4.0 * n as f64 * gamma * gamma
}

/// Monte Carlo estimates of `ℰₖ(z) = E_z[(Z - z)^k]` for `k = 1, 2, 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub z: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub se1: f64,
    pub se2: f64,
    pub se3: f64,
}

const MC_CHUNKS: usize = 64;

/// Scattering moments at incoming speed `z` from `n_samples` steps of the random map.
pub fn scattering_moments(
    z: f64,
    params: &TwoMassParams,
    law: &WallLaw,
    n_samples: usize,
    stream: &RandomStream,
) -> Result<MomentEstimate> {
    check_z(z)?;
    law.validate()?;
    if n_samples < 10_000 {
        return Err(invalid_arg!("scattering moments need at least 10^4 samples, got {n_samples}"));
    }
    // sums of d, d², d³, d⁴, d⁶
    let sums = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| -> Result<[f64; 5]> {
            let mut s = stream.fork(c as u64);
            let count = n_samples / MC_CHUNKS + usize::from(c < n_samples % MC_CHUNKS);
            let mut acc = [0.0; 5];
            for _ in 0..count {
                let d = random_map_step(z, law, &mut s, params)? - z;
                let d2 = d * d;
                acc[0] += d;
                acc[1] += d2;
                acc[2] += d2 * d;
                acc[3] += d2 * d2;
                acc[4] += d2 * d2 * d2;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold([0.0; 5], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        });
    let nf = n_samples as f64;
    let m: Vec<f64> = sums.iter().map(|s| s / nf).collect();
    let se = |mean_sq: f64, mean: f64| ((mean_sq - mean * mean).max(0.0) / nf).sqrt();
    Ok(MomentEstimate {
        z,
        e1: m[0],
        e2: m[1],
        e3: m[2],
        se1: se(m[1], m[0]),
        se2: se(m[3], m[1]),
        se3: se(m[4], m[2]),
    })
}

/// `((P_γ f)(z) - f(z)) / (2γ²)` for the Gaussian wall, integrating the branch
/// expectation against the wall law by adaptive quadrature.
pub fn operator_limit(f: &impl SmoothFunction, z: f64, params: &TwoMassParams) -> Result<f64> {
    check_z(z)?;
    let sigma = params.sigma;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |w: f64| {
        let e = branch_expectation(z, w, params, |u| f.value(u)).unwrap_or(f64::NAN);
        e * norm * (-0.5 * (w / sigma).powi(2)).exp()
    };
    // region boundaries in w, where the branch menu changes
    let breaks = [-z / params.t1, -z / params.t2, -z / params.t3, 0.0];
    let span = 12.0 * sigma;
    let pf = integrate_with_breaks(&integrand, -span, span, &breaks, 1e-13);
    if !pf.is_finite() {
        return Err(crate::error::Error::Numeric(format!("branch expectation failed at z={z}")));
    }
    Ok((pf - f.value(z)) / (2.0 * params.gamma * params.gamma))
}

/// Monte Carlo counterpart of [`operator_limit`]: averages the exact branch
/// expectation over Gaussian draws of `w`, using `f'(z)·b·w` as a control
/// variate. Returns the estimate and its standard error.
pub fn operator_limit_mc(
    f: &(impl SmoothFunction + Sync),
    z: f64,
    params: &TwoMassParams,
    n_samples: usize,
    stream: &RandomStream,
) -> Result<(f64, f64)> {
    check_z(z)?;
    if n_samples < 10_000 {
        return Err(invalid_arg!("need at least 10^4 samples, got {n_samples}"));
    }
    let fz = f.value(z);
    let slope = f.derivative(z) * params.b;
    let scale = 1.0 / (2.0 * params.gamma * params.gamma);
    let sums = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64)> {
            let mut s = stream.fork(c as u64);
            let count = n_samples / MC_CHUNKS + usize::from(c < n_samples % MC_CHUNKS);
            let (mut a, mut a2) = (0.0, 0.0);
            for _ in 0..count {
                let w = params.sigma * s.standard_normal();
                let x = (branch_expectation(z, w, params, |u| f.value(u))? - fz - slope * w) * scale;
                a += x;
                a2 += x * x;
            }
            Ok((a, a2))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let nf = n_samples as f64;
    let mean = sums.0 / nf;
    Ok((mean, ((sums.1 / nf - mean * mean).max(0.0) / nf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::make_stream;
    use crate::two_masses::derive_params;

    #[test]
    fn constants_are_harmonic() {
        let one = Polynomial::new(vec![1.0]);
        for z in [0.3, 1.0, 4.0] {
            assert_eq!(apply_laplacian(&one, z).unwrap(), 0.0);
        }
        assert!(apply_laplacian(&one, 0.0).is_err());
    }

    #[test]
    fn low_order_eigenfunctions() {
        let phi1 = Polynomial::new(vec![1.0, 0.0, -0.5]);
        let phi2 = Polynomial::new(vec![1.0, 0.0, -1.0, 0.0, 0.125]);
        for z in [0.5, 1.0, 2.0] {
            assert!((apply_laplacian(&phi1, z).unwrap() + 2.0 * phi1.eval(z)).abs() < 1e-12);
            assert!((apply_laplacian(&phi2, z).unwrap() + 4.0 * phi2.eval(z)).abs() < 1e-10);
        }
        assert_eq!(laguerre_eigenpair(0).unwrap().coefficients(), &[1.0]);
        assert_eq!(laguerre_eigenpair(1).unwrap().phi, phi1);
        let e2 = laguerre_eigenpair(2).unwrap();
        assert_eq!(e2.eigenvalue, -4.0);
        for (a, b) in e2.coefficients().iter().zip(&phi2.coefficients) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(laguerre_eigenpair(21).is_err());
    }

    #[test]
    fn forms_agree() {
        let closure = |z: f64| (z * 0.7).sin() + z * z;
        for i in 0..50 {
            let z = 0.1 + 4.9 * i as f64 / 49.0;
            for f in [laguerre_eigenpair(3).unwrap().phi, Polynomial::new(vec![0.2, 1.0, -0.3, 0.05])] {
                let a = apply_laplacian(&f, z).unwrap();
                let b = apply_laplacian_sturm_liouville(&f, z).unwrap();
                assert!((a - b).abs() < 1e-8, "z={z}: {a} vs {b}");
            }
            let exact = (1.0 / z - z) * (0.7 * (0.7 * z).cos() + 2.0 * z) - 0.49 * (0.7 * z).sin() + 2.0;
            assert!((apply_laplacian(&closure, z).unwrap() - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn predicted_eigenvalues() {
        assert!((predicted_eigenvalue(1, 0.1) - 0.96).abs() < 1e-15);
        assert!((predicted_eigenvalue(1, 0.05) - 0.99).abs() < 1e-15);
        assert_eq!(predicted_eigenvalue(0, 0.3), 1.0);
    }

    #[test]
    fn moments_at_unit_speed() {
        let p = derive_params(0.05, 1.0).unwrap();
        let m = scattering_moments(1.0, &p, &WallLaw::Gaussian { sigma: 1.0 }, 200_000, &make_stream(3)).unwrap();
        assert!(m.e1.abs() < 3.0 * m.se1 + 1e-4, "{m:?}");
        assert!(m.e2 > 0.0);
        assert!(scattering_moments(1.0, &p, &WallLaw::Gaussian { sigma: 1.0 }, 10, &make_stream(3)).is_err());
    }

    #[test]
    fn operator_limit_estimators_agree() {
        let p = derive_params(0.1, 1.0).unwrap();
        let phi1 = laguerre_eigenpair(1).unwrap().phi;
        let exact = operator_limit(&phi1, 1.0, &p).unwrap();
        let (mc, se) = operator_limit_mc(&phi1, 1.0, &p, 100_000, &make_stream(5)).unwrap();
        assert!((mc - exact).abs() < 4.0 * se + 1e-3, "{mc} ± {se} vs {exact}");
    }
}

//! Finite-rank approximations of Markov operators and their spectra.
//!
//! An operator `(Pf)(v) = ∫ K(v, u) f(u) dμ(u)` with kernel `K` taken relative
//! to its stationary measure `μ` is replaced by the matrix `M_ij = K(v_i, v_j)`
//! together with quadrature weights `μ_j`. When `P` is self-adjoint on `L²(μ)`
//! the matrix `D^{1/2} M D^{1/2}` (with `D = diag(μ)`) is symmetric and has the
//! same eigenvalues as the discretized operator.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid_arg, Error, Result};
use crate::quadrature::gauss_legendre;
use crate::stats::{EmpiricalDistribution, RandomStream};
use crate::two_masses::{kernel_k, stationary_density, TwoMassParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    Midpoint,
    GaussLegendre,
}

/// Nodes on `(0, v_max)` and the rule that weights them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub n: usize,
    pub v_max: f64,
    pub rule: QuadratureRule,
}

impl GridSpec {
    pub fn new(n: usize, v_max: f64, rule: QuadratureRule) -> Result<Self> {
        let g = Self { n, v_max, rule };
        g.validate()?;
        Ok(g)
    }

    pub fn midpoint(n: usize, v_max: f64) -> Result<Self> {
        Self::new(n, v_max, QuadratureRule::Midpoint)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid_arg!("grid needs at least 2 nodes, got {}", self.n));
        }
        if !(self.v_max > 0.0) || !self.v_max.is_finite() {
            return Err(invalid_arg!("grid truncation must be positive, got {}", self.v_max));
        }
        Ok(())
    }

    /// Nodes (ascending) and quadrature weights for `∫₀^{v_max}`.
    pub fn nodes_and_weights(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        match self.rule {
            QuadratureRule::Midpoint => {
                let h = self.v_max / self.n as f64;
                let nodes = (0..self.n).map(|i| (i as f64 + 0.5) * h).collect();
                Ok((nodes, vec![h; self.n]))
            }
            QuadratureRule::GaussLegendre => gauss_legendre(self.n, 0.0, self.v_max),
        }
    }

    /// Cell boundaries around the nodes: `0`, the midpoints between
    /// neighbouring nodes, and `v_max`.
    pub fn cell_edges(&self) -> Result<Vec<f64>> {
        let (nodes, _) = self.nodes_and_weights()?;
        Ok(edges_around(&nodes, 0.0, self.v_max))
    }
}

fn edges_around(nodes: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(nodes.len() + 1);
    edges.push(lo);
    edges.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(hi);
    edges
}

/// A matrix approximation of a Markov operator, relative to its stationary measure.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub nodes: Vec<f64>,
    /// Cell boundaries, one more than the nodes.
    pub edges: Vec<f64>,
    /// Raw quadrature weights (cell widths for histogram estimates).
    pub quad_weights: Vec<f64>,
    /// Stationary mass of each node, summing to one.
    pub mu_weights: Vec<f64>,
    /// `matrix[(i, j)] ≈ K(v_i, v_j)`.
    pub matrix: DMatrix<f64>,
    /// Fraction of Monte Carlo outputs that fell beyond the last cell.
    pub spill_fraction: f64,
}

impl DiscretizedOperator {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(Pf)(v_i) ≈ Σ_j M_ij f_j μ_j` for an observable sampled at the nodes.
    pub fn apply_observable(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.len() {
            return Err(invalid_arg!("observable has {} values for {} nodes", f.len(), self.len()));
        }
        let weighted: Vec<f64> = f.iter().zip(&self.mu_weights).map(|(f, m)| f * m).collect();
        Ok((0..self.len())
            .map(|i| self.matrix.row(i).iter().zip(&weighted).map(|(k, w)| k * w).sum())
            .collect())
    }

    /// `Σ_j M_ij μ_j`, which is one for an exact row-stochastic operator.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply_observable(&vec![1.0; self.len()]).expect("matching length")
    }

    /// `D^{1/2} M D^{1/2}`, explicitly symmetrized.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.len();
        let sq: Vec<f64> = self.mu_weights.iter().map(|m| m.sqrt()).collect();
        let mut s = DMatrix::from_fn(n, n, |i, j| sq[i] * self.matrix[(i, j)] * sq[j]);
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        s
    }
}

/// Nyström discretization of the kernel `K(v, u)` (relative to `μ`) at the grid
/// nodes, with `μ` built from `density` times the quadrature weights.
pub fn discretize_nystrom<K, D>(kernel: K, density: D, grid: &GridSpec) -> Result<DiscretizedOperator>
where
    K: Fn(f64, f64) -> f64 + Sync,
    D: Fn(f64) -> f64,
{
    let (nodes, quad_weights) = grid.nodes_and_weights()?;
    let mu_weights = mu_from_density(&nodes, &quad_weights, density)?;
    let n = nodes.len();
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&v| nodes.iter().map(|&u| kernel(v, u)).collect())
        .collect();
    for (i, row) in rows.iter().enumerate() {
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "kernel is not finite at (i={i}, j={j}) = ({}, {})",
                nodes[i], nodes[j]
            )));
        }
    }
    let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(DiscretizedOperator {
        edges: edges_around(&nodes, 0.0, grid.v_max),
        nodes,
        quad_weights,
        mu_weights,
        matrix,
        spill_fraction: 0.0,
    })
}

fn mu_from_density(nodes: &[f64], weights: &[f64], density: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let raw: Vec<f64> = nodes.iter().zip(weights).map(|(&v, &w)| density(v) * w).collect();
    if raw.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::Numeric("stationary density is negative or not finite on the grid".into()));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(invalid_arg!("stationary density has no mass on the grid"));
    }
    if raw.contains(&0.0) {
        return Err(invalid_arg!("stationary density vanishes at a grid node"));
    }
    Ok(raw.into_iter().map(|m| m / total).collect())
}

/// Monte Carlo discretization: row `i` is the histogram of `step(v_i)` over the
/// grid cells, divided by the stationary cell masses from `density`.
pub fn discretize_mc<S, D>(
    step: S,
    density: D,
    grid: &GridSpec,
    samples_per_node: usize,
    stream: &RandomStream,
) -> Result<DiscretizedOperator>
where
    S: Fn(f64, &mut RandomStream) -> Result<f64> + Sync,
    D: Fn(f64) -> f64,
{
    if samples_per_node < 1000 {
        return Err(invalid_arg!("need at least 1000 samples per node, got {samples_per_node}"));
    }
    let (nodes, _) = grid.nodes_and_weights()?;
    let edges = edges_around(&nodes, 0.0, grid.v_max);
    let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    let mu_weights = mu_from_density(&nodes, &widths, density)?;
    let n = nodes.len();

    let rows: Vec<(Vec<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, usize)> {
            let mut s = stream.fork(i as u64);
            let mut counts = vec![0usize; n];
            let mut spill = 0;
            for _ in 0..samples_per_node {
                let out = step(nodes[i], &mut s)?;
                if !out.is_finite() || out < 0.0 {
                    return Err(Error::Numeric(format!("step from node {i} returned {out}")));
                }
                if out >= grid.v_max {
                    spill += 1;
                }
                counts[cell_index(&edges, out)] += 1;
            }
            let total = samples_per_node as f64;
            Ok((counts.into_iter().map(|c| c as f64 / total).collect(), spill))
        })
        .collect::<Result<_>>()?;

    let spill: usize = rows.iter().map(|r| r.1).sum();
    let matrix = DMatrix::from_fn(n, n, |i, j| rows[i].0[j] / mu_weights[j]);
    Ok(DiscretizedOperator {
        nodes,
        edges,
        quad_weights: widths,
        mu_weights,
        matrix,
        spill_fraction: spill as f64 / (n * samples_per_node) as f64,
    })
}

pub(crate) fn cell_index(edges: &[f64], x: f64) -> usize {
    let cells = edges.len() - 1;
    edges[1..cells].partition_point(|e| *e <= x)
}

/// Eigen-decomposition summary of a discretized operator.
#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Leading eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// One minus the second-largest eigenvalue.
    pub gap: f64,
    /// Most negative eigenvalue of the whole spectrum.
    pub min_eigenvalue: f64,
    /// `φ(v_i)ρ(v_i)` at each node for each returned eigenvalue, with `φ`
    /// normalized in `L²(μ)` and signed so that its first entry is nonnegative.
    pub eigendensities: Vec<Vec<f64>>,
}

/// The `k` largest eigenvalues of the symmetrized operator.
pub fn spectrum(op: &DiscretizedOperator, k: usize) -> Result<SpectrumResult> {
    let n = op.len();
    if k == 0 || k > n {
        return Err(invalid_arg!("requested {k} eigenvalues of a {n}-node operator"));
    }
    let s = op.symmetrized();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("operator matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(s, 1e-14, 10_000)
        .ok_or_else(|| Error::Numeric(format!("symmetric eigensolver did not converge (n={n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let gap = 1.0 - eig.eigenvalues[order[1]];
    let min_eigenvalue = eig.eigenvalues[order[n - 1]];

    let eigendensities = order[..k]
        .iter()
        .map(|&c| {
            let psi = eig.eigenvectors.column(c);
            let sign = if psi[0] < 0.0 { -1.0 } else { 1.0 };
            (0..n)
                .map(|i| {
                    let phi = sign * psi[i] / op.mu_weights[i].sqrt();
                    phi * op.mu_weights[i] / op.quad_weights[i]
                })
                .collect()
        })
        .collect();

    Ok(SpectrumResult {
        eigenvalues,
        gap,
        min_eigenvalue,
        eigendensities,
    })
}

/// Spectral gap of `system(γ)` for each `γ`.
pub fn gap_scan<F>(system: F, gammas: &[f64]) -> Result<Vec<(f64, f64)>>
where
    F: Fn(f64) -> Result<DiscretizedOperator>,
{
    gammas
        .iter()
        .map(|&g| Ok((g, spectrum(&system(g)?, 2)?.gap)))
        .collect()
}

/// Discrete Hilbert-Schmidt norm `√(Σ K(v_i, v_j)² μ_i μ_j)` of a kernel relative to `μ`.
pub fn hs_norm<K, D>(kernel: K, density: D, grid: &GridSpec) -> Result<f64>
where
    K: Fn(f64, f64) -> f64 + Sync,
    D: Fn(f64) -> f64,
{
    let op = discretize_nystrom(kernel, density, grid)?;
    let mu = &op.mu_weights;
    let sum: f64 = (0..op.len())
        .map(|i| (0..op.len()).map(|j| op.matrix[(i, j)].powi(2) * mu[i] * mu[j]).sum::<f64>())
        .sum();
    if !sum.is_finite() {
        return Err(Error::Numeric("Hilbert-Schmidt sum is not finite".into()));
    }
    Ok(sum.sqrt())
}

/// Cell-to-cell transition probabilities `T_ij = M_ij μ_j` (symmetrized so that
/// `μ` is exactly stationary), with the diagonal absorbing the row defect.
pub fn transition_matrix(op: &DiscretizedOperator) -> Result<DMatrix<f64>> {
    let n = op.len();
    let mu = &op.mu_weights;
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                let k = 0.5 * (op.matrix[(i, j)] + op.matrix[(j, i)]);
                t[(i, j)] = k * mu[j];
                off += t[(i, j)];
            }
        }
        let diag = 1.0 - off;
        if diag < -1e-9 {
            return Err(Error::Numeric(format!(
                "row {i} leaves {off} > 1 of its mass; grid too coarse for the kernel"
            )));
        }
        t[(i, i)] = diag.max(0.0);
    }
    Ok(t)
}

/// Pushes `initial` forward through the discretized operator, returning the law
/// after each number of steps in `checkpoints` (in the order given).
pub fn evolve_density(
    op: &DiscretizedOperator,
    initial: &EmpiricalDistribution,
    checkpoints: &[usize],
) -> Result<Vec<EmpiricalDistribution>> {
    let t = transition_matrix(op)?;
    let mut current = nalgebra::RowDVector::from_vec(project_onto(initial, &op.edges)?);
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    let mut snapshots = vec![None; last + 1];
    let wanted: std::collections::HashSet<usize> = checkpoints.iter().copied().collect();
    for step in 0..=last {
        if wanted.contains(&step) {
            snapshots[step] = Some(EmpiricalDistribution::new(op.edges.clone(), current.iter().copied().collect())?);
        }
        if step < last {
            current = &current * &t;
        }
    }
    Ok(checkpoints.iter().map(|&c| snapshots[c].clone().expect("recorded")).collect())
}

/// Redistributes histogram mass onto new cells, assuming uniform density inside each bin.
pub fn project_onto(dist: &EmpiricalDistribution, edges: &[f64]) -> Result<Vec<f64>> {
    let src = dist.edges();
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    if src[0] < lo - 1e-12 || src[src.len() - 1] > hi + 1e-12 {
        return Err(invalid_arg!(
            "distribution on [{}, {}] is not supported on the grid range [{lo}, {hi}]",
            src[0],
            src[src.len() - 1]
        ));
    }
    let mut out = vec![0.0; edges.len() - 1];
    for (b, &mass) in dist.masses().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let (a0, a1) = (src[b], src[b + 1]);
        for (j, cell) in out.iter_mut().enumerate() {
            let overlap = a1.min(edges[j + 1]) - a0.max(edges[j]);
            if overlap > 0.0 {
                *cell += mass * overlap / (a1 - a0);
            }
        }
    }
    Ok(out)
}

/// Nyström discretization of the two-masses operator with Gaussian wall law.
pub fn two_masses_operator(params: &TwoMassParams, grid: &GridSpec) -> Result<DiscretizedOperator> {
    let p = *params;
    discretize_nystrom(
        move |v, u| kernel_k(v, u, &p).value,
        move |v| stationary_density(v, p.sigma),
        grid,
    )
}

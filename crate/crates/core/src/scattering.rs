//! Specular scattering off a periodic piecewise-linear contour.
//!
//! A wall whose surface repeats with period 1 is described by one period, the
//! billiard cell. A particle arrives from above at angle `θ` to the inward
//! normal, crossing the entry line above the cell at horizontal position `x`,
//! bounces specularly off the contour, and eventually leaves through the entry
//! line at angle `θ_out`. Averaging over `x` uniform on the circle gives a
//! Markov operator on angles, and the cosine law `½ cos θ dθ` is stationary
//! for every cell.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use log::debug;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid_arg, Error, Result};
use crate::spectra::{cell_index, DiscretizedOperator};
use crate::stats::RandomStream;

/// Event budget for a single scattering trace.
pub const SCATTER_EVENT_CAP: usize = 10_000;
/// Distance of the entry line above the highest point of the contour.
pub const ENTRY_MARGIN: f64 = 0.1;
const CORNER_TOL: f64 = 1e-12;
const CORNER_SHIFT: f64 = 1e-9;
const CORNER_RETRIES: usize = 16;
/// Height above the contour's top at which traces start.
const START_LIFT: f64 = 1e-9;

/// One period of a piecewise-linear wall contour.
#[derive(Debug, Clone, PartialEq)]
pub struct BilliardCell {
    vertices: Vec<(f64, f64)>,
    depth: f64,
}

impl BilliardCell {
    /// Builds a cell from `(z, y)` vertices with `z` strictly increasing from 0 to 1
    /// and equal heights at both ends.
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(invalid_arg!("a cell needs at least two vertices"));
        }
        if vertices.iter().any(|(z, y)| !z.is_finite() || !y.is_finite()) {
            return Err(invalid_arg!("cell vertices must be finite"));
        }
        let (z0, y0) = vertices[0];
        let (z1, y1) = vertices[vertices.len() - 1];
        if z0 != 0.0 || z1 != 1.0 {
            return Err(invalid_arg!("cell must span z from 0 to 1, got {z0} to {z1}"));
        }
        if vertices.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid_arg!("cell z coordinates must be strictly increasing"));
        }
        if y0 != y1 {
            return Err(invalid_arg!("cell end heights differ ({y0} vs {y1}); the contour must be periodic"));
        }
        let depth = vertices.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { vertices, depth })
    }

    /// A flat wall at height zero.
    pub fn flat() -> Self {
        Self::new(vec![(0.0, 0.0), (1.0, 0.0)]).expect("valid cell")
    }

    /// A single V-shaped notch with 45-degree faces in the middle of the cell.
    pub fn notch() -> Self {
        let d = 0.25;
        Self::new(vec![(0.0, d), (0.25, d), (0.5, 0.0), (0.75, d), (1.0, d)]).expect("valid cell")
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Height of the highest vertex.
    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// Height of the line particles enter and leave through.
    pub fn entry_line(&self) -> f64 {
        self.depth + ENTRY_MARGIN
    }

    /// Parses a `z,y` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| invalid_arg!("cell file is empty"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["z", "y"] {
            return Err(invalid_arg!("cell file header must be `z,y`, got `{header}`"));
        }
        let mut vertices = Vec::new();
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(invalid_arg!("cell file row {} must have two fields: `{line}`", i + 1));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| invalid_arg!("cell file row {}: `{s}` is not a number", i + 1))
            };
            vertices.push((parse(parts[0])?, parse(parts[1])?));
        }
        Self::new(vertices)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("z,y\n");
        for (z, y) in &self.vertices {
            s.push_str(&format!("{z:.16e},{y:.16e}\n"));
        }
        s
    }

    fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }
}

/// The reduced cell of the rotating dumbbell: the contour is the graph of
/// `(1/2π)·max{-γ sin 2πz, γ⁻¹ sin 2πz}`, sampled with `segments_per_arc`
/// segments on each of its two arcs.
pub fn dumbbell_cell(gamma: f64, segments_per_arc: usize) -> Result<BilliardCell> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid_arg!("dumbbell mass parameter must be positive, got {gamma}"));
    }
    if segments_per_arc < 16 {
        return Err(invalid_arg!("need at least 16 segments per arc, got {segments_per_arc}"));
    }
    let f = |z: f64| {
        let s = (TAU * z).sin();
        (-gamma * s).max(s / gamma) / TAU
    };
    let n = 2 * segments_per_arc;
    let mut vertices: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let z = i as f64 / n as f64;
            (z, f(z))
        })
        .collect();
    // the graph vanishes at z = 0, 1/2 and 1; pin those exactly
    vertices[0].1 = 0.0;
    vertices[segments_per_arc].1 = 0.0;
    vertices[n].1 = 0.0;
    BilliardCell::new(vertices)
}

/// Incoming angle and entry position of a scattering event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterState {
    /// Angle to the inward normal, in `(-π/2, π/2)`.
    pub theta: f64,
    /// Position on the entry line, in `[0, 1)`.
    pub entry_x: f64,
}

/// Outcome of one traced scattering event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterTrace {
    pub theta_out: f64,
    /// Where the particle crosses the entry line on the way out, in `[0, 1)`.
    pub exit_x: f64,
    pub bounces: usize,
    /// Largest deviation of the speed from one along the trace.
    pub speed_error: f64,
    /// Entry position actually used, after any corner perturbation.
    pub entry_x: f64,
}

enum TraceError {
    Corner,
    Fatal(Error),
}

fn check_state(theta: f64, entry_x: f64) -> Result<()> {
    if !(theta.abs() < FRAC_PI_2) {
        return Err(invalid_arg!("incoming angle must lie in (-π/2, π/2), got {theta}"));
    }
    if !(0.0..1.0).contains(&entry_x) {
        return Err(invalid_arg!("entry position must lie in [0, 1), got {entry_x}"));
    }
    Ok(())
}

/// Traces a particle entering at `entry_x` with angle `theta`, perturbing the
/// entry by `1e-9` when the path runs into a vertex.
pub fn trace(cell: &BilliardCell, theta: f64, entry_x: f64) -> Result<ScatterTrace> {
    check_state(theta, entry_x)?;
    let mut x = entry_x;
    for attempt in 0..=CORNER_RETRIES {
        match trace_once(cell, theta, x) {
            Ok(t) => return Ok(t),
            Err(TraceError::Fatal(e)) => return Err(e),
            Err(TraceError::Corner) => {
                debug!("corner hit at theta={theta}, entry_x={x} (attempt {attempt}); perturbing entry");
                x = (x + CORNER_SHIFT).rem_euclid(1.0);
            }
        }
    }
    Err(Error::Simulation(format!(
        "trace kept hitting vertices near entry_x={entry_x}, theta={theta}"
    )))
}

fn trace_once(cell: &BilliardCell, theta: f64, entry_x: f64) -> std::result::Result<ScatterTrace, TraceError> {
    let (s, c) = theta.sin_cos();
    let (mut dx, mut dy) = (s, -c);
    // the contour lies below `depth`, so the straight run down to just above it is free
    let start_y = cell.depth + START_LIFT;
    let drop = cell.entry_line() - start_y;
    let mut px = (entry_x + s / c * drop).rem_euclid(1.0);
    let mut py = start_y;
    let mut last_segment = usize::MAX;
    let mut bounces = 0;
    let mut speed_error: f64 = 0.0;

    for _ in 0..SCATTER_EVENT_CAP {
        if dy > 0.0 && py >= cell.depth {
            let rise = cell.entry_line() - py;
            let exit_x = (px + dx / dy * rise).rem_euclid(1.0);
            return Ok(ScatterTrace {
                theta_out: dx.atan2(dy),
                exit_x: if exit_x >= 1.0 { 0.0 } else { exit_x },
                bounces,
                speed_error,
                entry_x,
            });
        }
        let mut best_t = f64::INFINITY;
        let mut best: Option<(usize, f64, (f64, f64), (f64, f64))> = None;
        for (i, (a, b)) in cell.segments().enumerate() {
            if i == last_segment {
                continue;
            }
            let (ex, ey) = (b.0 - a.0, b.1 - a.1);
            let denom = dx * ey - dy * ex;
            if denom == 0.0 {
                continue;
            }
            let (qx, qy) = (a.0 - px, a.1 - py);
            let t = (qx * ey - qy * ex) / denom;
            let u = (qx * dy - qy * dx) / denom;
            if t > 0.0 && t < best_t && (-1e-15..=1.0 + 1e-15).contains(&u) {
                best_t = t;
                best = Some((i, u, a, b));
            }
        }
        let t_wrap = if dx > 0.0 {
            (1.0 - px) / dx
        } else if dx < 0.0 {
            -px / dx
        } else {
            f64::INFINITY
        };
        let t_top = if dy > 0.0 { (cell.depth - py) / dy } else { f64::INFINITY };

        match best {
            Some((i, u, a, b)) if best_t <= t_wrap && best_t <= t_top => {
                let len = (b.0 - a.0).hypot(b.1 - a.1);
                let interior_end = |v: (f64, f64)| v.0 > 0.0 && v.0 < 1.0;
                if (u * len < CORNER_TOL && interior_end(a)) || ((1.0 - u) * len < CORNER_TOL && interior_end(b)) {
                    return Err(TraceError::Corner);
                }
                px += dx * best_t;
                py += dy * best_t;
                let (nx, ny) = (-(b.1 - a.1) / len, (b.0 - a.0) / len);
                let dot = dx * nx + dy * ny;
                dx -= 2.0 * dot * nx;
                dy -= 2.0 * dot * ny;
                speed_error = speed_error.max((dx.hypot(dy) - 1.0).abs());
                last_segment = i;
                bounces += 1;
            }
            _ if t_top <= t_wrap => {
                px += dx * t_top;
                py = cell.depth;
            }
            _ if t_wrap.is_finite() => {
                px = if dx > 0.0 { 0.0 } else { 1.0 };
                py += dy * t_wrap;
                // the segment touching the seam on the other side is a new neighbour
                last_segment = usize::MAX;
            }
            _ => {
                return Err(TraceError::Fatal(Error::Simulation(format!(
                    "ray lost at ({px}, {py}) heading ({dx}, {dy})"
                ))))
            }
        }
    }
    Err(TraceError::Fatal(Error::Simulation(format!(
        "scattering trace exceeded {SCATTER_EVENT_CAP} events (theta={theta}, entry_x={entry_x})"
    ))))
}

/// Outgoing angle for a particle entering at `entry_x` with angle `theta_in`.
pub fn scatter(cell: &BilliardCell, theta_in: f64, entry_x: f64) -> Result<f64> {
    trace(cell, theta_in, entry_x).map(|t| t.theta_out)
}

/// Outgoing angle with the entry position uniform on the circle.
pub fn random_scatter(cell: &BilliardCell, theta: f64, stream: &mut RandomStream) -> Result<f64> {
    scatter(cell, theta, stream.uniform())
}

/// Equal-width angle bins covering `[-π/2, π/2]`.
pub fn angle_edges(bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(invalid_arg!("need at least two angle bins, got {bins}"));
    }
    Ok((0..=bins).map(|i| -FRAC_PI_2 + PI * i as f64 / bins as f64).collect())
}

/// Monte Carlo estimate of the cell's Markov operator on angle bins.
///
/// Row `j` starts `samples_per_node` particles with angles drawn from the
/// cosine law restricted to bin `j`, so that the estimated bin-to-bin
/// transition matrix inherits the cosine law as its stationary measure.
pub fn estimate_cell_operator(
    cell: &BilliardCell,
    edges: &[f64],
    samples_per_node: usize,
    stream: &RandomStream,
) -> Result<DiscretizedOperator> {
    if edges.len() < 3 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid_arg!("angle bins need at least 3 strictly increasing edges"));
    }
    if edges[0] < -FRAC_PI_2 || edges[edges.len() - 1] > FRAC_PI_2 {
        return Err(invalid_arg!("angle bins must lie within [-π/2, π/2]"));
    }
    if samples_per_node == 0 {
        return Err(invalid_arg!("need at least one sample per bin"));
    }
    let n = edges.len() - 1;
    let sines: Vec<f64> = edges.iter().map(|t| t.sin()).collect();
    let total_mass = 0.5 * (sines[n] - sines[0]);
    let mu: Vec<f64> = sines.windows(2).map(|w| 0.5 * (w[1] - w[0]) / total_mass).collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let mut s = stream.fork(j as u64);
            let mut counts = vec![0usize; n];
            for _ in 0..samples_per_node {
                let sin_t = sines[j] + (sines[j + 1] - sines[j]) * s.uniform();
                let theta = sin_t.clamp(-1.0, 1.0).asin().clamp(edges[j], edges[j + 1]);
                let theta = theta.clamp(-FRAC_PI_2 + 1e-15, FRAC_PI_2 - 1e-15);
                let out = random_scatter(cell, theta, &mut s)?;
                counts[cell_index(edges, out)] += 1;
            }
            Ok(counts.into_iter().map(|c| c as f64 / samples_per_node as f64).collect())
        })
        .collect::<Result<_>>()?;

    let nodes: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(DiscretizedOperator {
        matrix: DMatrix::from_fn(n, n, |i, j| rows[i][j] / mu[j]),
        quad_weights: edges.windows(2).map(|w| w[1] - w[0]).collect(),
        edges: edges.to_vec(),
        nodes,
        mu_weights: mu,
        spill_fraction: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::make_stream;

    #[test]
    fn flat_cell_is_specular() {
        let cell = BilliardCell::flat();
        for (theta, x) in [(0.3, 0.1), (-1.2, 0.7), (0.0, 0.5), (1.5, 0.99)] {
            let t = trace(&cell, theta, x).unwrap();
            assert!((t.theta_out - theta).abs() < 1e-12);
            assert_eq!(t.bounces, 1);
        }
    }

    #[test]
    fn notch_hand_traces() {
        let cell = BilliardCell::notch();
        // normal incidence on either face comes straight back, mirrored across the notch
        for x in [0.3, 0.37, 0.45, 0.6] {
            let t = trace(&cell, 0.0, x).unwrap();
            assert!(t.theta_out.abs() < 1e-12, "x={x}: {}", t.theta_out);
            assert_eq!(t.bounces, 2);
            assert!((t.exit_x - (1.0 - x)).abs() < 1e-12);
        }
        // 45 degrees onto the right face is reflected straight back
        let t = trace(&cell, PI / 4.0, 0.45).unwrap();
        assert!((t.theta_out + PI / 4.0).abs() < 1e-12, "{}", t.theta_out);
        // flat shoulders act like a flat wall
        let t = trace(&cell, 0.0, 0.1).unwrap();
        assert!(t.theta_out.abs() < 1e-12 && t.bounces == 1);
    }

    #[test]
    fn traces_are_reversible() {
        let cells = [BilliardCell::notch(), dumbbell_cell(0.5, 32).unwrap()];
        let mut s = make_stream(11);
        for cell in &cells {
            for _ in 0..2000 {
                let theta = (s.uniform() - 0.5) * 3.0;
                let x = s.uniform();
                let fwd = trace(cell, theta, x).unwrap();
                assert!(fwd.speed_error < 1e-12);
                let back = trace(cell, -fwd.theta_out, fwd.exit_x).unwrap();
                assert!((back.theta_out + theta).abs() < 1e-8, "{theta} -> {} -> {}", fwd.theta_out, back.theta_out);
                let dx = (back.exit_x - fwd.entry_x).abs();
                assert!(dx.min(1.0 - dx) < 1e-8);
            }
        }
    }

    #[test]
    fn dumbbell_geometry() {
        let c = dumbbell_cell(1.0, 64).unwrap();
        assert!((c.depth() - 1.0 / TAU).abs() < 1e-15);
        let c = dumbbell_cell(0.5, 64).unwrap();
        let at = |z: f64| c.vertices().iter().find(|v| (v.0 - z).abs() < 1e-12).unwrap().1;
        assert!((at(0.25) - 1.0 / PI).abs() < 1e-15);
        assert!((at(0.75) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(dumbbell_cell(0.5, 8).is_err());
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let c = BilliardCell::notch();
        assert_eq!(BilliardCell::from_csv(&c.to_csv()).unwrap(), c);
        assert!(BilliardCell::from_csv("x,y\n0,0\n1,0\n").is_err());
        assert!(BilliardCell::from_csv("z,y\n0,0\n1,0.5\n").is_err());
        assert!(BilliardCell::from_csv("z,y\n0,0\n0.5,1\n0.4,1\n1,0\n").is_err());
    }

    #[test]
    fn flat_cell_operator_is_identity() {
        let edges = angle_edges(10).unwrap();
        let op = estimate_cell_operator(&BilliardCell::flat(), &edges, 200, &make_stream(0)).unwrap();
        let s = crate::spectra::spectrum(&op, 2).unwrap();
        assert!(s.gap.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_angles() {
        assert!(scatter(&BilliardCell::flat(), FRAC_PI_2, 0.1).is_err());
        assert!(scatter(&BilliardCell::flat(), 0.1, 1.0).is_err());
    }
}

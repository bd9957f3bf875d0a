//! One function per subcommand. Each reads its settings, runs the experiment
//! and returns the CSV body (header row included).

use std::fmt::Write;

use anyhow::Result;
use rbm_core::gibbs::{
    run_spring_chain, sample_stationary_molecule, sample_stationary_molecule_sequential, sample_wall_state,
    sample_wall_state_sequential, MoleculeSpec, PhaseState,
};
use rbm_core::laplacian::scattering_moments;
use rbm_core::scattering::{angle_edges, dumbbell_cell, estimate_cell_operator, trace};
use rbm_core::spectra::{evolve_density, gap_scan, spectrum, two_masses_operator};
use rbm_core::stats::{cosine_angle_from_uniform, make_stream, tv_distance};
use rbm_core::two_masses::{derive_params, kernel_k, kernel_kappa, run_chain, stationary_density};
use rbm_core::{
    BilliardCell, EmpiricalDistribution, GibbsSystemSpec, GridSpec, Potential, QuadratureRule, RandomStream,
    SpringMassParams, TwoMassParams, WallLaw,
};

use crate::settings::{arg_error, Settings};

/// Floats are written with 17 significant digits so that they round-trip.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn stream(s: &mut Settings) -> Result<RandomStream> {
    Ok(make_stream(s.get("seed", "0")?))
}

fn two_mass_params(s: &mut Settings) -> Result<TwoMassParams> {
    let gamma = s.get("gamma", "0.1")?;
    let sigma = s.get("sigma", "1")?;
    Ok(derive_params(gamma, sigma)?)
}

fn grid(s: &mut Settings) -> Result<GridSpec> {
    let n = s.get("grid_n", "200")?;
    let v_max = s.get("v_max", "6")?;
    let rule = match s.get::<String>("rule", "midpoint")?.as_str() {
        "midpoint" => QuadratureRule::Midpoint,
        "gauss-legendre" => QuadratureRule::GaussLegendre,
        other => return Err(arg_error(format!("unknown quadrature rule `{other}` (midpoint, gauss-legendre)"))),
    };
    Ok(GridSpec::new(n, v_max, rule)?)
}

fn eigenvalue_table(values: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, num(*v)).unwrap();
    }
    out
}

fn chain_table(speeds: &[f64]) -> String {
    let mut out = String::from("step,speed\n");
    for (i, v) in speeds.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, num(*v)).unwrap();
    }
    out
}

pub fn two_masses_simulate(s: &mut Settings) -> Result<String> {
    let mut rng = stream(s)?;
    let params = two_mass_params(s)?;
    let steps = s.get("steps", "1000")?;
    let v0 = s.get("v0", "1")?;
    let speeds = run_chain(v0, steps, &WallLaw::Gaussian { sigma: params.sigma }, &mut rng, &params)?;
    Ok(chain_table(&speeds))
}

pub fn two_masses_kernel(s: &mut Settings) -> Result<String> {
    stream(s)?;
    let params = two_mass_params(s)?;
    let (nodes, _) = grid(s)?.nodes_and_weights()?;
    let mut out = String::from("v,u,kappa,relative\n");
    for &v in &nodes {
        for &u in &nodes {
            let kappa = kernel_kappa(v, u, &params);
            let relative = kernel_k(v, u, &params).value;
            writeln!(out, "{},{},{},{}", num(v), num(u), num(kappa), num(relative)).unwrap();
        }
    }
    Ok(out)
}

pub fn two_masses_spectrum(s: &mut Settings) -> Result<String> {
    stream(s)?;
    let params = two_mass_params(s)?;
    let grid = grid(s)?;
    let k = s.get("eigenvalues", "10")?;
    let op = two_masses_operator(&params, &grid)?;
    Ok(eigenvalue_table(&spectrum(&op, k)?.eigenvalues))
}

pub fn two_masses_gap_scan(s: &mut Settings) -> Result<String> {
    stream(s)?;
    let gammas: Vec<f64> = s.get_list("gammas", "0.05,0.1,0.15")?;
    let sigma: f64 = s.get("sigma", "1")?;
    let grid = grid(s)?;
    let gaps = gap_scan(|g| two_masses_operator(&derive_params(g, sigma)?, &grid), &gammas)?;
    let mut out = String::from("gamma,gap,four_gamma_sq\n");
    for (g, gap) in gaps {
        writeln!(out, "{},{},{}", num(g), num(gap), num(4.0 * g * g)).unwrap();
    }
    Ok(out)
}

pub fn two_masses_evolve(s: &mut Settings) -> Result<String> {
    stream(s)?;
    let params = two_mass_params(s)?;
    let grid = grid(s)?;
    let checkpoints: Vec<usize> = s.get_list("checkpoints", "1,10,50,100")?;
    let lo: f64 = s.get("init_lo", "2")?;
    let hi: f64 = s.get("init_hi", "3")?;
    if !(lo >= 0.0 && hi > lo) {
        return Err(arg_error(format!("initial interval [{lo}, {hi}] must satisfy 0 <= init_lo < init_hi")));
    }
    let op = two_masses_operator(&params, &grid)?;
    let initial = EmpiricalDistribution::new(vec![lo, hi], vec![1.0])?;
    let stationary = EmpiricalDistribution::new(op.edges.clone(), op.mu_weights.clone())?;
    let laws = evolve_density(&op, &initial, &checkpoints)?;
    let mut out = String::from("step,v,density,stationary_density,tv_to_stationary\n");
    for (step, law) in checkpoints.iter().zip(&laws) {
        let tv = tv_distance(law, &stationary)?;
        for (i, d) in law.densities().iter().enumerate() {
            let v = op.nodes[i];
            writeln!(out, "{step},{},{},{},{}", num(v), num(*d), num(stationary_density(v, params.sigma)), num(tv))
                .unwrap();
        }
    }
    Ok(out)
}

pub fn two_masses_moments(s: &mut Settings) -> Result<String> {
    let rng = stream(s)?;
    let params = two_mass_params(s)?;
    let zs: Vec<f64> = s.get_list("z", "0.5,1,2")?;
    let samples = s.get("samples", "100000")?;
    let law = WallLaw::Gaussian { sigma: params.sigma };
    let mut out = String::from("z,e1,e2,e3,se1,se2,se3\n");
    for (i, &z) in zs.iter().enumerate() {
        let m = scattering_moments(z, &params, &law, samples, &rng.fork(i as u64))?;
        let row = [m.z, m.e1, m.e2, m.e3, m.se1, m.se2, m.se3].map(num).join(",");
        writeln!(out, "{row}").unwrap();
    }
    Ok(out)
}

pub fn spring_simulate(s: &mut Settings) -> Result<String> {
    let mut rng = stream(s)?;
    let params = SpringMassParams::new(
        s.get("m1", "10")?,
        s.get("m2", "1")?,
        s.get("k", "5")?,
        s.get("l", "1")?,
        s.get("beta", "1")?,
    )?;
    let steps = s.get("steps", "1000")?;
    let v0 = s.get("v0", "1")?;
    Ok(chain_table(&run_spring_chain(v0, steps, &params, &mut rng)?))
}

fn cell(s: &mut Settings) -> Result<BilliardCell> {
    if let Some(path) = s.get_opt::<String>("cell_file")? {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| arg_error(format!("cannot read cell file {path}: {e}")))?;
        return Ok(BilliardCell::from_csv(&text)?);
    }
    match s.get::<String>("cell", "dumbbell")?.as_str() {
        "dumbbell" => Ok(dumbbell_cell(s.get("gamma", "0.5")?, s.get("segments", "64")?)?),
        "flat" => Ok(BilliardCell::flat()),
        "notch" => Ok(BilliardCell::notch()),
        other => Err(arg_error(format!("unknown cell `{other}` (dumbbell, flat, notch)"))),
    }
}

pub fn cell_simulate(s: &mut Settings) -> Result<String> {
    let mut rng = stream(s)?;
    let cell = cell(s)?;
    let samples: usize = s.get("samples", "10000")?;
    let fixed: Option<f64> = s.get_opt("theta")?;
    let mut out = String::from("theta_in,entry_x,theta_out,bounces\n");
    for _ in 0..samples {
        let theta = match fixed {
            Some(t) => t,
            None => cosine_angle_from_uniform(rng.uniform()),
        };
        let t = trace(&cell, theta, rng.uniform())?;
        writeln!(out, "{},{},{},{}", num(theta), num(t.entry_x), num(t.theta_out), t.bounces).unwrap();
    }
    Ok(out)
}

pub fn cell_spectrum(s: &mut Settings) -> Result<String> {
    let rng = stream(s)?;
    let cell = cell(s)?;
    let edges = angle_edges(s.get("bins", "40")?)?;
    let samples = s.get("samples_per_node", "10000")?;
    let k = s.get("eigenvalues", "10")?;
    let op = estimate_cell_operator(&cell, &edges, samples, &rng)?;
    Ok(eigenvalue_table(&spectrum(&op, k)?.eigenvalues))
}

#[derive(Clone, Copy)]
enum Sampler {
    Canonical,
    Sequential,
}

fn sampler(s: &mut Settings) -> Result<Sampler> {
    match s.get::<String>("sampler", "canonical")?.as_str() {
        "canonical" => Ok(Sampler::Canonical),
        "sequential" => Ok(Sampler::Sequential),
        other => Err(arg_error(format!("unknown sampler `{other}` (canonical, sequential)"))),
    }
}

fn state_table(states: &[PhaseState], positions: usize, velocities: usize) -> String {
    let mut columns: Vec<String> = (1..=positions).map(|i| format!("q{i}")).collect();
    columns.extend((1..=velocities).map(|i| format!("v{i}")));
    columns.push("energy".into());
    let mut out = columns.join(",") + "\n";
    for st in states {
        let row: Vec<String> = st.q.iter().chain(&st.velocity).chain([&st.energy]).map(|x| num(*x)).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn gibbs_sample_wall(s: &mut Settings) -> Result<String> {
    let mut rng = stream(s)?;
    let half_width: f64 = s.get("l", "1")?;
    let potential = match s.get::<String>("potential", "quadratic")?.as_str() {
        "flat" => Potential::Flat,
        "quadratic" => Potential::Quadratic {
            center: vec![0.0],
            stiffness: s.get("k", "1")?,
        },
        other => return Err(arg_error(format!("unknown potential `{other}` (flat, quadratic)"))),
    };
    let spec = GibbsSystemSpec::new(potential, vec![-half_width], vec![half_width], s.get("beta", "1")?)?;
    let samples: usize = s.get("samples", "1000")?;
    let method = sampler(s)?;
    let states = (0..samples)
        .map(|_| match method {
            Sampler::Canonical => sample_wall_state(&spec, &mut rng),
            Sampler::Sequential => sample_wall_state_sequential(&spec, &mut rng),
        })
        .collect::<rbm_core::error::Result<Vec<_>>>()?;
    Ok(state_table(&states, 1, 1))
}

pub fn gibbs_sample_stationary(s: &mut Settings) -> Result<String> {
    let mut rng = stream(s)?;
    let dim: usize = s.get("dim", "1")?;
    let beta: f64 = s.get("beta", "1")?;
    if !(1..=3).contains(&dim) {
        return Err(arg_error(format!("dim must be 1, 2 or 3, got {dim}")));
    }
    // the molecule enters through the unit square (or segment) of a flat wall
    let boundary = if dim == 1 {
        None
    } else {
        Some(GibbsSystemSpec::new(Potential::Flat, vec![0.0; dim - 1], vec![1.0; dim - 1], beta)?)
    };
    let spec = MoleculeSpec {
        velocity_dim: dim,
        boundary,
        beta,
    };
    let samples: usize = s.get("samples", "1000")?;
    let method = sampler(s)?;
    let states = (0..samples)
        .map(|_| match method {
            Sampler::Canonical => sample_stationary_molecule(&spec, &mut rng),
            Sampler::Sequential => sample_stationary_molecule_sequential(&spec, &mut rng),
        })
        .collect::<rbm_core::error::Result<Vec<_>>>()?;
    Ok(state_table(&states, dim - 1, dim))
}

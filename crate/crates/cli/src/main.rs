//! `rbm`: run random-billiard experiments and export the results as CSV.

mod commands;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::{load_config, ArgError, Settings};

/// Declares a group of optional string flags. Values stay textual until the
/// settings layer parses them, so flags and config files share one validator.
macro_rules! flag_group {
    ($name:ident { $($field:ident : $help:literal),* $(,)? }) => {
        #[derive(Args, Debug)]
        struct $name {
            $(
                #[arg(long, help = $help, allow_hyphen_values = true)]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn collect(&self, map: &mut BTreeMap<String, String>) {
                $(
                    if let Some(v) = &self.$field {
                        map.insert(stringify!($field).to_string(), v.clone());
                    }
                )*
            }
        }
    };
}

flag_group!(RatioFlags {
    gamma: "mass ratio sqrt(m2/m1) [default 0.1]",
    sigma: "wall thermal speed [default 1]",
});
flag_group!(GridFlags {
    grid_n: "number of velocity nodes [default 200]",
    v_max: "upper end of the velocity grid [default 6]",
    rule: "quadrature rule: midpoint or gauss-legendre [default midpoint]",
});
flag_group!(ChainFlags {
    steps: "number of collision events [default 1000]",
    v0: "initial speed [default 1]",
});
flag_group!(CountFlags {
    eigenvalues: "number of leading eigenvalues to report [default 10]",
});
flag_group!(ScanFlags {
    gammas: "comma-separated mass ratios [default 0.05,0.1,0.15]",
    sigma: "wall thermal speed [default 1]",
});
flag_group!(EvolveFlags {
    checkpoints: "comma-separated step counts [default 1,10,50,100]",
    init_lo: "lower end of the uniform initial speed law [default 2]",
    init_hi: "upper end of the uniform initial speed law [default 3]",
});
flag_group!(MomentFlags {
    z: "comma-separated incoming speeds [default 0.5,1,2]",
    samples: "random map steps per speed [default 100000]",
});
flag_group!(SpringFlags {
    m1: "bound mass [default 10]",
    m2: "free mass [default 1]",
    k: "spring constant [default 5]",
    l: "half-width of the wall interval [default 1]",
    beta: "inverse wall temperature [default 1]",
});
flag_group!(CellFlags {
    cell: "built-in cell: dumbbell, flat or notch [default dumbbell]",
    cell_file: "cell contour CSV (overrides --cell)",
    gamma: "dumbbell shape parameter [default 0.5]",
    segments: "dumbbell segments per arc [default 64]",
});
flag_group!(CellSimFlags {
    samples: "number of particles [default 10000]",
    theta: "fixed incoming angle; cosine law when absent",
});
flag_group!(CellSpectrumFlags {
    bins: "number of angle bins [default 40]",
    samples_per_node: "particles per angle bin [default 10000]",
    eigenvalues: "number of leading eigenvalues to report [default 10]",
});
flag_group!(WallFlags {
    potential: "wall potential: flat or quadratic [default quadratic]",
    k: "stiffness of the quadratic potential [default 1]",
    l: "half-width of the wall interval [default 1]",
    beta: "inverse temperature [default 1]",
    samples: "number of states [default 1000]",
    sampler: "canonical or sequential [default canonical]",
});
flag_group!(MoleculeFlags {
    dim: "velocity dimension, 1 to 3 [default 1]",
    beta: "inverse temperature [default 1]",
    samples: "number of states [default 1000]",
    sampler: "canonical or sequential [default canonical]",
});

#[derive(Parser, Debug)]
#[command(name = "rbm", version, about = "Random billiards with microstructure: simulations and operator spectra as CSV")]
struct Cli {
    /// Seed of the random stream.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Output file (standard output when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Configuration file of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Group,
}

#[derive(Subcommand, Debug)]
enum Group {
    /// Free mass colliding with a mass bound to an interval.
    #[command(subcommand)]
    TwoMasses(TwoMasses),
    /// Free mass colliding with a spring-bound mass.
    #[command(subcommand)]
    Spring(Spring),
    /// Point particle scattering off a periodic billiard cell.
    #[command(subcommand)]
    Cell(Cell),
    /// Samplers for canonical wall and molecule states.
    #[command(subcommand)]
    Gibbs(Gibbs),
}

#[derive(Subcommand, Debug)]
enum TwoMasses {
    /// Speeds of a random-map chain.
    Simulate {
        #[command(flatten)]
        ratio: RatioFlags,
        #[command(flatten)]
        chain: ChainFlags,
    },
    /// Transition kernel on the grid nodes.
    Kernel {
        #[command(flatten)]
        ratio: RatioFlags,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Leading eigenvalues of the discretized operator.
    Spectrum {
        #[command(flatten)]
        ratio: RatioFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        count: CountFlags,
    },
    /// Spectral gap against 4 gamma^2 over several mass ratios.
    GapScan {
        #[command(flatten)]
        scan: ScanFlags,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Speed density after several collision counts.
    Evolve {
        #[command(flatten)]
        ratio: RatioFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[command(flatten)]
        evolve: EvolveFlags,
    },
    /// First three moments of the speed change.
    Moments {
        #[command(flatten)]
        ratio: RatioFlags,
        #[command(flatten)]
        moments: MomentFlags,
    },
}

#[derive(Subcommand, Debug)]
enum Spring {
    /// Speeds of the spring-mass chain.
    Simulate {
        #[command(flatten)]
        spring: SpringFlags,
        #[command(flatten)]
        chain: ChainFlags,
    },
}

#[derive(Subcommand, Debug)]
enum Cell {
    /// Individual scattering events.
    Simulate {
        #[command(flatten)]
        cell: CellFlags,
        #[command(flatten)]
        sim: CellSimFlags,
    },
    /// Leading eigenvalues of the estimated angle operator.
    Spectrum {
        #[command(flatten)]
        cell: CellFlags,
        #[command(flatten)]
        spectrum: CellSpectrumFlags,
    },
}

#[derive(Subcommand, Debug)]
enum Gibbs {
    /// Wall states from the canonical law.
    SampleWall {
        #[command(flatten)]
        wall: WallFlags,
    },
    /// Molecule states entering the wall in equilibrium.
    SampleStationary {
        #[command(flatten)]
        molecule: MoleculeFlags,
    },
}

type Runner = fn(&mut Settings) -> anyhow::Result<String>;

/// Resolves a parsed command to its display name and runner, collecting its flags.
fn dispatch(group: &Group) -> (&'static str, BTreeMap<String, String>, Runner) {
    let mut m = BTreeMap::new();
    let (name, run): (&'static str, Runner) = match group {
        Group::TwoMasses(cmd) => match cmd {
            TwoMasses::Simulate { ratio, chain } => {
                ratio.collect(&mut m);
                chain.collect(&mut m);
                ("two-masses simulate", commands::two_masses_simulate)
            }
            TwoMasses::Kernel { ratio, grid } => {
                ratio.collect(&mut m);
                grid.collect(&mut m);
                ("two-masses kernel", commands::two_masses_kernel)
            }
            TwoMasses::Spectrum { ratio, grid, count } => {
                ratio.collect(&mut m);
                grid.collect(&mut m);
                count.collect(&mut m);
                ("two-masses spectrum", commands::two_masses_spectrum)
            }
            TwoMasses::GapScan { scan, grid } => {
                scan.collect(&mut m);
                grid.collect(&mut m);
                ("two-masses gap-scan", commands::two_masses_gap_scan)
            }
            TwoMasses::Evolve { ratio, grid, evolve } => {
                ratio.collect(&mut m);
                grid.collect(&mut m);
                evolve.collect(&mut m);
                ("two-masses evolve", commands::two_masses_evolve)
            }
            TwoMasses::Moments { ratio, moments } => {
                ratio.collect(&mut m);
                moments.collect(&mut m);
                ("two-masses moments", commands::two_masses_moments)
            }
        },
        Group::Spring(Spring::Simulate { spring, chain }) => {
            spring.collect(&mut m);
            chain.collect(&mut m);
            ("spring simulate", commands::spring_simulate)
        }
        Group::Cell(cmd) => match cmd {
            Cell::Simulate { cell, sim } => {
                cell.collect(&mut m);
                sim.collect(&mut m);
                ("cell simulate", commands::cell_simulate)
            }
            Cell::Spectrum { cell, spectrum } => {
                cell.collect(&mut m);
                spectrum.collect(&mut m);
                ("cell spectrum", commands::cell_spectrum)
            }
        },
        Group::Gibbs(cmd) => match cmd {
            Gibbs::SampleWall { wall } => {
                wall.collect(&mut m);
                ("gibbs sample-wall", commands::gibbs_sample_wall)
            }
            Gibbs::SampleStationary { molecule } => {
                molecule.collect(&mut m);
                ("gibbs sample-stationary", commands::gibbs_sample_stationary)
            }
        },
    };
    (name, m, run)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, mut flags, runner) = dispatch(&cli.command);
    if let Some(seed) = &cli.seed {
        flags.insert("seed".into(), seed.clone());
    }
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    let mut settings = Settings::new(file, flags);
    let body = runner(&mut settings)?;
    let text = format!(
        "# rbm {} command=\"{name}\" {}\n{body}",
        env!("CARGO_PKG_VERSION"),
        settings.describe()
    );
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| anyhow::Error::new(ArgError(format!("cannot write {}: {e}", path.display()))))?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            // a closed pipe downstream is not an error worth reporting
            let _ = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush());
        }
    }
    Ok(())
}

/// Argument problems exit with 2, failures inside a computation with 3.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ArgError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<rbm_core::error::Error>() {
        Some(rbm_core::error::Error::InvalidArgument(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rbm: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Random billiards with microstructure.
//!
//! A molecule colliding with a wall that has internal structure, such as moving
//! masses or a rough periodic contour, is scattered randomly. Averaging over
//! the unobserved wall state turns the deterministic collision into a Markov
//! operator `P` on the molecule's velocities. This crate simulates those
//! operators and computes the spectra of their finite-rank approximations.
//!
//! Modules:
//!
//! * [`stats`]: seeded splittable random streams and empirical distributions.
//! * [`two_masses`]: a free mass scattered by a bound mass in a box, as a
//!   closed-form random map and as an integral kernel.
//! * [`spectra`]: Nyström and Monte Carlo discretizations and the spectral
//!   quantities computed from them.
//! * [`laplacian`]: the small-mass-ratio limit operator and its Laguerre
//!   eigenfunctions.
//! * [`gibbs`]: canonical wall and molecule states, including the spring-mass
//!   wall.
//! * [`scattering`]: specular scattering off periodic piecewise-linear contours.
//! * [`quadrature`]: Gauss-Legendre rules and adaptive Simpson integration.

pub mod error;
pub mod gibbs;
pub mod laplacian;
pub mod quadrature;
pub mod scattering;
pub mod spectra;
pub mod stats;
pub mod two_masses;

pub use error::{Error, Result};
pub use gibbs::{GibbsSystemSpec, Potential, SpringMassParams};
pub use laplacian::{LaguerreEigenpair, MomentEstimate, Polynomial, SmoothFunction};
pub use scattering::{BilliardCell, ScatterState};
pub use spectra::{DiscretizedOperator, GridSpec, QuadratureRule, SpectrumResult};
pub use stats::{EmpiricalDistribution, RandomStream};
pub use two_masses::{BranchOutcome, Region, TwoMassParams, WallLaw};

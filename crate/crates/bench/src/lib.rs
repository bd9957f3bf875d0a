//! Fixtures shared by the benchmark targets.

use rbm_core::gibbs::SpringMassParams;
use rbm_core::two_masses::derive_params;
use rbm_core::{GridSpec, TwoMassParams};

/// Two-masses system at mass ratio 0.1 with unit wall temperature.
pub fn reference_two_masses() -> TwoMassParams {
    derive_params(0.1, 1.0).expect("valid parameters")
}

/// Spring-mass system with m1 = 10, m2 = 1, k = 5, l = 1 at unit temperature.
pub fn reference_spring() -> SpringMassParams {
    SpringMassParams::new(10.0, 1.0, 5.0, 1.0, 1.0).expect("valid parameters")
}

/// Midpoint velocity grid on [0, 6] with `n` nodes.
pub fn velocity_grid(n: usize) -> GridSpec {
    GridSpec::midpoint(n, 6.0).expect("valid grid")
}

//! Two-time laws of unitary processes.
//!
//! Two-variable ψ, H and g transforms; the increment formula for processes
//! with multiplicatively free increments; the opposite bi-free partial
//! S-transform and bi-free multiplicative convolution; joint densities on
//! the torus by Poisson recovery; the free unitary Lévy kernel.

mod joint;
mod torus;

pub use joint::{
    bifree_mult_convolve, diagonal_pair, g_from_psi2, h_from_psi2, h_increment, increment_pair, increment_pair_of,
    independent_pair, joint_cumulant_table, joint_moment_table, levy_pair, opposite_partial_s_from_cumulants,
    opposite_partial_s_from_h, JointPsiEvaluator, WPoint, ZPoint, FIT_DEGREE, FIT_POINTS, FIT_RADIUS, NEAR_POLE,
    SOP_TOL,
};
pub use torus::{
    circle_transition_kernel, circle_transition_kernel_with, levy_joint_density, levy_kernel, recover_density_torus,
    recover_density_torus_with, RadialFit, TorusDensityGrid, TorusRecovery, TORUS_SCHEDULE,
};

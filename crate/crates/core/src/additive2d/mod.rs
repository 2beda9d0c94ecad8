//! Two-time laws of self-adjoint processes.
//!
//! Two-variable Green's functions from the increment formula, from reduced
//! partial R-transforms, and from bi-free additive subordination; joint
//! densities by two-variable Stieltjes inversion; transition kernels; the
//! closed forms for the free Gaussian and free Cauchy processes.

mod closed;
mod density;
mod green;

pub use closed::{cauchy_joint_density, cauchy_kernel, gaussian_joint_density, gaussian_kernel};
pub use density::{
    default_options_2d, detect_support, joint_moments_by_quadrature, quadrature_options_2d, recover_density_2d,
    recover_density_2d_auto, recover_density_2d_auto_with, recover_density_2d_with, QuadratureMoments,
    transition_kernel, JointDensityGrid, Slice, TransitionKernel, DEFAULT_N2D, MARGINAL_FLOOR, SUPPORT_THRESHOLD,
};
pub use green::{
    bifree_add_convolve, gaussian_green, green2_from_reduced_r, green2_increment, green2_increment_of,
    increment_reduced_r, independent_green, joint_moments_by_contour, AxisPoint, BivariateSeries,
    JointGreenEvaluator, Route, NEAR_POLE, POLE_SHIFT, POLE_TOL,
};

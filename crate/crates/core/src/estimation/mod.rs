//! Nonparametric estimation from a continuous-time record: invariant density,
//! the plug-in `xi_hat` and the estimated threshold.

mod density;
mod kernel;
mod occupation;
mod threshold;
mod xi;

pub use density::{
    default_bandwidth, default_local_time_band, kernel_density_estimate, local_time_density_estimate, Density,
    DensityEstimate, DensityKind, DensitySummary,
};
pub use kernel::{KernelSpec, KERNEL_QUAD_TOL};
pub use occupation::Occupation;
pub use threshold::{
    density_from_config, estimate_from_occupation, estimate_threshold, profile_rows, write_profile_csv,
    xi_from_density, BandwidthRule, EstimatorConfig, ProfileRow, ThresholdEstimate, DEFAULT_DENSITY_FLOOR,
};
pub use xi::{build_xi_estimate, threshold_nodes, XiEstimate};

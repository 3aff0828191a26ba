//! Scalar diffusions `dX = b(X) dt + sigma(X) dW` from the recurrent class
//! (linear growth, uniformly elliptic, drift pointing inward outside
//! `[-A, A]`), their quadrature oracles and Euler–Maruyama simulation.

mod model;
mod oracle;
mod path_io;
mod simulate;

pub use model::{ClassReport, DiffusionModel, DriftClassParams, Violation, ViolationKind};
pub use oracle::{InnerLimit, InvariantDensityOracle, XiTable, DEFAULT_QUAD_STEP, TAIL_LEVEL};
pub use path_io::PATH_MAGIC;
pub use simulate::{
    first_hitting_time, first_passage_times, simulate_path, step_count, EulerStepper, HittingTime, SamplePath,
    DEFAULT_DT,
};

//! Trajectory parameterizations `omega(c)` and their Jacobians, plus
//! the standard trajectory generators used as initializations.

mod bspline;
mod generators;
mod rotation;

pub use bspline::{quad_bspline, BsplineBasis, BsplineParam};
pub use generators::{
    check_feasibility, generate_initial, golden_angle_deg, AngleScheme, Geometry, TrajKind,
};
pub use rotation::{RotationAxis, RotationParam};

//! Nonparametric joint alignment ("congealing") of 1-D curves.
//!
//! Every curve carries a six-parameter transform: a monotone time warp with
//! four Fourier weights plus a linear amplitude map `alpha * y + beta`. The
//! [`congeal`](congeal::congeal) optimizer perturbs these parameters one
//! coordinate at a time and keeps changes that lower the sum of
//! location-wise entropies (or variances) across the set.

pub mod cli;
pub mod congeal;
pub mod curves;
pub mod error;
pub mod evalkit;
pub mod io;
pub mod objective;
pub mod synthgen;

pub use congeal::{
    align_per_class, congeal, AlignmentReport, ClassAlignment, CongealConfig, EnabledTransforms,
    StepSizes, TransformFamily,
};
pub use curves::{
    apply_transform, coefficient_function, recenter, warp_function, Curve, CurveSet,
    TransformParams, WarpTable,
};
pub use error::{Error, ErrorClass, ParseError, Result};
pub use objective::{
    joint_objective, location_variance, vasicek_entropy, vasicek_window, ObjectiveKind,
    ObjectiveValue,
};

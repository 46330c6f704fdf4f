//! Minimax (guaranteed-cost) state estimation for linear descriptor systems.
//!
//! The crate covers two settings:
//!
//! - discrete time, `F_{k+1} x_{k+1} - C_k x_k = f_k`, `F_0 x_0 = q`,
//!   `y_k = H_k x_k + g_k`, with the disturbance `(q, f, g)` confined to the
//!   ellipsoid `(S q, q) + sum (S_k f_k, f_k) + (R_k g_k, g_k) <= 1`. The
//!   recursive estimator in [`discrete`] returns directional estimates and
//!   their guaranteed errors, the index of noncausality, and the set of
//!   states consistent with the measurements as an [`discrete::Ellipsoid`];
//! - continuous time, `d/dt F x = C(t) x + f`, where [`continuous`] solves
//!   the a priori and a posteriori estimators as two-point boundary value
//!   problems on a uniform grid.
//!
//! [`oracle`] minimizes the stacked disturbance cost directly and is used to
//! certify the recursions. Dense linear algebra lives in [`matalg`].
//!
//! The a priori estimator is the dual of an optimal control problem (minimum
//! of `(Q_2 u, u)` plus a support function over the uncertainty set); that
//! duality is what makes the adjoint BVP in [`continuous::apriori_solve`]
//! the right object, but it is not exposed as a separate solver.

pub mod continuous;
pub mod discrete;
mod error;
pub mod fixtures;
pub mod io;
pub mod matalg;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use matalg::{Matrix, Vector};

pub use continuous::{
    AposterioriSolution, AprioriSolution, BlockDecomposition, ConditionA, ContinuousModel, Grid,
    TimeFunction,
};
pub use discrete::{Ellipsoid, EstimatorState, MinimaxEstimate, MinimaxFilter, Tolerances};
pub use model::{
    DescriptorModel, DisturbanceRealization, MeasurementSequence, Trajectory, UncertaintyWeights,
};
pub use oracle::{DirectionalInterval, StackedSolution};

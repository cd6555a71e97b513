//! Physics-informed neural networks for damped and semilinear wave equations.

pub mod bounds;
pub mod deriv;
pub mod error;
pub mod expr;
pub mod metrics;
pub mod net;
pub mod problem;
pub mod quadrature;
pub mod residual;
pub mod serde_ext;
pub mod theory;
pub mod trainer;

pub use bounds::{posterior_bound, BoundReport, ConstantLedger, GeometryConstants, NormSource};
pub use deriv::{eval_jet, eval_jets, Jet, JetBatch, JetField, JetPlan};
pub use error::{PinnError, Result};
pub use net::{Activation, ActivationNormTable, Architecture, InitScheme, MlpParams, NetworkClass};
pub use problem::{damped_wave_problem, semilinear_power_problem, ProblemSpec};
pub use metrics::{total_error_h1, total_error_l2, H1Error};
pub use quadrature::{build_sets, spacetime_grid, BoxDomain, CollocationSets, GridCounts, Stratum};
pub use residual::{loss_and_gradient, loss_gradient, training_error, ResidualVector, TrainingErrorReport};
pub use theory::{apriori_sizes, q1_residual_bounds, q1_widths, rate_curves, SizingPlan, TheoryInputs};
pub use trainer::{train, Termination, TrainConfig, TrainRecord};

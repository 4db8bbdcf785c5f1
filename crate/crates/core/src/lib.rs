//! One-way sensitivity analysis of discrete Bayesian networks.
//!
//! The crate is `no_std` and only needs `alloc`. It covers:
//!
//! * [`model`]: networks, conditional probability tables, parameter addressing and
//!   proportional co-variation of a CPT column.
//! * [`engine`]: exact inference by variable elimination over dense factors.
//! * [`sensitivity`]: rational-linear sensitivity functions fitted from two
//!   endpoint propagations, their derivatives, hyperbola form and vertex.
//! * [`admissible`]: the admissible deviation of an assessment, i.e. how far it
//!   can move before the most likely value of the variable of interest changes.
//! * [`oracle`]: brute-force joint enumeration used to cross-check everything above.
//!
//! File formats, reports and the command-line front end live in the `bnsens` crate.

#![no_std]

extern crate alloc;

pub mod admissible;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod sensitivity;

pub use admissible::{AdmissibleDeviation, AdmissibleError, Bound, Breakpoint};
pub use engine::{EngineError, Factor, QueryResult};
pub use model::{
    CovaryMode, Cpt, Distribution, Evidence, ModelError, Network, ParameterRef, VarId, Variable, Violation,
    ViolationKind,
};
pub use oracle::{DeviationCheck, DeviationFailure, GridReport, OracleError, ParameterSweep};
pub use sensitivity::{
    Classification, FittedBundle, FunctionBundle, HyperbolaForm, Line, RationalLinear, SensitivityError, Vertex,
};

//! Core library for merit-aware selection: set-utility evaluation, stochastic
//! selection policies, contribution measures, stability audits, statistical
//! parity, policy optimization, and a synthetic admissions harness.
//!
//! The crate is organized in layers:
//!
//! * [`population`], [`outcome`], [`utility`], [`selection`] — the data model:
//!   candidates with features and group labels, outcome matrices and models,
//!   and set-utility functions.
//! * [`oracle`] — expected set/policy utilities, exactly (small populations or
//!   small-support policies) or by Monte Carlo.
//! * [`policy`] — the selection-policy families (tabular, separable linear,
//!   softmax, logistic threshold, deterministic).
//! * [`contribution`] — expected marginal contributions and Shapley values.
//! * [`meritocracy`] — swap/local stability checks, deviation measures, audits.
//! * [`fairness`] — statistical-parity gaps, penalties, and gradients.
//! * [`optimize`] — analytic policy gradients, the ascent loop, its
//!   primal-dual constrained variant, and baseline selectors.
//! * [`simdata`], [`experiment`], [`landscape`] — the synthetic admissions
//!   pipeline, the end-to-end comparison harness, and the two-candidate
//!   utility landscape export.

pub mod contribution;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod landscape;
pub mod meritocracy;
pub mod optimize;
pub mod oracle;
pub mod outcome;
pub mod policy;
pub mod population;
pub mod selection;
pub mod simdata;
pub mod utility;
mod util;

pub use error::{Error, Result};
pub use oracle::{Estimate, EvalMode, ExpectedUtilityOracle};
pub use outcome::{OutcomeMatrix, OutcomeModel};
pub use policy::Policy;
pub use population::Population;
pub use selection::{Force, Selection};
pub use utility::UtilityFunction;

//! Frequentist network meta-analysis (NMA) and component network meta-analysis (CNMA):
//! network and design construction, weighted least squares estimation, forward model
//! selection of interaction terms, construction of disconnected networks, and the kernels of
//! a Monte-Carlo simulation study.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the command-line interface
//! and parallel drivers live in the `cnma` crate.

#![no_std]

extern crate alloc;

pub mod disconnector;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod network;
pub mod selector;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
pub use estimator::{
    cochran_q, confidence_interval, estimate_tau2, fit_cnma, fit_model, fit_nma,
    fit_separate_nmas, fit_wls, pairwise_from_binary, q_difference_test, Estimate, FitReport,
    ModelFit, ModelKind, QTest,
};
pub use network::{
    add_interaction_columns, build_combination_matrix, degrees_of_freedom,
    parse_intervention_label, CombinationMatrix, Comparison, ContrastRecord, DesignMatrices,
    DfModel, Intervention, Network,
};

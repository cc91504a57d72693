//! Domain types and exact log-density evaluation.

pub mod cutoffs;
pub mod data;
pub mod density;
pub mod state;

pub use cutoffs::{contract_cutoffs, expand_cutoffs, CutoffVector};
pub use data::{Annotation, CategoryCount, Dataset, Image, Sequence};
pub use density::{
    dirichlet_log_density, log_f_c, log_f_y, log_f_z, ordinal_pmf, zeta_adjust,
};
pub use state::ParamState;

//! CSV ingestion and export of datasets, chains and reports.
//!
//! Table layouts (header row required, categories one-based):
//!
//! | file | columns |
//! |---|---|
//! | `sequences.csv` | `sequence_id, x1..xp[, true_y]` |
//! | `images.csv` | `sequence_id, image_id, u1..uq` |
//! | `annotations.csv` | `sequence_id, image_id, annotator_id, score` |
//! | `confidences.csv` | `sequence_id, image_id, c1..cL` |
//! | `grid.csv` | `row_id, x1..xp` |
//! | `samples.csv` | `iteration, parameter, index, value` |

mod chain;
mod export;
mod ingest;

pub use chain::{
    read_samples, read_y_marginals, state_entries, write_acceptance, write_chain_summary,
    write_linear_samples, write_linear_summary, write_samples, write_trace, write_y_marginals,
};
pub use export::{export_dataset, fmt_f64, write_atomic, write_json, CsvTable};
pub use ingest::{
    ingest, read_covariate_table, CovariateTable, DataPaths, IngestOptions, Ingested,
    Standardization,
};

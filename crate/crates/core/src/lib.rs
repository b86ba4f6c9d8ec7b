//! Multi-scale micromobility demand forecasting.
//!
//! Trip records are cleaned, assigned to zones of one or more spatial
//! levels and aggregated per time bucket into directed flow graphs. Spatial,
//! temporal and network features are assembled per origin–destination pair
//! and bucket, a set of regressors is fitted under a temporal cut-off, and
//! tree ensembles are explained with exact TreeSHAP.

pub mod error;
pub mod eval;
pub mod explain;
pub mod featgen;
pub mod flownet;
pub mod geom;
pub mod ingest;
pub mod models;
pub mod partition;
pub mod pipeline;
pub mod synth;
pub mod time;

mod linalg;

pub use error::{Error, Result};

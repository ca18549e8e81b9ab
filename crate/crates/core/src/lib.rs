//! Artificial trend indices from search-volume panels.
//!
//! The crate builds monthly indicators from panels of search-volume series
//! with four constructions (principal components, a dynamic factor model, a
//! feed-forward network and a recurrent network) and evaluates them with a
//! two-stage forecasting design and forecast-accuracy tests.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the pipeline uses.

pub mod artifact;
pub mod error;
pub mod evalx;
pub mod factors;
pub mod ingest;
pub mod linalg;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod select;
pub mod series;
pub mod synthetic;
pub mod transform;

pub use error::{Error, Result};
pub use scalar::Real;
pub use series::{Frequency, Month, MonthRange, TimeSeries};

pub type Matrix64 = linalg::Matrix<f64>;
pub type Series64 = series::TimeSeries<f64>;
pub type Dataset64 = transform::AlignedDataset<f64>;
pub type PcaModel64 = factors::PcaModel<f64>;
pub type DfmModel64 = factors::DfmModel<f64>;
pub type Artifact64 = neural::ModelArtifact<f64>;
pub type OlsModel64 = select::OlsModel<f64>;
pub type Indicator64 = pipeline::IndicatorSeries<f64>;

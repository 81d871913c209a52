//! WiFi fingerprint place recognition.
//!
//! Scans are turned into binary feature vectors by thresholding each
//! network's RSSI, a Chow-Liu tree captures dependencies between features,
//! and every query is matched against a database of known places through a
//! detector model (`PzGe = p(z=1|e=0)`, `PzGne = p(z=0|e=1)`). Training scans
//! are clustered by position with DBScan; one scan per cluster trains the
//! tree and up to ten others become database places.
//!
//! The probabilistic types are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to the precisions used by the command-line tool.

pub mod chowliu;
pub mod cluster;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod inference;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod tune;

pub use dataset::{load_ujiindoorloc, ApRegistry, Dataset, GroundTruth, Record, WifiScan};
pub use error::{Error, Result};
pub use eval::{EvalReport, Prediction};
pub use featurize::{featurize_scan, BinningConfig, FeatureVector};
pub use model::ModelFile;
pub use scalar::Scalar;

pub type FeatureStats = chowliu::FeatureStats<f64>;
pub type ChowLiuTree = chowliu::ChowLiuTree<f64>;
pub type DetectorModel = inference::DetectorModel<f64>;
pub type PlaceDatabase = inference::PlaceDatabase<f64>;
pub type MatchResult = inference::MatchResult<f64>;
pub type Prepared = pipeline::Prepared<f64>;

pub type FeatureStats32 = chowliu::FeatureStats<f32>;
pub type ChowLiuTree32 = chowliu::ChowLiuTree<f32>;
pub type DetectorModel32 = inference::DetectorModel<f32>;
pub type PlaceDatabase32 = inference::PlaceDatabase<f32>;
pub type MatchResult32 = inference::MatchResult<f32>;
pub type Prepared32 = pipeline::Prepared<f32>;

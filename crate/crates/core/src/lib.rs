//! Contradiction analysis for attributed feature models.
//!
//! A model (feature tree, integer attributes, cross-tree constraints) is
//! parsed from the `.afm` text format, compiled into a finite-domain CSP and
//! checked with the built-in solver. The crate detects void models, dead and
//! false-optional features and attribute values, and explains each one as a
//! minimal conflicting set of constraints using QuickXplain, optionally
//! cascaded over module-level constraint groups.
//!
//! ```
//! use afm_doctor::{detector, parser};
//!
//! let model = parser::parse(afm_doctor::fixtures::ROBOT).unwrap();
//! let report = detector::detect(&model, &detector::DetectOptions::default());
//! assert_eq!(report.anomalies.len(), 1);
//! ```

pub mod cli;
pub mod compiler;
pub mod detector;
pub mod explainer;
pub mod fixtures;
pub mod generate;
pub mod model;
pub mod parser;
pub mod quickxplain;
pub mod reduce;
pub mod report;
pub mod solver;

pub use model::{FeatureId, FeatureModel};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("value {value} is not in the domain of `{attr}`")]
    UnknownValue { attr: String, value: i64 },
    #[error("the anomaly does not occur in this model")]
    AnomalyNotReproducible,
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Parse(Vec<parser::ParseError>),
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<model::Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Rollercoaster ride analysis and star-rating prediction.
//!
//! The pipeline runs from track geometry ([`track`], [`kinematics`]) through
//! ride features ([`features`]) and questionnaire targets ([`ratings`]) to a
//! small recurrent network ([`net`]), with a synthetic data generator
//! ([`synth`]) and a cross-validation harness ([`eval`]).

pub mod error;
pub mod eval;
pub mod features;
pub mod kinematics;
pub mod net;
pub mod numfmt;
pub mod ratings;
pub mod synth;
pub mod track;

pub use error::{Error, Result};

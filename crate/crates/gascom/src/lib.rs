//! GASCOM: graph-attention-based semantic context selection for online
//! conversation understanding.
//!
//! The pipeline: discussions are parsed into rooted reply trees
//! ([`graph`]), a semantic-aware walk selects the conversational context
//! for each labeled post ([`walks`]), token-level multi-head graph
//! attention aggregates that context into a classification feature vector
//! ([`model`]), and a small training/evaluation harness closes the loop
//! ([`train`], [`metrics`], [`synth`]).

pub mod embed;
pub mod graph;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod walks;

#[doc(hidden)]
pub mod test_oracle;

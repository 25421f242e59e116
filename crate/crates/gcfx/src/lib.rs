//! Model-level counterfactual explanations for black-box graph
//! classifiers: a GIN classifier, a vector-quantized conditional graph
//! generator, and greedy max-coverage summarization of the generated
//! counterfactual candidates.

pub mod graph;
pub mod isomorphism;
pub mod datasets;
pub mod ged;
pub mod metrics;
pub mod candidates;
pub mod gcfs;
pub mod nn;
pub mod classifier;
pub mod vqcfx;
pub mod cli;

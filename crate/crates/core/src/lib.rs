//! Trace mining for batch workloads: reconstruct job DAGs from scheduler
//! traces, embed them with a trainable message-passing encoder, cluster the
//! embeddings, and evaluate runtime prediction against an
//! isomorphism-plus-periodicity baseline.

pub mod baseline;
pub mod cli;
pub mod cluster;
pub mod encoder;
pub mod eval;
pub mod features;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod seeds;
pub mod select;
pub mod synth;

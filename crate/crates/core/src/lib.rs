//! Half-Hop graph upsampling and the linear analysis tools around it.
//!
//! - [`graph`]: directed graphs with features, labels and named masks
//! - [`synth`]: grid graphs, the latent space model, seeded splits
//! - [`augment`]: the Half-Hop transform and its inverse
//! - [`diffusion`]: mean / symmetric aggregation operators, receptive fields
//! - [`regression`]: ridge readouts and risk-versus-depth curves
//! - [`spectral`]: closed-form risk predictions and a Monte-Carlo check
//! - [`io`]: text formats for graphs, features, labels and models

pub mod augment;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod io;
pub mod regression;
pub mod spectral;
pub mod synth;

pub use augment::{half_hop, half_hop_sampled, strip_slow_nodes, AugmentedGraph, HalfHopConfig, SlowInit, Variant};
pub use diffusion::{build_operator, DiffusionOperator, OperatorKind};
pub use error::{Error, Result};
pub use graph::{DedupPolicy, Graph, Labels, NodeId};
pub use synth::LatentModel;

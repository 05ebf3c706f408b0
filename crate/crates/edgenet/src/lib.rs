//! Edge-varying graph filters and networks with spectral stability analysis.
//!
//! The crate builds graph shift operators, the edge-varying filter family
//! and its constrained subclasses (convolutional, node-varying,
//! shift-invariant, eigenvector-sharing), their frequency-domain analysis,
//! relative topological perturbations, closed-form stability bounds, and a
//! trainable multi-layer network on top of the filters. An experiment layer
//! reproduces the Monte-Carlo protocols that compare empirical output
//! deviations against the theoretical bounds.

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod graph;
pub mod linalg;
pub mod net;
pub mod perturb;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use filters::{FilterClass, FilterParams};
pub use graph::{GraphShiftOperator, GraphSignal, SupportMask};
pub use net::{EdgeNet, EdgeNetConfig};
pub use perturb::{PerturbMode, Perturbation, PerturbedGraph};
pub use spectral::{FrequencyResponse, MisalignmentReport};

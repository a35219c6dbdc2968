//! Multilevel force-approximated metric MDS (Glimmer) and its progressive,
//! dimension-chunked variant.
//!
//! The high-dimensional data lives in a [`DataMatrix`] made of column chunks.
//! [`glimmer::run_glimmer`] computes a batch embedding of the active window;
//! [`progressive::ProgressiveEngine`] grows (or slides) the active window one
//! chunk at a time and warm-starts every relaxation from the previous result.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! aliases below are what most callers want.

#![allow(clippy::needless_range_loop)]

pub mod convergence;
pub mod datamatrix;
mod error;
pub mod glimmer;
pub mod layout;
pub mod metric;
pub mod progressive;
pub mod rng;
mod scalar;

pub use convergence::{ConvergenceConfig, ConvergenceState, Decision, StressTrace};
pub use datamatrix::{
    ChunkId, ColumnChunk, DataMatrix, PackedWindow, PointDistances, SyntheticKind, SyntheticSpec,
};
pub use error::{GlimmerError, Result};
pub use glimmer::{GlimmerConfig, GlimmerResult, LevelHierarchy};
pub use layout::{Embedding, LayoutConfig, NeighborSets};
pub use metric::ShepardSample;
pub use progressive::{
    run_progressive, run_sliding, ChannelObserver, ChunkOrder, FullStressPolicy, InitMode,
    IterationCap, NoObserver, Observer, ProgressSnapshot, ProgressionMode, ProgressiveConfig,
    ProgressiveEngine, ProgressiveRun, SnapshotKind, StressReference,
};
pub use scalar::Scalar;

pub type DataMatrix64 = DataMatrix<f64>;
pub type DataMatrix32 = DataMatrix<f32>;
pub type Embedding64 = Embedding<f64>;
pub type Embedding32 = Embedding<f32>;
pub type NeighborSets64 = NeighborSets<f64>;
pub type StressTrace64 = StressTrace<f64>;
pub type ProgressSnapshot64 = ProgressSnapshot<f64>;
pub type ProgressiveEngine64 = ProgressiveEngine<f64>;
pub type LayoutConfig64 = LayoutConfig<f64>;
pub type ConvergenceConfig64 = ConvergenceConfig<f64>;
pub type GlimmerConfig64 = GlimmerConfig<f64>;
pub type ProgressiveConfig64 = ProgressiveConfig<f64>;

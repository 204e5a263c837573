//! Hyperspectral target detection: ENVI cube I/O, background statistics,
//! classical detectors (SAM, MF, ACE, CEM), a small spectral network,
//! threshold-free evaluation and a synthetic scene generator.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod background;
pub mod detectors;
pub mod envi;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod scene;
pub mod synth;

pub use background::{BackgroundModel, PixelSource, SampleMoments, Signature};
pub use detectors::{score_region, CemVariant, Detector, Method, RunReport, ScoreMap};
pub use envi::{ByteOrder, DataType, EnviHeader, Interleave, SpectralCube};
pub use error::{Error, Result};
pub use metrics::{evaluate, Curve, EvalSummary, Evaluation, RankedScores};
pub use nn::{MlpParams, SpectralNet, TrainConfig};
pub use scene::{GroundTruthMask, PixelTable, Region, RegionPresets};
pub use synth::{SynthScene, SynthSpec};

pub use nalgebra;

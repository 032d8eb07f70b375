//! Signal-level fusion of multichannel time series through joint recurrence
//! plots and temporal networks.
//!
//! The pipeline runs per trial: channels are z-scored and cut into sliding
//! windows ([`ingest`]), delay-embedded with per-channel parameters
//! ([`embedding`]), turned into recurrence plots and pairwise joint recurrence
//! plots ([`recurrence`]), scored by determinism or laminarity ([`rqa`]),
//! merged into per-window modality graphs and binarised into a temporal
//! network ([`netbuild`]), and summarised by temporal graph metrics
//! ([`tempnet`]). Trial features feed a sparse one-vs-rest logistic model
//! ([`learn`]). [`synth`] generates coupled test recordings with known
//! structure.

pub mod config;
pub mod embedding;
pub mod error;
pub mod ingest;
pub mod learn;
pub mod recurrence;
pub mod netbuild;
pub mod pipeline;
pub mod rqa;
pub mod synth;
pub mod tempnet;

pub use error::{Error, ErrorKind, Result};

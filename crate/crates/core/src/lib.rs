//! Movement sequencing: frequency-domain gait features from head-worn IMU
//! recordings and the paired-test / PCA / MLP analysis built on them.

pub mod classifier;
pub mod config;
pub mod error;
pub mod featurize;
pub mod gp;
pub mod pipeline;
pub mod signal;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

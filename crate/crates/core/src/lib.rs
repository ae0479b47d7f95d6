//! Speech enhancement by subband-adaptive thresholding of perceptual wavelet
//! packet coefficients.

pub mod audio_io;
pub mod cli;
pub mod config;
pub mod enhancer;
pub mod framing;
pub mod metrics;
pub mod noise_tracker;
pub mod presence;
pub mod pwpt;
pub mod shrink;
pub mod stats;
pub mod teager;
pub mod threshold;

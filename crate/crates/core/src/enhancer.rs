//! Frame pipeline and whole-stream enhancement.
//!
//! Each frame goes through: wavelet packet analysis, Teager energy, noise
//! tracking, a-priori SNR recursion, thresholds, shape parameters, shrinkage
//! and synthesis. Frames are then overlap-added back into a signal.

use thiserror::Error;

use crate::audio_io::AudioBuffer;
use crate::config::{ConfigError, EnhanceConfig};
use crate::framing::{overlap_add, split_frames, FramingError};
use crate::noise_tracker::{NoiseError, NoiseState};
use crate::presence::PresenceState;
use crate::pwpt::{analyze, synthesize, PwptError, SubbandSet, WaveletFilters};
use crate::shrink::{AlphaMode, ShrinkError, Thresholds};
use crate::teager::te_operator;
use crate::threshold::{compute_spec, ThresholdError};

/// Sample rate the default tree is laid out for.
pub const NOMINAL_RATE_HZ: u32 = 8000;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Transform(#[from] PwptError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Shrink(#[from] ShrinkError),
    #[error("frame has {got} samples, expected {expected}")]
    FrameLength { got: usize, expected: usize },
}

/// State carried from one frame to the next.
#[derive(Debug, Clone)]
pub struct StreamState {
    pub noise: NoiseState,
    pub presence: PresenceState,
}

impl StreamState {
    pub fn new(cfg: &EnhanceConfig) -> Self {
        let n = cfg.tree.len();
        Self {
            noise: NoiseState::new(n, cfg.noise),
            presence: PresenceState::new(n, cfg.presence),
        }
    }
}

/// Enhances one windowed frame and advances `state`.
pub fn enhance_frame(
    frame: &[f64],
    state: &mut StreamState,
    cfg: &EnhanceConfig,
    filters: &WaveletFilters,
) -> Result<Vec<f64>, EnhanceError> {
    if frame.len() != cfg.frame_len {
        return Err(EnhanceError::FrameLength {
            got: frame.len(),
            expected: cfg.frame_len,
        });
    }
    let sb = analyze(frame, &cfg.tree, filters)?;
    let te = te_operator(&sb);
    state.noise.update(&te, &sb)?;
    state.presence.xi_recursion(&te, &state.noise);
    let spec = compute_spec(&state.noise, &sb, &te, cfg.variance_domain, cfg.threshold_form)?;
    let alpha = match cfg.shrink.alpha_mode {
        AlphaMode::Dynamic => state.presence.frame_alpha(),
        AlphaMode::Fixed(a) => sb.coeffs.iter().map(|c| vec![a; c.len()]).collect(),
    };
    let mu = cfg.shrink.mu;
    let mut coeffs = Vec::with_capacity(sb.num_subbands());
    for (k, band) in sb.coeffs.iter().enumerate() {
        let t = Thresholds::new(spec.lambda1[k], spec.lambda2[k])?;
        coeffs.push(
            band.iter()
                .zip(&alpha[k])
                .map(|(&y, &a)| t.shrink(y, a, mu))
                .collect(),
        );
    }
    Ok(synthesize(&sb.with_coeffs(coeffs), filters)?)
}

/// Stateful enhancer for one stream.
#[derive(Debug, Clone)]
pub struct Enhancer {
    cfg: EnhanceConfig,
    filters: WaveletFilters,
    state: StreamState,
}

impl Enhancer {
    pub fn new(cfg: EnhanceConfig) -> Result<Self, EnhanceError> {
        cfg.validate()?;
        let state = StreamState::new(&cfg);
        Ok(Self {
            cfg,
            filters: WaveletFilters::db10(),
            state,
        })
    }

    /// Fixes the noise estimate to the subband powers of a noise-only recording.
    pub fn with_noise_oracle(mut self, noise: &AudioBuffer) -> Result<Self, EnhanceError> {
        let stack = split_frames(&noise.samples, self.cfg.frame_len)?;
        let frames = stack
            .frames
            .iter()
            .map(|f| analyze(f, &self.cfg.tree, &self.filters))
            .collect::<Result<Vec<SubbandSet>, _>>()?;
        self.state.noise.set_oracle(&frames)?;
        Ok(self)
    }

    pub fn config(&self) -> &EnhanceConfig {
        &self.cfg
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    pub fn enhance_frame(&mut self, frame: &[f64]) -> Result<Vec<f64>, EnhanceError> {
        enhance_frame(frame, &mut self.state, &self.cfg, &self.filters)
    }

    /// Enhances a whole buffer; the output has the input's length and rate.
    pub fn process(&mut self, noisy: &AudioBuffer) -> Result<AudioBuffer, EnhanceError> {
        if noisy.sample_rate_hz != NOMINAL_RATE_HZ {
            log::warn!(
                "sample rate {} Hz differs from {} Hz; subband edges scale accordingly",
                noisy.sample_rate_hz,
                NOMINAL_RATE_HZ
            );
        }
        let stack = split_frames(&noisy.samples, self.cfg.frame_len)?;
        let frames = stack
            .frames
            .iter()
            .map(|f| self.enhance_frame(f))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = overlap_add(&stack.with_frames(frames))?;
        out.truncate(noisy.len());
        Ok(AudioBuffer::new(out, noisy.sample_rate_hz))
    }
}

/// One-shot enhancement with a fresh state.
pub fn enhance_stream(noisy: &AudioBuffer, cfg: &EnhanceConfig) -> Result<AudioBuffer, EnhanceError> {
    Enhancer::new(cfg.clone())?.process(noisy)
}

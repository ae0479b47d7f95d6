//! Per-subband noise power tracking.
//!
//! A single-stage minima-controlled recursive average: each frame's subband
//! power is smoothed over time, the smoothed values of the last few frames are
//! kept, and the noise estimate is their minimum times a bias factor. The
//! first frames are assumed to be noise only. Powers are tracked both for the
//! Teager energies (negative values floored at zero) and for the raw wavelet
//! packet coefficients.
//!
//! An oracle mode pins the estimates to the measured power of a known noise
//! signal and ignores further updates.

use std::collections::VecDeque;

use thiserror::Error;

use crate::pwpt::SubbandSet;
use crate::teager::TeCoeffs;

/// Lower bound for every power estimate.
pub const POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("no noise frames supplied")]
    Empty,
    #[error("expected {expected} subbands, got {got}")]
    SubbandCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTrackerConfig {
    /// Recursive smoothing factor for frame powers.
    pub smoothing: f64,
    /// Number of smoothed frames searched for the minimum.
    pub minima_window: usize,
    /// Bias compensation applied to the minimum.
    pub bias: f64,
    /// Frames during which the estimate follows the smoothed power directly.
    pub bootstrap_frames: usize,
}

impl Default for NoiseTrackerConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.85,
            minima_window: 8,
            bias: 1.5,
            bootstrap_frames: 3,
        }
    }
}

/// Minima tracking for one power domain.
#[derive(Debug, Clone, PartialEq)]
struct MinimaTracker {
    estimate: Vec<f64>,
    smoothed: Vec<f64>,
    history: Vec<VecDeque<f64>>,
}

impl MinimaTracker {
    fn new(n: usize, capacity: usize) -> Self {
        Self {
            estimate: vec![POWER_FLOOR; n],
            smoothed: vec![0.0; n],
            history: vec![VecDeque::with_capacity(capacity); n],
        }
    }

    fn update(&mut self, powers: &[f64], frame_count: usize, cfg: &NoiseTrackerConfig) {
        let a = cfg.smoothing;
        for (k, &p) in powers.iter().enumerate() {
            let s = if frame_count == 0 {
                p
            } else {
                a * self.smoothed[k] + (1.0 - a) * p
            };
            self.smoothed[k] = s;
            let hist = &mut self.history[k];
            if hist.len() == cfg.minima_window.max(1) {
                hist.pop_front();
            }
            hist.push_back(s);
            let est = if frame_count < cfg.bootstrap_frames {
                s
            } else {
                cfg.bias * hist.iter().copied().fold(f64::INFINITY, f64::min)
            };
            self.estimate[k] = floor_power(est);
        }
    }
}

fn floor_power(p: f64) -> f64 {
    if p.is_finite() {
        p.max(POWER_FLOOR)
    } else {
        POWER_FLOOR
    }
}

/// Noise power per subband of Teager energies: mean of `max(t, 0)`.
pub fn te_power(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|t| t.max(0.0)).sum::<f64>() / values.len() as f64
}

/// Mean square of coefficients.
pub fn coeff_power(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|w| w * w).sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseState {
    config: NoiseTrackerConfig,
    te: MinimaTracker,
    pwp: MinimaTracker,
    frame_count: usize,
    oracle: bool,
}

impl NoiseState {
    pub fn new(num_subbands: usize, config: NoiseTrackerConfig) -> Self {
        Self {
            te: MinimaTracker::new(num_subbands, config.minima_window),
            pwp: MinimaTracker::new(num_subbands, config.minima_window),
            config,
            frame_count: 0,
            oracle: false,
        }
    }

    /// Noise power of the Teager energies, per subband.
    pub fn sigma_n2(&self) -> &[f64] {
        &self.te.estimate
    }

    /// Noise power of the wavelet packet coefficients, per subband.
    pub fn sigma_n2_pwp(&self) -> &[f64] {
        &self.pwp.estimate
    }

    pub fn smoothed_power(&self) -> &[f64] {
        &self.te.smoothed
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn is_oracle(&self) -> bool {
        self.oracle
    }

    pub fn num_subbands(&self) -> usize {
        self.te.estimate.len()
    }

    /// Advances the tracker by one frame. No-op in oracle mode.
    pub fn update(&mut self, te: &TeCoeffs, sb: &SubbandSet) -> Result<(), NoiseError> {
        if self.oracle {
            return Ok(());
        }
        let n = self.num_subbands();
        for got in [te.values.len(), sb.coeffs.len()] {
            if got != n {
                return Err(NoiseError::SubbandCount { expected: n, got });
            }
        }
        let te_p: Vec<f64> = te.values.iter().map(|t| te_power(t)).collect();
        let pwp_p: Vec<f64> = sb.coeffs.iter().map(|w| coeff_power(w)).collect();
        self.te.update(&te_p, self.frame_count, &self.config);
        self.pwp.update(&pwp_p, self.frame_count, &self.config);
        self.frame_count += 1;
        Ok(())
    }

    /// Pins the estimates to the empirical powers of known noise frames and
    /// disables tracking.
    pub fn set_oracle(&mut self, noise_frames: &[SubbandSet]) -> Result<(), NoiseError> {
        if noise_frames.is_empty() {
            return Err(NoiseError::Empty);
        }
        let n = self.num_subbands();
        let mut te_sum = vec![0.0; n];
        let mut pwp_sum = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for sb in noise_frames {
            if sb.coeffs.len() != n {
                return Err(NoiseError::SubbandCount {
                    expected: n,
                    got: sb.coeffs.len(),
                });
            }
            let te = crate::teager::te_operator(sb);
            for k in 0..n {
                te_sum[k] += te.values[k].iter().map(|t| t.max(0.0)).sum::<f64>();
                pwp_sum[k] += sb.coeffs[k].iter().map(|w| w * w).sum::<f64>();
                counts[k] += sb.coeffs[k].len();
            }
        }
        for k in 0..n {
            let c = counts[k].max(1) as f64;
            self.te.estimate[k] = floor_power(te_sum[k] / c);
            self.pwp.estimate[k] = floor_power(pwp_sum[k] / c);
        }
        self.oracle = true;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwpt::{analyze, PerceptualTree, WaveletFilters};
    use crate::teager::te_operator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::sync::Arc;

    fn noise_frames(n: usize, std: f64, seed: u64) -> Vec<SubbandSet> {
        let tree = Arc::new(PerceptualTree::perceptual_24());
        let f = WaveletFilters::db10();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).unwrap();
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..640).map(|_| normal.sample(&mut rng)).collect();
                analyze(&x, &tree, &f).unwrap()
            })
            .collect()
    }

    fn run(state: &mut NoiseState, frames: &[SubbandSet]) {
        for sb in frames {
            state.update(&te_operator(sb), sb).unwrap();
        }
    }

    #[test]
    fn white_noise_estimate_is_close_to_truth() {
        let frames = noise_frames(60, 1.0, 1);
        let mut truth = NoiseState::new(24, NoiseTrackerConfig::default());
        truth.set_oracle(&frames).unwrap();
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        // per-frame estimates fluctuate; compare the time average once the
        // minima window is full
        let mut sum = [0.0; 24];
        for (i, sb) in frames.iter().enumerate() {
            state.update(&te_operator(sb), sb).unwrap();
            if i >= 8 {
                for (acc, v) in sum.iter_mut().zip(state.sigma_n2()) {
                    *acc += v;
                }
            }
        }
        for (k, (acc, t)) in sum.iter().zip(truth.sigma_n2()).enumerate() {
            let ratio = acc / (frames.len() - 8) as f64 / t;
            assert!((0.5..=1.5).contains(&ratio), "subband {k}: ratio {ratio}");
        }
    }

    #[test]
    fn zero_input_stays_at_floor() {
        let tree = Arc::new(PerceptualTree::perceptual_24());
        let zero = SubbandSet::zeros(tree, 640);
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        run(&mut state, &vec![zero; 12]);
        assert!(state.sigma_n2().iter().all(|&p| p == POWER_FLOOR));
        assert!(state.sigma_n2_pwp().iter().all(|&p| p == POWER_FLOOR));
    }

    #[test]
    fn doubling_amplitude_quadruples_power() {
        let base = noise_frames(20, 0.5, 2);
        let doubled: Vec<SubbandSet> = base
            .iter()
            .map(|sb| sb.with_coeffs(sb.coeffs.iter().map(|b| b.iter().map(|c| 2.0 * c).collect()).collect()))
            .collect();
        let mut a = NoiseState::new(24, NoiseTrackerConfig::default());
        let mut b = NoiseState::new(24, NoiseTrackerConfig::default());
        run(&mut a, &base);
        run(&mut b, &doubled);
        for k in 0..24 {
            let r = b.sigma_n2_pwp()[k] / a.sigma_n2_pwp()[k];
            assert!((r - 4.0).abs() <= 0.4, "subband {k}: {r}");
        }
    }

    #[test]
    fn step_down_is_tracked_monotonically() {
        let loud = noise_frames(12, 1.0, 3);
        let quiet = noise_frames(16, 0.2, 4);
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        run(&mut state, &loud);
        let before = state.sigma_n2().to_vec();
        // once the minima window only holds post-step values the estimate follows
        // the decaying smoothed power
        run(&mut state, &quiet[..8]);
        let mut prev = state.sigma_n2().to_vec();
        for k in 0..24 {
            assert!(prev[k] < before[k]);
        }
        for sb in &quiet[8..] {
            state.update(&te_operator(sb), sb).unwrap();
            for (k, (now, before)) in state.sigma_n2().iter().zip(&prev).enumerate() {
                assert!(now <= before, "frame {} k {k}", state.frame_count());
            }
            prev = state.sigma_n2().to_vec();
        }
    }

    #[test]
    fn oracle_unit_white_noise() {
        let frames = noise_frames(40, 1.0, 5);
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        state.set_oracle(&frames).unwrap();
        for &p in state.sigma_n2_pwp() {
            assert!((p - 1.0).abs() < 0.2, "{p}");
        }
        let before = state.clone();
        run(&mut state, &noise_frames(3, 5.0, 6));
        assert_eq!(state, before);
    }

    #[test]
    fn oracle_zero_noise_and_empty() {
        let tree = Arc::new(PerceptualTree::perceptual_24());
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        state.set_oracle(&[SubbandSet::zeros(tree, 640)]).unwrap();
        assert!(state.sigma_n2().iter().all(|&p| p == POWER_FLOOR));
        assert_eq!(
            NoiseState::new(24, NoiseTrackerConfig::default()).set_oracle(&[]),
            Err(NoiseError::Empty)
        );
    }

    #[test]
    fn shape_mismatch() {
        let frames = noise_frames(1, 1.0, 7);
        let mut state = NoiseState::new(10, NoiseTrackerConfig::default());
        let te = te_operator(&frames[0]);
        assert!(state.update(&te, &frames[0]).is_err());
    }
}

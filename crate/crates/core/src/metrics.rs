//! Objective quality measures: segmental SNR and weighted spectral slope.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio_io::AudioBuffer;

/// Metric frame length in samples.
pub const METRIC_FRAME: usize = 256;
/// Per-frame segmental SNR is clamped to this range (dB).
pub const SNRSEG_MIN_DB: f64 = -10.0;
pub const SNRSEG_MAX_DB: f64 = 35.0;

const WSS_NFFT: usize = 512;
const WSS_KMAX: f64 = 20.0;
const WSS_KLOCMAX: f64 = 1.0;

const CENTER_HZ: [f64; 25] = [
    50.0, 120.0, 190.0, 260.0, 330.0, 400.0, 470.0, 540.0, 617.372, 703.378, 798.717, 904.128, 1020.38,
    1148.30, 1288.72, 1442.54, 1610.70, 1794.16, 1993.93, 2211.08, 2446.71, 2701.97, 2978.04, 3276.17,
    3597.63,
];
const BANDWIDTH_HZ: [f64; 25] = [
    70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 77.3724, 86.0056, 95.3398, 105.411, 116.256, 127.914, 140.423,
    153.823, 168.154, 183.457, 199.776, 217.153, 235.631, 255.255, 276.072, 298.126, 321.465, 346.136,
];

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("buffers differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("buffers differ in sample rate ({0} vs {1} Hz)")]
    RateMismatch(u32, u32),
    #[error("reference signal is silent")]
    SilentReference,
    #[error("buffers are empty")]
    Empty,
}

/// Scores of one processed file against its clean reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub snrseg_db: f64,
    pub snrseg_improvement_db: f64,
    pub wss: f64,
}

impl MetricReport {
    pub fn compute(clean: &AudioBuffer, noisy: &AudioBuffer, enhanced: &AudioBuffer) -> Result<Self, MetricError> {
        let snrseg_db = snrseg(clean, enhanced)?;
        Ok(Self {
            snrseg_db,
            snrseg_improvement_db: snrseg_db - snrseg(clean, noisy)?,
            wss: wss(clean, enhanced)?,
        })
    }
}

fn check_pair(a: &AudioBuffer, b: &AudioBuffer) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(MetricError::RateMismatch(a.sample_rate_hz, b.sample_rate_hz));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Start offsets of half-overlapping frames; a short signal is one frame.
fn frame_starts(len: usize, frame: usize) -> Vec<usize> {
    if len <= frame {
        return vec![0];
    }
    (0..=(len - frame) / (frame / 2)).map(|i| i * frame / 2).collect()
}

/// Segmental SNR in dB with per-frame clamping to `[-10, 35]`.
pub fn snrseg(clean: &AudioBuffer, test: &AudioBuffer) -> Result<f64, MetricError> {
    check_pair(clean, test)?;
    snrseg_samples(&clean.samples, &test.samples)
}

fn snrseg_samples(clean: &[f64], test: &[f64]) -> Result<f64, MetricError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for start in frame_starts(clean.len(), METRIC_FRAME) {
        let end = (start + METRIC_FRAME).min(clean.len());
        let (s, t) = (&clean[start..end], &test[start..end]);
        let signal: f64 = s.iter().map(|v| v * v).sum();
        if signal == 0.0 {
            continue;
        }
        let error: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let db = if error == 0.0 {
            SNRSEG_MAX_DB
        } else {
            10.0 * (signal / error).log10()
        };
        total += db.clamp(SNRSEG_MIN_DB, SNRSEG_MAX_DB);
        count += 1;
    }
    if count == 0 {
        return Err(MetricError::SilentReference);
    }
    Ok(total / count as f64)
}

/// `snrseg(clean, enhanced) - snrseg(clean, noisy)`.
pub fn snrseg_improvement(clean: &AudioBuffer, noisy: &AudioBuffer, enhanced: &AudioBuffer) -> Result<f64, MetricError> {
    Ok(snrseg(clean, enhanced)? - snrseg(clean, noisy)?)
}

/// Gaussian-shaped critical-band filters over the first half of the FFT grid.
fn critical_filters(sample_rate_hz: f64) -> Vec<Vec<f64>> {
    let half = WSS_NFFT / 2;
    let max_freq = sample_rate_hz / 2.0;
    let min_factor = (-30.0 / (2.0 * 2.303f64)).exp();
    let bw_min = BANDWIDTH_HZ[0];
    CENTER_HZ
        .iter()
        .zip(BANDWIDTH_HZ)
        .map(|(&fc, bw_hz)| {
            let f0 = (fc / max_freq * half as f64).floor();
            let bw = bw_hz / max_freq * half as f64;
            let norm = bw_min.ln() - bw_hz.ln();
            (0..half)
                .map(|j| {
                    let v = (-11.0 * (j as f64 - f0).powi(2) / (bw * bw) + norm).exp();
                    if v > min_factor {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

struct BandAnalyzer {
    filters: Vec<Vec<f64>>,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl BandAnalyzer {
    fn new(sample_rate_hz: f64) -> Self {
        let n = METRIC_FRAME as f64;
        Self {
            filters: critical_filters(sample_rate_hz),
            window: (1..=METRIC_FRAME)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n + 1.0)).cos()))
                .collect(),
            fft: FftPlanner::new().plan_fft_forward(WSS_NFFT),
        }
    }

    /// Critical-band log energies (dB) of one frame.
    fn band_db(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); WSS_NFFT];
        for (i, (x, w)) in frame.iter().zip(&self.window).enumerate() {
            buf[i].re = x * w;
        }
        self.fft.process(&mut buf);
        let spec: Vec<f64> = buf[..WSS_NFFT / 2].iter().map(|c| c.norm_sqr()).collect();
        self.filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(&spec).map(|(a, b)| a * b).sum();
                10.0 * e.max(1e-10).log10()
            })
            .collect()
    }
}

/// Band weights from distance to the global maximum and to the nearest local peak.
fn slope_weights(energy: &[f64], slope: &[f64]) -> Vec<f64> {
    let n = slope.len();
    let db_max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..n)
        .map(|i| {
            let peak = if slope[i] > 0.0 {
                let mut j = i;
                while j < n && slope[j] > 0.0 {
                    j += 1;
                }
                energy[j]
            } else {
                let mut j = i as isize;
                while j >= 0 && slope[j as usize] <= 0.0 {
                    j -= 1;
                }
                energy[(j + 1) as usize]
            };
            let w_max = WSS_KMAX / (WSS_KMAX + db_max - energy[i]);
            let w_loc = WSS_KLOCMAX / (WSS_KLOCMAX + peak - energy[i]);
            w_max * w_loc
        })
        .collect()
}

/// Weighted spectral slope distance, averaged over frames; 0 for identical signals.
pub fn wss(clean: &AudioBuffer, test: &AudioBuffer) -> Result<f64, MetricError> {
    check_pair(clean, test)?;
    let analyzer = BandAnalyzer::new(clean.sample_rate_hz as f64);
    let starts = frame_starts(clean.len(), METRIC_FRAME);
    let mut total = 0.0;
    for &start in &starts {
        let end = (start + METRIC_FRAME).min(clean.len());
        let ec = analyzer.band_db(&clean.samples[start..end]);
        let et = analyzer.band_db(&test.samples[start..end]);
        let sc: Vec<f64> = ec.windows(2).map(|w| w[1] - w[0]).collect();
        let st: Vec<f64> = et.windows(2).map(|w| w[1] - w[0]).collect();
        let wc = slope_weights(&ec, &sc);
        let wt = slope_weights(&et, &st);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..sc.len() {
            let w = 0.5 * (wc[i] + wt[i]);
            num += w * (sc[i] - st[i]).powi(2);
            den += w;
        }
        total += num / den;
    }
    Ok(total / starts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::mix_at_snr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn buf(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(v, 8000)
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn speechlike(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / 8000.0;
                let env = 0.6 + 0.4 * (2.0 * PI * 3.0 * t).sin();
                env * ((2.0 * PI * 220.0 * t).sin() + 0.5 * (2.0 * PI * 660.0 * t).sin() + 0.3 * (2.0 * PI * 1400.0 * t).sin())
            })
            .collect()
    }

    #[test]
    fn identical_signals_hit_ceiling() {
        let c = buf(speechlike(4000));
        assert_eq!(snrseg(&c, &c).unwrap(), 35.0);
        assert_eq!(wss(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn equal_power_frames_give_zero_db() {
        // every frame's error equals half its samples at twice the amplitude
        let c = buf(vec![1.0; 2560]);
        let t: Vec<f64> = (0..2560).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        assert!(snrseg(&c, &buf(t)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn clamp_floor() {
        let c = buf(vec![1e-2; 512]);
        let t = buf(vec![1.0; 512]);
        assert_eq!(snrseg(&c, &t).unwrap(), -10.0);
    }

    #[test]
    fn improvement_conventions() {
        let c = buf(speechlike(4000));
        let n = mix_at_snr(&c, &buf(noise(4000, 2)), 0.0).unwrap();
        assert_eq!(snrseg_improvement(&c, &n, &n).unwrap(), 0.0);
        let max = snrseg_improvement(&c, &n, &c).unwrap();
        assert!((max - (35.0 - snrseg(&c, &n).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let c = speechlike(3000);
        let t: Vec<f64> = c.iter().zip(noise(3000, 3)).map(|(a, b)| a + 0.3 * b).collect();
        let base = snrseg(&buf(c.clone()), &buf(t.clone())).unwrap();
        let k = -7.5;
        let scaled = snrseg(&buf(c.iter().map(|v| v * k).collect()), &buf(t.iter().map(|v| v * k).collect())).unwrap();
        assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let c = buf(vec![0.0; 600]);
        assert_eq!(snrseg(&c, &c), Err(MetricError::SilentReference));
        assert_eq!(snrseg(&buf(vec![1.0; 10]), &buf(vec![1.0; 11])), Err(MetricError::LengthMismatch(10, 11)));
        assert_eq!(wss(&buf(vec![1.0; 10]), &buf(vec![1.0; 11])), Err(MetricError::LengthMismatch(10, 11)));
        assert_eq!(
            snrseg(&buf(vec![1.0; 10]), &AudioBuffer::new(vec![1.0; 10], 16000)),
            Err(MetricError::RateMismatch(8000, 16000))
        );
    }

    #[test]
    fn wss_grows_as_snr_drops() {
        let c = buf(speechlike(8000));
        let n = buf(noise(8000, 4));
        let hi = wss(&c, &mix_at_snr(&c, &n, 10.0).unwrap()).unwrap();
        let lo = wss(&c, &mix_at_snr(&c, &n, 0.0).unwrap()).unwrap();
        assert!(hi >= 0.0);
        assert!(lo > hi, "wss 0 dB {lo} vs 10 dB {hi}");
    }

    #[test]
    fn filters_peak_at_band_centres() {
        let f = critical_filters(8000.0);
        assert_eq!(f.len(), 25);
        for (i, band) in f.iter().enumerate() {
            let f0 = (CENTER_HZ[i] / 4000.0 * 256.0).floor() as usize;
            let argmax = band.iter().enumerate().fold(0, |a, (j, v)| if *v > band[a] { j } else { a });
            assert_eq!(argmax, f0);
        }
        assert!((f[0][(50.0f64 / 4000.0 * 256.0).floor() as usize] - 1.0).abs() < 1e-12);
    }
}

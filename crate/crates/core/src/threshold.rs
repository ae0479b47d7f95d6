//! Subband-adaptive thresholds.
//!
//! The Erlang-2 threshold is the point below which the symmetric K-L
//! divergence between the Erlang-2 models of noisy-speech and noise energies
//! vanishes:
//!
//! ```text
//! lambda = sqrt(sigma_n2) * gamma * ln(gamma) / (sqrt(gamma) - 1)
//! ```
//!
//! with `gamma` the a-posteriori SNR of the subband. Equating the two
//! Erlang-2 densities directly gives a variant scaled by `1 / sqrt(2 gamma)`,
//! which falls relative to the noisy-coefficient spread as the SNR rises;
//! [`ThresholdForm`] selects between them. Gaussian and Student-t
//! counterparts are provided for comparison curves only.

use thiserror::Error;

use crate::noise_tracker::{coeff_power, te_power, NoiseState, POWER_FLOOR};
use crate::pwpt::SubbandSet;
use crate::teager::TeCoeffs;

/// Lower bound on the a-posteriori SNR.
pub const GAMMA_FLOOR: f64 = 1e-6;
/// Upper bound on the a-posteriori SNR.
pub const GAMMA_CAP: f64 = 1e6;
/// Default Student-t shape constant for comparison curves.
pub const DEFAULT_CHI2: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("{name} must be finite and positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("noise state has {noise} subbands but the frame has {frame}")]
    SubbandCount { noise: usize, frame: usize },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ThresholdError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ThresholdError::NonPositive { name, value })
    }
}

/// Erlang-2 threshold. Continuous through the removable singularity at `gamma = 1`,
/// where it equals `2 * sqrt(sigma_n2)`.
pub fn lambda_erlang(sigma_n2: f64, gamma: f64) -> Result<f64, ThresholdError> {
    let sigma_n2 = positive("sigma_n2", sigma_n2)?;
    let gamma = positive("gamma", gamma)?;
    Ok(erlang_unchecked(sigma_n2, gamma))
}

fn erlang_unchecked(sigma_n2: f64, gamma: f64) -> f64 {
    // with u = sqrt(gamma): gamma ln(gamma) / (u - 1) = 2 u^2 ln(1 + d) / d, d = u - 1
    let u = gamma.sqrt();
    let d = u - 1.0;
    let ratio = if d == 0.0 { 1.0 } else { d.ln_1p() / d };
    sigma_n2.sqrt() * 2.0 * gamma * ratio
}

/// Crossing point of the two Erlang-2 densities:
/// `sqrt(sigma_n2) * sqrt(gamma) * ln(gamma) / (sqrt(2) * (sqrt(gamma) - 1))`,
/// equal to `sqrt(2 * sigma_n2)` at `gamma = 1`.
pub fn lambda_erlang_crossing(sigma_n2: f64, gamma: f64) -> Result<f64, ThresholdError> {
    let sigma_n2 = positive("sigma_n2", sigma_n2)?;
    let gamma = positive("gamma", gamma)?;
    Ok(crossing_unchecked(sigma_n2, gamma))
}

fn crossing_unchecked(sigma_n2: f64, gamma: f64) -> f64 {
    let u = gamma.sqrt();
    let d = u - 1.0;
    let ratio = if d == 0.0 { 1.0 } else { d.ln_1p() / d };
    sigma_n2.sqrt() * std::f64::consts::SQRT_2 * u * ratio
}

/// Threshold under a Gaussian model.
pub fn lambda_gaussian(sigma_n2: f64, gamma: f64) -> Result<f64, ThresholdError> {
    let sigma_n2 = positive("sigma_n2", sigma_n2)?;
    let gamma = positive("gamma", gamma)?;
    Ok(sigma_n2.sqrt() * (2.0 * (gamma + gamma * gamma)).sqrt() * (1.0 + 1.0 / gamma).sqrt().ln())
}

/// Threshold under a Student-t model, evaluated as printed in its source.
pub fn lambda_student(sigma_n2: f64, gamma: f64, chi2: f64) -> Result<f64, ThresholdError> {
    let sigma_n2 = positive("sigma_n2", sigma_n2)?;
    let gamma = positive("gamma", gamma)?;
    let chi2 = positive("chi2", chi2)?;
    let denom = ((1.0 + gamma).sqrt() + 2.0 + gamma) * (chi2 * chi2).sqrt();
    Ok((sigma_n2 * (1.0 + gamma) / denom).sqrt())
}

/// Which power domain feeds the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceDomain {
    /// Wavelet packet coefficient powers.
    #[default]
    Pwp,
    /// Teager energy powers.
    Te,
}

/// Which Erlang-2 threshold expression sets `lambda1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdForm {
    /// [`lambda_erlang`].
    #[default]
    Printed,
    /// [`lambda_erlang_crossing`].
    Crossing,
}

/// Per-subband thresholds for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSpec {
    pub lambda1: Vec<f64>,
    /// Always `2 * lambda1`.
    pub lambda2: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ThresholdSpec {
    pub fn from_lambda1(lambda1: Vec<f64>, gamma: Vec<f64>) -> Self {
        let lambda2 = lambda1.iter().map(|l| 2.0 * l).collect();
        Self {
            lambda1,
            lambda2,
            gamma,
        }
    }
}

/// A-posteriori SNR clamped to `[GAMMA_FLOOR, GAMMA_CAP]`.
pub fn clamp_gamma(gamma: f64) -> f64 {
    if gamma.is_nan() {
        GAMMA_FLOOR
    } else {
        gamma.clamp(GAMMA_FLOOR, GAMMA_CAP)
    }
}

/// Thresholds for every subband of a frame.
///
/// A subband whose noise estimate sits at the power floor gets a zero
/// threshold, so its coefficients pass through unchanged.
pub fn compute_spec(
    noise: &NoiseState,
    sb: &SubbandSet,
    te: &TeCoeffs,
    domain: VarianceDomain,
    form: ThresholdForm,
) -> Result<ThresholdSpec, ThresholdError> {
    if noise.num_subbands() != sb.num_subbands() || te.num_subbands() != sb.num_subbands() {
        return Err(ThresholdError::SubbandCount {
            noise: noise.num_subbands(),
            frame: sb.num_subbands(),
        });
    }
    let n = sb.num_subbands();
    let mut lambda1 = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    for k in 0..n {
        let (sigma_n2, observed) = match domain {
            VarianceDomain::Pwp => (noise.sigma_n2_pwp()[k], coeff_power(&sb.coeffs[k])),
            VarianceDomain::Te => (noise.sigma_n2()[k], te_power(&te.values[k])),
        };
        let g = clamp_gamma(observed / sigma_n2);
        gamma.push(g);
        lambda1.push(if sigma_n2 <= POWER_FLOOR {
            0.0
        } else {
            match form {
                ThresholdForm::Printed => erlang_unchecked(sigma_n2, g),
                ThresholdForm::Crossing => crossing_unchecked(sigma_n2, g),
            }
        });
    }
    Ok(ThresholdSpec::from_lambda1(lambda1, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_tracker::NoiseTrackerConfig;
    use crate::pwpt::{analyze, PerceptualTree, WaveletFilters};
    use crate::teager::te_operator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::sync::Arc;

    #[test]
    fn erlang_examples() {
        assert!((lambda_erlang(1.0, 4.0).unwrap() - 5.54518).abs() < 1e-5);
        assert!((lambda_erlang(1.0, 4.0).unwrap() - 8.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(lambda_erlang(1.0, 1.0).unwrap(), 2.0);
        assert!((lambda_erlang(4.0, 4.0).unwrap() - 11.09035).abs() < 1e-5);
    }

    #[test]
    fn erlang_is_continuous_at_one() {
        for s2 in [0.01, 1.0, 9.0] {
            let limit = 2.0 * f64::sqrt(s2);
            for g in [1.0 - 1e-6, 1.0 + 1e-6, 1.0 - 1e-12, 1.0 + 1e-12] {
                assert!((lambda_erlang(s2, g).unwrap() - limit).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn crossing_equates_the_two_densities() {
        use crate::stats::PdfModel;
        for s2 in [0.04, 1.0, 7.0] {
            for g in [0.03, 0.5, 2.0, 4.0, 30.0, 1000.0] {
                let t = lambda_erlang_crossing(s2, g).unwrap();
                let noisy = PdfModel::Erlang2 { variance: g * s2 }.ln_pdf(t).unwrap();
                let noise = PdfModel::Erlang2 { variance: s2 }.ln_pdf(t).unwrap();
                assert!((noisy - noise).abs() < 1e-9, "s2 {s2} g {g}: {noisy} vs {noise}");
            }
            let limit = (2.0 * s2).sqrt();
            assert!((lambda_erlang_crossing(s2, 1.0).unwrap() - limit).abs() < 1e-15);
            assert!((lambda_erlang_crossing(s2, 1.0 + 1e-9).unwrap() - limit).abs() < 1e-6);
        }
    }

    #[test]
    fn crossing_falls_relative_to_noisy_spread() {
        let rel = |g: f64| lambda_erlang_crossing(1.0, g).unwrap() / g.sqrt();
        let mut prev = rel(0.01);
        for e in -19..=30 {
            let cur = rel(10f64.powf(e as f64 / 10.0));
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn erlang_is_non_negative() {
        for e in -30..=30 {
            let g = 10f64.powf(e as f64 / 5.0);
            assert!(lambda_erlang(1.0, g).unwrap() >= 0.0);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn gaussian_examples() {
        assert!((lambda_gaussian(1.0, 1.0).unwrap() - 0.69315).abs() < 1e-5);
        let a = lambda_gaussian(1.0, 3.0).unwrap();
        let b = lambda_gaussian(4.0, 3.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn student_examples() {
        let exact = (2.0 / ((2f64.sqrt() + 3.0) * 0.5)).sqrt();
        assert!((lambda_student(1.0, 1.0, 0.5).unwrap() - exact).abs() < 1e-15);
        assert!((exact - 0.95193).abs() < 1e-5);
        let a = lambda_student(1.0, 2.0, 0.5).unwrap();
        let b = lambda_student(4.0, 2.0, 0.5).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        for e in -30..=30 {
            let v = lambda_student(1.0, 10f64.powf(e as f64 / 10.0), 0.5).unwrap();
            assert!(v.is_finite() && v > 0.0);
        }
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(lambda_erlang(0.0, 1.0).is_err());
        assert!(lambda_erlang(1.0, -2.0).is_err());
        assert!(lambda_gaussian(1.0, 0.0).is_err());
        assert!(lambda_student(1.0, 1.0, 0.0).is_err());
        assert!(lambda_student(f64::NAN, 1.0, 0.5).is_err());
    }

    fn noise_frame(std: f64, rng: &mut ChaCha8Rng) -> SubbandSet {
        let tree = Arc::new(PerceptualTree::perceptual_24());
        let normal = Normal::new(0.0, std).unwrap();
        let x: Vec<f64> = (0..640).map(|_| normal.sample(rng)).collect();
        analyze(&x, &tree, &WaveletFilters::db10()).unwrap()
    }

    #[test]
    fn silence_frame_gets_about_two_noise_deviations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise: Vec<SubbandSet> = (0..50).map(|_| noise_frame(1.0, &mut rng)).collect();
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        state.set_oracle(&noise).unwrap();
        let frame = noise_frame(1.0, &mut rng);
        let spec = compute_spec(&state, &frame, &te_operator(&frame), VarianceDomain::Pwp, ThresholdForm::Printed).unwrap();
        // the wide subbands have enough coefficients for gamma to settle near 1
        for k in 16..24 {
            assert!((spec.gamma[k] - 1.0).abs() < 0.4, "gamma {}", spec.gamma[k]);
            let two_sigma = 2.0 * state.sigma_n2_pwp()[k].sqrt();
            assert!((spec.lambda1[k] / two_sigma - 1.0).abs() < 0.35);
        }
        for k in 0..24 {
            assert_eq!(spec.lambda2[k], 2.0 * spec.lambda1[k]);
        }
    }

    #[test]
    fn floored_noise_gives_zero_threshold() {
        let tree = Arc::new(PerceptualTree::perceptual_24());
        let mut state = NoiseState::new(24, NoiseTrackerConfig::default());
        state.set_oracle(&[SubbandSet::zeros(tree, 640)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = noise_frame(1.0, &mut rng);
        let spec = compute_spec(&state, &frame, &te_operator(&frame), VarianceDomain::Pwp, ThresholdForm::Printed).unwrap();
        assert!(spec.lambda1.iter().all(|&l| l == 0.0));
        assert!(spec.gamma.iter().all(|&g| g == GAMMA_CAP));
    }

    #[test]
    fn doubling_amplitude_doubles_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<SubbandSet> = (0..10).map(|_| noise_frame(0.3, &mut rng)).collect();
        let frame = noise_frame(0.5, &mut rng);
        let scale = |sb: &SubbandSet| sb.with_coeffs(sb.coeffs.iter().map(|b| b.iter().map(|c| 2.0 * c).collect()).collect());
        let mut a = NoiseState::new(24, NoiseTrackerConfig::default());
        a.set_oracle(&noise).unwrap();
        let mut b = NoiseState::new(24, NoiseTrackerConfig::default());
        b.set_oracle(&noise.iter().map(scale).collect::<Vec<_>>()).unwrap();
        let frame2 = scale(&frame);
        for domain in [VarianceDomain::Pwp, VarianceDomain::Te] {
            let sa = compute_spec(&a, &frame, &te_operator(&frame), domain, ThresholdForm::Printed).unwrap();
            let sb = compute_spec(&b, &frame2, &te_operator(&frame2), domain, ThresholdForm::Printed).unwrap();
            for k in 0..24 {
                assert!((sb.lambda1[k] - 2.0 * sa.lambda1[k]).abs() <= 1e-9 * sb.lambda1[k]);
            }
        }
    }
}

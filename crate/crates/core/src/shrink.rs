//! Custom shrinkage blending the mu-law and semisoft rules.
//!
//! Below `lambda1` the coefficient is companded by the mu-law curve and scaled
//! by the shape parameter `alpha`; at or above `lambda2` it passes unchanged;
//! in between the output interpolates between the semisoft ramp and identity.
//! `alpha = 0` gives semisoft thresholding, `alpha = 1` gives mu-law.

use thiserror::Error;

/// Default mu-law constant.
pub const DEFAULT_MU: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum ShrinkError {
    #[error("thresholds must satisfy 0 <= lambda1 < lambda2 (or both zero), got {0} and {1}")]
    BadThresholds(f64, f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("mu must be positive, got {0}")]
    BadMu(f64),
}

/// How the shape parameter is chosen per coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AlphaMode {
    /// From speech presence and absence probabilities.
    #[default]
    Dynamic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkConfig {
    pub mu: f64,
    pub alpha_mode: AlphaMode,
}

impl Default for ShrinkConfig {
    fn default() -> Self {
        Self {
            mu: DEFAULT_MU,
            alpha_mode: AlphaMode::Dynamic,
        }
    }
}

/// Validated threshold pair; the zero pair means "pass everything through".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    lambda1: f64,
    lambda2: f64,
}

impl Thresholds {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, ShrinkError> {
        let passthrough = lambda1 == 0.0 && lambda2 == 0.0;
        if !passthrough && !(lambda1 > 0.0 && lambda2 > lambda1 && lambda2.is_finite()) {
            return Err(ShrinkError::BadThresholds(lambda1, lambda2));
        }
        Ok(Self { lambda1, lambda2 })
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Applies the custom rule to one coefficient.
    pub fn shrink(&self, y: f64, alpha: f64, mu: f64) -> f64 {
        let mag = y.abs();
        let (l1, l2) = (self.lambda1, self.lambda2);
        if mag >= l2 {
            y
        } else if mag <= l1 {
            alpha * mu_law_core(y, l1, mu)
        } else {
            let ramp = y.signum() * l2 * (mag - l1) / (l2 - l1);
            (1.0 - alpha) * ramp + alpha * y
        }
    }
}

/// `sgn(y) |y| / mu * ((1 + mu)^(|y| / lambda1) - 1)`, computed through `exp_m1`.
fn mu_law_core(y: f64, lambda1: f64, mu: f64) -> f64 {
    let mag = y.abs();
    y.signum() * (mag / mu) * (mag / lambda1 * mu.ln_1p()).exp_m1()
}

fn check_alpha_mu(alpha: f64, mu: f64) -> Result<(), ShrinkError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ShrinkError::BadAlpha(alpha));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ShrinkError::BadMu(mu));
    }
    Ok(())
}

/// The custom thresholding rule for a single coefficient.
pub fn apply_shrink(y: f64, lambda1: f64, lambda2: f64, alpha: f64, mu: f64) -> Result<f64, ShrinkError> {
    check_alpha_mu(alpha, mu)?;
    Ok(Thresholds::new(lambda1, lambda2)?.shrink(y, alpha, mu))
}

/// Semisoft thresholding: zero below `lambda1`, linear ramp, identity from `lambda2`.
pub fn semisoft(y: f64, lambda1: f64, lambda2: f64) -> f64 {
    let mag = y.abs();
    if mag <= lambda1 {
        0.0
    } else if mag >= lambda2 {
        y
    } else {
        y.signum() * lambda2 * (mag - lambda1) / (lambda2 - lambda1)
    }
}

/// Mu-law thresholding: companding below `lambda1`, identity above.
pub fn mu_law(y: f64, lambda1: f64, mu: f64) -> f64 {
    if y.abs() <= lambda1 {
        mu_law_core(y, lambda1, mu)
    } else {
        y
    }
}

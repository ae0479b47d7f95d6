//! Speech presence estimation and the shrinkage shape parameter.
//!
//! A recursive a-priori SNR `xi(k, m)` is tracked per coefficient. Three
//! presence ratios are derived from it: a local and a global one, which
//! average `xi` over neighbouring subbands with rectangular windows, and a
//! per-subband one that compares the subband's mean `xi` with its lower
//! neighbour and with a confined running peak. Their product is the speech
//! presence probability `r = 1 - q`, and the shape parameter is
//! `alpha = (1 + r) / (2 (1 + q))`.
//!
//! Subbands differ in length, so neighbouring subbands are sampled at the
//! time-aligned coefficient when averaging across `k`.

use crate::noise_tracker::NoiseState;
use crate::teager::TeCoeffs;

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Order of the a-priori SNR recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiRecursion {
    /// Along the coefficients of a subband, carried across frames.
    #[default]
    IntraFrame,
    /// Once per frame on the subband mean.
    FrameWise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresenceConfig {
    /// Averaging constant of the recursion.
    pub kappa: f64,
    pub xi_min_db: f64,
    pub xi_max_db: f64,
    /// Cap on the running subband peak.
    pub xi_peak_db: f64,
    pub w_local: usize,
    pub w_global: usize,
    pub recursion: XiRecursion,
}

impl Default for PresenceConfig {
    fn default() -> Self {
        Self {
            kappa: 0.7,
            xi_min_db: -10.0,
            xi_max_db: -5.0,
            xi_peak_db: 10.0,
            w_local: 1,
            w_global: 15,
            recursion: XiRecursion::IntraFrame,
        }
    }
}

impl PresenceConfig {
    pub fn xi_min(&self) -> f64 {
        db_to_power(self.xi_min_db)
    }

    pub fn xi_max(&self) -> f64 {
        db_to_power(self.xi_max_db)
    }

    pub fn xi_peak_cap(&self) -> f64 {
        db_to_power(self.xi_peak_db)
    }
}

/// Which cross-subband window to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Local,
    Global,
}

/// Maps a smoothed SNR onto `[0, 1]` on a log scale between `xi_min` and `xi_max`.
pub fn presence_ratio(xi: f64, xi_min: f64, xi_max: f64) -> f64 {
    if xi <= xi_min {
        0.0
    } else if xi >= xi_max {
        1.0
    } else {
        (xi / xi_min).ln() / (xi_max / xi_min).ln()
    }
}

/// Subband presence from the subband mean SNR, its lower neighbour, and the peak.
/// For the lowest subband pass `prev = None`.
pub fn subband_ratio(xi_sub: f64, prev: Option<f64>, xi_peak: f64, xi_min: f64, xi_max: f64) -> f64 {
    if xi_sub < xi_min {
        return 0.0;
    }
    let rising = prev.is_none_or(|p| xi_sub > p);
    if rising && xi_sub > xi_min {
        return 1.0;
    }
    let mu = if xi_sub <= xi_peak * xi_min {
        0.0
    } else if xi_sub >= xi_peak * xi_max {
        1.0
    } else {
        (xi_sub / xi_peak / xi_min).ln() / (xi_max / xi_min).ln()
    };
    mu.clamp(0.0, 1.0)
}

/// Shape parameter from the speech absence probability `q`.
pub fn alpha_from_q(q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let r = 1.0 - q;
    (1.0 + r) / (2.0 * (1.0 + q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresenceState {
    config: PresenceConfig,
    xi: Vec<Vec<f64>>,
    xi_prev_frame: Vec<f64>,
    eta_prev_frame: Vec<f64>,
    xi_subband: Vec<f64>,
    xi_peak: f64,
    frames: usize,
}

impl PresenceState {
    pub fn new(num_subbands: usize, config: PresenceConfig) -> Self {
        let xi_min = config.xi_min();
        Self {
            config,
            xi: vec![Vec::new(); num_subbands],
            xi_prev_frame: vec![xi_min; num_subbands],
            eta_prev_frame: vec![0.0; num_subbands],
            xi_subband: vec![0.0; num_subbands],
            xi_peak: xi_min,
            frames: 0,
        }
    }

    /// A state holding a given SNR matrix, with subband statistics derived from it.
    pub fn from_xi(config: PresenceConfig, xi: Vec<Vec<f64>>) -> Self {
        let mut state = Self::new(xi.len(), config);
        state.xi = xi;
        state.update_subband_stats();
        state.frames = 1;
        state
    }

    pub fn config(&self) -> &PresenceConfig {
        &self.config
    }

    pub fn xi(&self) -> &[Vec<f64>] {
        &self.xi
    }

    pub fn xi_prev_frame(&self) -> &[f64] {
        &self.xi_prev_frame
    }

    pub fn xi_subband(&self) -> &[f64] {
        &self.xi_subband
    }

    pub fn xi_peak(&self) -> f64 {
        self.xi_peak
    }

    /// Advances the a-priori SNR recursion by one frame.
    pub fn xi_recursion(&mut self, te: &TeCoeffs, noise: &NoiseState) {
        let kappa = self.config.kappa;
        let sigma = noise.sigma_n2();
        for (k, t) in te.values.iter().enumerate() {
            let eta: Vec<f64> = t
                .iter()
                .map(|&v| (v.max(0.0) / sigma[k] - 1.0).max(0.0))
                .collect();
            let m = eta.len();
            let row = &mut self.xi[k];
            row.clear();
            match self.config.recursion {
                XiRecursion::IntraFrame => {
                    let mut xi = self.xi_prev_frame[k];
                    row.push(xi);
                    for e in &eta[..m.saturating_sub(1)] {
                        xi = kappa * xi + (1.0 - kappa) * e;
                        row.push(xi);
                    }
                    self.xi_prev_frame[k] = xi;
                }
                XiRecursion::FrameWise => {
                    let xi = if self.frames == 0 {
                        self.xi_prev_frame[k]
                    } else {
                        kappa * self.xi_prev_frame[k] + (1.0 - kappa) * self.eta_prev_frame[k]
                    };
                    row.resize(m, xi);
                    self.xi_prev_frame[k] = xi;
                    self.eta_prev_frame[k] = if m == 0 { 0.0 } else { eta.iter().sum::<f64>() / m as f64 };
                }
            }
        }
        self.frames += 1;
        self.update_subband_stats();
    }

    fn update_subband_stats(&mut self) {
        for (k, row) in self.xi.iter().enumerate() {
            self.xi_subband[k] = if row.is_empty() {
                0.0
            } else {
                row.iter().sum::<f64>() / row.len() as f64
            };
        }
        let frame_peak = self.xi_subband.iter().copied().fold(0.0, f64::max);
        self.xi_peak = self
            .xi_peak
            .max(frame_peak)
            .clamp(self.config.xi_min(), self.config.xi_peak_cap());
    }

    /// Index into subband `j` aligned in time with coefficient `m` of subband `k`.
    fn aligned(&self, k: usize, m: usize, j: usize) -> usize {
        let mk = self.xi[k].len();
        let mj = self.xi[j].len();
        if mj == mk {
            m
        } else {
            ((2 * m + 1) * mj / (2 * mk)).min(mj - 1)
        }
    }

    /// Cross-subband averaged SNR around `(k, m)`; the window is truncated at
    /// the band edges and renormalized.
    pub fn xi_windowed(&self, k: usize, m: usize, window: Window) -> f64 {
        let w = match window {
            Window::Local => self.config.w_local,
            Window::Global => self.config.w_global,
        };
        let n = self.xi.len();
        let lo = k.saturating_sub(w);
        let hi = (k + w).min(n - 1);
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in lo..=hi {
            if self.xi[j].is_empty() {
                continue;
            }
            sum += self.xi[j][self.aligned(k, m, j)];
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn r_tau(&self, k: usize, m: usize, window: Window) -> f64 {
        presence_ratio(
            self.xi_windowed(k, m, window),
            self.config.xi_min(),
            self.config.xi_max(),
        )
    }

    pub fn r_subband(&self, k: usize) -> f64 {
        let prev = if k == 0 { None } else { Some(self.xi_subband[k - 1]) };
        subband_ratio(
            self.xi_subband[k],
            prev,
            self.xi_peak,
            self.config.xi_min(),
            self.config.xi_max(),
        )
    }

    /// Speech absence probability of coefficient `(k, m)`.
    pub fn q(&self, k: usize, m: usize) -> f64 {
        let r = self.r_tau(k, m, Window::Local) * self.r_tau(k, m, Window::Global) * self.r_subband(k);
        (1.0 - r).clamp(0.0, 1.0)
    }

    pub fn shape_alpha(&self, k: usize, m: usize) -> f64 {
        alpha_from_q(self.q(k, m))
    }

    /// Shape parameters for every coefficient of the current frame.
    pub fn frame_alpha(&self) -> Vec<Vec<f64>> {
        (0..self.xi.len())
            .map(|k| {
                let r_sub = self.r_subband(k);
                (0..self.xi[k].len())
                    .map(|m| {
                        let r = self.r_tau(k, m, Window::Local) * self.r_tau(k, m, Window::Global) * r_sub;
                        alpha_from_q((1.0 - r).clamp(0.0, 1.0))
                    })
                    .collect()
            })
            .collect()
    }
}

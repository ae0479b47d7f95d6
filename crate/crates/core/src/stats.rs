//! Histograms, candidate densities, Kullback-Leibler divergences and AIC
//! model scoring for Teager-energy coefficients.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Values below this are treated as zero when fitting the Erlang-2 model.
pub const ERLANG_DATA_FLOOR: f64 = 1e-12;

const STUDENT_DOF_MIN: f64 = 1.0;
const STUDENT_DOF_MAX: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty data")]
    EmptyData,
    #[error("at least 2 bins required, got {0}")]
    TooFewBins(usize),
    #[error("histograms have different bin edges")]
    BinMismatch,
    #[error("q is zero in bin {0} where p is positive")]
    NotAbsolutelyContinuous(usize),
    #[error("model scale must be finite and positive, got {0}")]
    BadScale(f64),
    #[error("degrees of freedom must be finite and positive, got {0}")]
    BadDof(f64),
    #[error("data has zero spread; model cannot be fitted")]
    DegenerateData,
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Default bin count for `m` samples: `ceil(sqrt(m))`, at least 2.
pub fn default_bin_count(m: usize) -> usize {
    ((m as f64).sqrt().ceil() as usize).max(2)
}

/// Equal-width histogram normalized to probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub probs: Vec<f64>,
}

impl Histogram {
    /// Bins spanning `[min(data), max(data)]`.
    pub fn new(data: &[f64], n_bins: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(StatsError::EmptyData);
        }
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::with_range(data, lo, hi, n_bins)
    }

    /// Bins spanning a given range; samples outside it fall in the end bins.
    pub fn with_range(data: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(StatsError::TooFewBins(n_bins));
        }
        if data.is_empty() {
            return Err(StatsError::EmptyData);
        }
        let hi = if hi - lo > 0.0 { hi } else { lo + 1e-12 };
        let width = (hi - lo) / n_bins as f64;
        let mut bin_edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * width).collect();
        bin_edges.push(hi);
        let mut counts = vec![0usize; n_bins];
        for &x in data {
            counts[bin_of(x, lo, width, n_bins)] += 1;
        }
        let total = data.len() as f64;
        let probs = counts.into_iter().map(|c| c as f64 / total).collect();
        Ok(Self { bin_edges, probs })
    }

    /// Two histograms over the union range of both samples, for divergence comparisons.
    pub fn pair(a: &[f64], b: &[f64], n_bins: usize) -> Result<(Self, Self)> {
        if a.is_empty() || b.is_empty() {
            return Err(StatsError::EmptyData);
        }
        let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((
            Self::with_range(a, lo, hi, n_bins)?,
            Self::with_range(b, lo, hi, n_bins)?,
        ))
    }

    pub fn n_bins(&self) -> usize {
        self.probs.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Probabilities divided by bin width, comparable to a density.
    pub fn densities(&self) -> Vec<f64> {
        let w = self.bin_width();
        self.probs.iter().map(|p| p / w).collect()
    }
}

fn bin_of(x: f64, lo: f64, width: f64, n_bins: usize) -> usize {
    let idx = ((x - lo) / width).floor();
    if idx <= 0.0 {
        0
    } else {
        (idx as usize).min(n_bins - 1)
    }
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)`.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(StatsError::BinMismatch);
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(StatsError::NotAbsolutelyContinuous(i));
        }
        sum += pi * (pi / qi).ln();
    }
    // rounding can leave a tiny negative residue for identical inputs
    Ok(sum.max(0.0))
}

/// Symmetric divergence `(KL(p||q) + KL(q||p)) / 2`.
pub fn skl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    let forward = kl_divergence(p, q)?;
    let backward = kl_divergence(q, p)?;
    Ok(0.5 * (forward + backward))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Erlang2,
    Gaussian,
    StudentT,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Erlang2, ModelKind::Gaussian, ModelKind::StudentT];

    /// Number of free parameters.
    pub fn n_params(self) -> usize {
        match self {
            ModelKind::Erlang2 | ModelKind::Gaussian => 1,
            ModelKind::StudentT => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Erlang2 => "erlang2",
            ModelKind::Gaussian => "gaussian",
            ModelKind::StudentT => "studentt",
        }
    }
}

/// Candidate densities, all centred at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdfModel {
    /// Shape-2 gamma with rate `sqrt(2 / variance)`, supported on `x >= 0`.
    Erlang2 { variance: f64 },
    Gaussian { variance: f64 },
    /// Location-0 Student t with linear `scale`.
    StudentT { dof: f64, scale: f64 },
}

impl PdfModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            PdfModel::Erlang2 { .. } => ModelKind::Erlang2,
            PdfModel::Gaussian { .. } => ModelKind::Gaussian,
            PdfModel::StudentT { .. } => ModelKind::StudentT,
        }
    }

    fn validate(&self) -> Result<()> {
        let check_scale = |s: f64| {
            if s.is_finite() && s > 0.0 {
                Ok(())
            } else {
                Err(StatsError::BadScale(s))
            }
        };
        match *self {
            PdfModel::Erlang2 { variance } | PdfModel::Gaussian { variance } => check_scale(variance),
            PdfModel::StudentT { dof, scale } => {
                if !(dof.is_finite() && dof > 0.0) {
                    return Err(StatsError::BadDof(dof));
                }
                check_scale(scale)
            }
        }
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.ln_pdf_unchecked(x))
    }

    fn ln_pdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            PdfModel::Erlang2 { variance } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let rate = erlang_rate(variance);
                2.0 * rate.ln() + x.ln() - rate * x
            }
            PdfModel::Gaussian { variance } => -0.5 * (2.0 * PI * variance).ln() - x * x / (2.0 * variance),
            PdfModel::StudentT { dof, scale } => student_ln_pdf(x, dof, scale),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.ln_pdf(x).map(f64::exp)
    }

    fn log_likelihood(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.ln_pdf_unchecked(x)).sum()
    }
}

/// Rate of the Erlang-2 density with the given variance.
pub fn erlang_rate(variance: f64) -> f64 {
    (2.0 / variance).sqrt()
}

fn student_ln_pdf(x: f64, dof: f64, scale: f64) -> f64 {
    let z = x / scale;
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln() - scale.ln()
        - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
}

/// Density evaluation, the free-function form of [`PdfModel::pdf`].
pub fn pdf_eval(model: &PdfModel, x: f64) -> Result<f64> {
    model.pdf(x)
}

/// A fitted model with its Akaike information criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub model: PdfModel,
    pub log_likelihood: f64,
    /// `2k - 2 ln L`; lower is better.
    pub aic: f64,
    /// Samples raised to [`ERLANG_DATA_FLOOR`] before an Erlang-2 fit.
    pub clamped: usize,
}

/// Maximum-likelihood fit of `kind` to `data`, scored by AIC.
pub fn aic_index(data: &[f64], kind: ModelKind) -> Result<ModelFit> {
    if data.is_empty() {
        return Err(StatsError::EmptyData);
    }
    let (model, ll, clamped) = match kind {
        ModelKind::Erlang2 => {
            let mut clamped = 0;
            let floored: Vec<f64> = data
                .iter()
                .map(|&x| {
                    if x < ERLANG_DATA_FLOOR {
                        clamped += 1;
                        ERLANG_DATA_FLOOR
                    } else {
                        x
                    }
                })
                .collect();
            let model = fit_erlang2(&floored);
            (model, model.log_likelihood(&floored), clamped)
        }
        ModelKind::Gaussian => {
            let variance = mean_square(data);
            if variance <= 0.0 {
                return Err(StatsError::DegenerateData);
            }
            let model = PdfModel::Gaussian { variance };
            (model, model.log_likelihood(data), 0)
        }
        ModelKind::StudentT => {
            if mean_square(data) <= 0.0 {
                return Err(StatsError::DegenerateData);
            }
            let model = fit_student(data);
            (model, model.log_likelihood(data), 0)
        }
    };
    Ok(ModelFit {
        model,
        log_likelihood: ll,
        aic: 2.0 * kind.n_params() as f64 - 2.0 * ll,
        clamped,
    })
}

fn mean_square(data: &[f64]) -> f64 {
    data.iter().map(|x| x * x).sum::<f64>() / data.len() as f64
}

/// Shape-2 gamma MLE with known shape: rate = 2 / mean, so variance = mean^2 / 2.
pub fn fit_erlang2(data: &[f64]) -> PdfModel {
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    PdfModel::Erlang2 {
        variance: mean * mean / 2.0,
    }
}

/// Scale MLE for a fixed dof by EM reweighting.
fn student_scale(data: &[f64], dof: f64) -> f64 {
    let mut s2 = mean_square(data);
    for _ in 0..500 {
        let next = data
            .iter()
            .map(|&x| {
                let x2 = x * x;
                (dof + 1.0) * x2 / (dof + x2 / s2)
            })
            .sum::<f64>()
            / data.len() as f64;
        let done = ((next - s2) / s2).abs() < 1e-12;
        s2 = next.max(f64::MIN_POSITIVE);
        if done {
            break;
        }
    }
    s2.sqrt()
}

fn student_profile(data: &[f64], dof: f64) -> (f64, f64) {
    let scale = student_scale(data, dof);
    let ll = PdfModel::StudentT { dof, scale }.log_likelihood(data);
    (scale, ll)
}

/// Integer grid over the dof range, then golden-section refinement around the best point.
fn fit_student(data: &[f64]) -> PdfModel {
    let (mut best_dof, mut best_ll) = (STUDENT_DOF_MIN, f64::NEG_INFINITY);
    for dof in (STUDENT_DOF_MIN as usize)..=(STUDENT_DOF_MAX as usize) {
        let (_, ll) = student_profile(data, dof as f64);
        if ll > best_ll {
            best_ll = ll;
            best_dof = dof as f64;
        }
    }
    let lo = (best_dof - 1.0).max(STUDENT_DOF_MIN);
    let hi = (best_dof + 1.0).min(STUDENT_DOF_MAX);
    let refined = golden_max(|d| student_profile(data, d).1, lo, hi, 1e-6);
    let dof = if student_profile(data, refined).1 > best_ll {
        refined
    } else {
        best_dof
    };
    PdfModel::StudentT {
        dof,
        scale: student_scale(data, dof),
    }
}

/// Golden-section search for the maximizer of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

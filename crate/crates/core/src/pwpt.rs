//! Perceptual wavelet packet transform.
//!
//! A db10 wavelet packet decomposition pruned to a tree whose leaves roughly
//! follow critical-band resolution. Every split uses periodic extension, so
//! the transform is orthonormal and critically sampled for any frame length
//! divisible by `2^max_depth`.
//!
//! Leaves are addressed as `(depth, node)` where `node` is the position of the
//! band in frequency order at that depth, i.e. leaf `(d, n)` nominally covers
//! `[n, n + 1) * fs / 2^(d + 1)`. Because high-pass filtering followed by
//! decimation mirrors the spectrum, a node at an odd frequency position has its
//! spectrum reversed and its low-pass child is the upper half of its band.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Daubechies-10 decomposition low-pass filter (20 taps).
const DB10_LOWPASS: [f64; 20] = [
    -1.326_420_289_452_124_5e-5,
    9.358_867_032_006_959e-5,
    -1.164_668_551_292_854_5e-4,
    -6.858_566_949_597_116e-4,
    1.992_405_295_185_056e-3,
    1.395_351_747_052_901_2e-3,
    -1.073_317_548_333_057_5e-2,
    3.606_553_566_956_169_7e-3,
    3.321_267_405_934_1e-2,
    -2.945_753_682_187_581_3e-2,
    -7.139_414_716_639_708e-2,
    9.305_736_460_357_235e-2,
    1.273_693_403_357_932_6e-1,
    -1.959_462_743_773_770_4e-1,
    -2.498_464_243_273_153_8e-1,
    2.811_723_436_605_775e-1,
    6.884_590_394_536_035e-1,
    5.272_011_889_317_256e-1,
    1.881_768_000_776_915e-1,
    2.667_005_790_055_555_4e-2,
];

#[derive(Debug, Error, PartialEq)]
pub enum PwptError {
    #[error("frame length {len} is not a positive multiple of {required}")]
    BadFrameLength { len: usize, required: usize },
    #[error("subband {index} has {got} coefficients, expected {expected}")]
    ShapeMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("expected {expected} subbands, got {got}")]
    SubbandCount { expected: usize, got: usize },
    #[error("invalid tree: {0}")]
    InvalidTree(String),
}

/// Orthonormal two-channel analysis filters. Synthesis uses the same taps
/// in transposed (time-reversed) form.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilters {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl WaveletFilters {
    /// Builds the quadrature-mirror pair from a low-pass filter of even length.
    pub fn from_lowpass(lowpass: Vec<f64>) -> Self {
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - n]
            })
            .collect();
        Self { lowpass, highpass }
    }

    pub fn db10() -> Self {
        Self::from_lowpass(DB10_LOWPASS.to_vec())
    }

    pub fn reconstruction_lowpass(&self) -> Vec<f64> {
        self.lowpass.iter().rev().copied().collect()
    }

    pub fn reconstruction_highpass(&self) -> Vec<f64> {
        self.highpass.iter().rev().copied().collect()
    }

    /// One periodic analysis step: `x` (even length) into approximation and detail halves.
    pub fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let half = n / 2;
        let mut lo = vec![0.0; half];
        let mut hi = vec![0.0; half];
        for i in 0..half {
            let mut a = 0.0;
            let mut d = 0.0;
            for (t, (h, g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                let v = x[(2 * i + t) % n];
                a += h * v;
                d += g * v;
            }
            lo[i] = a;
            hi[i] = d;
        }
        (lo, hi)
    }

    /// Inverse of [`split`](Self::split).
    pub fn merge(&self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        debug_assert_eq!(lo.len(), hi.len());
        let n = 2 * lo.len();
        let mut x = vec![0.0; n];
        for (i, (a, d)) in lo.iter().zip(hi).enumerate() {
            for (t, (h, g)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                x[(2 * i + t) % n] += h * a + g * d;
            }
        }
        x
    }
}

/// A leaf of the decomposition tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Leaf {
    pub depth: u32,
    /// Frequency-ordered position at `depth`.
    pub node: usize,
}

impl Leaf {
    /// Band edges as fractions of the Nyquist frequency.
    pub fn band_fraction(&self) -> (f64, f64) {
        let width = 1.0 / (1u64 << self.depth) as f64;
        (self.node as f64 * width, (self.node + 1) as f64 * width)
    }

    pub fn band_hz(&self, sample_rate_hz: f64) -> (f64, f64) {
        let (lo, hi) = self.band_fraction();
        let nyquist = sample_rate_hz / 2.0;
        (lo * nyquist, hi * nyquist)
    }
}

/// Pruned wavelet packet tree, leaves in ascending frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualTree {
    leaves: Vec<Leaf>,
    max_depth: u32,
}

/// Deepest split supported for tree files.
pub const MAX_TREE_DEPTH: u32 = 12;

impl PerceptualTree {
    /// Validates that the leaves tile the whole band without overlap.
    pub fn from_leaves(mut leaves: Vec<Leaf>) -> Result<Self, PwptError> {
        if leaves.is_empty() {
            return Err(PwptError::InvalidTree("no leaves".into()));
        }
        if let Some(bad) = leaves.iter().find(|l| l.depth > MAX_TREE_DEPTH) {
            return Err(PwptError::InvalidTree(format!(
                "depth {} exceeds {MAX_TREE_DEPTH}",
                bad.depth
            )));
        }
        if let Some(bad) = leaves.iter().find(|l| l.node >= 1usize << l.depth) {
            return Err(PwptError::InvalidTree(format!(
                "node {} does not exist at depth {}",
                bad.node, bad.depth
            )));
        }
        let max_depth = leaves.iter().map(|l| l.depth).max().unwrap_or(0);
        let span = |l: &Leaf| {
            let scale = 1usize << (max_depth - l.depth);
            (l.node * scale, (l.node + 1) * scale)
        };
        leaves.sort_by_key(|l| span(l).0);
        let mut cursor = 0;
        for leaf in &leaves {
            let (start, end) = span(leaf);
            if start != cursor {
                return Err(PwptError::InvalidTree(format!(
                    "leaves do not tile the band (gap or overlap at depth {} node {})",
                    leaf.depth, leaf.node
                )));
            }
            cursor = end;
        }
        if cursor != 1usize << max_depth {
            return Err(PwptError::InvalidTree("leaves do not reach the Nyquist frequency".into()));
        }
        Ok(Self { leaves, max_depth })
    }

    /// The default 24-band tree for 8 kHz audio: 62.5 Hz bands up to 1 kHz,
    /// 250 Hz bands up to 2 kHz and 500 Hz bands up to 4 kHz.
    pub fn perceptual_24() -> Self {
        let leaves = (0..16)
            .map(|node| Leaf { depth: 6, node })
            .chain((4..8).map(|node| Leaf { depth: 4, node }))
            .chain((4..8).map(|node| Leaf { depth: 3, node }))
            .collect();
        Self::from_leaves(leaves).expect("default tree tiles the band")
    }

    /// Parses one `depth node` pair per line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, PwptError> {
        let mut leaves = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [d, n] => d.parse::<u32>().ok().zip(n.parse::<usize>().ok()),
                _ => None,
            };
            let (depth, node) = parsed.ok_or_else(|| {
                PwptError::InvalidTree(format!("line {}: expected `depth node`", lineno + 1))
            })?;
            leaves.push(Leaf { depth, node });
        }
        Self::from_leaves(leaves)
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    /// Frame lengths must be a multiple of this.
    pub fn required_multiple(&self) -> usize {
        1 << self.max_depth
    }

    /// Coefficients per subband for a given frame length.
    pub fn subband_lengths(&self, frame_len: usize) -> Vec<usize> {
        self.leaves.iter().map(|l| frame_len >> l.depth).collect()
    }

    fn leaf_index(&self, depth: u32, node: usize) -> Option<usize> {
        self.leaves
            .iter()
            .position(|l| l.depth == depth && l.node == node)
    }
}

impl fmt::Display for PerceptualTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for leaf in &self.leaves {
            writeln!(f, "{} {}", leaf.depth, leaf.node)?;
        }
        Ok(())
    }
}

/// Frequency-ordered children of a node: `(low-pass child, high-pass child)`.
fn children(node: usize) -> (usize, usize) {
    if node.is_multiple_of(2) {
        (2 * node, 2 * node + 1)
    } else {
        (2 * node + 1, 2 * node)
    }
}

/// Coefficients of one analyzed frame, subbands in ascending frequency order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub coeffs: Vec<Vec<f64>>,
    pub tree: Arc<PerceptualTree>,
    pub frame_len: usize,
}

impl SubbandSet {
    pub fn zeros(tree: Arc<PerceptualTree>, frame_len: usize) -> Self {
        let coeffs = tree
            .subband_lengths(frame_len)
            .into_iter()
            .map(|m| vec![0.0; m])
            .collect();
        Self {
            coeffs,
            tree,
            frame_len,
        }
    }

    pub fn num_subbands(&self) -> usize {
        self.coeffs.len()
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().flatten().map(|c| c * c).sum()
    }

    /// Same tree and frame length with new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<Vec<f64>>) -> Self {
        Self {
            coeffs,
            tree: Arc::clone(&self.tree),
            frame_len: self.frame_len,
        }
    }

    fn check_shape(&self) -> Result<(), PwptError> {
        if self.coeffs.len() != self.tree.len() {
            return Err(PwptError::SubbandCount {
                expected: self.tree.len(),
                got: self.coeffs.len(),
            });
        }
        for (index, (c, m)) in self
            .coeffs
            .iter()
            .zip(self.tree.subband_lengths(self.frame_len))
            .enumerate()
        {
            if c.len() != m {
                return Err(PwptError::ShapeMismatch {
                    index,
                    got: c.len(),
                    expected: m,
                });
            }
        }
        Ok(())
    }
}

/// Decomposes one frame along the tree.
pub fn analyze(
    frame: &[f64],
    tree: &Arc<PerceptualTree>,
    filters: &WaveletFilters,
) -> Result<SubbandSet, PwptError> {
    let required = tree.required_multiple();
    if frame.is_empty() || !frame.len().is_multiple_of(required) {
        return Err(PwptError::BadFrameLength {
            len: frame.len(),
            required,
        });
    }
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); tree.len()];
    descend(frame.to_vec(), 0, 0, tree, filters, &mut out);
    Ok(SubbandSet {
        coeffs: out,
        tree: Arc::clone(tree),
        frame_len: frame.len(),
    })
}

fn descend(
    signal: Vec<f64>,
    depth: u32,
    node: usize,
    tree: &PerceptualTree,
    filters: &WaveletFilters,
    out: &mut [Vec<f64>],
) {
    if let Some(idx) = tree.leaf_index(depth, node) {
        out[idx] = signal;
        return;
    }
    let (lo, hi) = filters.split(&signal);
    let (lo_node, hi_node) = children(node);
    descend(lo, depth + 1, lo_node, tree, filters, out);
    descend(hi, depth + 1, hi_node, tree, filters, out);
}

/// Exact inverse of [`analyze`].
pub fn synthesize(sb: &SubbandSet, filters: &WaveletFilters) -> Result<Vec<f64>, PwptError> {
    sb.check_shape()?;
    Ok(ascend(0, 0, sb, filters))
}

fn ascend(depth: u32, node: usize, sb: &SubbandSet, filters: &WaveletFilters) -> Vec<f64> {
    if let Some(idx) = sb.tree.leaf_index(depth, node) {
        return sb.coeffs[idx].clone();
    }
    let (lo_node, hi_node) = children(node);
    let lo = ascend(depth + 1, lo_node, sb, filters);
    let hi = ascend(depth + 1, hi_node, sb, filters);
    filters.merge(&lo, &hi)
}

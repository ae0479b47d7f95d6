//! Hamming-windowed framing at 50% overlap and overlap-add resynthesis.

use std::f64::consts::PI;

use thiserror::Error;

/// Smallest window sum used as a divisor during overlap-add.
const WINDOW_SUM_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum FramingError {
    #[error("frame length must be even and at least 4, got {0}")]
    BadFrameLength(usize),
    #[error("cannot frame an empty signal")]
    EmptySignal,
    #[error("malformed frame stack: {0}")]
    Malformed(&'static str),
}

/// Periodic (DFT-even) Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Windowed frames of a signal, with everything needed to put it back together.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub frames: Vec<Vec<f64>>,
    pub hop: usize,
    pub window: Vec<f64>,
    pub original_len: usize,
}

impl FrameStack {
    pub fn frame_len(&self) -> usize {
        self.window.len()
    }

    /// Same layout with new frame contents.
    pub fn with_frames(&self, frames: Vec<Vec<f64>>) -> Self {
        Self {
            frames,
            hop: self.hop,
            window: self.window.clone(),
            original_len: self.original_len,
        }
    }
}

/// Number of frames needed to cover `len` samples.
pub fn frame_count(len: usize, frame_len: usize) -> usize {
    let hop = frame_len / 2;
    len.saturating_sub(frame_len).div_ceil(hop) + 1
}

pub fn split_frames(samples: &[f64], frame_len: usize) -> Result<FrameStack, FramingError> {
    if frame_len < 4 || !frame_len.is_multiple_of(2) {
        return Err(FramingError::BadFrameLength(frame_len));
    }
    if samples.is_empty() {
        return Err(FramingError::EmptySignal);
    }
    let hop = frame_len / 2;
    let window = hamming(frame_len);
    let frames = (0..frame_count(samples.len(), frame_len))
        .map(|i| {
            let start = i * hop;
            window
                .iter()
                .enumerate()
                .map(|(n, w)| w * samples.get(start + n).copied().unwrap_or(0.0))
                .collect()
        })
        .collect();
    Ok(FrameStack {
        frames,
        hop,
        window,
        original_len: samples.len(),
    })
}

/// Sums frames at their hop offsets and divides by the realized window sum.
pub fn overlap_add(stack: &FrameStack) -> Result<Vec<f64>, FramingError> {
    let frame_len = stack.frame_len();
    if stack.hop == 0 || stack.hop > frame_len {
        return Err(FramingError::Malformed("hop out of range"));
    }
    if stack.frames.iter().any(|f| f.len() != frame_len) {
        return Err(FramingError::Malformed("frame length differs from window length"));
    }
    let total = if stack.frames.is_empty() {
        0
    } else {
        (stack.frames.len() - 1) * stack.hop + frame_len
    };
    let mut acc = vec![0.0; total.max(stack.original_len)];
    let mut norm = vec![0.0; acc.len()];
    for (i, frame) in stack.frames.iter().enumerate() {
        let start = i * stack.hop;
        for (n, (x, w)) in frame.iter().zip(&stack.window).enumerate() {
            acc[start + n] += x;
            norm[start + n] += w;
        }
    }
    acc.truncate(stack.original_len);
    for (a, w) in acc.iter_mut().zip(&norm) {
        *a /= w.max(WINDOW_SUM_FLOOR);
    }
    Ok(acc)
}

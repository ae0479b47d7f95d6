//! Discrete Teager energy operator over wavelet packet subbands.

use crate::pwpt::SubbandSet;

/// Teager energy of each coefficient, laid out like the source subbands.
#[derive(Debug, Clone, PartialEq)]
pub struct TeCoeffs {
    pub values: Vec<Vec<f64>>,
}

impl TeCoeffs {
    pub fn num_subbands(&self) -> usize {
        self.values.len()
    }
}

/// `x[m]^2 - x[m+1] * x[m-1]` in the interior, `x[m]^2` at both ends.
pub fn teager(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|m| {
            if m == 0 || m + 1 == n {
                x[m] * x[m]
            } else {
                x[m] * x[m] - x[m + 1] * x[m - 1]
            }
        })
        .collect()
}

pub fn te_operator(sb: &SubbandSet) -> TeCoeffs {
    TeCoeffs {
        values: sb.coeffs.iter().map(|band| teager(band)).collect(),
    }
}

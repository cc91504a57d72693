use crate::error::{FusionError, Result};

/// Ordered cutoffs `-inf = c_0 < c_1 = 0 < c_2 < ... < c_{L-1} < c_L = +inf`
/// stored together with their log-increment parameterization
/// `c_y = c_{y-1} + exp(raw_y)` for `y = 2..L-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffVector {
    raw: Vec<f64>,
    /// Finite cutoffs `c_1..c_{L-1}`; `interior[0] == 0`.
    interior: Vec<f64>,
}

impl CutoffVector {
    /// Builds cutoffs from `L - 2` log-increments.
    pub fn from_increments(raw: Vec<f64>) -> Self {
        let mut interior = Vec::with_capacity(raw.len() + 1);
        interior.push(0.0);
        let mut acc = 0.0;
        for r in &raw {
            acc += r.exp();
            interior.push(acc);
        }
        CutoffVector { raw, interior }
    }

    /// Builds cutoffs from the finite values `c_1..c_{L-1}`.
    pub fn from_interior(interior: &[f64]) -> Result<Self> {
        Ok(CutoffVector::from_increments(contract_interior(interior)?))
    }

    #[inline]
    pub fn increments(&self) -> &[f64] {
        &self.raw
    }

    #[inline]
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    #[inline]
    pub fn n_categories(&self) -> usize {
        self.interior.len() + 1
    }

    /// Lower bound of zero-based category `k`.
    #[inline]
    pub fn lower(&self, k: usize) -> f64 {
        if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.interior[k - 1]
        }
    }

    /// Upper bound of zero-based category `k`.
    #[inline]
    pub fn upper(&self, k: usize) -> f64 {
        self.interior.get(k).copied().unwrap_or(f64::INFINITY)
    }

    /// All `L + 1` cutoffs including the infinite ends.
    pub fn expanded(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.interior.len() + 2);
        out.push(f64::NEG_INFINITY);
        out.extend_from_slice(&self.interior);
        out.push(f64::INFINITY);
        out
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.interior.iter().all(|v| v.is_finite())
            && self.interior.windows(2).all(|w| w[0] < w[1])
    }
}

/// `raw -> cutoffs`.
pub fn expand_cutoffs(raw: &[f64]) -> CutoffVector {
    CutoffVector::from_increments(raw.to_vec())
}

/// Inverse of [`expand_cutoffs`]. Accepts either the full `L + 1` vector with
/// infinite ends or only the finite cutoffs.
pub fn contract_cutoffs(expanded: &[f64]) -> Result<Vec<f64>> {
    let finite: &[f64] = match (expanded.first(), expanded.last()) {
        (Some(a), Some(b)) if *a == f64::NEG_INFINITY && *b == f64::INFINITY => {
            &expanded[1..expanded.len() - 1]
        }
        _ => expanded,
    };
    contract_interior(finite)
}

fn contract_interior(interior: &[f64]) -> Result<Vec<f64>> {
    match interior.first() {
        None => {
            return Err(FusionError::Config(
                "cutoff vector needs at least one finite cutoff".into(),
            ))
        }
        Some(&first) if first != 0.0 => {
            return Err(FusionError::Config(format!(
                "first finite cutoff must be 0, got {first}"
            )))
        }
        _ => {}
    }
    interior
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d > 0.0 && d.is_finite() {
                Ok(d.ln())
            } else {
                Err(FusionError::Config(format!(
                    "cutoffs must be strictly increasing: {} then {}",
                    w[0], w[1]
                )))
            }
        })
        .collect()
}

//! Regularly sampled log-price paths, their one-step increments and the
//! block layout used by the realized characteristic function estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log prices `X_{t_0}, ..., X_{t_n}` observed at `t_i = i * delta` on `[0, t_end]`.
///
/// `t_end` is measured in trading days; one day is a 6.5 hour session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    t_end: f64,
    values: Vec<f64>,
}

impl PricePath {
    /// Builds a path from `values` sampled on an even grid over `[0, t_end]`.
    pub fn new(t_end: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::PathTooShort(values.len()));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidTimeSpan(t_end));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSample { index, value });
        }
        Ok(Self { t_end, values })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of increments.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// Grid spacing `Δ_n = T / n`.
    pub fn delta(&self) -> f64 {
        self.t_end / self.n() as f64
    }

    /// Observation time of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.delta()
    }

    pub fn increments(&self) -> IncrementSeries {
        IncrementSeries {
            increments: self.values.windows(2).map(|w| w[1] - w[0]).collect(),
            delta: self.delta(),
        }
    }
}

/// Convenience wrapper around [`PricePath::new`].
pub fn make_path(t_end: f64, values: &[f64]) -> Result<PricePath> {
    PricePath::new(t_end, values.to_vec())
}

/// Convenience wrapper around [`PricePath::increments`].
pub fn increments(path: &PricePath) -> IncrementSeries {
    path.increments()
}

/// One-step increments `Δ^n_j X = X_{t_j} - X_{t_{j-1}}` for `j = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    increments: Vec<f64>,
    delta: f64,
}

impl IncrementSeries {
    /// Wraps raw increments. Used when increments are produced directly,
    /// e.g. when joining several sessions.
    pub fn from_raw(increments: Vec<f64>, delta: f64) -> Result<Self> {
        if increments.is_empty() {
            return Err(Error::PathTooShort(increments.len() + 1));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidTimeSpan(delta));
        }
        if let Some((index, &value)) = increments.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSample { index, value });
        }
        Ok(Self { increments, delta })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `Δ^n_j X`, 1-based as in the usual notation.
    #[inline]
    pub fn at(&self, j: usize) -> f64 {
        self.increments[j - 1]
    }
}

/// Partition of the increments into `m_n` blocks of `2 k_n` increments each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockGeometry {
    pub k_n: usize,
    /// Half-block duration `k_n * Δ_n`.
    pub v_n: f64,
    pub m_n: usize,
    pub used_increments: usize,
}

impl BlockGeometry {
    pub fn new(n: usize, k_n: usize, delta: f64) -> Result<Self> {
        if k_n < 2 || n < 2 * k_n {
            return Err(Error::InsufficientData { n, k_n });
        }
        let m_n = n / (2 * k_n);
        Ok(Self {
            k_n,
            v_n: k_n as f64 * delta,
            m_n,
            used_increments: 2 * k_n * m_n,
        })
    }
}

pub fn block_geometry(n: usize, k_n: usize, delta: f64) -> Result<BlockGeometry> {
    BlockGeometry::new(n, k_n, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builds_path() {
        let p = make_path(1.0, &[0.0, 0.01, 0.02]).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.delta(), 0.5);
    }

    #[test]
    fn rejects_short_and_invalid() {
        assert_eq!(make_path(1.0, &[0.0]), Err(Error::PathTooShort(1)));
        assert!(matches!(
            make_path(1.0, &[0.0, f64::NAN]),
            Err(Error::InvalidSample { index: 1, .. })
        ));
        assert!(make_path(0.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn increments_of_simple_paths() {
        let p = make_path(1.0, &[0.0, 1.0, 3.0]).unwrap();
        assert_eq!(p.increments().as_slice(), &[1.0, 2.0]);
        let p = make_path(1.0, &[5.0; 4]).unwrap();
        assert_eq!(p.increments().as_slice(), &[0.0; 3]);
        let a = 0.25;
        let vals: Vec<f64> = (0..9).map(|i| a * i as f64).collect();
        let incs = make_path(1.0, &vals).unwrap().increments();
        assert!(incs.as_slice().iter().all(|&d| d == a));
        assert_eq!(incs.at(1), a);
    }

    #[test]
    fn table_geometries() {
        let g = block_geometry(2340, 78, 1.0 / 2340.0).unwrap();
        assert_eq!((g.m_n, g.used_increments), (15, 2340));
        let g = block_geometry(1170, 50, 1.0 / 1170.0).unwrap();
        assert_eq!((g.m_n, g.used_increments), (11, 1100));
        assert!((g.v_n - 50.0 / 1170.0).abs() < 1e-15);
        assert!(block_geometry(10, 6, 0.1).is_err());
        assert!(block_geometry(10, 1, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn increments_telescope(vals in prop::collection::vec(-1e3f64..1e3, 2..400)) {
            let p = make_path(1.0, &vals).unwrap();
            let incs = p.increments();
            prop_assert_eq!(incs.len(), p.n());
            let sum: f64 = incs.as_slice().iter().sum();
            let total = vals[vals.len() - 1] - vals[0];
            let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!((sum - total).abs() <= 1e-12 * p.n() as f64 * scale);
        }

        #[test]
        fn constant_shift_leaves_increments(vals in prop::collection::vec(-10f64..10.0, 2..100), shift in -8f64..8.0) {
            // Dyadic shift so that x + shift is exact for these magnitudes.
            let shift = (shift * 8.0).round() / 8.0;
            let vals: Vec<f64> = vals.iter().map(|v| (v * 1024.0).round() / 1024.0).collect();
            let shifted: Vec<f64> = vals.iter().map(|v| v + shift).collect();
            let a = make_path(1.0, &vals).unwrap().increments();
            let b = make_path(1.0, &shifted).unwrap().increments();
            prop_assert_eq!(a.as_slice(), b.as_slice());
        }

        #[test]
        fn geometry_stays_inside(n in 4usize..5000, k in 2usize..200) {
            match block_geometry(n, k, 1.0 / n as f64) {
                Ok(g) => {
                    prop_assert!(g.m_n >= 1);
                    prop_assert!(g.used_increments <= n);
                    prop_assert!(n - g.used_increments < 2 * k);
                }
                Err(_) => prop_assert!(n < 2 * k),
            }
        }
    }
}

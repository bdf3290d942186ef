//! Realized characteristic function estimators.
//!
//! The increments are cut into `m_n` blocks of `2 k_n` increments. Inside
//! block `j` the local realized characteristic function averages
//! `cos(u D_l / sqrt(Δ_n))` over the `k_n - 1` differenced pairs
//!
//! ```text
//! variant 0:  D_l = Δ_{2jk+2l+1} X - Δ_{2jk+2l} X
//! variant 1:  D_l = Δ_{2jk+2l} X   - Δ_{2jk+2l-1} X     (l = 1..k-1)
//! ```
//!
//! Differencing removes any drift exactly, and `E cos(u D / sqrt(Δ)) = exp(-u^2 c)`
//! for a Brownian part with spot variance `c`, so `-log(L) / u^2` is a local
//! variance estimate. Summed over blocks with the `sinh^2` small-sample
//! correction this gives the integrated volatility estimates `Ĉ_0`, `Ĉ_1`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::paths::{BlockGeometry, IncrementSeries};

/// Which pairing of increments a local estimate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Pairs `(2jk+2l, 2jk+2l+1)`.
    Aligned,
    /// Pairs `(2jk+2l-1, 2jk+2l)`, one grid point earlier.
    Shifted,
}

impl Variant {
    pub fn index(self) -> usize {
        match self {
            Variant::Aligned => 0,
            Variant::Shifted => 1,
        }
    }
}

/// Neumaier compensated sum, accumulated in iteration order.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in iter {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_u(u: f64) -> Result<()> {
    if u.is_finite() && u > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(u))
    }
}

/// Local realized characteristic function `L^k_j(u)` of block `j`.
pub fn local_cf(
    incs: &IncrementSeries,
    geom: &BlockGeometry,
    j: usize,
    u: f64,
    variant: Variant,
) -> Result<f64> {
    if j >= geom.m_n {
        return Err(Error::BlockOutOfRange { j, m_n: geom.m_n });
    }
    check_u(u)?;
    Ok(local_cf_unchecked(
        incs,
        geom.k_n,
        j,
        u / incs.delta().sqrt(),
        variant,
    ))
}

#[inline]
fn local_cf_unchecked(
    incs: &IncrementSeries,
    k_n: usize,
    j: usize,
    scaled_u: f64,
    variant: Variant,
) -> f64 {
    let x = incs.as_slice();
    let base = 2 * j * k_n;
    let mut acc = 0.0;
    for l in 1..k_n {
        // x is 0-based, so Δ_i X = x[i - 1]
        let d = match variant {
            Variant::Aligned => x[base + 2 * l] - x[base + 2 * l - 1],
            Variant::Shifted => x[base + 2 * l - 1] - x[base + 2 * l - 2],
        };
        acc += (scaled_u * d).cos();
    }
    acc / (k_n - 1) as f64
}

/// Local spot variance `-log(max(L, 1/sqrt(k_n))) / u^2`, and whether the floor was hit.
pub fn local_spot(l: f64, u: f64, k_n: usize) -> (f64, bool) {
    let floor = 1.0 / (k_n as f64).sqrt();
    let floored = l <= floor;
    let c = -l.max(floor).ln() / (u * u);
    (c, floored)
}

/// Small-sample correction `sinh(u^2 c)^2 / (u^2 (k_n - 1))`.
#[inline]
pub fn sinh_correction(c: f64, u: f64, k_n: usize) -> f64 {
    let u2 = u * u;
    (u2 * c).sinh().powi(2) / (u2 * (k_n - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBlockEstimate {
    pub j: usize,
    pub l: f64,
    pub c: f64,
    pub variant: Variant,
    pub floored: bool,
}

impl LocalBlockEstimate {
    pub fn corrected(&self, u: f64, k_n: usize) -> f64 {
        self.c - sinh_correction(self.c, u, k_n)
    }
}

/// Bias-corrected integrated volatility estimate `Ĉ_k(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvEstimate {
    pub c_hat: f64,
    pub variant: Variant,
    pub u: f64,
    pub geometry: BlockGeometry,
    pub blocks: Vec<LocalBlockEstimate>,
    pub correction_total: f64,
}

impl IvEstimate {
    /// `2 v_n Σ_j (c_j - correction_j)` from the stored blocks.
    pub fn recompute(&self) -> f64 {
        let k = self.geometry.k_n;
        2.0 * self.geometry.v_n
            * compensated_sum(self.blocks.iter().map(|b| b.corrected(self.u, k)))
    }

    /// `2 v_n Σ_j (c_j - correction_j)^2`, the per-variant variance term.
    pub fn sum_of_squares(&self) -> f64 {
        let k = self.geometry.k_n;
        2.0 * self.geometry.v_n
            * compensated_sum(self.blocks.iter().map(|b| b.corrected(self.u, k).powi(2)))
    }

    pub fn floored_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.floored).count()
    }
}

pub fn integrated_vol(
    incs: &IncrementSeries,
    geom: &BlockGeometry,
    u: f64,
    variant: Variant,
) -> Result<IvEstimate> {
    check_u(u)?;
    if geom.used_increments > incs.len() {
        return Err(Error::InsufficientData {
            n: incs.len(),
            k_n: geom.k_n,
        });
    }
    let k_n = geom.k_n;
    let scaled_u = u / incs.delta().sqrt();
    let blocks: Vec<LocalBlockEstimate> = (0..geom.m_n)
        .map(|j| {
            let l = local_cf_unchecked(incs, k_n, j, scaled_u, variant);
            let (c, floored) = local_spot(l, u, k_n);
            LocalBlockEstimate {
                j,
                l,
                c,
                variant,
                floored,
            }
        })
        .collect();
    let correction_total = compensated_sum(blocks.iter().map(|b| sinh_correction(b.c, u, k_n)));
    let mut est = IvEstimate {
        c_hat: 0.0,
        variant,
        u,
        geometry: *geom,
        blocks,
        correction_total,
    };
    est.c_hat = est.recompute();
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub i_hat: f64,
    pub i_hat_0: f64,
    pub i_hat_1: f64,
}

impl VarianceEstimate {
    /// Combines the two variants' estimates computed at the same `u`.
    pub fn from_estimates(aligned: &IvEstimate, shifted: &IvEstimate) -> Self {
        let i_hat_0 = aligned.sum_of_squares();
        let i_hat_1 = shifted.sum_of_squares();
        Self {
            i_hat: (i_hat_0 + i_hat_1) / 2.0,
            i_hat_0,
            i_hat_1,
        }
    }
}

/// Estimate `Î_n` of the integrated quarticity `∫ c_s^2 ds`.
pub fn variance_estimate(
    incs: &IncrementSeries,
    geom: &BlockGeometry,
    u: f64,
) -> Result<VarianceEstimate> {
    let a = integrated_vol(incs, geom, u, Variant::Aligned)?;
    let s = integrated_vol(incs, geom, u, Variant::Shifted)?;
    Ok(VarianceEstimate::from_estimates(&a, &s))
}

/// Bipower variation `(π/2) Σ |Δ_i X| |Δ_{i+1} X|`.
pub fn bipower_variation(incs: &IncrementSeries) -> Result<f64> {
    let x = incs.as_slice();
    if x.len() < 2 {
        return Err(Error::NeedTwoIncrements);
    }
    Ok(FRAC_PI_2 * compensated_sum(x.windows(2).map(|w| (w[0] * w[1]).abs())))
}

/// `χ(β) = ∫_0^∞ y^{-β} sin y dy = Γ(1-β) cos(πβ/2)`, with `χ(1) = π/2`.
pub fn chi(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::ChiUndefined(beta));
    }
    if beta == 1.0 {
        return Ok(FRAC_PI_2);
    }
    Ok(gamma(1.0 - beta) * (PI * beta / 2.0).cos())
}

const DEGENERATE_TOL: f64 = 1e-12;

/// `(Ĉ_0(2u) - Ĉ_0(u)) / Ĉ_0(u)`: near 0 with a Brownian part, near `2^{β-2} - 1` without.
pub fn ratio_diagnostic(incs: &IncrementSeries, geom: &BlockGeometry, u: f64) -> Result<f64> {
    let base = integrated_vol(incs, geom, u, Variant::Aligned)?.c_hat;
    let doubled = integrated_vol(incs, geom, 2.0 * u, Variant::Aligned)?.c_hat;
    ratio_from(base, doubled)
}

pub(crate) fn ratio_from(base: f64, doubled: f64) -> Result<f64> {
    if !(base.abs() > DEGENERATE_TOL) {
        return Err(Error::DegenerateDenominator);
    }
    Ok((doubled - base) / base)
}

/// Additive jump bias of `Ĉ_0(u)` for simulated data with constant jump
/// scale `s` and a standard symmetric stable driver:
/// `2 s^β u^{β-2} Δ^{1-β/2} T`.
pub fn a0_bias_oracle(beta: f64, jump_scale: f64, u: f64, delta: f64, t_end: f64) -> f64 {
    2.0 * jump_scale.abs().powf(beta) * u.powf(beta - 2.0) * delta.powf(1.0 - beta / 2.0) * t_end
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{block_geometry, make_path};
    use proptest::prelude::*;

    fn geom_for(incs: &IncrementSeries, k_n: usize) -> BlockGeometry {
        block_geometry(incs.len(), k_n, incs.delta()).unwrap()
    }

    #[test]
    fn linear_path_has_unit_cf_and_zero_estimates() {
        let vals: Vec<f64> = (0..=200).map(|i| 0.003 * i as f64).collect();
        let incs = make_path(1.0, &vals).unwrap().increments();
        let g = geom_for(&incs, 10);
        for j in 0..g.m_n {
            for v in [Variant::Aligned, Variant::Shifted] {
                assert_eq!(local_cf(&incs, &g, j, 0.7, v).unwrap(), 1.0);
            }
        }
        assert_eq!(
            integrated_vol(&incs, &g, 0.7, Variant::Aligned)
                .unwrap()
                .c_hat,
            0.0
        );
        let v = variance_estimate(&incs, &g, 0.7).unwrap();
        assert_eq!((v.i_hat, v.i_hat_0, v.i_hat_1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn small_u_gives_unit_cf() {
        let vals = [0.0, 0.3, -0.2, 0.5, 0.1, 0.9, -0.4, 0.2, 0.0];
        let incs = make_path(1.0, &vals).unwrap().increments();
        let g = geom_for(&incs, 2);
        let l = local_cf(&incs, &g, 0, 1e-9, Variant::Aligned).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn toy_block() {
        // Δ = 1, k_n = 2: the only term pairs Δ_3 and Δ_2.
        let (a, b, c) = (0.4, -0.1, 0.7);
        let incs = IncrementSeries::from_raw(vec![a, b, c, 0.25], 1.0).unwrap();
        let g = geom_for(&incs, 2);
        assert_eq!(
            local_cf(&incs, &g, 0, 1.0, Variant::Aligned).unwrap(),
            (c - b).cos()
        );
        assert_eq!(
            local_cf(&incs, &g, 0, 1.0, Variant::Shifted).unwrap(),
            (b - a).cos()
        );
        assert_eq!(
            local_cf(&incs, &g, 1, 1.0, Variant::Aligned),
            Err(Error::BlockOutOfRange { j: 1, m_n: 1 })
        );
    }

    #[test]
    fn local_spot_cases() {
        assert_eq!(local_spot(1.0, 0.5, 78), (0.0, false));
        let (c, floored) = local_spot(-0.3, 1.0, 100);
        assert!(floored);
        assert!((c - std::f64::consts::LN_10).abs() < 1e-12);
        let (c, floored) = local_spot((-0.25f64).exp(), 0.5, 78);
        assert!(!floored);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_block_by_hand() {
        // n = 4, k_n = 2, Δ = 1/4
        let x = [0.0, 0.05, -0.02, 0.04, 0.01];
        let incs = make_path(1.0, &x).unwrap().increments();
        let g = geom_for(&incs, 2);
        let u = 0.8;
        let d = 0.25f64;
        let l0 = (u * ((x[3] - x[2]) - (x[2] - x[1])) / d.sqrt()).cos();
        let c0 = -l0.max(1.0 / 2f64.sqrt()).ln() / (u * u);
        let expected = 2.0 * 2.0 * d * (c0 - (u * u * c0).sinh().powi(2) / (u * u));
        let got = integrated_vol(&incs, &g, u, Variant::Aligned).unwrap();
        assert!((got.c_hat - expected).abs() < 1e-15);
        assert_eq!(got.c_hat, got.recompute());
    }

    #[test]
    fn bipower_cases() {
        let incs = IncrementSeries::from_raw(vec![0.2, -0.2, 0.2, 0.2, -0.2], 0.2).unwrap();
        let bv = bipower_variation(&incs).unwrap();
        assert!((bv - FRAC_PI_2 * 4.0 * 0.04).abs() < 1e-15);
        let flipped = IncrementSeries::from_raw(vec![-0.2, 0.2, -0.2, -0.2, 0.2], 0.2).unwrap();
        assert_eq!(bipower_variation(&flipped).unwrap(), bv);
        let one = IncrementSeries::from_raw(vec![0.1], 1.0).unwrap();
        assert_eq!(bipower_variation(&one), Err(Error::NeedTwoIncrements));
    }

    #[test]
    fn chi_domain_and_values() {
        assert_eq!(chi(1.0).unwrap(), FRAC_PI_2);
        assert!((chi(1.5).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-10);
        assert!((chi(0.5).unwrap() - (PI / 2.0).sqrt()).abs() < 1e-10);
        assert!(chi(2.0).is_err());
        assert!(chi(0.0).is_err());
    }

    #[test]
    fn ratio_limits() {
        assert_eq!(2f64.powf(2.0 - 2.0) - 1.0, 0.0);
        let flat = IncrementSeries::from_raw(vec![0.0; 40], 0.025).unwrap();
        let g = geom_for(&flat, 4);
        assert_eq!(
            ratio_diagnostic(&flat, &g, 0.3),
            Err(Error::DegenerateDenominator)
        );
    }

    #[test]
    fn a0_oracle_cases() {
        assert_eq!(a0_bias_oracle(1.5, 0.0, 0.3, 1e-3, 1.0), 0.0);
        // At beta = 2 the bias no longer depends on u or delta.
        let a = a0_bias_oracle(2.0, 0.5, 0.3, 1e-3, 1.0);
        let b = a0_bias_oracle(2.0, 0.5, 0.9, 1e-5, 1.0);
        assert!((a - b).abs() < 1e-15);
        assert!((a - 0.5).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    fn arb_incs() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-0.05f64..0.05, 16..200)
    }

    proptest! {
        #[test]
        fn spot_bounds(incs in arb_incs(), k in 2usize..8, u in 0.05f64..3.0) {
            let s = IncrementSeries::from_raw(incs, 1.0 / 200.0).unwrap();
            prop_assume!(s.len() >= 2 * k);
            let g = geom_for(&s, k);
            let upper = (k as f64).ln() / (2.0 * u * u);
            for v in [Variant::Aligned, Variant::Shifted] {
                let est = integrated_vol(&s, &g, u, v).unwrap();
                for b in &est.blocks {
                    prop_assert!(b.l >= -1.0 && b.l <= 1.0);
                    prop_assert!(b.c >= 0.0 && b.c <= upper * (1.0 + 1e-12));
                }
                prop_assert_eq!(est.c_hat, est.recompute());
            }
            let var = variance_estimate(&s, &g, u).unwrap();
            prop_assert!(var.i_hat >= 0.0 && var.i_hat_0 >= 0.0 && var.i_hat_1 >= 0.0);
            prop_assert_eq!(var.i_hat, (var.i_hat_0 + var.i_hat_1) / 2.0);
            prop_assert!(bipower_variation(&s).unwrap() >= 0.0);
        }
    }
}

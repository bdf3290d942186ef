//! Tuning rules, the studentized statistic and the rejection decision.
//!
//! The statistic compares the aligned and shifted integrated volatility
//! estimates at the same argument `u_n`:
//!
//! ```text
//! T_n       = (Ĉ_0 - Ĉ_1 - γ_n sqrt(Δ_n)) / Ĉ_1
//! script_T  = (Ĉ_0 - Ĉ_1 - γ_n sqrt(Δ_n)) / (2 sqrt(Î_n) sqrt(Δ_n))
//! ```
//!
//! and rejects "a Brownian component is present" when `script_T < -z_α`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::paths::{BlockGeometry, IncrementSeries, PricePath};
use crate::rcf::{
    bipower_variation, integrated_vol, ratio_from, IvEstimate, VarianceEstimate, Variant,
};

pub const DEFAULT_C: f64 = 0.18;
pub const DEFAULT_C_STAR: f64 = 0.2;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Relative slack on `log(u^2 / Δ)` below which `γ_n` is treated as undefined.
const GAMMA_LOG_EPS: f64 = 1e-9;

/// Block half-size used when none is given.
///
/// The three sample sizes of the reference simulation design use their
/// published values; anything else uses `round(1.61 sqrt(n))`.
pub fn default_k_n(n: usize) -> Result<usize> {
    if n < 8 {
        return Err(Error::TooFewObservations(n));
    }
    let k = match n {
        1170 => 50,
        2340 => 78,
        4680 => 100,
        _ => (1.61 * (n as f64).sqrt()).round() as usize,
    };
    Ok(k.clamp(2, n / 2))
}

/// `u_n = c (log(1/Δ_n))^{-1/30} BV_T^{-1/2}`.
pub fn select_u_n(path: &PricePath, c: f64) -> Result<f64> {
    let bv = bipower_variation(&path.increments())?;
    u_n_from_bv(bv, path.delta(), c)
}

pub fn u_n_from_bv(bv: f64, delta: f64, c: f64) -> Result<f64> {
    if !(bv > 0.0) {
        return Err(Error::ZeroBipower);
    }
    Ok(c * (1.0 / delta).ln().powf(-1.0 / 30.0) / bv.sqrt())
}

/// `γ_n = c* / log(u_n^2 / Δ_n)`.
pub fn select_gamma_n(u_n: f64, delta: f64, c_star: f64) -> Result<f64> {
    let log_ratio = (u_n * u_n / delta).ln();
    if !(log_ratio > GAMMA_LOG_EPS) {
        return Err(Error::GammaUndefined { u: u_n, delta });
    }
    Ok(c_star / log_ratio)
}

/// Upper-tail standard normal quantile `z_α` with `P(N(0,1) > z_α) = α`.
pub fn z_alpha(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    pub k_n: usize,
    pub u_n: f64,
    pub gamma_n: f64,
    pub alpha: f64,
    /// Constant in the `u_n` rule.
    pub c: f64,
    /// Constant in the `γ_n` rule.
    pub c_star: f64,
}

impl TuningParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_n < 2 {
            return Err(Error::InvalidConfig(format!(
                "k_n must be >= 2, got {}",
                self.k_n
            )));
        }
        if !(self.u_n.is_finite() && self.u_n > 0.0) {
            return Err(Error::InvalidArgument(self.u_n));
        }
        if !(self.gamma_n.is_finite() && self.gamma_n >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma_n must be >= 0, got {}",
                self.gamma_n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// How to derive [`TuningParams`] from a path. `None` fields use the data-driven rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningRule {
    pub k_n: Option<usize>,
    pub u_n: Option<f64>,
    pub c: f64,
    pub c_star: f64,
    pub alpha: f64,
}

impl Default for TuningRule {
    fn default() -> Self {
        Self {
            k_n: None,
            u_n: None,
            c: DEFAULT_C,
            c_star: DEFAULT_C_STAR,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl TuningRule {
    pub fn select(&self, path: &PricePath) -> Result<TuningParams> {
        let k_n = match self.k_n {
            Some(k) => k,
            None => default_k_n(path.n())?,
        };
        let u_n = match self.u_n {
            Some(u) => u,
            None => select_u_n(path, self.c)?,
        };
        let params = TuningParams {
            k_n,
            u_n,
            gamma_n: select_gamma_n(u_n, path.delta(), self.c_star)?,
            alpha: self.alpha,
            c: self.c,
            c_star: self.c_star,
        };
        params.validate()?;
        Ok(params)
    }
}

/// The studentized statistic from its ingredients.
#[inline]
pub fn studentize(c_hat_0: f64, c_hat_1: f64, i_hat: f64, gamma_n: f64, delta: f64) -> f64 {
    let sqrt_delta = delta.sqrt();
    (c_hat_0 - c_hat_1 - gamma_n * sqrt_delta) / (2.0 * i_hat.sqrt() * sqrt_delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `(Ĉ_0(2u) - Ĉ_0(u)) / Ĉ_0(u)`, absent when `Ĉ_0(u)` vanishes.
    pub ratio: Option<f64>,
    pub bv: f64,
    /// Blocks whose local CF hit the `1/sqrt(k_n)` floor, both variants.
    pub floored_blocks: usize,
    /// `Ĉ_1 <= 0`, so `t_n` is not meaningful.
    pub t_n_unreliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub c_hat_0: f64,
    pub c_hat_1: f64,
    pub i_hat: f64,
    pub t_n: f64,
    pub script_t: f64,
    pub z_alpha: f64,
    pub reject: bool,
    pub delta: f64,
    pub n: usize,
    pub tuning: TuningParams,
    pub diagnostics: Diagnostics,
}

pub const CSV_HEADER: &str =
    "c_hat_0,c_hat_1,i_hat,t_n,script_t,reject,u_n,k_n,gamma_n,alpha,z_alpha,n,delta,ratio,bv,floored_blocks";

impl TestResult {
    /// Recomputes `script_t` from the stored fields.
    pub fn reconstructed_script_t(&self) -> f64 {
        studentize(
            self.c_hat_0,
            self.c_hat_1,
            self.i_hat,
            self.tuning.gamma_n,
            self.delta,
        )
    }

    pub fn to_csv_row(&self) -> String {
        let ratio = self
            .diagnostics
            .ratio
            .map(|r| r.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.c_hat_0,
            self.c_hat_1,
            self.i_hat,
            self.t_n,
            self.script_t,
            self.reject,
            self.tuning.u_n,
            self.tuning.k_n,
            self.tuning.gamma_n,
            self.tuning.alpha,
            self.z_alpha,
            self.n,
            self.delta,
            ratio,
            self.diagnostics.bv,
            self.diagnostics.floored_blocks
        )
    }

    /// Flat JSON document with the fixed field names.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "c_hat_0": self.c_hat_0,
            "c_hat_1": self.c_hat_1,
            "i_hat": self.i_hat,
            "t_n": self.t_n,
            "script_t": self.script_t,
            "reject": self.reject,
            "u_n": self.tuning.u_n,
            "k_n": self.tuning.k_n,
            "gamma_n": self.tuning.gamma_n,
            "alpha": self.tuning.alpha,
            "z_alpha": self.z_alpha,
            "n": self.n,
            "delta": self.delta,
            "diagnostics": {
                "ratio": self.diagnostics.ratio,
                "bv": self.diagnostics.bv,
                "floored_blocks": self.diagnostics.floored_blocks,
                "t_n_unreliable": self.diagnostics.t_n_unreliable,
            },
        })
    }
}

/// Runs the test on a path with fully specified tuning.
pub fn run_test(path: &PricePath, tuning: &TuningParams) -> Result<TestResult> {
    run_test_on_increments(&path.increments(), tuning)
}

pub fn run_test_on_increments(incs: &IncrementSeries, tuning: &TuningParams) -> Result<TestResult> {
    tuning.validate()?;
    let delta = incs.delta();
    let geom = BlockGeometry::new(incs.len(), tuning.k_n, delta)?;
    let u = tuning.u_n;
    let aligned = integrated_vol(incs, &geom, u, Variant::Aligned)?;
    let shifted = integrated_vol(incs, &geom, u, Variant::Shifted)?;
    let variance = VarianceEstimate::from_estimates(&aligned, &shifted);
    assemble(incs, &geom, tuning, &aligned, &shifted, &variance)
}

fn assemble(
    incs: &IncrementSeries,
    geom: &BlockGeometry,
    tuning: &TuningParams,
    aligned: &IvEstimate,
    shifted: &IvEstimate,
    variance: &VarianceEstimate,
) -> Result<TestResult> {
    let i_hat = variance.i_hat;
    if !(i_hat > 0.0) {
        return Err(Error::DegenerateVariance(i_hat));
    }
    let delta = incs.delta();
    let (c0, c1) = (aligned.c_hat, shifted.c_hat);
    let numerator = c0 - c1 - tuning.gamma_n * delta.sqrt();
    let script_t = studentize(c0, c1, i_hat, tuning.gamma_n, delta);
    let z = z_alpha(tuning.alpha);
    let doubled = integrated_vol(incs, geom, 2.0 * tuning.u_n, Variant::Aligned)?.c_hat;
    let bv = bipower_variation(incs)?;
    Ok(TestResult {
        c_hat_0: c0,
        c_hat_1: c1,
        i_hat,
        t_n: numerator / c1,
        script_t,
        z_alpha: z,
        reject: script_t < -z,
        delta,
        n: incs.len(),
        tuning: *tuning,
        diagnostics: Diagnostics {
            ratio: ratio_from(c0, doubled).ok(),
            bv,
            floored_blocks: aligned.floored_blocks() + shifted.floored_blocks(),
            t_n_unreliable: !(c1 > 0.0),
        },
    })
}

/// Tunes from the data with `rule`, then runs the test.
pub fn run_tuned(path: &PricePath, rule: &TuningRule) -> Result<TestResult> {
    let tuning = rule.select(path)?;
    run_test(path, &tuning)
}

/// `{0.01, 0.02, ..., 1.00}`.
pub fn default_scan_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 100.0).collect()
}

/// Parses `start:end:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidConfig(format!("bad grid '{spec}', expected start:end:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(start > 0.0 && end >= start && step > 0.0 && start.is_finite() && end.is_finite()) {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    // Round to the step's decimal resolution so that e.g. 0.07 prints as 0.07.
    Ok((0..count)
        .map(|i| {
            let v = start + i as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub u: f64,
    pub gamma_n: Option<f64>,
    /// `None` where `γ_n` is undefined or `Î_n` vanishes.
    pub script_t: Option<f64>,
}

/// Recomputes the studentized statistic for every `u` in `grid`, with
/// `γ_n` re-derived from each `u` and `k_n` held fixed.
pub fn u_scan(path: &PricePath, k_n: usize, c_star: f64, grid: &[f64]) -> Result<Vec<ScanPoint>> {
    u_scan_increments(&path.increments(), k_n, c_star, grid)
}

pub fn u_scan_increments(
    incs: &IncrementSeries,
    k_n: usize,
    c_star: f64,
    grid: &[f64],
) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::EmptyScanGrid);
    }
    if let Some(&bad) = grid.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
        return Err(Error::InvalidArgument(bad));
    }
    let geom = BlockGeometry::new(incs.len(), k_n, incs.delta())?;
    let delta = incs.delta();
    Ok(grid
        .par_iter()
        .map(|&u| {
            let gamma_n = select_gamma_n(u, delta, c_star).ok();
            let script_t = gamma_n.and_then(|g| {
                let a = integrated_vol(incs, &geom, u, Variant::Aligned).ok()?;
                let s = integrated_vol(incs, &geom, u, Variant::Shifted).ok()?;
                let v = VarianceEstimate::from_estimates(&a, &s);
                (v.i_hat > 0.0).then(|| studentize(a.c_hat, s.c_hat, v.i_hat, g, delta))
            });
            ScanPoint {
                u,
                gamma_n,
                script_t,
            }
        })
        .collect())
}

//! Seeded simulation of the stochastic-volatility-plus-stable-jumps model
//!
//! ```text
//! dX_t = sqrt(c_t) dW_t + s dY_t
//! dc_t = kappa (theta - c_t) dt + xi sqrt(c_t) dW'_t,   corr(dW, dW') = rho
//! ```
//!
//! where `Y` is symmetric beta-stable with `E[exp(i u Y_1)] = exp(-|u|^beta)`.
//! Both SDEs are discretised with one Euler step per observation interval,
//! using full truncation for the variance.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::paths::PricePath;

/// Which variance process drives the continuous part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// CIR variance on `[0, 3T/4)`, identically zero afterwards.
    H0Partial,
    /// CIR variance on all of `[0, T]`.
    H0Full,
    /// No Brownian component.
    H1,
    /// Constant spot variance.
    ConstVol(f64),
}

impl Scenario {
    /// True when the path has a nonzero continuous martingale part.
    pub fn is_null(&self) -> bool {
        match self {
            Scenario::H0Partial | Scenario::H0Full => true,
            Scenario::H1 => false,
            Scenario::ConstVol(v) => *v > 0.0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::H0Partial => f.write_str("h0_partial"),
            Scenario::H0Full => f.write_str("h0_full"),
            Scenario::H1 => f.write_str("h1"),
            Scenario::ConstVol(v) => write!(f, "const_vol:{v}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "h0_partial" | "h0" => Ok(Scenario::H0Partial),
            "h0_full" => Ok(Scenario::H0Full),
            "h1" => Ok(Scenario::H1),
            _ => {
                let var = lower
                    .strip_prefix("const_vol:")
                    .or_else(|| lower.strip_prefix("const_vol="))
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario '{s}'")))?;
                let v: f64 = var
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad constant variance in '{s}'")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "constant variance must be >= 0, got {v}"
                    )));
                }
                Ok(Scenario::ConstVol(v))
            }
        }
    }
}

impl Serialize for Scenario {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Full description of the data-generating process.
///
/// Defaults reproduce the simulation design with one trading day,
/// `n = 2340`, beta = 1.2 and jump scale 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub t_end: f64,
    pub beta: f64,
    pub jump_scale: f64,
    pub cir_kappa: f64,
    pub cir_theta: f64,
    pub cir_xi: f64,
    pub c0: f64,
    pub rho: f64,
    pub scenario: Scenario,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 2340,
            t_end: 1.0,
            beta: 1.2,
            jump_scale: 0.5,
            cir_kappa: 0.03,
            cir_theta: 1.0,
            cir_xi: 0.15,
            c0: 1.0,
            rho: -0.5,
            scenario: Scenario::H0Partial,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.beta > 0.0 && self.beta <= 2.0) {
            return Err(Error::InvalidStabilityIndex(self.beta));
        }
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.jump_scale.is_finite() && self.jump_scale >= 0.0) {
            return bad(format!("jump_scale must be >= 0, got {}", self.jump_scale));
        }
        for (name, v) in [
            ("cir_kappa", self.cir_kappa),
            ("cir_theta", self.cir_theta),
            ("cir_xi", self.cir_xi),
            ("c0", self.c0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.rho.abs() <= 1.0) {
            return bad(format!("|rho| must be <= 1, got {}", self.rho));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.t_end / self.n as f64
    }

    /// Parses a TOML document of `key = value` lines; missing keys take defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig serializes to TOML")
    }
}

/// A master seed plus a replication stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub master: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }
}

/// Chambers-Mallows-Stuck transform of `u ~ U(-π/2, π/2)` and `e ~ Exp(1)`
/// into a symmetric stable variate with characteristic function `exp(-|s|^beta)`.
pub fn stable_draw(beta: f64, u: f64, e: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::InvalidStabilityIndex(beta));
    }
    Ok(cms(beta, u, e))
}

#[inline]
fn cms(beta: f64, u: f64, e: f64) -> f64 {
    if beta == 1.0 {
        return u.tan();
    }
    let a = (beta * u).sin() / u.cos().powf(1.0 / beta);
    let b = (((1.0 - beta) * u).cos() / e).powf((1.0 - beta) / beta);
    a * b
}

fn open_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return (v - 0.5) * std::f64::consts::PI;
        }
    }
}

fn positive_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let e: f64 = rng.sample(Exp1);
        if e > 0.0 {
            return e;
        }
    }
}

/// Draws one standard symmetric stable variate.
pub fn sample_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = open_angle(rng);
    debug_assert!(u.abs() < FRAC_PI_2);
    let e = positive_exp(rng);
    cms(beta, u, e)
}

/// Simulated path together with the spot variance used to generate it.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub path: PricePath,
    /// `c_{t_0}, ..., c_{t_n}`.
    pub variance: Vec<f64>,
}

/// Per-step driving noise. Drawn in the same order for every scenario so
/// that configs differing only in scenario share jump and Brownian noise.
struct StepNoise {
    z: f64,
    z_perp: f64,
    stable_u: f64,
    stable_e: f64,
}

impl StepNoise {
    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            z: rng.sample(StandardNormal),
            z_perp: rng.sample(StandardNormal),
            stable_u: open_angle(rng),
            stable_e: positive_exp(rng),
        }
    }
}

fn killed(cfg: &SimConfig, i: usize) -> bool {
    // t_i >= 3T/4  <=>  4 i >= 3 n
    match cfg.scenario {
        Scenario::H0Partial => 4 * i >= 3 * cfg.n,
        _ => false,
    }
}

/// Simulates price and variance jointly.
pub fn simulate(cfg: &SimConfig, seed: Seed) -> Result<SimulatedPath> {
    cfg.validate()?;
    let n = cfg.n;
    let delta = cfg.delta();
    let sqrt_dt = delta.sqrt();
    let jump_mult = cfg.jump_scale * delta.powf(1.0 / cfg.beta);
    let rho_perp = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let mut rng = seed.rng();

    let mut x = Vec::with_capacity(n + 1);
    let mut c = Vec::with_capacity(n + 1);
    x.push(0.0);
    c.push(match cfg.scenario {
        Scenario::H1 => 0.0,
        Scenario::ConstVol(v) => v,
        _ => cfg.c0,
    });

    for i in 0..n {
        let noise = StepNoise::draw(&mut rng);
        let c_pos = c[i].max(0.0);
        let dw = sqrt_dt * noise.z;
        let jump = if cfg.jump_scale > 0.0 {
            jump_mult * cms(cfg.beta, noise.stable_u, noise.stable_e)
        } else {
            0.0
        };
        x.push(x[i] + c_pos.sqrt() * dw + jump);

        let next = match cfg.scenario {
            Scenario::H1 => 0.0,
            Scenario::ConstVol(v) => v,
            Scenario::H0Partial | Scenario::H0Full => {
                if killed(cfg, i + 1) {
                    0.0
                } else {
                    let dw_vol = cfg.rho * dw + rho_perp * sqrt_dt * noise.z_perp;
                    c[i] + cfg.cir_kappa * (cfg.cir_theta - c_pos) * delta
                        + cfg.cir_xi * c_pos.sqrt() * dw_vol
                }
            }
        };
        c.push(next);
    }

    Ok(SimulatedPath {
        path: PricePath::new(cfg.t_end, x)?,
        variance: c,
    })
}

/// Spot-variance path `c_{t_0..t_n}`.
pub fn simulate_cir(cfg: &SimConfig, seed: Seed) -> Result<Vec<f64>> {
    Ok(simulate(cfg, seed)?.variance)
}

/// Log-price path `X_{t_0..t_n}` with `X_{t_0} = 0`.
pub fn generate_path(cfg: &SimConfig, seed: Seed) -> Result<PricePath> {
    Ok(simulate(cfg, seed)?.path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(scenario: Scenario) -> SimConfig {
        SimConfig {
            scenario,
            ..SimConfig::default()
        }
    }

    fn sample_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2))
    }

    #[test]
    fn cms_special_cases() {
        assert_eq!(stable_draw(1.0, 0.0, 1.0).unwrap(), 0.0);
        for &(u, e) in &[(0.3, 0.7), (-1.2, 2.5), (1.5, 0.01)] {
            let s = stable_draw(2.0, u, e).unwrap();
            assert!((s - 2.0 * f64::sin(u) * f64::sqrt(e)).abs() < 1e-12);
        }
        assert!(matches!(
            stable_draw(2.5, 0.1, 1.0),
            Err(Error::InvalidStabilityIndex(_))
        ));
        assert!(stable_draw(0.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn gaussian_limit_has_variance_two() {
        let mut rng = Seed::new(1, 0).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| sample_stable(2.0, &mut rng)).collect();
        let (_, var, _, _) = sample_moments(&xs);
        assert!((var - 2.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn stable_median_and_cf_exponent() {
        let beta = 1.5;
        let mut rng = Seed::new(7, 3).rng();
        let mut xs: Vec<f64> = (0..100_000)
            .map(|_| sample_stable(beta, &mut rng))
            .collect();
        // log(-log|ECF(s)|) = beta log s when the CF is exp(-|s|^beta)
        let pts: Vec<(f64, f64)> = [0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&s: &f64| {
                let re = xs.iter().map(|x| (s * x).cos()).sum::<f64>() / xs.len() as f64;
                let im = xs.iter().map(|x| (s * x).sin()).sum::<f64>() / xs.len() as f64;
                (s.ln(), (-(re.hypot(im)).ln()).ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 5.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 5.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - beta).abs() < 0.05, "slope = {slope}");
        // scale: intercept ~ 0
        assert!((my - beta * mx).abs() < 0.05);

        xs.sort_by(f64::total_cmp);
        let median = 0.5 * (xs[49_999] + xs[50_000]);
        assert!(median.abs() < 0.02, "median = {median}");
    }

    #[test]
    fn stable_skewness_small() {
        for &beta in &[1.3, 1.6, 1.9] {
            let mut rng = Seed::new(11, (beta * 10.0) as u64).rng();
            // Skewness of a stable law is undefined; check it on a clipped
            // sample, which is symmetric iff the law is.
            let xs: Vec<f64> = (0..100_000)
                .map(|_| sample_stable(beta, &mut rng).clamp(-5.0, 5.0))
                .collect();
            let (_, _, skew, _) = sample_moments(&xs);
            assert!(skew.abs() < 0.1, "beta={beta} skew={skew}");
        }
    }

    proptest! {
        #[test]
        fn cms_is_odd(beta in 0.05f64..=2.0, u in -1.5f64..1.5, e in 0.01f64..10.0) {
            let a = stable_draw(beta, u, e).unwrap();
            let b = stable_draw(beta, -u, e).unwrap();
            prop_assert_eq!(a, -b);
        }
    }

    #[test]
    fn cir_fixed_point() {
        let c = SimConfig {
            cir_xi: 0.0,
            c0: 1.0,
            cir_theta: 1.0,
            scenario: Scenario::H0Full,
            ..SimConfig::default()
        };
        assert!(simulate_cir(&c, Seed::new(3, 0))
            .unwrap()
            .iter()
            .all(|&v| v == 1.0));
    }

    #[test]
    fn h1_variance_is_zero_and_partial_is_killed() {
        let v = simulate_cir(&cfg(Scenario::H1), Seed::new(1, 1)).unwrap();
        assert!(v.iter().all(|&c| c == 0.0));

        let c = cfg(Scenario::H0Partial);
        let v = simulate_cir(&c, Seed::new(1, 2)).unwrap();
        for (i, &ci) in v.iter().enumerate() {
            if i as f64 * c.delta() >= 0.75 * c.t_end {
                assert_eq!(ci, 0.0, "i = {i}");
            }
        }
        assert!(v[..1755].iter().all(|&ci| ci > 0.0));
    }

    #[test]
    fn cir_mean_stays_at_long_run_level() {
        let c = cfg(Scenario::H0Full);
        let mut total = 0.0;
        let reps = 500;
        for r in 0..reps {
            let v = simulate_cir(&c, Seed::new(99, r)).unwrap();
            total += v.iter().sum::<f64>() / v.len() as f64;
        }
        let mean = total / reps as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean = {mean}");
    }

    #[test]
    fn zero_everything_gives_flat_path() {
        let c = SimConfig {
            jump_scale: 0.0,
            scenario: Scenario::ConstVol(0.0),
            ..SimConfig::default()
        };
        let p = generate_path(&c, Seed::new(5, 0)).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn brownian_quadratic_variation() {
        let c = SimConfig {
            jump_scale: 0.0,
            scenario: Scenario::ConstVol(1.0),
            ..SimConfig::default()
        };
        let reps = 200;
        let mean_rv = (0..reps)
            .map(|r| {
                let p = generate_path(&c, Seed::new(17, r)).unwrap();
                p.increments().as_slice().iter().map(|d| d * d).sum::<f64>()
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean_rv - 1.0).abs() < 0.1, "rv = {mean_rv}");
    }

    #[test]
    fn pure_jump_increments_are_heavy_tailed() {
        let c = SimConfig {
            beta: 1.5,
            scenario: Scenario::H1,
            ..SimConfig::default()
        };
        let mut incs = Vec::new();
        for r in 0..200 {
            let p = generate_path(&c, Seed::new(23, r)).unwrap();
            incs.extend_from_slice(p.increments().as_slice());
        }
        let (_, _, _, kurt) = sample_moments(&incs);
        assert!(kurt > 30.0, "kurtosis = {kurt}");
    }

    #[test]
    fn jump_term_scales_with_delta() {
        // Same noise, doubled n: each jump shrinks by 2^{-1/beta}.
        let beta = 1.4;
        let base = SimConfig {
            beta,
            scenario: Scenario::H1,
            n: 1000,
            ..SimConfig::default()
        };
        let fine = SimConfig {
            n: 2000,
            ..base.clone()
        };
        let a = generate_path(&base, Seed::new(8, 0)).unwrap().increments();
        let b = generate_path(&fine, Seed::new(8, 0)).unwrap().increments();
        let ratio = b.at(1) / a.at(1);
        assert!((ratio - 2f64.powf(-1.0 / beta)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(Scenario::H0Partial);
        let a = generate_path(&c, Seed::new(42, 9)).unwrap();
        let b = generate_path(&c, Seed::new(42, 9)).unwrap();
        assert_eq!(a, b);
        let d = generate_path(&c, Seed::new(42, 10)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = SimConfig {
            beta: 1.7,
            scenario: Scenario::ConstVol(0.25),
            ..SimConfig::default()
        };
        let text = c.to_toml_string();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), c);
        let partial = SimConfig::from_toml_str("beta = 1.5\nscenario = \"h1\"\n").unwrap();
        assert_eq!(partial.beta, 1.5);
        assert_eq!(partial.scenario, Scenario::H1);
        assert_eq!(partial.n, 2340);
        assert!(SimConfig::from_toml_str("beta = 2.5").is_err());
        assert!(SimConfig::from_toml_str("bogus = 1").is_err());
    }
}

//! Replication engine for empirical size and power.
//!
//! Replication `r` of a scenario draws its path from stream `r` of the
//! master seed, so results do not depend on how rayon schedules the work.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::jumptest::{
    run_tuned, TestResult, TuningRule, DEFAULT_ALPHA, DEFAULT_C, DEFAULT_C_STAR,
};
use crate::simulate::{generate_path, Scenario, Seed, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McScenario {
    pub sim: SimConfig,
    pub tuning: TuningRule,
    pub reps: usize,
    pub master_seed: u64,
}

impl Default for McScenario {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            tuning: TuningRule::default(),
            reps: 2000,
            master_seed: 42,
        }
    }
}

impl McScenario {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        self.sim.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: McScenario = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub scenario: McScenario,
    pub rejection_rate: f64,
    pub mc_stderr: f64,
    pub rejections: usize,
    /// Studentized statistics of the valid replications, in replication order.
    pub statistics: Vec<f64>,
    /// Full results of the valid replications, in replication order.
    pub results: Vec<TestResult>,
    pub failures: Vec<RepFailure>,
}

impl McSummary {
    pub fn valid_reps(&self) -> usize {
        self.statistics.len()
    }

    /// Mean of `f` over the valid replications.
    pub fn mean_of(&self, f: impl Fn(&TestResult) -> f64) -> f64 {
        self.results.iter().map(f).sum::<f64>() / self.results.len() as f64
    }
}

/// Runs `reps` independent replications; degenerate ones are reported, not counted.
pub fn run_scenario(scenario: &McScenario) -> Result<McSummary> {
    scenario.validate()?;
    let outcomes: Vec<Result<TestResult>> = (0..scenario.reps)
        .into_par_iter()
        .map(|r| {
            let path = generate_path(&scenario.sim, Seed::new(scenario.master_seed, r as u64))?;
            run_tuned(&path, &scenario.tuning)
        })
        .collect();

    let mut results = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(res) => results.push(res),
            Err(e) => failures.push(RepFailure {
                rep,
                reason: e.to_string(),
            }),
        }
    }
    if results.is_empty() {
        return Err(Error::NoValidStatistics(failures.len()));
    }
    let rejections = results.iter().filter(|r| r.reject).count();
    let valid = results.len() as f64;
    let p = rejections as f64 / valid;
    Ok(McSummary {
        scenario: scenario.clone(),
        rejection_rate: p,
        mc_stderr: (p * (1.0 - p) / valid).sqrt(),
        rejections,
        statistics: results.iter().map(|r| r.script_t).collect(),
        results,
        failures,
    })
}

/// One column of a size/power table: a sample size with its tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub n: usize,
    pub k_n: Option<usize>,
    pub c: f64,
}

impl TableColumn {
    pub fn label(&self) -> String {
        match self.k_n {
            Some(k) => format!("n={} (c={}, k_n={})", self.n, self.c, k),
            None => format!("n={} (c={})", self.n, self.c),
        }
    }
}

/// Layout and shared settings of a size/power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablePlan {
    pub betas: Vec<f64>,
    pub columns: Vec<TableColumn>,
    pub reps: usize,
    pub master_seed: u64,
    pub c_star: f64,
    pub alpha: f64,
    pub null_scenario: Scenario,
    /// Everything except `n`, `beta` and `scenario`, which each cell overrides.
    pub base: SimConfig,
}

impl Default for TablePlan {
    fn default() -> Self {
        Self::size_power(&table1_betas(), &[1170, 2340, 4680], 2000, 42)
    }
}

/// `1.0, 1.1, ..., 1.9`.
pub fn table1_betas() -> Vec<f64> {
    (10..20).map(|b| b as f64 / 10.0).collect()
}

impl TablePlan {
    /// Rows `betas`, columns `ns` with default tuning.
    pub fn size_power(betas: &[f64], ns: &[usize], reps: usize, master_seed: u64) -> Self {
        Self {
            betas: betas.to_vec(),
            columns: ns
                .iter()
                .map(|&n| TableColumn {
                    n,
                    k_n: None,
                    c: DEFAULT_C,
                })
                .collect(),
            reps,
            master_seed,
            c_star: DEFAULT_C_STAR,
            alpha: DEFAULT_ALPHA,
            null_scenario: Scenario::H0Partial,
            base: SimConfig::default(),
        }
    }

    /// Rows `betas`, columns the `(c, k_n)` pairs at a single `n`.
    pub fn sensitivity(
        betas: &[f64],
        n: usize,
        pairs: &[(f64, usize)],
        reps: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            columns: pairs
                .iter()
                .map(|&(c, k)| TableColumn { n, k_n: Some(k), c })
                .collect(),
            ..Self::size_power(betas, &[n], reps, master_seed)
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let plan: TablePlan = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.columns.is_empty() {
            return Err(Error::InvalidConfig("table grids must be nonempty".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be >= 1".into()));
        }
        Ok(())
    }

    fn cell_scenario(&self, beta: f64, col: &TableColumn, scenario: Scenario) -> McScenario {
        McScenario {
            sim: SimConfig {
                n: col.n,
                beta,
                scenario,
                ..self.base.clone()
            },
            tuning: TuningRule {
                k_n: col.k_n,
                u_n: None,
                c: col.c,
                c_star: self.c_star,
                alpha: self.alpha,
            },
            reps: self.reps,
            master_seed: self.master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub beta: f64,
    pub column: TableColumn,
    pub scenario: Scenario,
    pub summary: McSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerTable {
    pub plan: TablePlan,
    /// Row-major over `betas`, then columns, then `{null, H1}`.
    pub cells: Vec<TableCell>,
}

pub const TABLE_CSV_HEADER: &str = "beta,n,scenario,reps,reject_rate,stderr,failures,c,k_n";

impl SizePowerTable {
    pub fn cell(&self, beta: f64, column: usize, scenario: Scenario) -> Option<&TableCell> {
        let col = self.plan.columns.get(column)?;
        self.cells
            .iter()
            .find(|c| c.beta == beta && c.column == *col && c.scenario == scenario)
    }

    /// Long format, one line per (beta, column, scenario).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TABLE_CSV_HEADER);
        out.push('\n');
        for cell in &self.cells {
            let s = &cell.summary;
            let k = cell.column.k_n.map(|k| k.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                cell.beta,
                cell.column.n,
                cell.scenario,
                s.scenario.reps,
                s.rejection_rate,
                s.mc_stderr,
                s.failures.len(),
                cell.column.c,
                k
            )
            .unwrap();
        }
        out
    }

    /// Wide format: one row per beta, size columns then power columns.
    pub fn to_wide_csv(&self) -> String {
        let mut out = String::from("beta");
        for prefix in ["size", "power"] {
            for col in &self.plan.columns {
                match col.k_n {
                    Some(k) => write!(out, ",{prefix}_n{}_c{}_k{}", col.n, col.c, k).unwrap(),
                    None => write!(out, ",{prefix}_n{}", col.n).unwrap(),
                }
            }
        }
        out.push('\n');
        for &beta in &self.plan.betas {
            write!(out, "{beta}").unwrap();
            for scenario in [self.plan.null_scenario, Scenario::H1] {
                for i in 0..self.plan.columns.len() {
                    let rate = self
                        .cell(beta, i, scenario)
                        .map(|c| c.summary.rejection_rate);
                    match rate {
                        Some(r) => write!(out, ",{r:.4}").unwrap(),
                        None => out.push(','),
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every cell of the plan under both the null scenario and H1.
pub fn size_power_table(plan: &TablePlan) -> Result<SizePowerTable> {
    plan.validate()?;
    let mut cells = Vec::with_capacity(plan.betas.len() * plan.columns.len() * 2);
    for &beta in &plan.betas {
        for col in &plan.columns {
            for scenario in [plan.null_scenario, Scenario::H1] {
                let summary = run_scenario(&plan.cell_scenario(beta, col, scenario))?;
                cells.push(TableCell {
                    beta,
                    column: *col,
                    scenario,
                    summary,
                });
            }
        }
    }
    Ok(SizePowerTable {
        plan: plan.clone(),
        cells,
    })
}

/// Pairs sorted statistics with normal quantiles at `(i - 0.5) / N`.
pub fn qq_export(statistics: &[f64]) -> Result<Vec<(f64, f64)>> {
    if statistics.len() < 10 {
        return Err(Error::InsufficientQq(statistics.len()));
    }
    let mut sorted = statistics.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| (normal.inverse_cdf((i as f64 + 0.5) / n), x))
        .collect())
}

/// Pearson correlation of the QQ pairs.
pub fn qq_correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub const QQ_CSV_HEADER: &str = "theo_q,emp_q";

pub fn qq_to_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from(QQ_CSV_HEADER);
    out.push('\n');
    for (t, e) in pairs {
        writeln!(out, "{t},{e}").unwrap();
    }
    out
}

/// Provenance written next to every Monte Carlo output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub rng: String,
    pub command: String,
    pub master_seed: u64,
    pub reps: usize,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, reps: usize, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng: "ChaCha8Rng::seed_from_u64(master_seed), set_stream(replication)".to_string(),
            command: command.to_string(),
            master_seed,
            reps,
            config,
        }
    }
}

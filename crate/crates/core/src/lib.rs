//! Realized characteristic function test for pure-jump price processes.
//!
//! Given a log-price path sampled on a regular grid, the test decides
//! whether the path has a Brownian component (null) or is driven by jumps
//! alone (alternative). The crate also contains the simulation models and
//! the Monte Carlo harness used to study its size and power.
//!
//! - [`paths`]: sampled paths, increments and block geometry
//! - [`simulate`]: seeded stable-jump / CIR-volatility simulation
//! - [`rcf`]: local characteristic functions and volatility estimators
//! - [`jumptest`]: tuning rules, the studentized statistic and the u-scan
//! - [`montecarlo`]: size/power replication and QQ data
//! - [`ingest`]: tick CSV parsing, resampling and the path file format

pub mod error;
pub mod ingest;
pub mod jumptest;
pub mod montecarlo;
pub mod paths;
pub mod rcf;
pub mod simulate;

pub use error::{Error, Result};
pub use jumptest::{run_test, run_tuned, u_scan, TestResult, TuningParams, TuningRule};
pub use montecarlo::{qq_export, run_scenario, size_power_table, McScenario, McSummary, TablePlan};
pub use paths::{BlockGeometry, IncrementSeries, PricePath};
pub use rcf::Variant;
pub use simulate::{generate_path, Scenario, Seed, SimConfig};

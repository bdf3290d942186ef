use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use purejump::ingest::{self, Column, CsvSchema, SamplingRule};
use purejump::jumptest::{self, CSV_HEADER, DEFAULT_ALPHA, DEFAULT_C, DEFAULT_C_STAR};
use purejump::montecarlo::{self, RunManifest};
use purejump::{
    Error, IncrementSeries, McScenario, PricePath, Seed, SimConfig, TablePlan, TuningRule,
};

const EXIT_REJECT: u8 = 3;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "purejump",
    version,
    about = "Realized characteristic function test for pure-jump paths"
)]
struct Cli {
    /// Worker threads for Monte Carlo and scans (0 = all cores).
    #[arg(long, global = true, env = "PUREJUMP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write it as a `t,x` CSV.
    Simulate(SimulateArgs),
    /// Run the test on a path file or on raw ticks.
    Test(TestArgs),
    /// Size/power table from a plan file.
    Mc(McArgs),
    /// Studentized statistic over a grid of u values.
    Scan(ScanArgs),
    /// QQ pairs of statistics against the standard normal.
    Qq(QqArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML simulation config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Output file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuningArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Block length; default from the sample size.
    #[arg(long)]
    k_n: Option<usize>,
    /// Fixed u_n instead of the bipower-scaled rule.
    #[arg(long)]
    u: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_C_STAR)]
    c_star: f64,
}

impl TuningArgs {
    fn rule(&self) -> TuningRule {
        TuningRule {
            k_n: self.k_n,
            u_n: self.u,
            c: self.c,
            c_star: self.c_star,
            alpha: self.alpha,
        }
    }
}

#[derive(Args)]
struct TickArgs {
    /// Sampling interval, e.g. `20s`, `5m`, `1/3min`.
    #[arg(long, default_value = "20s")]
    interval: String,
    /// Session length from the open.
    #[arg(long, default_value = "6.5h")]
    session: String,
    /// Session open as clock time, used for `HH:MM:SS` stamps.
    #[arg(long, default_value = "09:30:00")]
    open: String,
    /// Time column name or 0-based index.
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Price column name or 0-based index.
    #[arg(long, default_value = "price")]
    price_col: String,
    /// The tick file has no header row (columns must be indices).
    #[arg(long)]
    no_header: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct TestArgs {
    /// Path file in `t,x` format.
    #[arg(long, conflicts_with = "ticks", required_unless_present = "ticks")]
    path: Option<PathBuf>,
    /// Raw tick CSV, resampled before testing.
    #[arg(long)]
    ticks: Option<PathBuf>,
    #[command(flatten)]
    tick: TickArgs,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct McArgs {
    /// TOML table plan; the default plan has betas 1.0..1.9 and n in {1170, 2340, 4680}.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (stdout if omitted). A `.manifest.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// One row per cell instead of the wide table layout.
    #[arg(long)]
    long: bool,
}

#[derive(Args)]
struct ScanArgs {
    /// One or more path files, each treated as a separate day.
    #[arg(long, required = true, num_args = 1..)]
    path: Vec<PathBuf>,
    /// `start:stop:step`.
    #[arg(long, default_value = "0.01:1.0:0.01")]
    grid: String,
    #[arg(long)]
    k_n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_C_STAR)]
    c_star: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Join the increments of all days into one sample.
    #[arg(long)]
    concat: bool,
    /// Output CSV (stdout if omitted). Metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QqArgs {
    /// File with one statistic per line (an optional header is skipped).
    #[arg(
        long,
        conflicts_with = "scenario",
        required_unless_present = "scenario"
    )]
    stats: Option<PathBuf>,
    /// TOML Monte Carlo scenario to simulate statistics from.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(EXIT_NUMERIC)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}

fn dispatch(command: Command) -> CliResult<u8> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Test(a) => test(a),
        Command::Mc(a) => mc(a),
        Command::Scan(a) => scan(a),
        Command::Qq(a) => qq(a),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Lib(e.into())),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json values always serialize");
    fs::write(path, text + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_path(path: &Path) -> CliResult<PricePath> {
    Ok(ingest::path_from_csv(open(path)?)?)
}

fn simulate(a: SimulateArgs) -> CliResult<u8> {
    let cfg = match &a.config {
        Some(p) => SimConfig::from_toml_str(&read_text(p)?)?,
        None => SimConfig::default(),
    };
    let path = purejump::generate_path(&cfg, Seed::new(a.seed, a.stream))?;
    emit(a.out.as_deref(), &ingest::path_to_csv(&path))?;
    Ok(0)
}

fn column(spec: &str) -> Column {
    match spec.parse::<usize>() {
        Ok(i) => Column::Index(i),
        Err(_) => Column::Name(spec.to_string()),
    }
}

fn load_ticks(file: &Path, t: &TickArgs) -> CliResult<PricePath> {
    let open_secs = ingest::parse_time(&t.open, 0.0)
        .ok_or_else(|| Failure::Usage(format!("bad --open time '{}'", t.open)))?;
    let schema = CsvSchema {
        time: column(&t.time_col),
        price: column(&t.price_col),
        has_header: !t.no_header,
        open_secs,
    };
    let parsed = ingest::parse_csv(open(file)?, &schema)?;
    if parsed.out_of_order > 0 || parsed.duplicates > 0 {
        eprintln!(
            "warning: {} out-of-order rows sorted, {} duplicate timestamps dropped",
            parsed.out_of_order, parsed.duplicates
        );
    }
    let rule = SamplingRule::new(
        ingest::parse_duration(&t.interval)?,
        ingest::parse_duration(&t.session)?,
    )?;
    Ok(ingest::resample(&parsed.records, &rule)?)
}

fn test(a: TestArgs) -> CliResult<u8> {
    let path = match (&a.path, &a.ticks) {
        (Some(p), _) => read_path(p)?,
        (None, Some(t)) => load_ticks(t, &a.tick)?,
        (None, None) => {
            return Err(Failure::Usage(
                "one of --path or --ticks is required".into(),
            ))
        }
    };
    let result = purejump::run_tuned(&path, &a.tuning.rule())?;
    if !result.script_t.is_finite() {
        return Err(Error::DegenerateVariance(result.i_hat).into());
    }
    match a.format {
        Format::Csv => println!("{CSV_HEADER}\n{}", result.to_csv_row()),
        Format::Json => println!("{}", result.to_json()),
    }
    Ok(if result.reject { EXIT_REJECT } else { 0 })
}

fn mc(a: McArgs) -> CliResult<u8> {
    let mut plan = match &a.scenario {
        Some(p) => TablePlan::from_toml_str(&read_text(p)?)?,
        None => TablePlan::default(),
    };
    if let Some(r) = a.reps {
        plan.reps = r;
    }
    if let Some(s) = a.seed {
        plan.master_seed = s;
    }
    let table = purejump::size_power_table(&plan)?;
    let csv = if a.long {
        table.to_csv()
    } else {
        table.to_wide_csv()
    };
    emit(a.out.as_deref(), &csv)?;
    let failures: usize = table.cells.iter().map(|c| c.summary.failures.len()).sum();
    if failures > 0 {
        eprintln!("warning: {failures} replications were degenerate and excluded");
    }
    if let Some(out) = &a.out {
        let config = serde_json::to_value(&plan).expect("plan serializes");
        let manifest = RunManifest::new("mc", plan.master_seed, plan.reps, config);
        write_json(
            &sidecar(out, ".manifest.json"),
            &serde_json::to_value(&manifest).expect("manifest serializes"),
        )?;
    }
    Ok(0)
}

fn scan(a: ScanArgs) -> CliResult<u8> {
    let grid = jumptest::parse_grid(&a.grid)?;
    let paths = a
        .path
        .iter()
        .map(|p| read_path(p))
        .collect::<CliResult<Vec<_>>>()?;

    let series: Vec<IncrementSeries> = if a.concat {
        let delta = paths[0].delta();
        if paths
            .iter()
            .any(|p| (p.delta() - delta).abs() > 1e-12 * delta)
        {
            return Err(Failure::Usage(
                "--concat needs paths with a common sampling interval".into(),
            ));
        }
        let joined = paths
            .iter()
            .flat_map(|p| p.increments().as_slice().to_vec())
            .collect();
        vec![IncrementSeries::from_raw(joined, delta)?]
    } else {
        paths.iter().map(|p| p.increments()).collect()
    };

    let mut csv = String::from("day,u,gamma_n,script_t\n");
    let mut k_used = Vec::with_capacity(series.len());
    for (day, incs) in series.iter().enumerate() {
        let k_n = match a.k_n {
            Some(k) => k,
            None => jumptest::default_k_n(incs.len())?,
        };
        k_used.push(k_n);
        for pt in jumptest::u_scan_increments(incs, k_n, a.c_star, &grid)? {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{day},{},{},{}\n",
                pt.u,
                opt(pt.gamma_n),
                opt(pt.script_t)
            ));
        }
    }
    emit(a.out.as_deref(), &csv)?;

    let meta = serde_json::json!({
        "reference_level": -jumptest::z_alpha(a.alpha),
        "alpha": a.alpha,
        "grid": a.grid,
        "c_star": a.c_star,
        "k_n": k_used,
        "concat": a.concat,
        "paths": a.path.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    match &a.out {
        Some(out) => write_json(&sidecar(out, ".meta.json"), &meta)?,
        None => eprintln!(
            "# reference level {:.4} (alpha {})",
            -jumptest::z_alpha(a.alpha),
            a.alpha
        ),
    }
    Ok(0)
}

fn read_stats(path: &Path) -> CliResult<Vec<f64>> {
    let text = read_text(path)?;
    let mut stats = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => stats.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("not a number: '{field}'"),
                }
                .into())
            }
        }
    }
    Ok(stats)
}

fn qq(a: QqArgs) -> CliResult<u8> {
    let stats = match (&a.stats, &a.scenario) {
        (Some(p), _) => read_stats(p)?,
        (None, Some(p)) => {
            let mut sc = McScenario::from_toml_str(&read_text(p)?)?;
            if let Some(r) = a.reps {
                sc.reps = r;
            }
            if let Some(s) = a.seed {
                sc.master_seed = s;
            }
            purejump::run_scenario(&sc)?.statistics
        }
        (None, None) => {
            return Err(Failure::Usage(
                "one of --stats or --scenario is required".into(),
            ))
        }
    };
    let pairs = montecarlo::qq_export(&stats)?;
    emit(a.out.as_deref(), &montecarlo::qq_to_csv(&pairs))?;
    eprintln!("qq correlation {:.5}", montecarlo::qq_correlation(&pairs));
    Ok(0)
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments, 2 validation
//! failure, 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experimenting::{sample_dataset, ExperimentDesign};
use crate::knowledge::{GroundTruth, TeamId, VarId};
use crate::labeling::Passthrough;
use crate::metrics::validate_monotonicity;
use crate::mining::phi_coefficient;
use crate::orchestrator::{self, RunResult, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    InvalidConfig = 1,
    ValidationFailure = 2,
    Io = 3,
}

impl From<&Error> for ExitStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } | Error::Csv(_) => ExitStatus::Io,
            Error::Config { .. } | Error::Precondition(_) | Error::Json(_) => {
                ExitStatus::InvalidConfig
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ktsim", version, about = "Knowledge-translation simulator")]
pub struct Cli {
    /// Suppress human-readable output. JSON outputs are still written.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Worker threads for runs and validation trials (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one run and write its result JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Data seed. A random seed is chosen and printed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all eight channel combinations over paired replicates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `replicates`.
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Randomized check of the labeler's monotonicity property.
    Validate {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Scenario supplying trial parameters (default: built-in scenario).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Negative control: trusted prior claims are passed through negated.
        #[arg(long)]
        break_passthrough: bool,
    },
    /// Compare empirical phi on a chain with (2p-1)^d (1-2δ)^2.
    Oracle {
        #[arg(long)]
        p_stay: f64,
        #[arg(long)]
        dist: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Streams<'a> {
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
    quiet: bool,
}

impl Streams<'_> {
    fn human(&mut self, text: &str) {
        if !self.quiet {
            let _ = writeln!(self.out, "{text}");
        }
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        writeln!(self.out, "{text}").map_err(|e| Error::io("<stdout>", e))
    }
}

pub fn main() -> i32 {
    run_cli(
        std::env::args_os(),
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    )
}

/// Parses `args` and executes the command, returning the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitStatus::InvalidConfig as i32
            } else {
                0
            };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    let mut s = Streams {
        out,
        err,
        quiet: cli.quiet,
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(s.err, "error: cannot start worker pool: {e}");
            return ExitStatus::InvalidConfig as i32;
        }
    };
    match pool.install(|| dispatch(cli.command, &mut s)) {
        Ok(status) => status as i32,
        Err(e) => {
            let _ = writeln!(s.err, "error: {e}");
            ExitStatus::from(&e) as i32
        }
    }
}

fn dispatch(command: Command, s: &mut Streams<'_>) -> Result<ExitStatus> {
    match command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out, s),
        Command::Sweep {
            config,
            replicates,
            out,
            force,
        } => cmd_sweep(&config, replicates, &out, force, s),
        Command::Validate {
            trials,
            config,
            seed,
            break_passthrough,
        } => cmd_validate(trials, config.as_deref(), seed, break_passthrough, s),
        Command::Oracle {
            p_stay,
            dist,
            delta,
            samples,
            seed,
        } => cmd_oracle(p_stay, dist, delta, samples, seed, s),
    }
}

fn choose_seed(seed: Option<u64>, s: &mut Streams<'_>) -> u64 {
    seed.unwrap_or_else(|| {
        let chosen = rand::random::<u64>();
        let _ = writeln!(s.err, "seed: {chosen}");
        chosen
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Location of one run's JSON below an output root.
pub fn result_path(root: &Path, result: &RunResult, leaf: &str) -> PathBuf {
    root.join(&result.scenario)
        .join(result.channels.label())
        .join(format!("{leaf}.json"))
}

fn summary_table(r: &RunResult) -> String {
    let mut t = format!(
        "scenario {}  channels {} (mask {})  seed {}\n{:>3} {:>3} {:>3} {:>6} {:>6} {:>6} {:>9}\n",
        r.scenario,
        r.channels.label(),
        r.combo_mask,
        r.seed,
        "i",
        "j",
        "l",
        "claims",
        "true",
        "false",
        "openness"
    );
    for p in &r.report.per_triple {
        t.push_str(&format!(
            "{:>3} {:>3} {:>3} {:>6} {:>6} {:>6} {:>9}\n",
            p.triple.experimenting,
            p.triple.mining,
            p.triple.labeling,
            p.size,
            p.true_count,
            p.false_count,
            p.openness
        ));
    }
    t.push_str(&format!(
        "union {}  true {}  false {}  openness {}  normalized {:.4}",
        r.report.union_size,
        r.report.true_count,
        r.report.false_count,
        r.report.openness,
        r.report.normalized
    ));
    t
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    s: &mut Streams<'_>,
) -> Result<ExitStatus> {
    let cfg = ScenarioConfig::load(config)?;
    let seed = choose_seed(seed, s);
    let result = orchestrator::run(&cfg, seed)?;
    let path = result_path(out, &result, &format!("seed-{seed}"));
    let mut bytes = serde_json::to_vec_pretty(&result)?;
    bytes.push(b'\n');
    write_file(&path, &bytes)?;
    s.human(&summary_table(&result));
    s.human(&format!("wrote {}", path.display()));
    Ok(ExitStatus::Success)
}

fn cmd_sweep(
    config: &Path,
    replicates: Option<usize>,
    out: &Path,
    force: bool,
    s: &mut Streams<'_>,
) -> Result<ExitStatus> {
    let cfg = ScenarioConfig::load(config)?;
    let replicates = replicates.unwrap_or(cfg.replicates);
    if out.exists() && !force {
        let non_empty = std::fs::read_dir(out)
            .map_err(|e| Error::io(out, e))?
            .next()
            .is_some();
        if non_empty {
            return Err(Error::io(
                out,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "output directory is not empty; pass --force to reuse it",
                ),
            ));
        }
    }
    let outcome = orchestrator::sweep(&cfg, replicates)?;
    create_dir(out)?;
    for (run, row) in outcome.runs.iter().zip(&outcome.rows) {
        let path = result_path(out, run, &row.replicate.to_string());
        write_file(&path, &serde_json::to_vec(run)?)?;
    }
    let csv_path = out.join("sweep.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    outcome.write_csv(std::io::BufWriter::new(file))?;
    let mut summary = serde_json::to_vec_pretty(&outcome.summary)?;
    summary.push(b'\n');
    write_file(&out.join("summary.json"), &summary)?;

    let mut table = format!(
        "{:<8} {:>4} {:>12} {:>10}\n",
        "combo", "runs", "openness", "std"
    );
    for c in &outcome.summary.combos {
        table.push_str(&format!(
            "{:<8} {:>4} {:>12.3} {:>10.3}\n",
            c.label, c.runs, c.mean_openness, c.std_openness
        ));
    }
    let st = outcome.summary.sign_test_all_vs_none;
    table.push_str(&format!(
        "sign test ch4 vs none: +{} -{} ={} p = {:.3e}",
        st.positive, st.negative, st.ties, st.p_value
    ));
    s.human(&table);
    Ok(ExitStatus::Success)
}

fn cmd_validate(
    trials: usize,
    config: Option<&Path>,
    seed: Option<u64>,
    break_passthrough: bool,
    s: &mut Streams<'_>,
) -> Result<ExitStatus> {
    let cfg = match config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let seed = choose_seed(seed, s);
    let mode = if break_passthrough {
        Passthrough::Inverted
    } else {
        Passthrough::Normal
    };
    let report = validate_monotonicity(trials, &cfg, seed, mode)?;

    #[derive(Serialize)]
    struct Output<'a> {
        seed: u64,
        #[serde(flatten)]
        report: &'a crate::metrics::MonotonicityReport,
    }
    s.json(&Output {
        seed,
        report: &report,
    })?;
    Ok(if report.violations == 0 {
        ExitStatus::Success
    } else {
        ExitStatus::ValidationFailure
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub p_stay: f64,
    pub dist: usize,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub empirical: f64,
    pub analytic: f64,
    pub abs_diff: f64,
}

/// Empirical endpoint phi on a chain of `dist` edges next to its analytic value.
pub fn oracle(
    p_stay: f64,
    dist: usize,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    if dist == 0 {
        return Err(Error::config("dist", "must be at least 1"));
    }
    if samples < 2 {
        return Err(Error::config("samples", "at least 2 required"));
    }
    let gt = GroundTruth::from_parents((0..=dist).map(|v| v.checked_sub(1)).collect(), p_stay)?;
    let design = ExperimentDesign {
        measured: vec![VarId(0), VarId(dist)],
        selection: None,
        noise_rate: delta,
        n: samples,
    };
    let (ds, _) = sample_dataset(&gt, &design, TeamId(0), seed)?;
    let empirical = phi_coefficient(&ds, VarId(0), VarId(dist))?
        .map_err(|e| Error::Precondition(format!("{e}; increase --samples")))?;
    let keep = 1.0 - 2.0 * delta;
    let analytic = (2.0 * p_stay - 1.0).powi(dist as i32) * keep * keep;
    Ok(OracleReport {
        p_stay,
        dist,
        delta,
        samples,
        seed,
        empirical,
        analytic,
        abs_diff: (empirical - analytic).abs(),
    })
}

fn cmd_oracle(
    p_stay: f64,
    dist: usize,
    delta: f64,
    samples: usize,
    seed: Option<u64>,
    s: &mut Streams<'_>,
) -> Result<ExitStatus> {
    let seed = choose_seed(seed, s);
    let report = oracle(p_stay, dist, delta, samples, seed)?;
    s.json(&report)?;
    Ok(ExitStatus::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["ktsim"];
        full.extend_from_slice(args);
        let code = run_cli(full, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn oracle_rejects_half_noise() {
        let (code, _, err) = call(&[
            "oracle",
            "--p-stay",
            "0.9",
            "--dist",
            "1",
            "--delta",
            "0.5",
            "--samples",
            "100",
            "--seed",
            "1",
        ]);
        assert_eq!(code, 1);
        assert!(err.contains("noise_rate"), "{err}");
    }

    #[test]
    fn oracle_prints_json() {
        let (code, out, _) = call(&[
            "--quiet",
            "oracle",
            "--p-stay",
            "0.9",
            "--dist",
            "2",
            "--delta",
            "0",
            "--samples",
            "20000",
            "--seed",
            "3",
        ]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["analytic"].as_f64().unwrap() - 0.64).abs() < 1e-12);
    }

    #[test]
    fn missing_config_is_io_error() {
        let (code, _, err) = call(&[
            "run",
            "--config",
            "/nonexistent/cfg.json",
            "--seed",
            "1",
            "--out",
            "/tmp/x",
        ]);
        assert_eq!(code, 3);
        assert!(err.contains("/nonexistent/cfg.json"));
    }

    #[test]
    fn zero_trials_is_invalid() {
        let (code, _, _) = call(&["validate", "--trials", "0", "--seed", "1"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn unknown_flag_is_invalid() {
        let (code, _, _) = call(&["run", "--bogus"]);
        assert_eq!(code, 1);
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualpref::harness::{self, Experiment, Report, RunConfig};
use dualpref::{Error, PessimismMode, SelectorKind};

#[derive(Parser)]
#[command(name = "dualpref", version, about = "Dual active preference learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation experiment and write metrics, traces and a manifest.
    Simulate(RunArgs),
    /// Aggregate a metrics CSV into summary tables and series.
    Report {
        metrics_csv: PathBuf,
        /// Directory for the report files (defaults to the CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the greedy-trap scenario.
    Trap(RunArgs),
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML or JSON file with any of the keys below; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<Experiment>,
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<SelectorKind>>,
    #[arg(long, value_delimiter = ',')]
    budget_t: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    batch_k: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    g: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    beta_low: Option<f64>,
    #[arg(long)]
    beta_high: Option<f64>,
    #[arg(long)]
    c_beta: Option<f64>,
    #[arg(long)]
    c_theta: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    pessimism_mode: Option<PessimismMode>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    t0: Option<usize>,
    #[arg(long)]
    no_repeat: Option<bool>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    env_file: Option<PathBuf>,
    #[arg(long)]
    write_traces: Option<bool>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn resolve(self, base: RunConfig) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                e => e,
            })?,
            None => base,
        };
        let a = self;
        overlay!(
            cfg,
            a,
            experiment,
            method,
            budget_t,
            batch_k,
            replications,
            base_seed,
            n,
            n_eval,
            d,
            g,
            m,
            beta_low,
            beta_high,
            c_beta,
            c_theta,
            c1,
            c2,
            delta,
            pessimism_mode,
            ridge,
            no_repeat,
            write_traces
        );
        if a.t0.is_some() {
            cfg.t0 = a.t0;
        }
        if a.output_dir.is_some() {
            cfg.output_dir = a.output_dir;
        }
        if a.env_file.is_some() {
            cfg.env_file = a.env_file;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn simulate(cfg: RunConfig) -> Result<(), Error> {
    let out = harness::run_experiment(&cfg)?;
    for (i, msg) in &out.failures {
        let r = &out.rows[*i];
        eprintln!("failed {} T={} K={} rep={}: {msg}", r.method, r.t, r.k, r.rep);
    }
    print!("{}", Report::from_rows(&out.rows).to_text());
    if let Some(dir) = &cfg.output_dir {
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate(args.resolve(RunConfig::default())?),
        Command::Trap(args) => {
            let base = RunConfig {
                experiment: Experiment::GreedyTrap,
                budget_t: vec![100, 200, 400, 800, 1600, 3200],
                replications: 100,
                ..RunConfig::default()
            };
            let mut cfg = args.resolve(base)?;
            cfg.experiment = Experiment::GreedyTrap;
            simulate(cfg)
        }
        Command::Report { metrics_csv, out } => {
            let dir = out.unwrap_or_else(|| {
                metrics_csv
                    .parent()
                    .map(|p| p.to_path_buf())
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let rep = harness::report(&metrics_csv, &dir)?;
            print!("{}", rep.to_text());
            Ok(())
        }
        Command::Selftest { seed } => {
            let results = dualpref::selftest::run_all(seed);
            for r in &results {
                println!("{r}");
            }
            if results.iter().all(|r| r.ok()) {
                Ok(())
            } else {
                Err(Error::InvalidArgument("selftest failed".into()))
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and maps the outcome
/// to an exit status.
fn exit_code<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(exit_code(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use std::fs;
    use std::path::Path;

    use super::exit_code;

    fn code(args: &[&str]) -> u8 {
        exit_code(std::iter::once("dualpref").chain(args.iter().copied()))
    }

    fn p(path: &Path) -> &str {
        path.to_str().unwrap()
    }

    const SMALL: &[&str] = &[
        "--n",
        "300",
        "--n-eval",
        "50",
        "--budget-t",
        "60",
        "--batch-k",
        "10",
        "--replications",
        "2",
    ];

    #[test]
    fn selftest_passes() {
        assert_eq!(code(&["selftest"]), 0);
    }

    #[test]
    fn simulate_then_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut args = vec!["simulate"];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(&["--method", "dual_d_optimal,random", "--output-dir", p(dir.path())]);
        assert_eq!(code(&args), 0);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(dir.path().join("traces").is_dir());

        let out = tempfile::tempdir().unwrap();
        let metrics = dir.path().join("metrics.csv");
        assert_eq!(code(&["report", p(&metrics), "--out", p(out.path())]), 0);
        assert!(out.path().join("summary.csv").exists());
    }

    #[test]
    fn trap_subcommand_runs() {
        let dir = tempfile::tempdir().unwrap();
        let args = [
            "trap",
            "--budget-t",
            "100,200",
            "--replications",
            "2",
            "--output-dir",
            p(dir.path()),
        ];
        assert_eq!(code(&args), 0);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
        assert!(csv.contains("\ngreedy,") && csv.contains("\npessimistic,"));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(
            &cfg,
            "method = [\"random\"]\nbudget_t = [60]\nbatch_k = [10]\nreplications = 3\nn = 300\nn_eval = 50\nwrite_traces = false\n",
        )
        .unwrap();
        let args = [
            "simulate",
            "--config",
            p(&cfg),
            "--replications",
            "1",
            "--output-dir",
            p(dir.path()),
        ];
        assert_eq!(code(&args), 0);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(!dir.path().join("traces").exists());
    }

    #[test]
    fn config_errors_exit_one() {
        assert_eq!(code(&["simulate", "--replications", "0"]), 1);
        assert_eq!(code(&["simulate", "--beta-low", "2", "--beta-high", "1"]), 1);
        assert_eq!(code(&["simulate", "--method", "bogus"]), 1);
        assert_eq!(code(&["simulate", "--config", "/nonexistent/run.toml"]), 1);
        assert_eq!(code(&["frobnicate"]), 1);

        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        fs::write(&cfg, "unknown_key = 3\n").unwrap();
        assert_eq!(code(&["simulate", "--config", p(&cfg)]), 1);
    }

    #[test]
    fn runtime_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(code(&["report", p(&dir.path().join("missing.csv"))]), 2);
        let bad = dir.path().join("metrics.csv");
        fs::write(&bad, "not,the,right,header\n").unwrap();
        assert_eq!(code(&["report", p(&bad)]), 2);
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(code(&["--help"]), 0);
        assert_eq!(code(&["--version"]), 0);
    }
}

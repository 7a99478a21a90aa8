use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use ptesc::analysis::Signal;
use ptesc::plant::check_assumptions;
use ptesc::{compare_trajectories, Mode};
use ptesc_cli::sweep::{self, CellStatus, Override};
use ptesc_cli::{execute, exit, output, CliError, ScenarioConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0  run completed (sweep: at least one cell ran)
  1  usage, configuration or I/O error
  2  run diverged before t_stop (partial outputs are still written)";

#[derive(Parser)]
#[command(name = "ptesc", version, about = "Prescribed-time extremum-seeking simulations", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory [default: outputs.dir from the config, else ./out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the configured mode
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,

    /// Record every N-th output sample
    #[arg(long, global = true)]
    stride: Option<usize>,

    /// Worker threads for sweeps [default: available cores]
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectory.csv, report.json and plots.gp
    Run { config: PathBuf },
    /// Run the Cartesian product of --set overrides and write summary.csv
    Sweep {
        config: PathBuf,
        /// field=v1,v2,... where field is `section.key` or a bare key
        #[arg(long = "set", value_name = "FIELD=VALUES")]
        set: Vec<String>,
        /// Maximum number of cells
        #[arg(long, default_value_t = sweep::DEFAULT_CELL_CAP)]
        cap: usize,
    },
    /// Simulate two scenarios and print the sup and RMS gaps between them
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Comma-separated signals: x, u, y, xi, u_hat
        #[arg(long, value_delimiter = ',', default_value = "x", value_parser = parse_signal)]
        signals: Vec<Signal>,
    },
    /// Audit the plant's structural assumptions over the configured box
    Validate { config: PathBuf },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_signal(s: &str) -> Result<Signal, String> {
    s.parse().map_err(|e| format!("{e:?}"))
}

impl Cli {
    fn load(&self, path: &Path) -> Result<ScenarioConfig, CliError> {
        let mut cfg = ScenarioConfig::load(path)?;
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.stride {
            cfg.integrator.record_stride = s;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.outputs.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports always serialize")
    );
}

fn run(cli: &Cli, path: &Path) -> Result<u8, CliError> {
    let scenario = cli.load(path)?.validate()?;
    warn_all(&scenario.warnings);
    let started = Instant::now();
    let outcome = execute(&scenario)?;
    let dir = cli.out_dir(&scenario.config);
    for p in outcome.write(&dir)? {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("{} in {:.2?}", outcome.report.status_line(), started.elapsed());
    Ok(outcome.exit_code())
}

fn sweep_cmd(cli: &Cli, path: &Path, set: &[String], cap: usize) -> Result<u8, CliError> {
    let base = cli.load(path)?;
    base.validate()?;
    let overrides = set.iter().map(|s| s.parse()).collect::<Result<Vec<Override>, _>>()?;
    let dir = cli.out_dir(&base);
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let started = Instant::now();
    let cells = sweep::run_sweep(&base, &overrides, &dir, workers, cap)?;
    let summary = sweep::write_summary(&overrides, &cells, &dir)?;
    let ran = cells.iter().filter(|c| c.status != CellStatus::Failed).count();
    for c in cells.iter().filter(|c| c.status == CellStatus::Failed) {
        eprintln!("cell {}: {}", c.index, c.error.as_deref().unwrap_or("failed"));
    }
    eprintln!(
        "wrote {} ({ran}/{} cells ran) in {:.2?}",
        summary.display(),
        cells.len(),
        started.elapsed()
    );
    Ok(if ran > 0 { exit::COMPLETED } else { exit::USAGE })
}

#[derive(Serialize)]
struct CompareReport {
    signals: Vec<Signal>,
    sup_error: f64,
    rms_error: f64,
}

fn compare(cli: &Cli, a: &Path, b: &Path, signals: &[Signal]) -> Result<u8, CliError> {
    let sa = cli.load(a)?.validate()?;
    let sb = cli.load(b)?.validate()?;
    let ra = execute(&sa)?;
    let rb = execute(&sb)?;
    for (path, r) in [(a, &ra), (b, &rb)] {
        if !r.report.status.is_completed() {
            eprintln!("{}: {}", path.display(), r.report.status_line());
            return Ok(exit::DIVERGED);
        }
    }
    let d = compare_trajectories(&ra.trajectory, &rb.trajectory, signals)?;
    let report = CompareReport {
        signals: signals.to_vec(),
        sup_error: d.sup_error,
        rms_error: d.rms_error,
    };
    print_json(&report);
    if let Some(dir) = &cli.out {
        output::ensure_dir(dir)?;
        output::write_json(&report, &dir.join("compare.json"))?;
    }
    Ok(exit::COMPLETED)
}

fn validate(cli: &Cli, path: &Path) -> Result<u8, CliError> {
    let scenario = cli.load(path)?.validate()?;
    warn_all(&scenario.warnings);
    let bx = scenario.assumption_box();
    let report = check_assumptions(&scenario.plant, &bx, scenario.params.k, scenario.assumption_samples())?;
    print_json(&report);
    Ok(exit::COMPLETED)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Sweep { config, set, cap } => sweep_cmd(&cli, config, set, *cap),
        Command::Compare { a, b, signals } => compare(&cli, a, b, signals),
        Command::Validate { config } => validate(&cli, config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::USAGE)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hiermarket::cluster_fit::{fit_clusters_ml, FitOptions, Penalty, SearchStrategy};
use hiermarket::config::load_config;
use hiermarket::diagnostics::{cluster_correlations, ReportOptions, StylizedFactsReport};
use hiermarket::factor::{calibrate, CalibrationMode};
use hiermarket::hierarchy::{run_scenario, RunOptions};
use hiermarket::io;
use hiermarket::Error;

const SEED_ENV: &str = "HIERMARKET_SEED";
const OUT_ENV: &str = "HIERMARKET_OUT";

#[derive(Parser)]
#[command(name = "hiermarket", version, about = "Multilevel market simulator and calibration toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed (HIERMARKET_SEED takes precedence).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (HIERMARKET_OUT takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV suite.
    Simulate {
        /// Scenario file (alternative to --config).
        scenario: Option<PathBuf>,
    },
    /// Fit the cluster model to a return panel.
    FitClusters {
        panel: PathBuf,
        #[arg(long, value_enum, default_value_t = PenaltyArg::Bic)]
        penalty: PenaltyArg,
        #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
        strategy: StrategyArg,
    },
    /// Calibrate the conditional factor model.
    EstimateFactors {
        panel: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Pooled)]
        mode: ModeArg,
    },
    /// Stylized-fact report per asset and pooled.
    Diagnose {
        panel: PathBuf,
        /// Partition file for within/cross-cluster correlations.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Bic,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Auto,
    Exhaustive,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pooled,
    TwoStage,
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Identifiability { .. } => 3,
            Error::Io(_) | Error::Singular(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

struct Context {
    seed: Option<u64>,
    out: PathBuf,
    quiet: bool,
    threads: usize,
}

impl Context {
    fn from_common(c: &Common) -> Result<Self, Failure> {
        let seed = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Failure { code: 2, message: format!("{SEED_ENV}=`{v}` is not a u64") })?),
            Err(_) => c.seed,
        };
        let out = std::env::var_os(OUT_ENV).map(PathBuf::from).or_else(|| c.out.clone()).unwrap_or_else(|| PathBuf::from("hiermarket-out"));
        Ok(Self { seed, out, quiet: c.quiet, threads: c.threads })
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

fn simulate(ctx: &Context, path: &Path) -> Result<(), Failure> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    let resolved = cfg.resolved();
    let text = format!("# resolved scenario\n{}", resolved.to_toml()?);
    let out = run_scenario(&cfg, &RunOptions { threads: ctx.threads })?;
    io::write_simulation(&ctx.out, &out, &text, cfg.factor.n_z, cfg.factor.n_theta).map_err(runtime)?;
    ctx.note(&format!(
        "simulated {} periods x {} assets -> {}",
        out.returns.len(),
        cfg.n_assets,
        ctx.out.display()
    ));
    Ok(())
}

fn fit_clusters(ctx: &Context, panel_path: &Path, penalty: PenaltyArg, strategy: StrategyArg) -> Result<(), Failure> {
    let panel = io::load_panel(panel_path)?;
    if panel.n_assets < 2 {
        return Err(Failure { code: 2, message: format!("panel has {} asset(s); clustering needs at least 2", panel.n_assets) });
    }
    let mut opts = FitOptions {
        penalty: match penalty {
            PenaltyArg::Bic => Penalty::Bic,
            PenaltyArg::None => Penalty::None,
        },
        strategy: match strategy {
            StrategyArg::Auto => SearchStrategy::Auto,
            StrategyArg::Exhaustive => SearchStrategy::Exhaustive,
            StrategyArg::Heuristic => SearchStrategy::Heuristic,
        },
        ..FitOptions::default()
    };
    if let Some(seed) = ctx.seed {
        opts.seed = seed;
    }
    let fit = fit_clusters_ml(&panel.returns, &opts)?;
    std::fs::create_dir_all(&ctx.out).map_err(runtime)?;
    io::write_partition(&ctx.out.join("partition.csv"), &fit.partition).map_err(runtime)?;
    let summary = io::fit_summary(&fit);
    std::fs::write(ctx.out.join("fit_summary.txt"), &summary).map_err(runtime)?;
    if !ctx.quiet {
        eprint!("{summary}");
    }
    Ok(())
}

fn estimate_factors(ctx: &Context, panel_path: &Path, mode: ModeArg) -> Result<(), Failure> {
    let panel = io::load_panel(panel_path)?;
    let mode = match mode {
        ModeArg::Pooled => CalibrationMode::Pooled,
        ModeArg::TwoStage => CalibrationMode::TwoStage,
    };
    let cal = calibrate(&panel, mode)?;
    io::write_calibration(&ctx.out, &cal).map_err(runtime)?;
    ctx.note(&format!("R^2 = {:.6}, {} coefficients -> {}", cal.r_squared, cal.table().len(), ctx.out.display()));
    Ok(())
}

fn diagnose(ctx: &Context, panel_path: &Path, partition: Option<&Path>) -> Result<(), Failure> {
    let panel = io::load_panel(panel_path)?;
    if panel.is_empty() {
        return Err(Failure { code: 2, message: format!("{}: panel has no rows", panel_path.display()) });
    }
    let t = panel.len();
    let mut opts = ReportOptions::default();
    opts.lags.retain(|&l| l + 1 < t);

    let mut series: Vec<(String, Vec<f64>)> = (0..panel.n_assets).map(|i| (format!("asset_{i}"), panel.asset_column(i))).collect();
    series.push(("pooled".into(), panel.returns.iter().flatten().copied().collect()));

    let mut rows = Vec::new();
    let mut text = String::new();
    for (name, x) in &series {
        match StylizedFactsReport::compute(x, &opts) {
            Ok(report) => {
                rows.extend(io::report_rows(name, &report));
                text.push_str(&io::report_text(name, &report));
            }
            Err(e) => {
                eprintln!("warning: {name}: {e}; skipped");
                text.push_str(&format!("[{name}] skipped: {e}\n"));
            }
        }
    }
    let partition_path = partition.map(Path::to_path_buf).or_else(|| {
        let p = panel_path.join("partition.csv");
        (panel_path.is_dir() && p.exists()).then_some(p)
    });
    if let Some(p) = partition_path {
        let part = io::read_partition(&p)?;
        let columns: Vec<Vec<f64>> = (0..panel.n_assets).map(|i| panel.asset_column(i)).collect();
        match cluster_correlations(&columns, part.labels()) {
            Ok((within, cross)) => {
                for (metric, v) in [("within_cluster_corr", within), ("cross_cluster_corr", cross)] {
                    let v = v.map_or_else(|| "NA".to_string(), io::fmt_f64);
                    text.push_str(&format!("[pooled] {metric} {v}\n"));
                    rows.push(("pooled".into(), metric.into(), v));
                }
            }
            Err(e) => eprintln!("warning: cluster correlations: {e}"),
        }
    }

    io::write_diagnostics(&ctx.out, &rows, &text).map_err(runtime)?;
    if !ctx.quiet {
        eprint!("{text}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = Context::from_common(&cli.common)?;
    match &cli.command {
        Command::Simulate { scenario } => {
            let path = scenario.as_ref().or(cli.common.config.as_ref()).ok_or_else(|| Failure {
                code: 2,
                message: "simulate needs a scenario file (positional or --config)".into(),
            })?;
            simulate(&ctx, path)
        }
        Command::FitClusters { panel, penalty, strategy } => fit_clusters(&ctx, panel, *penalty, *strategy),
        Command::EstimateFactors { panel, mode } => estimate_factors(&ctx, panel, *mode),
        Command::Diagnose { panel, partition } => diagnose(&ctx, panel, partition.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

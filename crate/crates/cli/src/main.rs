use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use itac_core::artifact::{self, Artifact};
use itac_core::evalx::ModelFamily;
use itac_core::ingest::{MockTrendsServer, Variant};
use itac_core::pipeline::{fixture, line_chart_svg, quarterly_aggregate, quarterly_mean, Experiment, PlotSeries};
use itac_core::Error;

/// Build artificial trend indices from search-volume panels and evaluate them.
#[derive(Parser)]
#[command(name = "itac", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "itac.toml")]
    config: PathBuf,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured region code.
    #[arg(long, global = true)]
    geo: Option<String>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// pca, dfm, ann or rnn.
    #[arg(long, default_value = "pca", value_parser = parse_method)]
    method: ModelFamily,
    /// itacons or itacome.
    #[arg(long, default_value = "itacons", value_parser = parse_variant)]
    variant: Variant,
}

#[derive(Subcommand)]
enum Command {
    /// Download every vocabulary term into the trends directory.
    Fetch,
    /// Build an index and write it as `itac_<method>.csv`.
    Build {
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the quarterly means.
        #[arg(long)]
        quarterly: bool,
    },
    /// Cross-validated grid search; writes `leaderboard_<method>.csv`.
    Search {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Two-stage category evaluation; writes `table4.csv` and `table4.json`.
    Evaluate,
    /// Correlations, the fold plan and the stage-one selection.
    Report {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Index-versus-target line charts as SVG.
    Plot {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Write the planted-signal fixture to a directory.
    #[command(hide = true)]
    Fixture {
        dir: PathBuf,
        #[arg(long, default_value_t = fixture::SEED)]
        data_seed: u64,
    },
    /// Serve a directory of term CSVs over the trends endpoint protocol.
    #[command(hide = true)]
    ServeMock {
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: String,
    },
}

fn parse_method(s: &str) -> Result<ModelFamily, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn save<M: Artifact>(model: &M, path: &Path) -> Result<(), Failure> {
    write(path, &artifact::to_json(model)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fixture { dir, data_seed } => {
            fixture::write(dir, *data_seed)?;
            eprintln!("wrote fixture to {}", dir.display());
            return Ok(());
        }
        Command::ServeMock { dir, addr } => {
            let server = MockTrendsServer::bind(dir.clone(), addr)?;
            println!("{}", server.base_url());
            server.serve_forever();
            return Ok(());
        }
        _ => {}
    }

    let mut exp = Experiment::load(&cli.config).map_err(usage)?;
    if let Some(seed) = cli.seed {
        exp = exp.with_seed(seed);
    }
    if let Some(geo) = &cli.geo {
        exp = exp.with_geo(geo.clone());
    }
    let out = cli.out.clone().unwrap_or_else(|| exp.output_dir());
    if !matches!(cli.command, Command::Fetch) {
        std::fs::create_dir_all(&out).map_err(|e| Failure {
            code: 1,
            message: format!("cannot create {}: {e}", out.display()),
        })?;
    }

    match cli.command {
        Command::Fetch => {
            let summary = exp.fetch()?;
            eprintln!("fetched {} term(s)", summary.written.len());
            if !summary.failed.is_empty() {
                for (term, err) in &summary.failed {
                    eprintln!("failed '{term}': {err}");
                }
                return Err(Failure {
                    code: 1,
                    message: format!("{} term(s) could not be fetched", summary.failed.len()),
                });
            }
        }
        Command::Build { model, quarterly } => {
            let itac = exp.build(model.method, model.variant)?;
            write(&out.join(format!("itac_{}.csv", model.method)), &itac.to_csv())?;
            save(&itac, &out.join(format!("itac_{}.json", model.method)))?;
            if quarterly {
                let q = quarterly_aggregate(&itac)?;
                write(&out.join(format!("itac_{}_quarterly.csv", model.method)), &q.to_csv())?;
            }
        }
        Command::Search { model } => {
            let result = exp.search(model.method, model.variant)?;
            write(&out.join(format!("leaderboard_{}.csv", model.method)), &result.to_csv())?;
            write(
                &out.join(format!("leaderboard_{}.json", model.method)),
                &serde_json::to_string_pretty(&result).expect("serializable"),
            )?;
            let best: Vec<String> = result.best.iter().map(|(n, v)| format!("{n}={v}")).collect();
            println!("best {} (mse {})", best.join(" "), result.best_mse);
        }
        Command::Evaluate => {
            let report = exp.evaluate()?;
            let csv = report.to_csv();
            write(&out.join("table4.csv"), &csv)?;
            save(&report, &out.join("table4.json"))?;
            for row in &report.rows {
                for w in &row.warnings {
                    eprintln!("warning [{}]: {w}", row.category);
                }
            }
            print!("{csv}");
        }
        Command::Report { model } => {
            let corr = exp.correlations(model.method)?;
            write(&out.join("correlations.csv"), &corr.to_csv())?;
            save(&corr, &out.join("correlations.json"))?;
            write(&out.join("folds.csv"), &exp.folds()?.to_csv())?;
            let stage_one = exp.stage_one()?;
            write(&out.join("stage_one.csv"), &stage_one.trace.to_csv())?;
            save(&stage_one.trace, &out.join("stage_one.json"))?;
        }
        Command::Plot { model } => {
            let itac = exp.build(model.method, model.variant)?;
            let target = exp.target_for(model.variant)?;
            let target_name = match model.variant {
                Variant::Itacons => "consumption",
                Variant::Itacome => "commerce",
            };
            let label = format!("{} ({})", model.variant, model.method);
            let monthly = line_chart_svg(
                &format!("{label} vs {target_name}, monthly"),
                &[
                    PlotSeries { name: &label, series: &itac.values },
                    PlotSeries { name: target_name, series: &target },
                ],
            );
            let stem = format!("plot_{}_{}", model.method, model.variant.to_string().to_lowercase());
            write(&out.join(format!("{stem}.svg")), &monthly)?;
            let (q_itac, q_target) = match (quarterly_aggregate(&itac), quarterly_mean(&target)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    eprintln!("warning: no quarterly chart: {e}");
                    return Ok(());
                }
            };
            let quarterly = line_chart_svg(
                &format!("{label} vs {target_name}, quarterly"),
                &[
                    PlotSeries { name: &label, series: &q_itac.values },
                    PlotSeries { name: target_name, series: &q_target },
                ],
            );
            write(&out.join(format!("{stem}_quarterly.svg")), &quarterly)?;
        }
        Command::Fixture { .. } | Command::ServeMock { .. } => unreachable!("handled above"),
    }
    Ok(())
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

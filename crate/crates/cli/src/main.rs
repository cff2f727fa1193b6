//! Command-line experiment runner: design optimization, detection
//! campaigns, figure reproduction and spectra reports.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cloudradar::af_opt::{optimize_af_long, optimize_af_short, AfMode};
use cloudradar::cf_opt::optimize_cf;
use cloudradar::experiment::{
    campaign_options, figure_preset, run_experiment, run_spectra_figure, spectra_report,
    write_spectra_csv, ExperimentConfig,
};
use cloudradar::metrics::{af_avg_bhattacharyya, cf_backhaul_rate_bits, cf_bhattacharyya};
use cloudradar::model::{paper_scenario_by_name, sample_channel, Scenario};
use cloudradar::rng::stream;
use cloudradar::trace::OptTrace;

#[derive(Parser)]
#[command(
    name = "cloudradar",
    about = "Joint waveform and backhaul design for multistatic cloud radar detection",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Base seed; every emitted row carries its derived seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory for CSV files and manifests.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Solver tolerance (KKT and feasibility).
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Joint waveform/quantization design on a quantized-backhaul scenario.
    OptimizeCf {
        #[command(flatten)]
        common: CommonArgs,
        /// Bundled scenario name (cf_fig2_3_4, cf_highfreq_fig5, ...).
        #[arg(long, default_value = "cf_fig2_3_4")]
        scenario: String,
        /// Uniform backhaul budget override, bits per block.
        #[arg(long)]
        backhaul: Option<f64>,
    },
    /// Joint waveform/gain design on a relay-backhaul scenario.
    OptimizeAf {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "af_fig6_8")]
        scenario: String,
        /// Design horizon: adapt per channel draw or to statistics only.
        #[arg(long, value_parser = ["short", "long"], default_value = "short")]
        mode: String,
        /// Transmit power override in dB.
        #[arg(long)]
        p_t_db: Option<f64>,
    },
    /// Operating-characteristic campaign (quantized fig4 or relay fig8).
    Roc {
        #[command(flatten)]
        common: CommonArgs,
        /// Campaign config file; defaults to the fig4 preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Monte Carlo trials per hypothesis.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Reproduces a bundled figure campaign (fig2..fig8).
    Figure {
        /// Figure name: fig2, fig3, fig4, fig5, fig6, fig7, fig8.
        name: String,
        #[command(flatten)]
        common: CommonArgs,
        /// Campaign config file overriding the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Monte Carlo trials per hypothesis (detection campaigns).
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Spectral report of a jointly optimized quantized design.
    Spectra {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "cf_fig2_3_4")]
        scenario: String,
        #[arg(long, default_value_t = 5.0)]
        backhaul: f64,
    },
}

fn load_scenario(name: &str) -> Result<Scenario> {
    paper_scenario_by_name(name).with_context(|| format!("loading scenario `{name}`"))
}

fn write_trace_csv(path: &PathBuf, trace: &OptTrace) -> Result<()> {
    let mut text = String::from("stage,outer,inner,objective_nats,power_slack,min_aux_slack\n");
    for row in &trace.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.stage.as_str(),
            row.outer,
            row.inner,
            row.objective_nats,
            row.power_slack,
            row.min_aux_slack
        ));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_config_or(preset: &str, config: &Option<PathBuf>, seed: u64) -> Result<ExperimentConfig> {
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok(ExperimentConfig::from_toml(&text)?)
        }
        None => Ok(figure_preset(preset, seed)?),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::OptimizeCf {
            common,
            scenario,
            backhaul,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(bits) = backhaul {
                s = s.with_backhaul_bits(bits);
            }
            let opts = campaign_options(common.tol);
            let (x, q, trace) = optimize_cf(&s, None, &opts)?;
            let b = cf_bhattacharyya(&s, &x, &q)?;
            std::fs::create_dir_all(&common.out)?;
            let trace_path = common.out.join("optimize_cf_trace.csv");
            write_trace_csv(&trace_path, &trace)?;
            println!("scenario: {scenario}");
            println!("bhattacharyya_nats: {}", b.total_nats);
            for (n, term) in b.per_sensor.iter().enumerate() {
                let rate = cf_backhaul_rate_bits(&s, &x, &q.covs[n], n)?;
                println!(
                    "sensor {}: lambda {} b_nats {} rate_bits {}",
                    n + 1,
                    term.lambda,
                    term.b_nats,
                    rate
                );
            }
            println!("termination: {}", trace.termination);
            println!("trace: {}", trace_path.display());
        }
        Command::OptimizeAf {
            common,
            scenario,
            mode,
            p_t_db,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(db) = p_t_db {
                s = s.with_p_t_db(db);
            }
            let opts = campaign_options(common.tol);
            let (x, p, trace) = match mode.as_str() {
                "short" => {
                    let f = sample_channel(&s, &mut stream(common.seed));
                    optimize_af_short(&s, &f, None, AfMode::Joint, &opts)?
                }
                "long" => optimize_af_long(&s, None, AfMode::Joint, &opts, common.seed)?,
                other => bail!("unknown mode `{other}`"),
            };
            let mut rng = stream(common.seed ^ 0xabcd);
            let avg = af_avg_bhattacharyya(&s, &x, &p, 2_000, &mut rng)?;
            std::fs::create_dir_all(&common.out)?;
            let trace_path = common.out.join(format!("optimize_af_{mode}_trace.csv"));
            write_trace_csv(&trace_path, &trace)?;
            println!("scenario: {scenario} ({mode}-term)");
            println!("avg_bhattacharyya_nats: {} (stderr {})", avg.mean, avg.stderr);
            println!("gains: {:?}", p.p.as_slice());
            println!("termination: {}", trace.termination);
            println!("trace: {}", trace_path.display());
        }
        Command::Roc {
            common,
            config,
            trials,
        } => {
            let mut cfg = load_config_or("fig4", &config, common.seed)?;
            cfg.run.seed = common.seed;
            cfg.run.tol = common.tol;
            if let Some(t) = trials {
                cfg.run.trials_detection = t;
            }
            let summary = run_experiment(&cfg, &common.out)?;
            println!("rows: {}", summary.rows.len());
            println!("csv: {}", summary.csv_path.display());
            println!("manifest: {}", summary.manifest_path.display());
        }
        Command::Figure {
            name,
            common,
            config,
            trials,
        } => {
            if name == "fig5" {
                let paths = run_spectra_figure(&common.out, common.seed)?;
                for p in paths {
                    println!("csv: {}", p.display());
                }
                return Ok(());
            }
            let mut cfg = load_config_or(&name, &config, common.seed)?;
            cfg.run.seed = common.seed;
            cfg.run.tol = common.tol;
            if let Some(t) = trials {
                cfg.run.trials_detection = t;
                cfg.run.trials_calibration = (t * 4).max(t);
            }
            let summary = run_experiment(&cfg, &common.out)?;
            println!("rows: {}", summary.rows.len());
            println!("csv: {}", summary.csv_path.display());
            println!("manifest: {}", summary.manifest_path.display());
        }
        Command::Spectra {
            common,
            scenario,
            backhaul,
        } => {
            let s = load_scenario(&scenario)?.with_backhaul_bits(backhaul);
            let opts = campaign_options(common.tol);
            let (x, q, _) = optimize_cf(&s, None, &opts)?;
            let report = spectra_report(&s, &x, &q);
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("spectra.csv");
            write_spectra_csv(&path, &report, common.seed)?;
            println!("csv: {}", path.display());
        }
    }
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use chfrisk::simulate::{CohortGenParams, EffectShape};
use chfrisk_cli::commands::{
    cmd_evaluate, cmd_explain_global, cmd_explain_patient, cmd_extract, cmd_seglen, cmd_simulate, cmd_train,
    SimulateArgs,
};
use chfrisk_cli::{CliError, CliResult, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chfrisk", version, about = "ECG-based heart failure hospitalization risk pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Effect {
    Linear,
    Nonlinear,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort: manifest, ECG records and ground truth.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Effect::Nonlinear)]
        effect: Effect,
        #[arg(long, default_value_t = 0.15)]
        event_rate: f64,
        #[arg(long, default_value_t = 1500.0)]
        censor_time: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma_true: f64,
        #[arg(long, default_value_t = 250.0)]
        fs: f64,
        /// Record length in seconds.
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        /// Standard deviation of additive white noise, in mV.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Extract one feature row per record.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagnostics: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Split, cross-validate the grid and fit the final model.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Directory for model.json, cv_report.csv and split.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Held-out metrics with bootstrap intervals.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also fit and evaluate the Cox baseline on the same split.
        #[arg(long)]
        cox: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Test C-index against total ECG length.
    Seglen {
        #[arg(long)]
        manifest: PathBuf,
        /// Total lengths in seconds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// SHAP explanations for the test set or a single patient.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, conflicts_with = "patient", required_unless_present = "patient")]
        global: bool,
        #[arg(long)]
        patient: Option<String>,
        /// Output directory (global) or JSON file (patient).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Print the default configuration.
    DefaultConfig,
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { out, n, seed, effect, event_rate, censor_time, sigma_true, fs, duration, noise } => {
            let effect = match effect {
                Effect::Linear => EffectShape::Linear,
                Effect::Nonlinear => EffectShape::Nonlinear,
            };
            let cohort = CohortGenParams { n, effect, sigma_true, censor_time, event_rate, seed };
            cohort.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let s = cmd_simulate(&out, &SimulateArgs { cohort, fs, duration_s: duration, noise_std: noise })?;
            println!(
                "subjects {} events {} event_rate {:.4} (requested {:.4}, within 2%: {}) oracle_c_index {:.4}",
                s.n, s.events, s.event_rate, s.requested_event_rate, s.event_rate_within_2pct, s.oracle_c_index
            );
        }
        Command::Extract { manifest, out, diagnostics, config } => {
            let d = cmd_extract(&manifest, &RunConfig::load(config.config.as_deref())?, &out, &diagnostics)?;
            println!("extracted {} of {} records, {} excluded", d.n_extracted, d.n_records, d.excluded.len());
        }
        Command::Train { features, out, config } => {
            let s = cmd_train(&features, &RunConfig::load(config.config.as_deref())?, &out)?;
            println!(
                "train {} test {} best candidate {} (cv c-index {:.4})",
                s.n_train, s.n_test, s.best_candidate, s.best_mean_cindex
            );
        }
        Command::Evaluate { model, features, split, out, cox, config } => {
            let r = cmd_evaluate(&model, &features, &split, &RunConfig::load(config.config.as_deref())?, cox, &out)?;
            let c = &r.models.xgboost_aft.c_index;
            print!("xgboost_aft c-index {:.4} [{:.4}, {:.4}]", c.point, c.lo, c.hi);
            if let Some(cox) = &r.models.cox {
                print!("  cox c-index {:.4} [{:.4}, {:.4}]", cox.c_index.point, cox.c_index.lo, cox.c_index.hi);
            }
            println!();
        }
        Command::Seglen { manifest, lengths, out, config } => {
            for r in cmd_seglen(&manifest, &lengths, &RunConfig::load(config.config.as_deref())?, &out)? {
                println!(
                    "{} s: n {} skipped {} c-index {:.4} [{:.4}, {:.4}]",
                    r.length_s, r.n_subjects, r.n_skipped, r.c_index.point, r.c_index.lo, r.c_index.hi
                );
            }
        }
        Command::Explain { model, features, split, global, patient, out, config } => {
            let cfg = RunConfig::load(config.config.as_deref())?;
            if global {
                let r = cmd_explain_global(&model, &features, split.as_deref(), &cfg, &out)?;
                for f in r.features.iter().take(r.top_k) {
                    println!("{:>2} {:<16} {:.4}", f.rank, f.feature, f.importance);
                }
            } else {
                let id = patient.expect("clap enforces --patient or --global");
                let f = cmd_explain_patient(&model, &features, split.as_deref(), &id, &cfg, &out)?;
                println!("{} probability {:.4} at {} days", f.record_id, f.report.probability, f.report.horizon);
            }
        }
        Command::DefaultConfig => print!("{}", RunConfig::default().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tetradat::dataset::synthetic_desk_dataset;
use tetradat::harness::{emit_report, run_campaign, run_selftest, CampaignSpec, HarnessError};
use tetradat::model::TrainConfig;
use tetradat::BuiltinClassifier;

#[derive(Parser)]
#[command(name = "attack", version, about = "Black-box adversarial attacks with tensor-train optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attack every image of a campaign config and write results.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render panels and summary.csv from a results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
    /// Train the built-in classifier on the synthetic desk dataset.
    TrainDeskModel {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed of the generated training images.
        #[arg(long, default_value_t = 1)]
        data_seed: u64,
        #[arg(long, default_value_t = 4000)]
        images: usize,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, default_value = "crates/core/assets/desk_model.nnw")]
        out: PathBuf,
    },
    /// Run quick numerical self-checks.
    Selftest,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let spec = match CampaignSpec::from_file(&config) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_campaign(&spec) {
                Ok(s) => {
                    println!("{}", format_summary(&s));
                    ExitCode::SUCCESS
                }
                Err(e @ HarnessError::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Report { results } => match emit_report(&results) {
            Ok(files) => {
                for n in &files.notices {
                    eprintln!("note: {n}");
                }
                println!("{} panels, table at {}", files.panels.len(), files.summary_table.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Command::TrainDeskModel {
            seed,
            data_seed,
            images,
            hidden,
            epochs,
            learning_rate,
            out,
        } => {
            let data = synthetic_desk_dataset(data_seed, images);
            let defaults = TrainConfig::default();
            let config = TrainConfig {
                seed,
                hidden: hidden.unwrap_or(defaults.hidden),
                epochs: epochs.unwrap_or(defaults.epochs),
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                ..defaults
            };
            let trained = BuiltinClassifier::train(&data, &config).and_then(|(m, report)| {
                m.save(&out)?;
                Ok(report)
            });
            match trained {
                Ok(report) => {
                    for (i, l) in report.epoch_losses.iter().enumerate() {
                        println!("epoch {:>2}  loss {l:.4}", i + 1);
                    }
                    println!("train accuracy {:.3}, saved {}", report.train_accuracy, out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Selftest => {
            let checks = run_selftest();
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn format_summary(s: &tetradat::harness::CampaignSummary) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    format!(
        "attempted {}  skipped {}  success rate {}  mean L1 {}  mean L2 {}  mean queries {}",
        s.images_attempted,
        s.images_skipped,
        opt(s.success_rate),
        opt(s.mean_l1),
        opt(s.mean_l2),
        opt(s.mean_queries)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use std::path::Path;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["attack", "run", "--config", "c.toml"]).unwrap();
        assert!(matches!(cli.command, Command::Run { config } if config == Path::new("c.toml")));
        assert!(Cli::try_parse_from(["attack", "run"]).is_err());
    }

    #[test]
    fn shipped_configs_load() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["desk.toml", "smoke.toml"] {
            let spec = CampaignSpec::from_file(&root.join(name)).unwrap();
            assert_eq!(spec.attack.d_hat, 102, "{name}");
            assert!(tetradat::harness::open_endpoint(&spec.attacked).is_ok(), "{name}");
        }
    }

    #[test]
    fn empty_summary_prints_placeholders() {
        let s = tetradat::harness::CampaignSummary::from_records(&[], 3);
        assert_eq!(
            format_summary(&s),
            "attempted 0  skipped 3  success rate n/a  mean L1 n/a  mean L2 n/a  mean queries n/a"
        );
    }
}

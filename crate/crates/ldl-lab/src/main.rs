//! Thin command-line front end over the library pipeline. Exit codes:
//! 0 success, 1 validation/usage error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ldl_lab::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ldl-lab",
    version,
    about = "Label-only membership inference attacks and the LDL smoothing defense, desk scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path: report JSON (weights file for `train`; the report to
    /// update for `fit-asr`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads; 1 guarantees bit-exact serial reproduction.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target model and save its weight file.
    Train,
    /// Run the configured attacks and export per-sample records.
    Attack,
    /// Full pipeline: train, defend, attack, evaluate, report.
    Evaluate,
    /// Mount the random-noise attack across the configured variance sweep.
    Sweep,
    /// Fit both h families to a sweep report's ASR table, in place.
    FitAsr,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are successes; anything else is a
            // usage error.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        // Ignore the error if a pool already exists (repeat invocation in
        // the same process only happens under test harnesses).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, u8> {
    let Some(path) = &cli.config else {
        eprintln!("error: --config <path> is required for this subcommand");
        return Err(1);
    };
    let mut config = ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        1u8
    })?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(output) = &cli.output {
        config.output = Some(output.clone());
    }
    Ok(config)
}

fn runtime_err(e: ldl_lab::Error) -> u8 {
    eprintln!("error: {e}");
    2
}

fn run(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Train => {
            let config = load_config(&cli)?;
            let model_path = config
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from("model.json"));
            let (train_acc, test_acc) =
                harness::run_train(&config, &model_path).map_err(runtime_err)?;
            println!("model written to {}", model_path.display());
            println!("train accuracy {train_acc:.4}, held-out accuracy {test_acc:.4}");
            Ok(())
        }
        Command::Attack | Command::Evaluate => {
            let config = load_config(&cli)?;
            let report = harness::run_experiment(&config).map_err(runtime_err)?;
            print_summary(&report);
            Ok(())
        }
        Command::Sweep => {
            let config = load_config(&cli)?;
            let report = harness::run_sweep(&config).map_err(runtime_err)?;
            if let Some(table) = &report.asr_table {
                println!("sigma2    ASR      acc_nonmember");
                for row in table {
                    println!("{:<8} {:.4}   {:.4}", row.sigma2, row.asr, row.acc_nonmember);
                }
            }
            Ok(())
        }
        Command::FitAsr => {
            let Some(path) = cli.output.clone() else {
                eprintln!("error: fit-asr needs --output <report.json> naming the sweep report");
                return Err(1);
            };
            let mut report = harness::EvalReport::load(&path).map_err(|e| {
                eprintln!("error: {e}");
                1u8
            })?;
            harness::append_fits(&mut report).map_err(runtime_err)?;
            report.write(&path).map_err(runtime_err)?;
            if let Some(fitted) = &report.fitted {
                if let Some(h1) = &fitted.h1 {
                    println!("h1 fit: {:?} (residual {:.6})", h1.curve, h1.residual_norm);
                }
                if let Some(h2) = &fitted.h2 {
                    println!("h2 fit: {:?} (residual {:.6})", h2.curve, h2.residual_norm);
                }
            }
            println!("fits appended to {}", path.display());
            Ok(())
        }
    }
}

fn print_summary(report: &harness::EvalReport) {
    if let (Some(mem), Some(non)) = (report.acc_member, report.acc_nonmember) {
        println!("target accuracy: members {mem:.4}, nonmembers {non:.4}");
    }
    if let Some(gap) = report.asr_gap_baseline {
        println!("gap-attack baseline ASR {gap:.4}");
    }
    let attacks = &report.attacks;
    if let Some(a) = &attacks.gap {
        println!("gap attack:           ASR {:.4}", a.asr);
    }
    if let Some(a) = &attacks.threshold_hsj {
        println!("threshold (boundary): ASR {:.4}", a.asr);
    }
    if let Some(a) = &attacks.random_noise {
        println!("random-noise:         ASR {:.4}", a.asr);
    }
    if let Some(s) = &attacks.substitute {
        println!(
            "substitute transfer:  ASR {:.4} (local {:.4})",
            s.transfer.asr, s.local_asr
        );
    }
    if let Some(f) = &attacks.fgs {
        let last = f.epsilons.len().saturating_sub(1);
        println!(
            "fgs probe: eps {:.3} member miss {:.4}, nonmember miss {:.4}",
            f.epsilons[last], f.member_misclassification[last], f.nonmember_misclassification[last]
        );
    }
    println!("oracle queries: {}", report.total_oracle_queries);
    if let Some(out) = &report.config.output {
        println!("report written to {}", out.display());
    }
}

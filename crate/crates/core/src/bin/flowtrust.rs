use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowtrust::harness::{self, RunConfig};
use flowtrust::{Error, Result};

#[derive(Parser)]
#[command(
    name = "flowtrust",
    version,
    about = "Exploration and trust-region experiments for flow-policy alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithCheckpoint {
    #[command(flatten)]
    common: Common,
    /// Pretrained checkpoint; defaults to `<out>/pretrained.ckpt`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Flow-matching pretraining on the toy ring.
    Pretrain(Common),
    /// Group-relative alignment of a pretrained checkpoint.
    Align(WithCheckpoint),
    /// Per-step noise std for each schedule regime and strategy.
    AnalyzeStd(Common),
    /// Monte-Carlo gradient magnitudes per timestep.
    AnalyzeGradnorm(WithCheckpoint),
    /// Alignment under every KL mode with identical seeds.
    CompareKl(WithCheckpoint),
    /// Run the oracle suite and print the report.
    Verify,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out = out.clone();
    }
    Ok(cfg)
}

fn checkpoint(args: &WithCheckpoint, cfg: &RunConfig) -> PathBuf {
    args.checkpoint
        .clone()
        .unwrap_or_else(|| cfg.run.out.join("pretrained.ckpt"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(c) => {
            let cfg = load(&c)?;
            let out = harness::cmd_pretrain(&cfg)?;
            println!(
                "final loss {:.6}; wrote {} and {}",
                out.losses.last().copied().unwrap_or(f64::NAN),
                out.checkpoint.display(),
                out.loss_csv.display()
            );
        }
        Command::Align(a) => {
            let cfg = load(&a.common)?;
            let out = harness::cmd_align(&cfg, &checkpoint(&a, &cfg))?;
            if let Some(last) = out.rows.last() {
                println!("final mean reward {:.6}", last.mean_reward);
            }
            println!(
                "wrote {} and {}",
                out.checkpoint.display(),
                out.metrics_csv.display()
            );
        }
        Command::AnalyzeStd(c) => {
            let cfg = load(&c)?;
            let rows = harness::cmd_analyze_std(&cfg)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                cfg.run.out.join("analyze_std.csv").display()
            );
        }
        Command::AnalyzeGradnorm(a) => {
            let cfg = load(&a.common)?;
            let rows = harness::cmd_analyze_gradnorm(&cfg, &checkpoint(&a, &cfg))?;
            for r in &rows {
                println!(
                    "step {:>3} sigma {:.3} observed/predicted {:.4} equalized {:.4}",
                    r.step,
                    r.sigma_t,
                    r.ratio(),
                    r.contribution_equalized
                );
            }
        }
        Command::CompareKl(a) => {
            let cfg = load(&a.common)?;
            let out = harness::cmd_compare_kl(&cfg, &checkpoint(&a, &cfg))?;
            for (mode, path, rows) in &out.runs {
                let last = rows.last();
                println!(
                    "{:<9} final reward {:>10.5} init KL {:>10.4e}  {}",
                    mode.name(),
                    last.map_or(f64::NAN, |r| r.mean_reward),
                    last.map_or(f64::NAN, |r| r.init_kl),
                    path.display()
                );
            }
        }
        Command::Verify => {
            let report = harness::cmd_verify()?;
            print!("{}", report.table());
            report.into_result()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}

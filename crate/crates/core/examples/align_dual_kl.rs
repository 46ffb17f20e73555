//! Pretrain on the ring, then align toward one mode with the dual KL trust
//! region and the gradient equalizer.
//!
//! Run with `cargo run --release --example align_dual_kl`.

use flowtrust::flownet::{flow_matching_pretrain, VelocityNet};
use flowtrust::harness::{align, RunConfig};
use flowtrust::trustregion::KlMode;

fn main() -> flowtrust::Result<()> {
    let cfg = RunConfig::from_toml_str(include_str!("../configs/default.toml"))?;
    let mut net = VelocityNet::new(cfg.net_config(), cfg.net.init_seed)?;
    flow_matching_pretrain(&mut net, &cfg.data.build()?, &cfg.pretrain_config())?;
    let out = align(&cfg, &net, KlMode::Dual, None)?;
    println!(
        "{:>9} {:>12} {:>10} {:>10} {:>10}",
        "updates", "reward", "lambda", "anchor KL", "init KL"
    );
    for chunk in out.rows.chunks(50) {
        let n = chunk.len() as f64;
        let last = chunk.last().expect("non-empty chunk");
        println!(
            "{:>4}-{:<4} {:>12.4} {:>10.2e} {:>10.4} {:>10.4}",
            chunk[0].step,
            last.step,
            chunk.iter().map(|r| r.mean_reward).sum::<f64>() / n,
            last.lambda_kl,
            last.anchor_kl,
            last.init_kl
        );
    }
    let refreshes = out.rows.iter().filter(|r| r.anchor_refresh).count();
    println!("\n{refreshes} anchor refreshes");
    Ok(())
}

//! Flow-matching pretraining on the 8-mode ring, then deterministic sampling.
//!
//! Run with `cargo run --release --example pretrain_ring`.

use flowtrust::flownet::{
    flow_matching_pretrain, ode_sample, DataSpec, PretrainConfig, VelocityNet,
};
use flowtrust::harness::RunConfig;
use flowtrust::schedule::NoiseSchedule;

fn main() -> flowtrust::Result<()> {
    let cfg = RunConfig::with_seed(0);
    let data = DataSpec::ring(8, 4.0, 0.3)?;
    let mut net = VelocityNet::new(cfg.net_config(), 0)?;
    let pcfg = PretrainConfig {
        steps: 2000,
        ..cfg.pretrain_config()
    };
    let report = flow_matching_pretrain(&mut net, &data, &pcfg)?;
    let head: f64 = report.losses[..100].iter().sum::<f64>() / 100.0;
    println!(
        "flow-matching loss {head:.3} (first 100 steps) -> {:.3} (last)",
        report.final_loss()
    );

    let schedule = NoiseSchedule::linear(50, 1.0)?;
    for cond in [None, Some(0), Some(3)] {
        let xs = ode_sample(&net, &schedule, 2000, cond, 5)?;
        let mut hits = vec![0usize; data.num_modes()];
        let mut on_mode = 0;
        for x in &xs {
            let (k, d) = data.nearest_mode(x);
            if d < 3.0 * data.mode_std {
                on_mode += 1;
                hits[k] += 1;
            }
        }
        println!(
            "condition {cond:?}: {:.1}% of samples on a mode, per-mode counts {hits:?}",
            100.0 * on_mode as f64 / xs.len() as f64
        );
    }
    Ok(())
}

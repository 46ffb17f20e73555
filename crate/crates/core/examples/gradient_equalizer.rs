//! Gradient-scale proxies and equalizer weights along the default schedule.
//!
//! Run with `cargo run --release --example gradient_equalizer`.

use flowtrust::dynamics::VarianceStrategy;
use flowtrust::rlcore::EqualizerState;
use flowtrust::schedule::{NoiseSchedule, DEFAULT_FLOOR, DEFAULT_STEPS};

fn main() -> flowtrust::Result<()> {
    let schedule = NoiseSchedule::linear(DEFAULT_STEPS, 1.0)?.clamped(DEFAULT_FLOOR)?;
    let strategy = VarianceStrategy::precise(0.7)?;
    let eq = EqualizerState::from_schedule(&schedule, &strategy, 1e-8)?;
    println!(
        "{:>4} {:>6} {:>6} {:>10} {:>8} {:>10}",
        "step", "sigma", "next", "proxy", "weight", "product"
    );
    for (t, (a, b)) in schedule.intervals().enumerate() {
        match eq.proxies[t] {
            Some(n) => println!(
                "{:>4} {a:>6.3} {b:>6.3} {n:>10.4} {:>8.4} {:>10.4}",
                t + 1,
                eq.weights[t],
                n * eq.weights[t]
            ),
            None => println!(
                "{:>4} {a:>6.3} {b:>6.3} {:>10} {:>8.4}",
                t + 1,
                "-",
                eq.weights[t]
            ),
        }
    }
    let active: Vec<f64> = eq.proxies.iter().flatten().copied().collect();
    let max = active.iter().copied().fold(f64::MIN, f64::max);
    let min = active.iter().copied().fold(f64::MAX, f64::min);
    println!(
        "\nproxy spread {:.2}x; every weighted product equals the proxy median",
        max / min
    );
    Ok(())
}

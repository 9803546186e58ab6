//! Summary statistics of the four policies over a range of seeds.
//!
//! `cargo run --release --example seed_sweep -- [seeds] [epsilon_per_step]`

use std::time::Instant;

use netalloc::{compare_policies, ScenarioConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let epsilon: Option<f64> = std::env::args().nth(2).and_then(|s| s.parse().ok());
    let config = ScenarioConfig {
        epsilon_per_step: epsilon,
        ..ScenarioConfig::default()
    };
    println!("seed   equal  static   event  online  events  event_max");
    let start = Instant::now();
    for seed in 0..seeds {
        let results = compare_policies(&config, seed).expect("scenario runs");
        let means: Vec<f64> = results.iter().map(|r| r.mean_residual_after_prefix).collect();
        let event = &results[2];
        let event_max = event.residual_inf_series.iter().copied().fold(0.0, f64::max);
        println!(
            "{seed:>4} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7} {:>10.3}",
            means[0],
            means[1],
            means[2],
            means[3],
            event.reallocation_ticks.len(),
            event_max
        );
    }
    println!("elapsed {:.2?}", start.elapsed());
}

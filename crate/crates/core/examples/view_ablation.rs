//! Probe accuracy of the core view as more views join the objective.
//!
//! cargo run --release --example view_ablation -- [noise] [seeds] [full]

use cmc::experiments::{median, view_ablation};
use cmc::probe::ProbeConfig;
use cmc::train::TrainConfig;
use cmc::views::SharedFactorSpec;

fn main() -> cmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let noise: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let full = args.get(3).is_some_and(|s| s == "full");
    let counts = [1, 2, 3, 4];
    let mut acc = vec![Vec::new(); counts.len()];
    for seed in 0..seeds {
        let spec = SharedFactorSpec::uniform_noise(2, 4, 16, noise, 4, 4000, seed);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 128,
            embed_dim: 16,
            hidden: vec![64],
            seed,
            ..TrainConfig::default()
        };
        let rows = view_ablation(&spec, full, &counts, &cfg, &ProbeConfig::default())?;
        for (a, r) in acc.iter_mut().zip(&rows) {
            a.push(r.probe.test_acc);
        }
        let line: Vec<String> = rows.iter().map(|r| format!("{}:{:.3}", r.n_views, r.probe.test_acc)).collect();
        println!("seed {seed}  {}", line.join("  "));
    }
    for (m, a) in counts.iter().zip(&acc) {
        println!("views {m}  median test accuracy {:.3}", median(a));
    }
    Ok(())
}

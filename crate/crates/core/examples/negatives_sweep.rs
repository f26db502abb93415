//! Probe accuracy as the number of memory-bank negatives grows.
//!
//! cargo run --release --example negatives_sweep -- [seeds] [epochs] [noise] [classes]

use cmc::experiments::{median, negatives_sweep};
use cmc::probe::ProbeConfig;
use cmc::train::TrainConfig;
use cmc::views::SharedFactorSpec;

fn main() -> cmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let noise: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let classes: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(16);
    let ks = [16, 64, 256, 1024];
    let mut acc = vec![Vec::new(); ks.len()];
    for seed in 0..seeds {
        let spec = SharedFactorSpec::uniform_noise(2, 2, 16, noise, classes, 4000, seed);
        let cfg = TrainConfig {
            epochs,
            batch_size: 128,
            embed_dim: 16,
            hidden: vec![64],
            seed,
            ..TrainConfig::default()
        };
        let rows = negatives_sweep(&spec, &ks, &cfg, &ProbeConfig::default())?;
        let line: Vec<String> = rows
            .iter()
            .map(|r| format!("k={}:{:.3} (bound {:.3})", r.knob, r.test_acc, r.mi_nats))
            .collect();
        println!("seed {seed}  {}", line.join("  "));
        for (a, r) in acc.iter_mut().zip(&rows) {
            a.push(r.test_acc);
        }
    }
    for (k, a) in ks.iter().zip(&acc) {
        println!("k {k:>5}  median test accuracy {:.3}", median(a));
    }
    Ok(())
}

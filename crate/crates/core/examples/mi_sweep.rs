//! How much should two views share? Sweeps a knob that first shares the
//! label-bearing signal, then a label-free nuisance, and probes each run.
//!
//! cargo run --release --example mi_sweep -- [seeds] [embed_dim] [nuisance_dim]

use cmc::experiments::{median, mi_sweep, sweep_csv};
use cmc::probe::ProbeConfig;
use cmc::train::TrainConfig;
use cmc::views::PartialSharingSpec;

fn main() -> cmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let embed_dim: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let nuisance_dim: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);
    let knobs = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut acc = vec![Vec::new(); knobs.len()];
    for seed in 0..seeds {
        let base = PartialSharingSpec {
            signal_dim: 2,
            nuisance_dim,
            signal_rho: 0.0,
            nuisance_rho: 0.0,
            nuisance_scale: 1.0,
            n_classes: 4,
            n_samples: 4000,
            seed,
        };
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 128,
            embed_dim,
            hidden: vec![64],
            seed,
            ..TrainConfig::default()
        };
        let rows = mi_sweep(&base, &knobs, 0.99, &cfg, &ProbeConfig::default())?;
        print!("seed {seed}\n{}", sweep_csv(&rows));
        for (a, r) in acc.iter_mut().zip(&rows) {
            a.push(r.test_acc);
        }
    }
    for (t, a) in knobs.iter().zip(&acc) {
        println!("knob {t:.2}  median test accuracy {:.3}", median(a));
    }
    Ok(())
}

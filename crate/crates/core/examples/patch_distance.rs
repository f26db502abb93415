//! Patch pairs cut from procedural images at growing distance: the bound
//! on shared information falls with distance, probe accuracy need not.
//!
//! cargo run --release --example patch_distance -- [epochs] [seed] [n_images]

use cmc::experiments::{patch_distance_sweep, sweep_csv};
use cmc::probe::ProbeConfig;
use cmc::train::TrainConfig;

fn main() -> cmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_images: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let cfg = TrainConfig {
        epochs,
        batch_size: 64,
        embed_dim: 16,
        hidden: vec![64],
        seed,
        ..TrainConfig::default()
    };
    let rows = patch_distance_sweep(n_images, 64, 4, 8, &[8, 12, 16, 20, 24], &cfg, &ProbeConfig::default(), seed)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}

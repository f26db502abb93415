//! One encoder architecture trained two ways on paired views: regress the
//! second view, or contrast against it. Both are probed on the first view,
//! alongside an untrained encoder.
//!
//! cargo run --release --example predictive_vs_contrastive -- [noise] [seeds]

use cmc::experiments::{median, pred_vs_contrast};
use cmc::losses::RegressionNorm;
use cmc::probe::ProbeConfig;
use cmc::train::{LossKind, TrainConfig};
use cmc::views::SharedFactorSpec;

fn main() -> cmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let noise: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let (mut c, mut p, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..seeds {
        let spec = SharedFactorSpec::uniform_noise(2, 2, 16, noise, 4, 4000, seed);
        let contrastive = TrainConfig {
            epochs: 30,
            batch_size: 128,
            embed_dim: 16,
            hidden: vec![64],
            seed,
            ..TrainConfig::default()
        };
        let predictive = TrainConfig {
            loss_kind: LossKind::Predictive(RegressionNorm::L2),
            ..contrastive.clone()
        };
        let out = pred_vs_contrast(&spec, &contrastive, &predictive, &ProbeConfig::default())?;
        println!(
            "seed {seed}  contrastive {:.3}  predictive {:.3}  random {:.3}",
            out.contrastive.test_acc, out.predictive.test_acc, out.random.test_acc
        );
        c.push(out.contrastive.test_acc);
        p.push(out.predictive.test_acc);
        r.push(out.random.test_acc);
    }
    println!("median  contrastive {:.3}  predictive {:.3}  random {:.3}", median(&c), median(&p), median(&r));
    Ok(())
}

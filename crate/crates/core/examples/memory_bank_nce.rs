//! Two-view training against memory-bank negatives, with the NCE
//! approximation or the full (k+1)-way softmax, followed by a linear probe.
//!
//! cargo run --release --example memory_bank_nce -- [k] [epochs] [nce|softmax]

use cmc::experiments::probe_view;
use cmc::memory_bank::init_bank;
use cmc::multiview::{build_graph, GraphMode};
use cmc::probe::ProbeConfig;
use cmc::train::{train, LossKind, Model, NegativeSource, TrainConfig};
use cmc::views::{gen_shared_factor, SharedFactorSpec};

fn main() -> cmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let loss_kind = match args.get(3).map(String::as_str) {
        Some("softmax") => LossKind::SoftmaxK1,
        _ => LossKind::Nce,
    };
    let spec = SharedFactorSpec::uniform_noise(2, 2, 16, 1.0, 4, 4000, 3);
    let (train_half, test_half) = gen_shared_factor(&spec)?.split(0.5)?;
    let graph = build_graph(train_half.view_names(), GraphMode::FullGraph)?;
    let cfg = TrainConfig {
        epochs,
        batch_size: 128,
        negatives: NegativeSource::Bank(k),
        loss_kind,
        embed_dim: 16,
        hidden: vec![64],
        seed: 3,
        ..TrainConfig::default()
    };
    let mut bank = init_bank(train_half.len(), cfg.embed_dim, train_half.view_names(), cfg.seed)?
        .with_momentum(cfg.bank_momentum)?;
    let mut model = Model::new(&train_half, &cfg)?;
    let log = train(&mut model, &train_half, Some(&graph), Some(&mut bank), &cfg)?;
    for e in log.epochs.iter().step_by((epochs / 5).max(1)).chain(log.final_epoch()) {
        println!("epoch {:>3}  lr {:.4}  loss {:.4}", e.epoch, e.lr, e.loss);
    }
    let r = probe_view("v1", &model, "v1", &train_half, &test_half, &ProbeConfig::default())?;
    println!("k = {k}  probe train {:.3} test {:.3}", r.train_acc, r.test_acc);
    Ok(())
}

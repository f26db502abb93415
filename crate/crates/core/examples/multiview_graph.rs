//! Core-view and full-graph pair sets for M views, and how many pairs
//! cover each region of the view Venn diagram.
//!
//! cargo run --release --example multiview_graph -- [n_views]

use cmc::multiview::{build_graph, partition_weights, GraphMode};

fn main() -> cmc::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let names: Vec<String> = (1..=m).map(|i| format!("v{i}")).collect();
    for mode in [GraphMode::CoreView("v1".into()), GraphMode::FullGraph] {
        let graph = build_graph(&names, mode)?;
        println!("{}: {} pairs {:?}", graph.mode(), graph.pairs().len(), graph.pair_labels());
        let pw = partition_weights(&graph)?;
        for (mask, w) in pw.iter() {
            let members: Vec<&str> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| names[i].as_str()).collect();
            println!("  {:<20} {w}", members.join("∩"));
        }
    }
    Ok(())
}

//! Times full-batch training on a desk-scale synthetic graph.
//!
//! `cargo run --release -p umgnet-core --example train_timing -- 200`

use std::time::Instant;

use umgnet_core::graph::{generate_synthetic, SyntheticConfig};
use umgnet_core::model::{train, ModelConfig};

fn main() {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let data = generate_synthetic(&SyntheticConfig::new(500, 200, 8, 0.05, 0)).unwrap().dataset;
    let labeled: Vec<usize> = (0..100).collect();
    let cfg = ModelConfig { epochs, ..ModelConfig::default() };
    let start = Instant::now();
    let (_, report) = train::<f32>(&data, &labeled, &cfg).unwrap();
    let last = report.trace.last().map_or(f64::NAN, |e| e.loss_y);
    println!("{epochs} epochs in {:.2?}, final loss_y {last:.3}", start.elapsed());
}

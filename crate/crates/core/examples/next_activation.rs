//! Next-activation prediction against the popularity baselines, across mask
//! fractions.
//!
//! ```text
//! cargo run --release --example next_activation -- [seeds]
//! ```

use ecd::generator::{generate, GeneratorConfig};
use ecd::prediction::run_next_activation_benchmark;
use ecd::HyperParams;

const FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn main() -> ecd::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(3, |s| s.parse().expect("seed count must be an integer"));
    println!("seed\tmask\tmethod\tauc");
    for seed in 0..seeds {
        let config = GeneratorConfig::default().with_seed(seed);
        let (truth, _) = generate(&config)?;
        let hyper = HyperParams { num_communities: config.eta.len(), seed, ..HyperParams::default() };
        for f in FRACTIONS {
            for r in run_next_activation_benchmark(&truth.graph, &truth.cascades, f, &hyper, seed, None)? {
                println!("{seed}\t{f}\t{}\t{:.3}", r.method, r.auc);
            }
        }
    }
    Ok(())
}

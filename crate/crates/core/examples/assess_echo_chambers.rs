//! Find echo chambers: two opposed communities and one neutral social
//! community, fitted with more communities than planted, then scored by
//! conductance and purity.
//!
//! ```text
//! cargo run --release --example assess_echo_chambers -- [seed]
//! ```

use ecd::evaluation::assess_communities;
use ecd::generator::{generate, GeneratorConfig};
use ecd::inference::fit;
use ecd::HyperParams;

fn main() -> ecd::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let config = GeneratorConfig { eta: vec![-1.0, 1.0, 0.0], ..GeneratorConfig::default().with_seed(seed) };
    let (truth, _) = generate(&config)?;
    let hyper = HyperParams { num_communities: 8, seed, ..HyperParams::default() };
    let fitted = fit(&truth.graph, &truth.cascades, &hyper)?.fitted;

    let mut rows = assess_communities(&truth.graph, &truth.cascades, &fitted)?;
    rows.sort_by(|a, b| b.eta.abs().total_cmp(&a.eta.abs()));
    println!("community\teta\tconductance\tpurity\tsize");
    for r in rows.iter().filter(|r| r.size > 0) {
        println!("{}\t{:+.3}\t{:.3}\t{:.3}\t{}", r.community, r.eta, r.conductance, r.purity, r.size);
    }
    Ok(())
}

//! Reconstruction quality as the average number of items per user grows.
//!
//! ```text
//! cargo run --release --example efficiency_sweep -- [seeds]
//! ```

use ecd::evaluation::match_against_memberships;
use ecd::generator::{generate, items_per_user, GeneratorConfig};
use ecd::inference::fit;
use ecd::HyperParams;

const RATES: [f64; 6] = [1.0, 2.0, 4.0, 8.0, 10.0, 16.0];

fn main() -> ecd::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count must be an integer"));
    println!("target\tactual\titems\trho\tmae_theta_mem");
    for rate in RATES {
        let (mut actual, mut items, mut rho, mut mae) = (0.0, 0, 0.0, 0.0);
        for seed in 0..seeds {
            let config = GeneratorConfig::default().with_seed(seed).with_items_per_user(rate, 256)?;
            let (truth, _) = generate(&config)?;
            let hyper = HyperParams { num_communities: config.eta.len(), seed, ..HyperParams::default() };
            let fitted = fit(&truth.graph, &truth.cascades, &hyper)?.fitted;
            let r = match_against_memberships(&truth.memberships, &fitted)?;
            actual += items_per_user(&truth.cascades);
            items += config.num_items;
            rho += r.rho_node_polarity;
            mae += r.mae_theta_membership;
        }
        let n = seeds as f64;
        println!("{rate}\t{:.2}\t{}\t{:.3}\t{:.3}", actual / n, items / seeds as usize, rho / n, mae / n);
    }
    Ok(())
}

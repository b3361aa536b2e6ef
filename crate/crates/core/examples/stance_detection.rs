//! Stance detection on nodes whose activity is hidden from the fit.
//!
//! ```text
//! cargo run --release --example stance_detection -- [polarized|balanced|social] [seeds] [holdout]
//! ```

use ecd::generator::{generate, GeneratorConfig, Preset};
use ecd::prediction::run_stance_benchmark;
use ecd::HyperParams;

fn main() -> ecd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = match args.first().map(String::as_str) {
        Some("social") => Preset::Social,
        Some("balanced") => Preset::Balanced,
        _ => Preset::Polarized,
    };
    let seeds: u64 = args.get(1).map_or(5, |s| s.parse().expect("seed count must be an integer"));
    let holdout: f64 = args.get(2).map_or(0.1, |s| s.parse().expect("holdout must be a number"));

    println!("seed\tecd\t1-hop\tpos\tneg");
    for seed in 0..seeds {
        let config = GeneratorConfig::preset(preset).with_seed(seed);
        let (truth, _) = generate(&config)?;
        let hyper = HyperParams { num_communities: config.eta.len(), seed, ..HyperParams::default() };
        let r = run_stance_benchmark(&truth, holdout, &hyper, seed)?;
        println!("{seed}\t{:.3}\t{:.3}\t{}\t{}", r.ecd_auc, r.one_hop_auc, r.n_pos, r.n_neg);
    }
    Ok(())
}

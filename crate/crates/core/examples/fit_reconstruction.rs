//! Fit synthetic datasets and measure how well the planted communities are
//! recovered.
//!
//! ```text
//! cargo run --release --example fit_reconstruction -- [polarized|balanced|social] [seeds]
//! ```

use ecd::evaluation::match_against_memberships;
use ecd::generator::{generate, GeneratorConfig, Preset};
use ecd::inference::fit;
use ecd::HyperParams;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

fn main() -> ecd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = match args.first().map(String::as_str) {
        Some("social") => Preset::Social,
        Some("balanced") => Preset::Balanced,
        _ => Preset::Polarized,
    };
    let seeds: u64 = args.get(1).map_or(5, |s| s.parse().expect("seed count must be an integer"));

    let mut cols: [Vec<f64>; 6] = Default::default();
    println!("seed\trho\tmae_eta\tmae_theta\tmae_phi\tmae_theta_mem\tmae_phi_mem\titers");
    for seed in 0..seeds {
        let config = GeneratorConfig::preset(preset).with_seed(seed);
        let (truth, _) = generate(&config)?;
        let hyper = HyperParams {
            num_communities: config.eta.len(),
            social_prior: config.social_prior,
            echo_prior: config.echo_prior,
            seed,
            ..HyperParams::default()
        };
        let report = fit(&truth.graph, &truth.cascades, &hyper)?;
        let r = match_against_memberships(&truth.memberships, &report.fitted)?;
        let row = [r.rho_node_polarity, r.mae_eta, r.mae_theta, r.mae_phi, r.mae_theta_membership, r.mae_phi_membership];
        println!(
            "{seed}\t{:.3}\t{:.3}\t{:.4}\t{:.4}\t{:.3}\t{:.3}\t{}",
            row[0], row[1], row[2], row[3], row[4], row[5], report.iterations
        );
        for (col, x) in cols.iter_mut().zip(row) {
            col.push(x);
        }
    }
    let summary: Vec<String> = cols
        .iter()
        .map(|c| {
            let (m, s) = mean_std(c);
            format!("{m:.3}±{s:.3}")
        })
        .collect();
    println!("mean\t{}", summary.join("\t"));
    Ok(())
}

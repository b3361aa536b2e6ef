//! Generate a synthetic dataset and describe it.
//!
//! ```text
//! cargo run --release --example generate_synthetic -- [polarized|balanced|social] [seed] [out-dir]
//! ```
//! With an output directory the dataset is also written there in the same
//! layout as `ecd generate`.

use std::path::Path;

use ecd::generator::{generate, items_per_user, GeneratorConfig, Preset};
use ecd::io::{self, Manifest};

fn parse_preset(s: &str) -> Preset {
    match s {
        "social" => Preset::Social,
        "balanced" => Preset::Balanced,
        "polarized" => Preset::Polarized,
        other => panic!("unknown preset {other:?}"),
    }
}

fn main() -> ecd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset = args.first().map_or(Preset::Polarized, |s| parse_preset(s));
    let seed = args.get(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let config = GeneratorConfig::preset(preset).with_seed(seed);
    let (truth, trace) = generate(&config)?;

    let sizes: Vec<usize> = truth.cascades.items().iter().map(|i| i.activated.len()).collect();
    let k = config.eta.len();
    let mut links_per = vec![0usize; k];
    let mut items_per = vec![0usize; k];
    trace.links.iter().for_each(|&c| links_per[c] += 1);
    trace.items.iter().for_each(|&c| items_per[c] += 1);

    println!("preset {preset:?}, seed {seed}");
    println!("nodes {}, links {}, items {}", truth.graph.num_nodes(), truth.graph.edges().len(), truth.cascades.len());
    println!(
        "cascade size: mean {:.1}, max {}; items per user {:.1}",
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        sizes.iter().max().unwrap(),
        items_per_user(&truth.cascades)
    );
    println!("community\teta\tlinks\titems");
    for c in 0..k {
        println!("{c}\t{:+.1}\t{}\t{}", config.eta[c], links_per[c], items_per[c]);
    }
    let aligned = trace
        .items
        .iter()
        .zip(truth.cascades.items())
        .filter(|(&c, item)| item.polarity * config.eta[c] > 0.0)
        .count();
    println!("items whose polarity agrees with their community: {aligned}/{}", truth.cascades.len());

    if let Some(dir) = args.get(2).map(Path::new) {
        let manifest = Manifest::new(config);
        io::write_text(&dir.join(&manifest.edges), &io::format_edges(&truth.graph))?;
        io::write_text(&dir.join(&manifest.cascades), &io::format_cascades(&truth.cascades))?;
        io::write_ground_truth(&dir.join(&manifest.ground_truth), &truth.memberships)?;
        io::write_text(&dir.join(&manifest.trace), &io::format_trace(&trace, &truth.graph, &truth.cascades))?;
        io::write_json(&dir.join(io::MANIFEST_FILE), &manifest)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

//! Seeded synthetic networks with planted echo chambers.
//!
//! Generation runs in three stages on one RNG stream: memberships are drawn
//! per node, follow links are drawn from the link process, and item cascades
//! are grown over the resulting graph.

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{priors_from_eta, CascadeSet, Item, ModelParams, SocialGraph, Table};

/// Draws attempted per item before giving up on finding an accepting community.
pub const REJECTION_CAP: usize = 10_000;

/// Redraws attempted per link before giving up on a self-loop-free, unseen pair.
pub const LINK_REDRAW_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Links mostly explained by social communities (s=16, h=8).
    Social,
    /// s=8, h=8.
    Balanced,
    /// Links mostly explained by echo chambers (s=8, h=16).
    Polarized,
}

impl Preset {
    pub fn priors(self) -> (f64, f64) {
        match self {
            Preset::Social => (16.0, 8.0),
            Preset::Balanced => (8.0, 8.0),
            Preset::Polarized => (8.0, 16.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_nodes: usize,
    pub eta: Vec<f64>,
    /// Concentration of the echo-chamber membership Dirichlets.
    pub sigma_echo: f64,
    /// Concentration of the social membership Dirichlet.
    pub sigma_social: f64,
    /// Probability of each membership switch.
    pub delta: f64,
    /// Beta shape of item polarities; small values push items to the extremes.
    pub mu: f64,
    pub num_links: usize,
    pub num_items: usize,
    pub social_prior: f64,
    pub echo_prior: f64,
    pub epsilon: f64,
    pub max_cascade_size: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::preset(Preset::Polarized)
    }
}

impl GeneratorConfig {
    pub fn preset(preset: Preset) -> Self {
        let (s, h) = preset.priors();
        GeneratorConfig {
            num_nodes: 256,
            eta: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            sigma_echo: 10.0,
            sigma_social: 10.0,
            delta: 0.3,
            mu: 0.25,
            num_links: 2048,
            num_items: 2048,
            social_prior: s,
            echo_prior: h,
            epsilon: 1e-5,
            max_cascade_size: 64,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 || self.num_links == 0 || self.num_items == 0 {
            return Err(Error::input("node, link and item counts must be positive (at least 2 nodes)"));
        }
        if self.eta.is_empty() || self.eta.iter().any(|e| !(e.abs() <= 1.0)) {
            return Err(Error::input("eta must be a nonempty vector in [-1, 1]"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::input(format!("delta {} outside [0, 1]", self.delta)));
        }
        for (name, x) in [
            ("mu", self.mu),
            ("sigma_echo", self.sigma_echo),
            ("sigma_social", self.sigma_social),
            ("social prior", self.social_prior),
            ("echo prior", self.echo_prior),
            ("epsilon", self.epsilon),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::input(format!("{name} must be positive, got {x}")));
            }
        }
        if self.max_cascade_size == 0 {
            return Err(Error::input("max cascade size must be positive"));
        }
        Ok(())
    }

    /// This config with `num_items` chosen so that users share about
    /// `items_per_user` items on average. The mean cascade size is measured
    /// on a pilot run with `pilot_items` items and the same seed.
    pub fn with_items_per_user(mut self, items_per_user: f64, pilot_items: usize) -> Result<Self> {
        if !(items_per_user > 0.0) || !items_per_user.is_finite() {
            return Err(Error::input(format!("items per user must be positive, got {items_per_user}")));
        }
        let mut pilot = self.clone();
        pilot.num_items = pilot_items;
        let (truth, _) = generate(&pilot)?;
        let mean_size = truth.cascades.num_activations() as f64 / truth.cascades.len() as f64;
        self.num_items = ((items_per_user * self.num_nodes as f64 / mean_size).round() as usize).max(1);
        Ok(self)
    }
}

/// Average number of items each user shares.
pub fn items_per_user(cascades: &CascadeSet) -> f64 {
    cascades.num_activations() as f64 / cascades.num_nodes() as f64
}

/// Sampled memberships: the model parameters plus the per-node mixtures they
/// were assembled from (`node_theta`, `node_phi` are `N x K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memberships {
    pub params: ModelParams,
    pub node_theta: Table,
    pub node_phi: Table,
}

impl Memberships {
    /// Ground-truth node polarity `eta . theta_u` from the unnormalized
    /// per-node mixtures. Nodes outside every echo chamber get 0.
    pub fn node_polarities(&self) -> Vec<f64> {
        (0..self.node_theta.rows())
            .map(|u| {
                self.node_theta
                    .row(u)
                    .iter()
                    .zip(&self.params.eta)
                    .map(|(t, e)| t * e)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub memberships: Memberships,
    pub graph: SocialGraph,
    pub cascades: CascadeSet,
}

impl GroundTruth {
    pub fn params(&self) -> &ModelParams {
        &self.memberships.params
    }
}

/// Generating community of every link and item, in generation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub links: Vec<usize>,
    pub items: Vec<usize>,
}

pub fn generate(config: &GeneratorConfig) -> Result<(GroundTruth, Trace)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let memberships = sample_memberships(config, &mut rng)?;
    let (edges, link_trace) = generate_links(&memberships.params, config, &mut rng)?;
    let graph = SocialGraph::new(config.num_nodes, edges)?;
    let (cascades, item_trace) = generate_items(&memberships.params, &graph, config, &mut rng)?;
    Ok((
        GroundTruth {
            memberships,
            graph,
            cascades,
        },
        Trace {
            links: link_trace,
            items: item_trace,
        },
    ))
}

fn sample_dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut draw = Vec::with_capacity(alpha.len());
    for &a in alpha {
        if a > 0.0 {
            let g = Gamma::new(a, 1.0).map_err(|e| Error::Generation(e.to_string()))?;
            draw.push(g.sample(rng));
        } else {
            draw.push(0.0);
        }
    }
    let total: f64 = draw.iter().sum();
    if total > 0.0 {
        draw.iter_mut().for_each(|x| *x /= total);
        return Ok(draw);
    }
    // Every gamma draw underflowed; fall back to the Dirichlet mean.
    let total: f64 = alpha.iter().sum();
    if total > 0.0 {
        Ok(alpha.iter().map(|a| a / total).collect())
    } else {
        Ok(draw)
    }
}

pub fn sample_memberships<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> Result<Memberships> {
    let k = config.eta.len();
    let n = config.num_nodes;
    let eps = config.epsilon;
    let alpha_pos: Vec<f64> = config
        .eta
        .iter()
        .map(|e| e.max(0.0) * config.sigma_echo + eps)
        .collect();
    let alpha_neg: Vec<f64> = config
        .eta
        .iter()
        .map(|e| (-e).max(0.0) * config.sigma_echo + eps)
        .collect();
    let alpha_social: Vec<f64> = config
        .eta
        .iter()
        .map(|e| (1.0 - e.abs()) * config.sigma_social)
        .collect();

    let mut node_theta = Table::zeros(n, k);
    let mut node_phi = Table::zeros(n, k);
    for u in 0..n {
        let pos = sample_dirichlet(&alpha_pos, rng)?;
        let neg = sample_dirichlet(&alpha_neg, rng)?;
        let social = sample_dirichlet(&alpha_social, rng)?;
        let up = f64::from(u8::from(rng.random_bool(config.delta)));
        let un = f64::from(u8::from(rng.random_bool(config.delta)));
        for c in 0..k {
            *node_theta.get_mut(u, c) = up * pos[c] + (1.0 - up) * un * neg[c];
            *node_phi.get_mut(u, c) = (1.0 - up * un) * social[c];
        }
    }

    let theta = community_rows(&node_theta, eps);
    let phi = community_rows(&node_phi, eps);
    let params = ModelParams::new(config.eta.clone(), theta, phi)?;
    Ok(Memberships {
        params,
        node_theta,
        node_phi,
    })
}

/// Transposes `N x K` node mixtures into `K x N` rows, each normalized over
/// nodes. Rows without mass are spread uniformly.
fn community_rows(node_major: &Table, eps: f64) -> Table {
    let (n, k) = (node_major.rows(), node_major.cols());
    let mut out = Table::zeros(k, n);
    for c in 0..k {
        let row = out.row_mut(c);
        for (u, x) in row.iter_mut().enumerate() {
            *x = node_major.get(u, c);
        }
        let mut total: f64 = row.iter().sum();
        if total <= 0.0 {
            row.iter_mut().for_each(|x| *x += eps);
            total = eps * n as f64;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}

fn row_samplers(table: &Table) -> Vec<Option<WeightedIndex<f64>>> {
    (0..table.rows())
        .map(|c| WeightedIndex::new(table.row(c)).ok())
        .collect()
}

fn categorical(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| Error::Generation(e.to_string()))
}

/// Draws `config.num_links` distinct arcs. Returns the arcs and the generating
/// community of each.
pub fn generate_links<R: Rng>(
    params: &ModelParams,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
    let pi = priors_from_eta(&params.eta, config.social_prior, config.echo_prior, config.epsilon);
    let pick_community = categorical(&pi.link)?;
    let theta_rows = row_samplers(&params.theta);
    let phi_rows = row_samplers(&params.phi);

    let mut seen = std::collections::HashSet::with_capacity(config.num_links);
    let mut edges = Vec::with_capacity(config.num_links);
    let mut trace = Vec::with_capacity(config.num_links);
    while edges.len() < config.num_links {
        let mut attempts = 0;
        loop {
            let c = pick_community.sample(rng);
            let echo = rng.random_bool(params.eta[c].abs());
            let (rows, kind) = if echo {
                (&theta_rows, "theta")
            } else {
                (&phi_rows, "phi")
            };
            let sampler = rows[c].as_ref().ok_or_else(|| {
                Error::Generation(format!("community {c} has an empty {kind} row"))
            })?;
            let u = sampler.sample(rng);
            let v = sampler.sample(rng);
            if u != v && seen.insert((u, v)) {
                edges.push((u, v));
                trace.push(c);
                break;
            }
            attempts += 1;
            if attempts == LINK_REDRAW_CAP {
                return Err(Error::Generation(format!(
                    "no new self-loop-free link after {LINK_REDRAW_CAP} draws"
                )));
            }
        }
    }
    Ok((edges, trace))
}

/// Grows `config.num_items` cascades over `graph`. Returns the cascades and
/// the generating community of each item.
pub fn generate_items<R: Rng>(
    params: &ModelParams,
    graph: &SocialGraph,
    config: &GeneratorConfig,
    rng: &mut R,
) -> Result<(CascadeSet, Vec<usize>)> {
    let n = graph.num_nodes();
    let pi = priors_from_eta(&params.eta, config.social_prior, config.echo_prior, config.epsilon);
    let pick_community = categorical(&pi.flow)?;
    let polarity_dist =
        Beta::new(config.mu, config.mu).map_err(|e| Error::Generation(e.to_string()))?;
    let theta_rows = row_samplers(&params.theta);
    let followers = graph.followers();

    let mut items = Vec::with_capacity(config.num_items);
    let mut trace = Vec::with_capacity(config.num_items);
    let mut active = vec![false; n];
    let mut in_frontier = vec![false; n];
    for i in 0..config.num_items {
        // Polarity and community are redrawn together until the community
        // accepts the item.
        let mut accepted = None;
        for _ in 0..REJECTION_CAP {
            let polarity = (2.0 * polarity_dist.sample(rng) - 1.0).clamp(-1.0, 1.0);
            let c = pick_community.sample(rng);
            let gate = (polarity * params.eta[c]).max(0.0);
            if rng.random_bool(gate.min(1.0)) {
                accepted = Some((polarity, c));
                break;
            }
        }
        let (polarity, c) = accepted.ok_or_else(|| {
            Error::Generation(format!(
                "item {i} rejected {REJECTION_CAP} times; are all |eta| near 0?"
            ))
        })?;
        let seed = theta_rows[c]
            .as_ref()
            .ok_or_else(|| Error::Generation(format!("community {c} has an empty theta row")))?
            .sample(rng);

        let theta = params.theta.row(c);
        let mut activated = vec![seed];
        let mut frontier = Vec::new();
        active[seed] = true;
        extend_frontier(seed, &followers, &active, &mut in_frontier, &mut frontier);
        while activated.len() < config.max_cascade_size && !frontier.is_empty() {
            let weights: Vec<f64> = frontier.iter().map(|&u| theta[u]).collect();
            let Ok(pick) = WeightedIndex::new(&weights) else {
                break;
            };
            let u = frontier.swap_remove(pick.sample(rng));
            in_frontier[u] = false;
            active[u] = true;
            activated.push(u);
            extend_frontier(u, &followers, &active, &mut in_frontier, &mut frontier);
        }
        for &u in activated.iter().chain(&frontier) {
            active[u] = false;
            in_frontier[u] = false;
        }
        items.push(Item {
            id: format!("i{i}"),
            polarity,
            activated,
        });
        trace.push(c);
    }
    Ok((CascadeSet::new(n, items)?, trace))
}

fn extend_frontier(
    u: usize,
    followers: &[Vec<usize>],
    active: &[bool],
    in_frontier: &mut [bool],
    frontier: &mut Vec<usize>,
) {
    for &w in &followers[u] {
        if !active[w] && !in_frontier[w] {
            in_frontier[w] = true;
            frontier.push(w);
        }
    }
}

//! Downstream tasks on a fitted model: stance detection and next-activation
//! prediction, with the popularity and neighborhood baselines they are
//! compared against.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::roc_auc;
use crate::generator::GroundTruth;
use crate::inference::fit;
use crate::model::{priors_from_eta, CascadeSet, HyperParams, Item, ModelParams, SocialGraph};

/// A score that fell back to a default because its inputs were degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub flagged: bool,
}

impl Flagged {
    fn ok(value: f64) -> Self {
        Flagged {
            value,
            flagged: false,
        }
    }

    fn fallback() -> Self {
        Flagged {
            value: 0.0,
            flagged: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceScore {
    pub node: usize,
    pub score: f64,
    /// Set when the node has no theta mass and the score defaulted to 0.
    pub flagged: bool,
}

/// Polarity of each node averaged over its community distribution.
pub fn stance_scores(fitted: &ModelParams) -> Vec<StanceScore> {
    (0..fitted.num_nodes())
        .map(|u| match fitted.node_membership(u) {
            Some(m) => StanceScore {
                node: u,
                score: m.iter().zip(&fitted.eta).map(|(w, e)| w * e).sum::<f64>().clamp(-1.0, 1.0),
                flagged: false,
            },
            None => StanceScore {
                node: u,
                score: 0.0,
                flagged: true,
            },
        })
        .collect()
}

/// Mean polarity over the activations of the users each node follows.
pub fn one_hop_averages(graph: &SocialGraph, cascades: &CascadeSet) -> Vec<Flagged> {
    let n = graph.num_nodes();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for item in cascades.items() {
        for &v in &item.activated {
            sum[v] += item.polarity;
            count[v] += 1;
        }
    }
    graph
        .followees()
        .iter()
        .map(|followees| {
            let (s, c) = followees
                .iter()
                .fold((0.0, 0), |(s, c), &v| (s + sum[v], c + count[v]));
            if c == 0 {
                Flagged::fallback()
            } else {
                Flagged::ok(s / c as f64)
            }
        })
        .collect()
}

pub fn one_hop_average(graph: &SocialGraph, cascades: &CascadeSet, user: usize) -> Result<Flagged> {
    if user >= graph.num_nodes() {
        return Err(Error::Index {
            what: "node",
            index: user,
            len: graph.num_nodes(),
        });
    }
    Ok(one_hop_averages(graph, cascades)[user])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationQuery {
    pub user: usize,
    pub item: String,
    /// Users visible as activated on the item at training time.
    pub observed: Vec<usize>,
}

/// Next-activation scorer with the flow prior precomputed.
pub struct ActivationScorer<'a> {
    params: &'a ModelParams,
    flow: Vec<f64>,
}

impl<'a> ActivationScorer<'a> {
    pub fn new(params: &'a ModelParams, hyper: &HyperParams) -> Self {
        let flow = priors_from_eta(
            &params.eta,
            hyper.social_prior,
            hyper.echo_prior,
            hyper.epsilon,
        )
        .flow;
        ActivationScorer { params, flow }
    }

    /// Largest marginal sharing-link probability between `user` and any
    /// observed node. Indices must be valid.
    pub fn score(&self, user: usize, observed: &[usize], polarity: f64) -> f64 {
        let p = self.params;
        let weights: Vec<f64> = (0..p.num_communities())
            .map(|c| self.flow[c] * (polarity * p.eta[c]).max(0.0) * p.theta.get(c, user))
            .collect();
        observed
            .iter()
            .map(|&v| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(c, w)| w * p.theta.get(c, v))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

pub fn next_activation_score(
    fitted: &ModelParams,
    hyper: &HyperParams,
    query: &ActivationQuery,
    polarity: f64,
) -> Result<f64> {
    if query.observed.is_empty() {
        return Err(Error::input(format!(
            "item {}: no observed activations to score from",
            query.item
        )));
    }
    if query.observed.contains(&query.user) {
        return Err(Error::input(format!(
            "user {} is already activated on item {}",
            query.user, query.item
        )));
    }
    let n = fitted.num_nodes();
    if let Some(&bad) = query.observed.iter().chain([&query.user]).find(|&&u| u >= n) {
        return Err(Error::Index {
            what: "node",
            index: bad,
            len: n,
        });
    }
    Ok(ActivationScorer::new(fitted, hyper).score(query.user, &query.observed, polarity))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Activation counts per user, overall and split by item polarity sign.
#[derive(Debug, Clone)]
pub struct Popularity {
    total: Vec<usize>,
    /// Indexed by `sign + 1`.
    by_sign: [Vec<usize>; 3],
    grand_total: usize,
    sign_totals: [usize; 3],
}

impl Popularity {
    pub fn new(cascades: &CascadeSet) -> Result<Self> {
        if cascades.is_empty() {
            return Err(Error::input("popularity baselines need a nonempty cascade set"));
        }
        let n = cascades.num_nodes();
        let mut pop = Popularity {
            total: vec![0; n],
            by_sign: [vec![0; n], vec![0; n], vec![0; n]],
            grand_total: 0,
            sign_totals: [0; 3],
        };
        for item in cascades.items() {
            let s = (sign(item.polarity) + 1) as usize;
            for &u in &item.activated {
                pop.total[u] += 1;
                pop.by_sign[s][u] += 1;
                pop.grand_total += 1;
                pop.sign_totals[s] += 1;
            }
        }
        Ok(pop)
    }

    pub fn most_pop(&self, user: usize) -> f64 {
        if self.grand_total == 0 {
            return 0.0;
        }
        self.total[user] as f64 / self.grand_total as f64
    }

    pub fn most_pop_star(&self, user: usize, polarity: f64) -> Flagged {
        let s = (sign(polarity) + 1) as usize;
        if self.sign_totals[s] == 0 {
            return Flagged::fallback();
        }
        Flagged::ok(self.by_sign[s][user] as f64 / self.sign_totals[s] as f64)
    }
}

fn check_user(cascades: &CascadeSet, user: usize) -> Result<()> {
    if user >= cascades.num_nodes() {
        return Err(Error::Index {
            what: "node",
            index: user,
            len: cascades.num_nodes(),
        });
    }
    Ok(())
}

pub fn mostpop_score(cascades: &CascadeSet, user: usize) -> Result<f64> {
    check_user(cascades, user)?;
    Ok(Popularity::new(cascades)?.most_pop(user))
}

pub fn mostpop_star_score(cascades: &CascadeSet, user: usize, polarity: f64) -> Result<Flagged> {
    check_user(cascades, user)?;
    Ok(Popularity::new(cascades)?.most_pop_star(user, polarity))
}

/// Training cascades with a fraction of each item's activations hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSplit {
    pub train: CascadeSet,
    /// Hidden activations, per item.
    pub masked: Vec<Vec<usize>>,
}

/// Hides `round(fraction * |cascade|)` activations of every cascade with at
/// least two users, clamped so that at least one is hidden and one stays visible.
pub fn mask_activations(cascades: &CascadeSet, fraction: f64, seed: u64) -> Result<MaskedSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::input(format!("mask fraction {fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(cascades.len());
    let mut masked = Vec::with_capacity(cascades.len());
    for item in cascades.items() {
        let n = item.activated.len();
        if n < 2 {
            items.push(item.clone());
            masked.push(Vec::new());
            continue;
        }
        let hide = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut hidden = vec![false; n];
        for i in index::sample(&mut rng, n, hide) {
            hidden[i] = true;
        }
        let (mut visible, mut gone) = (Vec::new(), Vec::new());
        for (&u, &h) in item.activated.iter().zip(&hidden) {
            if h {
                gone.push(u);
            } else {
                visible.push(u);
            }
        }
        items.push(Item {
            id: item.id.clone(),
            polarity: item.polarity,
            activated: visible,
        });
        masked.push(gone);
    }
    Ok(MaskedSplit {
        train: CascadeSet::new(cascades.num_nodes(), items)?,
        masked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAuc {
    pub method: String,
    pub mask_fraction: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Set when negatives were subsampled.
    pub negatives_capped: bool,
}

pub const METHOD_ECD: &str = "ecd";
pub const METHOD_MOSTPOP: &str = "mostpop";
pub const METHOD_MOSTPOP_STAR: &str = "mostpop*";

/// Masks activations, fits on what stays visible, and scores every hidden
/// activation (positive) against every never-activated (user, item) pair
/// (negative). `negative_cap` bounds the negatives drawn per item.
pub fn run_next_activation_benchmark(
    graph: &SocialGraph,
    cascades: &CascadeSet,
    mask_fraction: f64,
    hyper: &HyperParams,
    seed: u64,
    negative_cap: Option<usize>,
) -> Result<Vec<MethodAuc>> {
    let split = mask_activations(cascades, mask_fraction, seed)?;
    let report = fit(graph, &split.train, hyper)?;
    let fitted = &report.fitted;
    let scorer = ActivationScorer::new(fitted, hyper);
    let pop = Popularity::new(&split.train)?;

    let n = graph.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut labels = Vec::new();
    let mut scores: [Vec<f64>; 3] = Default::default();
    let mut capped = false;
    let mut activated = vec![false; n];
    for ((item, visible), hidden) in cascades.items().iter().zip(split.train.items()).zip(&split.masked) {
        item.activated.iter().for_each(|&u| activated[u] = true);
        let mut negatives: Vec<usize> = (0..n).filter(|&u| !activated[u]).collect();
        item.activated.iter().for_each(|&u| activated[u] = false);
        if let Some(cap) = negative_cap {
            if negatives.len() > cap {
                capped = true;
                let mut keep: Vec<usize> = index::sample(&mut rng, negatives.len(), cap).into_vec();
                keep.sort_unstable();
                negatives = keep.into_iter().map(|i| negatives[i]).collect();
            }
        }
        let queries = hidden
            .iter()
            .map(|&u| (u, true))
            .chain(negatives.into_iter().map(|u| (u, false)));
        for (u, label) in queries {
            labels.push(label);
            scores[0].push(scorer.score(u, &visible.activated, item.polarity));
            scores[1].push(pop.most_pop(u));
            scores[2].push(pop.most_pop_star(u, item.polarity).value);
        }
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    [METHOD_ECD, METHOD_MOSTPOP, METHOD_MOSTPOP_STAR]
        .iter()
        .zip(&scores)
        .map(|(method, s)| {
            Ok(MethodAuc {
                method: method.to_string(),
                mask_fraction,
                auc: roc_auc(s, &labels)?,
                n_pos,
                n_neg,
                negatives_capped: capped,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceReport {
    pub ecd_auc: f64,
    pub one_hop_auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub held_out: Vec<usize>,
}

/// Hides every activation of a random `holdout_fraction` of nodes, fits on
/// the rest, and ranks the held-out nodes by stance. Labels are the signs of
/// the true node polarities; nodes with zero true polarity are skipped.
pub fn run_stance_benchmark(
    truth: &GroundTruth,
    holdout_fraction: f64,
    hyper: &HyperParams,
    seed: u64,
) -> Result<StanceReport> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::input(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    let n = truth.graph.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = ((holdout_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut held_out = index::sample(&mut rng, n, count).into_vec();
    held_out.sort_unstable();
    let mut is_held = vec![false; n];
    held_out.iter().for_each(|&u| is_held[u] = true);

    let items = truth
        .cascades
        .items()
        .iter()
        .map(|item| Item {
            id: item.id.clone(),
            polarity: item.polarity,
            activated: item.activated.iter().copied().filter(|&u| !is_held[u]).collect(),
        })
        .collect();
    let train = CascadeSet::new(n, items)?;
    let report = fit(&truth.graph, &train, hyper)?;
    let stance = stance_scores(&report.fitted);
    let one_hop = one_hop_averages(&truth.graph, &train);
    let polarity = truth.memberships.node_polarities();

    let (mut labels, mut ecd, mut hop) = (Vec::new(), Vec::new(), Vec::new());
    for &u in &held_out {
        if polarity[u] == 0.0 {
            continue;
        }
        labels.push(polarity[u] > 0.0);
        ecd.push(stance[u].score);
        hop.push(one_hop[u].value);
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(StanceReport {
        ecd_auc: roc_auc(&ecd, &labels)?,
        one_hop_auc: roc_auc(&hop, &labels)?,
        n_pos,
        n_neg: labels.len() - n_pos,
        held_out,
    })
}

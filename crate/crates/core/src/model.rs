//! Domain types and the probability kernels of the echo-chamber model.
//!
//! A model with `K` communities over `N` users is described by
//!
//! * `eta[c]` in `[-1, 1]`: the polarity of community `c`. `|eta[c]|` is the
//!   degree to which `c` behaves as an echo chamber rather than a social
//!   community.
//! * `theta[c][u]`: polarized engagement, a categorical distribution over
//!   users for every community.
//! * `phi[c][u]`: social engagement, also a categorical distribution over users.
//!
//! All kernels here are pure functions of immutable inputs.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below this value are clamped before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// `ln(max(x, PROB_FLOOR))`.
#[inline]
pub fn floored_ln(x: f64) -> f64 {
    x.max(PROB_FLOOR).ln()
}

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Table {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Table {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Ok(Table {
            rows: n_rows,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Copy with rows reordered so that output row `i` is input row `order[i]`.
    pub fn permute_rows(&self, order: &[usize]) -> Table {
        let mut out = Table::zeros(self.rows, self.cols);
        for (i, &src) in order.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(src));
        }
        out
    }
}

/// Directed follow graph. An edge `(u, v)` means user `u` is followed by
/// user `v`, so content shared by `u` is visible to `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    duplicates_removed: usize,
}

impl SocialGraph {
    /// Validates and deduplicates `edges`, keeping first occurrences in order.
    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut kept = Vec::with_capacity(edges.len());
        let mut duplicates_removed = 0;
        for (u, v) in edges {
            check_node(u, num_nodes)?;
            check_node(v, num_nodes)?;
            if u == v {
                return Err(Error::input(format!("self-loop on node {u}")));
            }
            if seen.insert((u, v)) {
                kept.push((u, v));
            } else {
                duplicates_removed += 1;
            }
        }
        Ok(SocialGraph {
            num_nodes,
            edges: kept,
            duplicates_removed,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn duplicates_removed(&self) -> usize {
        self.duplicates_removed
    }

    /// `followers[v]` lists every `u` with an edge `(v, u)`.
    pub fn followers(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
        }
        adj
    }

    /// `followees[u]` lists every `v` with an edge `(v, u)`: the users `u` follows.
    pub fn followees(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[v].push(u);
        }
        adj
    }

    /// Adds an edge if it is new. Returns whether the graph changed.
    pub fn insert_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        check_node(u, self.num_nodes)?;
        check_node(v, self.num_nodes)?;
        if u == v {
            return Err(Error::input(format!("self-loop on node {u}")));
        }
        if self.edges.contains(&(u, v)) {
            return Ok(false);
        }
        self.edges.push((u, v));
        Ok(true)
    }

    /// Activated users, after the first, with no in-neighbor activated
    /// before them. Empty when the cascade is connected through follow edges.
    pub fn unexplained_activations(&self, item: &Item) -> Vec<usize> {
        let edges: HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        unexplained(&edges, &item.activated)
    }

    /// Adds an edge from each cascade's earliest activated user to every
    /// later user with no earlier activated in-neighbor. Returns the number
    /// of edges added.
    pub fn repair_cascades(&mut self, cascades: &CascadeSet) -> Result<usize> {
        if cascades.num_nodes() != self.num_nodes {
            return Err(Error::shape(format!(
                "graph has {} nodes but cascades reference {}",
                self.num_nodes,
                cascades.num_nodes()
            )));
        }
        let mut edges: HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        let mut added = 0;
        for item in cascades.items() {
            let Some(&first) = item.activated.first() else {
                continue;
            };
            for u in unexplained(&edges, &item.activated) {
                edges.insert((first, u));
                self.edges.push((first, u));
                added += 1;
            }
        }
        Ok(added)
    }
}

fn unexplained(edges: &HashSet<(usize, usize)>, activated: &[usize]) -> Vec<usize> {
    (1..activated.len())
        .filter(|&j| !activated[..j].iter().any(|&v| edges.contains(&(v, activated[j]))))
        .map(|j| activated[j])
        .collect()
}

fn check_node(u: usize, n: usize) -> Result<()> {
    if u >= n {
        return Err(Error::Index {
            what: "node",
            index: u,
            len: n,
        });
    }
    Ok(())
}

/// A polarized item and the users who reshared it, in activation order.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    pub polarity: f64,
    pub activated: Vec<usize>,
}

impl Item {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if !(self.polarity.abs() <= 1.0) {
            return Err(Error::input(format!(
                "item {}: polarity {} outside [-1, 1]",
                self.id, self.polarity
            )));
        }
        let mut seen = HashSet::with_capacity(self.activated.len());
        for &u in &self.activated {
            check_node(u, num_nodes)?;
            if !seen.insert(u) {
                return Err(Error::input(format!(
                    "item {}: node {u} activated twice",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Co-sharing evidence: users `u < v` both reshared item `item`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharingLink {
    pub u: usize,
    pub v: usize,
    pub polarity: f64,
    /// Index of the item within its [`CascadeSet`].
    pub item: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSet {
    num_nodes: usize,
    items: Vec<Item>,
}

impl CascadeSet {
    pub fn new(num_nodes: usize, items: Vec<Item>) -> Result<Self> {
        for item in &items {
            item.validate(num_nodes)?;
        }
        Ok(CascadeSet { num_nodes, items })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// One sharing link per unordered activated pair per item. `pair_cap`
    /// bounds the number of pairs taken from any single item.
    pub fn sharing_links(&self, pair_cap: Option<usize>) -> Vec<SharingLink> {
        let mut out = Vec::new();
        for (idx, item) in self.items.iter().enumerate() {
            let cap = pair_cap.unwrap_or(usize::MAX);
            let mut taken = 0;
            'pairs: for (i, &a) in item.activated.iter().enumerate() {
                for &b in &item.activated[i + 1..] {
                    if taken == cap {
                        break 'pairs;
                    }
                    out.push(SharingLink {
                        u: a.min(b),
                        v: a.max(b),
                        polarity: item.polarity,
                        item: idx,
                    });
                    taken += 1;
                }
            }
        }
        out
    }

    /// Total number of (user, item) activations.
    pub fn num_activations(&self) -> usize {
        self.items.iter().map(|i| i.activated.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub eta: Vec<f64>,
    pub theta: Table,
    pub phi: Table,
}

impl ModelParams {
    pub fn new(eta: Vec<f64>, theta: Table, phi: Table) -> Result<Self> {
        let p = ModelParams { eta, theta, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn num_communities(&self) -> usize {
        self.eta.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.theta.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.eta.len();
        if k == 0 {
            return Err(Error::shape("model has no communities"));
        }
        for (name, t) in [("theta", &self.theta), ("phi", &self.phi)] {
            if t.rows() != k || t.cols() != self.theta.cols() {
                return Err(Error::shape(format!(
                    "{name} is {}x{}, expected {k}x{}",
                    t.rows(),
                    t.cols(),
                    self.theta.cols()
                )));
            }
            for c in 0..k {
                let row = t.row(c);
                if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::Numeric(format!("{name} row {c} has invalid entries")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Numeric(format!("{name} row {c} sums to {sum}")));
                }
            }
        }
        if let Some(c) = self.eta.iter().position(|e| !(e.abs() <= 1.0)) {
            return Err(Error::Numeric(format!("eta[{c}] = {} outside [-1, 1]", self.eta[c])));
        }
        Ok(())
    }

    fn check_community(&self, c: usize) -> Result<()> {
        if c >= self.eta.len() {
            return Err(Error::Index {
                what: "community",
                index: c,
                len: self.eta.len(),
            });
        }
        Ok(())
    }

    fn check_node(&self, u: usize) -> Result<()> {
        check_node(u, self.num_nodes())
    }

    /// Per-node community distribution: column `u` of theta renormalized to
    /// sum to one. `None` when the column has no mass.
    pub fn node_membership(&self, u: usize) -> Option<Vec<f64>> {
        let col: Vec<f64> = (0..self.num_communities())
            .map(|c| self.theta.get(c, u))
            .collect();
        let total: f64 = col.iter().sum();
        (total > 0.0).then(|| col.into_iter().map(|x| x / total).collect())
    }

    /// Weighted average of community polarities under each node's membership.
    /// Nodes without theta mass get 0.
    pub fn node_polarities(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|u| match self.node_membership(u) {
                Some(m) => m.iter().zip(&self.eta).map(|(w, e)| w * e).sum(),
                None => 0.0,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Fixed-step gradient ascent.
    Plain,
    /// Adam with default moment decay rates.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub num_communities: usize,
    pub social_prior: f64,
    pub echo_prior: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub steps_per_iter: usize,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Maximum sharing links materialized per item.
    pub pair_cap: Option<usize>,
    /// Relative improvement of the per-iteration mean log-likelihood below
    /// which the fit stops. A negative value disables early stopping.
    pub tolerance: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            num_communities: 8,
            social_prior: 8.0,
            echo_prior: 16.0,
            epsilon: 1e-5,
            learning_rate: 0.05,
            steps_per_iter: 50,
            batch_size: 512,
            max_iters: 200,
            seed: 0,
            optimizer: Optimizer::Plain,
            pair_cap: None,
            tolerance: 1e-4,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_communities == 0 {
            return Err(Error::input("number of communities must be at least 1"));
        }
        for (name, x) in [
            ("social prior", self.social_prior),
            ("echo prior", self.echo_prior),
            ("epsilon", self.epsilon),
            ("learning rate", self.learning_rate),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::input(format!("{name} must be positive, got {x}")));
            }
        }
        if self.steps_per_iter == 0 {
            return Err(Error::input("steps per iteration must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::input("batch size must be at least 2"));
        }
        if self.tolerance.is_nan() {
            return Err(Error::input("tolerance must be a number"));
        }
        if self.pair_cap == Some(0) {
            return Err(Error::input("pair cap must be positive"));
        }
        Ok(())
    }
}

/// Community priors for links (`link`) and propagations (`flow`).
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub link: Vec<f64>,
    pub flow: Vec<f64>,
}

/// Dirichlet parameters `(alpha_link, alpha_flow)` for the given polarities.
pub fn dirichlet_params(eta: &[f64], s: f64, h: f64, epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let link = eta.iter().map(|e| s * (1.0 - e.abs()) + h * e.abs()).collect();
    let flow = eta.iter().map(|e| h * e.abs() + epsilon).collect();
    (link, flow)
}

/// Collapsed priors: each Dirichlet parameter vector normalized to sum 1.
pub fn priors_from_eta(eta: &[f64], s: f64, h: f64, epsilon: f64) -> Priors {
    let (alpha_l, alpha_f) = dirichlet_params(eta, s, h, epsilon);
    Priors {
        link: normalize(alpha_l),
        flow: normalize(alpha_f),
    }
}

pub fn priors(params: &ModelParams, hyper: &HyperParams) -> Result<Priors> {
    hyper.validate()?;
    Ok(priors_from_eta(
        &params.eta,
        hyper.social_prior,
        hyper.echo_prior,
        hyper.epsilon,
    ))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Probability that community `c` produced the whole propagation of `item`.
pub fn cascade_likelihood(params: &ModelParams, item: &Item, c: usize) -> Result<f64> {
    params.check_community(c)?;
    for &u in &item.activated {
        params.check_node(u)?;
    }
    let gate = (item.polarity * params.eta[c]).max(0.0);
    Ok(item
        .activated
        .iter()
        .fold(gate, |acc, &u| acc * params.theta.get(c, u)))
}

/// Log of [`cascade_likelihood`] accumulated in log space, with the floor
/// applied to the result.
pub fn ln_cascade_likelihood(params: &ModelParams, item: &Item, c: usize) -> Result<f64> {
    params.check_community(c)?;
    let gate = (item.polarity * params.eta[c]).max(0.0);
    let mut ln = gate.ln();
    for &u in &item.activated {
        params.check_node(u)?;
        ln += params.theta.get(c, u).ln();
    }
    Ok(ln.max(PROB_FLOOR.ln()))
}

pub fn sharing_link_likelihood(params: &ModelParams, link: &SharingLink, c: usize) -> Result<f64> {
    params.check_community(c)?;
    params.check_node(link.u)?;
    params.check_node(link.v)?;
    Ok(share_prob(params, link.u, link.v, link.polarity, c))
}

pub fn ln_sharing_link_likelihood(
    params: &ModelParams,
    link: &SharingLink,
    c: usize,
) -> Result<f64> {
    sharing_link_likelihood(params, link, c).map(floored_ln)
}

pub fn link_likelihood(params: &ModelParams, u: usize, v: usize, c: usize) -> Result<f64> {
    params.check_community(c)?;
    params.check_node(u)?;
    params.check_node(v)?;
    Ok(link_prob(params, u, v, c))
}

pub fn ln_link_likelihood(params: &ModelParams, u: usize, v: usize, c: usize) -> Result<f64> {
    link_likelihood(params, u, v, c).map(floored_ln)
}

// Unchecked kernels for hot loops; callers guarantee indices are in range.

#[inline]
pub(crate) fn share_prob(params: &ModelParams, u: usize, v: usize, polarity: f64, c: usize) -> f64 {
    (polarity * params.eta[c]).max(0.0) * params.theta.get(c, u) * params.theta.get(c, v)
}

#[inline]
pub(crate) fn link_prob(params: &ModelParams, u: usize, v: usize, c: usize) -> f64 {
    let a = params.eta[c].abs();
    a * params.theta.get(c, u) * params.theta.get(c, v)
        + (1.0 - a) * params.phi.get(c, u) * params.phi.get(c, v)
}

//! Parameter-recovery and community-quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::Memberships;
use crate::model::{CascadeSet, ModelParams, SocialGraph, Table};

/// Largest K for which the matching enumerates every permutation.
pub const EXHAUSTIVE_MATCH_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub mae_eta: f64,
    /// Mean absolute error over all `(c, u)` entries of the row-stochastic theta.
    pub mae_theta: f64,
    pub mae_phi: f64,
    /// Same as `mae_theta` but on per-node community distributions
    /// (theta columns renormalized), which is the scale users read memberships on.
    pub mae_theta_membership: f64,
    pub mae_phi_membership: f64,
    pub rho_node_polarity: f64,
    /// `matching[c]` is the fitted community paired with true community `c`.
    pub matching: Vec<usize>,
}

fn check_same_shape(a: &ModelParams, b: &ModelParams) -> Result<()> {
    if a.num_communities() != b.num_communities() || a.num_nodes() != b.num_nodes() {
        return Err(Error::shape(format!(
            "cannot compare K={} N={} with K={} N={}",
            a.num_communities(),
            a.num_nodes(),
            b.num_communities(),
            b.num_nodes()
        )));
    }
    Ok(())
}

/// Pairing cost of true community `c` with fitted community `d`.
fn pair_cost(truth: &ModelParams, fitted: &ModelParams, c: usize, d: usize) -> f64 {
    let dtheta: f64 = truth
        .theta
        .row(c)
        .iter()
        .zip(fitted.theta.row(d))
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / truth.num_nodes() as f64;
    (truth.eta[c] - fitted.eta[d]).abs() + dtheta
}

/// Permutation of fitted communities minimizing the summed pairing cost.
pub fn best_matching(truth: &ModelParams, fitted: &ModelParams) -> Result<Vec<usize>> {
    check_same_shape(truth, fitted)?;
    let k = truth.num_communities();
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|c| (0..k).map(|d| pair_cost(truth, fitted, c, d)).collect())
        .collect();
    if k <= EXHAUSTIVE_MATCH_MAX_K {
        Ok(exhaustive_assignment(&cost))
    } else {
        Ok(hungarian(&cost))
    }
}

fn exhaustive_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let total = |p: &[usize]| p.iter().enumerate().map(|(c, &d)| cost[c][d]).sum::<f64>();
    let mut best_cost = total(&perm);
    // Heap's algorithm, iterative form.
    let mut counters = vec![0usize; k];
    let mut i = 0;
    while i < k {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let t = total(&perm);
            if t < best_cost {
                best_cost = t;
                best.copy_from_slice(&perm);
            }
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with
/// potentials). Returns `assignment[row] = column`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if col_owner[j] > 0 {
            assignment[col_owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Column-normalized copy; all-zero columns stay zero.
fn node_distributions(t: &Table) -> Table {
    let mut out = t.clone();
    for u in 0..t.cols() {
        let total: f64 = (0..t.rows()).map(|c| t.get(c, u)).sum();
        if total > 0.0 {
            for c in 0..t.rows() {
                *out.get_mut(c, u) /= total;
            }
        }
    }
    out
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Matches fitted communities to true ones and reports reconstruction errors.
/// Node polarities on both sides come from column-renormalized theta.
pub fn match_and_mae(truth: &ModelParams, fitted: &ModelParams) -> Result<ReconstructionReport> {
    let truth_polarity = truth.node_polarities();
    report(truth, &truth_polarity, fitted)
}

/// Like [`match_and_mae`], but the true node polarities come from the
/// generator's unnormalized per-node mixtures.
pub fn match_against_memberships(
    truth: &Memberships,
    fitted: &ModelParams,
) -> Result<ReconstructionReport> {
    report(&truth.params, &truth.node_polarities(), fitted)
}

fn report(
    truth: &ModelParams,
    truth_polarity: &[f64],
    fitted: &ModelParams,
) -> Result<ReconstructionReport> {
    let matching = best_matching(truth, fitted)?;
    let eta: Vec<f64> = matching.iter().map(|&d| fitted.eta[d]).collect();
    let theta = fitted.theta.permute_rows(&matching);
    let phi = fitted.phi.permute_rows(&matching);
    let mae_theta_membership = mean_abs_diff(
        node_distributions(&truth.theta).as_slice(),
        node_distributions(&theta).as_slice(),
    );
    let mae_phi_membership = mean_abs_diff(
        node_distributions(&truth.phi).as_slice(),
        node_distributions(&phi).as_slice(),
    );
    Ok(ReconstructionReport {
        mae_eta: mean_abs_diff(&truth.eta, &eta),
        mae_theta: mean_abs_diff(truth.theta.as_slice(), theta.as_slice()),
        mae_phi: mean_abs_diff(truth.phi.as_slice(), phi.as_slice()),
        mae_theta_membership,
        mae_phi_membership,
        rho_node_polarity: pearson(truth_polarity, &fitted.node_polarities()),
        matching,
    })
}

/// Cut over minimum volume on the undirected view of the graph.
pub fn conductance(graph: &SocialGraph, members: &[usize]) -> Result<f64> {
    let n = graph.num_nodes();
    let mut inside = vec![false; n];
    for &u in members {
        if u >= n {
            return Err(Error::Index {
                what: "node",
                index: u,
                len: n,
            });
        }
        inside[u] = true;
    }
    let size = inside.iter().filter(|&&x| x).count();
    if size == 0 || size == n {
        return Err(Error::input("conductance needs a nonempty proper subset of nodes"));
    }
    Ok(conductance_of_mask(graph, &inside))
}

fn conductance_of_mask(graph: &SocialGraph, inside: &[bool]) -> f64 {
    let (mut cut, mut vol_in, mut vol_out) = (0usize, 0usize, 0usize);
    for &(u, v) in graph.edges() {
        for x in [u, v] {
            if inside[x] {
                vol_in += 1;
            } else {
                vol_out += 1;
            }
        }
        if inside[u] != inside[v] {
            cut += 1;
        }
    }
    let denom = vol_in.min(vol_out);
    if denom == 0 {
        0.0
    } else {
        cut as f64 / denom as f64
    }
}

/// Mean polarity of the items each node activated on (`None` without activations).
pub fn mean_reshare_polarity(cascades: &CascadeSet) -> Vec<Option<f64>> {
    let n = cascades.num_nodes();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for item in cascades.items() {
        for &u in &item.activated {
            sum[u] += item.polarity;
            count[u] += 1;
        }
    }
    sum.into_iter()
        .zip(count)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Fraction of side-assigned members on the majority side. Members without
/// activations or with a zero mean are ignored; 0 when nobody is assigned.
pub fn purity_of_means(means: impl IntoIterator<Item = Option<f64>>) -> f64 {
    let (mut pos, mut neg) = (0usize, 0usize);
    for m in means.into_iter().flatten() {
        if m > 0.0 {
            pos += 1;
        } else if m < 0.0 {
            neg += 1;
        }
    }
    if pos + neg == 0 {
        0.0
    } else {
        pos.max(neg) as f64 / (pos + neg) as f64
    }
}

pub fn purity(cascades: &CascadeSet, members: &[usize]) -> f64 {
    let means = mean_reshare_polarity(cascades);
    purity_of_means(members.iter().filter_map(|&u| means.get(u).copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssessment {
    pub community: usize,
    pub eta: f64,
    pub conductance: f64,
    pub purity: f64,
    pub size: usize,
}

/// Index of the largest theta entry in node `u`'s column; ties go to the lowest index.
pub fn hard_assignment(fitted: &ModelParams) -> Vec<usize> {
    (0..fitted.num_nodes())
        .map(|u| {
            let mut best = 0;
            for c in 1..fitted.num_communities() {
                if fitted.theta.get(c, u) > fitted.theta.get(best, u) {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Conductance and purity of every non-empty community under hard assignment,
/// in community order. A community holding every node has conductance 0.
pub fn assess_communities(
    graph: &SocialGraph,
    cascades: &CascadeSet,
    fitted: &ModelParams,
) -> Result<Vec<CommunityAssessment>> {
    let n = graph.num_nodes();
    if fitted.num_nodes() != n || cascades.num_nodes() != n {
        return Err(Error::shape("model, graph and cascades disagree on the node count"));
    }
    let assignment = hard_assignment(fitted);
    let means = mean_reshare_polarity(cascades);
    let mut out = Vec::new();
    for c in 0..fitted.num_communities() {
        let inside: Vec<bool> = assignment.iter().map(|&a| a == c).collect();
        let size = inside.iter().filter(|&&x| x).count();
        if size == 0 {
            continue;
        }
        let conductance = if size == n {
            0.0
        } else {
            conductance_of_mask(graph, &inside)
        };
        let purity = purity_of_means(
            inside
                .iter()
                .zip(&means)
                .filter(|(inside, _)| **inside)
                .map(|(_, m)| *m),
        );
        out.push(CommunityAssessment {
            community: c,
            eta: fitted.eta[c],
            conductance,
            purity,
            size,
        });
    }
    Ok(out)
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Computed from tie-averaged ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("ROC AUC needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

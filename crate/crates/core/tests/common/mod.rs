//! Independent oracles shared by the integration and acceptance tests. Nothing
//! here calls into the library's probability kernels.

#![allow(dead_code)]

use ecd::inference::{q_value, Batch, Posteriors, RawParams};
use ecd::model::{HyperParams, SharingLink, Table};
use rand::Rng;

pub struct Instance {
    pub raw: RawParams,
    pub hyper: HyperParams,
    pub batch: Batch,
}

fn away_from_zero<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let x = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        x
    } else {
        -x
    }
}

/// A random small problem. Raw eta and item polarities stay away from zero
/// so the objective is smooth around the instance.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    k: usize,
    n: usize,
    max_links: usize,
    max_shares: usize,
) -> Instance {
    let mut raw = RawParams::zeros(k, n);
    for x in raw.eta_raw.iter_mut() {
        *x = away_from_zero(rng, 0.2, 1.5);
    }
    for x in raw.theta_raw.as_mut_slice() {
        *x = rng.random_range(-1.0..1.0);
    }
    for x in raw.phi_raw.as_mut_slice() {
        *x = rng.random_range(-1.0..1.0);
    }
    let pair = |rng: &mut R| loop {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v {
            return (u, v);
        }
    };
    let links = (0..rng.random_range(1..=max_links)).map(|_| pair(rng)).collect();
    let shares = (0..rng.random_range(1..=max_shares))
        .map(|i| {
            let (u, v) = pair(rng);
            SharingLink {
                u: u.min(v),
                v: u.max(v),
                polarity: away_from_zero(rng, 0.1, 1.0),
                item: i,
            }
        })
        .collect();
    let hyper = HyperParams {
        num_communities: k,
        social_prior: rng.random_range(1.0..20.0),
        echo_prior: rng.random_range(1.0..20.0),
        ..HyperParams::default()
    };
    Instance {
        raw,
        hyper,
        batch: Batch { links, shares },
    }
}

pub struct Naive {
    pub eta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

/// tanh, row softmax, and row-renormalized sigmoid, written out directly.
pub fn naive_transform(raw: &RawParams) -> Naive {
    let k = raw.eta_raw.len();
    let n = raw.theta_raw.cols();
    let eta = raw.eta_raw.iter().map(|x| x.tanh()).collect();
    let mut theta = vec![vec![0.0; n]; k];
    let mut phi = vec![vec![0.0; n]; k];
    for c in 0..k {
        let z: f64 = (0..n).map(|u| raw.theta_raw.get(c, u).exp()).sum();
        let s: f64 = (0..n).map(|u| 1.0 / (1.0 + (-raw.phi_raw.get(c, u)).exp())).sum();
        for u in 0..n {
            theta[c][u] = raw.theta_raw.get(c, u).exp() / z;
            phi[c][u] = 1.0 / (1.0 + (-raw.phi_raw.get(c, u)).exp()) / s;
        }
    }
    Naive { eta, theta, phi }
}

/// Link and flow priors from the Dirichlet parameters, normalized.
pub fn naive_priors(eta: &[f64], hyper: &HyperParams) -> (Vec<f64>, Vec<f64>) {
    let (s, h, e) = (hyper.social_prior, hyper.echo_prior, hyper.epsilon);
    let al: Vec<f64> = eta.iter().map(|x| s * (1.0 - x.abs()) + h * x.abs()).collect();
    let af: Vec<f64> = eta.iter().map(|x| h * x.abs() + e).collect();
    let (tl, tf): (f64, f64) = (al.iter().sum(), af.iter().sum());
    (
        al.iter().map(|a| a / tl).collect(),
        af.iter().map(|a| a / tf).collect(),
    )
}

pub fn naive_link(m: &Naive, u: usize, v: usize, c: usize) -> f64 {
    let a = m.eta[c].abs();
    a * m.theta[c][u] * m.theta[c][v] + (1.0 - a) * m.phi[c][u] * m.phi[c][v]
}

pub fn naive_share(m: &Naive, s: &SharingLink, c: usize) -> f64 {
    let gate = s.polarity * m.eta[c];
    if gate <= 0.0 {
        0.0
    } else {
        gate * m.theta[c][s.u] * m.theta[c][s.v]
    }
}

fn normalized(row: Vec<f64>, prior: &[f64]) -> Vec<f64> {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.into_iter().map(|x| x / total).collect()
    } else {
        prior.to_vec()
    }
}

/// Posterior rows by direct enumeration over communities.
pub fn brute_posteriors(raw: &RawParams, hyper: &HyperParams, batch: &Batch) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = naive_transform(raw);
    let k = m.eta.len();
    let (pl, pf) = naive_priors(&m.eta, hyper);
    let gamma = batch
        .links
        .iter()
        .map(|&(u, v)| normalized((0..k).map(|c| naive_link(&m, u, v, c) * pl[c]).collect(), &pl))
        .collect();
    let xi = batch
        .shares
        .iter()
        .map(|s| normalized((0..k).map(|c| naive_share(&m, s, c) * pf[c]).collect(), &pf))
        .collect();
    (gamma, xi)
}

fn floor_ln(x: f64) -> f64 {
    x.max(1e-12).ln()
}

/// Q as a plain double loop over evidence units and communities.
pub fn naive_q(raw: &RawParams, hyper: &HyperParams, batch: &Batch, post: &Posteriors) -> f64 {
    let m = naive_transform(raw);
    let k = m.eta.len();
    let (pl, pf) = naive_priors(&m.eta, hyper);
    let mut q = 0.0;
    for (i, &(u, v)) in batch.links.iter().enumerate() {
        for c in 0..k {
            let w = post.gamma.get(i, c);
            if w != 0.0 {
                q += w * (floor_ln(naive_link(&m, u, v, c)) + floor_ln(pl[c]));
            }
        }
    }
    for (i, s) in batch.shares.iter().enumerate() {
        for c in 0..k {
            let w = post.xi.get(i, c);
            if w != 0.0 {
                q += w * (floor_ln(naive_share(&m, s, c)) + floor_ln(pf[c]));
            }
        }
    }
    q
}

pub fn to_table(rows: &[Vec<f64>], k: usize) -> Table {
    if rows.is_empty() {
        Table::zeros(0, k)
    } else {
        Table::from_rows(rows.to_vec()).unwrap()
    }
}

/// Central finite differences of `q_value` in every raw coordinate.
pub fn fd_gradient(raw: &RawParams, hyper: &HyperParams, batch: &Batch, post: &Posteriors, step: f64) -> Vec<f64> {
    (0..raw.len())
        .map(|i| {
            let mut plus = raw.clone();
            let mut minus = raw.clone();
            *plus.values_mut().nth(i).unwrap() += step;
            *minus.values_mut().nth(i).unwrap() -= step;
            let qp = q_value(&plus, hyper, batch, post).unwrap();
            let qm = q_value(&minus, hyper, batch, post).unwrap();
            (qp - qm) / (2.0 * step)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Ascent property on a frozen batch: some step `λ = 2^-j`, `j ≤ 20`,
/// along the gradient leaves Q no lower than it was.
pub fn ascent_holds(raw: &RawParams, hyper: &HyperParams, batch: &Batch) -> bool {
    let post = ecd::inference::e_step(raw, hyper, batch).unwrap();
    let (q0, grad) = ecd::inference::q_value_and_gradient(raw, hyper, batch, &post).unwrap();
    let mut lambda = 1.0;
    for _ in 0..=20 {
        let mut next = raw.clone();
        next.values_mut().zip(grad.values()).for_each(|(x, g)| *x += lambda * g);
        if q_value(&next, hyper, batch, &post).unwrap() >= q0 {
            return true;
        }
        lambda *= 0.5;
    }
    false
}

/// Pairwise ROC-AUC: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut good, mut total) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                total += 1.0;
                if scores[i] > scores[j] {
                    good += 1.0;
                } else if scores[i] == scores[j] {
                    good += 0.5;
                }
            }
        }
    }
    good / total
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0).max(1.0)).sqrt()
}

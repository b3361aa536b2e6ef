//! Stochastic generalized EM over follow links and sharing links.
//!
//! Each outer iteration freezes the current parameters, then runs a fixed
//! number of inner steps. Every inner step samples a balanced batch, computes
//! community posteriors with the frozen parameters, and takes one ascent step
//! on the expected complete-data log-likelihood `Q` at the live parameters.
//!
//! Parameters are optimized in an unconstrained space ([`RawParams`]):
//! `eta = tanh(eta_raw)`, each theta row is a softmax over nodes, and each phi
//! row is an elementwise sigmoid renormalized over nodes.

use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    dirichlet_params, floored_ln, link_prob, share_prob, CascadeSet, HyperParams, ModelParams, Optimizer,
    SharingLink, SocialGraph, Table, PROB_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub eta_raw: Vec<f64>,
    pub theta_raw: Table,
    pub phi_raw: Table,
}

/// Gradients share the layout of the parameters they differentiate.
pub type RawGradient = RawParams;

impl RawParams {
    pub fn zeros(k: usize, n: usize) -> Self {
        RawParams {
            eta_raw: vec![0.0; k],
            theta_raw: Table::zeros(k, n),
            phi_raw: Table::zeros(k, n),
        }
    }

    /// `eta_raw ~ U(-0.5, 0.5)`, logits and scores `~ U(-0.01, 0.01)`.
    pub fn random<R: Rng>(k: usize, n: usize, rng: &mut R) -> Self {
        let mut raw = RawParams::zeros(k, n);
        raw.eta_raw
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-0.5..0.5));
        raw.theta_raw
            .as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-0.01..0.01));
        raw.phi_raw
            .as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-0.01..0.01));
        raw
    }

    pub fn num_communities(&self) -> usize {
        self.eta_raw.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.theta_raw.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// All entries: eta, then theta row-major, then phi row-major.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.eta_raw
            .iter()
            .chain(self.theta_raw.as_slice())
            .chain(self.phi_raw.as_slice())
            .copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.eta_raw
            .iter_mut()
            .chain(self.theta_raw.as_mut_slice())
            .chain(self.phi_raw.as_mut_slice())
    }

    pub fn len(&self) -> usize {
        self.eta_raw.len() * (1 + 2 * self.num_nodes())
    }

    pub fn is_empty(&self) -> bool {
        self.eta_raw.is_empty()
    }

    /// Constrained parameters. Fails on non-finite entries.
    pub fn transform(&self) -> Result<ModelParams> {
        Ok(Transformed::new(self)?.params)
    }
}

/// Transformed parameters plus the sigmoid intermediates the phi gradient needs.
struct Transformed {
    params: ModelParams,
    sigmoid: Table,
    sigmoid_sum: Vec<f64>,
}

impl Transformed {
    fn new(raw: &RawParams) -> Result<Self> {
        if !raw.is_finite() {
            return Err(Error::Numeric("non-finite model parameters".into()));
        }
        let (k, n) = (raw.num_communities(), raw.num_nodes());
        let eta = raw.eta_raw.iter().map(|x| x.tanh()).collect();

        let mut theta = raw.theta_raw.clone();
        for c in 0..k {
            let row = theta.row_mut(c);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|x| *x = (*x - max).exp());
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }

        let mut sigmoid = raw.phi_raw.clone();
        sigmoid.as_mut_slice().iter_mut().for_each(|x| *x = logistic(*x));
        let mut phi = Table::zeros(k, n);
        let mut sigmoid_sum = Vec::with_capacity(k);
        for c in 0..k {
            let total: f64 = sigmoid.row(c).iter().sum();
            for (p, s) in phi.row_mut(c).iter_mut().zip(sigmoid.row(c)) {
                *p = s / total;
            }
            sigmoid_sum.push(total);
        }
        Ok(Transformed {
            params: ModelParams { eta, theta, phi },
            sigmoid,
            sigmoid_sum,
        })
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A sample of follow links and sharing links.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub links: Vec<(usize, usize)>,
    pub shares: Vec<SharingLink>,
}

impl Batch {
    fn check(&self, n: usize) -> Result<()> {
        let nodes = self
            .links
            .iter()
            .flat_map(|&(u, v)| [u, v])
            .chain(self.shares.iter().flat_map(|s| [s.u, s.v]));
        for u in nodes {
            if u >= n {
                return Err(Error::Index {
                    what: "node",
                    index: u,
                    len: n,
                });
            }
        }
        Ok(())
    }
}

/// Community responsibilities: `gamma` for links, `xi` for sharing links.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    pub gamma: Table,
    pub xi: Table,
}

impl Posteriors {
    fn check(&self, batch: &Batch, k: usize) -> Result<()> {
        let ok = self.gamma.rows() == batch.links.len()
            && self.xi.rows() == batch.shares.len()
            && (batch.links.is_empty() || self.gamma.cols() == k)
            && (batch.shares.is_empty() || self.xi.cols() == k);
        if !ok {
            return Err(Error::shape(format!(
                "posteriors {}x{} / {}x{} do not match batch of {} links, {} shares, K={k}",
                self.gamma.rows(),
                self.gamma.cols(),
                self.xi.rows(),
                self.xi.cols(),
                batch.links.len(),
                batch.shares.len()
            )));
        }
        Ok(())
    }
}

pub fn e_step(raw: &RawParams, hyper: &HyperParams, batch: &Batch) -> Result<Posteriors> {
    let params = raw.transform()?;
    batch.check(params.num_nodes())?;
    Ok(posteriors(&params, hyper, batch))
}

/// Posteriors under already-transformed parameters. A row whose likelihoods
/// all vanish falls back to the prior.
pub fn posteriors(params: &ModelParams, hyper: &HyperParams, batch: &Batch) -> Posteriors {
    posteriors_and_log_likelihood(params, hyper, batch).0
}

/// Marginal log-likelihood of `batch`, summing each unit's likelihood over
/// communities under the priors.
pub fn log_likelihood(params: &ModelParams, hyper: &HyperParams, batch: &Batch) -> f64 {
    posteriors_and_log_likelihood(params, hyper, batch).1
}

fn posteriors_and_log_likelihood(
    params: &ModelParams,
    hyper: &HyperParams,
    batch: &Batch,
) -> (Posteriors, f64) {
    let k = params.num_communities();
    let pi = crate::model::priors_from_eta(
        &params.eta,
        hyper.social_prior,
        hyper.echo_prior,
        hyper.epsilon,
    );
    let mut ll = 0.0;
    let mut gamma = Table::zeros(batch.links.len(), k);
    for (i, &(u, v)) in batch.links.iter().enumerate() {
        let row = gamma.row_mut(i);
        for c in 0..k {
            row[c] = link_prob(params, u, v, c) * pi.link[c];
        }
        ll += normalize_or(row, &pi.link);
    }
    let mut xi = Table::zeros(batch.shares.len(), k);
    for (i, s) in batch.shares.iter().enumerate() {
        let row = xi.row_mut(i);
        for c in 0..k {
            row[c] = share_prob(params, s.u, s.v, s.polarity, c) * pi.flow[c];
        }
        ll += normalize_or(row, &pi.flow);
    }
    (Posteriors { gamma, xi }, ll)
}

/// Normalizes `row` in place and returns the floored log of its total.
fn normalize_or(row: &mut [f64], fallback: &[f64]) -> f64 {
    let total: f64 = row.iter().sum();
    if total > 0.0 && total.is_finite() {
        row.iter_mut().for_each(|x| *x /= total);
    } else {
        row.copy_from_slice(fallback);
    }
    floored_ln(total)
}
/// Expected complete-data log-likelihood of `batch` at `raw`, weighted by `post`.
pub fn q_value(
    raw: &RawParams,
    hyper: &HyperParams,
    batch: &Batch,
    post: &Posteriors,
) -> Result<f64> {
    let tf = Transformed::new(raw)?;
    check_inputs(&tf.params, batch, post)?;
    Ok(q_and_grad(&tf, hyper, batch, post, false).0)
}

pub fn q_gradient(
    raw: &RawParams,
    hyper: &HyperParams,
    batch: &Batch,
    post: &Posteriors,
) -> Result<RawGradient> {
    Ok(q_value_and_gradient(raw, hyper, batch, post)?.1)
}

pub fn q_value_and_gradient(
    raw: &RawParams,
    hyper: &HyperParams,
    batch: &Batch,
    post: &Posteriors,
) -> Result<(f64, RawGradient)> {
    let tf = Transformed::new(raw)?;
    check_inputs(&tf.params, batch, post)?;
    let (q, grad) = q_and_grad(&tf, hyper, batch, post, true);
    Ok((q, grad.expect("gradient requested")))
}

fn check_inputs(params: &ModelParams, batch: &Batch, post: &Posteriors) -> Result<()> {
    batch.check(params.num_nodes())?;
    post.check(batch, params.num_communities())
}

/// `ln(max(x, floor))` and its derivative (zero where the floor is active).
#[inline]
fn ln_with_slope(x: f64) -> (f64, f64) {
    if x > PROB_FLOOR {
        (x.ln(), 1.0 / x)
    } else {
        (PROB_FLOOR.ln(), 0.0)
    }
}

fn q_and_grad(
    tf: &Transformed,
    hyper: &HyperParams,
    batch: &Batch,
    post: &Posteriors,
    want_grad: bool,
) -> (f64, Option<RawGradient>) {
    let p = &tf.params;
    let (k, n) = (p.num_communities(), p.num_nodes());
    let (s, h) = (hyper.social_prior, hyper.echo_prior);
    let (alpha_l, alpha_f) = dirichlet_params(&p.eta, s, h, hyper.epsilon);

    // Gradients with respect to the constrained values.
    let mut g_theta = Table::zeros(k, n);
    let mut g_phi = Table::zeros(k, n);
    let mut g_abs = vec![0.0; k];
    let mut g_eta = vec![0.0; k];
    let mut weight_l = vec![0.0; k];
    let mut weight_f = vec![0.0; k];
    let mut q = 0.0;

    for (i, &(u, v)) in batch.links.iter().enumerate() {
        for c in 0..k {
            let w = post.gamma.get(i, c);
            if w == 0.0 {
                continue;
            }
            weight_l[c] += w;
            let a = p.eta[c].abs();
            let (tu, tv) = (p.theta.get(c, u), p.theta.get(c, v));
            let (fu, fv) = (p.phi.get(c, u), p.phi.get(c, v));
            let echo = tu * tv;
            let social = fu * fv;
            let (ln, slope) = ln_with_slope(a * echo + (1.0 - a) * social);
            q += w * ln;
            if want_grad && slope != 0.0 {
                let g = w * slope;
                *g_theta.get_mut(c, u) += g * a * tv;
                *g_theta.get_mut(c, v) += g * a * tu;
                *g_phi.get_mut(c, u) += g * (1.0 - a) * fv;
                *g_phi.get_mut(c, v) += g * (1.0 - a) * fu;
                g_abs[c] += g * (echo - social);
            }
        }
    }

    for (i, sl) in batch.shares.iter().enumerate() {
        for c in 0..k {
            let w = post.xi.get(i, c);
            if w == 0.0 {
                continue;
            }
            weight_f[c] += w;
            let gate = sl.polarity * p.eta[c];
            let (tu, tv) = (p.theta.get(c, sl.u), p.theta.get(c, sl.v));
            let (ln, slope) = ln_with_slope(gate.max(0.0) * tu * tv);
            q += w * ln;
            if want_grad && slope != 0.0 && gate > 0.0 {
                let g = w * slope;
                *g_theta.get_mut(c, sl.u) += g * gate * tv;
                *g_theta.get_mut(c, sl.v) += g * gate * tu;
                g_eta[c] += g * sl.polarity * tu * tv;
            }
        }
    }

    // Prior terms: sum_c W_c ln(alpha_c / sum alpha).
    for (weights, alpha, d_alpha_d_abs) in [
        (&weight_l, &alpha_l, h - s),
        (&weight_f, &alpha_f, h),
    ] {
        let total_alpha: f64 = alpha.iter().sum();
        let mut active_weight = 0.0;
        let mut g_alpha = vec![0.0; k];
        for c in 0..k {
            if weights[c] == 0.0 {
                continue;
            }
            let (ln, slope) = ln_with_slope(alpha[c] / total_alpha);
            q += weights[c] * ln;
            if slope != 0.0 {
                g_alpha[c] += weights[c] / alpha[c];
                active_weight += weights[c];
            }
        }
        if want_grad {
            for c in 0..k {
                g_abs[c] += d_alpha_d_abs * (g_alpha[c] - active_weight / total_alpha);
            }
        }
    }

    if !want_grad {
        return (q, None);
    }

    let mut grad = RawParams::zeros(k, n);
    for c in 0..k {
        let eta = p.eta[c];
        let sign = if eta > 0.0 {
            1.0
        } else if eta < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.eta_raw[c] = (g_eta[c] + sign * g_abs[c]) * (1.0 - eta * eta);

        let theta = p.theta.row(c);
        let gt = g_theta.row(c);
        let dot: f64 = gt.iter().zip(theta).map(|(g, t)| g * t).sum();
        for (out, (g, t)) in grad.theta_raw.row_mut(c).iter_mut().zip(gt.iter().zip(theta)) {
            *out = t * (g - dot);
        }

        let phi = p.phi.row(c);
        let gp = g_phi.row(c);
        let dot: f64 = gp.iter().zip(phi).map(|(g, f)| g * f).sum();
        let sig = tf.sigmoid.row(c);
        let total = tf.sigmoid_sum[c];
        for (w, out) in grad.phi_raw.row_mut(c).iter_mut().enumerate() {
            *out = sig[w] * (1.0 - sig[w]) / total * (gp[w] - dot);
        }
    }
    (q, Some(grad))
}

/// Draws `batch_size / 2` links and the rest as sharing links. A pool smaller
/// than the other, or smaller than its quota, is sampled with replacement;
/// otherwise sampling is without replacement.
pub fn sample_batch<R: Rng>(
    links: &[(usize, usize)],
    shares: &[SharingLink],
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch> {
    if links.is_empty() || shares.is_empty() {
        return Err(Error::input("cannot sample from an empty link or sharing-link pool"));
    }
    if batch_size < 2 {
        return Err(Error::input("batch size must be at least 2"));
    }
    let n_links = batch_size / 2;
    let n_shares = batch_size - n_links;
    let link_minority = links.len() < shares.len();
    let share_minority = shares.len() < links.len();
    Ok(Batch {
        links: draw(links, n_links, link_minority, rng),
        shares: draw(shares, n_shares, share_minority, rng),
    })
}

fn draw<T: Copy, R: Rng>(pool: &[T], count: usize, minority: bool, rng: &mut R) -> Vec<T> {
    if minority || pool.len() < count {
        (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    } else {
        index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub fitted: ModelParams,
    pub raw: RawParams,
    /// Q of every optimization step, evaluated before the step's update.
    pub q_trace: Vec<f64>,
    /// Mean marginal log-likelihood of each iteration's batches under the
    /// parameters frozen for that iteration.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Evidence units drawn divided by the pool size.
    pub epochs: f64,
    pub wall_time: Duration,
}

/// Fits the model to a follow graph and a set of cascades.
pub fn fit(graph: &SocialGraph, cascades: &CascadeSet, hyper: &HyperParams) -> Result<FitReport> {
    hyper.validate()?;
    let n = graph.num_nodes();
    if cascades.num_nodes() != n {
        return Err(Error::input(format!(
            "graph has {n} nodes but cascades reference {}",
            cascades.num_nodes()
        )));
    }
    if graph.edges().is_empty() {
        return Err(Error::input("social graph has no edges"));
    }
    let shares = cascades.sharing_links(hyper.pair_cap);
    if shares.is_empty() {
        return Err(Error::input("no cascade has two or more activated users"));
    }
    fit_pools(graph.edges(), &shares, n, hyper)
}

fn fit_pools(
    links: &[(usize, usize)],
    shares: &[SharingLink],
    n: usize,
    hyper: &HyperParams,
) -> Result<FitReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut raw = RawParams::random(hyper.num_communities, n, &mut rng);
    let mut adam = match hyper.optimizer {
        Optimizer::Plain => None,
        Optimizer::Adam => Some(Adam::new(raw.len())),
    };

    let mut q_trace = Vec::with_capacity(hyper.max_iters * hyper.steps_per_iter);
    let mut ll_trace: Vec<f64> = Vec::with_capacity(hyper.max_iters);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < hyper.max_iters {
        let frozen = Transformed::new(&raw)?.params;
        let mut ll_sum = 0.0;
        for _ in 0..hyper.steps_per_iter {
            let batch = sample_batch(links, shares, hyper.batch_size, &mut rng)?;
            let (post, ll) = posteriors_and_log_likelihood(&frozen, hyper, &batch);
            ll_sum += ll;
            let tf = Transformed::new(&raw)?;
            let (q, grad) = q_and_grad(&tf, hyper, &batch, &post, true);
            let grad = grad.expect("gradient requested");
            if !q.is_finite() {
                return Err(Error::Numeric(format!("Q became {q}")));
            }
            q_trace.push(q);
            // Steps follow the gradient of Q per evidence unit, so the
            // learning rate does not depend on the batch size.
            let scale = 1.0 / (batch.links.len() + batch.shares.len()) as f64;
            match adam.as_mut() {
                Some(adam) => adam.step(&mut raw, &grad, hyper.learning_rate),
                None => raw
                    .values_mut()
                    .zip(grad.values())
                    .for_each(|(x, g)| *x += hyper.learning_rate * scale * g),
            }
        }
        iterations += 1;
        // Q itself is not comparable across iterations because the
        // posteriors move; the marginal likelihood is what GEM increases.
        let mean = ll_sum / hyper.steps_per_iter as f64;
        let gain = ll_trace
            .last()
            .map(|&prev| (mean - prev) / prev.abs().max(f64::MIN_POSITIVE));
        ll_trace.push(mean);
        if gain.is_some_and(|g| g < hyper.tolerance) {
            converged = true;
            break;
        }
    }

    let drawn = q_trace.len() * hyper.batch_size;
    Ok(FitReport {
        fitted: raw.transform()?,
        raw,
        q_trace,
        log_likelihood_trace: ll_trace,
        iterations,
        converged,
        epochs: drawn as f64 / (links.len() + shares.len()) as f64,
        wall_time: start.elapsed(),
    })
}

/// Adam ascent with the usual defaults (0.9, 0.999, 1e-8).
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, raw: &mut RawParams, grad: &RawGradient, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for (((x, g), m), v) in raw
            .values_mut()
            .zip(grad.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *x += lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
        }
    }
}


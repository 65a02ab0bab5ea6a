//! Overlap parameters, the interpolation remainder, the sum rule at small
//! blocklength, and concentration diagnostics.
//!
//! The modified overlap is `Q_2p = sum_i w_i(t*) X_i(t*) prod_a s_i^(a)`
//! over `2p` independent replicas. Replica averages reduce to exact bracket
//! sums: `<Q_2p> = sum_i w_i X_i <s_i>^{2p}` and
//! `<Q_2p^2> = sum_ij w_i w_j X_i X_j <s_i s_j>^{2p}`.
//!
//! The `X_i(t*)` variables enter only through boundedness properties, so
//! two concrete models are provided: the constant `X = 1` and a bounded
//! uniform family; every report records which one was used.

use crate::channel::ChannelModel;
use crate::ensemble::{
    sample_interpolating, sample_multi_poisson, DegreeDistribution, InterpolationPoint,
    InterpolationRealization,
};
use crate::exact_gibbs::{
    bec_conditional_entropy_exact, conditional_entropy_exact, conditional_entropy_mc, GibbsError,
    GibbsSystem,
};
use crate::rng::{domain, stream};
use crate::rs_solver::{evaluate_h_rs, Population};
use crate::stats::{mean_stderr, wilson_interval};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterpolationError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error("ensemble error: {0}")]
    Ensemble(#[from] crate::ensemble::EnsembleError),
    #[error("solver error: {0}")]
    Rs(#[from] crate::rs_solver::RsError),
}

/// Model for the per-variable factors `X_i(t*)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XModel {
    /// `X_i = 1`.
    One,
    /// i.i.d. uniform on `[0, x_max]`.
    Uniform { x_max: f64 },
}

impl XModel {
    pub fn name(&self) -> String {
        match self {
            XModel::One => "one".into(),
            XModel::Uniform { x_max } => format!("uniform[0,{x_max}]"),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            XModel::One => vec![1.0; n],
            XModel::Uniform { x_max } => (0..n).map(|_| rng.random_range(0.0..x_max)).collect(),
        }
    }
}

/// Exact replica-average moments of one overlap parameter.
#[derive(Clone, Debug, serde::Serialize)]
pub struct OverlapReport {
    /// Replica half-count: the overlap multiplies `2p` replicas.
    pub p: usize,
    /// `<Q_2p>`.
    pub q_mean: f64,
    /// `<Q_2p^2>`.
    pub q2_mean: f64,
    /// `sum_i w_i X_i`, the deterministic bound on `|Q_2p|`.
    pub weight_bound: f64,
}

/// `<Q_2p>` and `<Q_2p^2>` from exact pairwise brackets (no replica
/// sampling).
pub fn overlap_moments(
    sys: &GibbsSystem,
    weights: &[f64],
    x: &[f64],
    p: usize,
) -> Result<OverlapReport, InterpolationError> {
    let n = sys.n();
    if weights.len() != n || x.len() != n {
        return Err(InterpolationError::BadParameter(
            "weight and X vectors must have length n".into(),
        ));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(InterpolationError::BadParameter(format!(
            "weights sum to {wsum}, expected 1"
        )));
    }
    if x.iter().any(|&v| v < 0.0) {
        return Err(InterpolationError::BadParameter(
            "X factors must be nonnegative".into(),
        ));
    }
    if p == 0 {
        return Err(InterpolationError::BadParameter("p must be >= 1".into()));
    }
    let (t, tij) = sys.all_pair_brackets();
    let wx: Vec<f64> = weights.iter().zip(x).map(|(&w, &xi)| w * xi).collect();
    let q_mean: f64 = wx
        .iter()
        .zip(&t)
        .map(|(&wxi, &ti)| wxi * ti.powi(2 * p as i32))
        .sum();
    let mut q2_mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            q2_mean += wx[i] * wx[j] * tij[i][j].powi(2 * p as i32);
        }
    }
    Ok(OverlapReport {
        p,
        q_mean,
        q2_mean,
        weight_bound: wx.iter().sum(),
    })
}

/// One sample of `Q_2p` by drawing `2p` independent spin configurations
/// from the exact Gibbs measure.
pub fn sample_overlap<R: Rng + ?Sized>(
    sys: &GibbsSystem,
    weights: &[f64],
    x: &[f64],
    p: usize,
    rng: &mut R,
) -> f64 {
    // The replica product per bit is -1 exactly when the XOR of the 2p
    // configurations has that bit set.
    let mut xor = 0u32;
    for _ in 0..2 * p {
        xor ^= sys.sample_spins(rng);
    }
    weights
        .iter()
        .zip(x)
        .enumerate()
        .map(|(i, (&w, &xi))| {
            let sign = if xor & (1 << i) != 0 { -1.0 } else { 1.0 };
            w * xi * sign
        })
        .sum()
}

/// The per-p remainder integrand and its truncation data.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RemainderEstimate {
    /// Ensemble means of the per-p integrands `1/(2p(2p-1)) E<...>`.
    pub per_p: Vec<f64>,
    pub pmax: usize,
    pub total: f64,
    pub stderr: f64,
    /// `C_1 sum_{p > pmax} 1/(2p(2p-1))` with `C_1` from the overlap bound.
    pub tail_bound: f64,
    pub x_model: String,
    pub realizations: usize,
}

/// Partial sum of `1/(2p(2p-1))` up to `pmax`; the full series is `ln 2`.
fn partial_inverse_sum(pmax: usize) -> f64 {
    (1..=pmax)
        .map(|p| 1.0 / (2.0 * p as f64 * (2.0 * p as f64 - 1.0)))
        .sum()
}

struct RealizedSystem {
    sys: GibbsSystem,
    weights: Vec<f64>,
    x: Vec<f64>,
}

fn realize_interpolating(
    channel: &ChannelModel,
    n: usize,
    lambda: &DegreeDistribution,
    p_dist: &DegreeDistribution,
    gamma: f64,
    point: InterpolationPoint,
    d_v: &Population,
    x_model: XModel,
    rng: &mut impl Rng,
) -> Result<RealizedSystem, InterpolationError> {
    let InterpolationRealization {
        graph,
        weights_at_t_star,
        ..
    } = sample_interpolating(n, lambda, p_dist, gamma, point, d_v, rng)?;
    let fields: Vec<f64> = (0..n).map(|_| channel.sample_field(rng)).collect();
    let sys = GibbsSystem::from_fields(&graph, &fields)?;
    let x = x_model.draw(n, rng);
    Ok(RealizedSystem {
        sys,
        weights: weights_at_t_star,
        x,
    })
}

/// Monte Carlo estimate of the interpolation remainder integrand
/// `R_n(t*, s)` truncated at `pmax`, over interpolating-ensemble
/// realizations at desk scale. Brackets are exact per realization;
/// `<P(Q_2p)>` uses `n_replicas` replica draws.
#[allow(clippy::too_many_arguments)]
pub fn remainder_term(
    channel: &ChannelModel,
    n: usize,
    lambda: &DegreeDistribution,
    p_dist: &DegreeDistribution,
    gamma: f64,
    point: InterpolationPoint,
    d_v: &Population,
    x_model: XModel,
    pmax: usize,
    n_mc: usize,
    n_replicas: usize,
    master_seed: u64,
) -> Result<RemainderEstimate, InterpolationError> {
    if pmax < 1 || n_mc == 0 || n_replicas == 0 {
        return Err(InterpolationError::BadParameter(
            "pmax, n_mc and n_replicas must be positive".into(),
        ));
    }
    let q: Vec<f64> = (1..=pmax).map(|p| d_v.tanh_moment(2 * p)).collect();
    let results: Vec<(Vec<f64>, f64)> = (0..n_mc as u64)
        .into_par_iter()
        .map(|task| -> Result<(Vec<f64>, f64), InterpolationError> {
            let mut rng = stream(master_seed, domain::REPLICA, task);
            let real = realize_interpolating(
                channel, n, lambda, p_dist, gamma, point, d_v, x_model, &mut rng,
            )?;
            let mut per_p = Vec::with_capacity(pmax);
            for p in 1..=pmax {
                let report = overlap_moments(&real.sys, &real.weights, &real.x, p)?;
                let q2p = q[p - 1];
                let mut p_of_q = 0.0;
                for _ in 0..n_replicas {
                    let qs = sample_overlap(&real.sys, &real.weights, &real.x, p, &mut rng);
                    p_of_q += p_dist.evaluate(qs);
                }
                p_of_q /= n_replicas as f64;
                let integrand = p_of_q
                    - p_dist.derivative_evaluate(q2p) * (report.q_mean - q2p)
                    - p_dist.evaluate(q2p);
                per_p.push(integrand / (2.0 * p as f64 * (2.0 * p as f64 - 1.0)));
            }
            let weight_bound: f64 = real
                .weights
                .iter()
                .zip(&real.x)
                .map(|(&w, &xi)| w * xi)
                .sum();
            Ok((per_p, weight_bound))
        })
        .collect::<Result<_, _>>()?;

    let totals: Vec<f64> = results.iter().map(|(pp, _)| pp.iter().sum()).collect();
    let (total, stderr) = mean_stderr(&totals);
    let mut per_p = vec![0.0; pmax];
    for (pp, _) in &results {
        for (acc, v) in per_p.iter_mut().zip(pp) {
            *acc += v / n_mc as f64;
        }
    }
    // C1 bounds the bracketed integrand uniformly in p: |Q| <= x_bar and
    // q <= 1 give |P(Q) - P'(q)(Q - q) - P(q)| <= P(x_bar) + P'(1)(x_bar+1)
    // + P(1).
    let x_bar = results
        .iter()
        .map(|&(_, b)| b)
        .fold(0.0f64, f64::max)
        .max(1.0);
    let c1 = p_dist.evaluate(x_bar) + p_dist.derivative_evaluate(1.0) * (x_bar + 1.0)
        + p_dist.evaluate(1.0);
    let tail_bound = c1 * (std::f64::consts::LN_2 - partial_inverse_sum(pmax));
    Ok(RemainderEstimate {
        per_p,
        pmax,
        total,
        stderr,
        tail_bound,
        x_model: x_model.name(),
        realizations: n_mc,
    })
}

/// Term-by-term comparison of the interpolation sum rule at finite n:
/// `E[h_{n,gamma}]` against `h_RS[d_V; Lambda_gamma, P] + sum_{t*} int R`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SumRuleReport {
    pub n: usize,
    pub gamma: f64,
    pub t_max: usize,
    /// Multi-Poisson conditional entropy per bit.
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub h_rs: f64,
    pub h_rs_stderr: f64,
    pub remainder: f64,
    pub remainder_stderr: f64,
    /// `lhs - h_rs - remainder`, attributed to `o_n(1)` plus the recorded
    /// Monte Carlo errors.
    pub discrepancy: f64,
    pub combined_stderr: f64,
    /// Per-`t*` integrals of the remainder.
    pub per_t_star: Vec<f64>,
    /// Empirical variable-degree law of the sampled ensemble, used as
    /// `Lambda_gamma` in the replica-symmetric term.
    pub empirical_lambda: Vec<f64>,
    pub x_model: String,
}

/// Runs the sum-rule comparison at desk scale.
#[allow(clippy::too_many_arguments)]
pub fn sum_rule_check(
    channel: &ChannelModel,
    n: usize,
    lambda: &DegreeDistribution,
    p_dist: &DegreeDistribution,
    gamma: f64,
    d_v: &Population,
    x_model: XModel,
    n_mc: usize,
    s_points: usize,
    master_seed: u64,
) -> Result<SumRuleReport, InterpolationError> {
    if n > 20 {
        return Err(InterpolationError::BadParameter(
            "sum-rule check is a desk-scale computation (n <= 20)".into(),
        ));
    }
    if s_points < 2 {
        return Err(InterpolationError::BadParameter(
            "need at least two s grid points".into(),
        ));
    }
    let lp = lambda.derivative_at_one();
    let t_max = (lp / gamma).floor() as usize - 1;

    // Left side: multi-Poisson entropy per bit, graph by graph.
    let entropies: Vec<(f64, Vec<usize>)> = (0..n_mc as u64)
        .into_par_iter()
        .map(|task| -> Result<(f64, Vec<usize>), InterpolationError> {
            let mut rng = stream(master_seed, domain::GRAPH, task);
            let (graph, _) = sample_multi_poisson(n, lambda, p_dist, gamma, &mut rng)?;
            let h = match channel {
                ChannelModel::Bec(e) => bec_conditional_entropy_exact(&graph, *e)?,
                _ if channel.atoms().is_some() => conditional_entropy_exact(&graph, channel)?,
                _ => {
                    let mut out_rng = stream(master_seed, domain::OUTPUT, task);
                    conditional_entropy_mc(&graph, channel, 2000, &mut out_rng)?.0
                }
            };
            Ok((h / n as f64, graph.variable_degrees()))
        })
        .collect::<Result<_, _>>()?;
    let values: Vec<f64> = entropies.iter().map(|(h, _)| *h).collect();
    let (lhs, lhs_stderr) = mean_stderr(&values);

    // Empirical Lambda_gamma from the same samples.
    let max_deg = entropies
        .iter()
        .flat_map(|(_, d)| d.iter().copied())
        .max()
        .unwrap_or(0);
    let mut hist = vec![0.0f64; max_deg + 1];
    let mut count = 0usize;
    for (_, degs) in &entropies {
        for &d in degs {
            hist[d] += 1.0;
            count += 1;
        }
    }
    for h in hist.iter_mut() {
        *h /= count as f64;
    }
    let empirical_lambda = DegreeDistribution::new(hist.clone(), crate::ensemble::Perspective::Node)?;

    let mut rs_rng = stream(master_seed, domain::HRS, 0);
    let rs = evaluate_h_rs(d_v, channel, &empirical_lambda, p_dist, 400_000, &mut rs_rng)?;

    // Remainder: trapezoid over s for each t*.
    let mut remainder = 0.0;
    let mut remainder_var = 0.0;
    let mut per_t_star = Vec::with_capacity(t_max);
    for t_star in 0..t_max {
        let mut integral = 0.0;
        let mut var = 0.0;
        for (j, w) in trapezoid_weights(s_points, gamma) {
            let s = gamma * j as f64 / (s_points - 1) as f64;
            let est = remainder_term(
                channel,
                n,
                lambda,
                p_dist,
                gamma,
                InterpolationPoint { t_star, s },
                d_v,
                x_model,
                4,
                n_mc,
                8,
                crate::rng::task_seed(master_seed, domain::REPLICA, (t_star * s_points + j) as u64),
            )?;
            integral += w * est.total;
            var += (w * est.stderr).powi(2);
        }
        per_t_star.push(integral);
        remainder += integral;
        remainder_var += var;
    }
    let remainder_stderr = remainder_var.sqrt();

    let discrepancy = lhs - rs.value - remainder;
    let combined_stderr =
        (lhs_stderr.powi(2) + rs.stderr.powi(2) + remainder_var).sqrt();
    Ok(SumRuleReport {
        n,
        gamma,
        t_max,
        lhs,
        lhs_stderr,
        h_rs: rs.value,
        h_rs_stderr: rs.stderr,
        remainder,
        remainder_stderr,
        discrepancy,
        combined_stderr,
        per_t_star,
        empirical_lambda: hist,
        x_model: x_model.name(),
    })
}

fn trapezoid_weights(points: usize, width: f64) -> Vec<(usize, f64)> {
    let h = width / (points - 1) as f64;
    (0..points)
        .map(|j| {
            let w = if j == 0 || j == points - 1 { h / 2.0 } else { h };
            (j, w)
        })
        .collect()
}

/// Empirical exceedance probabilities of the overlap concentration event,
/// with Wilson intervals and the two computed bounds.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ProbeRow {
    pub n: usize,
    pub delta: f64,
    pub p: usize,
    pub trials: usize,
    pub exceedances: u64,
    pub probability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Chebyshev bound from exact overlap moments, averaged over the sweep.
    pub chebyshev_bound: f64,
    /// Correlation-chain bound with the fitted constant.
    pub chain_bound: f64,
    pub chain_constant: f64,
}

/// Concentration probe: draws `(s, realization, replica tuple)` samples and
/// tests `|P(Q_2p) - P(<Q_2p>)| > 2p / n^delta`. One replica tuple per
/// realization keeps the exceedance samples independent.
#[allow(clippy::too_many_arguments)]
pub fn concentration_probe(
    channel: &ChannelModel,
    n_list: &[usize],
    delta: f64,
    p: usize,
    lambda: &DegreeDistribution,
    p_dist: &DegreeDistribution,
    gamma: f64,
    t_star: usize,
    d_v: &Population,
    x_model: XModel,
    n_mc: usize,
    master_seed: u64,
) -> Result<Vec<ProbeRow>, InterpolationError> {
    if !(delta < 0.25) {
        return Err(InterpolationError::BadParameter(format!(
            "delta = {delta} violates the requirement delta < 1/4"
        )));
    }
    if p == 0 {
        return Err(InterpolationError::BadParameter("p must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for (n_idx, &n) in n_list.iter().enumerate() {
        let lp = lambda.derivative_at_one();
        let t_max = (lp / gamma).floor() as usize - 1;
        let t_star_n = t_star.min(t_max);
        let threshold = 2.0 * p as f64 / (n as f64).powf(delta);
        let samples: Vec<(bool, f64, f64, f64)> = (0..n_mc as u64)
            .into_par_iter()
            .map(|task| -> Result<(bool, f64, f64, f64), InterpolationError> {
                let mut rng =
                    stream(master_seed, domain::PROBE, (n_idx as u64) << 32 | task);
                let s: f64 = rng.random_range(0.0..=gamma);
                let real = realize_interpolating(
                    channel,
                    n,
                    lambda,
                    p_dist,
                    gamma,
                    InterpolationPoint { t_star: t_star_n, s },
                    d_v,
                    x_model,
                    &mut rng,
                )?;
                let report = overlap_moments(&real.sys, &real.weights, &real.x, p)?;
                let q = sample_overlap(&real.sys, &real.weights, &real.x, p, &mut rng);
                debug_assert!(q.abs() <= report.weight_bound + 1e-12);
                let event = (p_dist.evaluate(q) - p_dist.evaluate(report.q_mean)).abs()
                    > threshold;
                // Chebyshev right-hand side with the realization's own
                // weight bound.
                let pprime = p_dist.derivative_evaluate(report.weight_bound.max(1.0));
                let cheb = (n as f64).powf(2.0 * delta) / (4.0 * (p * p) as f64)
                    * pprime
                    * pprime
                    * (report.q2_mean - report.q_mean * report.q_mean).max(0.0);
                // Correlation sum for the chain bound.
                let (t, tij) = real.sys.all_pair_brackets();
                let corr_sum: f64 = (0..n)
                    .map(|i| {
                        let c = tij[0][i] - t[0] * t[i];
                        c * c
                    })
                    .sum();
                // Fitted constant candidate: n^2 sqrt(max x^4 P'(x)^4 wi^2 wj^2).
                let w_max = real
                    .weights
                    .iter()
                    .zip(&real.x)
                    .map(|(&w, &xi)| w * xi)
                    .fold(0.0f64, f64::max);
                let c3_cand = report.weight_bound.powi(2)
                    * p_dist.derivative_evaluate(report.weight_bound.max(1.0)).powi(2)
                    * (n as f64 * w_max).powi(2);
                Ok((event, cheb, corr_sum, c3_cand))
            })
            .collect::<Result<_, _>>()?;
        let exceedances = samples.iter().filter(|s| s.0).count() as u64;
        let probability = exceedances as f64 / n_mc as f64;
        let (ci_low, ci_high) = wilson_interval(exceedances, n_mc as u64, 1.96);
        let chebyshev_bound =
            samples.iter().map(|s| s.1).sum::<f64>() / n_mc as f64;
        let corr_mean = samples.iter().map(|s| s.2).sum::<f64>() / n_mc as f64;
        let c3 = samples.iter().map(|s| s.3).fold(0.0f64, f64::max).sqrt();
        let chain_bound = (n as f64).powf(2.0 * delta - 0.5) / (2.0 * p as f64)
            * c3
            * corr_mean.sqrt();
        rows.push(ProbeRow {
            n,
            delta,
            p,
            trials: n_mc,
            exceedances,
            probability,
            ci_low,
            ci_high,
            chebyshev_bound,
            chain_bound,
            chain_constant: c3,
        });
    }
    Ok(rows)
}

//! Population-dynamics density evolution and the replica-symmetric
//! functional.
//!
//! Populations live on the field scale: a sample `v` is half a
//! log-likelihood ratio, so beliefs combine as `tanh v` and the channel
//! contributes `l/2`. `+inf` atoms (perfectly known bits) are carried as an
//! explicit atom count, never as large floats.
//!
//! The first term of the replica-symmetric functional is evaluated in the
//! centered form `E ln(e^f prod(1+tanh U) + e^{-f} prod(1-tanh U)) - E[f]`;
//! the subtraction makes the functional finite for channels with mass at
//! `t = 1` and reproduces the single-bit entropy on uncoded ensembles.

use crate::channel::ChannelModel;
use crate::ensemble::{DegreeDistribution, Perspective};
use crate::stats::{batch_mean_stderr, ln_one_minus_tanh, ln_one_plus_tanh, logsumexp2};
use rand::Rng;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RsError {
    #[error("empty population")]
    EmptyPopulation,
    #[error("population parse error: {0}")]
    Parse(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Default production population size.
pub const DEFAULT_POPULATION_SIZE: usize = 100_000;
/// Default density-evolution iteration cap.
pub const DEFAULT_ITERATIONS: usize = 500;
/// Default moment-stabilization tolerance for the early exit.
pub const DEFAULT_TOL: f64 = 1e-4;

/// An empirical symmetric density as a sample multiset, with `+inf` atoms
/// tracked separately.
#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    finite: Vec<f64>,
    plus_inf: usize,
}

impl Population {
    /// Builds a population from raw field samples; `+inf` values become
    /// atoms. `-inf` and NaN are rejected: a symmetric density carries no
    /// mass at `-inf`.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mut finite = Vec::with_capacity(samples.len());
        let mut plus_inf = 0usize;
        for v in samples {
            assert!(!v.is_nan(), "NaN population sample");
            if v == f64::INFINITY {
                plus_inf += 1;
            } else {
                assert!(v != f64::NEG_INFINITY, "-inf has no mass under symmetry");
                finite.push(v);
            }
        }
        Population { finite, plus_inf }
    }

    /// Zero-information population: all samples at `v = 0`.
    pub fn all_zero(n: usize) -> Self {
        Population {
            finite: vec![0.0; n],
            plus_inf: 0,
        }
    }

    /// Full-information population: all samples at `v = +inf`.
    pub fn all_plus_inf(n: usize) -> Self {
        Population {
            finite: Vec::new(),
            plus_inf: n,
        }
    }

    /// Fresh channel fields `l/2`.
    pub fn from_channel<R: Rng + ?Sized>(channel: &ChannelModel, n: usize, rng: &mut R) -> Self {
        Population::from_samples((0..n).map(|_| channel.sample_field(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.finite.len() + self.plus_inf
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plus_inf_count(&self) -> usize {
        self.plus_inf
    }

    pub fn plus_inf_mass(&self) -> f64 {
        self.plus_inf as f64 / self.len() as f64
    }

    pub fn finite_samples(&self) -> &[f64] {
        &self.finite
    }

    /// Uniform draw; atom indices return `+inf`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let idx = rng.random_range(0..self.len());
        if idx < self.finite.len() {
            self.finite[idx]
        } else {
            f64::INFINITY
        }
    }

    /// `E[tanh^k V]`.
    pub fn tanh_moment(&self, k: usize) -> f64 {
        let finite_sum: f64 = self.finite.iter().map(|v| v.tanh().powi(k as i32)).sum();
        (finite_sum + self.plus_inf as f64) / self.len() as f64
    }

    /// Mass of exact-zero samples (the erasure fraction of a BEC-type
    /// population).
    pub fn erasure_mass(&self) -> f64 {
        self.finite.iter().filter(|&&v| v == 0.0).count() as f64 / self.len() as f64
    }

    /// True when every sample is the `0` or `+inf` atom.
    pub fn is_bec_mixture(&self) -> bool {
        self.finite.iter().all(|&v| v == 0.0)
    }

    /// Per-p gaps `E[tanh^{2p-1}] - E[tanh^{2p}]` with their standard
    /// errors, for p = 1..=pmax.
    pub fn nishimori_diagnostic(&self, pmax: usize) -> Vec<(usize, f64, f64)> {
        let n = self.len() as f64;
        (1..=pmax)
            .map(|p| {
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for &v in &self.finite {
                    let t = v.tanh();
                    let d = t.powi(2 * p as i32 - 1) - t.powi(2 * p as i32);
                    sum += d;
                    sumsq += d * d;
                }
                // +inf atoms contribute 1 - 1 = 0.
                let mean = sum / n;
                let var = (sumsq / n - mean * mean).max(0.0);
                (p, mean, (var / n).sqrt())
            })
            .collect()
    }

    /// Moment vector `E[tanh^{2p} V]` for p = 1..=4, used by convergence
    /// monitoring.
    pub fn moment_vector(&self) -> [f64; 4] {
        [
            self.tanh_moment(2),
            self.tanh_moment(4),
            self.tanh_moment(6),
            self.tanh_moment(8),
        ]
    }

    /// Plain-text serialization: a header carrying the atom mass, then one
    /// finite sample per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "ldpclab-population v1 total={} plus_inf={}",
            self.len(),
            self.plus_inf
        )
        .unwrap();
        for v in &self.finite {
            writeln!(out, "{v}").unwrap();
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self, RsError> {
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| RsError::Parse("empty".into()))?;
        let mut total = None;
        let mut plus_inf = None;
        for field in header.split_whitespace().skip(2) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| RsError::Parse(format!("bad header field `{field}`")))?;
            let parsed: usize = value.parse().map_err(|e| RsError::Parse(format!("{e}")))?;
            match key {
                "total" => total = Some(parsed),
                "plus_inf" => plus_inf = Some(parsed),
                _ => return Err(RsError::Parse(format!("unknown header key `{key}`"))),
            }
        }
        let total = total.ok_or_else(|| RsError::Parse("missing total".into()))?;
        let plus_inf = plus_inf.ok_or_else(|| RsError::Parse("missing plus_inf".into()))?;
        let finite: Result<Vec<f64>, _> = lines.map(|l| l.trim().parse::<f64>()).collect();
        let finite = finite.map_err(|e| RsError::Parse(format!("{e}")))?;
        if finite.len() + plus_inf != total {
            return Err(RsError::Parse(format!(
                "header total {total} != {} finite + {plus_inf} atoms",
                finite.len()
            )));
        }
        Ok(Population { finite, plus_inf })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RsError> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RsError> {
        Self::deserialize(&std::fs::read_to_string(path)?)
    }
}

/// `atanh(tanh a * tanh b)` in a form stable for large arguments.
fn box_plus(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return if a > 0.0 { b } else { -b };
    }
    if b.is_infinite() {
        return if b > 0.0 { a } else { -a };
    }
    // 0.5 [ln cosh(a+b) - ln cosh(a-b)], ln cosh x = |x| - ln 2 + ln1p(e^{-2|x|}).
    let s = a + b;
    let d = a - b;
    0.5 * ((s.abs() + (-2.0 * s.abs()).exp().ln_1p()) - (d.abs() + (-2.0 * d.abs()).exp().ln_1p()))
}

/// `atanh(prod_i tanh v_i)` with exact zero and atom handling; the empty
/// product gives `+inf`.
pub fn check_combine(values: &[f64]) -> f64 {
    values.iter().fold(f64::INFINITY, |acc, &v| box_plus(acc, v))
}

/// Stable `ln(1 + prod_i tanh v_i)` via sign and log-magnitude.
fn ln_one_plus_prod_tanh(values: &[f64]) -> f64 {
    let mut negative = false;
    let mut log_mag = 0.0f64;
    for &v in values {
        if v == 0.0 {
            return 0.0;
        }
        if v < 0.0 {
            negative = !negative;
        }
        if v.is_finite() {
            log_mag += v.abs().tanh().ln();
        }
    }
    if negative {
        // ln(1 - e^{log_mag}) with log_mag <= 0.
        if log_mag == 0.0 {
            return f64::NEG_INFINITY;
        }
        (-log_mag.exp_m1()).ln()
    } else {
        log_mag.exp().ln_1p()
    }
}

/// One density-evolution update: each new sample is
/// `v = f + sum_{c=1}^{d-1} U_c` with `f` a fresh channel field, `d` from
/// the edge perspective of `Lambda`, and each `U_c` combining `k-1` fresh
/// population samples with `k` from the edge perspective of `P`.
pub fn de_iteration<R: Rng + ?Sized>(
    pop: &Population,
    channel: &ChannelModel,
    lambda_edge: &DegreeDistribution,
    rho_edge: &DegreeDistribution,
    rng: &mut R,
) -> Population {
    assert_eq!(lambda_edge.perspective(), Perspective::Edge);
    assert_eq!(rho_edge.perspective(), Perspective::Edge);
    assert!(!pop.is_empty());
    let n = pop.len();
    let mut scratch = Vec::new();
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let d = lambda_edge.sample_degree(rng);
            let mut v = channel.sample_field(rng);
            for _ in 0..d.saturating_sub(1) {
                let k = rho_edge.sample_degree(rng);
                scratch.clear();
                scratch.extend((0..k.saturating_sub(1)).map(|_| pop.sample(rng)));
                v += check_combine(&scratch);
            }
            v
        })
        .collect();
    Population::from_samples(samples)
}

/// One `U`-message: combine `k-1` fresh `d_V` samples, `k` from the edge
/// perspective of `P`.
pub fn sample_u<R: Rng + ?Sized>(
    p_edge: &DegreeDistribution,
    d_v: &Population,
    rng: &mut R,
) -> f64 {
    let k = p_edge.sample_degree(rng);
    let vs: Vec<f64> = (0..k.saturating_sub(1)).map(|_| d_v.sample(rng)).collect();
    check_combine(&vs)
}

/// Replica-symmetric functional estimate with per-term breakdown.
#[derive(Clone, Debug)]
pub struct RsValue {
    /// Nats per bit.
    pub value: f64,
    pub stderr: f64,
    /// Means of the three Monte Carlo terms plus the `-(L'/P') ln 2`
    /// constant.
    pub terms: [f64; 4],
}

/// Monte Carlo estimate of the replica-symmetric functional
/// `h_RS[d_V; Lambda, P]` (nats per bit), standard error by batch means.
pub fn evaluate_h_rs<R: Rng + ?Sized>(
    d_v: &Population,
    channel: &ChannelModel,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    n_mc: usize,
    rng: &mut R,
) -> Result<RsValue, RsError> {
    if d_v.is_empty() {
        return Err(RsError::EmptyPopulation);
    }
    if n_mc == 0 {
        return Err(RsError::BadParameter("n_mc must be positive".into()));
    }
    let lp = lambda_node.derivative_at_one();
    let pp = p_node.derivative_at_one();
    let ratio = lp / pp;
    let p_edge = p_node
        .to_edge_perspective()
        .map_err(|e| RsError::BadParameter(format!("{e}")))?;

    let mut samples = Vec::with_capacity(n_mc);
    let mut term_sums = [0.0f64; 3];
    let mut us = Vec::new();
    let mut vs = Vec::new();
    for _ in 0..n_mc {
        // Variable-node term, centered by the field.
        let d = lambda_node.sample_degree(rng);
        us.clear();
        us.extend((0..d).map(|_| sample_u(&p_edge, d_v, rng)));
        let f = channel.sample_field(rng);
        let sa: f64 = us.iter().map(|&u| ln_one_plus_tanh(u)).sum();
        let t1 = if f == f64::INFINITY {
            sa
        } else {
            debug_assert!(f.is_finite(), "-inf field under all-zero transmission");
            let sb: f64 = us.iter().map(|&u| ln_one_minus_tanh(u)).sum();
            logsumexp2(f + sa, -f + sb) - f
        };
        // Check-node term.
        let k = p_node.sample_degree(rng);
        vs.clear();
        vs.extend((0..k).map(|_| d_v.sample(rng)));
        let t2 = ln_one_plus_prod_tanh(&vs);
        // Edge term.
        let v = d_v.sample(rng);
        let u = sample_u(&p_edge, d_v, rng);
        let t3 = ln_one_plus_prod_tanh(&[v, u]);

        term_sums[0] += t1;
        term_sums[1] += t2;
        term_sums[2] += t3;
        samples.push(t1 + ratio * t2 - lp * t3);
    }
    let constant = -ratio * std::f64::consts::LN_2;
    let (mean, stderr) = batch_mean_stderr(&samples, 100);
    Ok(RsValue {
        value: mean + constant,
        stderr,
        terms: [
            term_sums[0] / n_mc as f64,
            ratio * term_sums[1] / n_mc as f64,
            -lp * term_sums[2] / n_mc as f64,
            constant,
        ],
    })
}

/// Closed-form replica-symmetric value on the BEC when `d_V` is the
/// `{0, +inf}` mixture with erasure mass `x`:
///
/// `h/ln2 = L'(1) x (1-y) + eps Lambda(y) + (L'(1)/P'(1)) (P(1-x) - 1)`
/// with `y = 1 - rho(1-x)`.
pub fn bec_closed_form(
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    epsilon: f64,
    x: f64,
) -> f64 {
    assert!((0.0..=1.0).contains(&x));
    let lp = lambda_node.derivative_at_one();
    let pp = p_node.derivative_at_one();
    let rho = p_node.to_edge_perspective().expect("check degrees >= 1");
    let y = 1.0 - rho.evaluate(1.0 - x);
    std::f64::consts::LN_2
        * (lp * x * (1.0 - y)
            + epsilon * lambda_node.evaluate(y)
            + lp / pp * (p_node.evaluate(1.0 - x) - 1.0))
}

/// Scalar BEC density-evolution map `x -> eps lambda(1 - rho(1 - x))`.
pub fn bec_scalar_recursion(
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    epsilon: f64,
    x: f64,
) -> f64 {
    let lambda = lambda_node.to_edge_perspective().expect("var degrees >= 1");
    let rho = p_node.to_edge_perspective().expect("check degrees >= 1");
    epsilon * lambda.evaluate(1.0 - rho.evaluate(1.0 - x))
}

/// Canonical density-evolution initializations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Initialization {
    /// All-zero fields (no information).
    ZeroInfo,
    /// All `+inf` fields (perfect information).
    FullInfo,
    /// Fresh channel fields.
    Channel,
}

impl Initialization {
    pub const ALL: [Initialization; 3] = [
        Initialization::ZeroInfo,
        Initialization::FullInfo,
        Initialization::Channel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Initialization::ZeroInfo => "zero-info",
            Initialization::FullInfo => "full-info",
            Initialization::Channel => "channel",
        }
    }

    pub fn build<R: Rng + ?Sized>(
        self,
        channel: &ChannelModel,
        n: usize,
        rng: &mut R,
    ) -> Population {
        match self {
            Initialization::ZeroInfo => Population::all_zero(n),
            Initialization::FullInfo => Population::all_plus_inf(n),
            Initialization::Channel => Population::from_channel(channel, n, rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub population: Population,
    pub converged: bool,
    pub iterations: usize,
    /// Final moment vector `E[tanh^{2p}]`, p = 1..=4.
    pub moments: [f64; 4],
}

/// Iterates density evolution from the chosen initialization.
///
/// Convergence compares moment vectors averaged over two consecutive
/// windows of 20 iterations against `tol` plus three standard errors of the
/// window noise, so the criterion stays meaningful at finite population
/// size. Non-convergence is flagged, with the final population returned.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point<R: Rng + ?Sized>(
    channel: &ChannelModel,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    init: Initialization,
    iters: usize,
    n_pop: usize,
    tol: f64,
    rng: &mut R,
) -> Result<FixedPointResult, RsError> {
    if iters == 0 {
        return Err(RsError::BadParameter("iters must be >= 1".into()));
    }
    let lambda_edge = lambda_node
        .to_edge_perspective()
        .map_err(|e| RsError::BadParameter(format!("{e}")))?;
    let rho_edge = p_node
        .to_edge_perspective()
        .map_err(|e| RsError::BadParameter(format!("{e}")))?;
    let mut pop = init.build(channel, n_pop, rng);
    const WINDOW: usize = 20;
    let mut history: Vec<[f64; 4]> = Vec::with_capacity(iters);
    let mut converged = false;
    let mut done = 0usize;
    for it in 1..=iters {
        pop = de_iteration(&pop, channel, &lambda_edge, &rho_edge, rng);
        history.push(pop.moment_vector());
        done = it;
        if history.len() >= 2 * WINDOW {
            let recent = &history[history.len() - WINDOW..];
            let previous = &history[history.len() - 2 * WINDOW..history.len() - WINDOW];
            let mut max_gap = 0.0f64;
            let mut max_noise = 0.0f64;
            for c in 0..4 {
                let m_new: f64 = recent.iter().map(|m| m[c]).sum::<f64>() / WINDOW as f64;
                let m_old: f64 = previous.iter().map(|m| m[c]).sum::<f64>() / WINDOW as f64;
                let var: f64 =
                    recent.iter().map(|m| (m[c] - m_new).powi(2)).sum::<f64>() / (WINDOW - 1) as f64;
                max_gap = max_gap.max((m_new - m_old).abs());
                max_noise = max_noise.max((var / WINDOW as f64).sqrt());
            }
            if max_gap < tol + 3.0 * max_noise {
                converged = true;
                break;
            }
        }
    }
    let moments = pop.moment_vector();
    Ok(FixedPointResult {
        population: pop,
        converged,
        iterations: done,
        moments,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ThresholdRow {
    pub eps: f64,
    pub h_sup: f64,
    pub stderr: f64,
    pub init: &'static str,
    pub converged: bool,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ThresholdScan {
    pub rows: Vec<ThresholdRow>,
    /// Conservative (lower) estimate of the smallest noise with positive
    /// replica-symmetric entropy.
    pub threshold: f64,
    /// Bisection bracket around the sign change.
    pub uncertainty: (f64, f64),
    /// False when the functional never became strictly positive on the
    /// grid; the grid maximum is then reported.
    pub positive_found: bool,
}

/// `sup h_RS` over the fixed points reached from the three canonical
/// initializations.
fn h_sup_at<R: Rng + ?Sized>(
    channel: &ChannelModel,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    n_pop: usize,
    iters: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<(f64, f64, &'static str, bool), RsError> {
    let mut best: Option<(f64, f64, &'static str, bool)> = None;
    for init in Initialization::ALL {
        let fp = fixed_point(
            channel,
            lambda_node,
            p_node,
            init,
            iters,
            n_pop,
            DEFAULT_TOL,
            rng,
        )?;
        let rs = evaluate_h_rs(&fp.population, channel, lambda_node, p_node, n_mc, rng)?;
        if best.is_none() || rs.value > best.as_ref().unwrap().0 {
            best = Some((rs.value, rs.stderr, init.name(), fp.converged));
        }
    }
    Ok(best.unwrap())
}

/// Scans the noise grid for the smallest value where `sup h_RS` becomes
/// strictly positive (beyond three standard errors), refined by bisection.
/// Reports the conservative lower bracket end as the threshold.
#[allow(clippy::too_many_arguments)]
pub fn map_threshold_upper_bound(
    channel_family: &ChannelModel,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    eps_grid: &[f64],
    n_pop: usize,
    iters: usize,
    n_mc: usize,
    master_seed: u64,
) -> Result<ThresholdScan, RsError> {
    use crate::rng::{domain, stream};
    use rayon::prelude::*;
    if eps_grid.is_empty() {
        return Err(RsError::BadParameter("empty noise grid".into()));
    }
    if eps_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RsError::BadParameter(
            "noise grid must be strictly increasing".into(),
        ));
    }

    let eval = |eps: f64, task: u64| -> Result<ThresholdRow, RsError> {
        let channel = channel_family
            .with_noise(eps)
            .map_err(|e| RsError::BadParameter(format!("{e}")))?;
        let mut rng = stream(master_seed, domain::DE, task);
        let (h, se, init, converged) =
            h_sup_at(&channel, lambda_node, p_node, n_pop, iters, n_mc, &mut rng)?;
        Ok(ThresholdRow {
            eps,
            h_sup: h,
            stderr: se,
            init,
            converged,
        })
    };

    let mut rows: Vec<ThresholdRow> = eps_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| eval(eps, i as u64))
        .collect::<Result<_, _>>()?;

    // The absolute floor keeps ulp-level residue of exactly-cancelling
    // terms (deterministic h = 0 branches have stderr = 0) from counting as
    // positive.
    let positive = |row: &ThresholdRow| row.h_sup > 3.0 * row.stderr && row.h_sup > 1e-10;
    let first_pos = rows.iter().position(positive);
    let Some(idx) = first_pos else {
        let max = *eps_grid.last().unwrap();
        return Ok(ThresholdScan {
            rows,
            threshold: max,
            uncertainty: (max, max),
            positive_found: false,
        });
    };
    let mut hi = rows[idx].eps;
    if idx == 0 {
        // Already positive at the grid start; nothing to bisect against.
        return Ok(ThresholdScan {
            threshold: hi,
            uncertainty: (hi, hi),
            positive_found: true,
            rows,
        });
    }
    let mut lo = rows[idx - 1].eps;

    let mut task = eps_grid.len() as u64;
    for _ in 0..12 {
        if hi - lo < 2e-4 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let row = eval(mid, task)?;
        task += 1;
        if positive(&row) {
            hi = mid;
        } else {
            lo = mid;
        }
        rows.push(row);
    }
    Ok(ThresholdScan {
        rows,
        threshold: lo,
        uncertainty: (lo, hi),
        positive_found: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};

    fn three_six() -> (DegreeDistribution, DegreeDistribution) {
        (
            DegreeDistribution::regular(3),
            DegreeDistribution::regular(6),
        )
    }

    #[test]
    fn check_combine_basics() {
        assert_eq!(check_combine(&[]), f64::INFINITY);
        assert_eq!(check_combine(&[0.7, 0.0, 2.0]), 0.0);
        assert_eq!(
            check_combine(&[f64::INFINITY, f64::INFINITY]),
            f64::INFINITY
        );
        assert_eq!(check_combine(&[f64::INFINITY, 1.25]), 1.25);
        // Two equal unit fields: atanh(tanh^2 1) = 0.662501373678932...
        // (frozen from a 40-digit evaluation; the f64 route must agree).
        let v = check_combine(&[1.0, 1.0]);
        let direct = (1.0f64.tanh() * 1.0f64.tanh()).atanh();
        assert!((v - direct).abs() < 1e-14);
        assert!((v - 0.6625013736789322).abs() < 1e-12);
        // Odd sign count flips the output.
        let w = check_combine(&[-1.0, 1.0]);
        assert!((w + v).abs() < 1e-14);
    }

    #[test]
    fn check_combine_matches_naive_on_moderate_inputs() {
        let mut rng = stream(40, domain::MISC, 0);
        for _ in 0..500 {
            let k = rng.random_range(1..=6usize);
            let vs: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let naive = vs.iter().map(|v| v.tanh()).product::<f64>().atanh();
            let stable = check_combine(&vs);
            assert!((naive - stable).abs() < 1e-12, "{vs:?}");
        }
    }

    #[test]
    fn check_combine_no_spurious_saturation() {
        // Large finite inputs must not round the product to exactly 1.
        let v = check_combine(&[25.0, 26.0]);
        assert!(v.is_finite());
        assert!(v > 20.0 && v < 26.0);
    }

    #[test]
    fn bec_populations_stay_two_atom() {
        let (l3, p6) = three_six();
        let le = l3.to_edge_perspective().unwrap();
        let re = p6.to_edge_perspective().unwrap();
        let channel = ChannelModel::bec(0.6).unwrap();
        let mut rng = stream(41, domain::DE, 0);
        let mut pop = Population::from_channel(&channel, 5000, &mut rng);
        for _ in 0..5 {
            pop = de_iteration(&pop, &channel, &le, &re, &mut rng);
            assert!(pop.is_bec_mixture());
        }
    }

    #[test]
    fn bec_de_tracks_scalar_recursion() {
        let (l3, p6) = three_six();
        let le = l3.to_edge_perspective().unwrap();
        let re = p6.to_edge_perspective().unwrap();
        let eps = 0.43;
        let channel = ChannelModel::bec(eps).unwrap();
        let n = 200_000usize;
        let mut rng = stream(42, domain::DE, 0);
        let mut pop = Population::from_channel(&channel, n, &mut rng);
        let mut x = eps; // channel init erases with probability eps
        for _ in 0..10 {
            pop = de_iteration(&pop, &channel, &le, &re, &mut rng);
            x = bec_scalar_recursion(&l3, &p6, eps, x);
        }
        // Stochastic DE tracks the scalar recursion to a few multiples of
        // the multinomial noise, inflated by the contraction factor.
        let g = |z: f64| bec_scalar_recursion(&l3, &p6, eps, z);
        let slope = ((g(x + 1e-4) - g(x - 1e-4)) / 2e-4).abs();
        let se = (x * (1.0 - x) / n as f64).sqrt() / (1.0 - slope.min(0.9));
        let mass = pop.erasure_mass();
        assert!((mass - x).abs() < 4.0 * se, "mass={mass} x={x} se={se}");
    }

    #[test]
    fn full_info_population_is_fixed_for_degree_two() {
        // With Lambda(x) = x^2 each message carries one U; from an all-inf
        // population U = +inf, so erasures cannot reappear. The scalar
        // recursion from x = 0 agrees: x' = eps * lambda(y) = 0.
        let l2 = DegreeDistribution::regular(2);
        let p4 = DegreeDistribution::regular(4);
        let le = l2.to_edge_perspective().unwrap();
        let re = p4.to_edge_perspective().unwrap();
        let eps = 0.7;
        let channel = ChannelModel::bec(eps).unwrap();
        let mut rng = stream(43, domain::DE, 0);
        let pop = de_iteration(
            &Population::all_plus_inf(50_000),
            &channel,
            &le,
            &re,
            &mut rng,
        );
        let oracle = bec_scalar_recursion(&l2, &p4, eps, 0.0);
        assert_eq!(oracle, 0.0);
        assert_eq!(pop.erasure_mass(), 0.0);
        assert!(pop.is_bec_mixture());
    }

    #[test]
    fn degree_one_variables_refresh_erasures() {
        // With Lambda(x) = x the message is the raw channel field: one
        // iteration has erasure mass eps, matching the scalar recursion.
        let l1 = DegreeDistribution::regular(1);
        let p4 = DegreeDistribution::regular(4);
        let le = l1.to_edge_perspective().unwrap();
        let re = p4.to_edge_perspective().unwrap();
        let eps = 0.55;
        let channel = ChannelModel::bec(eps).unwrap();
        let oracle = bec_scalar_recursion(&l1, &p4, eps, 0.0);
        assert!((oracle - eps).abs() < 1e-15);
        let n = 100_000usize;
        let mut rng = stream(44, domain::DE, 0);
        let pop = de_iteration(&Population::all_plus_inf(n), &channel, &le, &re, &mut rng);
        let se = (eps * (1.0 - eps) / n as f64).sqrt();
        assert!((pop.erasure_mass() - eps).abs() < 4.0 * se);
    }

    #[test]
    fn bec_one_all_zero_exactly_fixed() {
        let (l3, p6) = three_six();
        let le = l3.to_edge_perspective().unwrap();
        let re = p6.to_edge_perspective().unwrap();
        let channel = ChannelModel::bec(1.0).unwrap();
        let mut rng = stream(45, domain::DE, 0);
        let pop = de_iteration(&Population::all_zero(10_000), &channel, &le, &re, &mut rng);
        assert_eq!(pop.erasure_mass(), 1.0);
    }

    #[test]
    fn h_rs_fully_erased_is_exact() {
        let (l3, p6) = three_six();
        let channel = ChannelModel::bec(1.0).unwrap();
        let dv = Population::all_zero(1000);
        let mut rng = stream(46, domain::HRS, 0);
        let rs = evaluate_h_rs(&dv, &channel, &l3, &p6, 20_000, &mut rng).unwrap();
        let expect = 0.5 * std::f64::consts::LN_2;
        assert!((rs.value - expect).abs() < 1e-12, "{rs:?}");
        assert!(rs.stderr < 1e-12);
    }

    #[test]
    fn h_rs_noiseless_perfect_knowledge_is_zero() {
        let (l3, p6) = three_six();
        let channel = ChannelModel::bec(0.0).unwrap();
        let dv = Population::all_plus_inf(1000);
        let mut rng = stream(47, domain::HRS, 0);
        let rs = evaluate_h_rs(&dv, &channel, &l3, &p6, 20_000, &mut rng).unwrap();
        assert!(rs.value.abs() < 1e-12, "{rs:?}");
    }

    #[test]
    fn h_rs_uncoded_bsc_matches_binary_entropy() {
        // Degree-0 variables: the centered variable-node term reduces to
        // E ln(2 cosh f) - E f = h2(eps) and every coded term vanishes.
        let lambda = DegreeDistribution::from_node_pairs(&[(0, 1.0)]).unwrap();
        let p6 = DegreeDistribution::regular(6);
        let eps = 0.1f64;
        let channel = ChannelModel::bsc(eps).unwrap();
        let dv = Population::all_zero(100);
        let mut rng = stream(48, domain::HRS, 0);
        let rs = evaluate_h_rs(&dv, &channel, &lambda, &p6, 200_000, &mut rng).unwrap();
        let h2 = -eps * eps.ln() - (1.0 - eps) * (1.0 - eps).ln();
        assert!(
            (rs.value - h2).abs() < 4.0 * rs.stderr,
            "value={} h2={h2} se={}",
            rs.value,
            rs.stderr
        );
    }

    #[test]
    fn h_rs_two_atom_matches_closed_form() {
        let (l3, p6) = three_six();
        let eps = 0.45f64;
        let channel = ChannelModel::bec(eps).unwrap();
        // Fixed point of the scalar recursion from the erased side.
        let mut x = 1.0f64;
        for _ in 0..3000 {
            x = bec_scalar_recursion(&l3, &p6, eps, x);
        }
        let n = 100_000usize;
        let count = (x * n as f64).round() as usize;
        let mut samples = vec![0.0f64; count];
        samples.extend(std::iter::repeat_n(f64::INFINITY, n - count));
        let dv = Population::from_samples(samples);
        let x_hat = dv.erasure_mass();
        let oracle = bec_closed_form(&l3, &p6, eps, x_hat);
        let mut rng = stream(49, domain::HRS, 0);
        let rs = evaluate_h_rs(&dv, &channel, &l3, &p6, 400_000, &mut rng).unwrap();
        assert!(
            (rs.value - oracle).abs() < 4.0 * rs.stderr,
            "mc={} oracle={oracle} se={}",
            rs.value,
            rs.stderr
        );
    }

    #[test]
    fn h_rs_invariant_under_reseeding_and_doubling() {
        let (l3, p6) = three_six();
        let channel = ChannelModel::bsc(0.3).unwrap();
        let mut rng = stream(50, domain::HRS, 1);
        let dv = Population::from_channel(&channel, 50_000, &mut rng);
        let mut r1 = stream(50, domain::HRS, 2);
        let a = evaluate_h_rs(&dv, &channel, &l3, &p6, 100_000, &mut r1).unwrap();
        let mut r2 = stream(50, domain::HRS, 3);
        let b = evaluate_h_rs(&dv, &channel, &l3, &p6, 200_000, &mut r2).unwrap();
        let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 3.0 * combined);
    }

    #[test]
    fn bec_closed_form_endpoints() {
        let (l3, p6) = three_six();
        assert_eq!(bec_closed_form(&l3, &p6, 0.0, 0.0), 0.0);
        let full = bec_closed_form(&l3, &p6, 1.0, 1.0);
        assert!((full - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bec_closed_form_threshold_oracle() {
        // Root of the maximum-fixed-point closed form, by bisection; the
        // computed value is frozen as a sanity band.
        let (l3, p6) = three_six();
        let h_at = |eps: f64| -> f64 {
            let mut x = 1.0f64;
            for _ in 0..5000 {
                x = bec_scalar_recursion(&l3, &p6, eps, x);
            }
            bec_closed_form(&l3, &p6, eps, x)
        };
        let mut lo = 0.45;
        let mut hi = 0.52;
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if h_at(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((root - 0.48815).abs() < 5e-4, "root={root}");
    }

    #[test]
    fn fixed_point_below_bp_threshold_decodes() {
        let (l3, p6) = three_six();
        let channel = ChannelModel::bec(0.40).unwrap();
        let mut rng = stream(51, domain::DE, 0);
        for init in [Initialization::FullInfo, Initialization::Channel] {
            let fp = fixed_point(&channel, &l3, &p6, init, 300, 20_000, 1e-4, &mut rng).unwrap();
            assert!(fp.population.erasure_mass() < 1e-3, "{}", init.name());
        }
    }

    #[test]
    fn fixed_point_above_bp_threshold_sticks() {
        let (l3, p6) = three_six();
        let eps = 0.45;
        let channel = ChannelModel::bec(eps).unwrap();
        let n = 100_000;
        let mut rng = stream(52, domain::DE, 0);
        let fp = fixed_point(
            &channel,
            &l3,
            &p6,
            Initialization::ZeroInfo,
            500,
            n,
            1e-4,
            &mut rng,
        )
        .unwrap();
        let mut x = 1.0f64;
        for _ in 0..5000 {
            x = bec_scalar_recursion(&l3, &p6, eps, x);
        }
        let se = (x * (1.0 - x) / n as f64).sqrt();
        let mass = fp.population.erasure_mass();
        assert!(fp.converged);
        assert!((mass - x).abs() < 6.0 * se, "mass={mass} x={x}");
    }

    #[test]
    fn noiseless_any_init_fully_informed() {
        let (l3, p6) = three_six();
        let channel = ChannelModel::bec(0.0).unwrap();
        for init in Initialization::ALL {
            let mut rng = stream(53, domain::DE, init as u64);
            let fp = fixed_point(&channel, &l3, &p6, init, 200, 5_000, 1e-4, &mut rng).unwrap();
            assert_eq!(fp.population.plus_inf_mass(), 1.0, "{}", init.name());
        }
    }

    #[test]
    fn symmetry_preserved_by_iteration() {
        let (l3, p6) = three_six();
        let le = l3.to_edge_perspective().unwrap();
        let re = p6.to_edge_perspective().unwrap();
        let channel = ChannelModel::bsc(0.3).unwrap();
        let mut rng = stream(54, domain::DE, 0);
        let mut pop = Population::from_channel(&channel, 100_000, &mut rng);
        for _ in 0..3 {
            pop = de_iteration(&pop, &channel, &le, &re, &mut rng);
        }
        for (p, gap, se) in pop.nishimori_diagnostic(4) {
            assert!(gap.abs() <= 4.0 * se.max(1e-12), "p={p} gap={gap} se={se}");
        }
    }

    #[test]
    fn population_serialization_roundtrip() {
        let pop = Population::from_samples(vec![0.5, -1.25, f64::INFINITY, 0.0, 3e-300]);
        let text = pop.serialize();
        let back = Population::deserialize(&text).unwrap();
        assert_eq!(pop, back);
    }

    #[test]
    fn threshold_scan_smoke() {
        // Coarse, small-population scan; the full-accuracy run lives in the
        // acceptance suite.
        let (l3, p6) = three_six();
        let family = ChannelModel::bec(0.5).unwrap();
        let grid: Vec<f64> = (0..7).map(|i| 0.40 + 0.025 * i as f64).collect();
        let scan =
            map_threshold_upper_bound(&family, &l3, &p6, &grid, 20_000, 300, 400_000, 99).unwrap();
        assert!(scan.positive_found);
        // Positivity detection lags by ~3 se / slope, so the smoke-scale
        // tolerance is a few 1e-3.
        assert!(
            (scan.threshold - 0.48815).abs() < 6e-3,
            "threshold={} bracket={:?}",
            scan.threshold,
            scan.uncertainty
        );
    }

    #[test]
    fn cycle_code_threshold_matches_scalar_oracle() {
        // (2,4) cycle code on the BEC: the oracle is bisection on the
        // closed form over scalar fixed points.
        let l2 = DegreeDistribution::regular(2);
        let p4 = DegreeDistribution::regular(4);
        let h_at = |eps: f64| -> f64 {
            let mut x = 1.0f64;
            for _ in 0..20_000 {
                x = bec_scalar_recursion(&l2, &p4, eps, x);
            }
            bec_closed_form(&l2, &p4, eps, x)
        };
        let mut lo = 0.25;
        let mut hi = 0.45;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if h_at(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        // Cycle codes have a second-order transition at the stability
        // threshold 1/(lambda'(0) rho'(1)) = 1/3.
        assert!((oracle - 1.0 / 3.0).abs() < 2e-3, "oracle={oracle}");
        let family = ChannelModel::bec(0.4).unwrap();
        let grid: Vec<f64> = (0..7).map(|i| 0.30 + 0.02 * i as f64).collect();
        let scan =
            map_threshold_upper_bound(&family, &l2, &p4, &grid, 20_000, 400, 1_000_000, 3131)
                .unwrap();
        assert!(scan.positive_found);
        // Pointwise agreement with the closed form where the entropy rises
        // clear of the Monte Carlo floor.
        for row in scan.rows.iter().filter(|r| r.eps >= 0.399) {
            let mut x = 1.0f64;
            for _ in 0..20_000 {
                x = bec_scalar_recursion(&l2, &p4, row.eps, x);
            }
            let h = bec_closed_form(&l2, &p4, row.eps, x);
            assert!(
                (row.h_sup - h).abs() <= 4.0 * row.stderr.max(1e-6),
                "eps={}: mc={} oracle={h} se={}",
                row.eps,
                row.h_sup,
                row.stderr
            );
        }
        // The tangential (cubic) crossing makes positivity detection lag by
        // roughly (3 se / c)^{1/3}; allow that much on the threshold itself.
        assert!(
            scan.threshold >= oracle - 2e-3 && scan.threshold <= oracle + 0.06,
            "threshold={} oracle={oracle}",
            scan.threshold
        );
    }

    #[test]
    #[cfg_attr(debug_assertions, ignore = "population-dynamics scale; run with --release")]
    fn biawgnc_threshold_self_consistent_across_population_sizes() {
        // No closed form exists for the (3,6) BIAWGNC threshold; the check
        // is stability of the population-dynamics value under a 10x larger
        // population.
        let (l3, p6) = three_six();
        let family = ChannelModel::biawgnc(1.0).unwrap();
        let grid: Vec<f64> = (0..7).map(|i| 1.18 + 0.025 * i as f64).collect();
        let scan_small =
            map_threshold_upper_bound(&family, &l3, &p6, &grid, 10_000, 400, 1_000_000, 555)
                .unwrap();
        let scan_large =
            map_threshold_upper_bound(&family, &l3, &p6, &grid, 100_000, 400, 1_000_000, 556)
                .unwrap();
        assert!(scan_small.positive_found && scan_large.positive_found);
        assert!(
            (scan_small.threshold - scan_large.threshold).abs() < 0.02,
            "N=1e4: {} vs N=1e5: {}",
            scan_small.threshold,
            scan_large.threshold
        );
    }

    #[test]
    fn gexit_bound_consistency_along_noise() {
        // Numeric d/deps of h_RS at fixed d_V stays in [0, k(eps)] for
        // BEC/BSC; common random numbers keep the difference smooth.
        let (l3, p6) = three_six();
        for (channel, k_of_eps) in [
            (
                ChannelModel::bec(0.5).unwrap(),
                Box::new(|e: f64| std::f64::consts::LN_2 / e) as Box<dyn Fn(f64) -> f64>,
            ),
            (
                ChannelModel::bsc(0.35).unwrap(),
                Box::new(|e: f64| {
                    // 2 sum_p |m1^{(2p)}| / (2p(2p-1)), truncated far out.
                    let ch = ChannelModel::bsc(e).unwrap();
                    2.0 * (1..=40usize)
                        .map(|p| {
                            let (m1, _) = ch.moment_derivatives(2 * p).unwrap();
                            m1.abs() / ((2 * p) as f64 * (2 * p - 1) as f64)
                        })
                        .sum::<f64>()
                }),
            ),
        ] {
            let mut rng = stream(55, domain::HRS, 9);
            let dv = Population::from_channel(&channel, 30_000, &mut rng);
            let eps = channel.noise();
            let delta = 0.01;
            let h = |e: f64| {
                let ch = channel.with_noise(e).unwrap();
                let mut r = stream(55, domain::HRS, 10);
                evaluate_h_rs(&dv, &ch, &l3, &p6, 200_000, &mut r).unwrap()
            };
            let hp = h(eps + delta);
            let hm = h(eps - delta);
            let deriv = (hp.value - hm.value) / (2.0 * delta);
            let se = (hp.stderr.powi(2) + hm.stderr.powi(2)).sqrt() / (2.0 * delta);
            let k = k_of_eps(eps);
            assert!(
                deriv > -4.0 * se && deriv < k + 4.0 * se,
                "{}: deriv={deriv} k={k} se={se}",
                channel.kind_name()
            );
        }
    }
}

//! Degree distributions and bipartite graph samplers.
//!
//! Four ensembles are provided: the standard configuration-model
//! LDPC(n, Lambda, P), the Poisson ensemble, the round-based multi-Poisson
//! ensemble, and the two-parameter `(t*, s)` interpolating ensemble whose
//! rate loss is compensated by extra per-variable observations.

use crate::rs_solver::{check_combine, Population};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid degree distribution: {0}")]
    BadDistribution(String),
    #[error("cannot balance {sockets} variable sockets with check degrees {degrees:?}")]
    SocketBalance { sockets: usize, degrees: Vec<usize> },
    #[error("invalid interpolation point: {0}")]
    BadPoint(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("graph parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Perspective {
    Node,
    Edge,
}

/// A degree polynomial with nonnegative coefficients summing to one.
///
/// Node perspective evaluates as `sum_d c_d x^d`; edge perspective as
/// `sum_d c_d x^{d-1}` (coefficients stay indexed by the node degree `d`).
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeDistribution {
    coeffs: Vec<f64>,
    perspective: Perspective,
}

impl DegreeDistribution {
    /// Node-perspective distribution from `(degree, coefficient)` pairs.
    pub fn from_node_pairs(pairs: &[(usize, f64)]) -> Result<Self, EnsembleError> {
        let max = pairs
            .iter()
            .map(|&(d, _)| d)
            .max()
            .ok_or_else(|| EnsembleError::BadDistribution("empty distribution".into()))?;
        let mut coeffs = vec![0.0; max + 1];
        for &(d, c) in pairs {
            coeffs[d] += c;
        }
        Self::new(coeffs, Perspective::Node)
    }

    pub fn new(coeffs: Vec<f64>, perspective: Perspective) -> Result<Self, EnsembleError> {
        if coeffs.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(EnsembleError::BadDistribution(
                "coefficients must be nonnegative and finite".into(),
            ));
        }
        let total: f64 = coeffs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EnsembleError::BadDistribution(format!(
                "coefficients sum to {total}, expected 1"
            )));
        }
        if !coeffs.iter().any(|&c| c > 0.0) {
            return Err(EnsembleError::BadDistribution("all-zero".into()));
        }
        Ok(DegreeDistribution {
            coeffs,
            perspective,
        })
    }

    /// `x^d` with probability one.
    pub fn regular(d: usize) -> Self {
        let mut coeffs = vec![0.0; d + 1];
        coeffs[d] = 1.0;
        DegreeDistribution {
            coeffs,
            perspective: Perspective::Node,
        }
    }

    pub fn perspective(&self) -> Perspective {
        self.perspective
    }

    pub fn coefficient(&self, d: usize) -> f64 {
        self.coeffs.get(d).copied().unwrap_or(0.0)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c > 0.0).unwrap_or(0)
    }

    /// Exact derivative at one: `sum_d d c_d` under the node perspective.
    pub fn derivative_at_one(&self) -> f64 {
        match self.perspective {
            Perspective::Node => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(d, &c)| d as f64 * c)
                .sum(),
            Perspective::Edge => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(d, &c)| d.saturating_sub(1) as f64 * c)
                .sum(),
        }
    }

    /// Evaluates the polynomial for this perspective.
    pub fn evaluate(&self, x: f64) -> f64 {
        match self.perspective {
            Perspective::Node => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(d, &c)| c * x.powi(d as i32))
                .sum(),
            Perspective::Edge => self
                .coeffs
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > 0.0)
                .map(|(d, &c)| c * x.powi(d as i32 - 1))
                .sum(),
        }
    }

    /// Derivative of the node-perspective polynomial: `sum_d d c_d x^{d-1}`.
    pub fn derivative_evaluate(&self, x: f64) -> f64 {
        assert_eq!(self.perspective, Perspective::Node);
        self.coeffs
            .iter()
            .enumerate()
            .filter(|&(d, &c)| d > 0 && c > 0.0)
            .map(|(d, &c)| d as f64 * c * x.powi(d as i32 - 1))
            .sum()
    }

    /// The edge-perspective companion: coefficient at degree `d` becomes
    /// `d c_d / sum_e e c_e`.
    pub fn to_edge_perspective(&self) -> Result<Self, EnsembleError> {
        if self.perspective == Perspective::Edge {
            return Ok(self.clone());
        }
        let norm = self.derivative_at_one();
        if norm <= 0.0 {
            return Err(EnsembleError::BadDistribution(
                "edge perspective of a degree-0 distribution".into(),
            ));
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(d, &c)| d as f64 * c / norm)
            .collect();
        Self::new(coeffs, Perspective::Edge)
    }

    /// Draws a node degree (for the edge perspective: the degree of the node
    /// a uniformly random edge is attached to).
    pub fn sample_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (d, &c) in self.coeffs.iter().enumerate() {
            acc += c;
            if u < acc {
                return d;
            }
        }
        self.max_degree()
    }
}

/// Design rate `1 - Lambda'(1)/P'(1)` of LDPC(n, Lambda, P).
pub fn design_rate(lambda: &DegreeDistribution, p: &DegreeDistribution) -> f64 {
    1.0 - lambda.derivative_at_one() / p.derivative_at_one()
}

/// A bipartite variable/check graph plus per-variable extra observations.
#[derive(Clone, Debug, PartialEq)]
pub struct TannerGraph {
    pub n: usize,
    pub checks: Vec<Vec<usize>>,
    /// Extra observation values `U_a^i` per variable; empty for plain
    /// ensembles.
    pub extra_obs: Vec<Vec<f64>>,
    /// Seed recorded by seeded construction helpers (0 when sampled from a
    /// caller-provided stream).
    pub seed: u64,
    /// Duplicate (check, variable) incidences kept by the configuration
    /// matching.
    pub multi_edge_incidences: usize,
    /// Set when a multi-Poisson round ran out of free sockets.
    pub degenerate_sockets: bool,
}

impl TannerGraph {
    pub fn empty(n: usize) -> Self {
        TannerGraph {
            n,
            checks: Vec::new(),
            extra_obs: vec![Vec::new(); n],
            seed: 0,
            multi_edge_incidences: 0,
            degenerate_sockets: false,
        }
    }

    pub fn check_count(&self) -> usize {
        self.checks.len()
    }

    pub fn variable_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for check in &self.checks {
            for &v in check {
                deg[v] += 1;
            }
        }
        deg
    }

    /// Parity rows as bitmasks; duplicate incidences cancel mod 2.
    pub fn parity_rows(&self) -> Vec<u32> {
        assert!(self.n <= 32, "bitmask parity rows support n <= 32");
        self.checks
            .iter()
            .map(|check| {
                let mut row = 0u32;
                for &v in check {
                    row ^= 1 << v;
                }
                row
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        for (c, check) in self.checks.iter().enumerate() {
            for &v in check {
                if v >= self.n {
                    return Err(EnsembleError::Parse(format!(
                        "check {c} references variable {v} >= n = {}",
                        self.n
                    )));
                }
            }
        }
        if self.extra_obs.len() != self.n {
            return Err(EnsembleError::Parse(
                "observation section length differs from n".into(),
            ));
        }
        // +inf observations are legitimate (a fully informative check-side
        // message, e.g. combined from a {0, +inf} trial density); NaN and
        // -inf are not.
        if self
            .extra_obs
            .iter()
            .flatten()
            .any(|u| u.is_nan() || *u == f64::NEG_INFINITY)
        {
            return Err(EnsembleError::Parse("invalid observation value".into()));
        }
        Ok(())
    }

    /// Plain-text serialization: a header with `n`, check count and the
    /// recorded seed, one line per check, then one observation line per
    /// variable.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "ldpclab-graph v1 n={} m={} seed={} degenerate={}",
            self.n,
            self.checks.len(),
            self.seed,
            u8::from(self.degenerate_sockets)
        )
        .unwrap();
        for check in &self.checks {
            let line: Vec<String> = check.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        writeln!(out, "observations").unwrap();
        for obs in &self.extra_obs {
            let line: Vec<String> = obs.iter().map(|u| format!("{u}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self, EnsembleError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| EnsembleError::Parse("empty input".into()))?;
        let mut n = None;
        let mut m = None;
        let mut seed = 0u64;
        let mut degenerate = false;
        for field in header.split_whitespace().skip(2) {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| EnsembleError::Parse(format!("bad header field `{field}`")))?;
            match key {
                "n" => {
                    n = Some(
                        value
                            .parse()
                            .map_err(|e| EnsembleError::Parse(format!("{e}")))?,
                    )
                }
                "m" => {
                    m = Some(
                        value
                            .parse()
                            .map_err(|e| EnsembleError::Parse(format!("{e}")))?,
                    )
                }
                "seed" => {
                    seed = value
                        .parse()
                        .map_err(|e| EnsembleError::Parse(format!("{e}")))?
                }
                "degenerate" => degenerate = value == "1",
                _ => return Err(EnsembleError::Parse(format!("unknown header key `{key}`"))),
            }
        }
        let n: usize = n.ok_or_else(|| EnsembleError::Parse("missing n".into()))?;
        let m: usize = m.ok_or_else(|| EnsembleError::Parse("missing m".into()))?;
        let mut checks = Vec::with_capacity(m);
        for _ in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| EnsembleError::Parse("truncated check section".into()))?;
            let check: Result<Vec<usize>, _> =
                line.split_whitespace().map(|tok| tok.parse()).collect();
            checks.push(check.map_err(|e| EnsembleError::Parse(format!("{e}")))?);
        }
        match lines.next() {
            Some("observations") => {}
            _ => return Err(EnsembleError::Parse("missing observation section".into())),
        }
        let mut extra_obs = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().unwrap_or("");
            let obs: Result<Vec<f64>, _> =
                line.split_whitespace().map(|tok| tok.parse()).collect();
            extra_obs.push(obs.map_err(|e| EnsembleError::Parse(format!("{e}")))?);
        }
        let mut graph = TannerGraph {
            n,
            checks,
            extra_obs,
            seed,
            multi_edge_incidences: 0,
            degenerate_sockets: degenerate,
        };
        graph.multi_edge_incidences = count_multi_edges(&graph.checks);
        graph.validate()?;
        Ok(graph)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        Self::deserialize(&std::fs::read_to_string(path)?)
    }
}

fn count_multi_edges(checks: &[Vec<usize>]) -> usize {
    let mut total = 0;
    for check in checks {
        let mut sorted = check.clone();
        sorted.sort_unstable();
        total += sorted.windows(2).filter(|w| w[0] == w[1]).count();
    }
    total
}

/// Largest-remainder apportionment of `n` items into the given proportions;
/// ties broken toward lower index.
pub fn apportion(n: usize, proportions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = proportions.iter().map(|&c| n as f64 * c).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &idx in order.iter().take(n.saturating_sub(assigned)) {
        counts[idx] += 1;
    }
    counts
}

/// Adjusts check counts so the check-side socket total matches the variable
/// side. Moves are "add a check of degree k" / "remove one (if available)";
/// breadth-first search finds a shortest move sequence zeroing the deficit.
fn balance_check_counts(counts: &mut [usize], degrees: &[usize], deficit: i64) -> Result<(), ()> {
    use std::collections::{HashMap, VecDeque};
    if deficit == 0 {
        return Ok(());
    }
    let kmax = *degrees.iter().max().unwrap() as i64;
    let lo = -2 * kmax * kmax - deficit.abs();
    let hi = 2 * kmax * kmax + deficit.abs();
    let mut parents: HashMap<i64, (i64, i64)> = HashMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(deficit);
    parents.insert(deficit, (deficit, 0));
    while let Some(v) = queue.pop_front() {
        for &k in degrees {
            // Adding a check of degree k eats k sockets of deficit; removing
            // one frees k.
            for mv in [-(k as i64), k as i64] {
                let next = v + mv;
                if next < lo || next > hi || parents.contains_key(&next) {
                    continue;
                }
                parents.insert(next, (v, mv));
                if next == 0 {
                    let mut cur = 0i64;
                    let mut moves = Vec::new();
                    while cur != deficit {
                        let &(prev, m) = parents.get(&cur).unwrap();
                        moves.push(m);
                        cur = prev;
                    }
                    for m in moves {
                        let k = m.unsigned_abs() as usize;
                        let idx = degrees.iter().position(|&d| d == k).unwrap();
                        if m < 0 {
                            counts[idx] += 1;
                        } else {
                            if counts[idx] == 0 {
                                return Err(());
                            }
                            counts[idx] -= 1;
                        }
                    }
                    return Ok(());
                }
                queue.push_back(next);
            }
        }
    }
    Err(())
}

/// Configuration-model sampler for LDPC(n, Lambda, P).
///
/// Variable counts per degree come from largest-remainder apportionment;
/// check counts are repaired so the socket totals match. Sockets are matched
/// by a uniform shuffle and multi-edges are kept (a variable listed twice in
/// a check contributes sigma^2 = 1 to the parity).
pub fn sample_standard<R: Rng + ?Sized>(
    n: usize,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    rng: &mut R,
) -> Result<TannerGraph, EnsembleError> {
    let var_counts = apportion(n, lambda_node.coefficients());
    let sockets_total: usize = var_counts.iter().enumerate().map(|(d, &c)| d * c).sum();

    let degrees: Vec<usize> = p_node
        .coefficients()
        .iter()
        .enumerate()
        .filter(|&(d, &c)| d > 0 && c > 0.0)
        .map(|(d, _)| d)
        .collect();
    if degrees.is_empty() {
        return Err(EnsembleError::BadDistribution(
            "check distribution has no positive degree".into(),
        ));
    }
    let m_target = (sockets_total as f64 / p_node.derivative_at_one()).round() as usize;
    let props: Vec<f64> = degrees.iter().map(|&d| p_node.coefficient(d)).collect();
    let mut counts = apportion(m_target, &props);
    let check_sockets: i64 = counts
        .iter()
        .zip(&degrees)
        .map(|(&c, &d)| (c * d) as i64)
        .sum();
    let deficit = sockets_total as i64 - check_sockets;
    balance_check_counts(&mut counts, &degrees, deficit).map_err(|_| {
        EnsembleError::SocketBalance {
            sockets: sockets_total,
            degrees: degrees.clone(),
        }
    })?;

    let mut var_sockets = Vec::with_capacity(sockets_total);
    let mut var_index = 0usize;
    for (d, &count) in var_counts.iter().enumerate() {
        for _ in 0..count {
            var_sockets.extend(std::iter::repeat_n(var_index, d));
            var_index += 1;
        }
    }
    debug_assert_eq!(var_index, n);
    // Fisher-Yates over the socket list gives a uniform matching.
    for i in (1..var_sockets.len()).rev() {
        let j = rng.random_range(0..=i);
        var_sockets.swap(i, j);
    }

    let mut checks = Vec::new();
    let mut cursor = 0usize;
    for (&count, &d) in counts.iter().zip(&degrees) {
        for _ in 0..count {
            checks.push(var_sockets[cursor..cursor + d].to_vec());
            cursor += d;
        }
    }
    debug_assert_eq!(cursor, sockets_total);

    let multi = count_multi_edges(&checks);
    Ok(TannerGraph {
        n,
        checks,
        extra_obs: vec![Vec::new(); n],
        seed: 0,
        multi_edge_incidences: multi,
        degenerate_sockets: false,
    })
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    draw as usize
}

/// Poisson-LDPC(n, 1-r, P): for each degree k a Poisson(n(1-r)P_k) number of
/// checks, each connected to k uniform variables with replacement.
pub fn sample_poisson<R: Rng + ?Sized>(
    n: usize,
    rate: f64,
    p_node: &DegreeDistribution,
    rng: &mut R,
) -> Result<TannerGraph, EnsembleError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(EnsembleError::BadParameter(format!(
            "rate {rate} outside (0, 1]"
        )));
    }
    let mut checks = Vec::new();
    for (k, &pk) in p_node.coefficients().iter().enumerate() {
        if k == 0 || pk <= 0.0 {
            continue;
        }
        let m_k = poisson_draw(n as f64 * (1.0 - rate) * pk, rng);
        for _ in 0..m_k {
            checks.push((0..k).map(|_| rng.random_range(0..n)).collect());
        }
    }
    let multi = count_multi_edges(&checks);
    Ok(TannerGraph {
        n,
        checks,
        extra_obs: vec![Vec::new(); n],
        seed: 0,
        multi_edge_incidences: multi,
        degenerate_sockets: false,
    })
}

/// Socket bookkeeping of the multi-Poisson construction after its last
/// executed round.
#[derive(Clone, Debug)]
pub struct MultiPoissonState {
    /// Free sockets `d_i(t)` after the recorded round.
    pub free_sockets: Vec<usize>,
    /// Normalized attachment weights derived from `free_sockets`.
    pub weights: Vec<f64>,
    /// Last completed round index.
    pub round: usize,
    pub gamma: f64,
    pub t_max: usize,
    /// Total sockets the rounds tried to consume beyond availability.
    pub overdraw: usize,
    /// Per-round sums of the attachment weights (each should be 1).
    pub round_weight_sums: Vec<f64>,
    pub degenerate: bool,
}

/// Attachment weights from free-socket counters; an exhausted state falls
/// back to uniform weights (flagged on the state by the samplers).
pub fn socket_weights(state: &MultiPoissonState) -> Vec<f64> {
    normalized_weights(&state.free_sockets).0
}

fn normalized_weights(free: &[usize]) -> (Vec<f64>, bool) {
    let total: usize = free.iter().sum();
    if total == 0 {
        let n = free.len();
        return (vec![1.0 / n as f64; n], true);
    }
    (
        free.iter().map(|&d| d as f64 / total as f64).collect(),
        false,
    )
}

fn sample_weighted<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

/// One Poisson check round at strength `scale`: returns the new checks and
/// the per-variable socket consumption.
fn poisson_round<R: Rng + ?Sized>(
    n: usize,
    p_node: &DegreeDistribution,
    weights: &[f64],
    scale: f64,
    rng: &mut R,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cdf.push(acc);
    }
    let p_prime = p_node.derivative_at_one();
    let mut checks = Vec::new();
    let mut used = vec![0usize; n];
    for (k, &pk) in p_node.coefficients().iter().enumerate() {
        if k == 0 || pk <= 0.0 {
            continue;
        }
        let m_k = poisson_draw(n as f64 * scale * pk / p_prime, rng);
        for _ in 0..m_k {
            let check: Vec<usize> = (0..k).map(|_| sample_weighted(&cdf, rng)).collect();
            for &v in &check {
                used[v] += 1;
            }
            checks.push(check);
        }
    }
    (checks, used)
}

fn consume_sockets(free: &mut [usize], used: &[usize]) -> usize {
    let mut overdraw = 0;
    for (f, &u) in free.iter_mut().zip(used) {
        if u > *f {
            overdraw += u - *f;
            *f = 0;
        } else {
            *f -= u;
        }
    }
    overdraw
}

fn initial_sockets(n: usize, lambda_node: &DegreeDistribution) -> Vec<usize> {
    let var_counts = apportion(n, lambda_node.coefficients());
    let mut free = Vec::with_capacity(n);
    for (d, &count) in var_counts.iter().enumerate() {
        free.extend(std::iter::repeat_n(d, count));
    }
    free
}

/// Round-based multi-Poisson ensemble targeting LDPC(n, Lambda, P).
///
/// Runs `t_max = floor(Lambda'(1)/gamma) - 1` rounds; each adds
/// Poisson(n gamma P_k / P'(1)) degree-k checks whose edges attach to
/// variable `i` with probability proportional to its free sockets. Consumed
/// sockets floor at zero with the overdraw recorded.
pub fn sample_multi_poisson<R: Rng + ?Sized>(
    n: usize,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    gamma: f64,
    rng: &mut R,
) -> Result<(TannerGraph, MultiPoissonState), EnsembleError> {
    let lp = lambda_node.derivative_at_one();
    if !(gamma > 0.0 && gamma <= lp) {
        return Err(EnsembleError::BadParameter(format!(
            "gamma {gamma} outside (0, Lambda'(1) = {lp}]"
        )));
    }
    let t_max = (lp / gamma).floor() as usize - 1;
    let mut free = initial_sockets(n, lambda_node);

    let mut checks = Vec::new();
    let mut overdraw = 0usize;
    let mut degenerate = false;
    let mut round_weight_sums = Vec::with_capacity(t_max);
    for _t in 1..=t_max {
        let (w, exhausted) = normalized_weights(&free);
        degenerate |= exhausted;
        round_weight_sums.push(w.iter().sum());
        let (mut new_checks, used) = poisson_round(n, p_node, &w, gamma, rng);
        checks.append(&mut new_checks);
        overdraw += consume_sockets(&mut free, &used);
    }
    let (final_weights, _) = normalized_weights(&free);

    let multi = count_multi_edges(&checks);
    let graph = TannerGraph {
        n,
        checks,
        extra_obs: vec![Vec::new(); n],
        seed: 0,
        multi_edge_incidences: multi,
        degenerate_sockets: degenerate,
    };
    let state = MultiPoissonState {
        free_sockets: free,
        weights: final_weights,
        round: t_max,
        gamma,
        t_max,
        overdraw,
        round_weight_sums,
        degenerate,
    };
    Ok((graph, state))
}

/// Interpolation coordinates: check rounds run at full strength before
/// `t_star`, at strength `s` during it, and are replaced by compensating
/// observations afterwards.
#[derive(Clone, Copy, Debug)]
pub struct InterpolationPoint {
    pub t_star: usize,
    pub s: f64,
}

/// Output of [`sample_interpolating`]: the graph plus the socket weights
/// frozen at round `t_star`, which the overlap diagnostics reuse.
#[derive(Clone, Debug)]
pub struct InterpolationRealization {
    pub graph: TannerGraph,
    pub weights_at_t_star: Vec<f64>,
    pub state: MultiPoissonState,
}

/// Two-parameter interpolating ensemble.
///
/// Rounds `1..t_star-1` follow the multi-Poisson construction; round
/// `t_star` runs at strength `s` and adds `Poisson(n (gamma - s) w_i(t*))`
/// compensating observations; later rounds add only `Poisson(n gamma
/// w_i(t*))` observations at the frozen weights. Observation values are
/// `U = atanh(prod tanh V)` over `k-1` fresh draws from `d_V` with `k` from
/// the edge perspective of `P`.
pub fn sample_interpolating<R: Rng + ?Sized>(
    n: usize,
    lambda_node: &DegreeDistribution,
    p_node: &DegreeDistribution,
    gamma: f64,
    point: InterpolationPoint,
    d_v: &Population,
    rng: &mut R,
) -> Result<InterpolationRealization, EnsembleError> {
    let lp = lambda_node.derivative_at_one();
    if !(gamma > 0.0 && gamma <= lp) {
        return Err(EnsembleError::BadParameter(format!(
            "gamma {gamma} outside (0, Lambda'(1) = {lp}]"
        )));
    }
    if d_v.len() == 0 {
        return Err(EnsembleError::BadParameter("empty d_V population".into()));
    }
    let t_max = (lp / gamma).floor() as usize - 1;
    if point.t_star > t_max {
        return Err(EnsembleError::BadPoint(format!(
            "t_star {} > t_max {t_max}",
            point.t_star
        )));
    }
    if !(0.0 <= point.s && point.s <= gamma) {
        return Err(EnsembleError::BadPoint(format!(
            "s {} outside [0, gamma = {gamma}]",
            point.s
        )));
    }
    let p_edge = p_node.to_edge_perspective()?;

    let mut free = initial_sockets(n, lambda_node);
    let mut checks: Vec<Vec<usize>> = Vec::new();
    let mut extra_obs: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut overdraw = 0usize;
    let mut degenerate = false;
    let mut round_weight_sums = Vec::new();
    let mut w_star = normalized_weights(&free).0;

    macro_rules! sample_u {
        ($rng:expr) => {{
            let k = p_edge.sample_degree($rng);
            let vs: Vec<f64> = (0..k.saturating_sub(1)).map(|_| d_v.sample($rng)).collect();
            check_combine(&vs)
        }};
    }
    macro_rules! observation_round {
        ($means:expr, $rng:expr) => {{
            let mut used = vec![0usize; n];
            for (i, &mean) in $means.iter().enumerate() {
                let e_i = poisson_draw(mean, $rng);
                for _ in 0..e_i {
                    extra_obs[i].push(sample_u!($rng));
                }
                used[i] = e_i;
            }
            overdraw += consume_sockets(&mut free, &used);
        }};
    }

    if point.t_star == 0 {
        // Compensation-only round 0 at the initial weights.
        let means: Vec<f64> = w_star
            .iter()
            .map(|&w| n as f64 * (gamma - point.s) * w)
            .collect();
        observation_round!(means, rng);
    }

    for t in 1..=t_max {
        let (w, exhausted) = normalized_weights(&free);
        degenerate |= exhausted;
        round_weight_sums.push(w.iter().sum());
        if t < point.t_star {
            let (mut new_checks, used) = poisson_round(n, p_node, &w, gamma, rng);
            checks.append(&mut new_checks);
            overdraw += consume_sockets(&mut free, &used);
        } else if t == point.t_star {
            w_star.clone_from(&w);
            let (mut new_checks, mut used) = poisson_round(n, p_node, &w, point.s, rng);
            checks.append(&mut new_checks);
            // Rate-loss compensation for the partial round.
            for (i, &wi) in w.iter().enumerate() {
                let e_i = poisson_draw(n as f64 * (gamma - point.s) * wi, rng);
                for _ in 0..e_i {
                    extra_obs[i].push(sample_u!(rng));
                }
                used[i] += e_i;
            }
            overdraw += consume_sockets(&mut free, &used);
        } else {
            // Observation-only rounds at the weights frozen at t_star.
            let means: Vec<f64> = w_star.iter().map(|&w| n as f64 * gamma * w).collect();
            observation_round!(means, rng);
        }
    }

    let (final_weights, _) = normalized_weights(&free);
    let multi = count_multi_edges(&checks);
    let graph = TannerGraph {
        n,
        checks,
        extra_obs,
        seed: 0,
        multi_edge_incidences: multi,
        degenerate_sockets: degenerate,
    };
    let state = MultiPoissonState {
        free_sockets: free,
        weights: final_weights,
        round: t_max,
        gamma,
        t_max,
        overdraw,
        round_weight_sums,
        degenerate,
    };
    Ok(InterpolationRealization {
        graph,
        weights_at_t_star: w_star,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};
    use crate::stats::mean_stderr;

    fn dist(pairs: &[(usize, f64)]) -> DegreeDistribution {
        DegreeDistribution::from_node_pairs(pairs).unwrap()
    }

    #[test]
    fn regular_three_six_counts() {
        let mut rng = stream(10, domain::GRAPH, 0);
        let g = sample_standard(
            6,
            &DegreeDistribution::regular(3),
            &DegreeDistribution::regular(6),
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.check_count(), 3);
        assert!(g.checks.iter().all(|c| c.len() == 6));
        assert!(g.variable_degrees().iter().all(|&d| d == 3));
    }

    #[test]
    fn two_by_four_counts() {
        let mut rng = stream(11, domain::GRAPH, 0);
        let g = sample_standard(
            4,
            &DegreeDistribution::regular(2),
            &DegreeDistribution::regular(4),
            &mut rng,
        )
        .unwrap();
        assert_eq!(g.check_count(), 2);
        assert_eq!(g.checks.iter().map(|c| c.len()).sum::<usize>(), 8);
    }

    #[test]
    fn irregular_node_fractions_exact() {
        let lambda = dist(&[(2, 0.5), (3, 0.5)]);
        let p = DegreeDistribution::regular(5);
        for sample in 0..50 {
            let mut rng = stream(12, domain::GRAPH, sample);
            let g = sample_standard(100, &lambda, &p, &mut rng).unwrap();
            let deg = g.variable_degrees();
            assert_eq!(deg.iter().filter(|&&d| d == 2).count(), 50);
            assert_eq!(deg.iter().filter(|&&d| d == 3).count(), 50);
        }
    }

    #[test]
    fn impossible_socket_balance_rejected() {
        // 5 sockets cannot be covered by degree-4 checks alone.
        let lambda = DegreeDistribution::regular(1);
        let p = DegreeDistribution::regular(4);
        let mut rng = stream(13, domain::GRAPH, 0);
        let err = sample_standard(5, &lambda, &p, &mut rng);
        assert!(matches!(err, Err(EnsembleError::SocketBalance { .. })));
    }

    #[test]
    fn socket_repair_mixed_degrees() {
        let lambda = DegreeDistribution::regular(3);
        let p = dist(&[(3, 0.5), (4, 0.5)]);
        for n in [7usize, 9, 10, 11] {
            let mut rng = stream(14, domain::GRAPH, n as u64);
            let g = sample_standard(n, &lambda, &p, &mut rng).unwrap();
            let sockets: usize = g.checks.iter().map(|c| c.len()).sum();
            assert_eq!(sockets, 3 * n, "n={n}");
        }
    }

    #[test]
    fn edge_perspective_and_rate() {
        let lambda = dist(&[(2, 0.5), (3, 0.5)]);
        assert!((lambda.derivative_at_one() - 2.5).abs() < 1e-15);
        let edge = lambda.to_edge_perspective().unwrap();
        assert!((edge.coefficient(2) - 0.4).abs() < 1e-15);
        assert!((edge.coefficient(3) - 0.6).abs() < 1e-15);
        // lambda(x) = 0.4 x + 0.6 x^2 at x = 0.5.
        assert!((edge.evaluate(0.5) - (0.4 * 0.5 + 0.6 * 0.25)).abs() < 1e-15);
        let p = DegreeDistribution::regular(6);
        assert!((design_rate(&DegreeDistribution::regular(3), &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn serialization_roundtrip_bitexact() {
        let mut rng = stream(15, domain::GRAPH, 3);
        let mut g = sample_standard(
            12,
            &DegreeDistribution::regular(3),
            &DegreeDistribution::regular(6),
            &mut rng,
        )
        .unwrap();
        g.seed = 0xdead_beef;
        g.extra_obs[3] = vec![0.1 + 0.2, -1.5e-300, f64::MIN_POSITIVE, 7.0];
        g.extra_obs[11] = vec![std::f64::consts::PI, f64::INFINITY];
        let text = g.serialize();
        let back = TannerGraph::deserialize(&text).unwrap();
        assert_eq!(g, back);
        assert_eq!(text, back.serialize());
    }

    #[test]
    fn poisson_mean_check_count() {
        let p = DegreeDistribution::regular(6);
        let mut counts = Vec::new();
        for i in 0..10_000u64 {
            let mut rng = stream(16, domain::GRAPH, i);
            let g = sample_poisson(100, 0.5, &p, &mut rng).unwrap();
            counts.push(g.check_count() as f64);
        }
        let (mean, se) = mean_stderr(&counts);
        assert!((mean - 50.0).abs() < 4.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn poisson_checks_have_exact_degree() {
        let p = dist(&[(4, 0.3), (6, 0.7)]);
        let mut rng = stream(17, domain::GRAPH, 0);
        let g = sample_poisson(50, 0.4, &p, &mut rng).unwrap();
        assert!(!g.checks.is_empty());
        for c in &g.checks {
            assert!(c.len() == 4 || c.len() == 6);
            assert!(c.iter().all(|&v| v < 50));
        }
    }

    #[test]
    fn poisson_near_unit_rate_is_empty() {
        let p = DegreeDistribution::regular(6);
        let mut rng = stream(28, domain::GRAPH, 0);
        let g = sample_poisson(100, 1.0, &p, &mut rng).unwrap();
        assert_eq!(g.check_count(), 0);
    }

    #[test]
    fn poisson_variable_degree_law_chi_squared() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n = 10_000usize;
        let p = DegreeDistribution::regular(6);
        let mut rng = stream(18, domain::GRAPH, 0);
        let g = sample_poisson(n, 0.5, &p, &mut rng).unwrap();
        let deg = g.variable_degrees();
        // The law concentrates on Poisson with mean P'(1)(1 - r) = 3.
        let mean = 3.0f64;
        let dmax = 12usize;
        let mut expected = vec![0.0f64; dmax + 2];
        let mut pmf = (-mean).exp();
        for (d, e) in expected.iter_mut().take(dmax + 1).enumerate() {
            *e = pmf * n as f64;
            pmf *= mean / (d as f64 + 1.0);
        }
        expected[dmax + 1] = n as f64 - expected[..=dmax].iter().sum::<f64>();
        let mut observed = vec![0.0f64; dmax + 2];
        for &d in &deg {
            observed[d.min(dmax + 1)] += 1.0;
        }
        // Pool bins until each expects at least 5.
        let mut chi2 = 0.0;
        let mut bins = 0i32;
        let mut obs_pool = 0.0;
        let mut exp_pool = 0.0;
        for (o, e) in observed.iter().zip(&expected) {
            obs_pool += o;
            exp_pool += e;
            if exp_pool >= 5.0 {
                chi2 += (obs_pool - exp_pool).powi(2) / exp_pool;
                bins += 1;
                obs_pool = 0.0;
                exp_pool = 0.0;
            }
        }
        if exp_pool > 0.0 {
            chi2 += (obs_pool - exp_pool).powi(2) / exp_pool;
            bins += 1;
        }
        let dist = ChiSquared::new((bins - 1) as f64).unwrap();
        let crit = dist.inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2={chi2:.2} crit={crit:.2}");
    }

    #[test]
    fn multi_poisson_single_round_bound_is_empty() {
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        let mut rng = stream(19, domain::GRAPH, 0);
        // gamma = Lambda'(1) gives t_max = 0: no rounds executed.
        let (g, state) = sample_multi_poisson(30, &lambda, &p, 3.0, &mut rng).unwrap();
        assert_eq!(g.check_count(), 0);
        assert_eq!(state.t_max, 0);
    }

    #[test]
    fn multi_poisson_weight_sums_and_ranges() {
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        for i in 0..20u64 {
            let mut rng = stream(20, domain::GRAPH, i);
            let (g, state) = sample_multi_poisson(60, &lambda, &p, 0.5, &mut rng).unwrap();
            assert_eq!(state.t_max, 5);
            for &ws in &state.round_weight_sums {
                assert!((ws - 1.0).abs() < 1e-12);
            }
            for c in &g.checks {
                assert_eq!(c.len(), 6);
                assert!(c.iter().all(|&v| v < 60));
            }
            let w = socket_weights(&state);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_poisson_degree_law_approaches_target() {
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        let n = 10_000usize;
        let mut tv_by_gamma = Vec::new();
        for (idx, &gamma) in [0.3f64, 0.1, 0.03].iter().enumerate() {
            let mut rng = stream(21, domain::GRAPH, idx as u64);
            let (g, _) = sample_multi_poisson(n, &lambda, &p, gamma, &mut rng).unwrap();
            let deg = g.variable_degrees();
            let mut hist = vec![0.0f64; 16];
            for &d in &deg {
                hist[d.min(15)] += 1.0 / n as f64;
            }
            let mut tv = 0.0;
            for (d, &h) in hist.iter().enumerate() {
                let target = if d == 3 { 1.0 } else { 0.0 };
                tv += 0.5 * (h - target).abs();
            }
            tv_by_gamma.push(tv);
        }
        assert!(
            tv_by_gamma[0] > tv_by_gamma[1] && tv_by_gamma[1] > tv_by_gamma[2],
            "{tv_by_gamma:?}"
        );
    }

    #[test]
    fn socket_weight_tail_bound() {
        // Weight tail with a fitted constant: the final free-socket total
        // concentrates near n(L'(1) - t_max*gamma) = n/2, so n*w_i stays
        // below lmax/(1/2 - fluctuation). A = 3 lmax/gamma covers the
        // Poisson dips observed down to n = 100.
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        let gamma = 0.5;
        let a = 3.0 * 3.0 / gamma;
        for &n in &[100usize, 1000] {
            for i in 0..10u64 {
                let mut rng = stream(22, domain::GRAPH, n as u64 * 100 + i);
                let (_, state) = sample_multi_poisson(n, &lambda, &p, gamma, &mut rng).unwrap();
                let w = socket_weights(&state);
                assert!(w.iter().all(|&wi| wi <= a / n as f64));
            }
        }
    }

    #[test]
    fn interpolating_zero_point_has_no_checks() {
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        let dv = Population::all_zero(100);
        let mut rng = stream(23, domain::GRAPH, 0);
        let real = sample_interpolating(
            40,
            &lambda,
            &p,
            0.5,
            InterpolationPoint { t_star: 0, s: 0.0 },
            &dv,
            &mut rng,
        )
        .unwrap();
        assert_eq!(real.graph.check_count(), 0);
        let total_obs: usize = real.graph.extra_obs.iter().map(|o| o.len()).sum();
        assert!(total_obs > 0);
    }

    #[test]
    fn interpolating_observation_count_mean() {
        // With t_star = t_max the compensation at the final round is the only
        // observation source: total count is Poisson with mean n(gamma - s).
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        let dv = Population::all_zero(100);
        let n = 50usize;
        let gamma = 1.0;
        let s = 0.25;
        let mut counts = Vec::new();
        for i in 0..4000u64 {
            let mut rng = stream(25, domain::GRAPH, i);
            let real = sample_interpolating(
                n,
                &lambda,
                &p,
                gamma,
                InterpolationPoint { t_star: 2, s },
                &dv,
                &mut rng,
            )
            .unwrap();
            assert_eq!(real.state.t_max, 2);
            let total: usize = real.graph.extra_obs.iter().map(|o| o.len()).sum();
            counts.push(total as f64);
        }
        let (mean, se) = mean_stderr(&counts);
        let expect = n as f64 * (gamma - s);
        assert!(
            (mean - expect).abs() < 4.0 * se,
            "mean={mean} expect={expect} se={se}"
        );
    }

    #[test]
    fn interpolating_endpoint_matches_multi_poisson_in_law() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let lambda = DegreeDistribution::regular(3);
        let p = DegreeDistribution::regular(6);
        let n = 200usize;
        let gamma = 0.5;
        let reps = 10_000u64;
        let dv = Population::all_zero(10);
        let mut counts_a = std::collections::BTreeMap::new();
        let mut counts_b = std::collections::BTreeMap::new();
        for i in 0..reps {
            let mut rng = stream(26, domain::GRAPH, i);
            let (g, state) = sample_multi_poisson(n, &lambda, &p, gamma, &mut rng).unwrap();
            *counts_a.entry(g.check_count()).or_insert(0.0f64) += 1.0;
            let mut rng = stream(27, domain::GRAPH, i);
            let real = sample_interpolating(
                n,
                &lambda,
                &p,
                gamma,
                InterpolationPoint {
                    t_star: state.t_max,
                    s: gamma,
                },
                &dv,
                &mut rng,
            )
            .unwrap();
            let total_obs: usize = real.graph.extra_obs.iter().map(|o| o.len()).sum();
            assert_eq!(total_obs, 0, "endpoint must add no observations");
            *counts_b.entry(real.graph.check_count()).or_insert(0.0f64) += 1.0;
        }
        // Two-sample chi-squared over pooled check-count bins.
        let keys: std::collections::BTreeSet<usize> =
            counts_a.keys().chain(counts_b.keys()).cloned().collect();
        let mut chi2 = 0.0;
        let mut bins = 0i32;
        let mut pool_a = 0.0;
        let mut pool_b = 0.0;
        for k in keys {
            pool_a += counts_a.get(&k).copied().unwrap_or(0.0);
            pool_b += counts_b.get(&k).copied().unwrap_or(0.0);
            if pool_a + pool_b >= 20.0 {
                chi2 += (pool_a - pool_b).powi(2) / (pool_a + pool_b);
                bins += 1;
                pool_a = 0.0;
                pool_b = 0.0;
            }
        }
        if pool_a + pool_b > 0.0 {
            chi2 += (pool_a - pool_b).powi(2) / (pool_a + pool_b);
            bins += 1;
        }
        let dist = ChiSquared::new((bins - 1).max(1) as f64).unwrap();
        let crit = dist.inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2={chi2:.2} crit={crit:.2} bins={bins}");
    }

    #[test]
    fn apportion_preserves_total() {
        let counts = apportion(10, &[0.0, 0.0, 0.333, 0.333, 0.334]);
        assert_eq!(counts.iter().sum::<usize>(), 10);
    }
}

//! Channel-output realization sets: exact enumeration for atomic channels,
//! Monte Carlo otherwise.

use super::system::GibbsSystem;
use super::{GibbsError, EXACT_BUDGET};
use crate::channel::{atanh_extended, ChannelModel};
use crate::ensemble::TannerGraph;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// Maximum number of materialized output patterns.
const MAX_PATTERNS: u128 = 1 << 18;

/// A weighted collection of Gibbs systems over channel-output realizations.
///
/// Exact sets carry the true pattern probabilities (weights sum to one);
/// Monte Carlo sets carry uniform weights `1/n` and report standard errors.
pub struct RealizationSet {
    items: Vec<(f64, GibbsSystem)>,
    exact: bool,
}

impl RealizationSet {
    /// Enumerates every output pattern of an atomic channel (all bits on
    /// the same channel).
    pub fn exact_outputs(graph: &TannerGraph, channel: &ChannelModel) -> Result<Self, GibbsError> {
        let channels = vec![channel.clone(); graph.n];
        Self::exact_outputs_per_bit(graph, &channels)
    }

    /// Enumerates output patterns with an individual channel per bit
    /// (needed by the per-bit noise derivatives).
    pub fn exact_outputs_per_bit(
        graph: &TannerGraph,
        channels: &[ChannelModel],
    ) -> Result<Self, GibbsError> {
        if channels.len() != graph.n {
            return Err(GibbsError::FieldLength {
                got: channels.len(),
                want: graph.n,
            });
        }
        let atom_lists: Vec<Vec<(f64, f64)>> = channels
            .iter()
            .map(|c| c.atoms().ok_or(GibbsError::NotAtomic))
            .collect::<Result<_, _>>()?;
        let mut patterns: u128 = 1;
        for atoms in &atom_lists {
            patterns = patterns.saturating_mul(atoms.len() as u128);
        }
        let parity = Arc::new(graph.parity_rows());
        let k0 = {
            // Dimension bound without pins.
            let sys = GibbsSystem::from_fields(graph, &vec![0.0; graph.n])?;
            sys.dimension() as u128
        };
        let budget = patterns.saturating_mul(1u128 << k0.min(64));
        if patterns > MAX_PATTERNS || budget > EXACT_BUDGET {
            return Err(GibbsError::BudgetExceeded(budget));
        }

        let obs: Vec<f64> = graph
            .extra_obs
            .iter()
            .map(|us| us.iter().sum::<f64>())
            .collect();
        let mut items = Vec::with_capacity(patterns as usize);
        let n = graph.n;
        let mut index = vec![0usize; n];
        loop {
            let mut weight = 1.0f64;
            let mut fields = Vec::with_capacity(n);
            for (i, atoms) in atom_lists.iter().enumerate() {
                let (t, w) = atoms[index[i]];
                weight *= w;
                fields.push(atanh_extended(t));
            }
            if weight > 0.0 {
                let sys = GibbsSystem::assemble(n, Arc::clone(&parity), fields, obs.clone())?;
                items.push((weight, sys));
            }
            // Mixed-radix increment.
            let mut pos = 0;
            loop {
                if pos == n {
                    let total: f64 = items.iter().map(|(w, _)| w).sum();
                    debug_assert!((total - 1.0).abs() < 1e-9, "weights sum to {total}");
                    return Ok(RealizationSet { items, exact: true });
                }
                index[pos] += 1;
                if index[pos] < atom_lists[pos].len() {
                    break;
                }
                index[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Samples `n_samples` output realizations.
    pub fn monte_carlo<R: Rng + ?Sized>(
        graph: &TannerGraph,
        channel: &ChannelModel,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<Self, GibbsError> {
        let parity = Arc::new(graph.parity_rows());
        let obs: Vec<f64> = graph
            .extra_obs
            .iter()
            .map(|us| us.iter().sum::<f64>())
            .collect();
        let w = 1.0 / n_samples as f64;
        let mut items = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let fields: Vec<f64> = (0..graph.n).map(|_| channel.sample_field(rng)).collect();
            items.push((
                w,
                GibbsSystem::assemble(graph.n, Arc::clone(&parity), fields, obs.clone())?,
            ));
        }
        Ok(RealizationSet {
            items,
            exact: false,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(f64, GibbsSystem)> {
        self.items.iter()
    }

    /// Weighted expectation of a per-system statistic; the standard error
    /// is zero for exact sets.
    pub fn expectation(&self, f: impl Fn(&GibbsSystem) -> f64 + Sync) -> (f64, f64) {
        let values: Vec<(f64, f64)> = self
            .items
            .par_iter()
            .map(|(w, sys)| (*w, f(sys)))
            .collect();
        let mean: f64 = values.iter().map(|(w, v)| w * v).sum();
        if self.exact {
            return (mean, 0.0);
        }
        let n = values.len() as f64;
        let var = values
            .iter()
            .map(|(_, v)| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }

    /// Weighted expectation of a vector statistic. The reduction is a
    /// fixed-order fold over the item index, so results do not depend on
    /// the worker count.
    pub fn expectation_vec(
        &self,
        len: usize,
        f: impl Fn(&GibbsSystem) -> Vec<f64> + Sync,
    ) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = self
            .items
            .par_iter()
            .map(|(w, sys)| {
                let v = f(sys);
                debug_assert_eq!(v.len(), len);
                v.into_iter().map(|x| w * x).collect()
            })
            .collect();
        let mut acc = vec![0.0; len];
        for row in rows {
            for (x, y) in acc.iter_mut().zip(row) {
                *x += y;
            }
        }
        acc
    }
}

/// Exact conditional entropy `H(X|Y)` in nats per block, by enumerating
/// output patterns of an atomic channel.
pub fn conditional_entropy_exact(
    graph: &TannerGraph,
    channel: &ChannelModel,
) -> Result<f64, GibbsError> {
    let set = RealizationSet::exact_outputs(graph, channel)?;
    Ok(set.expectation(|sys| sys.free_entropy()).0)
}

/// Exact conditional entropy with an individual noise value per bit.
pub fn conditional_entropy_exact_per_bit(
    graph: &TannerGraph,
    channels: &[ChannelModel],
) -> Result<f64, GibbsError> {
    let set = RealizationSet::exact_outputs_per_bit(graph, channels)?;
    Ok(set.expectation(|sys| sys.free_entropy()).0)
}

/// Monte Carlo conditional entropy with standard error.
pub fn conditional_entropy_mc<R: Rng + ?Sized>(
    graph: &TannerGraph,
    channel: &ChannelModel,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), GibbsError> {
    let set = RealizationSet::monte_carlo(graph, channel, n_samples, rng)?;
    Ok(set.expectation(|sys| sys.free_entropy()))
}

/// Fast exact BEC conditional entropy for plain graphs: per erasure set `E`
/// the free entropy is `dim ln 2` with `dim = |E| - rank(H restricted to
/// E)`, so only a GF(2) rank per pattern is needed.
pub fn bec_conditional_entropy_exact(graph: &TannerGraph, eps: f64) -> Result<f64, GibbsError> {
    if graph.extra_obs.iter().any(|o| !o.is_empty()) {
        return Err(GibbsError::BadParameter(
            "fast BEC path requires a plain graph without observations".into(),
        ));
    }
    let n = graph.n;
    if n > 26 {
        return Err(GibbsError::TooLarge { n, max: 26 });
    }
    let rows = graph.parity_rows();
    let mut total = 0.0f64;
    let ln2 = std::f64::consts::LN_2;
    for erased in 0u32..(1u32 << n) {
        let weight =
            eps.powi(erased.count_ones() as i32) * (1.0 - eps).powi((n as u32 - erased.count_ones()) as i32);
        if weight == 0.0 {
            continue;
        }
        // Rank of the parity rows restricted to the erased columns.
        let mut restricted: Vec<u32> = rows
            .iter()
            .map(|&r| r & erased)
            .filter(|&r| r != 0)
            .collect();
        let mut rank = 0usize;
        for col in 0..n {
            let bit = 1u32 << col;
            if erased & bit == 0 {
                continue;
            }
            let Some(pos) = restricted.iter().position(|&r| r & bit != 0) else {
                continue;
            };
            let pivot = restricted.swap_remove(pos);
            for r in restricted.iter_mut() {
                if *r & bit != 0 {
                    *r ^= pivot;
                }
            }
            rank += 1;
        }
        let dim = erased.count_ones() as usize - rank;
        total += weight * dim as f64 * ln2;
    }
    Ok(total)
}

//! The exact Gibbs system: GF(2) solution space plus field weights.

use super::{GibbsError, DEFAULT_N_MAX};
use crate::channel::ChannelModel;
use crate::ensemble::TannerGraph;
use rand::Rng;
use std::sync::{Arc, OnceLock};

/// Reduced solution space of the parity + pinning constraints.
#[derive(Debug)]
struct Solved {
    /// Nullspace basis of the homogeneous system; support never touches
    /// pinned bits.
    basis: Vec<u32>,
    /// One solution of the inhomogeneous system (bit set = spin -1).
    particular: u32,
    rank: usize,
}

/// Affine GF(2) solver: rows are `(mask, rhs)` meaning `xor of masked bits
/// = rhs`. Returns `None` when inconsistent.
fn solve_affine(n: usize, mut rows: Vec<(u32, bool)>) -> Option<Solved> {
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut pivot_rows: Vec<(u32, bool, usize)> = Vec::new(); // (mask, rhs, col)
    for col in 0..n {
        let bit = 1u32 << col;
        let Some(pos) = rows.iter().position(|&(m, _)| m & bit != 0) else {
            continue;
        };
        let (mask, rhs) = rows.swap_remove(pos);
        // Eliminate this column everywhere else.
        for row in rows.iter_mut() {
            if row.0 & bit != 0 {
                row.0 ^= mask;
                row.1 ^= rhs;
            }
        }
        for prev in pivot_rows.iter_mut() {
            if prev.0 & bit != 0 {
                prev.0 ^= mask;
                prev.1 ^= rhs;
            }
        }
        pivot_of_col[col] = Some(pivot_rows.len());
        pivot_rows.push((mask, rhs, col));
    }
    if rows.iter().any(|&(m, rhs)| m == 0 && rhs) {
        return None;
    }
    // Particular solution: free variables zero, pivot bits take their rhs.
    let mut particular = 0u32;
    for &(_, rhs, col) in &pivot_rows {
        if rhs {
            particular |= 1 << col;
        }
    }
    // One basis vector per free column.
    let mut basis = Vec::new();
    for free in 0..n {
        if pivot_of_col[free].is_some() {
            continue;
        }
        let mut v = 1u32 << free;
        for &(mask, _, col) in &pivot_rows {
            if mask & (1 << free) != 0 {
                v |= 1 << col;
            }
        }
        basis.push(v);
    }
    Some(Solved {
        basis,
        particular,
        rank: pivot_rows.len(),
    })
}

/// A fixed graph + channel realization with exact codeword enumeration.
///
/// Immutable after construction and safe to share across workers.
pub struct GibbsSystem {
    n: usize,
    parity: Arc<Vec<u32>>,
    /// Channel half-LLR `f_i = l_i / 2`; `+inf` for perfectly known bits.
    channel_field: Vec<f64>,
    /// Observation field `u_i = sum_a U_a^i`.
    obs_field: Vec<f64>,
    /// `-2 h_i` for finite effective fields, `0` at pinned bits.
    neg2h: Vec<f64>,
    pinned_plus: u32,
    pinned_minus: u32,
    solved: Arc<Solved>,
    /// Cached normalized codeword weights, for categorical spin sampling.
    weights: OnceLock<(Vec<f64>, Vec<u32>)>,
}

impl std::fmt::Debug for GibbsSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GibbsSystem")
            .field("n", &self.n)
            .field("checks", &self.parity.len())
            .field("dimension", &self.dimension())
            .finish()
    }
}

impl GibbsSystem {
    /// Builds the system from a graph and full log-likelihood ratios
    /// (`l_i = 2 atanh t_i`; `±inf` allowed). Extra observations stored on
    /// the graph are added to the effective field.
    pub fn from_llrs(graph: &TannerGraph, llrs: &[f64]) -> Result<Self, GibbsError> {
        if llrs.len() != graph.n {
            return Err(GibbsError::FieldLength {
                got: llrs.len(),
                want: graph.n,
            });
        }
        let fields: Vec<f64> = llrs.iter().map(|&l| l / 2.0).collect();
        Self::from_fields(graph, &fields)
    }

    /// Builds the system from half-LLR fields `f_i = l_i/2`.
    pub fn from_fields(graph: &TannerGraph, fields: &[f64]) -> Result<Self, GibbsError> {
        if fields.len() != graph.n {
            return Err(GibbsError::FieldLength {
                got: fields.len(),
                want: graph.n,
            });
        }
        let obs: Vec<f64> = graph
            .extra_obs
            .iter()
            .map(|us| us.iter().sum::<f64>())
            .collect();
        Self::assemble(
            graph.n,
            Arc::new(graph.parity_rows()),
            fields.to_vec(),
            obs,
        )
    }

    /// Builds the system with outputs drawn from the channel.
    pub fn build<R: Rng + ?Sized>(
        graph: &TannerGraph,
        channel: &ChannelModel,
        rng: &mut R,
    ) -> Result<Self, GibbsError> {
        let fields: Vec<f64> = (0..graph.n).map(|_| channel.sample_field(rng)).collect();
        Self::from_fields(graph, &fields)
    }

    pub(super) fn assemble(
        n: usize,
        parity: Arc<Vec<u32>>,
        channel_field: Vec<f64>,
        obs_field: Vec<f64>,
    ) -> Result<Self, GibbsError> {
        if n > DEFAULT_N_MAX {
            return Err(GibbsError::TooLarge {
                n,
                max: DEFAULT_N_MAX,
            });
        }
        let mut pinned_plus = 0u32;
        let mut pinned_minus = 0u32;
        let mut neg2h = vec![0.0f64; n];
        for i in 0..n {
            let f = channel_field[i];
            let u = obs_field[i];
            assert!(!f.is_nan() && !u.is_nan(), "NaN field at bit {i}");
            let plus = f == f64::INFINITY || u == f64::INFINITY;
            let minus = f == f64::NEG_INFINITY || u == f64::NEG_INFINITY;
            if plus && minus {
                return Err(GibbsError::ConflictingInfiniteEvidence(i));
            }
            if plus {
                pinned_plus |= 1 << i;
            } else if minus {
                pinned_minus |= 1 << i;
            } else {
                neg2h[i] = -2.0 * (f + u);
            }
        }
        let mut rows: Vec<(u32, bool)> = parity.iter().map(|&m| (m, false)).collect();
        let mut rem = pinned_plus;
        while rem != 0 {
            let i = rem.trailing_zeros();
            rows.push((1 << i, false));
            rem &= rem - 1;
        }
        rem = pinned_minus;
        while rem != 0 {
            let i = rem.trailing_zeros();
            rows.push((1 << i, true));
            rem &= rem - 1;
        }
        let solved = solve_affine(n, rows).ok_or(GibbsError::ContradictoryEvidence)?;
        Ok(GibbsSystem {
            n,
            parity,
            channel_field,
            obs_field,
            neg2h,
            pinned_plus,
            pinned_minus,
            solved: Arc::new(solved),
            weights: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Codeword-space dimension after pinning: `log2` of the number of
    /// enumerated configurations.
    pub fn dimension(&self) -> usize {
        self.solved.basis.len()
    }

    pub fn rank(&self) -> usize {
        self.solved.rank
    }

    /// Bit masks of spins pinned to `+1` / `-1` by infinite evidence.
    pub fn pinned_masks(&self) -> (u32, u32) {
        (self.pinned_plus, self.pinned_minus)
    }

    pub fn codeword_count(&self) -> u64 {
        1u64 << self.dimension()
    }

    /// Channel difference value `t_i = tanh(l_i/2)`.
    pub fn difference_value(&self, i: usize) -> f64 {
        self.channel_field[i].tanh()
    }

    pub fn channel_field(&self, i: usize) -> f64 {
        self.channel_field[i]
    }

    pub fn obs_field(&self, i: usize) -> f64 {
        self.obs_field[i]
    }

    /// Total effective field `h_i = l_i/2 + u_i`.
    pub fn effective_field(&self, i: usize) -> f64 {
        self.channel_field[i] + self.obs_field[i]
    }

    /// Visits every configuration as `(spin mask, relative log weight)`;
    /// a set bit means spin `-1`, and the log weight is relative to the
    /// pin-consistent all-plus reference.
    pub fn for_each_word(&self, mut visit: impl FnMut(u32, f64)) {
        let k = self.dimension();
        let basis = &self.solved.basis;
        let start = self.solved.particular;
        let weight_of = |word: u32| -> f64 {
            let mut lw = 0.0;
            let mut rem = word;
            while rem != 0 {
                let i = rem.trailing_zeros() as usize;
                lw += self.neg2h[i];
                rem &= rem - 1;
            }
            lw
        };
        if k <= 14 {
            // From-scratch weights: no accumulated rounding.
            let mut word = start;
            visit(word, weight_of(word));
            let mut gray = 0u32;
            for j in 1u32..(1 << k) {
                let tz = j.trailing_zeros() as usize;
                gray ^= 1 << tz;
                word ^= basis[tz];
                visit(word, weight_of(word));
            }
            let _ = gray;
        } else {
            let mut word = start;
            let mut lw = weight_of(word);
            visit(word, lw);
            for j in 1u64..(1u64 << k) {
                let tz = j.trailing_zeros() as usize;
                let mut rem = basis[tz];
                while rem != 0 {
                    let i = rem.trailing_zeros() as usize;
                    if word & (1 << i) != 0 {
                        lw -= self.neg2h[i];
                    } else {
                        lw += self.neg2h[i];
                    }
                    word ^= 1 << i;
                    rem &= rem - 1;
                }
                if j % 4096 == 0 {
                    lw = weight_of(word);
                }
                visit(word, lw);
            }
        }
    }

    /// `ln Z - sum_i h_i s_i` with `s` the pin-consistent all-plus
    /// reference: finite for every realization, and exactly the
    /// conditional-entropy integrand under all-zero transmission.
    pub fn free_entropy(&self) -> f64 {
        let mut max = f64::NEG_INFINITY;
        self.for_each_word(|_, lw| max = max.max(lw));
        let mut total = 0.0;
        self.for_each_word(|_, lw| total += (lw - max).exp());
        max + total.ln()
    }

    /// `ln Z`. Infinite when a pinned bit carries an infinite field, which
    /// is the honest value; use [`free_entropy`](Self::free_entropy) for
    /// entropy work.
    pub fn log_partition(&self) -> f64 {
        let mut shift = 0.0f64;
        for i in 0..self.n {
            let h = self.effective_field(i);
            if self.pinned_minus & (1 << i) != 0 {
                shift -= h; // s_i = -1
            } else {
                shift += h;
            }
        }
        self.free_entropy() + shift
    }

    /// All single-spin means `<sigma_i>`.
    pub fn magnetizations(&self) -> Vec<f64> {
        let mut max = f64::NEG_INFINITY;
        self.for_each_word(|_, lw| max = max.max(lw));
        let mut z = 0.0;
        let mut minus = vec![0.0f64; self.n];
        self.for_each_word(|word, lw| {
            let w = (lw - max).exp();
            z += w;
            let mut rem = word;
            while rem != 0 {
                let i = rem.trailing_zeros() as usize;
                minus[i] += w;
                rem &= rem - 1;
            }
        });
        minus
            .iter()
            .map(|&m| {
                let v = 1.0 - 2.0 * m / z;
                debug_assert!(v.abs() <= 1.0 + 1e-12);
                v
            })
            .collect()
    }

    /// All first and second moments: `(T, Tij)` with `Tij[i][j] =
    /// <sigma_i sigma_j>` and diagonal 1.
    pub fn all_pair_brackets(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut max = f64::NEG_INFINITY;
        self.for_each_word(|_, lw| max = max.max(lw));
        let mut z = 0.0;
        let mut minus = vec![0.0f64; n];
        let mut pair_minus = vec![vec![0.0f64; n]; n]; // sum w over words with bits i XOR j set... see below
        self.for_each_word(|word, lw| {
            let w = (lw - max).exp();
            z += w;
            let mut bits = Vec::with_capacity(word.count_ones() as usize);
            let mut rem = word;
            while rem != 0 {
                let i = rem.trailing_zeros() as usize;
                minus[i] += w;
                bits.push(i);
                rem &= rem - 1;
            }
            // sigma_i sigma_j = -1 exactly when bits i, j differ; accumulate
            // the both-set mass and recombine afterwards.
            for (a, &i) in bits.iter().enumerate() {
                for &j in &bits[a + 1..] {
                    pair_minus[i][j] += w;
                }
            }
        });
        let t: Vec<f64> = minus.iter().map(|&m| 1.0 - 2.0 * m / z).collect();
        let mut tij = vec![vec![1.0f64; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let both = pair_minus[i][j];
                // P(sigma_i != sigma_j) = (minus_i - both) + (minus_j - both).
                let differ = (minus[i] - both) + (minus[j] - both);
                let v = 1.0 - 2.0 * differ / z;
                tij[i][j] = v;
                tij[j][i] = v;
            }
        }
        (t, tij)
    }

    /// Exact `<sigma_A>`; multiset indices reduce mod 2.
    pub fn bracket(&self, indices: &[usize]) -> Result<f64, GibbsError> {
        let mut mask = 0u32;
        for &i in indices {
            if i >= self.n {
                return Err(GibbsError::IndexOutOfRange { index: i, n: self.n });
            }
            mask ^= 1 << i;
        }
        if mask == 0 {
            return Ok(1.0);
        }
        let mut max = f64::NEG_INFINITY;
        self.for_each_word(|_, lw| max = max.max(lw));
        let mut z = 0.0;
        let mut signed = 0.0;
        self.for_each_word(|word, lw| {
            let w = (lw - max).exp();
            z += w;
            if (word & mask).count_ones() % 2 == 0 {
                signed += w;
            } else {
                signed -= w;
            }
        });
        Ok(signed / z)
    }

    /// Rebuilds the system with the channel fields at `bits` set to zero
    /// (the defining computation of extrinsic brackets). Extra observations
    /// are kept.
    pub fn with_zeroed_channel_fields(&self, bits: &[usize]) -> Result<Self, GibbsError> {
        let mut fields = self.channel_field.clone();
        for &i in bits {
            if i >= self.n {
                return Err(GibbsError::IndexOutOfRange { index: i, n: self.n });
            }
            fields[i] = 0.0;
        }
        GibbsSystem::assemble(
            self.n,
            Arc::clone(&self.parity),
            fields,
            self.obs_field.clone(),
        )
    }

    /// Extrinsic bracket `<sigma_A>_{~omit}` by the zeroed-field rebuild.
    pub fn extrinsic_bracket(&self, indices: &[usize], omit: &[usize]) -> Result<f64, GibbsError> {
        self.with_zeroed_channel_fields(omit)?.bracket(indices)
    }

    fn weights_table(&self) -> &(Vec<f64>, Vec<u32>) {
        self.weights.get_or_init(|| {
            let mut max = f64::NEG_INFINITY;
            self.for_each_word(|_, lw| max = max.max(lw));
            let mut words = Vec::with_capacity(1 << self.dimension());
            let mut cumsum = Vec::with_capacity(1 << self.dimension());
            let mut acc = 0.0;
            self.for_each_word(|word, lw| {
                acc += (lw - max).exp();
                words.push(word);
                cumsum.push(acc);
            });
            let total = acc;
            for c in cumsum.iter_mut() {
                *c /= total;
            }
            (cumsum, words)
        })
    }

    /// Draws one spin configuration from the exact Gibbs measure
    /// (set bit = spin -1).
    pub fn sample_spins<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let (cumsum, words) = self.weights_table();
        let u: f64 = rng.random();
        let idx = cumsum.partition_point(|&c| c < u).min(words.len() - 1);
        words[idx]
    }
}

/// Pair-marginal quadrant probabilities from the bracket triple:
/// `4 p(s_i, s_j) = 1 + s_i a + s_j b + s_i s_j c`, clamped at zero against
/// rounding residue.
pub(super) fn quadrant_probs(a: f64, b: f64, c: f64) -> [(f64, f64, f64); 4] {
    let mut out = [(0.0, 0.0, 0.0); 4];
    let mut idx = 0;
    for si in [1.0, -1.0] {
        for sj in [1.0, -1.0] {
            let p = (1.0 + si * a + sj * b + si * sj * c) / 4.0;
            out[idx] = (si, sj, p.max(0.0));
            idx += 1;
        }
    }
    out
}

/// `<sigma_i>_{~i}` from the intrinsic bracket and the channel difference
/// value: `(T_i - t_i) / (1 - T_i t_i)`, evaluated through the spin
/// marginals so nothing cancels catastrophically near `t = ±1`.
pub fn extrinsic_single_from_intrinsic(t_i: f64, big_t_i: f64) -> f64 {
    let q_plus = (1.0 + big_t_i) / 2.0 * (1.0 - t_i);
    let q_minus = (1.0 - big_t_i) / 2.0 * (1.0 + t_i);
    (q_plus - q_minus) / (q_plus + q_minus)
}

/// `(<sigma_i>_{~ij}, <sigma_j>_{~ij}, <sigma_i sigma_j>_{~ij})` from the
/// intrinsic pair brackets and the two channel difference values. The
/// removal tilts each quadrant by `(1 - t_i s_i)(1 - t_j s_j) >= 0`, so the
/// sums run over nonnegative terms.
pub fn extrinsic_pair_from_intrinsic(
    t_i: f64,
    t_j: f64,
    big_ti: f64,
    big_tj: f64,
    big_tij: f64,
) -> (f64, f64, f64) {
    let mut den = 0.0;
    let mut ni = 0.0;
    let mut nj = 0.0;
    let mut nij = 0.0;
    for (si, sj, p) in quadrant_probs(big_ti, big_tj, big_tij) {
        let q = p * (1.0 - t_i * si) * (1.0 - t_j * sj);
        den += q;
        ni += si * q;
        nj += sj * q;
        nij += si * sj * q;
    }
    (ni / den, nj / den, nij / den)
}

/// Inverse of [`extrinsic_pair_from_intrinsic`]: restores the channel
/// fields `t_i, t_j` onto the extrinsic brackets, tilting each quadrant by
/// `(1 + t_i s_i)(1 + t_j s_j) >= 0`.
pub fn intrinsic_pair_from_extrinsic(
    t_i: f64,
    t_j: f64,
    a: f64,
    b: f64,
    c: f64,
) -> (f64, f64, f64) {
    let mut den = 0.0;
    let mut ni = 0.0;
    let mut nj = 0.0;
    let mut nij = 0.0;
    for (si, sj, p) in quadrant_probs(a, b, c) {
        let q = p * (1.0 + t_i * si) * (1.0 + t_j * sj);
        den += q;
        ni += si * q;
        nj += sj * q;
        nij += si * sj * q;
    }
    (ni / den, nj / den, nij / den)
}

/// Intrinsic and extrinsic soft estimates of a bit pair, computed along
/// both routes (closed-form conversion and zeroed-field rebuild) with the
/// conversion residual.
#[derive(Clone, Debug)]
pub struct BracketReport {
    pub i: usize,
    pub j: usize,
    pub t_i: f64,
    pub t_ij: f64,
    pub t_i_ext_i: f64,
    pub t_i_ext_ij: f64,
    pub t_j_ext_ij: f64,
    pub t_ij_ext_ij: f64,
    /// Largest |conversion - rebuild| over the four extrinsic quantities.
    pub conversion_residual: f64,
}

/// Computes the full bracket set for bits `(i, j)` both ways.
pub fn bracket_report(sys: &GibbsSystem, i: usize, j: usize) -> Result<BracketReport, GibbsError> {
    if i == j {
        return Err(GibbsError::BadParameter("bit indices must differ".into()));
    }
    let big_ti = sys.bracket(&[i])?;
    let big_tj = sys.bracket(&[j])?;
    let big_tij = sys.bracket(&[i, j])?;
    let ti = sys.difference_value(i);
    let tj = sys.difference_value(j);

    let conv_ext_i = extrinsic_single_from_intrinsic(ti, big_ti);
    let (conv_a, conv_b, conv_c) = extrinsic_pair_from_intrinsic(ti, tj, big_ti, big_tj, big_tij);

    let rebuilt_i = sys.with_zeroed_channel_fields(&[i])?;
    let ext_i = rebuilt_i.bracket(&[i])?;
    let rebuilt_ij = sys.with_zeroed_channel_fields(&[i, j])?;
    let a = rebuilt_ij.bracket(&[i])?;
    let b = rebuilt_ij.bracket(&[j])?;
    let c = rebuilt_ij.bracket(&[i, j])?;

    let residual = [
        (conv_ext_i - ext_i).abs(),
        (conv_a - a).abs(),
        (conv_b - b).abs(),
        (conv_c - c).abs(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);

    Ok(BracketReport {
        i,
        j,
        t_i: big_ti,
        t_ij: big_tij,
        t_i_ext_i: ext_i,
        t_i_ext_ij: a,
        t_j_ext_ij: b,
        t_ij_ext_ij: c,
        conversion_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_standard, DegreeDistribution};
    use crate::rng::{domain, stream};

    fn graph_with_checks(n: usize, checks: Vec<Vec<usize>>) -> TannerGraph {
        TannerGraph {
            n,
            checks,
            extra_obs: vec![Vec::new(); n],
            seed: 0,
            multi_edge_incidences: 0,
            degenerate_sockets: false,
        }
    }

    #[test]
    fn empty_code_dimension() {
        let g = graph_with_checks(3, vec![]);
        let sys = GibbsSystem::from_llrs(&g, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(sys.dimension(), 3);
        assert_eq!(sys.codeword_count(), 8);
    }

    #[test]
    fn single_check_codewords() {
        let g = graph_with_checks(2, vec![vec![0, 1]]);
        let sys = GibbsSystem::from_llrs(&g, &[0.3, -0.2]).unwrap();
        assert_eq!(sys.dimension(), 1);
        let mut words = Vec::new();
        sys.for_each_word(|w, _| words.push(w));
        words.sort_unstable();
        assert_eq!(words, vec![0b00, 0b11]);
    }

    #[test]
    fn sampled_three_six_rank() {
        let mut rng = stream(60, domain::GRAPH, 0);
        let g = sample_standard(
            12,
            &DegreeDistribution::regular(3),
            &DegreeDistribution::regular(6),
            &mut rng,
        )
        .unwrap();
        let sys = GibbsSystem::from_llrs(&g, &vec![0.0; 12]).unwrap();
        assert!(sys.dimension() >= 6);
    }

    #[test]
    fn log_partition_closed_forms() {
        // No checks, zero fields: 2^n words of weight 1.
        let g = graph_with_checks(4, vec![]);
        let sys = GibbsSystem::from_llrs(&g, &[0.0; 4]).unwrap();
        assert!((sys.log_partition() - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // No checks, general fields: product measure.
        let llrs = [0.8, -1.1, 0.3, 2.4];
        let sys = GibbsSystem::from_llrs(&g, &llrs).unwrap();
        let expect: f64 = llrs.iter().map(|l| (2.0 * (l / 2.0).cosh()).ln()).sum();
        assert!((sys.log_partition() - expect).abs() < 1e-12);
        // Repetition code: two codewords.
        let g = graph_with_checks(2, vec![vec![0, 1]]);
        let (a, b) = (0.9f64, -0.4f64);
        let sys = GibbsSystem::from_llrs(&g, &[a, b]).unwrap();
        let s = (a + b) / 2.0;
        let expect = (s.exp() + (-s).exp()).ln();
        assert!((sys.log_partition() - expect).abs() < 1e-12);
    }

    #[test]
    fn log_partition_brute_force_cross_check() {
        // Independent oracle: sum over all 2^n spin patterns with a parity
        // indicator, no Gaussian elimination involved.
        let mut rng = stream(61, domain::GRAPH, 1);
        let g = sample_standard(
            10,
            &DegreeDistribution::regular(3),
            &DegreeDistribution::regular(5),
            &mut rng,
        )
        .unwrap();
        let mut field_rng = stream(61, domain::OUTPUT, 1);
        let llrs: Vec<f64> = (0..10).map(|_| field_rng.random_range(-2.0..2.0)).collect();
        let sys = GibbsSystem::from_llrs(&g, &llrs).unwrap();
        let rows = g.parity_rows();
        let mut z = 0.0f64;
        for word in 0u32..(1 << 10) {
            if rows.iter().any(|&r| (word & r).count_ones() % 2 == 1) {
                continue;
            }
            let mut e = 0.0;
            for (i, &l) in llrs.iter().enumerate() {
                let sigma = if word & (1 << i) != 0 { -1.0 } else { 1.0 };
                e += l / 2.0 * sigma;
            }
            z += e.exp();
        }
        assert!((sys.log_partition() - z.ln()).abs() < 1e-12);
    }

    #[test]
    fn brackets_closed_forms() {
        let g = graph_with_checks(3, vec![]);
        let sys = GibbsSystem::from_llrs(&g, &[0.0; 3]).unwrap();
        assert_eq!(sys.bracket(&[1]).unwrap(), 0.0);
        let g = graph_with_checks(2, vec![vec![0, 1]]);
        let sys = GibbsSystem::from_llrs(&g, &[1.3, -0.2]).unwrap();
        assert!((sys.bracket(&[0, 1]).unwrap() - 1.0).abs() < 1e-15);
        // Multiset reduces mod 2.
        assert_eq!(sys.bracket(&[0, 0]).unwrap(), 1.0);
        // Single-spin mean matches tanh of the aggregated field.
        let expect = ((1.3 - 0.2) / 2.0f64).tanh();
        assert!((sys.bracket(&[0]).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn pinning_and_contradiction() {
        let g = graph_with_checks(2, vec![vec![0, 1]]);
        // Pin bit 0 to +1: only 00 remains.
        let sys = GibbsSystem::from_llrs(&g, &[f64::INFINITY, 0.0]).unwrap();
        assert_eq!(sys.dimension(), 0);
        assert!((sys.bracket(&[1]).unwrap() - 1.0).abs() < 1e-15);
        assert!(sys.free_entropy().abs() < 1e-12);
        // Contradictory pins across a repetition check.
        let err = GibbsSystem::from_llrs(&g, &[f64::INFINITY, f64::NEG_INFINITY]);
        assert!(matches!(err, Err(GibbsError::ContradictoryEvidence)));
    }

    #[test]
    fn conflicting_infinite_evidence_at_one_bit() {
        let mut g = graph_with_checks(1, vec![]);
        g.extra_obs[0].push(f64::INFINITY);
        let err = GibbsSystem::from_llrs(&g, &[f64::NEG_INFINITY]);
        assert!(matches!(
            err,
            Err(GibbsError::ConflictingInfiniteEvidence(0))
        ));
    }

    #[test]
    fn observations_shift_fields() {
        let mut g = graph_with_checks(1, vec![]);
        g.extra_obs[0] = vec![0.4, 0.1];
        let sys = GibbsSystem::from_llrs(&g, &[1.0]).unwrap();
        let expect = (0.5 + 0.5f64).tanh();
        assert!((sys.bracket(&[0]).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn extrinsic_rebuild_against_conversion() {
        let mut graph_rng = stream(62, domain::GRAPH, 0);
        for trial in 0..100u64 {
            let g = sample_standard(
                8,
                &DegreeDistribution::regular(3),
                &DegreeDistribution::regular(4),
                &mut graph_rng,
            )
            .unwrap();
            let mut rng = stream(62, domain::OUTPUT, trial);
            let llrs: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let sys = GibbsSystem::from_llrs(&g, &llrs).unwrap();
            let report = bracket_report(&sys, 0, 5).unwrap();
            assert!(
                report.conversion_residual < 1e-12,
                "trial {trial}: residual {}",
                report.conversion_residual
            );
        }
    }

    #[test]
    fn extrinsic_trivial_cases() {
        // Zero channel field: extrinsic equals intrinsic.
        let g = graph_with_checks(2, vec![vec![0, 1]]);
        let sys = GibbsSystem::from_llrs(&g, &[0.0, 0.7]).unwrap();
        let t0 = sys.bracket(&[0]).unwrap();
        assert!((sys.extrinsic_bracket(&[0], &[0]).unwrap() - t0).abs() < 1e-14);
        // Single bit with field removed: no information left.
        let g = graph_with_checks(1, vec![]);
        let sys = GibbsSystem::from_llrs(&g, &[1.7]).unwrap();
        assert_eq!(sys.extrinsic_bracket(&[0], &[0]).unwrap(), 0.0);
    }

    #[test]
    fn intrinsic_extrinsic_roundtrip() {
        let mut rng = stream(63, domain::OUTPUT, 0);
        for _ in 0..200 {
            let ti: f64 = rng.random_range(-0.95..0.95);
            let tj: f64 = rng.random_range(-0.95..0.95);
            // A consistent bracket triple from an actual 2-bit system with a
            // parity check softened by observations on both bits.
            let mut g = graph_with_checks(2, vec![vec![0, 1]]);
            g.extra_obs[0] = vec![rng.random_range(-1.0..1.0)];
            g.extra_obs[1] = vec![rng.random_range(-1.0..1.0)];
            let sys =
                GibbsSystem::from_llrs(&g, &[2.0 * ti.atanh(), 2.0 * tj.atanh()]).unwrap();
            let (t, tij) = sys.all_pair_brackets();
            let (a, b, c) = extrinsic_pair_from_intrinsic(ti, tj, t[0], t[1], tij[0][1]);
            let (ri, rj, rij) = intrinsic_pair_from_extrinsic(ti, tj, a, b, c);
            assert!((ri - t[0]).abs() < 1e-12);
            assert!((rj - t[1]).abs() < 1e-12);
            assert!((rij - tij[0][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_brackets_match_single_bracket_calls() {
        let mut rng = stream(64, domain::GRAPH, 7);
        let g = sample_standard(
            9,
            &DegreeDistribution::regular(3),
            &DegreeDistribution::regular(3),
            &mut rng,
        )
        .unwrap();
        let llrs: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sys = GibbsSystem::from_llrs(&g, &llrs).unwrap();
        let (t, tij) = sys.all_pair_brackets();
        for i in 0..9 {
            assert!((t[i] - sys.bracket(&[i]).unwrap()).abs() < 1e-13);
            for j in (i + 1)..9 {
                assert!((tij[i][j] - sys.bracket(&[i, j]).unwrap()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spin_sampling_matches_exact_marginals() {
        let g = graph_with_checks(3, vec![vec![0, 1, 2]]);
        let sys = GibbsSystem::from_llrs(&g, &[0.6, -0.3, 0.1]).unwrap();
        let exact = sys.magnetizations();
        let mut rng = stream(65, domain::REPLICA, 0);
        let n = 200_000;
        let mut sums = [0.0f64; 3];
        for _ in 0..n {
            let w = sys.sample_spins(&mut rng);
            for (i, s) in sums.iter_mut().enumerate() {
                *s += if w & (1 << i) != 0 { -1.0 } else { 1.0 };
            }
        }
        for i in 0..3 {
            let mc = sums[i] / n as f64;
            let se = ((1.0 - exact[i] * exact[i]) / n as f64).sqrt();
            assert!((mc - exact[i]).abs() < 4.0 * se.max(1e-4), "bit {i}");
        }
    }

    #[test]
    fn incremental_and_scratch_weights_agree() {
        // A sampled system with dimension > 14 exercises the incremental
        // path; compare Z against a fresh scratch computation.
        let g = graph_with_checks(20, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7]]);
        let mut rng = stream(66, domain::OUTPUT, 0);
        let llrs: Vec<f64> = (0..20).map(|_| rng.random_range(-1.5..1.5)).collect();
        let sys = GibbsSystem::from_llrs(&g, &llrs).unwrap();
        assert_eq!(sys.dimension(), 17);
        let fe = sys.free_entropy();
        // Scratch route: direct sum over the same words.
        let mut max = f64::NEG_INFINITY;
        let mut words = Vec::new();
        sys.for_each_word(|w, _| words.push(w));
        let weight = |word: u32| -> f64 {
            let mut lw = 0.0;
            for i in 0..20 {
                if word & (1 << i) != 0 {
                    lw += -2.0 * llrs[i] / 2.0;
                }
            }
            lw
        };
        for &w in &words {
            max = max.max(weight(w));
        }
        let z: f64 = words.iter().map(|&w| (weight(w) - max).exp()).sum();
        assert!((fe - (max + z.ln())).abs() < 1e-10);
    }
}

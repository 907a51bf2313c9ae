//! Exact leverage-score sampling of TN matrix rows.
//!
//! The leverage score of row `i` of a matrix `A` is
//! `l_i = e_i^T A (A^T A)^+ A^T e_i`; dividing by `rank(A)` makes the scores
//! a probability distribution over rows. Rows here carry multi-indices, so a
//! draw picks one index position at a time from its conditional distribution
//! given the indices already drawn — each conditional is the diagonal of a
//! small network contraction, and the product of conditionals reproduces the
//! leverage distribution exactly.
//!
//! Draws are deterministic: draw `j` consumes its own RNG stream keyed on
//! `(seed, j)`, so results are reproducible regardless of evaluation order,
//! and the first-position distribution (shared by every draw) is computed
//! once per sketch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{gram_network, marginal_network, materialize, matrix_row, TNMatrix};
use crate::tensor::{hadamard, linear_index, psd_pinv, DenseMatrix, DEFAULT_RANK_TOL};

/// Pseudoinverse of a design Gram matrix together with its numerical rank,
/// which normalizes the leverage distribution.
#[derive(Clone, Debug)]
pub struct PhiMatrix {
    pub phi: DenseMatrix,
    pub rank: usize,
}

/// One sampled row: its multi-index over the row modes (1-based), the
/// matching linear row index, and the probability it was drawn with.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDraw {
    pub multi: Vec<usize>,
    pub linear: usize,
    pub prob: f64,
}

/// A leverage-score sketch: `J` independent row draws (with replacement)
/// and the row scalings `1/sqrt(J * prob_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchSpec {
    pub draws: Vec<SampleDraw>,
    pub weights: Vec<f64>,
}

impl SketchSpec {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Negative marginal diagonal entries beyond this are treated as a bug
/// rather than rounding noise.
const NEG_DIAG_TOL: f64 = 1e-12;

/// Contracts the Gram network of `a` and pseudo-inverts it.
pub fn compute_phi(a: &TNMatrix, rel_tol: f64) -> Result<PhiMatrix> {
    let gram = gram_network(a)?;
    let g = materialize(&gram, crate::network::DEFAULT_SIZE_GUARD)?;
    let (phi, rank) = psd_pinv(&g, rel_tol)?;
    Ok(PhiMatrix { phi, rank })
}

/// Turns a raw marginal diagonal into a probability vector: tiny negative
/// entries are clamped to zero, anything more negative is an error, and the
/// result is normalized to sum to one.
fn normalize_diagonal(mut d: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    for v in &mut d {
        if *v < -NEG_DIAG_TOL {
            return Err(Error::Numerical(format!(
                "{what}: marginal diagonal entry {v:.3e} below -{NEG_DIAG_TOL:.0e}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = d.iter().sum();
    if sum <= 0.0 {
        return Err(Error::ZeroPrefix(what.to_string()));
    }
    for v in &mut d {
        *v /= sum;
    }
    Ok(d)
}

/// Conditional distribution of row position `len(prefix) + 1` given the
/// already-drawn `prefix`, from the diagonal of the marginal network
/// contraction.
pub fn conditional_distribution(
    a: &TNMatrix,
    phi: &PhiMatrix,
    prefix: &[usize],
) -> Result<Vec<f64>> {
    let n = prefix.len() + 1;
    let mn = marginal_network(a, &phi.phi, prefix, n)?;
    let m = materialize(&mn, crate::network::DEFAULT_SIZE_GUARD)?;
    let d: Vec<f64> = (1..=m.rows()).map(|r| m.get(r, r)).collect();
    normalize_diagonal(d, &format!("prefix {prefix:?}"))
}

/// Anything that can produce the sequential conditionals for row draws.
/// [`draw_with`] is generic over this so fast paths plug in transparently.
pub trait RowSampler {
    /// Extents of the row index positions, in order.
    fn row_extents(&self) -> &[usize];
    /// Conditional distribution of position `len(prefix) + 1` given `prefix`.
    fn conditional(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

/// Generic sampler backed by marginal-network contractions.
pub struct TnRowSampler<'a> {
    a: &'a TNMatrix,
    phi: &'a PhiMatrix,
    extents: Vec<usize>,
}

impl<'a> TnRowSampler<'a> {
    pub fn new(a: &'a TNMatrix, phi: &'a PhiMatrix) -> Self {
        let extents = a.row_extents();
        Self { a, phi, extents }
    }
}

impl RowSampler for TnRowSampler<'_> {
    fn row_extents(&self) -> &[usize] {
        &self.extents
    }

    fn conditional(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        conditional_distribution(self.a, self.phi, prefix)
    }
}

/// Index of the category containing `u ∈ [0,1)` under `probs` (normalized).
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // numerical slack: u landed past the accumulated sum
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Draws `J` rows through any [`RowSampler`]. The first-position
/// distribution is computed once and shared across draws; deeper
/// conditionals are memoized by prefix, since independent draws revisit the
/// same prefixes. Draw `j` consumes the RNG stream `(seed, j)` regardless of
/// cache hits, so the result is independent of draw order.
pub fn draw_with(sampler: &dyn RowSampler, j: usize, seed: u64) -> Result<SketchSpec> {
    if j == 0 {
        return Err(Error::Param("sample count J must be at least 1".into()));
    }
    let extents = sampler.row_extents().to_vec();
    let mut cache: std::collections::BTreeMap<Vec<usize>, Vec<f64>> =
        std::collections::BTreeMap::new();
    if !extents.is_empty() {
        cache.insert(Vec::new(), sampler.conditional(&[])?);
    }
    let mut draws = Vec::with_capacity(j);
    let mut weights = Vec::with_capacity(j);
    for ordinal in 0..j {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ordinal as u64);
        let mut multi = Vec::with_capacity(extents.len());
        let mut prob = 1.0;
        for _pos in 0..extents.len() {
            if !cache.contains_key(&multi) {
                cache.insert(multi.clone(), sampler.conditional(&multi)?);
            }
            let dist = &cache[&multi];
            let idx = pick(dist, rng.gen::<f64>());
            prob *= dist[idx];
            multi.push(idx + 1);
        }
        let linear = linear_index(&multi, &extents)?;
        weights.push(1.0 / (j as f64 * prob).sqrt());
        draws.push(SampleDraw {
            multi,
            linear,
            prob,
        });
    }
    Ok(SketchSpec { draws, weights })
}

/// Draws `J` leverage-distributed row indices of `a` (with replacement).
pub fn draw_samples(a: &TNMatrix, phi: &PhiMatrix, j: usize, seed: u64) -> Result<SketchSpec> {
    draw_with(&TnRowSampler::new(a, phi), j, seed)
}

/// Sketch size sufficient for a (1+eps) residual guarantee with probability
/// 1−delta: `ceil(c * R * max(log(R/delta), 1/(eps*delta)))`, floored at
/// `R + 1`.
pub fn sample_size(r: usize, eps: f64, delta: f64, c: f64) -> Result<usize> {
    if r == 0 {
        return Err(Error::Param("rank R must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Param(format!("eps must be in (0,1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Param(format!("delta must be in (0,1), got {delta}")));
    }
    if !(c > 0.0) {
        return Err(Error::Param(format!(
            "oversampling constant must be positive, got {c}"
        )));
    }
    let rf = r as f64;
    let bound = c * rf * f64::max((rf / delta).ln(), 1.0 / (eps * delta));
    Ok((bound.ceil() as usize).max(r + 1))
}

/// Applies the sketch to both sides of a least-squares problem: returns
/// `(S·A, S·X)`. Rows of `A` are gathered by fixing the drawn row indices
/// and contracting — `A` is never materialized. Rows of `X` are gathered
/// from the given unfolding.
pub fn apply_sketch(
    spec: &SketchSpec,
    a: &TNMatrix,
    x_unfolding: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let (rows, cols) = a.shape();
    if (x_unfolding.rows() as u128) != rows {
        return Err(Error::Shape(format!(
            "unfolding has {} rows, design has {rows}",
            x_unfolding.rows()
        )));
    }
    let j = spec.len();
    let r = usize::try_from(cols).map_err(|_| Error::Shape("design too wide".into()))?;
    let mut sa = DenseMatrix::zeros(j, r);
    let mut sx = DenseMatrix::zeros(j, x_unfolding.cols());
    for (jj, (draw, &w)) in spec.draws.iter().zip(&spec.weights).enumerate() {
        let row = matrix_row(a, &draw.multi)?;
        if row.len() != r {
            return Err(Error::Shape("design row length mismatch".into()));
        }
        for (c, &v) in row.iter().enumerate() {
            *sa.at_mut(jj, c) = w * v;
        }
        for c in 0..x_unfolding.cols() {
            *sx.at_mut(jj, c) = w * x_unfolding.at(draw.linear - 1, c);
        }
    }
    Ok((sa, sx))
}

/// Exact leverage scores of a dense matrix by SVD, with the numerical rank.
/// Independent of the Gram/pseudoinverse path, so it serves as an oracle.
pub fn leverage_scores_bruteforce(a: &DenseMatrix) -> (Vec<f64>, usize) {
    let svd = a.to_nalgebra().svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = DEFAULT_RANK_TOL * smax;
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cutoff)
        .collect();
    let scores = (0..a.rows())
        .map(|i| kept.iter().map(|&k| u[(i, k)] * u[(i, k)]).sum())
        .collect();
    (scores, kept.len())
}

/// Fast conditional for CP designs. `factors` are all `N` factor matrices
/// (`I_j x R`); mode `m` (1-based) is the one being solved for and is
/// excluded, so row positions run over the other modes in ascending order.
///
/// Uses the Hadamard structure of the design Gram: the conditional at
/// position `n` is the diagonal of `A^(pos_n) M A^(pos_n)^T` with
/// `M = Phi ⊛ (⊛_{k<n} row outer products) ⊛ (⊛_{k>n} factor Grams)`,
/// so the cost per candidate is `O(R^2)` regardless of the other extents.
pub fn cp_conditional_fast(
    factors: &[DenseMatrix],
    phi: &PhiMatrix,
    m: usize,
    prefix: &[usize],
) -> Result<Vec<f64>> {
    let sampler = CpRowSampler::new(factors, phi, m)?;
    sampler.conditional(prefix)
}

/// CP fast-path sampler with cached factor Grams and suffix products.
pub struct CpRowSampler<'a> {
    positions: Vec<&'a DenseMatrix>,
    extents: Vec<usize>,
    /// suffix[n] = phi ⊛ grams of positions after n (0-based position n)
    suffix: Vec<DenseMatrix>,
    r: usize,
}

impl<'a> CpRowSampler<'a> {
    pub fn new(factors: &'a [DenseMatrix], phi: &'a PhiMatrix, m: usize) -> Result<Self> {
        if m == 0 || m > factors.len() {
            return Err(Error::Mode(format!(
                "excluded mode {m} out of range 1..={}",
                factors.len()
            )));
        }
        let r = phi.phi.rows();
        if factors.iter().any(|f| f.cols() != r) {
            return Err(Error::Shape("factor column count must match phi".into()));
        }
        let positions: Vec<&DenseMatrix> = factors
            .iter()
            .enumerate()
            .filter(|(j, _)| j + 1 != m)
            .map(|(_, f)| f)
            .collect();
        let extents: Vec<usize> = positions.iter().map(|f| f.rows()).collect();
        // suffix Hadamard products of factor Grams, rightmost first
        let mut suffix = vec![phi.phi.clone(); positions.len()];
        for n in (0..positions.len().saturating_sub(1)).rev() {
            let g = positions[n + 1].transpose().matmul(positions[n + 1])?;
            suffix[n] = hadamard(&suffix[n + 1], &g)?;
        }
        Ok(Self {
            positions,
            extents,
            suffix,
            r,
        })
    }
}

impl RowSampler for CpRowSampler<'_> {
    fn row_extents(&self) -> &[usize] {
        &self.extents
    }

    fn conditional(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let n = prefix.len();
        if n >= self.positions.len() {
            return Err(Error::Index(format!(
                "prefix length {n} leaves no position to sample (N_r = {})",
                self.positions.len()
            )));
        }
        let r = self.r;
        // M = suffix[n] ⊛ prod of prefix row outer products
        let mut m = self.suffix[n].clone();
        for (k, &idx) in prefix.iter().enumerate() {
            let f = self.positions[k];
            if idx == 0 || idx > f.rows() {
                return Err(Error::Index(format!(
                    "prefix index {idx} out of range 1..={}",
                    f.rows()
                )));
            }
            for c in 0..r {
                let fc = f.at(idx - 1, c);
                for rr in 0..r {
                    *m.at_mut(rr, c) *= f.at(idx - 1, rr) * fc;
                }
            }
        }
        let a = self.positions[n];
        let am = a.matmul(&m)?;
        let d: Vec<f64> = (0..a.rows())
            .map(|i| (0..r).map(|c| am.at(i, c) * a.at(i, c)).sum())
            .collect();
        normalize_diagonal(d, &format!("cp prefix {prefix:?}"))
    }
}

/// `W[(r,r'), (s,s')] = sum_i core(r,i,s) core(r',i,s')`: a ring core
/// contracted with its own copy over the data mode, as a matrix over edge
/// pairs with the first-copy index fastest.
pub(crate) fn core_pair_gram(core: &crate::tensor::DenseTensor) -> Result<DenseMatrix> {
    let (rl, rr) = (core.dims()[0], core.dims()[2]);
    let c = crate::tensor::unfold(core, &[2], &[1, 3])?; // I x (rl*rr)
    let g = c.transpose().matmul(&c)?; // (rl*rr)^2, modes (r,s,r',s')
    let t = crate::tensor::DenseTensor::new(vec![rl, rr, rl, rr], g.values().to_vec())?;
    let p = t.permuted(&[0, 2, 1, 3]); // (r, r', s, s')
    DenseMatrix::new(rl * rl, rr * rr, p.values().to_vec())
}

/// Gram of a tensor-ring design matrix, excluding core `m` (1-based), by the
/// cheap order: first contract each remaining core with itself over its data
/// mode (`I R^4` each), then chain the results around the ring (`R^6` each).
///
/// Cores are `(R_{j-1}, I_j, R_j)`. Design columns are indexed by the pair
/// `(r_{m-1}, r_m)` with the left edge fastest; the returned Gram uses that
/// column order.
pub fn tr_gram_fast(cores: &[crate::tensor::DenseTensor], m: usize) -> Result<DenseMatrix> {
    let n = cores.len();
    if n < 2 {
        return Err(Error::Shape("tensor ring needs at least 2 cores".into()));
    }
    if m == 0 || m > n {
        return Err(Error::Mode(format!(
            "excluded core {m} out of range 1..={n}"
        )));
    }
    for (j, c) in cores.iter().enumerate() {
        if c.ndim() != 3 {
            return Err(Error::Shape(format!(
                "core {} has {} modes, want 3",
                j + 1,
                c.ndim()
            )));
        }
        let right = c.dims()[2];
        let next_left = cores[(j + 1) % n].dims()[0];
        if right != next_left {
            return Err(Error::Shape(format!(
                "ring edge mismatch between cores {} and {}: {right} vs {next_left}",
                j + 1,
                (j + 1) % n + 1
            )));
        }
    }
    // chain around the ring starting after m
    let order: Vec<usize> = (1..n).map(|k| (m - 1 + k) % n).collect();
    let mut acc = core_pair_gram(&cores[order[0]])?;
    for &j in &order[1..] {
        acc = acc.matmul(&core_pair_gram(&cores[j])?)?;
    }
    // acc[(r_m, r_m'), (r_{m-1}, r_{m-1}')] -> gram over columns (r_{m-1}, r_m)
    let rl = cores[(m + n - 2) % n].dims()[2]; // extent of edge r_{m-1}
    let rr = cores[m % n].dims()[0]; // extent of edge r_m
    let t = crate::tensor::DenseTensor::new(vec![rr, rr, rl, rl], acc.values().to_vec())?;
    // (r_m, r_m', r_{m-1}, r_{m-1}') -> ((r_{m-1}, r_m), (r_{m-1}', r_m'))
    let p = t.permuted(&[2, 0, 3, 1]);
    DenseMatrix::new(rl * rr, rl * rr, p.values().to_vec())
}

//! Alternating least squares over a [`TnFormat`], exact and sketched.
//!
//! One iteration sweeps the format's update order; each update solves
//! `min ‖A.w − X_m‖_F` for node `m`'s tensor, where `A` is the design matrix
//! of all other nodes and `X_m` the matching data unfolding. In exact mode
//! the design is materialized; in sampled mode both sides are row-sampled
//! under the exact leverage-score distribution first, and only the sampled
//! rows of the data are ever read.
//!
//! Data access goes through [`TensorSource`] so callers can count reads: a
//! sampled update touches exactly `J * prod(m's data extents)` entries.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::{FormatKind, TnFormat};
use crate::network::{contract, materialize, matrix_row, TNMatrix, DEFAULT_SIZE_GUARD};
use crate::sampler::{
    compute_phi, core_pair_gram, draw_with, sample_size, tr_gram_fast, CpRowSampler, PhiMatrix,
    SketchSpec, TnRowSampler,
};
use crate::tensor::{
    gemm_strided, hadamard, khatri_rao, multi_index, psd_pinv, refold, DenseMatrix, DenseTensor,
    DEFAULT_RANK_TOL,
};

/// Read access to the data tensor. `fetch` takes a full 1-based multi-index.
/// Implementations may count calls; the ALS paths promise to fetch only what
/// the mode's contract requires.
pub trait TensorSource {
    fn dims(&self) -> &[usize];
    fn fetch(&self, multi: &[usize]) -> f64;
}

impl TensorSource for DenseTensor {
    fn dims(&self) -> &[usize] {
        DenseTensor::dims(self)
    }

    fn fetch(&self, multi: &[usize]) -> f64 {
        self.get(multi)
    }
}

/// Wraps a tensor and counts every entry fetched through it.
pub struct CountingSource<'a> {
    inner: &'a DenseTensor,
    count: std::cell::Cell<u64>,
}

impl<'a> CountingSource<'a> {
    pub fn new(inner: &'a DenseTensor) -> Self {
        Self {
            inner,
            count: std::cell::Cell::new(0),
        }
    }

    pub fn reads(&self) -> u64 {
        self.count.get()
    }

    pub fn reset(&self) {
        self.count.set(0);
    }
}

impl TensorSource for CountingSource<'_> {
    fn dims(&self) -> &[usize] {
        self.inner.dims()
    }

    fn fetch(&self, multi: &[usize]) -> f64 {
        self.count.set(self.count.get() + 1);
        self.inner.get(multi)
    }
}

/// Sketch size: fixed, or derived from the target guarantee per subproblem.
#[derive(Clone, Copy, Debug)]
pub enum JSpec {
    Fixed(usize),
    Bound { eps: f64, delta: f64, c: f64 },
}

#[derive(Clone, Copy, Debug)]
pub enum AlsMode {
    Exact,
    Sampled(JSpec),
}

#[derive(Clone, Debug)]
pub struct AlsConfig {
    pub mode: AlsMode,
    pub max_iters: usize,
    pub rel_change_tol: f64,
    pub seed: u64,
    /// Entry guard for materializing designs in exact mode.
    pub size_guard: u128,
    /// Evaluate the error every this many iterations (the final iteration is
    /// always evaluated). Termination is checked at evaluations only.
    pub error_every: usize,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            mode: AlsMode::Exact,
            max_iters: 50,
            rel_change_tol: 1e-4,
            seed: 0,
            size_guard: DEFAULT_SIZE_GUARD,
            error_every: 1,
        }
    }
}

impl AlsConfig {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn sampled(j: JSpec) -> Self {
        Self {
            mode: AlsMode::Sampled(j),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Param("max_iters must be at least 1".into()));
        }
        if self.error_every == 0 {
            return Err(Error::Param("error_every must be at least 1".into()));
        }
        if let AlsMode::Sampled(JSpec::Fixed(0)) = self.mode {
            return Err(Error::Param("sample count J must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub tensors: BTreeMap<String, DenseTensor>,
    /// Relative errors at the evaluated iterations, in order.
    pub errors: Vec<f64>,
    /// Iteration numbers (1-based) the errors were evaluated at.
    pub error_iters: Vec<usize>,
    /// Wall time of each iteration's sweep, excluding error evaluation.
    pub times_s: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl DecompositionResult {
    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("at least one evaluation")
    }
}

/// Random factors for a format: non-fixed nodes filled i.i.d. uniform on
/// [-1, 1] from one seeded stream in node declaration order; fixed diagonal
/// nodes get a superdiagonal of ones.
pub fn init_factors(
    format: &TnFormat,
    data_dims: &[usize],
    seed: u64,
) -> Result<BTreeMap<String, DenseTensor>> {
    if format.data_dims() != data_dims {
        return Err(Error::Format(format!(
            "format describes data dims {:?}, got {data_dims:?}",
            format.data_dims()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = BTreeMap::new();
    for id in format.node_ids().map(String::from).collect::<Vec<_>>() {
        let dims = format.node_dims(&id).expect("own id").to_vec();
        let t = if format.is_fixed(&id) {
            let mut t = DenseTensor::zeros(dims.clone());
            for k in 1..=dims[0] {
                t.set(&vec![k; dims.len()], 1.0);
            }
            t
        } else {
            let len = dims.iter().product();
            DenseTensor::new(dims, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())?
        };
        tensors.insert(id, t);
    }
    Ok(tensors)
}

/// Minimum-norm least-squares solution of `design . w = rhs` via SVD.
pub fn ls_solve(design: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    if design.rows() == 0 {
        return Err(Error::Shape("least squares needs at least one row".into()));
    }
    if rhs.rows() != design.rows() {
        return Err(Error::Shape(format!(
            "design has {} rows, rhs has {}",
            design.rows(),
            rhs.rows()
        )));
    }
    let svd = design.to_nalgebra().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let sol = svd
        .solve(&rhs.to_nalgebra(), DEFAULT_RANK_TOL * smax)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(DenseMatrix::from_nalgebra(&sol))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for the sketch of (iteration, subproblem) — every least-squares
/// problem is sampled independently.
pub fn subproblem_seed(seed: u64, iteration: usize, m_position: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ iteration as u64) ^ m_position as u64)
}

/// Index bookkeeping for updating node `m`: which data modes sit on the
/// design rows vs. the rhs columns, and how the solution folds back into
/// the node tensor.
struct UpdatePlan {
    /// data indices on design rows, ascending
    row_data: Vec<usize>,
    /// (data index, node mode) owned by m, ascending
    own_data: Vec<(usize, usize)>,
    /// node modes freed by bonds, declared order
    bond_modes: Vec<usize>,
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
    node_dims: Vec<usize>,
}

impl UpdatePlan {
    fn new(format: &TnFormat, data_dims: &[usize], m: &str) -> Result<Self> {
        let node_dims = format
            .node_dims(m)
            .ok_or_else(|| Error::Format(format!("unknown node {m}")))?
            .to_vec();
        let row_data = format.other_data(m);
        let own_data = format.own_data(m);
        let row_dims = row_data.iter().map(|&k| data_dims[k - 1]).collect();
        let col_dims = own_data.iter().map(|&(k, _)| data_dims[k - 1]).collect();
        let bond_modes = format.bond_modes_of(m);
        Ok(Self {
            row_data,
            own_data,
            bond_modes,
            row_dims,
            col_dims,
            node_dims,
        })
    }

    fn n_data(&self) -> usize {
        self.row_data.len() + self.own_data.len()
    }

    /// Entry of the data unfolding at (row multi, rhs column c0), fetched
    /// straight from the source.
    fn fetch(&self, src: &dyn TensorSource, row_multi: &[usize], c0: usize) -> Result<f64> {
        let col_multi = multi_index(c0 + 1, &self.col_dims)?;
        let mut full = vec![0usize; self.n_data()];
        for (&k, &i) in self.row_data.iter().zip(row_multi) {
            full[k - 1] = i;
        }
        for (&(k, _), &i) in self.own_data.iter().zip(&col_multi) {
            full[k - 1] = i;
        }
        Ok(src.fetch(&full))
    }

    fn refold(&self, w: &DenseMatrix) -> Result<DenseTensor> {
        let col_modes: Vec<usize> = self.own_data.iter().map(|&(_, mode)| mode).collect();
        refold(w, &self.bond_modes, &col_modes, &self.node_dims)
    }
}

/// One exact update of node `m`: materializes the design, gathers the full
/// unfolding through `src`, and solves.
pub fn exact_subproblem(
    src: &dyn TensorSource,
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
    m: &str,
    guard: u128,
) -> Result<DenseTensor> {
    let plan = UpdatePlan::new(format, src.dims(), m)?;
    let a = format.design_network(tensors, m)?;
    let design = materialize(&a, guard)?;
    let rows: usize = plan.row_dims.iter().product();
    let cols: usize = plan.col_dims.iter().product();
    let mut rhs = DenseMatrix::zeros(rows, cols);
    for c0 in 0..cols {
        for r0 in 0..rows {
            let row_multi = multi_index(r0 + 1, &plan.row_dims)?;
            *rhs.at_mut(r0, c0) = plan.fetch(src, &row_multi, c0)?;
        }
    }
    let w = ls_solve(&design, &rhs)?;
    plan.refold(&w)
}

/// Factor matrices in data-mode order (the node owning data mode `k` gives
/// matrix `k`); canonical CP layout only.
fn cp_factor_matrices(
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
) -> Result<Vec<DenseMatrix>> {
    format
        .data_modes()
        .iter()
        .map(|s| DenseMatrix::from_tensor(tensors[&s.node].clone()))
        .collect()
}

/// Ring cores in data-mode order; canonical TR layout only.
fn tr_cores(format: &TnFormat, tensors: &BTreeMap<String, DenseTensor>) -> Vec<DenseTensor> {
    format
        .data_modes()
        .iter()
        .map(|s| tensors[&s.node].clone())
        .collect()
}

/// `out[i,j] = g[perm[i], perm[j]]` (0-based).
fn permute_gram(g: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let n = perm.len();
    let mut out = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            *out.at_mut(i, j) = g.at(perm[i], perm[j]);
        }
    }
    out
}

/// The TR design's column order is the declared bond order; for the first
/// core that is (right edge, left edge), the flip of `tr_gram_fast`'s
/// natural (left fastest) order. Returns the Gram in design column order.
pub(crate) fn tr_design_gram(cores: &[DenseTensor], m: usize) -> Result<DenseMatrix> {
    let g = tr_gram_fast(cores, m)?;
    if m != 1 {
        return Ok(g);
    }
    let n = cores.len();
    let rl = cores[n - 1].dims()[2]; // edge N, left of core 1
    let rr = cores[0].dims()[2]; // edge 1, right of core 1
                                 // design index (i_right + rr*i_left) -> natural (i_left + rl*i_right)
    let perm: Vec<usize> = (0..rl * rr).map(|d| (d / rr) + rl * (d % rr)).collect();
    Ok(permute_gram(&g, &perm))
}

/// Leverage-score machinery for one subproblem, with the CP/TR fast paths
/// substituted when the format is canonical.
fn subproblem_phi(
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
    a: &TNMatrix,
    m_data: usize,
) -> Result<PhiMatrix> {
    match format.kind() {
        FormatKind::Cp => {
            let factors = cp_factor_matrices(format, tensors)?;
            let mut gram: Option<DenseMatrix> = None;
            for (j, f) in factors.iter().enumerate() {
                if j + 1 == m_data {
                    continue;
                }
                let g = f.transpose().matmul(f)?;
                gram = Some(match gram {
                    None => g,
                    Some(acc) => hadamard(&acc, &g)?,
                });
            }
            let gram = gram.ok_or_else(|| Error::Format("cp needs two factors".into()))?;
            let (phi, rank) = psd_pinv(&gram, DEFAULT_RANK_TOL)?;
            Ok(PhiMatrix { phi, rank })
        }
        FormatKind::TensorRing => {
            let gram = tr_design_gram(&tr_cores(format, tensors), m_data)?;
            let (phi, rank) = psd_pinv(&gram, DEFAULT_RANK_TOL)?;
            Ok(PhiMatrix { phi, rank })
        }
        FormatKind::Generic => compute_phi(a, DEFAULT_RANK_TOL),
    }
}

/// One sketched update of node `m`: draws `j` leverage-score rows with the
/// given seed, assembles the sampled design rows and the matching data rows
/// (reading exactly `j * prod(m's data extents)` entries), and solves.
pub fn sampled_subproblem(
    src: &dyn TensorSource,
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
    m: &str,
    j: usize,
    seed: u64,
) -> Result<DenseTensor> {
    let plan = UpdatePlan::new(format, src.dims(), m)?;
    let a = format.design_network(tensors, m)?;
    let (_, cols128) = a.shape();
    let design_cols =
        usize::try_from(cols128).map_err(|_| Error::Shape("design too wide".into()))?;
    if j < design_cols + 1 {
        log::warn!(
            "node {m}: J = {j} is below the recommended {} (design columns + 1)",
            design_cols + 1
        );
    }
    // data index of m when it owns exactly one data mode; fast paths key off it
    let m_data = match plan.own_data.as_slice() {
        [(k, _)] => Some(*k),
        _ => None,
    };
    let phi = match (format.kind(), m_data) {
        (FormatKind::Generic, _) | (_, None) => compute_phi(&a, DEFAULT_RANK_TOL)?,
        (_, Some(k)) => subproblem_phi(format, tensors, &a, k)?,
    };
    let cp_factors = match (format.kind(), m_data) {
        (FormatKind::Cp, Some(_)) => Some(cp_factor_matrices(format, tensors)?),
        _ => None,
    };
    let spec = match (&cp_factors, m_data) {
        (Some(factors), Some(k)) => {
            let sampler = CpRowSampler::new(factors, &phi, k)?;
            draw_with(&sampler, j, seed)?
        }
        _ => {
            let sampler = TnRowSampler::new(&a, &phi);
            draw_with(&sampler, j, seed)?
        }
    };
    let sa = sketch_design_rows(&spec, &a, cp_factors.as_deref(), m_data, design_cols)?;
    let cols: usize = plan.col_dims.iter().product();
    let mut sx = DenseMatrix::zeros(j, cols);
    for (jj, (draw, &w)) in spec.draws.iter().zip(&spec.weights).enumerate() {
        for c0 in 0..cols {
            *sx.at_mut(jj, c0) = w * plan.fetch(src, &draw.multi, c0)?;
        }
    }
    let w = ls_solve(&sa, &sx)?;
    plan.refold(&w)
}

/// Sampled design rows, scaled by the sketch weights. CP rows are entrywise
/// products of factor rows; otherwise each row is a small contraction of the
/// design network with its row indices fixed.
fn sketch_design_rows(
    spec: &SketchSpec,
    a: &TNMatrix,
    cp_factors: Option<&[DenseMatrix]>,
    m_data: Option<usize>,
    design_cols: usize,
) -> Result<DenseMatrix> {
    let j = spec.len();
    let mut sa = DenseMatrix::zeros(j, design_cols);
    for (jj, (draw, &w)) in spec.draws.iter().zip(&spec.weights).enumerate() {
        match (cp_factors, m_data) {
            (Some(factors), Some(m)) => {
                let mut row = vec![1.0; design_cols];
                let mut pos = 0;
                for (k, f) in factors.iter().enumerate() {
                    if k + 1 == m {
                        continue;
                    }
                    let i = draw.multi[pos];
                    for (c, r) in row.iter_mut().enumerate() {
                        *r *= f.at(i - 1, c);
                    }
                    pos += 1;
                }
                for (c, &v) in row.iter().enumerate() {
                    *sa.at_mut(jj, c) = w * v;
                }
            }
            _ => {
                let row = matrix_row(a, &draw.multi)?;
                for (c, &v) in row.iter().enumerate() {
                    *sa.at_mut(jj, c) = w * v;
                }
            }
        }
    }
    Ok(sa)
}

/// Entry count above which the residual is computed by the norm expansion
/// instead of materializing the reconstruction.
const DIRECT_RESIDUAL_LIMIT: usize = 1 << 22;

/// `‖X - TN(tensors)‖_F` by direct materialization.
fn residual_direct(
    data: &DenseTensor,
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
) -> Result<f64> {
    let net = format.network(tensors)?;
    let xhat = contract(&net, None)?;
    if xhat.dims() != data.dims() {
        return Err(Error::Shape(format!(
            "reconstruction dims {:?} vs data {:?}",
            xhat.dims(),
            data.dims()
        )));
    }
    let mut acc = 0.0;
    for (a, b) in data.values().iter().zip(xhat.values()) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// CP residual by the norm expansion `‖X‖² - 2<X, X̂> + ‖X̂‖²`, never
/// materializing the reconstruction. The inner product contracts the mode-1
/// unfolding (a stride view, no copy) with factor 1, then dots against the
/// Khatri-Rao of the remaining factors.
fn residual_cp_fast(data: &DenseTensor, factors: &[DenseMatrix]) -> Result<f64> {
    let i1 = data.dims()[0];
    let rest: usize = data.dims()[1..].iter().product();
    let r = factors[0].cols();
    // m1 = X^(1)^T . A1, (rest x r)
    let mut m1 = vec![0.0; rest * r];
    gemm_strided(
        rest,
        i1,
        r,
        data.values(),
        i1 as isize,
        1,
        factors[0].values(),
        &mut m1,
    );
    // kr = A_N (.) ... (.) A_2, rows over (i2..iN) with i2 fastest
    let mut kr = factors.last().expect("factors").clone();
    for f in factors[1..factors.len() - 1].iter().rev() {
        kr = khatri_rao(&kr, f)?;
    }
    let dot: f64 = m1.iter().zip(kr.values()).map(|(a, b)| a * b).sum();
    let mut had: Option<DenseMatrix> = None;
    for f in factors {
        let g = f.transpose().matmul(f)?;
        had = Some(match had {
            None => g,
            Some(acc) => hadamard(&acc, &g)?,
        });
    }
    let norm_hat_sq: f64 = had.expect("factors").values().iter().sum();
    let nx = data.frobenius_norm();
    Ok((nx * nx - 2.0 * dot + norm_hat_sq).max(0.0).sqrt())
}

/// TR residual by the norm expansion. `‖X̂‖²` is the ring trace of the
/// per-core pair Grams; the inner product streams over the data one mode-1
/// fiber at a time against the chain of core slices.
fn residual_tr_fast(data: &DenseTensor, cores: &[DenseTensor]) -> Result<f64> {
    let n = cores.len();
    let i1 = data.dims()[0];
    let rest_dims = &data.dims()[1..];
    let rest: usize = rest_dims.iter().product();
    let (r0, r1) = (cores[0].dims()[0], cores[0].dims()[2]);
    // core 1 unfolded to I1 x (r0*r1), r0 fastest
    let c1u = crate::tensor::unfold(&cores[0], &[2], &[1, 3])?;
    // slices of cores 2..N as column-major matrices
    let slice = |core: &DenseTensor, i: usize| -> DenseMatrix {
        let (rl, ii, rr) = (core.dims()[0], core.dims()[1], core.dims()[2]);
        let mut m = DenseMatrix::zeros(rl, rr);
        for b in 0..rr {
            for a in 0..rl {
                *m.at_mut(a, b) = core.values()[a + ii * rl * b + rl * (i - 1)];
            }
        }
        m
    };
    let mut dot = 0.0;
    let mut v = vec![0.0; i1];
    for rest0 in 0..rest {
        let multi = multi_index(rest0 + 1, rest_dims)?;
        // t = C2[i2] . C3[i3] ... CN[iN], (r1 x r0)
        let mut t = slice(&cores[1], multi[0]);
        for (jj, &i) in multi.iter().enumerate().skip(1) {
            t = t.matmul(&slice(&cores[jj + 1], i))?;
        }
        // vec over (r0, r1) with r0 fastest, entry t[r1, r0]
        let mut tv = vec![0.0; r0 * r1];
        for b in 0..r1 {
            for a in 0..r0 {
                tv[a + r0 * b] = t.at(b, a);
            }
        }
        gemm_strided(i1, r0 * r1, 1, c1u.values(), 1, i1 as isize, &tv, &mut v);
        let fiber = &data.values()[i1 * rest0..i1 * (rest0 + 1)];
        dot += fiber.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
    }
    let mut acc = core_pair_gram(&cores[0])?;
    for core in &cores[1..n] {
        acc = acc.matmul(&core_pair_gram(core)?)?;
    }
    let mut norm_hat_sq = 0.0;
    for d in 1..=acc.rows() {
        norm_hat_sq += acc.get(d, d);
    }
    let nx = data.frobenius_norm();
    Ok((nx * nx - 2.0 * dot + norm_hat_sq).max(0.0).sqrt())
}

fn residual_norm(
    data: &DenseTensor,
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
) -> Result<f64> {
    if data.len() <= DIRECT_RESIDUAL_LIMIT {
        return residual_direct(data, format, tensors);
    }
    match format.kind() {
        FormatKind::Cp => residual_cp_fast(data, &cp_factor_matrices(format, tensors)?),
        FormatKind::TensorRing => residual_tr_fast(data, &tr_cores(format, tensors)),
        FormatKind::Generic => residual_direct(data, format, tensors),
    }
}

/// `‖X - TN(tensors)‖_F / ‖X‖_F`.
pub fn relative_error(
    data: &DenseTensor,
    format: &TnFormat,
    tensors: &BTreeMap<String, DenseTensor>,
) -> Result<f64> {
    if format.data_dims() != data.dims() {
        return Err(Error::Shape(format!(
            "format describes dims {:?}, data has {:?}",
            format.data_dims(),
            data.dims()
        )));
    }
    let nx = data.frobenius_norm();
    if nx == 0.0 {
        return Err(Error::ZeroData);
    }
    Ok(residual_norm(data, format, tensors)? / nx)
}

fn run(
    data: &DenseTensor,
    format: &TnFormat,
    cfg: &AlsConfig,
    sampled: bool,
) -> Result<DecompositionResult> {
    cfg.validate()?;
    if format.data_dims() != data.dims() {
        return Err(Error::Format(format!(
            "format describes dims {:?}, data has {:?}",
            format.data_dims(),
            data.dims()
        )));
    }
    let jspec = match (sampled, cfg.mode) {
        (false, _) => None,
        (true, AlsMode::Sampled(j)) => Some(j),
        (true, AlsMode::Exact) => {
            return Err(Error::Param(
                "sampled_als needs a sampled-mode config".into(),
            ));
        }
    };
    let mut tensors = init_factors(format, data.dims(), cfg.seed)?;
    let data_norm = data.frobenius_norm();
    // zero data has no relative error; track the absolute residual instead
    let error_of = |tensors: &BTreeMap<String, DenseTensor>| -> Result<f64> {
        let resid = residual_norm(data, format, tensors)?;
        Ok(if data_norm > 0.0 {
            resid / data_norm
        } else {
            resid
        })
    };
    let mut errors: Vec<f64> = Vec::new();
    let mut error_iters = Vec::new();
    let mut times = Vec::new();
    let mut iterations = 0;
    for iter in 1..=cfg.max_iters {
        let t0 = Instant::now();
        for (pos, m) in format.update_order().iter().enumerate() {
            let updated = match jspec {
                None => exact_subproblem(data, format, &tensors, m, cfg.size_guard)?,
                Some(j) => {
                    let a_cols: usize = format
                        .bond_modes_of(m)
                        .iter()
                        .map(|&mode| format.node_dims(m).expect("known")[mode - 1])
                        .product();
                    let jm = match j {
                        JSpec::Fixed(j) => j,
                        JSpec::Bound { eps, delta, c } => sample_size(a_cols, eps, delta, c)?,
                    };
                    let seed = subproblem_seed(cfg.seed, iter, pos + 1);
                    sampled_subproblem(data, format, &tensors, m, jm, seed)?
                }
            };
            tensors.insert(m.clone(), updated);
        }
        times.push(t0.elapsed().as_secs_f64());
        iterations = iter;
        let evaluate = iter % cfg.error_every == 0 || iter == cfg.max_iters;
        if evaluate {
            let err = error_of(&tensors)?;
            let done = match errors.last() {
                Some(&prev) => {
                    let rel: f64 = (prev - err).abs() / f64::max(prev, 1e-15);
                    rel < cfg.rel_change_tol
                }
                None => false,
            };
            errors.push(err);
            error_iters.push(iter);
            if done {
                break;
            }
        }
    }
    if error_iters.last() != Some(&iterations) {
        errors.push(error_of(&tensors)?);
        error_iters.push(iterations);
    }
    Ok(DecompositionResult {
        tensors,
        errors,
        error_iters,
        times_s: times,
        iterations,
        seed: cfg.seed,
    })
}

/// Exact ALS: sweeps the update order, each update an exact least-squares
/// argmin, so the error sequence never increases.
pub fn als(data: &DenseTensor, format: &TnFormat, cfg: &AlsConfig) -> Result<DecompositionResult> {
    if !matches!(cfg.mode, AlsMode::Exact) {
        return Err(Error::Param("als runs exact mode; use sampled_als".into()));
    }
    run(data, format, cfg, false)
}

/// Leverage-score sampled ALS: every subproblem is sketched independently
/// with a seed derived from (config seed, iteration, subproblem).
pub fn sampled_als(
    data: &DenseTensor,
    format: &TnFormat,
    cfg: &AlsConfig,
) -> Result<DecompositionResult> {
    run(data, format, cfg, true)
}

/// CP decomposition of an order-`N >= 3` tensor at rank `r`.
pub fn cp_decompose(data: &DenseTensor, r: usize, cfg: &AlsConfig) -> Result<DecompositionResult> {
    if data.ndim() < 3 {
        return Err(Error::Param(format!(
            "cp_decompose needs order >= 3, got {}",
            data.ndim()
        )));
    }
    let format = crate::format::cp_format(data.dims(), r)?;
    dispatch(data, &format, cfg)
}

/// Tensor-ring decomposition with one rank per ring edge (edge `j` sits
/// between cores `j` and `j+1`; the last closes the ring).
pub fn tr_decompose(
    data: &DenseTensor,
    ranks: &[usize],
    cfg: &AlsConfig,
) -> Result<DecompositionResult> {
    if data.ndim() < 3 {
        return Err(Error::Param(format!(
            "tr_decompose needs order >= 3, got {}",
            data.ndim()
        )));
    }
    let format = crate::format::tr_format(data.dims(), ranks)?;
    dispatch(data, &format, cfg)
}

fn dispatch(data: &DenseTensor, format: &TnFormat, cfg: &AlsConfig) -> Result<DecompositionResult> {
    match cfg.mode {
        AlsMode::Exact => als(data, format, cfg),
        AlsMode::Sampled(_) => sampled_als(data, format, cfg),
    }
}

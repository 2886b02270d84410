//! Least-squares fitting of the learned transform `G ≈ F H` and its application.
//!
//! Orientation is fixed: spectra are rows and `output = row · H`.
//!
//! The first pass streams the Gram products `FᵀF`, `FᵀG` in fixed-size row
//! blocks. Blocks are summed in fixed groups with a fixed pairwise tree, so the
//! totals do not depend on the thread count. A well-conditioned Gram is solved
//! by Cholesky. Otherwise a second pass runs a streaming QR of `[F | G]`,
//! keeping only the triangular factor `[[R11, R12], [0, R22]]`, and
//! `R11 H = R12` is solved by back substitution with `‖R22‖²` as the residual.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::matmul::matmul;
use faer::linalg::qr::no_pivoting::factor::{qr_in_place, qr_in_place_scratch, recommended_block_size};
use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::solve_upper_triangular_in_place;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FORMAT_VERSION: u32 = 1;
pub const ORIENTATION: &str = "output = input_row * H";

const APPLY_CHUNK: usize = 1024;
const GRAM_GROUP: usize = 8;

/// Row-block access to paired input/target spectra, so corpora can be
/// generated or read on the fly instead of held in memory.
pub trait RowBlocks: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// Writes rows `start..start + len` of inputs and targets, row-major, into
    /// buffers of exactly `len * n_cols()` elements.
    fn fill_block(&self, start: usize, len: usize, inputs: &mut [f64], targets: &mut [f64]);
    fn provenance(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Bare input/target matrices with no provenance.
pub struct PairedRows<'a> {
    pub inputs: &'a Matrix,
    pub targets: &'a Matrix,
}

impl RowBlocks for PairedRows<'_> {
    fn n_rows(&self) -> usize {
        self.inputs.rows()
    }

    fn n_cols(&self) -> usize {
        self.inputs.cols()
    }

    fn fill_block(&self, start: usize, len: usize, inputs: &mut [f64], targets: &mut [f64]) {
        let n = self.n_cols();
        inputs.copy_from_slice(&self.inputs.as_slice()[start * n..(start + len) * n]);
        targets.copy_from_slice(&self.targets.as_slice()[start * n..(start + len) * n]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Normal equations unless the Gram condition estimate exceeds the threshold.
    #[default]
    Auto,
    NormalEquations,
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub solver: Solver,
    pub ridge_lambda: f64,
    /// Adds a bias column; off by default so the fit is a pure linear map.
    pub intercept: bool,
    pub cond_threshold: f64,
    /// Relative singular-value cutoff below which the triangular factor is
    /// treated as rank deficient.
    pub rank_rcond: f64,
    pub block_rows: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            solver: Solver::Auto,
            ridge_lambda: 0.0,
            intercept: false,
            cond_threshold: 1e10,
            rank_rcond: 1e-15,
            block_rows: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub rows: usize,
    pub cols: usize,
    /// `normal_equations`, `orthogonal` or `pseudo_inverse`.
    pub solver: String,
    pub cond_estimate: f64,
    pub rss: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub format_version: u32,
    pub orientation: String,
    pub n_len: usize,
    pub training_rows: usize,
    pub seed: Option<u64>,
    pub direction: Option<String>,
    /// `ols` or `ridge`.
    pub regression: String,
    pub ridge_lambda: f64,
    pub intercept: bool,
    pub solver: String,
    #[serde(deserialize_with = "nan_when_null")]
    pub cond_estimate: f64,
    #[serde(deserialize_with = "nan_when_null")]
    pub rss: f64,
    pub warnings: Vec<String>,
    /// Taken from `SOURCE_DATE_EPOCH` when set so artifacts stay reproducible.
    pub created_unix: Option<u64>,
    pub config_hash: Option<String>,
    pub training: serde_json::Value,
}

impl MatrixMeta {
    pub fn bare(n_len: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            orientation: ORIENTATION.into(),
            n_len,
            training_rows: 0,
            seed: None,
            direction: None,
            regression: "none".into(),
            ridge_lambda: 0.0,
            intercept: false,
            solver: "none".into(),
            cond_estimate: f64::NAN,
            rss: f64::NAN,
            warnings: Vec::new(),
            created_unix: source_date_epoch(),
            config_hash: None,
            training: serde_json::Value::Null,
        }
    }
}

/// JSON has no NaN, so unknown diagnostics are written as null.
fn nan_when_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn source_date_epoch() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

/// The learned N×N transform.
#[derive(Debug, Clone, PartialEq)]
pub struct LedhtMatrix {
    h: Matrix,
    bias: Option<Vec<f64>>,
    pub meta: MatrixMeta,
}

impl LedhtMatrix {
    pub fn new(h: Matrix, bias: Option<Vec<f64>>, meta: MatrixMeta) -> Result<Self> {
        let (r, c) = h.shape();
        if r != c {
            return Err(Error::InvalidInput(format!("transform must be square, got {r}x{c}")));
        }
        if !h.is_finite() {
            return Err(Error::Numerical("transform has non-finite entries".into()));
        }
        if let Some(b) = &bias {
            if b.len() != r || b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("bias must be finite with length n_len".into()));
            }
        }
        if meta.n_len != r {
            return Err(Error::InvalidInput(format!(
                "metadata n_len {} does not match matrix size {r}",
                meta.n_len
            )));
        }
        Ok(Self { h, bias, meta })
    }

    pub fn identity(n: usize) -> Self {
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            h.set(i, i, 1.0);
        }
        Self {
            h,
            bias: None,
            meta: MatrixMeta::bare(n),
        }
    }

    pub fn n_len(&self) -> usize {
        self.h.rows()
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    fn h_ref(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(self.h.as_slice(), self.n_len(), self.n_len())
    }

    /// Transforms a single spectrum.
    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(apply(self, &m)?.into_vec())
    }
}

/// `spectra · H`, computed in fixed row chunks so results are bit-identical
/// for any thread count.
pub fn apply(m: &LedhtMatrix, spectra: &Matrix) -> Result<Matrix> {
    let n = m.n_len();
    if spectra.cols() != n {
        return Err(Error::InvalidInput(format!(
            "spectra have {} columns but the transform expects {n}",
            spectra.cols()
        )));
    }
    let mut out = Matrix::zeros(spectra.rows(), n);
    if n == 0 || spectra.rows() == 0 {
        return Ok(out);
    }
    let h = m.h_ref();
    out.as_mut_slice()
        .par_chunks_mut(APPLY_CHUNK * n)
        .zip(spectra.as_slice().par_chunks(APPLY_CHUNK * n))
        .for_each(|(dst, src)| {
            let rows = src.len() / n;
            let x = MatRef::from_row_major_slice(src, rows, n);
            let d = MatMut::from_row_major_slice_mut(dst, rows, n);
            matmul(d, Accum::Replace, x, h, 1.0, Par::Seq);
            if let Some(b) = &m.bias {
                for row in dst.chunks_mut(n) {
                    for (v, bv) in row.iter_mut().zip(b) {
                        *v += bv;
                    }
                }
            }
        });
    Ok(out)
}

struct Layout {
    n: usize,
    /// Design width: n, plus one with an intercept.
    p: usize,
    intercept: bool,
}

impl Layout {
    fn width(&self) -> usize {
        self.p + self.n
    }

    /// Fills `z` with rows `[f | 1 | g]`.
    fn fill(&self, data: &dyn RowBlocks, start: usize, len: usize, z: &mut Vec<f64>) {
        let n = self.n;
        let mut fi = vec![0.0; len * n];
        let mut gi = vec![0.0; len * n];
        data.fill_block(start, len, &mut fi, &mut gi);
        z.clear();
        z.reserve(len * self.width());
        for r in 0..len {
            z.extend_from_slice(&fi[r * n..(r + 1) * n]);
            if self.intercept {
                z.push(1.0);
            }
            z.extend_from_slice(&gi[r * n..(r + 1) * n]);
        }
    }
}

struct Gram {
    /// `Faᵀ [Fa | G]`, p × (p + n).
    cross: Mat<f64>,
    g_sq: f64,
}

fn gram_block(layout: &Layout, data: &dyn RowBlocks, start: usize, len: usize) -> Gram {
    let mut z = Vec::new();
    layout.fill(data, start, len, &mut z);
    let w = layout.width();
    let zr = MatRef::from_row_major_slice(&z, len, w);
    let fa = zr.subcols(0, layout.p);
    let mut cross = Mat::<f64>::zeros(layout.p, w);
    matmul(cross.as_mut(), Accum::Replace, fa.transpose(), zr, 1.0, Par::Seq);
    let g_sq = (0..len)
        .map(|r| z[r * w + layout.p..(r + 1) * w].iter().map(|v| v * v).sum::<f64>())
        .sum();
    Gram { cross, g_sq }
}

fn tree_sum(mut parts: Vec<Gram>) -> Option<Gram> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.cross += &b.cross;
                a.g_sq += b.g_sq;
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop()
}

fn accumulate_gram(layout: &Layout, data: &dyn RowBlocks, block: usize) -> Gram {
    let rows = data.n_rows();
    let starts: Vec<usize> = (0..rows).step_by(block).collect();
    let mut total = Gram {
        cross: Mat::zeros(layout.p, layout.width()),
        g_sq: 0.0,
    };
    for group in starts.chunks(GRAM_GROUP) {
        let parts: Vec<Gram> = group
            .par_iter()
            .map(|&s| gram_block(layout, data, s, block.min(rows - s)))
            .collect();
        if let Some(g) = tree_sum(parts) {
            total.cross += &g.cross;
            total.g_sq += g.g_sq;
        }
    }
    total
}

/// Upper-triangular factor of the QR decomposition of all rows of `[F | G]`,
/// plus optional ridge rows, zero-padded to a square width × width matrix.
fn streaming_r(layout: &Layout, data: &dyn RowBlocks, block: usize, ridge: f64) -> Mat<f64> {
    let w = layout.width();
    let rows = data.n_rows();
    let mut r = Mat::<f64>::zeros(0, w);
    let mut z = Vec::new();
    let fold = |r: &mut Mat<f64>, blk: MatRef<'_, f64>| {
        let k = r.nrows();
        let total = k + blk.nrows();
        let mut st = Mat::<f64>::zeros(total, w);
        st.as_mut().submatrix_mut(0, 0, k, w).copy_from(r.as_ref());
        st.as_mut().submatrix_mut(k, 0, blk.nrows(), w).copy_from(blk);
        let bs = recommended_block_size::<f64>(total, w);
        let mut coeff = Mat::<f64>::zeros(bs, total.min(w));
        let mut mem = MemBuffer::new(qr_in_place_scratch::<f64>(total, w, bs, Par::Seq, Default::default()));
        qr_in_place(st.as_mut(), coeff.as_mut(), Par::Seq, MemStack::new(&mut mem), Default::default());
        let kk = total.min(w);
        *r = Mat::from_fn(kk, w, |i, j| if j >= i { st[(i, j)] } else { 0.0 });
    };
    for start in (0..rows).step_by(block) {
        let len = block.min(rows - start);
        layout.fill(data, start, len, &mut z);
        fold(&mut r, MatRef::from_row_major_slice(&z, len, w));
    }
    if ridge > 0.0 {
        let s = ridge.sqrt();
        let extra = Mat::from_fn(layout.n, w, |i, j| if i == j { s } else { 0.0 });
        fold(&mut r, extra.as_ref());
    }
    let mut sq = Mat::<f64>::zeros(w, w);
    let k = r.nrows();
    sq.as_mut().submatrix_mut(0, 0, k, w).copy_from(r.as_ref());
    sq
}

fn pseudo_inverse_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>, rcond: f64) -> Result<Mat<f64>> {
    let svd = a.svd().map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let cut = rcond * smax;
    let mut utb = svd.U().transpose() * b;
    for i in 0..s.nrows() {
        let inv = if s[i] > cut { 1.0 / s[i] } else { 0.0 };
        for j in 0..utb.ncols() {
            utb[(i, j)] *= inv;
        }
    }
    Ok(svd.V() * utb)
}

pub fn fit_with(data: &dyn RowBlocks, opts: &FitOptions) -> Result<(LedhtMatrix, FitSummary)> {
    let n = data.n_cols();
    let rows = data.n_rows();
    if n == 0 {
        return Err(Error::InvalidInput("training spectra have zero length".into()));
    }
    if !(opts.ridge_lambda >= 0.0 && opts.ridge_lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ridge lambda must be finite and non-negative, got {}",
            opts.ridge_lambda
        )));
    }
    if opts.block_rows == 0 {
        return Err(Error::InvalidParameter("block_rows must be positive".into()));
    }
    let layout = Layout {
        n,
        p: n + usize::from(opts.intercept),
        intercept: opts.intercept,
    };
    let p = layout.p;
    let mut warnings = Vec::new();
    if rows < p {
        let w = format!("only {rows} training rows for {p} unknowns per output; the fit is underdetermined");
        warn!("{w}");
        warnings.push(w);
    }

    let gram = accumulate_gram(&layout, data, opts.block_rows);
    if !gram.cross.as_ref().is_all_finite() {
        return Err(Error::InvalidInput("training data contains non-finite values".into()));
    }
    let mut a = gram.cross.as_ref().subcols(0, p).to_owned();
    let b = gram.cross.as_ref().subcols(p, n).to_owned();
    let lambda = opts.ridge_lambda;
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    let eig = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigenvalue estimate failed: {e:?}")))?;
    let (emin, emax) = (eig[0], eig[eig.len() - 1]);
    let cond = if emin > 0.0 { emax / emin } else { f64::INFINITY };

    let use_normal = match opts.solver {
        Solver::Auto => cond <= opts.cond_threshold,
        Solver::NormalEquations => true,
        Solver::Orthogonal => false,
    };

    let mut solver = String::new();
    let mut solution: Option<(Mat<f64>, f64)> = None;
    if use_normal {
        match a.llt(Side::Lower) {
            Ok(llt) => {
                let mut h = b.clone();
                llt.solve_in_place(h.as_mut());
                let gram_f = gram.cross.as_ref().subcols(0, p);
                let gh = gram_f * &h;
                let mut rss = gram.g_sq;
                for j in 0..n {
                    for i in 0..p {
                        rss += h[(i, j)] * (gh[(i, j)] - 2.0 * b[(i, j)]);
                    }
                }
                solver = "normal_equations".into();
                solution = Some((h, rss.max(0.0)));
            }
            Err(_) => {
                let w = "Cholesky factorization failed; using the orthogonal path".to_string();
                warn!("{w}");
                warnings.push(w);
            }
        }
    }
    let (h, rss) = match solution {
        Some(s) => s,
        None => {
            let r = streaming_r(&layout, data, opts.block_rows, lambda);
            let r11 = r.as_ref().submatrix(0, 0, p, p);
            let r12 = r.as_ref().submatrix(0, p, p, n);
            let r22 = r.as_ref().submatrix(p, p, n, n);
            let rss = r22.squared_norm_l2();
            let sv = r11
                .singular_values()
                .map_err(|e| Error::Numerical(format!("singular values failed: {e:?}")))?;
            let (smax, smin) = (sv[0], sv[sv.len() - 1]);
            if smin <= opts.rank_rcond * smax {
                let w = format!(
                    "rank-deficient design (singular value ratio {:.3e}); using the pseudo-inverse",
                    smin / smax
                );
                warn!("{w}");
                warnings.push(w);
                solver = "pseudo_inverse".into();
                (pseudo_inverse_solve(r11, r12, opts.rank_rcond)?, rss)
            } else {
                let mut h = r12.to_owned();
                solve_upper_triangular_in_place(r11, h.as_mut(), Par::Seq);
                solver = "orthogonal".into();
                (h, rss)
            }
        }
    };
    if !h.as_ref().is_all_finite() {
        return Err(Error::Numerical("fitted transform has non-finite entries".into()));
    }

    let mut hm = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            hm.set(i, j, h[(i, j)]);
        }
    }
    let bias = opts.intercept.then(|| (0..n).map(|j| h[(n, j)]).collect());
    let training = data.provenance();
    let seed = training.pointer("/generator/config/seed").and_then(|v| v.as_u64());
    let direction = training
        .pointer("/generator/config/direction")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    let summary = FitSummary {
        rows,
        cols: n,
        solver: solver.clone(),
        cond_estimate: cond,
        rss,
        warnings: warnings.clone(),
    };
    let meta = MatrixMeta {
        training_rows: rows,
        seed,
        direction,
        regression: if lambda > 0.0 { "ridge" } else { "ols" }.into(),
        ridge_lambda: lambda,
        intercept: opts.intercept,
        solver,
        cond_estimate: cond,
        rss,
        warnings,
        training,
        ..MatrixMeta::bare(n)
    };
    Ok((LedhtMatrix::new(hm, bias, meta)?, summary))
}

/// Ordinary least squares with default options.
pub fn fit_ols(data: &dyn RowBlocks) -> Result<(LedhtMatrix, FitSummary)> {
    fit_with(data, &FitOptions::default())
}

/// Ridge regression `argmin ‖G - F H‖² + λ‖H‖²`; λ = 0 is plain OLS.
pub fn fit_ridge(data: &dyn RowBlocks, lambda: f64) -> Result<(LedhtMatrix, FitSummary)> {
    fit_with(
        data,
        &FitOptions {
            ridge_lambda: lambda,
            ..FitOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn max_abs(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn scaled(m: &Matrix, s: f64) -> Matrix {
        Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|v| v * s).collect()).unwrap()
    }

    #[test]
    fn identity_target_recovers_identity() {
        let f = random(300, 20, 1);
        let data = PairedRows { inputs: &f, targets: &f };
        for solver in [Solver::NormalEquations, Solver::Orthogonal] {
            let opts = FitOptions { solver, block_rows: 64, ..FitOptions::default() };
            let (m, s) = fit_with(&data, &opts).unwrap();
            assert!(max_abs(m.h(), LedhtMatrix::identity(20).h()) < 1e-8);
            assert!(s.rss < 1e-16);
        }
    }

    #[test]
    fn scale_invariance() {
        let f = random(200, 15, 2);
        let g = random(200, 15, 3);
        let (a, _) = fit_ols(&PairedRows { inputs: &f, targets: &g }).unwrap();
        let (f7, g7) = (scaled(&f, 7.0), scaled(&g, 7.0));
        let (b, _) = fit_ols(&PairedRows { inputs: &f7, targets: &g7 }).unwrap();
        assert!(max_abs(a.h(), b.h()) < 1e-10);
    }

    #[test]
    fn normal_and_orthogonal_paths_agree() {
        let f = random(2000, 101, 4);
        let g = random(2000, 101, 5);
        let data = PairedRows { inputs: &f, targets: &g };
        let fit = |solver| fit_with(&data, &FitOptions { solver, block_rows: 300, ..FitOptions::default() }).unwrap();
        let (a, sa) = fit(Solver::NormalEquations);
        let (b, sb) = fit(Solver::Orthogonal);
        assert_eq!(sa.solver, "normal_equations");
        assert_eq!(sb.solver, "orthogonal");
        assert!(max_abs(a.h(), b.h()) < 1e-6);
        assert!((sa.rss - sb.rss).abs() < 1e-8 * sb.rss);
    }

    #[test]
    fn block_size_and_threads_do_not_change_result() {
        let f = random(1000, 30, 6);
        let g = random(1000, 30, 7);
        let data = PairedRows { inputs: &f, targets: &g };
        let opts = FitOptions { block_rows: 128, ..FitOptions::default() };
        let (a, _) = fit_with(&data, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let (b, _) = pool.install(|| fit_with(&data, &opts).unwrap());
        assert_eq!(a.h(), b.h());
    }

    #[test]
    fn rank_deficiency_falls_back_to_pseudo_inverse() {
        let mut f = random(100, 8, 8);
        for r in 0..100 {
            let v = f.get(r, 0);
            f.set(r, 1, v);
        }
        let data = PairedRows { inputs: &f, targets: &f };
        let (m, s) = fit_with(&data, &FitOptions { solver: Solver::Orthogonal, rank_rcond: 1e-12, ..FitOptions::default() }).unwrap();
        assert_eq!(s.solver, "pseudo_inverse");
        assert!(!s.warnings.is_empty());
        let out = apply(&m, &f).unwrap();
        assert!(max_abs(&out, &f) < 1e-10);
    }

    #[test]
    fn ridge_limits() {
        let f = random(300, 12, 9);
        let g = random(300, 12, 10);
        let data = PairedRows { inputs: &f, targets: &g };
        let (ols, _) = fit_ols(&data).unwrap();
        let (r0, _) = fit_ridge(&data, 0.0).unwrap();
        assert!(max_abs(ols.h(), r0.h()) < 1e-12);
        let norm = |m: &LedhtMatrix| m.h().as_slice().iter().map(|v| v * v).sum::<f64>();
        let mut prev = norm(&ols);
        for lambda in [1.0, 10.0, 100.0, 1e4, 1e8] {
            let (r, _) = fit_ridge(&data, lambda).unwrap();
            let cur = norm(&r);
            assert!(cur < prev);
            prev = cur;
        }
        assert!(prev < 1e-10);
        let (ro, _) = fit_with(&data, &FitOptions { ridge_lambda: 10.0, solver: Solver::Orthogonal, ..FitOptions::default() }).unwrap();
        let (rn, _) = fit_ridge(&data, 10.0).unwrap();
        assert!(max_abs(ro.h(), rn.h()) < 1e-10);
    }

    #[test]
    fn intercept_recovers_bias() {
        let f = random(400, 10, 11);
        let mut g = f.clone();
        for r in 0..400 {
            for v in g.row_mut(r) {
                *v += 3.0;
            }
        }
        let (m, _) = fit_with(&PairedRows { inputs: &f, targets: &g }, &FitOptions { intercept: true, ..FitOptions::default() }).unwrap();
        assert!(m.bias().unwrap().iter().all(|b| (b - 3.0).abs() < 1e-9));
        assert!(max_abs(&apply(&m, &f).unwrap(), &g) < 1e-9);
    }

    #[test]
    fn apply_is_linear_and_checks_shape() {
        let m = LedhtMatrix::new(random(9, 9, 12), None, MatrixMeta::bare(9)).unwrap();
        let f1 = random(3000, 9, 13);
        let f2 = random(3000, 9, 14);
        let combo = Matrix::from_vec(3000, 9, f1.as_slice().iter().zip(f2.as_slice()).map(|(a, b)| 2.0 * a - 0.5 * b).collect()).unwrap();
        let (y1, y2, y) = (apply(&m, &f1).unwrap(), apply(&m, &f2).unwrap(), apply(&m, &combo).unwrap());
        for k in 0..y.as_slice().len() {
            let want = 2.0 * y1.as_slice()[k] - 0.5 * y2.as_slice()[k];
            assert!((y.as_slice()[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
        assert!(matches!(apply(&m, &random(2, 8, 0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rejects_non_finite_training_data() {
        let mut f = random(50, 4, 15);
        f.set(3, 2, f64::NAN);
        assert!(fit_ols(&PairedRows { inputs: &f, targets: &f }).is_err());
    }
}

//! Dense matrices, thin SVD, factor pairs and the sparse kernels the solvers
//! are built on.

use faer::{Accum, MatMut, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observed::ObservedMatrix;
use crate::parallel::Exec;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Checked constructor: positive shape, matching length, finite entries.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::shape(format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite matrix entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows"));
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub(crate) fn view(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn view_mut(&mut self) -> MatMut<'_, f64> {
        MatMut::from_row_major_slice_mut(&mut self.data, self.rows, self.cols)
    }

    fn from_faer(m: MatRef<'_, f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Dense product `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.matmul_with(rhs, Exec::default())
    }

    pub fn matmul_with(&self, rhs: &Self, exec: Exec) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        faer::linalg::matmul::matmul(
            out.view_mut(),
            Accum::Replace,
            self.view(),
            rhs.view(),
            1.0,
            exec.faer_par(),
        );
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_transpose(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(Error::shape(format!(
                "inner dimensions differ: {:?} · {:?}ᵀ",
                self.shape(),
                rhs.shape()
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        faer::linalg::matmul::matmul(
            out.view_mut(),
            Accum::Replace,
            self.view(),
            rhs.view().transpose(),
            1.0,
            Exec::default().faer_par(),
        );
        Ok(out)
    }

    /// Gram matrix `selfᵀ · self` (cols × cols), reduced in fixed row blocks.
    pub fn gram(&self, exec: Exec) -> Self {
        let k = self.cols;
        let data = exec.sum_vec(self.rows, k * k, |i, acc| {
            let r = self.row(i);
            for a in 0..k {
                let ra = r[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..k {
                    acc[a * k + b] += ra * r[b];
                }
            }
        });
        Self {
            rows: k,
            cols: k,
            data,
        }
    }

    /// `self · small` where `small` is `cols × cols`; row-parallel.
    pub fn mul_small(&self, small: &Self, exec: Exec) -> Result<Self> {
        if small.rows != self.cols || small.cols != self.cols {
            return Err(Error::shape(format!(
                "expected {0}x{0} right factor, got {1:?}",
                self.cols,
                small.shape()
            )));
        }
        let k = self.cols;
        let mut out = Self::zeros(self.rows, k);
        exec.for_each_row(&mut out.data, k, |i, dst| {
            let r = self.row(i);
            for (a, &ra) in r.iter().enumerate() {
                if ra == 0.0 {
                    continue;
                }
                let srow = small.row(a);
                for (d, s) in dst.iter_mut().zip(srow) {
                    *d += ra * s;
                }
            }
        });
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// Largest absolute asymmetry `|A_ij − A_ji|`; errors when not square.
    pub fn max_asymmetry(&self) -> Result<f64> {
        if self.rows != self.cols {
            return Err(Error::shape(format!("{:?} is not square", self.shape())));
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        Ok(worst)
    }
}

/// Thin SVD `U · Diag(sigma) · Vᵀ` with `sigma` non-increasing and
/// non-negative.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl SpectralDecomposition {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U · Diag(values) · Vᵀ`, skipping zero entries of `values`.
    pub fn reassemble(&self, values: &[f64], exec: Exec) -> Result<DenseMatrix> {
        if values.len() != self.sigma.len() {
            return Err(Error::shape(format!(
                "{} singular values for rank-{} factors",
                values.len(),
                self.sigma.len()
            )));
        }
        let m = self.u.rows();
        let n = self.v.rows();
        let active: Vec<usize> = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
        let mut out = DenseMatrix::zeros(m, n);
        if active.is_empty() {
            return Ok(out);
        }
        let r = active.len();
        let us = DenseMatrix::from_fn(m, r, |i, c| self.u.get(i, active[c]) * values[active[c]]);
        let vs = DenseMatrix::from_fn(n, r, |i, c| self.v.get(i, active[c]));
        faer::linalg::matmul::matmul(
            out.view_mut(),
            Accum::Replace,
            us.view(),
            vs.view().transpose(),
            1.0,
            exec.faer_par(),
        );
        Ok(out)
    }

    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        self.reassemble(&self.sigma, Exec::default())
    }
}

/// Thin SVD with `r = min(rows, cols)`.
pub fn thin_svd(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    thin_svd_capped(m, None)
}

/// Thin SVD, optionally keeping only the leading `rank_cap` triplets.
pub fn thin_svd_capped(m: &DenseMatrix, rank_cap: Option<usize>) -> Result<SpectralDecomposition> {
    thin_svd_capped_with(m, rank_cap, Exec::default())
}

/// Like [`thin_svd_capped`]. A cap well below `min(rows, cols)` computes only
/// the leading triplets with [`leading_svd`].
pub fn thin_svd_capped_with(
    m: &DenseMatrix,
    rank_cap: Option<usize>,
    exec: Exec,
) -> Result<SpectralDecomposition> {
    thin_svd_capped_warm(m, rank_cap, &mut WarmStart::default(), exec)
}

/// [`thin_svd_capped_with`] seeded from, and updating, `warm`.
pub fn thin_svd_capped_warm(
    m: &DenseMatrix,
    rank_cap: Option<usize>,
    warm: &mut WarmStart,
    exec: Exec,
) -> Result<SpectralDecomposition> {
    match rank_cap {
        Some(r) if partial_pays(r, m) => subspace_svd(m, r, None, warm, exec),
        _ => full_svd_truncated(m, rank_cap),
    }
}

/// Extra columns carried by the subspace iteration beyond the target rank.
pub const SUBSPACE_OVERSAMPLE: usize = 10;
/// Sweeps of subspace iteration before falling back to a full SVD.
pub const SUBSPACE_MAX_SWEEPS: usize = 100;
/// Residual tolerance `‖M vᵢ − σᵢ uᵢ‖ ≤ tol · σ₁` for every kept triplet.
pub const SUBSPACE_TOL: f64 = 1e-11;
/// Looser residual tolerance used by [`svd_above`]. The triplets just above
/// the threshold sit in a cluster and converge slowly, while their shrunk
/// values are tiny.
pub const SUBSPACE_TOL_ABOVE: f64 = 1e-8;

fn partial_pays(r: usize, m: &DenseMatrix) -> bool {
    4 * (r + SUBSPACE_OVERSAMPLE) <= m.rows().min(m.cols())
}

/// Right singular subspace carried between SVDs of slowly changing matrices.
///
/// Iterative solvers take one SVD per step of matrices that barely move, so
/// starting the subspace iteration from the previous basis saves most sweeps.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    basis: Option<faer::Mat<f64>>,
    above: usize,
}

impl WarmStart {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Leading `r` singular triplets by randomized subspace iteration.
///
/// The starting block is Gaussian from a fixed seed, so results are
/// deterministic. When the residual test is not met within
/// [`SUBSPACE_MAX_SWEEPS`] sweeps the full SVD is used instead.
pub fn leading_svd(m: &DenseMatrix, r: usize, exec: Exec) -> Result<SpectralDecomposition> {
    subspace_svd(m, r, None, &mut WarmStart::default(), exec)
}

/// Every singular triplet with `σ > threshold`, possibly with a few more.
///
/// Grows the target rank of the subspace iteration geometrically until the
/// smallest returned value is at or below `threshold`; switches to the full
/// SVD once the target gets large. Only triplets above the threshold have to
/// pass the residual test.
pub fn svd_above(m: &DenseMatrix, threshold: f64, exec: Exec) -> Result<SpectralDecomposition> {
    svd_above_warm(m, threshold, &mut WarmStart::default(), exec)
}

/// [`svd_above`] seeded from, and updating, `warm`.
pub fn svd_above_warm(
    m: &DenseMatrix,
    threshold: f64,
    warm: &mut WarmStart,
    exec: Exec,
) -> Result<SpectralDecomposition> {
    let full = m.rows().min(m.cols());
    let mut r = warm.above + 8;
    // without a basis to start from, one full decomposition is cheaper than
    // probing; past a few dozen triplets the same holds for the sweeps
    while warm.basis.is_some() && 8 * (r + SUBSPACE_OVERSAMPLE.max(r / 2)) <= full {
        let d = subspace_svd(m, r, Some(threshold), warm, exec)?;
        if d.sigma[r - 1] <= threshold {
            warm.above = d.sigma.iter().filter(|&&s| s > threshold).count();
            return Ok(d);
        }
        r *= 2;
    }
    let d = match gram_svd_above(m, threshold, exec)? {
        Some(d) => d,
        None => full_svd_truncated(m, None)?,
    };
    warm.above = d.sigma.iter().filter(|&&s| s > threshold).count();
    let keep = (warm.above + SUBSPACE_OVERSAMPLE).min(full);
    // a short basis is padded with Gaussian columns on the next call
    warm.basis = Some(d.v.view().subcols(0, keep.min(d.rank())).to_owned());
    Ok(d)
}

/// Below `GRAM_GUARD · σ₁` the squared spectrum of the Gram matrix loses too
/// many digits, so [`gram_svd_above`] declines.
const GRAM_GUARD: f64 = 1e-4;

/// Triplets above `threshold` (at least one) from the eigendecomposition of
/// the smaller Gram matrix, or `None` when the threshold is too small
/// relative to `σ₁` for that to be accurate.
fn gram_svd_above(m: &DenseMatrix, threshold: f64, exec: Exec) -> Result<Option<SpectralDecomposition>> {
    if !m.is_finite() {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let par = exec.faer_par();
    let a = m.view();
    let wide = m.cols() > m.rows();
    // eigenvectors of the Gram matrix are the singular vectors on the short side
    let side = if wide { a.transpose() } else { a };
    let n = side.ncols();
    let mut gram = faer::Mat::<f64>::zeros(n, n);
    faer::linalg::matmul::matmul(gram.as_mut(), Accum::Replace, side.transpose(), side, 1.0, par);
    let eig = gram
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition did not converge: {e:?}")))?;
    let ev = eig.S().column_vector();
    let top = ev[n - 1].max(0.0).sqrt();
    if !(top.is_finite() && threshold >= GRAM_GUARD * top) {
        return Ok(None);
    }
    let mut sigma = Vec::new();
    for i in (0..n).rev() {
        let s = ev[i].max(0.0).sqrt();
        if s <= threshold && !sigma.is_empty() {
            break;
        }
        sigma.push(s);
    }
    let r = sigma.len();
    if sigma[r - 1] <= 0.0 {
        return Ok(None);
    }
    let short = faer::Mat::<f64>::from_fn(n, r, |i, j| eig.U()[(i, n - 1 - j)]);
    let mut long = faer::Mat::<f64>::zeros(side.nrows(), r);
    faer::linalg::matmul::matmul(long.as_mut(), Accum::Replace, side, short.as_ref(), 1.0, par);
    for (j, s) in sigma.iter().enumerate() {
        for i in 0..long.nrows() {
            long[(i, j)] /= s;
        }
    }
    let (u, v) = if wide { (short, long) } else { (long, short) };
    Ok(Some(SpectralDecomposition {
        u: DenseMatrix::from_faer(u.as_ref()),
        sigma,
        v: DenseMatrix::from_faer(v.as_ref()),
    }))
}

fn subspace_svd(
    m: &DenseMatrix,
    r: usize,
    threshold: Option<f64>,
    warm: &mut WarmStart,
    exec: Exec,
) -> Result<SpectralDecomposition> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    if !m.is_finite() {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let (rows, cols) = m.shape();
    let full = rows.min(cols);
    let r = r.min(full);
    let extra = if threshold.is_some() { SUBSPACE_OVERSAMPLE.max(r / 2) } else { SUBSPACE_OVERSAMPLE };
    let l = (r + extra).min(full);
    let tol = if threshold.is_some() { SUBSPACE_TOL_ABOVE } else { SUBSPACE_TOL };
    if r == 0 {
        return full_svd_truncated(m, Some(0));
    }
    let par = exec.faer_par();
    let a = m.view();
    let mul = |lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>| {
        let mut out = faer::Mat::<f64>::zeros(lhs.nrows(), rhs.ncols());
        faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, lhs, rhs, 1.0, par);
        out
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x05ee_d5bd);
    let prev = warm.basis.take().filter(|b| b.nrows() == cols);
    let omega = faer::Mat::<f64>::from_fn(cols, l, |i, j| match &prev {
        Some(b) if j < b.ncols() => b[(i, j)],
        _ => StandardNormal.sample(&mut rng),
    });
    let mut q = mul(a, omega.as_ref()).qr().compute_thin_Q();

    for _ in 0..SUBSPACE_MAX_SWEEPS {
        // Mᵀ Q = Qt R, so M ≈ Q Rᵀ Qtᵀ and the Ritz triplets come from the
        // small l × l matrix Rᵀ = Ur S Vrᵀ: M ≈ (Q Ur) S (Qt Vr)ᵀ
        let qr = mul(a.transpose(), q.as_ref()).qr();
        let qt = qr.compute_thin_Q();
        let small = qr
            .thin_R()
            .transpose()
            .svd()
            .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
        let w = mul(a, qt.as_ref());
        let s = small.S().column_vector();
        let sigma: Vec<f64> = (0..r).map(|i| s[i].max(0.0)).collect();
        let u = mul(q.as_ref(), small.U().subcols(0, r));
        let v_all = mul(qt.as_ref(), small.V());
        let mv = mul(w.as_ref(), small.V().subcols(0, r));
        let top = sigma[0];
        let converged = (0..r)
            .filter(|&i| threshold.is_none_or(|t| sigma[i] > t))
            .all(|i| {
                let res: f64 = (0..rows)
                    .map(|k| (mv[(k, i)] - sigma[i] * u[(k, i)]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                res <= tol * top.max(f64::MIN_POSITIVE)
            });
        if converged {
            if sigma.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("SVD produced non-finite values".into()));
            }
            let v = DenseMatrix::from_faer(v_all.subcols(0, r));
            warm.basis = Some(v_all);
            return Ok(SpectralDecomposition { u: DenseMatrix::from_faer(u.as_ref()), sigma, v });
        }
        warm.basis = Some(v_all);
        q = w.qr().compute_thin_Q();
    }
    full_svd_truncated(m, Some(r))
}

fn full_svd_truncated(m: &DenseMatrix, rank_cap: Option<usize>) -> Result<SpectralDecomposition> {
    if !m.is_finite() {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let svd = m
        .view()
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let full = m.rows().min(m.cols());
    let r = rank_cap.map_or(full, |c| c.min(full));
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..r).map(|i| s[i].max(0.0)).collect();
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD produced non-finite values".into()));
    }
    let u = DenseMatrix::from_faer(svd.U().subcols(0, r));
    let v = DenseMatrix::from_faer(svd.V().subcols(0, r));
    Ok(SpectralDecomposition { u, sigma, v })
}

/// Singular values only.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::Numerical("SVD input has non-finite entries".into()));
    }
    let mut s = m
        .view()
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    for v in &mut s {
        *v = v.max(0.0);
    }
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Low-rank matrix held as `W · Hᵀ` with `W: m×k`, `H: n×k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
}

impl FactorPair {
    pub fn new(w: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if w.cols() != h.cols() || w.cols() == 0 {
            return Err(Error::shape(format!(
                "factor inner dimensions {} and {}",
                w.cols(),
                h.cols()
            )));
        }
        Ok(Self { w, h })
    }

    pub fn rank_k(&self) -> usize {
        self.w.cols()
    }

    /// Singular values of `W · Hᵀ` from the thin QR factors of `W` and `H`;
    /// costs `O((m + n)k²)` and never forms the `m × n` product.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        if !(self.w.is_finite() && self.h.is_finite()) {
            return Err(Error::Numerical("factor has non-finite entries".into()));
        }
        let rw = DenseMatrix::from_faer(self.w.view().qr().thin_R());
        let rh = DenseMatrix::from_faer(self.h.view().qr().thin_R());
        singular_values(&rw.matmul_transpose(&rh)?)
    }

    pub fn materialize(&self) -> DenseMatrix {
        self.w
            .matmul_transpose(&self.h)
            .expect("factor pair inner dimensions agree")
    }
}

/// Anything that can report entries of an `m × n` matrix.
pub trait EntrySource: Sync {
    fn shape(&self) -> (usize, usize);
    fn entry(&self, i: usize, j: usize) -> f64;
}

impl EntrySource for DenseMatrix {
    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

impl EntrySource for FactorPair {
    fn shape(&self) -> (usize, usize) {
        (self.w.rows(), self.h.rows())
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        dot(self.w.row(i), self.h.row(j))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_shape(x: &impl EntrySource, obs: &ObservedMatrix) -> Result<()> {
    if x.shape() != obs.shape() {
        return Err(Error::shape(format!(
            "matrix {:?} vs observations {:?}",
            x.shape(),
            obs.shape()
        )));
    }
    Ok(())
}

/// `P_Ω(X − O)`: residuals on the observed index set.
pub fn sparse_residual(x: &impl EntrySource, obs: &ObservedMatrix) -> Result<ObservedMatrix> {
    sparse_residual_with(x, obs, Exec::default())
}

pub fn sparse_residual_with(
    x: &impl EntrySource,
    obs: &ObservedMatrix,
    exec: Exec,
) -> Result<ObservedMatrix> {
    check_shape(x, obs)?;
    let rows = obs.row_indices();
    let cols = obs.col_indices();
    let vals = obs.values();
    let mut out = vec![0.0; obs.nnz()];
    exec.for_each_indexed(&mut out, |e, r| {
        *r = x.entry(rows[e], cols[e]) - vals[e];
    });
    obs.with_values(out)
}

/// `S · B` for sparse `S` (m×n) and dense `B` (n×k).
pub fn sparse_mul_dense(s: &ObservedMatrix, b: &DenseMatrix, exec: Exec) -> Result<DenseMatrix> {
    if s.cols() != b.rows() {
        return Err(Error::shape(format!(
            "sparse {:?} times dense {:?}",
            s.shape(),
            b.shape()
        )));
    }
    let k = b.cols();
    let cols = s.col_indices();
    let vals = s.values();
    let mut out = DenseMatrix::zeros(s.rows(), k);
    exec.for_each_row(out.as_mut_slice(), k, |i, dst| {
        for e in s.row_range(i) {
            let v = vals[e];
            for (d, bv) in dst.iter_mut().zip(b.row(cols[e])) {
                *d += v * bv;
            }
        }
    });
    Ok(out)
}

/// `Sᵀ · B` for sparse `S` (m×n) and dense `B` (m×k).
pub fn sparse_transpose_mul_dense(
    s: &ObservedMatrix,
    b: &DenseMatrix,
    exec: Exec,
) -> Result<DenseMatrix> {
    if s.rows() != b.rows() {
        return Err(Error::shape(format!(
            "sparse {:?}ᵀ times dense {:?}",
            s.shape(),
            b.shape()
        )));
    }
    let k = b.cols();
    let rows = s.row_indices();
    let vals = s.values();
    let mut out = DenseMatrix::zeros(s.cols(), k);
    exec.for_each_row(out.as_mut_slice(), k, |j, dst| {
        for &e in s.col_entries(j) {
            let v = vals[e];
            for (d, bv) in dst.iter_mut().zip(b.row(rows[e])) {
                *d += v * bv;
            }
        }
    });
    Ok(out)
}

/// `‖W · Hᵀ‖_F` from the k×k Gram matrices: `√Tr((HᵀH)(WᵀW))`.
pub fn factored_frobenius_norm(w: &DenseMatrix, h: &DenseMatrix) -> Result<f64> {
    if w.cols() != h.cols() {
        return Err(Error::shape(format!(
            "inner dimensions {} and {}",
            w.cols(),
            h.cols()
        )));
    }
    let exec = Exec::default();
    Ok(frobenius_from_grams(&w.gram(exec), &h.gram(exec)))
}

/// `√Tr(A · B)` for symmetric PSD Gram matrices, clamped at zero.
pub(crate) fn frobenius_from_grams(gw: &DenseMatrix, gh: &DenseMatrix) -> f64 {
    // Tr(A·B) = Σ_ab A_ab B_ba = Σ_ab A_ab B_ab for symmetric B
    let t: f64 = gw
        .as_slice()
        .iter()
        .zip(gh.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    t.max(0.0).sqrt()
}

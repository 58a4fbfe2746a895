//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices here are small (the state dimension of a relaxation system), so
//! everything is built on `nalgebra` dynamic matrices over `Complex64`.
//! Eigenvectors come from the complex Schur form, spectral projectors from
//! the matrix sign iteration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;
pub type RVec = DVector<f64>;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn cvec_from_real(v: &RVec) -> CVec {
    v.map(|x| Complex64::new(x, 0.0))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).into_iter().fold(0.0, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if !is_finite(m) {
        return vec![f64::NAN; m.nrows().min(m.ncols())];
    }
    let svd = m.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// 2-norm condition number; `f64::INFINITY` for singular input.
pub fn condition_number(m: &CMat) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 && lo.is_finite() => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

/// Ascending eigenvalues of a Hermitian matrix (the input is symmetrized first).
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let lu = m.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular matrix in inverse".into()))?;
    if !is_finite(&inv) {
        return Err(Error::Numeric("non-finite inverse".into()));
    }
    Ok(inv)
}

pub fn solve(m: &CMat, b: &CMat) -> Result<CMat> {
    let lu = m.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Numeric("singular matrix in solve".into()))?;
    if !is_finite(&x) {
        return Err(Error::Numeric("non-finite solution".into()));
    }
    Ok(x)
}

/// Eigenvalues with unit-norm eigenvectors (columns), computed from the
/// complex Schur form. Defective matrices produce nearly parallel columns,
/// which shows up as a huge condition number of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
}

impl Eigen {
    pub fn vector_condition(&self) -> f64 {
        condition_number(&self.vectors)
    }

    /// Smallest pairwise distance between eigenvalues (`inf` for n < 2).
    pub fn min_separation(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.values.len() {
            for j in i + 1..self.values.len() {
                gap = gap.min((self.values[i] - self.values[j]).norm());
            }
        }
        gap
    }
}

pub fn eigen(m: &CMat) -> Result<Eigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Argument("eigen: matrix not square".into()));
    }
    if !is_finite(m) {
        return Err(Error::Numeric("eigen: non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        });
    }
    if m.iter().all(|z| *z == c64(0.0, 0.0)) {
        return Ok(Eigen {
            values: vec![c64(0.0, 0.0); n],
            vectors: identity(n),
        });
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numeric("eigen: Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    if !is_finite(&q) || !is_finite(&t) {
        return Err(Error::Numeric("eigen: non-finite Schur factors".into()));
    }
    let values: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let tnorm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * tnorm).max(1e-300);
    let mut x = CMat::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = c64(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = c64(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let mut d = t[(i, i)] - t[(k, k)];
            if d.norm() < smin {
                d = c64(smin, 0.0);
            }
            x[(i, k)] = -acc / d;
        }
    }
    let mut vectors = &q * x;
    for k in 0..n {
        let nrm = vectors.column(k).norm();
        if nrm > 0.0 && nrm.is_finite() {
            vectors.column_mut(k).unscale_mut(nrm);
        }
    }
    Ok(Eigen { values, vectors })
}

pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    Ok(eigen(m)?.values)
}

/// Matrix sign function by scaled Newton iteration. Requires no eigenvalue
/// on the imaginary axis.
pub fn matrix_sign(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let mut s = m.clone();
    for _ in 0..200 {
        let inv = inverse(&s)?;
        // determinant scaling accelerates the first iterations
        let det = s.clone().lu().determinant();
        let mu = if det.norm() > 0.0 && det.norm().is_finite() {
            det.norm().powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&s * c64(mu, 0.0) + inv * c64(1.0 / mu, 0.0)) * c64(0.5, 0.0);
        let diff = (&next - &s).norm();
        let scale = next.norm().max(1.0);
        s = next;
        if diff <= 1e-14 * scale {
            break;
        }
    }
    let resid = (&s * &s - identity(n)).norm();
    if !is_finite(&s) || resid > 1e-8 * s.norm().max(1.0).powi(2) {
        return Err(Error::Numeric(format!(
            "matrix sign iteration failed (residual {resid:.3e})"
        )));
    }
    Ok(s)
}

/// Orthonormal basis (columns) of the range of `p`, keeping `rank` columns.
pub fn range_basis(p: &CMat, rank: usize) -> CMat {
    let n = p.nrows();
    if rank == 0 {
        return CMat::zeros(n, 0);
    }
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = CMat::zeros(n, rank);
    for (k, &i) in idx.iter().take(rank).enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Thin QR orthonormalization of the columns of `m`.
pub fn orthonormalize(m: &CMat) -> CMat {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().qr();
    let q = qr.q();
    q.columns(0, m.ncols()).into_owned()
}

/// Invariant-subspace split of a constant matrix by the sign of Re μ.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub stable: CMat,
    pub unstable: CMat,
    pub stable_projector: CMat,
    pub eigenvalues: Vec<Complex64>,
    /// min |Re μ| over the spectrum.
    pub gap: f64,
    /// min |Re μ| over the stable eigenvalues (`inf` if none).
    pub stable_gap: f64,
    /// min Re μ over the unstable eigenvalues (`inf` if none).
    pub unstable_gap: f64,
}

impl SpectralSplit {
    pub fn ranks(&self) -> (usize, usize) {
        (self.stable.ncols(), self.unstable.ncols())
    }
}

pub fn spectral_split(m: &CMat, gap_tol: f64) -> Result<SpectralSplit> {
    let n = m.nrows();
    let values = eigenvalues(m)?;
    let mut gap = f64::INFINITY;
    let mut stable_gap = f64::INFINITY;
    let mut unstable_gap = f64::INFINITY;
    let mut n_stable = 0;
    for z in &values {
        gap = gap.min(z.re.abs());
        if z.re < 0.0 {
            n_stable += 1;
            stable_gap = stable_gap.min(-z.re);
        } else {
            unstable_gap = unstable_gap.min(z.re);
        }
    }
    if gap < gap_tol {
        return Err(Error::CenterSpectrum { min_re: gap });
    }
    let sign = matrix_sign(m)?;
    let p_stable = (identity(n) - &sign) * c64(0.5, 0.0);
    let p_unstable = (identity(n) + &sign) * c64(0.5, 0.0);
    Ok(SpectralSplit {
        stable: range_basis(&p_stable, n_stable),
        unstable: range_basis(&p_unstable, n - n_stable),
        stable_projector: p_stable,
        eigenvalues: values,
        gap,
        stable_gap,
        unstable_gap,
    })
}

/// Solves `aᴴ X + X a = c` by Kronecker vectorization (small n only).
pub fn lyapunov_solve(a: &CMat, c: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let ah = a.adjoint();
    let mut k = CMat::zeros(n * n, n * n);
    // vec(X) column-major: index (i, j) -> i + n j
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for p in 0..n {
                // (aᴴ X)_{ij} = Σ_p aᴴ_{ip} X_{pj}
                k[(row, p + n * j)] += ah[(i, p)];
                // (X a)_{ij} = Σ_p X_{ip} a_{pj}
                k[(row, i + n * p)] += a[(p, j)];
            }
        }
    }
    let rhs = CMat::from_iterator(n * n, 1, c.iter().copied());
    let x = solve(&k, &rhs)?;
    Ok(CMat::from_iterator(n, n, x.iter().copied()))
}

/// Matrix exponential (Padé scaling and squaring via nalgebra).
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

/// Block-diagonal assembly of two square blocks.
pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}

/// Horizontal concatenation `[a b]`.
pub fn hstack(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows().max(b.nrows());
    let mut out = CMat::zeros(n, a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

//! Dense complex kernels on top of nalgebra: LU inversion, Hermitian
//! eigen-decomposition and a few matrix functionals.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::{CMat, CVec, C64};

/// Inverse by LU with partial pivoting.
pub fn inverse(m: &CMat) -> Result<CMat> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let lu = m.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} LU factorization", m.nrows(), m.ncols())))?;
    if inv.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Singular(format!(
            "{}x{} inverse is not finite",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(inv)
}

/// Largest entrywise `|M − Mᴴ|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Hermitian part `(M + Mᴴ)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigen-decomposition `M = V diag(λ) Vᴴ` of a Hermitian matrix, eigenvalues
/// ascending with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |i, k| eig.eigenvectors[(i, order[k])]);
    (values, vectors)
}

/// Principal square root of a Hermitian non-negative matrix. Eigenvalues
/// below zero are clipped to zero.
pub fn hermitian_sqrt(m: &CMat) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let mut scaled = vectors.clone();
    for (k, &lam) in values.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        scaled.column_mut(k).scale_mut(s);
    }
    &scaled * vectors.adjoint()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() || m.iter().all(|c| *c == C64::new(0.0, 0.0)) {
        return 0.0;
    }
    if m.nrows() <= m.ncols() {
        let g = m * m.adjoint();
        hermitian_eigenvalues(&g).last().copied().unwrap_or(0.0).max(0.0).sqrt()
    } else {
        let g = m.adjoint() * m;
        hermitian_eigenvalues(&g).last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }
}

/// `uᴴ M v`.
pub fn sesquilinear(m: &CMat, u: &CVec, v: &CVec) -> C64 {
    u.dotc(&(m * v))
}

/// Haar-distributed unitary matrix from the QR factorization of a complex
/// Gaussian matrix, with the phases of `R`'s diagonal folded into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(p: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(p, p, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..p {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        { let mut col = q.column_mut(k); col *= phase; }
    }
    q
}

//! One evaluation of the fixed-point map `(δ, δ̃) ↦ f(δ, δ̃)`.
//!
//! With `F⁻¹ = −z(I + n⁻¹ Σ_j δ̃_j Ω_j)` and `F̃_j = −1/(z(1 + δ_j))`:
//!
//! ```text
//! Θ⁻¹  = F⁻¹ − z A F̃ Aᴴ
//! δ_i  = Tr(Ω_i Θ) / n
//! δ̃_j  = [Θ̃]_jj = F̃_j + z F̃_j² a_jᴴ Θ a_j
//! ```
//!
//! The last line is the Woodbury form of the diagonal of
//! `Θ̃ = (F̃⁻¹ − z Aᴴ F A)⁻¹`, so a sweep needs one `p×p` inversion and no
//! `n×n` one. When every `Ω_j` is diagonal and `A` has at most one nonzero
//! per row and per column, `Θ` itself is diagonal and a sweep is `O(np)`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Correlation, ModelSpec};
use crate::{CMat, CVec, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// The fixed-point map of a model. The unknowns are packed as
/// `x = (δ₁ … δₙ, δ̃₁ … δ̃ₙ)`.
pub struct FixedPointMap<'a> {
    model: &'a ModelSpec,
    path: Path,
}

enum Path {
    /// All `Ω_j` diagonal and `A` monomial.
    Diagonal {
        /// `Ω_j` diagonals, row-major `n × p`.
        omega: Vec<f64>,
        /// For column `j` of `A`: `(row, |a|²)` of its single nonzero.
        col_entry: Vec<Option<(usize, f64)>>,
        /// For row `l` of `A`: `(column, |a|²)` of its single nonzero.
        row_entry: Vec<Option<(usize, f64)>>,
    },
    Dense {
        mean_cols: Vec<(usize, CVec)>,
    },
}

/// Output of one map evaluation.
pub struct MapValue {
    /// `f(x)`, packed like `x`.
    pub image: Vec<C64>,
    /// `Tr Θ / p` at the input point.
    pub m_n: C64,
}

impl<'a> FixedPointMap<'a> {
    /// Picks the diagonal fast path whenever the structure allows it.
    pub fn new(model: &'a ModelSpec) -> Self {
        if let Some(path) = Self::diagonal_path(model) {
            return Self { model, path };
        }
        Self::dense(model)
    }

    /// Always uses the general dense path.
    pub fn dense(model: &'a ModelSpec) -> Self {
        let mean_cols = model
            .mean_columns()
            .iter()
            .map(|&j| (j, model.mean().column(j).into_owned()))
            .collect();
        Self {
            model,
            path: Path::Dense { mean_cols },
        }
    }

    pub fn is_diagonal_path(&self) -> bool {
        matches!(self.path, Path::Diagonal { .. })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    fn diagonal_path(model: &ModelSpec) -> Option<Path> {
        if !model.all_diagonal() {
            return None;
        }
        let (p, n) = (model.p(), model.n());
        let mut col_entry = vec![None; n];
        let mut row_entry = vec![None; p];
        for &j in model.mean_columns() {
            for l in 0..p {
                let a = model.mean()[(l, j)];
                if a != ZERO {
                    if col_entry[j].is_some() || row_entry[l].is_some() {
                        return None;
                    }
                    col_entry[j] = Some((l, a.norm_sqr()));
                    row_entry[l] = Some((j, a.norm_sqr()));
                }
            }
        }
        let mut omega = Vec::with_capacity(n * p);
        for c in model.correlations() {
            match c {
                Correlation::Diagonal(d) => omega.extend_from_slice(d),
                Correlation::Dense(_) => return None,
            }
        }
        Some(Path::Diagonal {
            omega,
            col_entry,
            row_entry,
        })
    }

    /// Evaluates `f(x)` at `z`.
    pub fn apply(&self, z: C64, x: &[C64]) -> Result<MapValue> {
        let (p, n) = (self.model.p(), self.model.n());
        if x.len() != 2 * n {
            return Err(Error::Dimension(format!("iterate has length {}, expected {}", x.len(), 2 * n)));
        }
        let (delta, delta_tilde) = x.split_at(n);
        let nf = n as f64;
        let f_tilde: Vec<C64> = delta.iter().map(|d| -ONE / (z * (ONE + d))).collect();
        let mut image = vec![ZERO; 2 * n];

        let m_n = match &self.path {
            Path::Diagonal {
                omega,
                col_entry,
                row_entry,
            } => {
                // g_l = 1 + n⁻¹ Σ_j ω_jl δ̃_j
                let mut g = vec![ONE; p];
                for (j, dt) in delta_tilde.iter().enumerate() {
                    let w = dt / nf;
                    for (gl, &o) in g.iter_mut().zip(&omega[j * p..(j + 1) * p]) {
                        *gl += w * o;
                    }
                }
                let mut theta = vec![ZERO; p];
                for l in 0..p {
                    let mut inv = -z * g[l];
                    if let Some((j, a2)) = row_entry[l] {
                        inv -= z * f_tilde[j] * a2;
                    }
                    if inv == ZERO || !inv.is_finite() {
                        return Err(Error::Singular(format!("Θ⁻¹ has zero diagonal entry {l} at z = {z}")));
                    }
                    theta[l] = ONE / inv;
                }
                let (out_d, out_dt) = image.split_at_mut(n);
                for j in 0..n {
                    let row = &omega[j * p..(j + 1) * p];
                    let s: C64 = row.iter().zip(&theta).map(|(&o, t)| t * o).sum();
                    out_d[j] = s / nf;
                    out_dt[j] = match col_entry[j] {
                        Some((l, a2)) => f_tilde[j] + z * f_tilde[j] * f_tilde[j] * a2 * theta[l],
                        None => f_tilde[j],
                    };
                }
                theta.iter().sum::<C64>() / p as f64
            }
            Path::Dense { mean_cols } => {
                let theta = self.theta_dense(z, delta_tilde, &f_tilde, mean_cols)?;
                let theta_t = theta.transpose();
                let (out_d, out_dt) = image.split_at_mut(n);
                for (j, c) in self.model.correlations().iter().enumerate() {
                    let tr = match c {
                        Correlation::Diagonal(d) => d.iter().enumerate().map(|(l, &w)| theta[(l, l)] * w).sum(),
                        Correlation::Dense(o) => o.iter().zip(theta_t.iter()).map(|(a, b)| a * b).sum::<C64>(),
                    };
                    out_d[j] = tr / nf;
                    out_dt[j] = f_tilde[j];
                }
                for (j, a) in mean_cols {
                    let q = linalg::sesquilinear(&theta, a, a);
                    out_dt[*j] += z * f_tilde[*j] * f_tilde[*j] * q;
                }
                theta.trace() / p as f64
            }
        };
        if image.iter().any(|c| !c.is_finite()) {
            return Err(Error::Singular(format!("fixed-point map produced non-finite values at z = {z}")));
        }
        Ok(MapValue { image, m_n })
    }

    fn theta_dense(&self, z: C64, delta_tilde: &[C64], f_tilde: &[C64], mean_cols: &[(usize, CVec)]) -> Result<CMat> {
        let p = self.model.p();
        let nf = self.model.n() as f64;
        let mut inv = CMat::identity(p, p);
        for (c, dt) in self.model.correlations().iter().zip(delta_tilde) {
            c.add_scaled_to(&mut inv, dt / nf);
        }
        inv *= -z;
        for (j, a) in mean_cols {
            let s = z * f_tilde[*j];
            for k in 0..p {
                let ak = a[k].conj() * s;
                for i in 0..p {
                    inv[(i, k)] -= a[i] * ak;
                }
            }
        }
        linalg::inverse(&inv)
    }
}

/// The matrices of the deterministic equivalent at given `(δ, δ̃)`.
#[derive(Clone, Debug)]
pub struct Equivalents {
    pub f_mat: CMat,
    pub f_tilde_diag: Vec<C64>,
    pub theta: CMat,
    pub theta_tilde: CMat,
}

/// Builds `F`, `F̃`, `Θ`, `Θ̃` from their defining formulas at any `z ≠ 0`,
/// `Θ̃` goes through a `p × p` inverse when `p < n`.
pub fn assemble(model: &ModelSpec, z: C64, delta: &[C64], delta_tilde: &[C64]) -> Result<Equivalents> {
    let (p, n) = (model.p(), model.n());
    if delta.len() != n || delta_tilde.len() != n {
        return Err(Error::Dimension(format!("δ and δ̃ must have length n = {n}")));
    }
    let nf = n as f64;
    let mut f_inv = CMat::identity(p, p);
    for (c, dt) in model.correlations().iter().zip(delta_tilde) {
        c.add_scaled_to(&mut f_inv, dt / nf);
    }
    f_inv *= -z;
    let f_mat = linalg::inverse(&f_inv)?;
    let f_tilde_diag: Vec<C64> = delta.iter().map(|d| -ONE / (z * (ONE + d))).collect();
    let a = model.mean();
    let mut a_ft = a.clone();
    for (j, ft) in f_tilde_diag.iter().enumerate() {
        { let mut col = a_ft.column_mut(j); col *= *ft; }
    }
    let theta = linalg::inverse(&(&f_inv - (&a_ft * a.adjoint()) * z))?;
    let theta_tilde = if p < n {
        // Woodbury: only a p×p inverse, the n×n matrix is an outer product.
        let right = &f_mat * &a_ft;
        let mut left = a.adjoint() * z;
        for (j, ft) in f_tilde_diag.iter().enumerate() {
            let mut row = left.row_mut(j);
            row *= *ft;
        }
        let core = linalg::inverse(&(CMat::identity(p, p) - (&f_mat * &a_ft * a.adjoint()) * z))?;
        let mut tt = left * (core * right);
        for (j, ft) in f_tilde_diag.iter().enumerate() {
            tt[(j, j)] += *ft;
        }
        tt
    } else {
        let mut tt_inv = -(a.adjoint() * &f_mat * a) * z;
        for (j, ft) in f_tilde_diag.iter().enumerate() {
            tt_inv[(j, j)] += ONE / ft;
        }
        linalg::inverse(&tt_inv)?
    };
    Ok(Equivalents {
        f_mat,
        f_tilde_diag,
        theta,
        theta_tilde,
    })
}

/// `‖f(δ, δ̃) − (δ, δ̃)‖∞` at any `z ≠ 0`.
pub fn fixed_point_residual(model: &ModelSpec, z: C64, delta: &[C64], delta_tilde: &[C64]) -> Result<f64> {
    let x: Vec<C64> = delta.iter().chain(delta_tilde).copied().collect();
    let v = FixedPointMap::new(model).apply(z, &x)?;
    Ok(sup_distance(&v.image, &x))
}

pub(crate) fn sup_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

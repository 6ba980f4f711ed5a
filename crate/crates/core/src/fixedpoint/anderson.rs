//! Safeguarded Anderson acceleration of the damped Picard sweep.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::C64;

/// History of iterate and residual differences.
pub(super) struct Mixer {
    depth: usize,
    dx: VecDeque<Vec<C64>>,
    dg: VecDeque<Vec<C64>>,
}

impl Mixer {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            dx: VecDeque::with_capacity(depth),
            dg: VecDeque::with_capacity(depth),
        }
    }

    pub fn clear(&mut self) {
        self.dx.clear();
        self.dg.clear();
    }

    pub fn push(&mut self, dx: Vec<C64>, dg: Vec<C64>) {
        if self.depth == 0 {
            return;
        }
        if self.dx.len() == self.depth {
            self.dx.pop_front();
            self.dg.pop_front();
        }
        self.dx.push_back(dx);
        self.dg.push_back(dg);
    }

    /// Next iterate from `x` with residual `g = f(x) − x` and mixing `beta`.
    /// Without history this is the damped Picard step `x + βg`.
    pub fn propose(&self, x: &[C64], g: &[C64], beta: f64) -> Vec<C64> {
        let picard: Vec<C64> = x.iter().zip(g).map(|(xi, gi)| xi + gi * beta).collect();
        let m = self.dg.len();
        if m == 0 {
            return picard;
        }
        // γ = argmin ‖g − ΔG γ‖ via regularized normal equations
        let mut gram = DMatrix::<C64>::zeros(m, m);
        let mut rhs = DVector::<C64>::zeros(m);
        for a in 0..m {
            for b in a..m {
                let v: C64 = self.dg[a].iter().zip(&self.dg[b]).map(|(u, w)| u.conj() * w).sum();
                gram[(a, b)] = v;
                gram[(b, a)] = v.conj();
            }
            rhs[a] = self.dg[a].iter().zip(g).map(|(u, w)| u.conj() * w).sum();
        }
        let scale = (0..m).map(|a| gram[(a, a)].re).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            return picard;
        }
        for a in 0..m {
            gram[(a, a)] += C64::new(1e-12 * scale, 0.0);
        }
        let Some(gamma) = gram.lu().solve(&rhs) else {
            return picard;
        };
        if gamma.iter().any(|c| !c.is_finite()) {
            return picard;
        }
        let mut out = picard;
        for (k, gk) in gamma.iter().enumerate() {
            for ((o, dx), dg) in out.iter_mut().zip(&self.dx[k]).zip(&self.dg[k]) {
                *o -= (dx + dg * beta) * gk;
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.dx.is_empty()
    }
}

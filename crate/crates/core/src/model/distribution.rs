use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Law of the standardized entries `X_ij` (zero mean, `E|X|² = 1`).
///
/// Complex laws put independent real and imaginary parts of variance 1/2 each.
/// `UniformReal` is the purely real uniform law on `[−√3, √3]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ElementDistribution {
    ComplexGaussian,
    /// `(u₁ + i u₂)/√2` with `u_k` uniform on `[−√3, √3]`.
    UniformSymmetric,
    UniformReal,
    /// `(±1 ± i)/√2`.
    RademacherComplex,
    /// Complex Student-t, each part scaled to variance 1/2. Needs `dof > 2`;
    /// `dof ≤ 4` breaks the `4 + ε` moment condition.
    StudentT { dof: f64 },
}

impl ElementDistribution {
    /// Checks the parameters. Heavy tails (Student-t with `dof ≤ 4`) are only
    /// accepted with `allow_assumption_violating`.
    pub fn check(&self, allow_assumption_violating: bool) -> Result<()> {
        if let ElementDistribution::StudentT { dof } = *self {
            if !(dof > 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "student-t needs dof > 2 for unit variance, got {dof}"
                )));
            }
            if dof <= 4.0 && !allow_assumption_violating {
                return Err(Error::InvalidArgument(format!(
                    "student-t with dof = {dof} has no finite 4+ε moment; pass the assumption-violating flag to use it"
                )));
            }
        }
        Ok(())
    }

    pub fn is_real(&self) -> bool {
        matches!(self, ElementDistribution::UniformReal)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            ElementDistribution::ComplexGaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re * h, im * h)
            }
            ElementDistribution::UniformSymmetric => {
                let re = rng.random_range(-SQRT3..=SQRT3);
                let im = rng.random_range(-SQRT3..=SQRT3);
                C64::new(re * h, im * h)
            }
            ElementDistribution::UniformReal => C64::new(rng.random_range(-SQRT3..=SQRT3), 0.0),
            ElementDistribution::RademacherComplex => {
                let re = if rng.random::<bool>() { h } else { -h };
                let im = if rng.random::<bool>() { h } else { -h };
                C64::new(re, im)
            }
            ElementDistribution::StudentT { dof } => {
                // check() guarantees dof > 2
                let t = StudentT::new(dof).expect("dof > 0");
                let scale = ((dof - 2.0) / dof).sqrt() * h;
                C64::new(t.sample(rng) * scale, t.sample(rng) * scale)
            }
        }
    }

    /// Fills `out` with independent draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [C64]) {
        for x in out {
            *x = self.draw(rng);
        }
    }
}

impl fmt::Display for ElementDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementDistribution::ComplexGaussian => f.write_str("complex-gaussian"),
            ElementDistribution::UniformSymmetric => f.write_str("uniform-symmetric"),
            ElementDistribution::UniformReal => f.write_str("uniform-real"),
            ElementDistribution::RademacherComplex => f.write_str("rademacher-complex"),
            ElementDistribution::StudentT { dof } => write!(f, "student-t:{dof}"),
        }
    }
}

impl FromStr for ElementDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex-gaussian" | "gaussian" => Ok(ElementDistribution::ComplexGaussian),
            "uniform-symmetric" | "uniform" => Ok(ElementDistribution::UniformSymmetric),
            "uniform-real" => Ok(ElementDistribution::UniformReal),
            "rademacher-complex" | "rademacher" => Ok(ElementDistribution::RademacherComplex),
            other => {
                if let Some(dof) = other.strip_prefix("student-t:") {
                    let dof: f64 = dof
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad student-t dof in {other:?}")))?;
                    Ok(ElementDistribution::StudentT { dof })
                } else {
                    Err(Error::InvalidArgument(format!("unknown distribution {other:?}")))
                }
            }
        }
    }
}

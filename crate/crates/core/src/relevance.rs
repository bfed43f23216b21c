//! Relevance functions and the relevant-constraint-sensitivity (RCS) cost.
//!
//! A relevance function weights constraint sensitivities by how close the
//! constraint is to its boundary: it is nondecreasing in the constraint value
//! up to `0` and constant at its boundary value for positive (violated)
//! arguments.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RelevanceKind {
    /// `s(z) (1 - s(z))` with the logistic `s(z) = 1 / (1 + exp(-z))`.
    #[default]
    LogisticDerivative,
    /// `exp(-z^2)`
    Gaussian,
    /// `max(0, 1 - |z|)`, continuous but kinked at `z = -1` and `z = 0`.
    Hat,
    /// `1 / (1 + z^2)`
    Rational,
    /// `1 / (1 + |z|)^2`
    RationalAbs,
}

impl RelevanceKind {
    pub const ALL: [RelevanceKind; 5] = [
        RelevanceKind::LogisticDerivative,
        RelevanceKind::Gaussian,
        RelevanceKind::Hat,
        RelevanceKind::Rational,
        RelevanceKind::RationalAbs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceKind::LogisticDerivative => "logistic-derivative",
            RelevanceKind::Gaussian => "gaussian",
            RelevanceKind::Hat => "hat",
            RelevanceKind::Rational => "rational",
            RelevanceKind::RationalAbs => "rational-abs",
        }
    }

    /// The unclipped profile on `(-inf, 0]`.
    fn profile(self, z: f64) -> f64 {
        match self {
            RelevanceKind::LogisticDerivative => {
                // s(1 - s) = e^{-|z|} / (1 + e^{-|z|})^2, stable for large |z|
                let e = (-z.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            RelevanceKind::Gaussian => (-z * z).exp(),
            RelevanceKind::Hat => (1.0 - z.abs()).max(0.0),
            RelevanceKind::Rational => 1.0 / (1.0 + z * z),
            RelevanceKind::RationalAbs => {
                let d = 1.0 + z.abs();
                1.0 / (d * d)
            }
        }
    }
}

impl fmt::Display for RelevanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelevanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelevanceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown relevance kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceSpec {
    pub kind: RelevanceKind,
    /// The argument is divided by `scale` before the profile is applied.
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl Default for RelevanceSpec {
    fn default() -> Self {
        Self {
            kind: RelevanceKind::LogisticDerivative,
            scale: 1.0,
        }
    }
}

impl RelevanceSpec {
    pub fn new(kind: RelevanceKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "relevance scale {scale} must be positive"
            )));
        }
        Ok(Self { kind, scale })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.kind, self.scale).map(|_| ())
    }
}

/// `rho(z)`: the profile at `min(z, 0) / scale`.
pub fn relevance(spec: &RelevanceSpec, z: f64) -> f64 {
    spec.kind.profile(z.min(0.0) / spec.scale)
}

/// `S_r = diag(rho(g_1), ..., rho(g_k)) S_g`.
pub fn rcs_matrix(g_values: &[f64], s_g: &DMatrix<f64>, spec: &RelevanceSpec) -> Result<DMatrix<f64>> {
    if g_values.len() != s_g.nrows() {
        return Err(Error::DimensionMismatch {
            what: "constraint values vs S_g rows",
            expected: s_g.nrows(),
            got: g_values.len(),
        });
    }
    let mut out = s_g.clone();
    for (i, &g) in g_values.iter().enumerate() {
        let w = relevance(spec, g);
        out.row_mut(i).iter_mut().for_each(|v| *v *= w);
    }
    Ok(out)
}

/// Weighting `Q` of the sensitivity cost `vec(M)^T Q vec(M)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RcsWeights {
    /// `Q = alpha I`
    Scalar(f64),
    /// Full symmetric positive semidefinite `Q` over `vec(M)` (column-major).
    Matrix(DMatrix<f64>),
}

impl Default for RcsWeights {
    fn default() -> Self {
        RcsWeights::Scalar(0.0)
    }
}

impl RcsWeights {
    pub fn scalar(alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha {alpha} must be >= 0")));
        }
        Ok(RcsWeights::Scalar(alpha))
    }

    pub fn matrix(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::InvalidArgument("Q must be square".into()));
        }
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("Q must be symmetric".into()));
        }
        let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-10 * scale {
            return Err(Error::InvalidArgument(format!(
                "Q must be positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(RcsWeights::Matrix(q))
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            RcsWeights::Scalar(a) => *a == 0.0,
            RcsWeights::Matrix(q) => q.iter().all(|v| *v == 0.0),
        }
    }

    /// Dimension of a matrix-form `Q`; `None` for the scalar form.
    pub fn dim(&self) -> Option<usize> {
        match self {
            RcsWeights::Scalar(_) => None,
            RcsWeights::Matrix(q) => Some(q.nrows()),
        }
    }

    /// `v^T Q v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        match self {
            RcsWeights::Scalar(a) => Ok(a * v.iter().map(|x| x * x).sum::<f64>()),
            RcsWeights::Matrix(q) => {
                if q.nrows() != v.len() {
                    return Err(Error::DimensionMismatch {
                        what: "Q vs vec(M)",
                        expected: q.nrows(),
                        got: v.len(),
                    });
                }
                let mut acc = 0.0;
                for j in 0..v.len() {
                    if v[j] == 0.0 {
                        continue;
                    }
                    let col: f64 = (0..v.len()).map(|i| q[(i, j)] * v[i]).sum();
                    acc += v[j] * col;
                }
                Ok(acc)
            }
        }
    }
}

/// `vec(S_r)^T Q vec(S_r)`; `alpha ||S_r||_F^2` for the scalar form.
pub fn rcs_running_cost(s_r: &DMatrix<f64>, weights: &RcsWeights) -> Result<f64> {
    weights.quadratic_form(s_r.as_slice())
}

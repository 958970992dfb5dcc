//! Discrimination instances: pure states with priors, and their Gram data.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UsdError};
use crate::linalg::{min_eigenvalue, CMatrix, CVector};

/// Tolerance on state norms and on the prior sum.
pub const NORM_TOL: f64 = 1e-9;
/// Smallest admissible Gram eigenvalue.
pub const INDEPENDENCE_TOL: f64 = 1e-10;

/// `N` linearly independent unit vectors in `C^d` with prior probabilities.
///
/// Construction always validates; a `StateSet` that exists satisfies every
/// instance invariant (unit norms, `0 < p_i < 1`, `sum p = 1`, `d >= N >= 2`,
/// positive definite Gram matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSet {
    dim: usize,
    states: Vec<CVector>,
    priors: Vec<f64>,
}

impl StateSet {
    /// Validating constructor. States must already be unit vectors.
    pub fn new(states: Vec<CVector>, priors: Vec<f64>) -> Result<Self> {
        Self::build(states, priors, false)
    }

    /// Like [`StateSet::new`] but rescales states to unit norm and priors to
    /// unit sum instead of rejecting them.
    pub fn new_normalized(states: Vec<CVector>, priors: Vec<f64>) -> Result<Self> {
        Self::build(states, priors, true)
    }

    /// Real-valued convenience constructor.
    pub fn from_real(states: &[Vec<f64>], priors: Vec<f64>) -> Result<Self> {
        let states = states
            .iter()
            .map(|s| CVector::from_iterator(s.len(), s.iter().map(|&x| Complex64::new(x, 0.0))))
            .collect();
        Self::new_normalized(states, priors)
    }

    /// Uniform priors `1/N`.
    pub fn uniform(states: Vec<CVector>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n as f64; n])
    }

    /// Realizes states in `C^N` whose Gram matrix is `gram` (columns of the
    /// upper Cholesky factor).
    pub fn from_gram(gram: &CMatrix, priors: Vec<f64>) -> Result<Self> {
        let n = gram.nrows();
        if gram.ncols() != n {
            return Err(UsdError::DimensionMismatch {
                expected: n,
                got: gram.ncols(),
            });
        }
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| UsdError::LinearlyDependent(min_eigenvalue(gram)))?;
        let upper = chol.l().adjoint();
        let states = (0..n).map(|j| upper.column(j).into_owned()).collect();
        Self::new_normalized(states, priors)
    }

    fn build(mut states: Vec<CVector>, mut priors: Vec<f64>, normalize: bool) -> Result<Self> {
        let n = states.len();
        let dim = states.first().map_or(0, |s| s.len());
        if n < 2 || dim < n {
            return Err(UsdError::TooFewStates { n, dim });
        }
        if let Some(bad) = states.iter().find(|s| s.len() != dim) {
            return Err(UsdError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if priors.len() != n {
            return Err(UsdError::DimensionMismatch {
                expected: n,
                got: priors.len(),
            });
        }

        for (index, s) in states.iter_mut().enumerate() {
            let norm = s.norm();
            if normalize {
                if norm == 0.0 || !norm.is_finite() {
                    return Err(UsdError::NotNormalized {
                        index,
                        norm_sq: norm * norm,
                    });
                }
                s.unscale_mut(norm);
            } else if (norm - 1.0).abs() > NORM_TOL {
                return Err(UsdError::NotNormalized {
                    index,
                    norm_sq: norm * norm,
                });
            }
        }

        if priors.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(UsdError::InvalidPriors(
                "every prior must be strictly positive".into(),
            ));
        }
        let total: f64 = priors.iter().sum();
        if normalize {
            priors.iter_mut().for_each(|p| *p /= total);
        } else if (total - 1.0).abs() > NORM_TOL {
            return Err(UsdError::InvalidPriors(format!("priors sum to {total}")));
        }
        if priors.iter().any(|p| *p >= 1.0) {
            return Err(UsdError::InvalidPriors(
                "every prior must be below 1".into(),
            ));
        }

        let set = StateSet {
            dim,
            states,
            priors,
        };
        let lambda_min = min_eigenvalue(&set.gram_matrix());
        if lambda_min <= INDEPENDENCE_TOL {
            return Err(UsdError::LinearlyDependent(lambda_min));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of states `N`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[CVector] {
        &self.states
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// Same states, different priors.
    pub fn with_priors(&self, priors: Vec<f64>) -> Result<Self> {
        Self::new(self.states.clone(), priors)
    }

    /// `d x N` matrix whose columns are the states.
    pub fn state_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.states)
    }

    fn gram_matrix(&self) -> CMatrix {
        let lambda = self.state_matrix();
        lambda.adjoint() * lambda
    }

    pub fn gram(&self) -> GramData {
        GramData::from_matrix(self.gram_matrix())
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            dim: self.dim,
            states: self
                .states
                .iter()
                .map(|s| StateEntry::Complex(s.iter().map(|z| [z.re, z.im]).collect()))
                .collect(),
            priors: Some(self.priors.clone()),
        };
        serde_json::to_string(&file).expect("instance serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StateEntry {
    Complex(Vec<[f64; 2]>),
    Real(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    dim: usize,
    states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    priors: Option<Vec<f64>>,
}

/// Parses the JSON instance format.
///
/// `{"dim": d, "states": [[[re, im], ...], ...], "priors": [...]}`; a state may
/// also be a flat array of reals, and missing priors mean uniform.
pub fn parse_stateset(text: &str, normalize: bool) -> Result<StateSet> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| UsdError::Malformed(e.to_string()))?;
    let states: Vec<CVector> = file
        .states
        .into_iter()
        .map(|entry| match entry {
            StateEntry::Complex(v) => CVector::from_iterator(
                v.len(),
                v.into_iter().map(|[re, im]| Complex64::new(re, im)),
            ),
            StateEntry::Real(v) => {
                CVector::from_iterator(v.len(), v.into_iter().map(|x| Complex64::new(x, 0.0)))
            }
        })
        .collect();
    if let Some(bad) = states.iter().find(|s| s.len() != file.dim) {
        return Err(UsdError::DimensionMismatch {
            expected: file.dim,
            got: bad.len(),
        });
    }
    let n = states.len();
    let priors = file.priors.unwrap_or_else(|| vec![1.0 / n as f64; n]);
    StateSet::build(states, priors, normalize)
}

/// Gram matrix `G_ij = <psi_i|psi_j>` split into moduli and phases.
#[derive(Debug, Clone, PartialEq)]
pub struct GramData {
    gram: CMatrix,
    moduli: DMatrix<f64>,
    /// Only the strict upper triangle is meaningful.
    phases: DMatrix<f64>,
}

impl GramData {
    pub fn from_matrix(gram: CMatrix) -> Self {
        let n = gram.nrows();
        let moduli = DMatrix::from_fn(n, n, |i, j| gram[(i, j)].norm());
        let phases = DMatrix::from_fn(n, n, |i, j| {
            if i < j && moduli[(i, j)] > 0.0 {
                principal_phase(gram[(i, j)].arg())
            } else {
                0.0
            }
        });
        GramData {
            gram,
            moduli,
            phases,
        }
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.nrows() == 0
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.gram
    }

    pub fn modulus(&self, i: usize, j: usize) -> f64 {
        self.moduli[(i, j)]
    }

    /// `phi_ij` in `(-pi, pi]`; `phi_ji = -phi_ij`, and the diagonal is 0.
    pub fn phase(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.phases[(i, j)],
            std::cmp::Ordering::Greater => -self.phases[(j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// True when every off-diagonal overlap vanishes (to `tol`).
    pub fn is_orthogonal(&self, tol: f64) -> bool {
        let n = self.len();
        (0..n).all(|i| (i + 1..n).all(|j| self.moduli[(i, j)] <= tol))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.gram)
    }
}

/// Maps an angle from `atan2` into `(-pi, pi]`.
fn principal_phase(a: f64) -> f64 {
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

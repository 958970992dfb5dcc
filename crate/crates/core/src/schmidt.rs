//! Entanglement-transfer view of the bound.
//!
//! The bipartite state `sum_j sqrt(p_j) e^{i theta_j} |psi_j> (x) |Phi_j>`, with
//! `Phi_j` the Fourier family of maximally entangled states, has Schmidt
//! decomposition `N^{-1/2} sum_k ||eta_k|| |eta'_k, k> |k>` where
//!
//! ```text
//! eta_k = sum_r sqrt(p_r) e^{i theta_r} e^{2 pi i r k / N} psi_r     (r, k from 0)
//! ```
//!
//! The bipartite state itself is never built: the `eta_k` norms carry all the
//! information needed for the Schmidt spectrum and the optimal probability of
//! converting it into a maximally entangled state.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Result, UsdError};
use crate::linalg::CVector;
use crate::phase_bound::{self, BoundResult, MinimizerConfig, PhaseObjective, PhaseVector};
use crate::stateset::StateSet;

/// Unnormalized `eta_k` vectors in `k` order.
#[derive(Debug, Clone)]
pub struct EtaFamily {
    pub vectors: Vec<CVector>,
    pub norms_sq: Vec<f64>,
}

fn check_theta(set: &StateSet, theta: &PhaseVector) -> Result<()> {
    if theta.len() != set.len() {
        return Err(UsdError::DimensionMismatch {
            expected: set.len(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Fourier phase offsets `2 pi r k / N` turning `eta_k` into `eta_0`.
pub fn fourier_offsets(n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|r| 2.0 * PI * ((r * k) % n) as f64 / n as f64)
        .collect()
}

pub fn eta_family(set: &StateSet, theta: &PhaseVector) -> Result<EtaFamily> {
    check_theta(set, theta)?;
    let n = set.len();
    let vectors: Vec<CVector> = (0..n)
        .map(|k| {
            let offsets = fourier_offsets(n, k);
            let mut eta = CVector::zeros(set.dim());
            for (r, psi) in set.states().iter().enumerate() {
                let c =
                    Complex64::from_polar(set.priors()[r].sqrt(), theta.as_slice()[r] + offsets[r]);
                eta.axpy(c, psi, Complex64::new(1.0, 0.0));
            }
            eta
        })
        .collect();
    let norms_sq = vectors.iter().map(|v| v.norm_squared()).collect();
    Ok(EtaFamily { vectors, norms_sq })
}

/// Squared Schmidt coefficients, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SchmidtSpectrum(Vec<f64>);

impl SchmidtSpectrum {
    /// Validates a sorted, strictly positive spectrum summing to 1 (to 1e-10).
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(UsdError::InvalidArgument("empty Schmidt spectrum".into()));
        }
        if coeffs.iter().any(|&a| a <= 0.0 || !a.is_finite()) {
            return Err(UsdError::InvalidArgument(
                "Schmidt coefficients must be positive".into(),
            ));
        }
        if coeffs.windows(2).any(|w| w[0] < w[1]) {
            return Err(UsdError::InvalidArgument(
                "Schmidt coefficients must be sorted descending".into(),
            ));
        }
        let total: f64 = coeffs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(UsdError::InvalidArgument(format!(
                "Schmidt coefficients sum to {total}"
            )));
        }
        Ok(SchmidtSpectrum(coeffs))
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `alpha_k = ||eta_k||^2 / N`, sorted descending.
pub fn schmidt_spectrum(set: &StateSet, theta: &PhaseVector) -> Result<SchmidtSpectrum> {
    let fam = eta_family(set, theta)?;
    let n = set.len() as f64;
    let mut coeffs: Vec<f64> = fam.norms_sq.iter().map(|x| x / n).collect();
    if let Some(&zero) = coeffs.iter().find(|&&a| a <= 0.0) {
        return Err(UsdError::LinearlyDependent(zero));
    }
    coeffs.sort_by(|a, b| b.total_cmp(a));
    SchmidtSpectrum::new(coeffs)
}

/// `min_l q_l` with `q_l = (sum_{i>=l} alpha_i) / ((d - l + 1) / d)`.
pub fn vidal_min_tail(spec: &SchmidtSpectrum) -> f64 {
    let d = spec.len();
    let mut tail = 0.0;
    let mut best = f64::INFINITY;
    for (idx, &a) in spec.coeffs().iter().enumerate().rev() {
        tail += a;
        let count = (d - idx) as f64;
        best = best.min(tail * d as f64 / count);
    }
    best
}

/// `d * alpha_d`, the smallest coefficient scaled by the dimension.
pub fn smallest_coefficient_probability(spec: &SchmidtSpectrum) -> f64 {
    spec.len() as f64 * spec.coeffs()[spec.len() - 1]
}

/// Optimal probability of locally converting the state with this spectrum
/// into a maximally entangled state of the same Schmidt rank.
///
/// Evaluates the minimum over tails and checks it against `d * alpha_d`.
pub fn vidal_probability(spec: &SchmidtSpectrum) -> f64 {
    let by_tail = vidal_min_tail(spec);
    let by_smallest = smallest_coefficient_probability(spec);
    assert!(
        (by_tail - by_smallest).abs() <= 1e-12,
        "tail minimum {by_tail} disagrees with d*alpha_d {by_smallest}"
    );
    by_tail
}

/// `min_k ||eta_k||^2`.
pub fn conversion_probability(set: &StateSet, theta: &PhaseVector) -> Result<f64> {
    let fam = eta_family(set, theta)?;
    Ok(fam.norms_sq.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseShiftReport {
    pub k: usize,
    /// `||eta_k(theta)||^2` from the explicit vector.
    pub eta_norm_sq: f64,
    /// `||eta_0(theta')||^2` through the pairwise bound objective.
    pub shifted_norm_sq: f64,
    pub difference: f64,
}

/// Compares `||eta_k(theta)||^2` with the bound objective at the phases
/// `theta_r + 2 pi r k / N`. `k` is zero-based.
pub fn check_phase_shift_equivalence(
    set: &StateSet,
    k: usize,
    theta: &PhaseVector,
) -> Result<PhaseShiftReport> {
    let n = set.len();
    if k >= n {
        return Err(UsdError::InvalidArgument(format!(
            "k = {k} out of range for N = {n}"
        )));
    }
    let fam = eta_family(set, theta)?;
    let shifted: Vec<f64> = theta
        .as_slice()
        .iter()
        .zip(fourier_offsets(n, k))
        .map(|(t, o)| t + o)
        .collect();
    let shifted = PhaseVector::new(shifted)?;
    let shifted_norm_sq = phase_bound::objective(&set.gram(), set.priors(), &shifted)?;
    Ok(PhaseShiftReport {
        k,
        eta_norm_sq: fam.norms_sq[k],
        shifted_norm_sq,
        difference: fam.norms_sq[k] - shifted_norm_sq,
    })
}

/// Minimizes `||eta_k||^2` over the phases (zero-based `k`).
pub fn minimize_eta_norm(set: &StateSet, k: usize, cfg: &MinimizerConfig) -> Result<BoundResult> {
    let n = set.len();
    if k >= n {
        return Err(UsdError::InvalidArgument(format!(
            "k = {k} out of range for N = {n}"
        )));
    }
    let obj = PhaseObjective::new(&set.gram(), set.priors())?.shifted(fourier_offsets(n, k))?;
    phase_bound::minimize_phases(&obj, cfg)
}

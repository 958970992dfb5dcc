//! Exact optimum of the average success probability.
//!
//! A vector of individual success probabilities `gamma` is achievable by an
//! unambiguous POVM iff `X - diag(gamma) >= 0` and `gamma >= 0`, with `X` the
//! Gram matrix. This convex set is searched with a log-determinant barrier
//! path-following method; the optimum lies on the critical region where the
//! smallest eigenvalue of `X - diag(gamma)` vanishes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, UsdError};
use crate::linalg::{hermitian_eigen, hermitian_eigenvalues, max_abs, CMatrix};
use crate::phase_bound::{minimize_bound, MinimizerConfig};
use crate::stateset::{GramData, StateSet};

/// Slack allowed on `sigma_min` when calling a point feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Upper end of the `sigma_min` window accepted as "on the critical region".
pub const CRITICAL_TOL: f64 = 1e-6;
/// `gamma_i` below this marks a boundary solution.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Eigenvalue gap below which the minimum eigenvalue counts as degenerate.
pub const SIMPLICITY_GAP: f64 = 1e-8;
/// Allowed `|| grad sigma_min + p ||` for an interior nonsingular point.
pub const GRADIENT_MATCH_TOL: f64 = 1e-4;

fn check_len(g: &GramData, gamma: &[f64]) -> Result<()> {
    if gamma.len() != g.len() {
        return Err(UsdError::DimensionMismatch {
            expected: g.len(),
            got: gamma.len(),
        });
    }
    Ok(())
}

fn shifted_gram(g: &GramData, gamma: &[f64]) -> CMatrix {
    let mut m = g.matrix().clone();
    for (i, &x) in gamma.iter().enumerate() {
        m[(i, i)] -= Complex64::new(x, 0.0);
    }
    m
}

/// Smallest eigenvalue of `X - diag(gamma)` and a unit eigenvector.
pub fn sigma_min(g: &GramData, gamma: &[f64]) -> Result<(f64, DVector<Complex64>)> {
    check_len(g, gamma)?;
    let eig = hermitian_eigen(&shifted_gram(g, gamma));
    Ok((eig.values[0], eig.vectors.column(0).into_owned()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaGradient {
    /// `d sigma_min / d gamma_i = -|v_i|^2`.
    Simple(Vec<f64>),
    /// Minimum eigenvalue is (numerically) repeated; no gradient exists.
    Degenerate { gap: f64 },
}

/// Gradient of `sigma_min` in `gamma`, or the degeneracy gap when the
/// minimum eigenvalue is not simple.
pub fn sigma_min_gradient(g: &GramData, gamma: &[f64]) -> Result<SigmaGradient> {
    check_len(g, gamma)?;
    let eig = hermitian_eigen(&shifted_gram(g, gamma));
    let gap = eig
        .values
        .get(1)
        .map_or(f64::INFINITY, |v| v - eig.values[0]);
    if gap <= SIMPLICITY_GAP {
        return Ok(SigmaGradient::Degenerate { gap });
    }
    Ok(SigmaGradient::Simple(
        eig.vectors
            .column(0)
            .iter()
            .map(|z| -z.norm_sqr())
            .collect(),
    ))
}

/// A candidate vector of individual success probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPoint {
    pub gamma: Vec<f64>,
    pub sigma_min: f64,
    pub feasible: bool,
}

impl GammaPoint {
    pub fn evaluate(g: &GramData, gamma: Vec<f64>) -> Result<Self> {
        let (sigma, _) = sigma_min(g, &gamma)?;
        let feasible = sigma >= -FEASIBILITY_TOL && gamma.iter().all(|&x| x >= -1e-12);
        Ok(GammaPoint {
            gamma,
            sigma_min: sigma,
            feasible,
        })
    }

    pub fn objective(&self, priors: &[f64]) -> f64 {
        self.gamma.iter().zip(priors).map(|(g, p)| g * p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolutionLabel {
    InteriorNonsingular,
    InteriorSingular,
    Boundary,
}

impl SolutionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolutionLabel::InteriorNonsingular => "interior-nonsingular",
            SolutionLabel::InteriorSingular => "interior-singular",
            SolutionLabel::Boundary => "boundary",
        }
    }
}

impl std::fmt::Display for SolutionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassEvidence {
    /// Indices with `gamma_i` below the boundary tolerance.
    ZeroIndices(Vec<usize>),
    /// Gap between the two smallest eigenvalues of `X - Gamma`.
    DegeneracyGap(f64),
    /// Gradient of `sigma_min` and `|| grad + p ||`.
    Gradient { gradient: Vec<f64>, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionClass {
    pub label: SolutionLabel,
    pub evidence: ClassEvidence,
}

/// Classifies an optimum as boundary, interior nonsingular or interior singular.
///
/// A degenerate minimum eigenvalue is reported as interior singular without
/// further subdifferential analysis. A simple eigenvalue whose gradient fails
/// to match `-p` is also reported as singular, with the residual attached.
pub fn classify(g: &GramData, point: &GammaPoint, priors: &[f64]) -> Result<SolutionClass> {
    check_len(g, &point.gamma)?;
    check_len(g, priors)?;
    if !(-FEASIBILITY_TOL..=CRITICAL_TOL).contains(&point.sigma_min) {
        return Err(UsdError::NotCritical(point.sigma_min));
    }
    let zeros: Vec<usize> = point
        .gamma
        .iter()
        .enumerate()
        .filter(|(_, &x)| x < BOUNDARY_TOL)
        .map(|(i, _)| i)
        .collect();
    if !zeros.is_empty() {
        return Ok(SolutionClass {
            label: SolutionLabel::Boundary,
            evidence: ClassEvidence::ZeroIndices(zeros),
        });
    }
    match sigma_min_gradient(g, &point.gamma)? {
        SigmaGradient::Degenerate { gap } => Ok(SolutionClass {
            label: SolutionLabel::InteriorSingular,
            evidence: ClassEvidence::DegeneracyGap(gap),
        }),
        SigmaGradient::Simple(gradient) => {
            let residual = gradient
                .iter()
                .zip(priors)
                .map(|(d, p)| (d + p).powi(2))
                .sum::<f64>()
                .sqrt();
            let label = if residual < GRADIENT_MATCH_TOL {
                SolutionLabel::InteriorNonsingular
            } else {
                SolutionLabel::InteriorSingular
            };
            Ok(SolutionClass {
                label,
                evidence: ClassEvidence::Gradient { gradient, residual },
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Barrier weight of the first stage.
    pub t_start: f64,
    /// Barrier weight of the last stage.
    pub t_final: f64,
    pub t_factor: f64,
    /// `gamma_i` below this after a barrier pass is fixed to zero.
    pub pin_threshold: f64,
    /// Stop a stage once half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Used for the bound that `bound_gap` is measured against.
    pub minimizer: MinimizerConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_start: 1e-1,
            t_final: 1e-9,
            t_factor: 10.0,
            pin_threshold: 1e-5,
            newton_tol: 1e-10,
            max_newton: 200,
            minimizer: MinimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub gamma_opt: GammaPoint,
    pub p_opt: f64,
    pub class: SolutionClass,
    pub povm_valid: bool,
    /// Phase-minimization bound minus `p_opt`.
    pub bound_gap: f64,
    pub bound: f64,
    /// Upper bound on `P_opt` from the rescaled barrier dual; `dual_bound -
    /// p_opt` is the optimality certificate.
    pub dual_bound: f64,
    pub pinned: Vec<usize>,
    pub converged: bool,
}

/// Maximizes `sum_i p_i gamma_i` over the feasible set.
pub fn solve_optimal(set: &StateSet, cfg: &SolverConfig) -> Result<SolverResult> {
    if !(cfg.t_start > 0.0 && cfg.t_final > 0.0 && cfg.t_final <= cfg.t_start && cfg.t_factor > 1.0)
    {
        return Err(UsdError::InvalidArgument("bad barrier schedule".into()));
    }
    let g = set.gram();
    let priors = set.priors();
    let n = set.len();
    let x = g.matrix();

    let start = 0.5 * g.min_eigenvalue();
    let mut gamma = vec![start.min(0.5); n];
    let mut free = vec![true; n];
    let mut converged = true;
    let mut pinned = Vec::new();
    let mut dual_bound = None;

    loop {
        converged &= barrier_path(x, priors, &mut gamma, &free, cfg);
        // The unpinned path point is dual feasible up to scaling; later
        // passes drop the multipliers of pinned coordinates.
        dual_bound.get_or_insert_with(|| dual_certificate(x, priors, &gamma, cfg.t_final));
        let newly: Vec<usize> = (0..n)
            .filter(|&i| free[i] && gamma[i] < cfg.pin_threshold)
            .collect();
        if newly.is_empty() || newly.len() == free.iter().filter(|&&f| f).count() {
            break;
        }
        for i in newly {
            free[i] = false;
            gamma[i] = 0.0;
            pinned.push(i);
        }
    }
    pinned.sort_unstable();
    push_to_boundary(x, &mut gamma);

    let dual_bound = dual_bound.unwrap_or(f64::INFINITY);
    let point = GammaPoint::evaluate(&g, gamma)?;
    let p_opt = point.objective(priors);
    let class = classify(&g, &point, priors)?;
    let povm_valid = reconstruct_povm(set, &point.gamma)?.valid;
    let bound = minimize_bound(set, &cfg.minimizer)?.value;
    Ok(SolverResult {
        p_opt,
        class,
        povm_valid,
        bound_gap: bound - p_opt,
        bound,
        dual_bound,
        pinned,
        converged,
        gamma_opt: point,
    })
}

/// Scales `gamma` along its ray onto the boundary of the feasible set,
/// removing the `O(N t)` slack left by the barrier. The largest feasible
/// scale is `1 / lambda_max(D X^-1 D)` with `D = diag(sqrt(gamma))`.
fn push_to_boundary(x: &CMatrix, gamma: &mut [f64]) {
    let Some(chol) = x.clone().cholesky() else {
        return;
    };
    let inv = chol.inverse();
    let d: Vec<f64> = gamma.iter().map(|g| g.max(0.0).sqrt()).collect();
    let m = CMatrix::from_fn(gamma.len(), gamma.len(), |i, j| inv[(i, j)] * (d[i] * d[j]));
    let lambda = hermitian_eigenvalues(&m).last().copied().unwrap_or(0.0);
    if lambda <= 0.0 {
        return;
    }
    // Stay a hair inside so round-off cannot make the point infeasible.
    let scale = (1.0 - 1e-13) / lambda;
    if scale > 1.0 {
        gamma.iter_mut().for_each(|g| *g *= scale);
    }
}

/// Barrier value `p.gamma / t + log det(X - Gamma) + sum_free log gamma_i`,
/// or `None` outside the domain.
fn barrier_value(x: &CMatrix, priors: &[f64], gamma: &[f64], free: &[bool], t: f64) -> Option<f64> {
    let mut m = x.clone();
    let mut value = 0.0;
    for i in 0..gamma.len() {
        if free[i] {
            if gamma[i] <= 0.0 {
                return None;
            }
            value += gamma[i].ln();
        }
        value += priors[i] * gamma[i] / t;
        m[(i, i)] -= Complex64::new(gamma[i], 0.0);
    }
    let chol = m.cholesky()?;
    let logdet: f64 = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|z| 2.0 * z.re.ln())
        .sum();
    Some(value + logdet)
}

/// Follows the central path from `cfg.t_start` down to `cfg.t_final` with
/// damped Newton steps. Returns false if any stage hit its iteration cap.
fn barrier_path(
    x: &CMatrix,
    priors: &[f64],
    gamma: &mut [f64],
    free: &[bool],
    cfg: &SolverConfig,
) -> bool {
    let idx: Vec<usize> = (0..gamma.len()).filter(|&i| free[i]).collect();
    if idx.is_empty() {
        return true;
    }
    let mut all_ok = true;
    let mut t = cfg.t_start;
    loop {
        all_ok &= newton_stage(x, priors, gamma, free, &idx, t, cfg);
        if t <= cfg.t_final * (1.0 + 1e-12) {
            break;
        }
        t = (t / cfg.t_factor).max(cfg.t_final);
    }
    all_ok
}

fn newton_stage(
    x: &CMatrix,
    priors: &[f64],
    gamma: &mut [f64],
    free: &[bool],
    idx: &[usize],
    t: f64,
    cfg: &SolverConfig,
) -> bool {
    let k = idx.len();
    for _ in 0..cfg.max_newton {
        let m = shifted(x, gamma);
        let Some(chol) = m.cholesky() else {
            return false;
        };
        let inv = chol.inverse();
        let grad = DVector::from_fn(k, |a, _| {
            let i = idx[a];
            priors[i] / t - inv[(i, i)].re + 1.0 / gamma[i]
        });
        // Negated Hessian, positive definite on the domain.
        let neg_hess = DMatrix::from_fn(k, k, |a, b| {
            let (i, j) = (idx[a], idx[b]);
            let diag = if a == b {
                1.0 / (gamma[i] * gamma[i])
            } else {
                0.0
            };
            inv[(i, j)].norm_sqr() + diag
        });
        let Some(h) = neg_hess.cholesky() else {
            return false;
        };
        let step = h.solve(&grad);
        let decrement_sq = grad.dot(&step);
        if decrement_sq / 2.0 <= cfg.newton_tol {
            return true;
        }
        let Some(current) = barrier_value(x, priors, gamma, free, t) else {
            return false;
        };
        let lambda = decrement_sq.sqrt();
        let mut s = if lambda > 0.25 {
            1.0 / (1.0 + lambda)
        } else {
            1.0
        };
        let mut trial = gamma.to_vec();
        let mut moved = false;
        for _ in 0..60 {
            for (a, &i) in idx.iter().enumerate() {
                trial[i] = gamma[i] + s * step[a];
            }
            if let Some(v) = barrier_value(x, priors, &trial, free, t) {
                if v >= current + 0.25 * s * decrement_sq - 1e-13 * current.abs().max(1.0) {
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            // Round-off floor: the decrement can no longer be reduced.
            return decrement_sq < 1e-6;
        }
        gamma.copy_from_slice(&trial);
    }
    false
}

fn shifted(x: &CMatrix, gamma: &[f64]) -> CMatrix {
    let mut m = x.clone();
    for (i, &v) in gamma.iter().enumerate() {
        m[(i, i)] -= Complex64::new(v, 0.0);
    }
    m
}

/// `c * tr(Z X)` with `Z = t (X - Gamma)^{-1}` scaled so that `Z_ii >= p_i`.
/// Any such `Z >= 0` bounds `p.gamma` over the whole feasible set.
fn dual_certificate(x: &CMatrix, priors: &[f64], gamma: &[f64], t: f64) -> f64 {
    let Some(chol) = shifted(x, gamma).cholesky() else {
        return f64::INFINITY;
    };
    let z = chol.inverse().scale(t);
    let scale = (0..priors.len())
        .map(|i| priors[i] / z[(i, i)].re)
        .fold(1.0f64, f64::max);
    scale * (z * x).trace().re
}

/// POVM validation summary for a success-probability vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovmReport {
    /// `max |<psi_i|Pi_j|psi_i> - gamma_i delta_ij|`.
    pub success_residual: f64,
    /// Smallest eigenvalue over the success elements.
    pub success_min_eigenvalue: f64,
    /// Smallest eigenvalue of the inconclusive element.
    pub inconclusive_min_eigenvalue: f64,
    /// `max |sum_k Pi_k - I|`.
    pub completeness_residual: f64,
    pub valid: bool,
}

/// `Pi_i = gamma_i |psi~_i><psi~_i|` for `i < N`, then `Pi_N = I - sum Pi_i`,
/// where `psi~` are the reciprocal states with `<psi~_i|psi_j> = delta_ij`.
pub fn build_povm(set: &StateSet, gamma: &[f64]) -> Result<Vec<CMatrix>> {
    let g = set.gram();
    check_len(&g, gamma)?;
    let lambda = set.state_matrix();
    let inv = g
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| UsdError::LinearlyDependent(g.min_eigenvalue()))?
        .inverse();
    // Columns of Lambda X^{-1} span the same space and are dual to the states.
    let reciprocal = &lambda * inv;
    let d = set.dim();
    let mut elements: Vec<CMatrix> = reciprocal
        .column_iter()
        .zip(gamma)
        .map(|(r, &gi)| (r * r.adjoint()).scale(gi))
        .collect();
    let mut rest = CMatrix::identity(d, d);
    for e in &elements {
        rest -= e;
    }
    elements.push(rest);
    Ok(elements)
}

pub fn reconstruct_povm(set: &StateSet, gamma: &[f64]) -> Result<PovmReport> {
    let elements = build_povm(set, gamma)?;
    let n = set.len();
    let d = set.dim();
    let mut success_residual: f64 = 0.0;
    for (i, psi) in set.states().iter().enumerate() {
        for (j, pi) in elements[..n].iter().enumerate() {
            let val = (psi.adjoint() * pi * psi)[(0, 0)];
            let target = if i == j { gamma[i] } else { 0.0 };
            success_residual = success_residual.max((val - Complex64::new(target, 0.0)).norm());
        }
    }
    let success_min_eigenvalue = elements[..n]
        .iter()
        .map(|e| hermitian_eigenvalues(e)[0])
        .fold(f64::INFINITY, f64::min);
    let inconclusive_min_eigenvalue = hermitian_eigenvalues(&elements[n])[0];
    let mut total = CMatrix::zeros(d, d);
    for e in &elements {
        total += e;
    }
    let completeness_residual = max_abs(&(total - CMatrix::identity(d, d)));
    let valid = success_residual < 1e-9
        && success_min_eigenvalue >= -FEASIBILITY_TOL
        && inconclusive_min_eigenvalue >= -FEASIBILITY_TOL
        && completeness_residual < 1e-10;
    Ok(PovmReport {
        success_residual,
        success_min_eigenvalue,
        inconclusive_min_eigenvalue,
        completeness_residual,
        valid,
    })
}

/// Grid resolution used when the caller does not pick one.
pub fn default_grid_resolution(n: usize) -> usize {
    match n {
        0..=2 => 200,
        3 => 60,
        4 => 30,
        _ => 20,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub gamma: Vec<f64>,
    pub resolution: usize,
}

/// Round-off slack for grid feasibility; exact grid points such as
/// `gamma = 1` for orthonormal states must count as feasible.
const GRID_SLACK: f64 = 1e-12;

/// Grid search for the optimum, independent of the barrier solver.
///
/// Scans `gamma in {0, 1/R, ..., 1}^N`, keeps feasible points, then refines
/// once on the half-step neighbourhood of the best one. Feasibility is closed
/// under decreasing any coordinate, so the last coordinate is found by
/// bisection. Ties go to the lexicographically smallest grid index.
pub fn brute_force_oracle(set: &StateSet, resolution: usize) -> Result<OracleResult> {
    if resolution < 20 {
        return Err(UsdError::InvalidArgument(format!(
            "grid resolution {resolution} is below 20"
        )));
    }
    let g = set.gram();
    let priors = set.priors();
    let n = set.len();
    let r = resolution;
    let h = 1.0 / r as f64;
    let feasible = |gamma: &[f64]| {
        let m = shifted(g.matrix(), gamma);
        hermitian_eigenvalues(&m)[0] >= -GRID_SLACK
    };

    let outer: usize = (r + 1).pow((n - 1) as u32);
    let best = (0..outer)
        .into_par_iter()
        .filter_map(|code| {
            let mut idx = vec![0usize; n];
            let mut c = code;
            for slot in idx[..n - 1].iter_mut().rev() {
                *slot = c % (r + 1);
                c /= r + 1;
            }
            let mut gamma: Vec<f64> = idx.iter().map(|&k| k as f64 * h).collect();
            gamma[n - 1] = 0.0;
            if !feasible(&gamma) {
                return None;
            }
            // Largest feasible last coordinate.
            let (mut lo, mut hi) = (0usize, r + 1);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                gamma[n - 1] = mid as f64 * h;
                if feasible(&gamma) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            idx[n - 1] = lo;
            gamma[n - 1] = lo as f64 * h;
            let value: f64 = gamma.iter().zip(priors).map(|(a, b)| a * b).sum();
            Some((value, idx))
        })
        .reduce_with(|a, b| match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Greater => a,
            std::cmp::Ordering::Less => b,
            std::cmp::Ordering::Equal => {
                if a.1 <= b.1 {
                    a
                } else {
                    b
                }
            }
        })
        .expect("gamma = 0 is always feasible");

    let center: Vec<f64> = best.1.iter().map(|&k| k as f64 * h).collect();
    let mut value = best.0;
    let mut gamma = center.clone();
    let half = 0.5 * h;
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let trial: Vec<f64> = center
            .iter()
            .map(|&x| {
                let step = (c % 3) as f64 - 1.0;
                c /= 3;
                (x + step * half).clamp(0.0, 1.0)
            })
            .collect();
        let v: f64 = trial.iter().zip(priors).map(|(a, b)| a * b).sum();
        if v > value && feasible(&trial) {
            value = v;
            gamma = trial;
        }
    }
    Ok(OracleResult {
        value,
        gamma,
        resolution,
    })
}

//! Analytic values of the phase-minimization bound for structured instances.
//!
//! Each form comes with an applicability predicate that is evaluated on the
//! Gram data of an instance (tolerance [`STRUCTURE_TOL`]); callers do not get
//! to assert structure the states do not have.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Result, UsdError};
use crate::stateset::{GramData, StateSet};

pub const STRUCTURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaId {
    TwoState,
    ThreeStateOneOrthogonal,
    ThreeStateInvariantPhase,
    ThreeStateSymmetricReal,
}

impl FormulaId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FormulaId::TwoState => "two-state",
            FormulaId::ThreeStateOneOrthogonal => "three-state-one-orthogonal",
            FormulaId::ThreeStateInvariantPhase => "three-state-invariant-phase",
            FormulaId::ThreeStateSymmetricReal => "three-state-symmetric-real",
        }
    }
}

impl std::fmt::Display for FormulaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormResult {
    pub formula: FormulaId,
    /// `None` when the form does not apply.
    pub value: Option<f64>,
    /// Why the form does not apply.
    pub reason: Option<String>,
}

impl ClosedFormResult {
    fn applies(formula: FormulaId, value: f64) -> Self {
        ClosedFormResult {
            formula,
            value: Some(value),
            reason: None,
        }
    }

    fn rejects(formula: FormulaId, reason: impl Into<String>) -> Self {
        ClosedFormResult {
            formula,
            value: None,
            reason: Some(reason.into()),
        }
    }

    pub fn is_applicable(&self) -> bool {
        self.value.is_some()
    }
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(UsdError::InvalidPriors(format!("{p} is not in (0, 1)")))
    }
}

fn check_overlap(s: f64) -> Result<()> {
    if (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(UsdError::InvalidArgument(format!(
            "overlap {s} is not in [0, 1)"
        )))
    }
}

/// `1 - 2 sqrt(p1 p2) |<psi_1|psi_2>|`.
pub fn two_state_bound(p1: f64, p2: f64, overlap: f64) -> Result<ClosedFormResult> {
    check_prob(p1)?;
    check_prob(p2)?;
    if (p1 + p2 - 1.0).abs() > STRUCTURE_TOL {
        return Err(UsdError::InvalidPriors(format!("{p1} + {p2} != 1")));
    }
    check_overlap(overlap)?;
    Ok(ClosedFormResult::applies(
        FormulaId::TwoState,
        1.0 - 2.0 * (p1 * p2).sqrt() * overlap,
    ))
}

/// Three states with `<psi_1|psi_2> = 0`:
/// `1 - 2 [sqrt(p1 p3) |G13| + sqrt(p2 p3) |G23|]`.
pub fn three_state_one_orthogonal(p: [f64; 3], g13: f64, g23: f64) -> Result<ClosedFormResult> {
    p.iter().try_for_each(|&x| check_prob(x))?;
    check_overlap(g13)?;
    check_overlap(g23)?;
    Ok(ClosedFormResult::applies(
        FormulaId::ThreeStateOneOrthogonal,
        1.0 - 2.0 * ((p[0] * p[2]).sqrt() * g13 + (p[1] * p[2]).sqrt() * g23),
    ))
}

/// Three states whose invariant phase `arg(G12 G23 G31)` equals `pi`:
/// every pairwise cosine can reach `-1` at once.
///
/// `moduli` and `phases` are ordered `(12, 13, 23)`.
pub fn three_state_invariant_phase(
    p: [f64; 3],
    moduli: [f64; 3],
    phases: [f64; 3],
) -> Result<ClosedFormResult> {
    p.iter().try_for_each(|&x| check_prob(x))?;
    moduli.iter().try_for_each(|&x| check_overlap(x))?;
    let value = 1.0
        - 2.0
            * ((p[0] * p[1]).sqrt() * moduli[0]
                + (p[0] * p[2]).sqrt() * moduli[1]
                + (p[1] * p[2]).sqrt() * moduli[2]);
    if moduli.iter().all(|&m| m <= STRUCTURE_TOL) {
        return Ok(ClosedFormResult::applies(
            FormulaId::ThreeStateInvariantPhase,
            value,
        ));
    }
    let phi = Complex64::from_polar(1.0, phases[0] + phases[2] - phases[1]).arg();
    let distance = PI - phi.abs();
    if distance > STRUCTURE_TOL {
        return Ok(ClosedFormResult::rejects(
            FormulaId::ThreeStateInvariantPhase,
            format!("invariant phase {phi:.6} is not pi"),
        ));
    }
    Ok(ClosedFormResult::applies(
        FormulaId::ThreeStateInvariantPhase,
        value,
    ))
}

/// Equal priors and three equal real overlaps `s`: `1 - s`.
pub fn three_state_symmetric_real(s: f64) -> Result<ClosedFormResult> {
    if !(s > 0.0 && s < 1.0) {
        return Err(UsdError::InvalidArgument(format!(
            "overlap {s} is not in (0, 1)"
        )));
    }
    Ok(ClosedFormResult::applies(
        FormulaId::ThreeStateSymmetricReal,
        1.0 - s,
    ))
}

/// Evaluates every form's predicate on the instance, applicable or not.
pub fn evaluate_all(set: &StateSet) -> Vec<ClosedFormResult> {
    let g = set.gram();
    let p = set.priors();
    vec![
        two_state_for(&g, p),
        one_orthogonal_for(&g, p),
        invariant_phase_for(&g, p),
        symmetric_real_for(&g, p),
    ]
}

/// Only the forms that apply.
pub fn applicable_forms(set: &StateSet) -> Vec<ClosedFormResult> {
    evaluate_all(set)
        .into_iter()
        .filter(|r| r.is_applicable())
        .collect()
}

fn or_reject(formula: FormulaId, r: Result<ClosedFormResult>) -> ClosedFormResult {
    r.unwrap_or_else(|e| ClosedFormResult::rejects(formula, e.to_string()))
}

fn two_state_for(g: &GramData, p: &[f64]) -> ClosedFormResult {
    let id = FormulaId::TwoState;
    if g.len() != 2 {
        return ClosedFormResult::rejects(id, "needs exactly two states");
    }
    or_reject(id, two_state_bound(p[0], p[1], g.modulus(0, 1)))
}

fn one_orthogonal_for(g: &GramData, p: &[f64]) -> ClosedFormResult {
    let id = FormulaId::ThreeStateOneOrthogonal;
    if g.len() != 3 {
        return ClosedFormResult::rejects(id, "needs exactly three states");
    }
    // Relabel so the orthogonal pair comes first.
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let Some(&(a, b, c)) = pairs
        .iter()
        .find(|(a, b, _)| g.modulus(*a, *b) <= STRUCTURE_TOL)
    else {
        return ClosedFormResult::rejects(id, "no pair of states is orthogonal");
    };
    or_reject(
        id,
        three_state_one_orthogonal([p[a], p[b], p[c]], g.modulus(a, c), g.modulus(b, c)),
    )
}

fn invariant_phase_for(g: &GramData, p: &[f64]) -> ClosedFormResult {
    let id = FormulaId::ThreeStateInvariantPhase;
    if g.len() != 3 {
        return ClosedFormResult::rejects(id, "needs exactly three states");
    }
    let moduli = [g.modulus(0, 1), g.modulus(0, 2), g.modulus(1, 2)];
    if moduli.iter().any(|&m| m <= STRUCTURE_TOL) && moduli.iter().any(|&m| m > STRUCTURE_TOL) {
        return ClosedFormResult::rejects(id, "invariant phase undefined: a vanishing overlap");
    }
    let phases = [g.phase(0, 1), g.phase(0, 2), g.phase(1, 2)];
    or_reject(
        id,
        three_state_invariant_phase([p[0], p[1], p[2]], moduli, phases),
    )
}

fn symmetric_real_for(g: &GramData, p: &[f64]) -> ClosedFormResult {
    let id = FormulaId::ThreeStateSymmetricReal;
    if g.len() != 3 {
        return ClosedFormResult::rejects(id, "needs exactly three states");
    }
    if p.iter().any(|&x| (x - 1.0 / 3.0).abs() > STRUCTURE_TOL) {
        return ClosedFormResult::rejects(id, "priors are not equal");
    }
    let m = g.matrix();
    let s = m[(0, 1)].re;
    let equal_real = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .all(|&(i, j)| (m[(i, j)] - Complex64::new(s, 0.0)).norm() <= STRUCTURE_TOL);
    if !equal_real {
        return ClosedFormResult::rejects(id, "overlaps are not real and equal");
    }
    or_reject(id, three_state_symmetric_real(s))
}

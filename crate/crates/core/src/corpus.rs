//! Built-in regression corpus of literature instances with known values.

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_forms;
use crate::error::{Result, UsdError};
use crate::phase_bound::minimize_bound;
use crate::schmidt;
use crate::solver::{solve_optimal, SolutionLabel, SolverConfig};
use crate::stateset::StateSet;

/// Tolerance for values quoted to four decimals in the literature.
pub const PRINTED_TOL: f64 = 5e-4;
/// Tolerance for identities routed through the numerical minimizer.
pub const MINIMIZER_TOL: f64 = 2e-6;
/// Tolerance for exact optimum values against the barrier solver.
pub const SOLVER_TOL: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Expected {
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub name: String,
    pub instance: StateSet,
    pub expected_bound: Option<Expected>,
    pub expected_p_opt: Option<Expected>,
    pub expected_class: Option<SolutionLabel>,
    /// Lower limit on `bound - p_opt`, for cases where the bound is strict.
    pub min_bound_gap: Option<f64>,
    pub provenance: String,
}

fn exp(value: f64, tol: f64) -> Option<Expected> {
    Some(Expected { value, tol })
}

/// The three-state boundary instance with uniform priors.
pub fn example1_states() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.0, 0.0],
        vec![1.0, 1.0, 1.0],
        vec![1.0, 1.0, -1.0],
    ]
}

/// The three-state instance shared by the interior-singular and strict-gap cases.
pub fn example2_states() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.0, 0.0],
        vec![1.0, 2.0, 0.0],
        vec![2.0, 2.0, 3.0],
    ]
}

/// `example1_states` embedded in `R^4` plus a fourth orthogonal state.
pub fn example1_extended(p: f64) -> Result<StateSet> {
    let mut states: Vec<Vec<f64>> = example1_states()
        .into_iter()
        .map(|mut s| {
            s.push(0.0);
            s
        })
        .collect();
    states.push(vec![0.0, 0.0, 0.0, 1.0]);
    let q = (1.0 - p) / 3.0;
    StateSet::from_real(&states, vec![q, q, q, p])
}

/// Four geometrically uniform states `U_i psi` for the sign-flip group.
pub fn four_state_gu() -> Result<StateSet> {
    let psi = [2.0, 2.0, 1.0, 3.0];
    let signs = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let states: Vec<Vec<f64>> = signs
        .iter()
        .map(|u| u.iter().zip(psi).map(|(a, b)| a * b).collect())
        .collect();
    StateSet::from_real(&states, vec![0.25; 4])
}

/// Two real states with overlap `s`.
pub fn two_state(s: f64, p1: f64) -> Result<StateSet> {
    StateSet::from_real(
        &[vec![1.0, 0.0], vec![s, (1.0 - s * s).sqrt()]],
        vec![p1, 1.0 - p1],
    )
}

/// Three states with all pairwise overlaps equal to the real number `s`.
pub fn symmetric_three(s: f64) -> Result<StateSet> {
    let z = crate::Complex64::new(s, 0.0);
    let one = crate::Complex64::new(1.0, 0.0);
    let gram = crate::CMatrix::from_fn(3, 3, |i, j| if i == j { one } else { z });
    StateSet::from_gram(&gram, vec![1.0 / 3.0; 3])
}

/// Every case, sorted by name.
pub fn builtin_corpus() -> Result<Vec<CorpusCase>> {
    let third = 1.0 / 3.0;
    let mut cases = vec![
        CorpusCase {
            name: "example1".into(),
            instance: StateSet::from_real(&example1_states(), vec![third; 3])?,
            expected_bound: exp(0.4444, PRINTED_TOL),
            expected_p_opt: exp(4.0 / 9.0, 1e-4),
            expected_class: Some(SolutionLabel::Boundary),
            min_bound_gap: None,
            provenance: "Sun, Zhang, Guo, Gui (2001): gamma_opt = (0, 2/3, 2/3), P_opt = 4/9"
                .into(),
        },
        CorpusCase {
            name: "example2".into(),
            instance: StateSet::from_real(&example2_states(), vec![0.30, 0.35, 0.35])?,
            expected_bound: exp(0.4430, PRINTED_TOL),
            expected_p_opt: exp(0.4430, PRINTED_TOL),
            expected_class: Some(SolutionLabel::InteriorSingular),
            min_bound_gap: None,
            provenance: "Pang and Wu (2009): interior singular optimum, P_opt = 0.4430".into(),
        },
        CorpusCase {
            name: "example3".into(),
            instance: StateSet::from_real(&example2_states(), vec![0.10, 0.80, 0.10])?,
            expected_bound: exp(0.4758, PRINTED_TOL),
            expected_p_opt: exp(0.4632, PRINTED_TOL),
            expected_class: Some(SolutionLabel::Boundary),
            min_bound_gap: Some(0.01),
            provenance:
                "Pang and Wu (2009): boundary optimum, P_opt = 0.4632 below the bound 0.4758".into(),
        },
        CorpusCase {
            name: "four-state-gu".into(),
            instance: four_state_gu()?,
            expected_bound: exp(0.2222, PRINTED_TOL),
            expected_p_opt: exp(2.0 / 9.0, PRINTED_TOL),
            expected_class: None,
            min_bound_gap: None,
            provenance: "Eldar (2003): geometrically uniform states, P_opt = 2/9".into(),
        },
    ];
    for p in [0.2, 0.5, 0.8] {
        cases.push(CorpusCase {
            name: format!("example1-n4-p{p:.1}"),
            instance: example1_extended(p)?,
            expected_bound: exp(p + 0.4444 * (1.0 - p), PRINTED_TOL),
            expected_p_opt: exp(p + 4.0 / 9.0 * (1.0 - p), PRINTED_TOL),
            expected_class: Some(SolutionLabel::Boundary),
            min_bound_gap: None,
            provenance: "extension of Sun et al. (2001) by an orthogonal fourth state: gamma_opt = (0, 2/3, 2/3, 1)"
                .into(),
        });
    }
    for s in [0.2, 0.5, 0.8] {
        cases.push(CorpusCase {
            name: format!("two-state-s{s:.1}"),
            instance: two_state(s, 0.5)?,
            expected_bound: exp(1.0 - s, MINIMIZER_TOL),
            expected_p_opt: exp(1.0 - s, SOLVER_TOL),
            expected_class: None,
            min_bound_gap: None,
            provenance: "Ivanovic (1987), Dieks (1988), Peres (1988): P_opt = 1 - |<psi_1|psi_2>|"
                .into(),
        });
    }
    for s in [0.1, 0.3, 0.5] {
        cases.push(CorpusCase {
            name: format!("symmetric-s{s:.1}"),
            instance: symmetric_three(s)?,
            expected_bound: exp(1.0 - s, MINIMIZER_TOL),
            expected_p_opt: exp(1.0 - s, SOLVER_TOL),
            expected_class: None,
            min_bound_gap: None,
            provenance: "Sun, Zhang, Guo, Gui (2001): equal real overlaps s, P_opt = 1 - s".into(),
        });
    }
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn near(name: &str, computed: f64, expected: f64, tol: f64) -> Self {
        Check {
            name: name.into(),
            computed,
            expected,
            tol,
            pass: (computed - expected).abs() <= tol,
        }
    }

    fn at_least(name: &str, computed: f64, floor: f64) -> Self {
        Check {
            name: name.into(),
            computed,
            expected: floor,
            tol: 0.0,
            pass: computed > floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub provenance: String,
    pub bound: f64,
    pub expected_bound: Option<f64>,
    pub p_opt: f64,
    pub expected_p_opt: Option<f64>,
    pub gamma_opt: Vec<f64>,
    pub class: SolutionLabel,
    pub expected_class: Option<SolutionLabel>,
    pub bound_gap: f64,
    /// `|min_k ||eta_k||^2 - bound|` at the bound's argmin.
    pub schmidt_residual: f64,
    /// Largest `|closed form - bound|` over applicable forms.
    pub closed_form_residual: Option<f64>,
    pub checks: Vec<Check>,
    pub class_pass: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub seed: u64,
    pub cases: Vec<CaseReport>,
    pub all_pass: bool,
}

fn matches(pattern: &str, name: &str) -> bool {
    if !pattern.contains('*') {
        return name.contains(pattern);
    }
    // Glob with `*` only.
    let parts: Vec<&str> = pattern.split('*').collect();
    let mut rest = name;
    for (i, part) in parts.iter().enumerate() {
        if i == 0 {
            let Some(r) = rest.strip_prefix(part) else {
                return false;
            };
            rest = r;
        } else if i == parts.len() - 1 {
            return rest.ends_with(part);
        } else if let Some(pos) = rest.find(part) {
            rest = &rest[pos + part.len()..];
        } else {
            return false;
        }
    }
    rest.is_empty()
}

/// Validates a case-name filter: a substring or a `*` glob over
/// `[a-z0-9.-]`.
pub fn validate_filter(pattern: &str) -> Result<()> {
    let ok = !pattern.is_empty()
        && pattern
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || "-.*".contains(c));
    if ok {
        Ok(())
    } else {
        Err(UsdError::UnknownFilter(pattern.to_string()))
    }
}

pub fn run_case(case: &CorpusCase, cfg: &SolverConfig) -> Result<CaseReport> {
    let set = &case.instance;
    let bound = minimize_bound(set, &cfg.minimizer)?;
    let solved = solve_optimal(set, cfg)?;

    let conversion = schmidt::conversion_probability(set, &bound.argmin)?;
    let spectrum = schmidt::schmidt_spectrum(set, &bound.argmin)?;
    let vidal = schmidt::vidal_probability(&spectrum);
    let schmidt_residual = (conversion - bound.value)
        .abs()
        .max((vidal - conversion).abs());

    let closed_form_residual = closed_forms::applicable_forms(set)
        .iter()
        .filter_map(|r| r.value)
        .map(|v| (v - bound.value).abs())
        .reduce(f64::max);

    let mut checks = Vec::new();
    if let Some(e) = &case.expected_bound {
        checks.push(Check::near("bound", bound.value, e.value, e.tol));
    }
    if let Some(e) = &case.expected_p_opt {
        checks.push(Check::near("p_opt", solved.p_opt, e.value, e.tol));
    }
    if let Some(floor) = case.min_bound_gap {
        checks.push(Check::at_least(
            "bound_gap",
            bound.value - solved.p_opt,
            floor,
        ));
    }
    checks.push(Check::near("schmidt", schmidt_residual, 0.0, MINIMIZER_TOL));
    if let Some(r) = closed_form_residual {
        checks.push(Check::near("closed_form", r, 0.0, MINIMIZER_TOL));
    }
    // Bound dominance holds for every instance.
    checks.push(Check {
        name: "dominance".into(),
        computed: solved.p_opt,
        expected: bound.value,
        tol: MINIMIZER_TOL,
        pass: solved.p_opt <= bound.value + MINIMIZER_TOL,
    });
    let class_pass = case.expected_class.is_none_or(|c| c == solved.class.label);
    let pass = class_pass && solved.povm_valid && checks.iter().all(|c| c.pass);

    Ok(CaseReport {
        name: case.name.clone(),
        provenance: case.provenance.clone(),
        bound: bound.value,
        expected_bound: case.expected_bound.as_ref().map(|e| e.value),
        p_opt: solved.p_opt,
        expected_p_opt: case.expected_p_opt.as_ref().map(|e| e.value),
        gamma_opt: solved.gamma_opt.gamma.clone(),
        class: solved.class.label,
        expected_class: case.expected_class,
        bound_gap: bound.value - solved.p_opt,
        schmidt_residual,
        closed_form_residual,
        checks,
        class_pass,
        pass,
    })
}

/// Runs every case whose name matches `filter`; rows come back sorted by name.
pub fn run_corpus(filter: Option<&str>, cfg: &SolverConfig) -> Result<CorpusReport> {
    if let Some(f) = filter {
        validate_filter(f)?;
    }
    let cases: Vec<CorpusCase> = builtin_corpus()?
        .into_iter()
        .filter(|c| filter.is_none_or(|f| matches(f, &c.name)))
        .collect();
    let mut rows = cases
        .par_iter()
        .map(|c| run_case(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(CorpusReport {
        seed: cfg.minimizer.seed,
        cases: rows,
        all_pass,
    })
}

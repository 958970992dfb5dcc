//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use usd_core::closed_forms;
use usd_core::corpus::{
    example1_extended, example1_states, example2_states, four_state_gu, symmetric_three,
};
use usd_core::phase_bound::{minimize_bound, MinimizerConfig, PhaseVector};
use usd_core::schmidt::{
    check_phase_shift_equivalence, conversion_probability, eta_family, minimize_eta_norm,
    schmidt_spectrum, smallest_coefficient_probability, vidal_min_tail, vidal_probability,
    SchmidtSpectrum,
};
use usd_core::solver::{
    brute_force_oracle, reconstruct_povm, solve_optimal, GammaPoint, SolutionLabel, SolverConfig,
};
use usd_core::{CVector, Complex64, StateSet};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> StateSet {
    loop {
        let states = (0..n)
            .map(|_| {
                CVector::from_fn(dim, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        let priors = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        if let Ok(set) = StateSet::new_normalized(states, priors) {
            return set;
        }
    }
}

fn two_state_complex(p1: f64, overlap: f64, phase: f64) -> StateSet {
    let z = Complex64::from_polar(overlap, phase);
    let states = vec![
        CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
        CVector::from_vec(vec![
            z,
            Complex64::new((1.0 - overlap * overlap).sqrt(), 0.0),
        ]),
    ];
    StateSet::new(states, vec![p1, 1.0 - p1]).unwrap()
}

fn example1() -> StateSet {
    StateSet::from_real(&example1_states(), vec![1.0 / 3.0; 3]).unwrap()
}

fn criterion_1() -> Outcome {
    let set = example1();
    let bound = minimize_bound(&set, &MinimizerConfig::default())
        .unwrap()
        .value;
    let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
    ensure((bound - 0.4444).abs() <= 5e-4, format!("bound {bound}"))?;
    ensure(
        (r.p_opt - 4.0 / 9.0).abs() <= 1e-4,
        format!("p_opt {}", r.p_opt),
    )?;
    let want = [0.0, 2.0 / 3.0, 2.0 / 3.0];
    let dev = r
        .gamma_opt
        .gamma
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(dev <= 1e-4, format!("gamma deviation {dev}"))?;
    ensure(
        r.class.label == SolutionLabel::Boundary,
        format!("class {}", r.class.label),
    )?;
    Ok(format!(
        "bound {bound:.6}, p_opt {:.6}, gamma dev {dev:.1e}, boundary",
        r.p_opt
    ))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.2, 0.5, 0.8] {
        let set = example1_extended(p).unwrap();
        let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
        let want_opt = p + 4.0 / 9.0 * (1.0 - p);
        let want_bound = p + 0.4444 * (1.0 - p);
        ensure(
            (r.p_opt - want_opt).abs() <= 5e-4,
            format!("p={p}: p_opt {}", r.p_opt),
        )?;
        ensure(
            (r.bound - want_bound).abs() <= 5e-4,
            format!("p={p}: bound {}", r.bound),
        )?;
        worst = worst
            .max((r.p_opt - want_opt).abs())
            .max((r.bound - want_bound).abs());
    }
    Ok(format!(
        "p in {{0.2, 0.5, 0.8}}, worst deviation {worst:.1e}"
    ))
}

fn criterion_3() -> Outcome {
    let set = StateSet::from_real(&example2_states(), vec![0.30, 0.35, 0.35]).unwrap();
    let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
    ensure(
        (r.bound - 0.4430).abs() <= 5e-4,
        format!("bound {}", r.bound),
    )?;
    ensure(
        (r.p_opt - 0.4430).abs() <= 5e-4,
        format!("p_opt {}", r.p_opt),
    )?;
    ensure(
        r.class.label == SolutionLabel::InteriorSingular,
        format!("class {}", r.class.label),
    )?;
    Ok(format!(
        "bound {:.6}, p_opt {:.6}, interior-singular",
        r.bound, r.p_opt
    ))
}

fn criterion_4() -> Outcome {
    let set = StateSet::from_real(&example2_states(), vec![0.10, 0.80, 0.10]).unwrap();
    let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
    ensure(
        (r.bound - 0.4758).abs() <= 5e-4,
        format!("bound {}", r.bound),
    )?;
    ensure(
        (r.p_opt - 0.4632).abs() <= 5e-4,
        format!("p_opt {}", r.p_opt),
    )?;
    ensure(r.bound_gap > 0.01, format!("gap {}", r.bound_gap))?;
    Ok(format!(
        "bound {:.6}, p_opt {:.6}, gap {:.4}",
        r.bound, r.p_opt, r.bound_gap
    ))
}

fn criterion_5() -> Outcome {
    let set = four_state_gu().unwrap();
    let bound = minimize_bound(&set, &MinimizerConfig::default())
        .unwrap()
        .value;
    ensure((bound - 0.2222).abs() <= 5e-4, format!("bound {bound}"))?;
    Ok(format!("bound {bound:.8} (2/9 = {:.8})", 2.0 / 9.0))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = MinimizerConfig::default();
    let mut worst_bound: f64 = 0.0;
    for _ in 0..200 {
        let p1 = rng.random_range(0.02..0.98);
        let s = rng.random_range(0.0..0.95);
        let set = two_state_complex(p1, s, rng.random_range(-3.0..3.0));
        let got = minimize_bound(&set, &cfg).unwrap().value;
        let want = closed_forms::two_state_bound(p1, 1.0 - p1, set.gram().modulus(0, 1))
            .unwrap()
            .value
            .unwrap();
        worst_bound = worst_bound.max((got - want).abs());
    }
    ensure(
        worst_bound <= 1e-10,
        format!("bound deviation {worst_bound:e}"),
    )?;
    let mut worst_opt: f64 = 0.0;
    for _ in 0..20 {
        let s = rng.random_range(0.0..0.95);
        let set = two_state_complex(0.5, s, rng.random_range(-3.0..3.0));
        let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
        worst_opt = worst_opt.max((r.p_opt - (1.0 - set.gram().modulus(0, 1))).abs());
    }
    ensure(worst_opt <= 1e-5, format!("p_opt deviation {worst_opt:e}"))?;
    Ok(format!(
        "bound dev {worst_bound:.1e} (200), equal-prior p_opt dev {worst_opt:.1e} (20)"
    ))
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in [0.1, 0.3, 0.5] {
        let set = symmetric_three(s).unwrap();
        let b = minimize_bound(&set, &MinimizerConfig::default())
            .unwrap()
            .value;
        worst = worst.max((b - (1.0 - s)).abs());
    }
    ensure(worst <= 2e-6, format!("deviation {worst:e}"))?;
    Ok(format!(
        "s in {{0.1, 0.3, 0.5}}, worst deviation {worst:.1e}"
    ))
}

/// Shared by criteria 8 and 9.
fn random_solutions() -> Vec<(usize, f64, f64, SolutionLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    (0..100)
        .map(|i| {
            let n = 2 + i % 3;
            let dim = n + rng.random_range(0..2);
            let set = random_set(&mut rng, n, dim);
            let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
            (n, r.p_opt, r.bound, r.class.label)
        })
        .collect()
}

fn criterion_8(runs: &[(usize, f64, f64, SolutionLabel)]) -> Outcome {
    let worst = runs
        .iter()
        .map(|(_, p, b, _)| p - b)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(worst <= 2e-6, format!("p_opt exceeds bound by {worst:e}"))?;
    Ok(format!(
        "{} instances, max(p_opt - bound) = {worst:.1e}",
        runs.len()
    ))
}

fn criterion_9(runs: &[(usize, f64, f64, SolutionLabel)]) -> Outcome {
    let subset: Vec<_> = runs
        .iter()
        .filter(|r| r.3 == SolutionLabel::InteriorNonsingular)
        .collect();
    ensure(
        !subset.is_empty(),
        "no interior nonsingular instance in the sample",
    )?;
    let worst = subset
        .iter()
        .map(|(_, p, b, _)| (p - b).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-5, format!("saturation gap {worst:e}"))?;
    Ok(format!(
        "{} nonsingular instances, max |p_opt - bound| = {worst:.1e}",
        subset.len()
    ))
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let d = rng.random_range(1..12);
        let raw: Vec<f64> = (0..d).map(|_| rng.random_range(1e-3..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut coeffs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        coeffs.sort_by(|a, b| b.total_cmp(a));
        let spec = SchmidtSpectrum::new(coeffs).unwrap();
        worst = worst.max((vidal_min_tail(&spec) - smallest_coefficient_probability(&spec)).abs());
    }
    ensure(worst <= 1e-12, format!("tail identity deviation {worst:e}"))?;
    let mut worst_conv: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..6);
        let set = random_set(&mut rng, n, n);
        let free: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..6.3)).collect();
        let theta = PhaseVector::from_free(&free);
        let conv = conversion_probability(&set, &theta).unwrap();
        let vidal = vidal_probability(&schmidt_spectrum(&set, &theta).unwrap());
        worst_conv = worst_conv.max((conv - vidal).abs());
    }
    ensure(
        worst_conv <= 1e-12,
        format!("conversion deviation {worst_conv:e}"),
    )?;
    Ok(format!(
        "spectra dev {worst:.1e} (500), conversion dev {worst_conv:.1e} (100)"
    ))
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = MinimizerConfig::default();
    let (mut spread, mut residual, mut norm_dev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..100 {
        let n = 2 + i % 3;
        let set = random_set(&mut rng, n, n);
        let minima: Vec<f64> = (0..n)
            .map(|k| minimize_eta_norm(&set, k, &cfg).unwrap().value)
            .collect();
        let lo = minima.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = minima.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        spread = spread.max(hi - lo);
        let free: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..6.3)).collect();
        let theta = PhaseVector::from_free(&free);
        for k in 0..n {
            let r = check_phase_shift_equivalence(&set, k, &theta).unwrap();
            residual = residual.max(r.difference.abs());
        }
        let fam = eta_family(&set, &theta).unwrap();
        norm_dev = norm_dev.max((fam.norms_sq.iter().sum::<f64>() - n as f64).abs());
    }
    ensure(spread <= 2e-6, format!("per-k minima spread {spread:e}"))?;
    ensure(
        residual < 1e-12,
        format!("phase-shift residual {residual:e}"),
    )?;
    ensure(
        norm_dev <= 1e-10,
        format!("normalization deviation {norm_dev:e}"),
    )?;
    Ok(format!(
        "minima spread {spread:.1e}, shift residual {residual:.1e}, norm dev {norm_dev:.1e}"
    ))
}

fn criterion_12() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut feasible_count, mut worst_eq1): (usize, f64) = (0, 0.0);
    for _ in 0..20 {
        let n = rng.random_range(2..5);
        let dim = n + rng.random_range(0..2);
        let set = random_set(&mut rng, n, dim);
        let g = set.gram();
        for _ in 0..10 {
            let dir: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            // Largest feasible scale along `dir`, then sample on both sides.
            let (mut lo, mut hi) = (0.0, 1.0 / dir.iter().copied().fold(0.0, f64::max));
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let pt: Vec<f64> = dir.iter().map(|d| d * mid).collect();
                if GammaPoint::evaluate(&g, pt).unwrap().sigma_min >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let scale = lo * rng.random_range(0.0..2.0);
            let gamma: Vec<f64> = dir.iter().map(|d| d * scale).collect();
            let point = GammaPoint::evaluate(&g, gamma.clone()).unwrap();
            let report = reconstruct_povm(&set, &gamma).unwrap();
            ensure(
                point.feasible == report.valid,
                format!(
                    "sigma_min {} but POVM valid = {} ({report:?})",
                    point.sigma_min, report.valid
                ),
            )?;
            if point.feasible {
                feasible_count += 1;
                worst_eq1 = worst_eq1.max(report.success_residual);
            }
        }
    }
    ensure(
        worst_eq1 < 1e-9,
        format!("success-condition residual {worst_eq1:e}"),
    )?;
    Ok(format!(
        "200 points ({feasible_count} feasible) agree, max residual {worst_eq1:.1e}"
    ))
}

fn criterion_13() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let set = random_set(&mut rng, 3, 3);
        let r = solve_optimal(&set, &SolverConfig::default()).unwrap();
        let oracle = brute_force_oracle(&set, 60).unwrap().value;
        ensure(
            oracle <= r.p_opt + 1e-9,
            format!("oracle {oracle} above p_opt {}", r.p_opt),
        )?;
        worst = worst.max((r.p_opt - oracle).abs());
    }
    ensure(worst <= 0.02, format!("oracle gap {worst}"))?;
    Ok(format!("20 instances, max |p_opt - oracle| = {worst:.4}"))
}

fn main() {
    let started = Instant::now();
    let runs = random_solutions();
    let criteria: Vec<Criterion> = vec![
        (
            "1 example I bound, optimum and class",
            Box::new(criterion_1),
        ),
        ("2 example I four-state extension", Box::new(criterion_2)),
        ("3 example II interior singular", Box::new(criterion_3)),
        ("4 example III strict gap", Box::new(criterion_4)),
        ("5 four geometrically uniform states", Box::new(criterion_5)),
        ("6 two-state closed form", Box::new(criterion_6)),
        ("7 symmetric three-state form", Box::new(criterion_7)),
        ("8 bound dominates optimum", Box::new(|| criterion_8(&runs))),
        (
            "9 saturation at nonsingular optima",
            Box::new(|| criterion_9(&runs)),
        ),
        (
            "10 conversion probability identities",
            Box::new(criterion_10),
        ),
        ("11 equality of eta minima", Box::new(criterion_11)),
        (
            "12 feasibility equals POVM positivity",
            Box::new(criterion_12),
        ),
        ("13 grid oracle cross-check", Box::new(criterion_13)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Phase-minimization upper bound on the optimal success probability.
//!
//! For states `psi_j` with priors `p_j` the quantity
//!
//! ```text
//! F(theta) = || sum_j sqrt(p_j) e^{i theta_j} psi_j ||^2
//!          = 1 + sum_{i<j} 2 sqrt(p_i p_j) |G_ij| cos(theta_j - theta_i + phi_ij)
//! ```
//!
//! bounds the optimal average success probability from above for every
//! choice of phases, so its minimum over the torus is the bound. Only relative
//! phases matter; `theta_1` is pinned to zero and the remaining `N - 1` are
//! searched by multi-start gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Result, UsdError};
use crate::stateset::{GramData, StateSet};

/// Phases `theta_1..theta_N` with `theta_1 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    /// Builds from the free phases `theta_2..theta_N`.
    pub fn from_free(free: &[f64]) -> Self {
        let mut v = Vec::with_capacity(free.len() + 1);
        v.push(0.0);
        v.extend_from_slice(free);
        PhaseVector(v)
    }

    /// Takes a full vector; fails unless the first entry is exactly 0.
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        match thetas.first() {
            Some(0.0) => Ok(PhaseVector(thetas)),
            Some(_) => Err(UsdError::InvalidArgument(
                "the first phase must be 0".into(),
            )),
            None => Err(UsdError::InvalidArgument("empty phase vector".into())),
        }
    }

    pub fn zeros(n: usize) -> Self {
        PhaseVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn free(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pairwise form of `F`, optionally evaluated at `theta + offset`.
///
/// The offset lets the same machinery minimize `||eta_k||^2`, which is `F`
/// at phases shifted by `2 pi (r-1)(k-1)/N`.
#[derive(Debug, Clone)]
pub struct PhaseObjective {
    n: usize,
    // (i, j, 2 sqrt(p_i p_j) |G_ij|, phi_ij) for i < j with nonzero weight
    terms: Vec<(usize, usize, f64, f64)>,
    offsets: Vec<f64>,
    initial_phases: Vec<f64>,
}

impl PhaseObjective {
    pub fn new(g: &GramData, priors: &[f64]) -> Result<Self> {
        let n = g.len();
        if priors.len() != n {
            return Err(UsdError::DimensionMismatch {
                expected: n,
                got: priors.len(),
            });
        }
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = 2.0 * (priors[i] * priors[j]).sqrt() * g.modulus(i, j);
                if w > 0.0 {
                    terms.push((i, j, w, g.phase(i, j)));
                }
            }
        }
        // theta_j = pi - phi_1j makes every term involving state 1 equal to -w.
        let initial_phases = (0..n)
            .map(|j| if j == 0 { 0.0 } else { PI - g.phase(0, j) })
            .collect();
        Ok(PhaseObjective {
            n,
            terms,
            offsets: vec![0.0; n],
            initial_phases,
        })
    }

    /// Evaluates at `theta + offsets` instead of `theta`.
    pub fn shifted(mut self, offsets: Vec<f64>) -> Result<Self> {
        if offsets.len() != self.n {
            return Err(UsdError::DimensionMismatch {
                expected: self.n,
                got: offsets.len(),
            });
        }
        self.initial_phases = self
            .initial_phases
            .iter()
            .zip(&offsets)
            .map(|(t, o)| t - o)
            .collect();
        self.offsets = offsets;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True when every pairwise weight vanishes, so `F == 1`.
    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n {
            return Err(UsdError::DimensionMismatch {
                expected: self.n,
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// `F` at the full phase vector `theta` (any `theta_1` allowed).
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(self.value_unchecked(theta))
    }

    /// `dF/dtheta_k` for `k = 2..N`.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        let mut full = vec![0.0; self.n];
        self.gradient_full(theta, &mut full);
        Ok(full[1..].to_vec())
    }

    fn value_unchecked(&self, theta: &[f64]) -> f64 {
        let t = |k: usize| theta[k] + self.offsets[k];
        1.0 + self
            .terms
            .iter()
            .map(|&(i, j, w, phi)| w * (t(j) - t(i) + phi).cos())
            .sum::<f64>()
    }

    fn gradient_full(&self, theta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let t = |k: usize| theta[k] + self.offsets[k];
        for &(i, j, w, phi) in &self.terms {
            let s = w * (t(j) - t(i) + phi).sin();
            out[j] -= s;
            out[i] += s;
        }
    }

    fn value_free(&self, free: &[f64], buf: &mut [f64]) -> f64 {
        buf[0] = 0.0;
        buf[1..].copy_from_slice(free);
        self.value_unchecked(buf)
    }

    fn gradient_free(&self, free: &[f64], buf: &mut [f64], grad: &mut [f64]) {
        buf[0] = 0.0;
        buf[1..].copy_from_slice(free);
        let mut full = vec![0.0; self.n];
        self.gradient_full(buf, &mut full);
        grad.copy_from_slice(&full[1..]);
    }
}

/// `||sum_j sqrt(p_j) e^{i theta_j} psi_j||^2` via the pairwise form.
pub fn objective(g: &GramData, priors: &[f64], theta: &PhaseVector) -> Result<f64> {
    PhaseObjective::new(g, priors)?.value(theta.as_slice())
}

/// Analytic gradient of [`objective`] in `theta_2..theta_N`.
pub fn objective_gradient(g: &GramData, priors: &[f64], theta: &PhaseVector) -> Result<Vec<f64>> {
    PhaseObjective::new(g, priors)?.gradient(theta.as_slice())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerConfig {
    /// Random starts in addition to the deterministic one.
    pub starts: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            starts: 64,
            seed: 42,
            grad_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub value: f64,
    pub argmin: PhaseVector,
    pub starts_used: usize,
    pub best_gradient_norm: f64,
    pub converged: bool,
}

/// Minimizes `F` over `theta_2..theta_N`, giving the upper bound on `P_opt`.
pub fn minimize_bound(set: &StateSet, cfg: &MinimizerConfig) -> Result<BoundResult> {
    let obj = PhaseObjective::new(&set.gram(), set.priors())?;
    minimize_phases(&obj, cfg)
}

/// Start points used by [`minimize_phases`], deterministic start first.
pub fn start_points(obj: &PhaseObjective, cfg: &MinimizerConfig) -> Vec<PhaseVector> {
    let n = obj.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.starts + 1);
    out.push(PhaseVector::from_free(&obj.initial_phases[1..]));
    for _ in 0..cfg.starts {
        let free: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        out.push(PhaseVector::from_free(&free));
    }
    out
}

/// Multi-start minimization of a [`PhaseObjective`].
///
/// The reduction is by smallest value with ties going to the lowest start
/// index, so the result does not depend on thread scheduling.
pub fn minimize_phases(obj: &PhaseObjective, cfg: &MinimizerConfig) -> Result<BoundResult> {
    let n = obj.len();
    if obj.is_constant() || n < 2 {
        return Ok(BoundResult {
            value: 1.0,
            argmin: PhaseVector::zeros(n),
            starts_used: 0,
            best_gradient_norm: 0.0,
            converged: true,
        });
    }
    let starts = start_points(obj, cfg);
    let runs: Vec<LocalRun> = starts
        .par_iter()
        .map(|s| descend(obj, s.free(), cfg))
        .collect();
    let (_, best) = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.value.total_cmp(&b.value).then(ia.cmp(ib)))
        .expect("at least one start");
    Ok(BoundResult {
        value: best.value,
        argmin: PhaseVector::from_free(
            &best
                .point
                .iter()
                .map(|&t| wrap_angle(t))
                .collect::<Vec<_>>(),
        ),
        starts_used: starts.len(),
        best_gradient_norm: best.gradient_norm,
        converged: best.converged,
    })
}

struct LocalRun {
    point: Vec<f64>,
    value: f64,
    gradient_norm: f64,
    converged: bool,
}

/// Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
fn descend(obj: &PhaseObjective, start: &[f64], cfg: &MinimizerConfig) -> LocalRun {
    let m = start.len();
    let mut buf = vec![0.0; obj.len()];
    let mut x = start.to_vec();
    let mut grad = vec![0.0; m];
    let mut f = obj.value_free(&x, &mut buf);
    obj.gradient_free(&x, &mut buf, &mut grad);
    let mut step = 1.0;
    let mut trial = vec![0.0; m];
    let mut trial_grad = vec![0.0; m];

    for _ in 0..cfg.max_iter {
        let gnorm_sq: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm_sq.sqrt() <= cfg.grad_tol {
            return LocalRun {
                point: x,
                value: f,
                gradient_norm: gnorm_sq.sqrt(),
                converged: true,
            };
        }
        // Round-off slack: near the minimum the decrease is below machine
        // precision, so plain Armijo would stall before the gradient test.
        let slack = 4.0 * f64::EPSILON * f.abs().max(1.0);
        let mut alpha = step;
        let mut accepted = false;
        for _ in 0..80 {
            for k in 0..m {
                trial[k] = x[k] - alpha * grad[k];
            }
            let ft = obj.value_free(&trial, &mut buf);
            if ft <= f - 1e-4 * alpha * gnorm_sq + slack {
                accepted = true;
                obj.gradient_free(&trial, &mut buf, &mut trial_grad);
                let (mut sy, mut ss) = (0.0, 0.0);
                for k in 0..m {
                    let s = trial[k] - x[k];
                    sy += s * (trial_grad[k] - grad[k]);
                    ss += s * s;
                }
                step = if sy > 0.0 {
                    (ss / sy).clamp(1e-6, 1e6)
                } else {
                    (2.0 * alpha).min(1e6)
                };
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                f = ft;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    LocalRun {
        point: x,
        value: f,
        gradient_norm: gnorm,
        converged: gnorm <= cfg.grad_tol,
    }
}

/// Maps an angle into `[0, 2 pi)`.
fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CVector;
    use num_complex::Complex64;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    /// Direct evaluation of the vector norm, independent of the pairwise form.
    fn direct_norm(set: &StateSet, theta: &[f64]) -> f64 {
        let mut v = CVector::zeros(set.dim());
        for (j, psi) in set.states().iter().enumerate() {
            v += psi * Complex64::from_polar(set.priors()[j].sqrt(), theta[j]);
        }
        v.norm_squared()
    }

    fn random_set(seed: u64, n: usize, dim: usize) -> StateSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..n)
            .map(|_| {
                CVector::from_fn(dim, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        let priors = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        StateSet::new_normalized(states, priors).unwrap()
    }

    fn example_one() -> StateSet {
        StateSet::from_real(
            &[
                vec![1.0, 0.0, 0.0],
                vec![1.0, 1.0, 1.0],
                vec![1.0, 1.0, -1.0],
            ],
            vec![1.0 / 3.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn orthonormal_objective_is_one() {
        let set = StateSet::from_real(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.3, 0.7]).unwrap();
        let g = set.gram();
        let th = PhaseVector::from_free(&[1.234]);
        assert_eq!(objective(&g, set.priors(), &th).unwrap(), 1.0);
        assert_eq!(
            objective_gradient(&g, set.priors(), &th).unwrap(),
            vec![0.0]
        );
        let r = minimize_bound(&set, &MinimizerConfig::default()).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.starts_used, 0);
    }

    #[test]
    fn two_state_antiphase() {
        let s: f64 = 0.4;
        let set = StateSet::from_real(
            &[vec![1.0, 0.0], vec![s, (1.0 - s * s).sqrt()]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let g = set.gram();
        let v = objective(&g, set.priors(), &PhaseVector::from_free(&[PI])).unwrap();
        assert!((v - (1.0 - s)).abs() < 1e-15);
        let grad = objective_gradient(&g, set.priors(), &PhaseVector::from_free(&[PI])).unwrap();
        assert!(grad[0].abs() < 1e-15);
    }

    #[test]
    fn example_one_at_zero_phases() {
        let set = example_one();
        let g = set.gram();
        let th = PhaseVector::zeros(3);
        let expected = 1.0 + 2.0 / (3.0 * 3f64.sqrt()) * 2.0 + 2.0 / 9.0;
        let v = objective(&g, set.priors(), &th).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - direct_norm(&set, th.as_slice())).abs() < 1e-12);
        assert!((v - 1.9920).abs() < 5e-5);
    }

    #[test]
    fn example_one_bound() {
        let r = minimize_bound(&example_one(), &MinimizerConfig::default()).unwrap();
        assert!((r.value - 0.4444).abs() < 5e-4, "{}", r.value);
        assert_eq!(r.argmin.as_slice()[0], 0.0);
        assert_eq!(r.starts_used, 65);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let set = random_set(7, 3, 3);
        let obj = PhaseObjective::new(&set.gram(), set.priors()).unwrap();
        let theta = [0.0, 0.7, -2.1];
        let grad = obj.gradient(&theta).unwrap();
        let h = 1e-6;
        for k in 1..3 {
            let mut up = theta;
            let mut dn = theta;
            up[k] += h;
            dn[k] -= h;
            let fd = (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * h);
            assert!((fd - grad[k - 1]).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let set = example_one();
        let g = set.gram();
        assert!(objective(&g, &[0.5, 0.5], &PhaseVector::zeros(3)).is_err());
        assert!(objective(&g, set.priors(), &PhaseVector::zeros(2)).is_err());
        assert!(PhaseVector::new(vec![0.1, 0.0]).is_err());
    }

    #[test]
    fn result_never_exceeds_start_values() {
        let set = random_set(11, 4, 5);
        let cfg = MinimizerConfig::default();
        let obj = PhaseObjective::new(&set.gram(), set.priors()).unwrap();
        let r = minimize_phases(&obj, &cfg).unwrap();
        for s in start_points(&obj, &cfg) {
            assert!(r.value <= obj.value(s.as_slice()).unwrap() + 1e-15);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let set = random_set(3, 4, 4);
        let cfg = MinimizerConfig::default();
        assert_eq!(
            minimize_bound(&set, &cfg).unwrap(),
            minimize_bound(&set, &cfg).unwrap()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pairwise_form_equals_direct_norm(seed in 0u64..10_000, n in 2usize..5,
                                            raw in proptest::collection::vec(-10.0f64..10.0, 5)) {
            let set = random_set(seed, n, n + 1);
            let theta: Vec<f64> = std::iter::once(0.0).chain(raw[..n - 1].iter().copied()).collect();
            let v = objective(&set.gram(), set.priors(), &PhaseVector::new(theta.clone()).unwrap()).unwrap();
            prop_assert!((v - direct_norm(&set, &theta)).abs() < 1e-12);
        }

        #[test]
        fn global_phase_invariance(seed in 0u64..10_000, shift in -10.0f64..10.0,
                                   raw in proptest::collection::vec(-10.0f64..10.0, 4)) {
            let set = random_set(seed, 4, 4);
            let obj = PhaseObjective::new(&set.gram(), set.priors()).unwrap();
            let moved: Vec<f64> = raw.iter().map(|t| t + shift).collect();
            prop_assert!((obj.value(&raw).unwrap() - obj.value(&moved).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn two_state_minimum_is_closed_form(seed in 0u64..10_000) {
            let set = random_set(seed, 2, 2);
            let r = minimize_bound(&set, &MinimizerConfig { starts: 4, ..Default::default() }).unwrap();
            let p = set.priors();
            let expected = 1.0 - 2.0 * (p[0] * p[1]).sqrt() * set.gram().modulus(0, 1);
            prop_assert!((r.value - expected).abs() < 1e-10);
        }

        #[test]
        fn bound_within_trivial_range(seed in 0u64..10_000, n in 2usize..5) {
            let set = random_set(seed, n, n);
            let g = set.gram();
            let p = set.priors();
            let mut spread = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    spread += 2.0 * (p[i] * p[j]).sqrt() * g.modulus(i, j);
                }
            }
            let r = minimize_bound(&set, &MinimizerConfig { starts: 8, ..Default::default() }).unwrap();
            prop_assert!(r.value >= (1.0 - spread).max(0.0) - 1e-12);
            prop_assert!(r.value <= 1.0 + spread);
        }
    }
}

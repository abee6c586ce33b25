use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use millid_core::bench::{training_cuts, BenchConfig};
use millid_core::dataset::TimeSeriesDataset;
use millid_core::discovery::{
    discover_equation, discover_system, refit_original_scale, solve_best_subset, DiscoveryConfig, SolverOptions,
    SystemConfig, DEFAULT_LAMBDA2,
};
use millid_core::dynamics::Case;
use millid_core::library::{
    assemble_problem, build_library, normalize_columns, EquationId, RegressionProblem, Term, Variable,
};

fn labels(p: usize) -> Vec<Term> {
    build_library(&[Variable::X, Variable::Vx, Variable::B, Variable::Fx], 2).unwrap().terms()[..p].to_vec()
}

fn random_problem(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RegressionProblem {
    let design = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal) * rng.random_range(0.1..10.0));
    let mut target = DVector::from_fn(rows, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));
    for j in 0..cols {
        if rng.random_bool(0.4) {
            target += design.column(j) * rng.random_range(-2.0..2.0);
        }
    }
    RegressionProblem { design, target, labels: labels(cols), provenance: (0..rows).map(|i| (0, i)).collect() }
}

/// Ridge objective of every k-subset by LU on the normal equations.
fn brute_force(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, lambda2: f64) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in (0..x.ncols()).combinations(k) {
        let xs = x.select_columns(s.iter());
        let a = xs.tr_mul(&xs) + DMatrix::identity(k, k) * lambda2;
        let xi = a.lu().solve(&xs.tr_mul(y)).unwrap();
        let obj = (y - &xs * &xi).norm_squared() + lambda2 * xi.norm_squared();
        let replace = match &best {
            None => true,
            Some((bs, bo)) => {
                if (obj - bo).abs() <= 1e-12 * obj.abs().max(bo.abs()).max(y.norm_squared()) {
                    s < *bs
                } else {
                    obj < *bo
                }
            }
        };
        if replace {
            best = Some((s, obj));
        }
    }
    best.unwrap()
}

#[test]
fn exhaustive_matches_brute_force_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(331);
    for trial in 0..100 {
        let k = 1 + trial % 3;
        let raw = random_problem(&mut rng, 200, 8);
        let n = normalize_columns(&raw).unwrap();
        let lambda2 = [0.0, DEFAULT_LAMBDA2, 0.1][trial % 3];
        let found = solve_best_subset(&n, &DiscoveryConfig { lambda2, ..DiscoveryConfig::new(k) }).unwrap();
        let (support, objective) = brute_force(&n.problem.design, &n.problem.target, k, lambda2);
        assert_eq!(found.support, support, "trial {trial}");
        assert!((found.objective - objective).abs() <= 1e-12 * objective.max(1.0), "trial {trial}");
    }
}

fn bnb() -> SolverOptions {
    SolverOptions { branch_and_bound: true, ..SolverOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_and_bound_reaches_the_exhaustive_optimum(seed in any::<u64>(), cols in 3usize..=12, k in 1usize..=4, l in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = random_problem(&mut rng, 60, cols);
        let n = normalize_columns(&raw).unwrap();
        let k = k.min(cols);
        let config = DiscoveryConfig { lambda2: [0.0, 1e-3, 1.0][l], ..DiscoveryConfig::new(k) };
        let full = solve_best_subset(&n, &config).unwrap();
        let fast = solve_best_subset(&n, &DiscoveryConfig { solver: bnb(), ..config }).unwrap();
        prop_assert!((full.objective - fast.objective).abs() <= 1e-12 * full.objective.abs().max(1.0));
        prop_assert_eq!(full.support, fast.support);
    }

    #[test]
    fn selection_ignores_column_scaling(seed in any::<u64>(), k in 1usize..=3, scales in proptest::collection::vec(-6i32..6, 8)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = random_problem(&mut rng, 80, 8);
        let mut scaled = raw.clone();
        for (j, e) in scales.iter().enumerate() {
            scaled.design.column_mut(j).scale_mut(10f64.powi(*e) * 1.7);
        }
        let config = DiscoveryConfig::new(k);
        let a = solve_best_subset(&normalize_columns(&raw).unwrap(), &config).unwrap();
        let b = solve_best_subset(&normalize_columns(&scaled).unwrap(), &config).unwrap();
        prop_assert_eq!(a.support, b.support);
    }

    #[test]
    fn refit_recovers_coefficients_in_span(seed in any::<u64>(), k in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut raw = random_problem(&mut rng, 50, 6);
        let support: Vec<usize> = (0..k).collect();
        let truth: Vec<f64> = (0..k).map(|_| rng.random_range(-1e3..1e3)).collect();
        raw.target = DVector::zeros(50);
        for (&j, &c) in support.iter().zip(&truth) {
            raw.target += raw.design.column(j) * c;
        }
        let coef = refit_original_scale(&raw, &support).unwrap();
        let fitted = raw.design.select_columns(support.iter()) * DVector::from_vec(coef);
        prop_assert!((&raw.target - fitted).norm() <= 1e-8 * raw.target.norm());
    }
}

fn clean(case: Case, omega: f64) -> Vec<TimeSeriesDataset> {
    training_cuts(&BenchConfig::default(), case, omega).unwrap()
}

#[test]
fn noise_free_case_i_structural_and_force_equations() {
    let cuts = clean(Case::I, 6000.0);
    let vx = assemble_problem(EquationId::VxDot, &cuts, Case::I).unwrap();
    assert_eq!(vx.rows(), 12_000);
    let sol = discover_equation(&vx, &DiscoveryConfig::new(3)).unwrap();
    let got: BTreeMap<String, f64> = sol.terms().into_iter().map(|w| (w.term.to_string(), w.coeff)).collect();
    let expected = [("x", -5e6 / 0.198), ("vx", -19.91 / 0.198), ("Fx", 1.0 / 0.198)];
    assert_eq!(got.len(), 3);
    for (name, value) in expected {
        assert!(((got[name] - value) / value).abs() < 1e-6, "{name}: {}", got[name]);
    }

    let xdot = assemble_problem(EquationId::XDot, &cuts, Case::I).unwrap();
    let sol = discover_equation(&xdot, &DiscoveryConfig::new(1)).unwrap();
    assert_eq!(sol.terms()[0].term, Term::var(Variable::Vx));
    assert!((sol.terms()[0].coeff - 1.0).abs() < 1e-12);

    let fnp = assemble_problem(EquationId::Fn, &cuts, Case::I).unwrap();
    assert_eq!(fnp.cols(), 10);
    let sol = discover_equation(&fnp, &DiscoveryConfig::new(2)).unwrap();
    let support: Vec<String> = sol.terms().iter().map(|w| w.term.to_string()).collect();
    assert_eq!(support, ["b*dn", "b*sinphi"]);
}

#[test]
fn case_ii_force_equation_has_four_terms() {
    let cuts = clean(Case::II, 6000.0);
    let ft = assemble_problem(EquationId::Ft, &cuts, Case::II).unwrap();
    assert_eq!(ft.cols(), 35);
    let sol = discover_equation(&ft, &DiscoveryConfig::new(4)).unwrap();
    let support: Vec<String> = sol.terms().iter().map(|w| w.term.to_string()).collect();
    assert_eq!(support, ["b", "b*dn", "b*sinphi", "b*ndot^2"]);
}

#[test]
fn square_full_rank_refit_interpolates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut raw = random_problem(&mut rng, 5, 5);
    raw.target = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
    let coef = refit_original_scale(&raw, &[0, 1, 2, 3, 4]).unwrap();
    let residual = (&raw.target - &raw.design * DVector::from_vec(coef)).norm();
    assert!(residual < 1e-10);
}

#[test]
fn support_is_identical_without_and_with_heavy_ridge() {
    let cuts = clean(Case::I, 6000.0);
    for id in EquationId::ALL {
        let problem = assemble_problem(id, &cuts, Case::I).unwrap();
        let k = SystemConfig::defaults_for(Case::I).k_per_equation[&id];
        let n = normalize_columns(&problem).unwrap();
        let plain = solve_best_subset(&n, &DiscoveryConfig { lambda2: 0.0, ..DiscoveryConfig::new(k) }).unwrap();
        let ridge = solve_best_subset(&n, &DiscoveryConfig { lambda2: 100.0, ..DiscoveryConfig::new(k) }).unwrap();
        assert_eq!(plain.support, ridge.support, "{id}");
    }
}

#[test]
fn discovery_is_deterministic_across_thread_counts() {
    let cuts = clean(Case::II, 8000.0);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            discover_system(&cuts, Case::II, &SystemConfig::defaults_for(Case::II), SolverOptions::default())
                .unwrap()
                .canonical_json()
                .unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}

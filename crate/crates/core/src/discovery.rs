//! Exact best-subset ridge regression and the two-stage discovery procedure.
//!
//! Selection solves
//!
//! ```text
//! min ‖y - Θξ‖² + λ₂‖ξ‖²   s.t.  |ξ_p| ≤ M·γ_p,  Σγ_p = k,  γ ∈ {0,1}^P
//! ```
//!
//! on column-normalized data, by enumerating every k-subset (or by
//! best-first branch and bound, which certifies the same optimum). The
//! chosen support is then refit by plain least squares on the original
//! scale.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TimeSeriesDataset;
use crate::dynamics::Case;
use crate::library::{
    assemble_problem, binomial, normalize_columns, EquationId, LibraryError, NormalizedProblem,
    RegressionProblem, Term,
};

/// Ridge weight used unless configured otherwise.
pub const DEFAULT_LAMBDA2: f64 = 1e-5;
/// Relative tolerance under which two objectives count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Smallest admissible singular-value ratio of a selected submatrix.
pub const SINGULAR_RATIO: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("invalid discovery config: {0}")]
    Config(String),
    #[error("every {k}-subset is infeasible (singular or outside the coefficient bound)")]
    AllInfeasible { k: usize },
    #[error("{count} subsets exceed the enumeration guard {guard}; enable branch and bound")]
    TooManySubsets { count: u64, guard: u64 },
    #[error("refit failed: selected columns are rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("discovery of {equation} failed after {completed:?}: {source}")]
    Equation {
        equation: EquationId,
        completed: Vec<EquationId>,
        #[source]
        source: Box<DiscoveryError>,
    },
}

/// Per-equation selection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryConfig {
    /// Number of active terms.
    pub k: usize,
    /// Ridge weight on the normalized scale.
    pub lambda2: f64,
    /// Coefficient bound on the normalized scale.
    pub bound_m: f64,
    pub solver: SolverOptions,
}

impl DiscoveryConfig {
    pub fn new(k: usize) -> Self {
        Self { k, lambda2: DEFAULT_LAMBDA2, bound_m: 1000.0, solver: SolverOptions::default() }
    }

    fn validate(&self, columns: usize) -> Result<(), DiscoveryError> {
        if self.k == 0 || self.k > columns {
            return Err(DiscoveryError::Config(format!("k = {} must lie in 1..={columns}", self.k)));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(DiscoveryError::Config(format!("lambda2 must be >= 0, got {}", self.lambda2)));
        }
        if !(self.bound_m > 0.0) {
            return Err(DiscoveryError::Config(format!("bound M must be > 0, got {}", self.bound_m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub branch_and_bound: bool,
    /// Largest subset count enumerated exhaustively.
    pub enumeration_guard: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { branch_and_bound: false, enumeration_guard: 10_000_000 }
    }
}

/// Optimal support with coefficients on the normalized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetChoice {
    /// Ascending column indices.
    pub support: Vec<usize>,
    /// One value per support entry.
    pub coefficients: Vec<f64>,
    pub objective: f64,
}

/// Result of the two-stage procedure for one equation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub support: Vec<usize>,
    /// Length P, zero off support.
    pub coefficients_normalized: Vec<f64>,
    /// Length P, zero off support.
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub labels: Vec<Term>,
    /// ‖y - Θξ‖ / ‖y‖ of the original-scale refit.
    pub relative_residual: f64,
}

impl SparseSolution {
    pub fn terms(&self) -> Vec<WeightedTerm> {
        self.support
            .iter()
            .map(|&j| WeightedTerm { term: self.labels[j].clone(), coeff: self.coefficients[j] })
            .collect()
    }
}

/// Precomputed normal-equation quantities of a normalized problem.
struct Gram {
    g: DMatrix<f64>,
    c: DVector<f64>,
    yy: f64,
    lambda2: f64,
    bound_m: f64,
}

impl Gram {
    fn new(problem: &RegressionProblem, lambda2: f64, bound_m: f64) -> Self {
        let x = &problem.design;
        Self { g: x.tr_mul(x), c: x.tr_mul(&problem.target), yy: problem.target.norm_squared(), lambda2, bound_m }
    }

    /// Ridge fit on `subset`; `None` when singular or out of bounds.
    fn fit(&self, subset: &[usize]) -> Option<(Vec<f64>, f64)> {
        let k = subset.len();
        let gs = DMatrix::from_fn(k, k, |i, j| self.g[(subset[i], subset[j])]);
        let cs = DVector::from_fn(k, |i, _| self.c[subset[i]]);
        let eig = SymmetricEigen::new(gs.clone()).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if !(hi > 0.0) || lo.max(0.0).sqrt() <= SINGULAR_RATIO * hi.sqrt() {
            return None;
        }
        let a = gs + DMatrix::identity(k, k) * self.lambda2;
        let xi = a.cholesky()?.solve(&cs);
        if xi.iter().any(|v| !v.is_finite() || v.abs() > self.bound_m) {
            return None;
        }
        let objective = self.yy - xi.dot(&cs);
        Some((xi.iter().copied().collect(), objective))
    }

    /// Ridge objective over all of `columns`, ignoring bounds and cardinality.
    fn relaxation(&self, columns: &[usize]) -> f64 {
        if columns.is_empty() {
            return self.yy;
        }
        let k = columns.len();
        let a = DMatrix::from_fn(k, k, |i, j| self.g[(columns[i], columns[j])])
            + DMatrix::identity(k, k) * self.lambda2;
        let cs = DVector::from_fn(k, |i, _| self.c[columns[i]]);
        let eig = SymmetricEigen::new(a);
        let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
        let mut explained = 0.0;
        for (i, &e) in eig.eigenvalues.iter().enumerate() {
            if e > 1e-13 * top.max(1.0) {
                let proj = eig.eigenvectors.column(i).dot(&cs);
                explained += proj * proj / e;
            }
        }
        self.yy - explained
    }
}

/// Relative to the larger objective, floored at ‖y‖² so round-off near a
/// perfect fit still counts as a tie.
fn ties(a: f64, b: f64, yy: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(yy)
}

/// Lower objective wins; near-ties go to the lexicographically smaller support.
fn better(candidate: &SubsetChoice, incumbent: &SubsetChoice, yy: f64) -> bool {
    if ties(candidate.objective, incumbent.objective, yy) {
        candidate.support < incumbent.support
    } else {
        candidate.objective < incumbent.objective
    }
}

fn keep_better(best: Option<SubsetChoice>, candidate: SubsetChoice, yy: f64) -> Option<SubsetChoice> {
    match best {
        Some(b) if !better(&candidate, &b, yy) => Some(b),
        _ => Some(candidate),
    }
}

/// Certified global optimum of the cardinality-constrained ridge problem on a
/// normalized problem. Excluded columns are never selected.
pub fn solve_best_subset(
    normalized: &NormalizedProblem,
    config: &DiscoveryConfig,
) -> Result<SubsetChoice, DiscoveryError> {
    let allowed: Vec<usize> = (0..normalized.problem.cols()).filter(|&j| !normalized.excluded[j]).collect();
    config.validate(allowed.len())?;
    let gram = Gram::new(&normalized.problem, config.lambda2, config.bound_m);
    let best = if config.solver.branch_and_bound {
        branch_and_bound(&gram, &allowed, config.k)
    } else {
        let count = binomial(allowed.len() as u64, config.k as u64);
        if count > config.solver.enumeration_guard {
            return Err(DiscoveryError::TooManySubsets { count, guard: config.solver.enumeration_guard });
        }
        enumerate(&gram, &allowed, config.k)
    };
    best.ok_or(DiscoveryError::AllInfeasible { k: config.k })
}

fn enumerate(gram: &Gram, allowed: &[usize], k: usize) -> Option<SubsetChoice> {
    // Partition by leading column; each block is scanned in lexicographic order
    // and blocks are reduced in order, so the result does not depend on threads.
    let blocks: Vec<Option<SubsetChoice>> = (0..allowed.len())
        .into_par_iter()
        .map(|lead| {
            let rest = &allowed[lead + 1..];
            let mut best = None;
            for tail in rest.iter().copied().combinations(k - 1) {
                let mut support = Vec::with_capacity(k);
                support.push(allowed[lead]);
                support.extend(tail);
                if let Some((coefficients, objective)) = gram.fit(&support) {
                    best = keep_better(best, SubsetChoice { support, coefficients, objective }, gram.yy);
                }
            }
            best
        })
        .collect();
    blocks.into_iter().flatten().fold(None, |acc, c| keep_better(acc, c, gram.yy))
}

struct Node {
    bound: f64,
    chosen: Vec<usize>,
    /// Position in `allowed` of the next undecided column.
    next: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the smallest bound pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.chosen.cmp(&self.chosen))
            .then_with(|| other.next.cmp(&self.next))
    }
}

fn branch_and_bound(gram: &Gram, allowed: &[usize], k: usize) -> Option<SubsetChoice> {
    let mut best: Option<SubsetChoice> = None;
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: gram.relaxation(allowed), chosen: Vec::new(), next: 0 });
    let prunable = |bound: f64, best: &Option<SubsetChoice>| match best {
        Some(b) => bound > b.objective && !ties(bound, b.objective, gram.yy),
        None => false,
    };

    while let Some(node) = heap.pop() {
        if prunable(node.bound, &best) {
            break;
        }
        let remaining = allowed.len() - node.next;
        let need = k - node.chosen.len();
        if need == 0 || need == remaining {
            let mut support = node.chosen.clone();
            support.extend_from_slice(&allowed[node.next..node.next + need]);
            if let Some((coefficients, objective)) = gram.fit(&support) {
                best = keep_better(best, SubsetChoice { support, coefficients, objective }, gram.yy);
            }
            continue;
        }
        let column = allowed[node.next];

        let mut with = node.chosen.clone();
        with.push(column);
        let mut pool = with.clone();
        pool.extend_from_slice(&allowed[node.next + 1..]);
        let include = Node { bound: gram.relaxation(&pool), chosen: with, next: node.next + 1 };
        if !prunable(include.bound, &best) {
            heap.push(include);
        }

        if remaining - 1 >= need {
            let mut pool = node.chosen.clone();
            pool.extend_from_slice(&allowed[node.next + 1..]);
            let exclude = Node { bound: gram.relaxation(&pool), chosen: node.chosen, next: node.next + 1 };
            if !prunable(exclude.bound, &best) {
                heap.push(exclude);
            }
        }
    }
    best
}

/// Unregularized least squares on the selected original-scale columns.
pub fn refit_original_scale(problem: &RegressionProblem, support: &[usize]) -> Result<Vec<f64>, DiscoveryError> {
    if support.is_empty() {
        return Err(DiscoveryError::Config("empty support".into()));
    }
    let n = problem.rows();
    let mut xs = DMatrix::zeros(n, support.len());
    let mut scales = Vec::with_capacity(support.len());
    for (k, &j) in support.iter().enumerate() {
        let col = problem.design.column(j);
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(DiscoveryError::RankDeficient { ratio: 0.0 });
        }
        xs.set_column(k, &(col / norm));
        scales.push(norm);
    }
    // Rank is judged on equilibrated columns so physical units do not matter.
    let svd = xs.svd(true, true);
    let (lo, hi) = svd
        .singular_values
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio > SINGULAR_RATIO) {
        return Err(DiscoveryError::RankDeficient { ratio });
    }
    let beta = svd.solve(&problem.target, 0.0).map_err(|_| DiscoveryError::RankDeficient { ratio })?;
    Ok(beta.iter().zip(&scales).map(|(b, s)| b / s).collect())
}

/// Normalize, select the support, refit on the original scale.
pub fn discover_equation(problem: &RegressionProblem, config: &DiscoveryConfig) -> Result<SparseSolution, DiscoveryError> {
    let normalized = normalize_columns(problem)?;
    let choice = solve_best_subset(&normalized, config)?;
    let refit = refit_original_scale(problem, &choice.support)?;

    let p = problem.cols();
    let mut coefficients_normalized = vec![0.0; p];
    let mut coefficients = vec![0.0; p];
    for (k, &j) in choice.support.iter().enumerate() {
        coefficients_normalized[j] = choice.coefficients[k];
        coefficients[j] = refit[k];
    }
    let fitted = &problem.design * DVector::from_vec(coefficients.clone());
    let relative_residual = (&problem.target - fitted).norm() / problem.target.norm();
    Ok(SparseSolution {
        support: choice.support,
        coefficients_normalized,
        coefficients,
        objective: choice.objective,
        labels: problem.labels.clone(),
        relative_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: Term,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoveredEquation {
    pub terms: Vec<WeightedTerm>,
    pub objective: f64,
}

impl DiscoveredEquation {
    pub fn support(&self) -> std::collections::BTreeSet<Term> {
        self.terms.iter().map(|t| t.term.clone()).collect()
    }

    pub fn coefficient(&self, term: &Term) -> Option<f64> {
        self.terms.iter().find(|t| &t.term == term).map(|t| t.coeff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub k_per_equation: BTreeMap<EquationId, usize>,
    pub lambda2: f64,
    #[serde(rename = "bound_M")]
    pub bound_m: f64,
}

impl SystemConfig {
    /// Ground-truth term counts for each case.
    pub fn defaults_for(case: Case) -> Self {
        let force_k = match case {
            Case::I => 2,
            Case::II => 4,
        };
        let k_per_equation = BTreeMap::from([
            (EquationId::XDot, 1),
            (EquationId::VxDot, 3),
            (EquationId::YDot, 1),
            (EquationId::VyDot, 3),
            (EquationId::Ft, force_k),
            (EquationId::Fn, force_k),
        ]);
        Self { k_per_equation, lambda2: DEFAULT_LAMBDA2, bound_m: 1000.0 }
    }

    pub fn equation_config(&self, id: EquationId, solver: SolverOptions) -> Result<DiscoveryConfig, DiscoveryError> {
        let k = *self
            .k_per_equation
            .get(&id)
            .ok_or_else(|| DiscoveryError::Config(format!("no k given for {id}")))?;
        Ok(DiscoveryConfig { k, lambda2: self.lambda2, bound_m: self.bound_m, solver })
    }
}

/// Six discovered equations plus the context they were discovered in.
/// The force projections into x/y are fixed and not stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoveredSystem {
    pub case: Case,
    pub omega_rpm: f64,
    pub noise_ratio: f64,
    pub seed: u64,
    pub config: SystemConfig,
    pub wall_time_s: f64,
    pub equations: BTreeMap<EquationId, DiscoveredEquation>,
}

impl DiscoveredSystem {
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let system: DiscoveredSystem = serde_json::from_str(text)?;
        if let Some(missing) = EquationId::ALL.iter().find(|id| !system.equations.contains_key(id)) {
            return Err(serde::de::Error::custom(format!("missing equation {missing}")));
        }
        Ok(system)
    }

    /// Serialization with the wall time zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> Result<String, serde_json::Error> {
        let mut copy = self.clone();
        copy.wall_time_s = 0.0;
        copy.to_json()
    }
}

/// Runs the two-stage procedure for all six equations.
pub fn discover_system(
    datasets: &[TimeSeriesDataset],
    case: Case,
    config: &SystemConfig,
    solver: SolverOptions,
) -> Result<DiscoveredSystem, DiscoveryError> {
    let started = Instant::now();
    let first = datasets.first().ok_or(LibraryError::NoDatasets)?;
    let mut equations = BTreeMap::new();
    for id in EquationId::ALL {
        let solve = || -> Result<SparseSolution, DiscoveryError> {
            let problem = assemble_problem(id, datasets, case)?;
            discover_equation(&problem, &config.equation_config(id, solver)?)
        };
        match solve() {
            Ok(sol) => {
                equations.insert(id, DiscoveredEquation { terms: sol.terms(), objective: sol.objective });
            }
            Err(e) => {
                return Err(DiscoveryError::Equation {
                    equation: id,
                    completed: equations.keys().copied().collect(),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(DiscoveredSystem {
        case,
        omega_rpm: first.meta.process.spindle_speed,
        noise_ratio: first.meta.noise_ratio,
        seed: first.meta.seed,
        config: config.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
        equations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::Variable;

    fn problem(design: DMatrix<f64>, target: Vec<f64>) -> RegressionProblem {
        let n = design.nrows();
        let p = design.ncols();
        RegressionProblem {
            design,
            target: DVector::from_vec(target),
            labels: (0..p).map(|j| Term::from_factors([(Variable::X, j as u32 + 1)])).collect(),
            provenance: (0..n).map(|i| (0, i)).collect(),
        }
    }

    fn orthonormal_design() -> DMatrix<f64> {
        // columns are standard basis vectors of R^6
        DMatrix::from_fn(6, 5, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[test]
    fn exact_representation_with_no_ridge() {
        let p = problem(orthonormal_design(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let n = normalize_columns(&p).unwrap();
        let cfg = DiscoveryConfig { lambda2: 0.0, ..DiscoveryConfig::new(1) };
        let choice = solve_best_subset(&n, &cfg).unwrap();
        assert_eq!(choice.support, vec![3]);
        assert!((choice.coefficients[0] - 1.0).abs() < 1e-15);
        assert!(choice.objective.abs() < 1e-15);
    }

    #[test]
    fn one_column_ridge_closed_form() {
        let p = problem(orthonormal_design(), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let n = normalize_columns(&p).unwrap();
        let cfg = DiscoveryConfig { lambda2: 100.0, ..DiscoveryConfig::new(1) };
        let choice = solve_best_subset(&n, &cfg).unwrap();
        assert_eq!(choice.support, vec![1]);
        assert!((choice.coefficients[0] - 1.0 / 101.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_smallest_support() {
        let design = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let p = problem(design, vec![1.0, 0.0]);
        let n = normalize_columns(&p).unwrap();
        let cfg = DiscoveryConfig { lambda2: 0.0, ..DiscoveryConfig::new(1) };
        assert_eq!(solve_best_subset(&n, &cfg).unwrap().support, vec![0]);
        let bb = DiscoveryConfig { solver: SolverOptions { branch_and_bound: true, ..Default::default() }, ..cfg };
        assert_eq!(solve_best_subset(&n, &bb).unwrap().support, vec![0]);
    }

    #[test]
    fn singular_subsets_are_skipped() {
        // columns 0 and 1 are identical
        let design = DMatrix::from_column_slice(3, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 0.0, 1.0, 0.0]);
        let p = problem(design, vec![1.0, 3.0, 3.0]);
        let n = normalize_columns(&p).unwrap();
        let cfg = DiscoveryConfig { lambda2: 0.0, ..DiscoveryConfig::new(2) };
        let choice = solve_best_subset(&n, &cfg).unwrap();
        assert_ne!(choice.support, vec![0, 1]);
    }

    #[test]
    fn bound_violations_are_infeasible() {
        let p = problem(orthonormal_design(), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let n = normalize_columns(&p).unwrap();
        let cfg = DiscoveryConfig { lambda2: 0.0, bound_m: 0.5, ..DiscoveryConfig::new(1) };
        let choice = solve_best_subset(&n, &cfg).unwrap();
        // only columns with zero coefficient remain feasible
        assert_ne!(choice.support, vec![1]);
    }

    #[test]
    fn config_errors() {
        let p = problem(orthonormal_design(), vec![1.0; 6]);
        let n = normalize_columns(&p).unwrap();
        assert!(matches!(solve_best_subset(&n, &DiscoveryConfig::new(0)), Err(DiscoveryError::Config(_))));
        assert!(matches!(solve_best_subset(&n, &DiscoveryConfig::new(6)), Err(DiscoveryError::Config(_))));
        let guard = DiscoveryConfig {
            solver: SolverOptions { branch_and_bound: false, enumeration_guard: 3 },
            ..DiscoveryConfig::new(2)
        };
        assert!(matches!(solve_best_subset(&n, &guard), Err(DiscoveryError::TooManySubsets { count: 10, .. })));
    }

    #[test]
    fn refit_examples() {
        let design = DMatrix::from_column_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 3.0, 1.0, 1.0, 1.0, 5.0]);
        let p = problem(design.clone(), vec![1.0, 2.0, 3.0]);
        let beta = refit_original_scale(&p, &[0, 1, 2]).unwrap();
        let fitted = &design * DVector::from_vec(beta);
        assert!((fitted - &p.target).norm() < 1e-12);

        let dup = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let p = problem(dup, vec![1.0, 2.0, 3.0]);
        assert!(matches!(refit_original_scale(&p, &[0, 1]), Err(DiscoveryError::RankDeficient { .. })));
    }

    #[test]
    fn pure_noise_still_returns_a_support() {
        let design = DMatrix::from_fn(50, 4, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let target: Vec<f64> = (0..50).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let sol = discover_equation(&problem(design, target), &DiscoveryConfig::new(1)).unwrap();
        assert_eq!(sol.support.len(), 1);
        assert!(sol.relative_residual > 0.5);
    }

    #[test]
    fn system_json_shape() {
        let mut equations = BTreeMap::new();
        for id in EquationId::ALL {
            equations.insert(
                id,
                DiscoveredEquation {
                    terms: vec![WeightedTerm { term: "dn*b".parse().unwrap(), coeff: 1.5 }],
                    objective: 0.25,
                },
            );
        }
        let sys = DiscoveredSystem {
            case: Case::I,
            omega_rpm: 6000.0,
            noise_ratio: 0.01,
            seed: 7,
            config: SystemConfig::defaults_for(Case::I),
            wall_time_s: 1.0,
            equations,
        };
        let json = sys.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["config"]["bound_M"], 1000.0);
        assert_eq!(v["config"]["k_per_equation"]["vx_dot"], 3);
        assert_eq!(v["equations"]["Ft"]["terms"][0]["term"], "b*dn");
        assert_eq!(DiscoveredSystem::from_json(&json).unwrap(), sys);

        let mut partial = v.clone();
        partial["equations"].as_object_mut().unwrap().remove("Fn");
        assert!(DiscoveredSystem::from_json(&partial.to_string()).is_err());
    }
}

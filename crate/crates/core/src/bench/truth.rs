//! Ground-truth equations and the scores computed against them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::discovery::{DiscoveredEquation, DiscoveredSystem, SystemConfig, WeightedTerm};
use crate::dynamics::{Case, ForceModelSpec, ModalAxis, StructuralModel, ToolGeometry};
use crate::library::{EquationId, Term, Variable};

/// True support and coefficients, in the form the simulator integrates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub case: Case,
    pub omega_rpm: f64,
    pub equations: BTreeMap<EquationId, Vec<WeightedTerm>>,
}

fn term(factors: &[(Variable, u32)]) -> Term {
    Term::from_factors(factors.iter().copied())
}

fn structural(mode: &ModalAxis, q: Variable, v: Variable, f: Variable) -> Vec<WeightedTerm> {
    vec![
        WeightedTerm { term: term(&[(q, 1)]), coeff: -mode.stiffness / mode.mass },
        WeightedTerm { term: term(&[(v, 1)]), coeff: -mode.damping / mode.mass },
        WeightedTerm { term: term(&[(f, 1)]), coeff: 1.0 / mode.mass },
    ]
}

fn force(kc: f64, ke: f64, c: f64, ft: f64, speed: f64) -> Vec<WeightedTerm> {
    use Variable::*;
    let mut terms = vec![
        WeightedTerm { term: term(&[(B, 1), (Dn, 1)]), coeff: kc },
        WeightedTerm { term: term(&[(B, 1), (SinPhi, 1)]), coeff: kc * ft },
    ];
    if ke != 0.0 {
        terms.push(WeightedTerm { term: term(&[(B, 1)]), coeff: ke });
    }
    if c != 0.0 {
        terms.push(WeightedTerm { term: term(&[(B, 1), (Ndot, 2)]), coeff: -c / speed });
    }
    terms.sort_by(|a, b| a.term.cmp(&b.term));
    terms
}

impl GroundTruth {
    pub fn new(
        structure: &StructuralModel,
        force_model: &ForceModelSpec,
        geometry: &ToolGeometry,
        omega_rpm: f64,
        feed_per_tooth: f64,
    ) -> Result<Self, BenchError> {
        if !structure.is_single_mode() {
            return Err(BenchError::Config("ground truth needs one mode per axis".into()));
        }
        let case = if force_model.has_edge_force() || force_model.has_process_damping() { Case::II } else { Case::I };
        let speed = std::f64::consts::PI * geometry.diameter * omega_rpm / 60.0;
        let (mx, my) = (&structure.x_modes[0], &structure.y_modes[0]);
        let f = force_model;
        let equations = BTreeMap::from([
            (EquationId::XDot, vec![WeightedTerm { term: Term::var(Variable::Vx), coeff: 1.0 }]),
            (EquationId::VxDot, structural(mx, Variable::X, Variable::Vx, Variable::Fx)),
            (EquationId::YDot, vec![WeightedTerm { term: Term::var(Variable::Vy), coeff: 1.0 }]),
            (EquationId::VyDot, structural(my, Variable::Y, Variable::Vy, Variable::Fy)),
            (EquationId::Ft, force(f.ktc, f.kte, f.ct, feed_per_tooth, speed)),
            (EquationId::Fn, force(f.knc, f.kne, f.cn, feed_per_tooth, speed)),
        ]);
        Ok(Self { case, omega_rpm, equations })
    }

    pub fn support(&self, id: EquationId) -> BTreeSet<Term> {
        self.equations.get(&id).map(|t| t.iter().map(|w| w.term.clone()).collect()).unwrap_or_default()
    }

    pub fn term_counts(&self) -> BTreeMap<EquationId, usize> {
        self.equations.iter().map(|(id, t)| (*id, t.len())).collect()
    }

    /// The truth packaged as a discovered system, objectives zero.
    pub fn as_system(&self, config: SystemConfig) -> DiscoveredSystem {
        DiscoveredSystem {
            case: self.case,
            omega_rpm: self.omega_rpm,
            noise_ratio: 0.0,
            seed: 0,
            config,
            wall_time_s: 0.0,
            equations: self
                .equations
                .iter()
                .map(|(id, terms)| (*id, DiscoveredEquation { terms: terms.clone(), objective: 0.0 }))
                .collect(),
        }
    }
}

fn check_equations(discovered: &DiscoveredSystem, truth: &GroundTruth) -> Result<(), BenchError> {
    let a: Vec<_> = discovered.equations.keys().collect();
    let b: Vec<_> = truth.equations.keys().collect();
    if a != b {
        return Err(BenchError::Mismatch(format!("equation sets differ: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Number of equations whose support equals the true support.
pub fn a_metric(discovered: &DiscoveredSystem, truth: &GroundTruth) -> Result<usize, BenchError> {
    check_equations(discovered, truth)?;
    Ok(discovered.equations.iter().filter(|(id, eq)| eq.support() == truth.support(**id)).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDeviation {
    pub equation: EquationId,
    pub term: Term,
    pub truth: f64,
    pub discovered: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDeviation {
    /// Terms present in both the discovered and the true support.
    pub terms: Vec<TermDeviation>,
    /// Equations whose support is not exact.
    pub mismatched: Vec<EquationId>,
    /// Mean of `terms[..].relative`; `None` when no term matched.
    pub mean: Option<f64>,
}

pub fn coefficient_deviation(
    discovered: &DiscoveredSystem,
    truth: &GroundTruth,
) -> Result<CoefficientDeviation, BenchError> {
    check_equations(discovered, truth)?;
    let mut terms = Vec::new();
    let mut mismatched = Vec::new();
    for (id, eq) in &discovered.equations {
        if eq.support() != truth.support(*id) {
            mismatched.push(*id);
        }
        for w in &truth.equations[id] {
            if w.coeff == 0.0 {
                return Err(BenchError::Mismatch(format!("zero true coefficient for {} in {id}", w.term)));
            }
            if let Some(found) = eq.coefficient(&w.term) {
                terms.push(TermDeviation {
                    equation: *id,
                    term: w.term.clone(),
                    truth: w.coeff,
                    discovered: found,
                    relative: ((found - w.coeff) / w.coeff).abs(),
                });
            }
        }
    }
    let mean = (!terms.is_empty()).then(|| terms.iter().map(|t| t.relative).sum::<f64>() / terms.len() as f64);
    Ok(CoefficientDeviation { terms, mismatched, mean })
}

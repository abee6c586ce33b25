//! Candidate term libraries and the regression problems built from them.
//!
//! A [`Term`] is a monomial over cutting-mechanics [`Variable`]s. Its
//! canonical text form sorts factors by variable name (byte order), writes
//! powers as `name^k`, joins factors with `*`, and spells the empty product
//! `1`. Parsing accepts factors in any order and canonicalizes them, so
//! `dn*b` and `b*dn` denote the same term.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dataset::TimeSeriesDataset;
use crate::dynamics::Case;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibraryError {
    #[error("cannot parse term '{input}': {reason}")]
    Parse { input: String, reason: String },
    #[error("duplicate variable '{0}' in library")]
    DuplicateVariable(Variable),
    #[error("library needs at least one variable and degree >= 1")]
    EmptyLibrary,
    #[error("variable '{0}' cannot be evaluated on the selected rows")]
    Unresolvable(Variable),
    #[error("no rows left after filtering")]
    NoRows,
    #[error("non-finite design entry in column '{column}' at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("datasets disagree on {0}")]
    MixedMetadata(&'static str),
    #[error("need at least two distinct axial depths, found {0}")]
    SingleDepth(usize),
    #[error("no datasets given")]
    NoDatasets,
    #[error("target vector is identically zero")]
    ZeroTarget,
}

/// Quantities available to candidate terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    X,
    Vx,
    Y,
    Vy,
    /// Axial depth of cut, broadcast per dataset.
    B,
    Fx,
    Fy,
    /// Regenerative displacement n(t - τ) - n(t).
    Dn,
    /// Normal velocity.
    Ndot,
    /// sin of the engaged tooth angle.
    SinPhi,
}

impl Variable {
    pub const ALL: [Variable; 10] = [
        Variable::X,
        Variable::Vx,
        Variable::Y,
        Variable::Vy,
        Variable::B,
        Variable::Fx,
        Variable::Fy,
        Variable::Dn,
        Variable::Ndot,
        Variable::SinPhi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::X => "x",
            Variable::Vx => "vx",
            Variable::Y => "y",
            Variable::Vy => "vy",
            Variable::B => "b",
            Variable::Fx => "Fx",
            Variable::Fy => "Fy",
            Variable::Dn => "dn",
            Variable::Ndot => "ndot",
            Variable::SinPhi => "sinphi",
        }
    }

    pub fn from_name(name: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.name() == name)
    }

    /// Value at sample `i`; NaN where undefined (sinphi out of cut).
    pub fn value(self, ds: &TimeSeriesDataset, i: usize) -> f64 {
        match self {
            Variable::X => ds.x[i],
            Variable::Vx => ds.vx[i],
            Variable::Y => ds.y[i],
            Variable::Vy => ds.vy[i],
            Variable::B => ds.meta.process.axial_depth,
            Variable::Fx => ds.fx[i],
            Variable::Fy => ds.fy[i],
            Variable::Dn => ds.delta_n[i],
            Variable::Ndot => ds.n_dot[i],
            Variable::SinPhi => ds.phi[i].sin(),
        }
    }
}

impl Ord for Variable {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.name().cmp(other.name())
    }
}

impl PartialOrd for Variable {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Monomial: variables with positive integer exponents, sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Term {
    factors: Vec<(Variable, u32)>,
}

impl Term {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn var(v: Variable) -> Self {
        Self { factors: vec![(v, 1)] }
    }

    /// Builds a term from factors in any order; repeated variables add exponents.
    pub fn from_factors<I: IntoIterator<Item = (Variable, u32)>>(factors: I) -> Self {
        let mut merged: Vec<(Variable, u32)> = Vec::new();
        for (v, e) in factors.into_iter().filter(|(_, e)| *e > 0).sorted_by_key(|(v, _)| *v) {
            match merged.last_mut() {
                Some((last, exp)) if *last == v => *exp += e,
                _ => merged.push((v, e)),
            }
        }
        Self { factors: merged }
    }

    pub fn factors(&self) -> &[(Variable, u32)] {
        &self.factors
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|(_, e)| e).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn contains(&self, v: Variable) -> bool {
        self.factors.iter().any(|(f, _)| *f == v)
    }

    pub fn variables(&self) -> impl Iterator<Item = Variable> + '_ {
        self.factors.iter().map(|(v, _)| *v)
    }

    /// Product of the factor values supplied by `value`.
    pub fn evaluate(&self, mut value: impl FnMut(Variable) -> f64) -> f64 {
        self.factors.iter().fold(1.0, |acc, &(v, e)| acc * value(v).powi(e as i32))
    }

    pub fn mul(&self, other: &Term) -> Term {
        Term::from_factors(self.factors.iter().chain(&other.factors).copied())
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (i, (v, e)) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{v}")?;
            } else {
                write!(f, "{v}^{e}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Term {
    type Err = LibraryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: String| LibraryError::Parse { input: s.to_string(), reason };
        if s == "1" {
            return Ok(Term::constant());
        }
        if s.is_empty() {
            return Err(err("empty term".into()));
        }
        let mut factors = Vec::new();
        for part in s.split('*') {
            let (name, exp) = match part.split_once('^') {
                Some((name, exp)) => {
                    if exp.is_empty() || !exp.bytes().all(|b| b.is_ascii_digit()) {
                        return Err(err(format!("bad exponent '{exp}'")));
                    }
                    let e: u32 = exp.parse().map_err(|_| err(format!("bad exponent '{exp}'")))?;
                    if e == 0 || e > 64 {
                        return Err(err(format!("exponent {e} out of range 1..=64")));
                    }
                    (name, e)
                }
                None => (part, 1),
            };
            let v = Variable::from_name(name).ok_or_else(|| err(format!("unknown variable '{name}'")))?;
            factors.push((v, exp));
        }
        let term = Term::from_factors(factors);
        if term.degree() > 64 {
            return Err(err("total degree above 64".into()));
        }
        Ok(term)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every monomial of a variable set up to a maximum degree.
#[derive(Debug, Clone, PartialEq)]
pub struct TermLibrary {
    terms: Vec<Term>,
    variables: Vec<Variable>,
    max_degree: u32,
}

impl TermLibrary {
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }
}

/// Graded-lexicographic monomial basis, constant first.
pub fn build_library(variables: &[Variable], max_degree: u32) -> Result<TermLibrary, LibraryError> {
    if variables.is_empty() || max_degree == 0 {
        return Err(LibraryError::EmptyLibrary);
    }
    let mut seen = BTreeSet::new();
    for v in variables {
        if !seen.insert(*v) {
            return Err(LibraryError::DuplicateVariable(*v));
        }
    }
    let sorted: Vec<Variable> = seen.into_iter().collect();
    let mut terms = Vec::new();
    for degree in 0..=max_degree as usize {
        for combo in sorted.iter().copied().combinations_with_replacement(degree) {
            terms.push(Term::from_factors(combo.into_iter().map(|v| (v, 1))));
        }
    }
    Ok(TermLibrary { terms, variables: sorted, max_degree })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFilter {
    All,
    EngagedOnly,
}

/// Design matrix, target, and where each row came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub design: DMatrix<f64>,
    pub target: DVector<f64>,
    pub labels: Vec<Term>,
    /// (dataset index, sample index) per row.
    pub provenance: Vec<(usize, usize)>,
}

impl RegressionProblem {
    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn cols(&self) -> usize {
        self.design.ncols()
    }

    pub fn is_well_posed(&self) -> bool {
        self.rows() > self.cols()
    }

    /// Checks shapes and finiteness.
    pub fn validate(&self) -> Result<(), LibraryError> {
        for (j, col) in self.design.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(LibraryError::NonFinite { column: self.labels[j].to_string(), row });
            }
        }
        if let Some(row) = self.target.iter().position(|v| !v.is_finite()) {
            return Err(LibraryError::NonFinite { column: "<target>".into(), row });
        }
        Ok(())
    }

    /// Rows of `self` followed by rows of `other`; labels must agree.
    fn stack(mut parts: Vec<RegressionProblem>) -> RegressionProblem {
        if parts.len() == 1 {
            return parts.pop().unwrap();
        }
        let rows: usize = parts.iter().map(|p| p.rows()).sum();
        let cols = parts[0].cols();
        let labels = parts[0].labels.clone();
        let mut design = DMatrix::zeros(rows, cols);
        let mut target = DVector::zeros(rows);
        let mut provenance = Vec::with_capacity(rows);
        let mut offset = 0;
        for p in &parts {
            design.view_mut((offset, 0), (p.rows(), cols)).copy_from(&p.design);
            target.rows_mut(offset, p.rows()).copy_from(&p.target);
            provenance.extend_from_slice(&p.provenance);
            offset += p.rows();
        }
        RegressionProblem { design, target, labels, provenance }
    }
}

/// Evaluates every library term on the retained samples of one dataset.
/// The target is left empty; [`assemble_problem`] fills it.
pub fn evaluate_library(
    lib: &TermLibrary,
    dataset: &TimeSeriesDataset,
    filter: RowFilter,
) -> Result<RegressionProblem, LibraryError> {
    evaluate_rows(lib, dataset, 0, filter)
}

fn evaluate_rows(
    lib: &TermLibrary,
    dataset: &TimeSeriesDataset,
    dataset_index: usize,
    filter: RowFilter,
) -> Result<RegressionProblem, LibraryError> {
    let rows: Vec<usize> = match filter {
        RowFilter::All => (0..dataset.len()).collect(),
        RowFilter::EngagedOnly => (0..dataset.len()).filter(|&i| dataset.engaged[i]).collect(),
    };
    if rows.is_empty() {
        return Err(LibraryError::NoRows);
    }
    // sinphi only exists where a tooth is in cut
    if filter == RowFilter::All && lib.variables().contains(&Variable::SinPhi) {
        if rows.iter().any(|&i| !dataset.engaged[i]) {
            return Err(LibraryError::Unresolvable(Variable::SinPhi));
        }
    }
    let mut design = DMatrix::zeros(rows.len(), lib.len());
    for (j, term) in lib.terms().iter().enumerate() {
        for (r, &i) in rows.iter().enumerate() {
            let v = term.evaluate(|var| var.value(dataset, i));
            if !v.is_finite() {
                return Err(LibraryError::NonFinite { column: term.to_string(), row: r });
            }
            design[(r, j)] = v;
        }
    }
    Ok(RegressionProblem {
        design,
        target: DVector::zeros(rows.len()),
        labels: lib.terms().to_vec(),
        provenance: rows.into_iter().map(|i| (dataset_index, i)).collect(),
    })
}

/// The six discoverable equations of a single-mode two-axis milling model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquationId {
    #[serde(rename = "x_dot")]
    XDot,
    #[serde(rename = "vx_dot")]
    VxDot,
    #[serde(rename = "y_dot")]
    YDot,
    #[serde(rename = "vy_dot")]
    VyDot,
    #[serde(rename = "Ft")]
    Ft,
    #[serde(rename = "Fn")]
    Fn,
}

impl EquationId {
    pub const ALL: [EquationId; 6] =
        [EquationId::XDot, EquationId::VxDot, EquationId::YDot, EquationId::VyDot, EquationId::Ft, EquationId::Fn];

    pub fn name(self) -> &'static str {
        match self {
            EquationId::XDot => "x_dot",
            EquationId::VxDot => "vx_dot",
            EquationId::YDot => "y_dot",
            EquationId::VyDot => "vy_dot",
            EquationId::Ft => "Ft",
            EquationId::Fn => "Fn",
        }
    }

    pub fn from_name(name: &str) -> Option<EquationId> {
        EquationId::ALL.into_iter().find(|e| e.name() == name)
    }

    pub fn is_force(self) -> bool {
        matches!(self, EquationId::Ft | EquationId::Fn)
    }

    /// Generating variables and polynomial degree of the candidate library.
    pub fn library_spec(self, case: Case) -> (Vec<Variable>, u32) {
        use Variable::*;
        match (self, case) {
            (EquationId::XDot | EquationId::VxDot, _) => (vec![X, Vx, B, Fx], 2),
            (EquationId::YDot | EquationId::VyDot, _) => (vec![Y, Vy, B, Fy], 2),
            (EquationId::Ft | EquationId::Fn, Case::I) => (vec![Dn, B, SinPhi], 2),
            (EquationId::Ft | EquationId::Fn, Case::II) => (vec![Dn, Ndot, B, SinPhi], 3),
        }
    }

    pub fn library(self, case: Case) -> TermLibrary {
        let (vars, degree) = self.library_spec(case);
        build_library(&vars, degree).expect("fixed variable sets are valid")
    }

    fn target(self, ds: &TimeSeriesDataset) -> &[f64] {
        match self {
            EquationId::XDot => &ds.vx,
            EquationId::VxDot => &ds.ax,
            EquationId::YDot => &ds.vy,
            EquationId::VyDot => &ds.ay,
            EquationId::Ft => &ds.ft,
            EquationId::Fn => &ds.fn_,
        }
    }

    fn row_filter(self) -> RowFilter {
        if self.is_force() {
            RowFilter::EngagedOnly
        } else {
            RowFilter::All
        }
    }
}

impl fmt::Display for EquationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Stacks the rows of every dataset into the regression problem of one equation.
pub fn assemble_problem(
    equation: EquationId,
    datasets: &[TimeSeriesDataset],
    case: Case,
) -> Result<RegressionProblem, LibraryError> {
    let first = datasets.first().ok_or(LibraryError::NoDatasets)?;
    for ds in datasets {
        if ds.meta.process.spindle_speed != first.meta.process.spindle_speed {
            return Err(LibraryError::MixedMetadata("spindle speed"));
        }
        if ds.meta.geometry != first.meta.geometry {
            return Err(LibraryError::MixedMetadata("tool geometry"));
        }
        if ds.meta.case != case {
            return Err(LibraryError::MixedMetadata("case"));
        }
    }
    let depths: BTreeSet<u64> = datasets.iter().map(|d| d.meta.process.axial_depth.to_bits()).collect();
    if depths.len() < 2 {
        return Err(LibraryError::SingleDepth(depths.len()));
    }

    let lib = equation.library(case);
    let mut parts = Vec::with_capacity(datasets.len());
    for (k, ds) in datasets.iter().enumerate() {
        let mut part = match evaluate_rows(&lib, ds, k, equation.row_filter()) {
            Err(LibraryError::NoRows) => continue,
            other => other?,
        };
        let target = equation.target(ds);
        for (r, &(_, i)) in part.provenance.iter().enumerate() {
            part.target[r] = target[i];
        }
        parts.push(part);
    }
    if parts.is_empty() {
        return Err(LibraryError::NoRows);
    }
    let problem = RegressionProblem::stack(parts);
    problem.validate()?;
    Ok(problem)
}

/// Unit-norm columns and target plus the factors to undo the scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedProblem {
    pub problem: RegressionProblem,
    pub column_scales: Vec<f64>,
    pub target_scale: f64,
    /// Columns too small to normalize; never selectable.
    pub excluded: Vec<bool>,
}

impl NormalizedProblem {
    pub fn excluded_labels(&self) -> Vec<&Term> {
        self.problem.labels.iter().zip(&self.excluded).filter(|(_, e)| **e).map(|(t, _)| t).collect()
    }

    /// Reverses the column scaling of the design matrix.
    pub fn denormalized_design(&self) -> DMatrix<f64> {
        let mut m = self.problem.design.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= self.column_scales[j];
        }
        m
    }

    /// Maps a coefficient on the normalized scale to the original scale.
    pub fn original_coefficient(&self, column: usize, normalized: f64) -> f64 {
        normalized * self.target_scale / self.column_scales[column]
    }
}

/// Divides each column and the target by its Euclidean norm.
pub fn normalize_columns(problem: &RegressionProblem) -> Result<NormalizedProblem, LibraryError> {
    let target_scale = problem.target.norm();
    if !(target_scale > 0.0) || !target_scale.is_finite() {
        return Err(LibraryError::ZeroTarget);
    }
    let floor = 1e-14 * (problem.rows() as f64).sqrt();
    let mut design = problem.design.clone();
    let mut column_scales = Vec::with_capacity(problem.cols());
    let mut excluded = Vec::with_capacity(problem.cols());
    for mut col in design.column_iter_mut() {
        let norm = col.norm();
        if norm < floor {
            column_scales.push(1.0);
            excluded.push(true);
        } else {
            col /= norm;
            column_scales.push(norm);
            excluded.push(false);
        }
    }
    Ok(NormalizedProblem {
        problem: RegressionProblem {
            design,
            target: &problem.target / target_scale,
            labels: problem.labels.clone(),
            provenance: problem.provenance.clone(),
        },
        column_scales,
        target_scale,
        excluded,
    })
}

/// Binomial coefficient, for library sizes.
pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

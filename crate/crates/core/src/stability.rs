//! Zero-order (averaged) stability lobes and a Poincaré-section classifier.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TimeSeriesDataset;
use crate::discovery::{DiscoveredEquation, DiscoveredSystem};
use crate::dynamics::{engagement_window, ModalAxis, StructuralModel, ToolGeometry};
use crate::library::{EquationId, Term, Variable};
use crate::simulator::once_per_tooth_sample;

type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("nonlinear or mismatched support in {0}")]
    Support(EquationId),
    #[error("{0} has a non-positive force gain")]
    ForceGain(EquationId),
    #[error("engagement window ({0}, {1}) must lie within [0, pi]")]
    Window(f64, f64),
    #[error("no positive limiting depth found; check the frequency sweep")]
    EmptyDiagram,
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("record too short: {0} once-per-tooth points, need {1}")]
    TooShort(usize, usize),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad csv: {0}")]
    Format(String),
}

/// Linear model the lobe computation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMillingModel {
    pub structure: StructuralModel,
    pub ktc: f64,
    pub knc: f64,
    pub teeth: u32,
    pub window: (f64, f64),
}

impl LinearMillingModel {
    pub fn radial_ratio(&self) -> f64 {
        self.knc / self.ktc
    }

    pub fn highest_natural_frequency(&self) -> f64 {
        self.structure
            .x_modes
            .iter()
            .chain(&self.structure.y_modes)
            .map(|m| (m.stiffness / m.mass).sqrt())
            .fold(0.0, f64::max)
    }
}

fn exact_support(eq: &DiscoveredEquation, expected: &[Term]) -> bool {
    let mut want: Vec<&Term> = expected.iter().collect();
    want.sort();
    let got: Vec<&Term> = eq.terms.iter().map(|w| &w.term).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    got.len() == eq.terms.len() && got == want
}

fn modal_axis(system: &DiscoveredSystem, id: EquationId, q: Variable, v: Variable, f: Variable) -> Result<ModalAxis, StabilityError> {
    let eq = system.equations.get(&id).ok_or(StabilityError::Support(id))?;
    let (tq, tv, tf) = (Term::var(q), Term::var(v), Term::var(f));
    if !exact_support(eq, &[tq.clone(), tv.clone(), tf.clone()]) {
        return Err(StabilityError::Support(id));
    }
    let coeff = |t: &Term| eq.coefficient(t).unwrap_or(0.0);
    let a_f = coeff(&tf);
    if !(a_f > 0.0) {
        return Err(StabilityError::ForceGain(id));
    }
    Ok(ModalAxis { mass: 1.0 / a_f, damping: -coeff(&tv) / a_f, stiffness: -coeff(&tq) / a_f })
}

fn cutting_coefficient(system: &DiscoveredSystem, id: EquationId) -> Result<f64, StabilityError> {
    let eq = system.equations.get(&id).ok_or(StabilityError::Support(id))?;
    let dn = Term::from_factors([(Variable::B, 1), (Variable::Dn, 1)]);
    let sin = Term::from_factors([(Variable::B, 1), (Variable::SinPhi, 1)]);
    if !exact_support(eq, &[dn.clone(), sin]) {
        return Err(StabilityError::Support(id));
    }
    Ok(eq.coefficient(&dn).unwrap_or(0.0).abs())
}

/// Modal and cutting parameters read off a linear (Case I pattern) system.
pub fn extract_linear_model(system: &DiscoveredSystem, geometry: &ToolGeometry) -> Result<LinearMillingModel, StabilityError> {
    for id in [EquationId::XDot, EquationId::YDot] {
        let eq = system.equations.get(&id).ok_or(StabilityError::Support(id))?;
        let v = if id == EquationId::XDot { Variable::Vx } else { Variable::Vy };
        if !exact_support(eq, &[Term::var(v)]) {
            return Err(StabilityError::Support(id));
        }
    }
    let x = modal_axis(system, EquationId::VxDot, Variable::X, Variable::Vx, Variable::Fx)?;
    let y = modal_axis(system, EquationId::VyDot, Variable::Y, Variable::Vy, Variable::Fy)?;
    let ktc = cutting_coefficient(system, EquationId::Ft)?;
    let knc = cutting_coefficient(system, EquationId::Fn)?;
    if !(ktc > 0.0) {
        return Err(StabilityError::ForceGain(EquationId::Ft));
    }
    Ok(LinearMillingModel {
        structure: StructuralModel { x_modes: vec![x], y_modes: vec![y] },
        ktc,
        knc,
        teeth: geometry.teeth,
        window: engagement_window(geometry),
    })
}

/// Averaged directional factors, textbook form: x along feed, y normal to
/// it, tooth angle from +y, radial force positive inward.
pub fn directional_factors(kr: f64, phi_start: f64, phi_exit: f64) -> Result<[f64; 4], StabilityError> {
    if !(0.0 <= phi_start && phi_start < phi_exit && phi_exit <= PI) {
        return Err(StabilityError::Window(phi_start, phi_exit));
    }
    let axx = |p: f64| 0.5 * ((2.0 * p).cos() - 2.0 * kr * p + kr * (2.0 * p).sin());
    let axy = |p: f64| 0.5 * (-(2.0 * p).sin() - 2.0 * p + kr * (2.0 * p).cos());
    let ayx = |p: f64| 0.5 * (-(2.0 * p).sin() + 2.0 * p + kr * (2.0 * p).cos());
    let ayy = |p: f64| 0.5 * (-(2.0 * p).cos() - 2.0 * kr * p - kr * (2.0 * p).sin());
    let span = |f: &dyn Fn(f64) -> f64| f(phi_exit) - f(phi_start);
    Ok([span(&axx), span(&axy), span(&ayx), span(&ayy)])
}

/// Directional factors in the simulator's convention, where the chip is
/// `ft·sinφ + n(t-τ) - n(t)` and the normal force acts along `n`. Relative to
/// the textbook form this flips the sign of Kr and of the whole matrix.
pub fn model_directional_factors(kr: f64, phi_start: f64, phi_exit: f64) -> Result<[f64; 4], StabilityError> {
    let a = directional_factors(-kr, phi_start, phi_exit)?;
    Ok(a.map(|v| -v))
}

/// Direct compliance `Σ 1/(k - mω² + icω)`.
pub fn frequency_response(modes: &[ModalAxis], omega: f64) -> C64 {
    modes
        .iter()
        .map(|m| C64::new(1.0, 0.0) / C64::new(m.stiffness - m.mass * omega * omega, m.damping * omega))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LobePoint {
    pub lobe_index: u32,
    pub omega_rpm: f64,
    pub b_lim_m: f64,
    /// Chatter frequency, rad/s.
    pub chatter_rad_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LobeDiagram {
    /// Sorted by (lobe_index, omega_rpm).
    pub points: Vec<LobePoint>,
    pub sweep: FrequencySweep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySweep {
    /// rad/s
    pub start: f64,
    /// rad/s
    pub end: f64,
    pub points: usize,
}

impl FrequencySweep {
    /// 0.5x to 1.5x the highest natural frequency, 2000 points.
    pub fn around(model: &LinearMillingModel) -> Self {
        let wn = model.highest_natural_frequency();
        Self { start: 0.5 * wn, end: 1.5 * wn, points: 2000 }
    }

    fn grid(&self) -> Result<Vec<f64>, StabilityError> {
        if !(self.start > 0.0 && self.end > self.start && self.points >= 2) {
            return Err(StabilityError::Sweep(format!("{self:?}")));
        }
        let h = (self.end - self.start) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.start + h * i as f64).collect())
    }
}

/// Limiting depth and lobe phase for each positive root at one chatter frequency.
fn critical_roots(model: &LinearMillingModel, a: &[f64; 4], omega: f64) -> Vec<(f64, f64)> {
    let gx = frequency_response(&model.structure.x_modes, omega);
    let gy = frequency_response(&model.structure.y_modes, omega);
    let [axx, axy, ayx, ayy] = *a;
    let a0 = gx * gy * (axx * ayy - axy * ayx);
    let a1 = gx * axx + gy * ayy;
    let roots: Vec<C64> = if a0.norm() < 1e-300 {
        vec![-C64::new(1.0, 0.0) / a1]
    } else {
        let disc = (a1 * a1 - a0 * 4.0).sqrt();
        vec![(-a1 + disc) / (a0 * 2.0), (-a1 - disc) / (a0 * 2.0)]
    };
    let nt = f64::from(model.teeth);
    roots
        .into_iter()
        .filter(|l| l.re != 0.0 && l.is_finite())
        .filter_map(|l| {
            let kappa = l.im / l.re;
            let b = -2.0 * PI * l.re / (nt * model.ktc) * (1.0 + kappa * kappa);
            (b > 0.0 && b.is_finite()).then_some((b, kappa))
        })
        .collect()
}

pub fn zero_order_lobes(
    model: &LinearMillingModel,
    sweep: FrequencySweep,
    lobes: std::ops::RangeInclusive<u32>,
) -> Result<LobeDiagram, StabilityError> {
    let a = model_directional_factors(model.radial_ratio(), model.window.0, model.window.1)?;
    let nt = f64::from(model.teeth);
    let mut points = Vec::new();
    for omega in sweep.grid()? {
        for (b, kappa) in critical_roots(model, &a, omega) {
            let eps = PI - 2.0 * kappa.atan();
            for k in lobes.clone() {
                let period = (eps + 2.0 * PI * f64::from(k)) / omega;
                if period > 0.0 {
                    points.push(LobePoint { lobe_index: k, omega_rpm: 60.0 / (nt * period), b_lim_m: b, chatter_rad_s: omega });
                }
            }
        }
    }
    if points.is_empty() {
        return Err(StabilityError::EmptyDiagram);
    }
    points.sort_by(|p, q| p.lobe_index.cmp(&q.lobe_index).then(p.omega_rpm.total_cmp(&q.omega_rpm)));
    Ok(LobeDiagram { points, sweep })
}

impl LobeDiagram {
    /// Lowest limiting depth over all lobes at each rpm; `None` where no
    /// lobe covers that speed.
    pub fn envelope(&self, rpm: &[f64]) -> Vec<Option<f64>> {
        let mut lobes: Vec<Vec<(f64, f64)>> = Vec::new();
        for p in &self.points {
            let k = p.lobe_index as usize;
            if lobes.len() <= k {
                lobes.resize(k + 1, Vec::new());
            }
            lobes[k].push((p.omega_rpm, p.b_lim_m));
        }
        rpm.iter()
            .map(|&n| {
                lobes
                    .iter()
                    .filter_map(|pts| interpolate(pts, n))
                    .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b))))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StabilityError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lobe_index", "omega_rpm", "b_lim_m"])?;
        for p in &self.points {
            w.write_record([p.lobe_index.to_string(), format!("{:?}", p.omega_rpm), format!("{:?}", p.b_lim_m)])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the three-column CSV; chatter frequencies are not stored and come back as NaN.
    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<LobePoint>, StabilityError> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
        if header != ["lobe_index", "omega_rpm", "b_lim_m"] {
            return Err(StabilityError::Format(format!("unexpected header {header:?}")));
        }
        let mut out = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| StabilityError::Format(format!("row {row}: missing field")));
            let bad = |e: &dyn std::fmt::Display| StabilityError::Format(format!("row {row}: {e}"));
            let point = LobePoint {
                lobe_index: field(0)?.parse().map_err(|e| bad(&e))?,
                omega_rpm: field(1)?.parse().map_err(|e| bad(&e))?,
                b_lim_m: field(2)?.parse().map_err(|e| bad(&e))?,
                chatter_rad_s: f64::NAN,
            };
            if !(point.b_lim_m > 0.0 && point.b_lim_m.is_finite() && point.omega_rpm.is_finite()) {
                return Err(bad(&"non-positive or non-finite value"));
            }
            out.push(point);
        }
        Ok(out)
    }
}

/// Linear interpolation on a curve given as (rpm, b) samples in sweep order.
fn interpolate(points: &[(f64, f64)], rpm: f64) -> Option<f64> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let i = sorted.partition_point(|p| p.0 < rpm);
    if i == 0 {
        return (sorted.first()?.0 == rpm).then(|| sorted[0].1);
    }
    let (r0, b0) = sorted[i - 1];
    let (r1, b1) = *sorted.get(i)?;
    if r1 == r0 {
        return Some(b0.min(b1));
    }
    Some(b0 + (b1 - b0) * (rpm - r0) / (r1 - r0))
}

/// Evenly spaced rpm values.
pub fn rpm_grid(rpm_min: f64, rpm_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![rpm_min];
    }
    (0..points).map(|i| rpm_min + (rpm_max - rpm_min) * i as f64 / (points - 1) as f64).collect()
}

/// Largest relative envelope gap `|b - b_ref| / b_ref` over the grid points
/// both diagrams cover.
pub fn max_relative_deviation(diagram: &LobeDiagram, reference: &LobeDiagram, rpm: &[f64]) -> Option<f64> {
    diagram
        .envelope(rpm)
        .into_iter()
        .zip(reference.envelope(rpm))
        .filter_map(|(b, r)| Some((b? - r?).abs() / r?))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Divergent,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Divergent => "divergent",
        })
    }
}

pub const POINCARE_DISCARD: f64 = 0.5;
pub const POINCARE_POINTS: usize = 20;
pub const POINCARE_TOLERANCE: f64 = 0.01;

/// Once-per-tooth spread of the last 20 section points, each coordinate
/// scaled by its peak over the retained record.
pub fn poincare_spread(dataset: &TimeSeriesDataset) -> Result<f64, StabilityError> {
    let section = once_per_tooth_sample(dataset, POINCARE_DISCARD);
    if section.len() < POINCARE_POINTS {
        return Err(StabilityError::TooShort(section.len(), POINCARE_POINTS));
    }
    let skip = (POINCARE_DISCARD * dataset.len() as f64).ceil() as usize;
    let peak = |v: &[f64]| v[skip..].iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let (px, pv) = (peak(&dataset.x), peak(&dataset.vx));
    let scale = |v: f64, p: f64| if p > 0.0 { v / p } else { 0.0 };
    let tail: Vec<(f64, f64)> =
        section[section.len() - POINCARE_POINTS..].iter().map(|&(x, v)| (scale(x, px), scale(v, pv))).collect();
    let mut spread = 0.0f64;
    for (i, a) in tail.iter().enumerate() {
        for b in &tail[i + 1..] {
            spread = spread.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    Ok(spread)
}

/// A record shorter than its metadata promises came from an aborted run.
pub fn classify_stability(dataset: &TimeSeriesDataset, tolerance: f64) -> Result<Stability, StabilityError> {
    let expected = dataset.meta.revolutions as usize * dataset.meta.steps_per_rev as usize;
    if dataset.len() < expected {
        return Ok(Stability::Divergent);
    }
    let spread = poincare_spread(dataset)?;
    Ok(if spread < tolerance { Stability::Stable } else { Stability::Unstable })
}

pub fn write_poincare_csv<W: Write>(points: &[(f64, f64)], writer: W) -> Result<(), StabilityError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "vx"])?;
    for (x, v) in points {
        w.write_record([format!("{x:?}"), format!("{v:?}")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

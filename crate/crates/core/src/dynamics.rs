//! Cutting-mechanics primitives: structural and force-model types, tooth
//! kinematics, chip thickness, and the force projections between the
//! cutter frame (tangential/normal) and the machine frame (x/y).

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid modal axis: {0}")]
    Modal(String),
    #[error("structural model needs at least one mode on each axis")]
    NoModes,
    #[error("invalid force model: {0}")]
    Force(String),
    #[error("invalid tool geometry: {0}")]
    Geometry(String),
    #[error("invalid process point: {0}")]
    Process(String),
    #[error("tooth force requested out of cut (h = {0:e})")]
    NotCutting(f64),
}

/// Which force model a cut was generated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Case {
    /// Regenerative cutting force only.
    I,
    /// Regenerative cutting force plus edge force and process damping.
    II,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::II => "II",
        })
    }
}

impl std::str::FromStr for Case {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" | "i" | "1" => Ok(Case::I),
            "II" | "ii" | "2" => Ok(Case::II),
            other => Err(ModelError::Force(format!("unknown case '{other}'"))),
        }
    }
}

/// One structural mode along a machine axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalAxis {
    /// kg
    pub mass: f64,
    /// N·s/m
    pub damping: f64,
    /// N/m
    pub stiffness: f64,
}

impl ModalAxis {
    pub fn new(mass: f64, damping: f64, stiffness: f64) -> Result<Self, ModelError> {
        let mode = Self { mass, damping, stiffness };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(ModelError::Modal(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.stiffness.is_finite() && self.stiffness > 0.0) {
            return Err(ModelError::Modal(format!("stiffness must be > 0, got {}", self.stiffness)));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(ModelError::Modal(format!("damping must be >= 0, got {}", self.damping)));
        }
        Ok(())
    }

    /// Undamped natural frequency in Hz.
    pub fn natural_frequency_hz(&self) -> f64 {
        (self.stiffness / self.mass).sqrt() / TAU
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping / (2.0 * (self.stiffness * self.mass).sqrt())
    }
}

/// Tool-tip structural dynamics with `p` modes in x and `q` modes in y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    pub x_modes: Vec<ModalAxis>,
    pub y_modes: Vec<ModalAxis>,
}

impl StructuralModel {
    pub fn new(x_modes: Vec<ModalAxis>, y_modes: Vec<ModalAxis>) -> Result<Self, ModelError> {
        let model = Self { x_modes, y_modes };
        model.validate()?;
        Ok(model)
    }

    /// Same single mode on both axes.
    pub fn symmetric(mode: ModalAxis) -> Result<Self, ModelError> {
        Self::new(vec![mode], vec![mode])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.x_modes.is_empty() || self.y_modes.is_empty() {
            return Err(ModelError::NoModes);
        }
        self.x_modes.iter().chain(&self.y_modes).try_for_each(ModalAxis::validate)
    }

    pub fn is_single_mode(&self) -> bool {
        self.x_modes.len() == 1 && self.y_modes.len() == 1
    }
}

/// Cutting, edge, and process-damping coefficients of the tooth force model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceModelSpec {
    /// Tangential cutting coefficient, N/m².
    pub ktc: f64,
    /// Normal cutting coefficient, N/m².
    pub knc: f64,
    /// Tangential edge coefficient, N/m.
    pub kte: f64,
    /// Normal edge coefficient, N/m.
    pub kne: f64,
    /// Tangential process-damping coefficient, N·s/m².
    pub ct: f64,
    /// Normal process-damping coefficient, N·s/m².
    pub cn: f64,
}

impl ForceModelSpec {
    pub fn new(ktc: f64, knc: f64, kte: f64, kne: f64, ct: f64, cn: f64) -> Result<Self, ModelError> {
        let model = Self { ktc, knc, kte, kne, ct, cn };
        model.validate()?;
        Ok(model)
    }

    /// Regenerative cutting force only (no edge force, no process damping).
    pub fn cutting_only(ktc: f64, knc: f64) -> Result<Self, ModelError> {
        Self::new(ktc, knc, 0.0, 0.0, 0.0, 0.0)
    }

    /// Coefficients from specific cutting energy `ks` (N/m²) and force angle `beta_deg`.
    pub fn from_specific_energy(ks: f64, beta_deg: f64) -> Result<Self, ModelError> {
        let beta = beta_deg.to_radians();
        Self::cutting_only(ks * beta.sin(), ks * beta.cos())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.ktc.is_finite() && self.ktc > 0.0 && self.knc.is_finite() && self.knc > 0.0) {
            return Err(ModelError::Force("ktc and knc must be > 0".into()));
        }
        for (name, v) in [("kte", self.kte), ("kne", self.kne), ("Ct", self.ct), ("Cn", self.cn)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Force(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn has_edge_force(&self) -> bool {
        self.kte != 0.0 || self.kne != 0.0
    }

    pub fn has_process_damping(&self) -> bool {
        self.ct != 0.0 || self.cn != 0.0
    }

    /// knc / ktc
    pub fn radial_ratio(&self) -> f64 {
        self.knc / self.ktc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MillingDirection {
    Up,
    Down,
}

impl fmt::Display for MillingDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MillingDirection::Up => "up",
            MillingDirection::Down => "down",
        })
    }
}

impl std::str::FromStr for MillingDirection {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(MillingDirection::Up),
            "down" => Ok(MillingDirection::Down),
            other => Err(ModelError::Geometry(format!("unknown milling direction '{other}'"))),
        }
    }
}

/// Straight-fluted cutter with equally spaced teeth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolGeometry {
    /// m
    pub diameter: f64,
    pub teeth: u32,
    /// Radial depth as a fraction of the diameter.
    pub radial_immersion: f64,
    pub milling_direction: MillingDirection,
}

impl ToolGeometry {
    pub fn new(
        diameter: f64,
        teeth: u32,
        radial_immersion: f64,
        milling_direction: MillingDirection,
    ) -> Result<Self, ModelError> {
        let g = Self { diameter, teeth, radial_immersion, milling_direction };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.diameter.is_finite() && self.diameter > 0.0) {
            return Err(ModelError::Geometry(format!("diameter must be > 0, got {}", self.diameter)));
        }
        if self.teeth == 0 {
            return Err(ModelError::Geometry("tool needs at least one tooth".into()));
        }
        if !(self.radial_immersion > 0.0 && self.radial_immersion <= 1.0) {
            return Err(ModelError::Geometry(format!(
                "radial immersion must lie in (0, 1], got {}",
                self.radial_immersion
            )));
        }
        Ok(())
    }

    /// Angular spacing between adjacent teeth (rad).
    pub fn pitch(&self) -> f64 {
        TAU / f64::from(self.teeth)
    }

    /// Width of the engagement arc (rad).
    pub fn engagement_arc(&self) -> f64 {
        let (start, exit) = engagement_window(self);
        exit - start
    }
}

/// Spindle speed, axial depth, and feed for one cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessPoint {
    /// rev/min
    pub spindle_speed: f64,
    /// m
    pub axial_depth: f64,
    /// m per tooth
    pub feed_per_tooth: f64,
}

impl ProcessPoint {
    pub fn new(spindle_speed: f64, axial_depth: f64, feed_per_tooth: f64) -> Result<Self, ModelError> {
        let p = Self { spindle_speed, axial_depth, feed_per_tooth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("spindle speed", self.spindle_speed),
            ("axial depth", self.axial_depth),
            ("feed per tooth", self.feed_per_tooth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::Process(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Cutting speed at the tool periphery, m/s. Constant for a cut.
    pub fn cutting_speed(&self, geometry: &ToolGeometry) -> f64 {
        PI * geometry.diameter * self.spindle_speed / 60.0
    }
}

/// Displacement and velocity of one mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalState {
    pub q: f64,
    pub v: f64,
}

/// Modal coordinates of every mode on both axes. The tool-tip position on an
/// axis is the sum of its modal displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub x_modes: Vec<ModalState>,
    pub y_modes: Vec<ModalState>,
}

impl StateVector {
    pub fn zeros(structure: &StructuralModel) -> Self {
        Self {
            x_modes: vec![ModalState::default(); structure.x_modes.len()],
            y_modes: vec![ModalState::default(); structure.y_modes.len()],
        }
    }

    /// Single-mode state from tip values.
    pub fn single(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self {
            x_modes: vec![ModalState { q: x, v: vx }],
            y_modes: vec![ModalState { q: y, v: vy }],
        }
    }

    pub fn x(&self) -> f64 {
        self.x_modes.iter().map(|m| m.q).sum()
    }

    pub fn vx(&self) -> f64 {
        self.x_modes.iter().map(|m| m.v).sum()
    }

    pub fn y(&self) -> f64 {
        self.y_modes.iter().map(|m| m.q).sum()
    }

    pub fn vy(&self) -> f64 {
        self.y_modes.iter().map(|m| m.v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.x_modes.iter().chain(&self.y_modes).all(|m| m.q.is_finite() && m.v.is_finite())
    }

    pub fn matches(&self, structure: &StructuralModel) -> bool {
        self.x_modes.len() == structure.x_modes.len() && self.y_modes.len() == structure.y_modes.len()
    }
}

/// Per-sample kinematics of the tooth in cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToothKinematics {
    /// Angle of the engaged tooth; `None` out of cut.
    pub phi: Option<f64>,
    pub engaged: bool,
    /// n(t - τ) - n(t), m
    pub delta_n: f64,
    /// Normal velocity, m/s
    pub n_dot: f64,
}

impl ToothKinematics {
    pub const IDLE: ToothKinematics =
        ToothKinematics { phi: None, engaged: false, delta_n: 0.0, n_dot: 0.0 };
}

/// Angle of tooth `tooth_index` at time `t`, wrapped to [0, 2π).
pub fn tooth_angle(t: f64, omega_rpm: f64, tooth_index: u32, teeth: u32) -> f64 {
    let raw = TAU * omega_rpm / 60.0 * t + f64::from(tooth_index) * TAU / f64::from(teeth);
    let wrapped = raw.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Entry and exit angles of the cut.
pub fn engagement_window(geometry: &ToolGeometry) -> (f64, f64) {
    let arc = (1.0 - 2.0 * geometry.radial_immersion).clamp(-1.0, 1.0).acos();
    match geometry.milling_direction {
        MillingDirection::Up => (0.0, arc),
        MillingDirection::Down => (PI - arc, PI),
    }
}

/// Component of a machine-frame vector along the chip-thickness direction at
/// tooth angle `phi`. Applied to velocities it gives the normal velocity.
pub fn normal_projection(x: f64, y: f64, phi: f64) -> f64 {
    x * phi.sin() + y * phi.cos()
}

/// Instantaneous chip thickness; negative values mean the tooth has left the cut.
pub fn chip_thickness(ft: f64, phi: f64, n_prev: f64, n_cur: f64) -> f64 {
    ft * phi.sin() + (n_prev - n_cur)
}

/// Tangential and normal tooth forces for a tooth that is cutting (`h > 0`).
pub fn tooth_forces(
    h: f64,
    n_dot: f64,
    b: f64,
    cutting_speed: f64,
    model: &ForceModelSpec,
) -> Result<(f64, f64), ModelError> {
    if !(h > 0.0) {
        return Err(ModelError::NotCutting(h));
    }
    let damping = b / cutting_speed * n_dot * n_dot;
    let ft = model.ktc * b * h + model.kte * b - model.ct * damping;
    let fn_ = model.knc * b * h + model.kne * b - model.cn * damping;
    Ok((ft, fn_))
}

/// Rotate (tangential, normal) forces into the machine frame.
pub fn project_forces(ft: f64, fn_: f64, phi: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    (-ft * c + fn_ * s, ft * s + fn_ * c)
}

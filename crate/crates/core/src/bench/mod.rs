//! End-to-end experiments: sweeps over spindle speed, noise ratio and seed.

mod noise;
mod truth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use noise::{inject_noise, mix_seed, std_dev, DerivedNoise, NoiseSpec};
pub use truth::{a_metric, coefficient_deviation, CoefficientDeviation, GroundTruth, TermDeviation};

use crate::dataset::TimeSeriesDataset;
use crate::discovery::{discover_system, DiscoveredSystem, DiscoveryError, SolverOptions, SystemConfig};
use crate::dynamics::{
    Case, ForceModelSpec, MillingDirection, ModalAxis, ModelError, ProcessPoint, StructuralModel, ToolGeometry,
};
use crate::library::EquationId;
use crate::simulator::{run_simulation, SimulationConfig, SimulationError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error("dataset already carries noise (ratio {0})")]
    AlreadyNoisy(f64),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Noise ratios of the published tables, 0 to 1000 %.
pub const NOISE_SWEEP: [f64; 9] = [0.0, 0.0001, 0.001, 0.01, 0.1, 0.5, 1.0, 5.0, 10.0];
pub const SPEED_SWEEP: [f64; 5] = [4000.0, 6000.0, 8000.0, 10000.0, 12000.0];
pub const DEPTH_SWEEP_MM: [f64; 6] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];

/// Physical parameters plus sweep grid. Every key is optional in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub m: f64,
    pub k: f64,
    pub c: f64,
    #[serde(rename = "Ks")]
    pub ks: f64,
    pub beta_deg: f64,
    pub diameter_m: f64,
    pub teeth: u32,
    pub radial_immersion: f64,
    pub direction: MillingDirection,
    pub ft_m: f64,
    #[serde(rename = "Ct")]
    pub ct: f64,
    #[serde(rename = "Cn")]
    pub cn: f64,
    pub kte: f64,
    pub kne: f64,
    pub speeds_rpm: Vec<f64>,
    pub depths_mm: Vec<f64>,
    pub noise_ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    pub revolutions: u32,
    pub steps_per_rev: u32,
    /// Leading samples of each cut used for discovery.
    pub train_samples: usize,
    pub lambda2: f64,
    #[serde(rename = "bound_M")]
    pub bound_m: f64,
    pub k_overrides: BTreeMap<EquationId, usize>,
    pub branch_and_bound: bool,
    pub derived_noise: DerivedNoise,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m: 0.198,
            k: 5e6,
            c: 19.91,
            ks: 750e6,
            beta_deg: 68.0,
            diameter_m: 0.02,
            teeth: 4,
            radial_immersion: 0.25,
            direction: MillingDirection::Up,
            ft_m: 1e-4,
            ct: 1400.0,
            cn: 1400.0,
            kte: 25000.0,
            kne: 25000.0,
            speeds_rpm: SPEED_SWEEP.to_vec(),
            depths_mm: DEPTH_SWEEP_MM.to_vec(),
            noise_ratios: NOISE_SWEEP.to_vec(),
            seeds: vec![1],
            revolutions: 40,
            steps_per_rev: 1000,
            train_samples: 2000,
            lambda2: crate::discovery::DEFAULT_LAMBDA2,
            bound_m: 1000.0,
            k_overrides: BTreeMap::new(),
            branch_and_bound: false,
            derived_noise: DerivedNoise::Recompute,
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        self.structure()?;
        self.force_model(Case::II)?;
        self.geometry()?;
        for &om in &self.speeds_rpm {
            for &b in &self.depths_mm {
                self.process(om, b * 1e-3)?;
            }
        }
        if let Some(r) = self.noise_ratios.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(BenchError::Config(format!("noise ratio must be >= 0, got {r}")));
        }
        if self.revolutions == 0 || self.steps_per_rev == 0 || self.train_samples == 0 {
            return Err(BenchError::Config("revolutions, steps_per_rev and train_samples must be > 0".into()));
        }
        if self.train_samples > (self.revolutions as usize) * (self.steps_per_rev as usize) {
            return Err(BenchError::Config("train_samples exceeds the simulated record".into()));
        }
        Ok(())
    }

    pub fn structure(&self) -> Result<StructuralModel, BenchError> {
        Ok(StructuralModel::symmetric(ModalAxis::new(self.m, self.c, self.k)?)?)
    }

    pub fn force_model(&self, case: Case) -> Result<ForceModelSpec, BenchError> {
        let cutting = ForceModelSpec::from_specific_energy(self.ks, self.beta_deg)?;
        Ok(match case {
            Case::I => cutting,
            Case::II => ForceModelSpec::new(cutting.ktc, cutting.knc, self.kte, self.kne, self.ct, self.cn)?,
        })
    }

    pub fn geometry(&self) -> Result<ToolGeometry, BenchError> {
        Ok(ToolGeometry::new(self.diameter_m, self.teeth, self.radial_immersion, self.direction)?)
    }

    pub fn process(&self, omega_rpm: f64, depth_m: f64) -> Result<ProcessPoint, BenchError> {
        Ok(ProcessPoint::new(omega_rpm, depth_m, self.ft_m)?)
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig::new(self.revolutions, self.steps_per_rev)
    }

    pub fn system_config(&self, case: Case) -> SystemConfig {
        let mut cfg = SystemConfig::defaults_for(case);
        cfg.lambda2 = self.lambda2;
        cfg.bound_m = self.bound_m;
        cfg.k_per_equation.extend(self.k_overrides.iter().map(|(id, k)| (*id, *k)));
        cfg
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { branch_and_bound: self.branch_and_bound, ..SolverOptions::default() }
    }

    pub fn ground_truth(&self, case: Case, omega_rpm: f64) -> Result<GroundTruth, BenchError> {
        GroundTruth::new(&self.structure()?, &self.force_model(case)?, &self.geometry()?, omega_rpm, self.ft_m)
    }
}

/// Simulates one cut. A diverging cut keeps its finite prefix.
pub fn simulate_cut(cfg: &BenchConfig, case: Case, omega_rpm: f64, depth_m: f64) -> Result<TimeSeriesDataset, BenchError> {
    let result = run_simulation(
        &cfg.structure()?,
        &cfg.force_model(case)?,
        &cfg.geometry()?,
        &cfg.process(omega_rpm, depth_m)?,
        &cfg.simulation(),
    );
    match result {
        Ok(ds) => Ok(ds),
        Err(SimulationError::Divergent { partial, .. }) => Ok(*partial),
        Err(e) => Err(e.into()),
    }
}

/// Noise-free training cuts for one spindle speed, truncated to `train_samples`.
pub fn training_cuts(cfg: &BenchConfig, case: Case, omega_rpm: f64) -> Result<Vec<TimeSeriesDataset>, BenchError> {
    cfg.depths_mm
        .par_iter()
        .map(|&b| {
            let ds = simulate_cut(cfg, case, omega_rpm, b * 1e-3)?;
            if ds.len() < cfg.train_samples {
                return Err(BenchError::Config(format!(
                    "cut at {omega_rpm} rpm, {b} mm diverged after {} samples",
                    ds.len()
                )));
            }
            Ok(ds.truncated(cfg.train_samples))
        })
        .collect()
}

/// Seed of the noise on cut `index` for a cell seed.
pub fn cut_seed(cell_seed: u64, omega_rpm: f64, index: usize) -> u64 {
    mix_seed(mix_seed(cell_seed, omega_rpm.to_bits()), index as u64)
}

pub fn noisy_cuts(
    clean: &[TimeSeriesDataset],
    ratio: f64,
    seed: u64,
    derived: DerivedNoise,
) -> Result<Vec<TimeSeriesDataset>, BenchError> {
    clean
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let spec = NoiseSpec::new(ratio, cut_seed(seed, ds.meta.process.spindle_speed, i))?.with_derived(derived);
            inject_noise(ds, spec)
        })
        .collect()
}

/// Noise, discover, and label the system with the cell's ratio and seed.
pub fn discover_cell(
    cfg: &BenchConfig,
    case: Case,
    clean: &[TimeSeriesDataset],
    ratio: f64,
    seed: u64,
) -> Result<DiscoveredSystem, BenchError> {
    let cuts = noisy_cuts(clean, ratio, seed, cfg.derived_noise)?;
    let mut system = discover_system(&cuts, case, &cfg.system_config(case), cfg.solver())?;
    system.noise_ratio = ratio;
    system.seed = seed;
    Ok(system)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok {
        a: usize,
        deviation: CoefficientDeviation,
        wall_time_s: f64,
        system: DiscoveredSystem,
    },
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub omega_rpm: f64,
    pub noise_ratio: f64,
    pub seed: u64,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn a(&self) -> Option<usize> {
        match &self.outcome {
            CellOutcome::Ok { a, .. } => Some(*a),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub case: Case,
    pub speeds_rpm: Vec<f64>,
    pub noise_ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Ordered by speed, then ratio, then seed.
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    pub fn cell(&self, omega_rpm: f64, ratio: f64, seed: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.omega_rpm == omega_rpm && c.noise_ratio == ratio && c.seed == seed)
    }

    /// Seed-averaged A value; `None` when every seed failed.
    pub fn mean_a(&self, omega_rpm: f64, ratio: f64) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.omega_rpm == omega_rpm && c.noise_ratio == ratio)
            .filter_map(|c| c.a().map(|a| a as f64))
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// JSON with wall times zeroed; equal for equal inputs.
    pub fn canonical_json(&self) -> Result<String, serde_json::Error> {
        let mut copy = self.clone();
        for cell in &mut copy.cells {
            if let CellOutcome::Ok { wall_time_s, system, .. } = &mut cell.outcome {
                *wall_time_s = 0.0;
                system.wall_time_s = 0.0;
            }
        }
        serde_json::to_string_pretty(&copy)
    }
}

fn score(cfg: &BenchConfig, case: Case, omega: f64, clean: &[TimeSeriesDataset], ratio: f64, seed: u64) -> CellOutcome {
    let run = || -> Result<CellOutcome, BenchError> {
        let started = Instant::now();
        let system = discover_cell(cfg, case, clean, ratio, seed)?;
        let wall_time_s = started.elapsed().as_secs_f64();
        let truth = cfg.ground_truth(case, omega)?;
        Ok(CellOutcome::Ok {
            a: a_metric(&system, &truth)?,
            deviation: coefficient_deviation(&system, &truth)?,
            wall_time_s,
            system,
        })
    };
    run().unwrap_or_else(|e| CellOutcome::Failed { reason: e.to_string() })
}

/// Runs every (speed, ratio, seed) cell. Failures are recorded per cell.
pub fn run_case_study(case: Case, cfg: &BenchConfig) -> Result<SweepReport, BenchError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &omega in &cfg.speeds_rpm {
        let grid: Vec<(f64, u64)> =
            cfg.noise_ratios.iter().flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s))).collect();
        match training_cuts(cfg, case, omega) {
            Ok(clean) => {
                let results: Vec<CellResult> = grid
                    .par_iter()
                    .map(|&(ratio, seed)| CellResult {
                        omega_rpm: omega,
                        noise_ratio: ratio,
                        seed,
                        outcome: score(cfg, case, omega, &clean, ratio, seed),
                    })
                    .collect();
                cells.extend(results);
            }
            Err(e) => cells.extend(grid.iter().map(|&(ratio, seed)| CellResult {
                omega_rpm: omega,
                noise_ratio: ratio,
                seed,
                outcome: CellOutcome::Failed { reason: e.to_string() },
            })),
        }
    }
    Ok(SweepReport {
        case,
        speeds_rpm: cfg.speeds_rpm.clone(),
        noise_ratios: cfg.noise_ratios.clone(),
        seeds: cfg.seeds.clone(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

fn percent(r: f64) -> String {
    format!("{}%", r * 100.0)
}

fn a_cell(report: &SweepReport, omega: f64, ratio: f64) -> String {
    match report.mean_a(omega, ratio) {
        Some(a) => format!("{a}"),
        None => "failed".into(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|source| BenchError::Io { path: path.display().to_string(), source })
}

/// Writes the A grid, per-cell deviation summaries and the discovered
/// equations into `out_dir`. Returns the written paths.
pub fn emit_report(report: &SweepReport, format: ReportFormat, out_dir: &Path) -> Result<Vec<String>, BenchError> {
    fs::create_dir_all(out_dir).map_err(|source| BenchError::Io { path: out_dir.display().to_string(), source })?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<(), BenchError> {
        let path = out_dir.join(name);
        write(&path, &text)?;
        written.push(path.display().to_string());
        Ok(())
    };

    match format {
        ReportFormat::Csv => {
            let mut grid = String::from("noise_ratio");
            for om in &report.speeds_rpm {
                let _ = write!(grid, ",{om}");
            }
            grid.push('\n');
            for &r in &report.noise_ratios {
                let _ = write!(grid, "{r}");
                for &om in &report.speeds_rpm {
                    let _ = write!(grid, ",{}", a_cell(report, om, r));
                }
                grid.push('\n');
            }
            emit("a_values.csv", grid)?;

            let mut cells = String::from("omega_rpm,noise_ratio,seed,a,mean_deviation,mismatched,wall_time_s,status\n");
            for c in &report.cells {
                match &c.outcome {
                    CellOutcome::Ok { a, deviation, wall_time_s, .. } => {
                        let mean = deviation.mean.map(|m| format!("{m:e}")).unwrap_or_default();
                        let mism: Vec<&str> = deviation.mismatched.iter().map(|e| e.name()).collect();
                        let _ = writeln!(
                            cells,
                            "{},{},{},{a},{mean},{},{wall_time_s:.3},ok",
                            c.omega_rpm,
                            c.noise_ratio,
                            c.seed,
                            mism.join(" ")
                        );
                    }
                    CellOutcome::Failed { reason } => {
                        let _ = writeln!(
                            cells,
                            "{},{},{},,,,,failed: {}",
                            c.omega_rpm,
                            c.noise_ratio,
                            c.seed,
                            reason.replace([',', '\n'], ";")
                        );
                    }
                }
            }
            emit("cells.csv", cells)?;
        }
        ReportFormat::Markdown => {
            let mut md = format!("# Case {} A values\n\n| noise |", report.case);
            for om in &report.speeds_rpm {
                let _ = write!(md, " {om} rpm |");
            }
            md.push_str("\n|---|");
            md.push_str(&"---|".repeat(report.speeds_rpm.len()));
            md.push('\n');
            for &r in &report.noise_ratios {
                let _ = write!(md, "| {} |", percent(r));
                for &om in &report.speeds_rpm {
                    let _ = write!(md, " {} |", a_cell(report, om, r));
                }
                md.push('\n');
            }
            emit("a_values.md", md)?;

            let mut eqs = format!("# Case {} discovered equations\n", report.case);
            for c in &report.cells {
                let _ = write!(eqs, "\n## {} rpm, noise {}, seed {}\n\n", c.omega_rpm, percent(c.noise_ratio), c.seed);
                match &c.outcome {
                    CellOutcome::Ok { a, deviation, system, .. } => {
                        let _ = writeln!(eqs, "A = {a}, mean coefficient deviation {:?}\n", deviation.mean);
                        eqs.push_str("| equation | term | coefficient |\n|---|---|---|\n");
                        for (id, eq) in &system.equations {
                            for w in &eq.terms {
                                let _ = writeln!(eqs, "| {id} | {} | {:e} |", w.term, w.coeff);
                            }
                        }
                    }
                    CellOutcome::Failed { reason } => {
                        let _ = writeln!(eqs, "failed: {reason}");
                    }
                }
            }
            emit("equations.md", eqs)?;
        }
    }
    Ok(written)
}

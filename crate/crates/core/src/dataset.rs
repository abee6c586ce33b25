//! Sampled records of one cut and their CSV / JSON sidecar persistence.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Case, MillingDirection, ProcessPoint, ToolGeometry, ToothKinematics};

pub const CSV_HEADER: [&str; 15] = [
    "t", "x", "vx", "ax", "y", "vy", "ay", "Fx", "Fy", "Ft", "Fn", "phi", "engaged", "delta_n", "n_dot",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

/// Simulation-independent description of a sampled cut.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMetadata {
    pub case: Case,
    pub process: ProcessPoint,
    pub geometry: ToolGeometry,
    pub revolutions: u32,
    pub steps_per_rev: u32,
    pub noise_ratio: f64,
    pub seed: u64,
}

impl DatasetMetadata {
    pub fn dt(&self) -> f64 {
        60.0 / (self.process.spindle_speed * f64::from(self.steps_per_rev))
    }

    /// Samples per tooth passing period.
    pub fn delay_samples(&self) -> usize {
        (self.steps_per_rev / self.geometry.teeth) as usize
    }
}

/// Sidecar JSON layout, one flat object.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    omega_rpm: f64,
    b_m: f64,
    ft_m: f64,
    teeth: u32,
    diameter_m: f64,
    radial_immersion: f64,
    milling_direction: MillingDirection,
    revolutions: u32,
    steps_per_rev: u32,
    case: Case,
    noise_ratio: f64,
    seed: u64,
}

impl From<&DatasetMetadata> for Sidecar {
    fn from(m: &DatasetMetadata) -> Self {
        Sidecar {
            omega_rpm: m.process.spindle_speed,
            b_m: m.process.axial_depth,
            ft_m: m.process.feed_per_tooth,
            teeth: m.geometry.teeth,
            diameter_m: m.geometry.diameter,
            radial_immersion: m.geometry.radial_immersion,
            milling_direction: m.geometry.milling_direction,
            revolutions: m.revolutions,
            steps_per_rev: m.steps_per_rev,
            case: m.case,
            noise_ratio: m.noise_ratio,
            seed: m.seed,
        }
    }
}

impl TryFrom<Sidecar> for DatasetMetadata {
    type Error = DatasetError;

    fn try_from(s: Sidecar) -> Result<Self, Self::Error> {
        let bad = |e: crate::dynamics::ModelError| DatasetError::Metadata(e.to_string());
        let process = ProcessPoint::new(s.omega_rpm, s.b_m, s.ft_m).map_err(bad)?;
        let geometry =
            ToolGeometry::new(s.diameter_m, s.teeth, s.radial_immersion, s.milling_direction).map_err(bad)?;
        if s.steps_per_rev == 0 || s.steps_per_rev % s.teeth != 0 {
            return Err(DatasetError::Metadata(format!(
                "steps_per_rev {} not divisible by teeth {}",
                s.steps_per_rev, s.teeth
            )));
        }
        if !(s.noise_ratio.is_finite() && s.noise_ratio >= 0.0) {
            return Err(DatasetError::Metadata(format!("noise_ratio must be >= 0, got {}", s.noise_ratio)));
        }
        Ok(DatasetMetadata {
            case: s.case,
            process,
            geometry,
            revolutions: s.revolutions,
            steps_per_rev: s.steps_per_rev,
            noise_ratio: s.noise_ratio,
            seed: s.seed,
        })
    }
}

/// Measurable and kinematic columns of one cut, all of equal length.
///
/// `phi` is NaN on samples where no tooth is cutting; `delta_n` and `n_dot`
/// are zero there.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub vx: Vec<f64>,
    pub ax: Vec<f64>,
    pub y: Vec<f64>,
    pub vy: Vec<f64>,
    pub ay: Vec<f64>,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub ft: Vec<f64>,
    pub fn_: Vec<f64>,
    pub phi: Vec<f64>,
    pub engaged: Vec<bool>,
    pub delta_n: Vec<f64>,
    pub n_dot: Vec<f64>,
    pub meta: DatasetMetadata,
}

/// One recorded sample, used while building a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub vx: f64,
    pub ax: f64,
    pub y: f64,
    pub vy: f64,
    pub ay: f64,
    pub fx: f64,
    pub fy: f64,
    pub ft: f64,
    pub fn_: f64,
    pub tooth: ToothKinematics,
}

/// Noise-bearing columns, in the order noise streams are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasuredColumn {
    X,
    Vx,
    Ax,
    Y,
    Vy,
    Ay,
    Fx,
    Fy,
    Ft,
    Fn,
}

impl MeasuredColumn {
    pub const ALL: [MeasuredColumn; 10] = [
        MeasuredColumn::X,
        MeasuredColumn::Vx,
        MeasuredColumn::Ax,
        MeasuredColumn::Y,
        MeasuredColumn::Vy,
        MeasuredColumn::Ay,
        MeasuredColumn::Fx,
        MeasuredColumn::Fy,
        MeasuredColumn::Ft,
        MeasuredColumn::Fn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasuredColumn::X => "x",
            MeasuredColumn::Vx => "vx",
            MeasuredColumn::Ax => "ax",
            MeasuredColumn::Y => "y",
            MeasuredColumn::Vy => "vy",
            MeasuredColumn::Ay => "ay",
            MeasuredColumn::Fx => "Fx",
            MeasuredColumn::Fy => "Fy",
            MeasuredColumn::Ft => "Ft",
            MeasuredColumn::Fn => "Fn",
        }
    }
}

impl TimeSeriesDataset {
    pub fn with_capacity(meta: DatasetMetadata, n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            t: v(),
            x: v(),
            vx: v(),
            ax: v(),
            y: v(),
            vy: v(),
            ay: v(),
            fx: v(),
            fy: v(),
            ft: v(),
            fn_: v(),
            phi: v(),
            engaged: Vec::with_capacity(n),
            delta_n: v(),
            n_dot: v(),
            meta,
        }
    }

    pub fn push(&mut self, s: &Sample) {
        self.t.push(s.t);
        self.x.push(s.x);
        self.vx.push(s.vx);
        self.ax.push(s.ax);
        self.y.push(s.y);
        self.vy.push(s.vy);
        self.ay.push(s.ay);
        self.fx.push(s.fx);
        self.fy.push(s.fy);
        self.ft.push(s.ft);
        self.fn_.push(s.fn_);
        self.phi.push(s.tooth.phi.unwrap_or(f64::NAN));
        self.engaged.push(s.tooth.engaged);
        self.delta_n.push(s.tooth.delta_n);
        self.n_dot.push(s.tooth.n_dot);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn engaged_count(&self) -> usize {
        self.engaged.iter().filter(|e| **e).count()
    }

    pub fn measured(&self, col: MeasuredColumn) -> &[f64] {
        match col {
            MeasuredColumn::X => &self.x,
            MeasuredColumn::Vx => &self.vx,
            MeasuredColumn::Ax => &self.ax,
            MeasuredColumn::Y => &self.y,
            MeasuredColumn::Vy => &self.vy,
            MeasuredColumn::Ay => &self.ay,
            MeasuredColumn::Fx => &self.fx,
            MeasuredColumn::Fy => &self.fy,
            MeasuredColumn::Ft => &self.ft,
            MeasuredColumn::Fn => &self.fn_,
        }
    }

    pub fn measured_mut(&mut self, col: MeasuredColumn) -> &mut Vec<f64> {
        match col {
            MeasuredColumn::X => &mut self.x,
            MeasuredColumn::Vx => &mut self.vx,
            MeasuredColumn::Ax => &mut self.ax,
            MeasuredColumn::Y => &mut self.y,
            MeasuredColumn::Vy => &mut self.vy,
            MeasuredColumn::Ay => &mut self.ay,
            MeasuredColumn::Fx => &mut self.fx,
            MeasuredColumn::Fy => &mut self.fy,
            MeasuredColumn::Ft => &mut self.ft,
            MeasuredColumn::Fn => &mut self.fn_,
        }
    }

    /// First `n` samples (the whole record if shorter).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let cut = |v: &Vec<f64>| v[..n].to_vec();
        Self {
            t: cut(&self.t),
            x: cut(&self.x),
            vx: cut(&self.vx),
            ax: cut(&self.ax),
            y: cut(&self.y),
            vy: cut(&self.vy),
            ay: cut(&self.ay),
            fx: cut(&self.fx),
            fy: cut(&self.fy),
            ft: cut(&self.ft),
            fn_: cut(&self.fn_),
            phi: cut(&self.phi),
            engaged: self.engaged[..n].to_vec(),
            delta_n: cut(&self.delta_n),
            n_dot: cut(&self.n_dot),
            meta: self.meta.clone(),
        }
    }

    /// Checks equal column lengths, strictly increasing time, and zero force
    /// out of cut.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let n = self.len();
        let lens = [
            self.x.len(),
            self.vx.len(),
            self.ax.len(),
            self.y.len(),
            self.vy.len(),
            self.ay.len(),
            self.fx.len(),
            self.fy.len(),
            self.ft.len(),
            self.fn_.len(),
            self.phi.len(),
            self.engaged.len(),
            self.delta_n.len(),
            self.n_dot.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(DatasetError::Inconsistent("column lengths differ".into()));
        }
        if self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DatasetError::Inconsistent("time is not strictly increasing".into()));
        }
        for i in 0..n {
            if !self.engaged[i]
                && (self.ft[i] != 0.0 || self.fn_[i] != 0.0 || self.fx[i] != 0.0 || self.fy[i] != 0.0)
                && self.meta.noise_ratio == 0.0
            {
                return Err(DatasetError::Row { row: i, msg: "nonzero force out of cut".into() });
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let f = |v: f64| if v.is_nan() { String::new() } else { format!("{v:?}") };
        for i in 0..self.len() {
            w.write_record([
                f(self.t[i]),
                f(self.x[i]),
                f(self.vx[i]),
                f(self.ax[i]),
                f(self.y[i]),
                f(self.vy[i]),
                f(self.ay[i]),
                f(self.fx[i]),
                f(self.fy[i]),
                f(self.ft[i]),
                f(self.fn_[i]),
                f(self.phi[i]),
                if self.engaged[i] { "1".to_string() } else { "0".to_string() },
                f(self.delta_n[i]),
                f(self.n_dot[i]),
            ])?;
        }
        w.flush().map_err(|e| DatasetError::Io { path: PathBuf::from("<csv>"), source: e })?;
        Ok(())
    }

    /// Parses the CSV body; metadata comes from the sidecar.
    pub fn read_csv<R: Read>(reader: R, meta: DatasetMetadata) -> Result<Self, DatasetError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(DatasetError::Header {
                expected: CSV_HEADER.join(","),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut ds = Self::with_capacity(meta, 0);
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != CSV_HEADER.len() {
                return Err(DatasetError::Row { row, msg: format!("expected 15 fields, found {}", rec.len()) });
            }
            let num = |i: usize| -> Result<f64, DatasetError> {
                let field = &rec[i];
                if field.is_empty() {
                    return Ok(f64::NAN);
                }
                field.parse::<f64>().map_err(|e| DatasetError::Row {
                    row,
                    msg: format!("column {}: {e}", CSV_HEADER[i]),
                })
            };
            let engaged = match &rec[12] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(DatasetError::Row { row, msg: format!("engaged must be 0 or 1, found '{other}'") })
                }
            };
            let phi = num(11)?;
            ds.push(&Sample {
                t: num(0)?,
                x: num(1)?,
                vx: num(2)?,
                ax: num(3)?,
                y: num(4)?,
                vy: num(5)?,
                ay: num(6)?,
                fx: num(7)?,
                fy: num(8)?,
                ft: num(9)?,
                fn_: num(10)?,
                tooth: ToothKinematics {
                    phi: if phi.is_nan() { None } else { Some(phi) },
                    engaged,
                    delta_n: num(13)?,
                    n_dot: num(14)?,
                },
            });
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn metadata_json(&self) -> Result<String, DatasetError> {
        Ok(serde_json::to_string_pretty(&Sidecar::from(&self.meta))?)
    }

    pub fn parse_metadata_json(text: &str) -> Result<DatasetMetadata, DatasetError> {
        let sidecar: Sidecar = serde_json::from_str(text)?;
        sidecar.try_into()
    }

    /// Writes `<path>` (CSV) and `<path>.json` (metadata sidecar).
    pub fn save(&self, csv_path: &Path) -> Result<(), DatasetError> {
        let file = fs::File::create(csv_path).map_err(|e| io_error(csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let side = sidecar_path(csv_path);
        fs::write(&side, self.metadata_json()?).map_err(|e| io_error(&side, e))?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self, DatasetError> {
        let side = sidecar_path(csv_path);
        let meta = Self::parse_metadata_json(&fs::read_to_string(&side).map_err(|e| io_error(&side, e))?)?;
        let file = fs::File::open(csv_path).map_err(|e| io_error(csv_path, e))?;
        Self::read_csv(std::io::BufReader::new(file), meta)
    }
}

fn io_error(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.to_path_buf(), source }
}

/// `cut.csv` -> `cut.csv.json`
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DatasetMetadata {
        DatasetMetadata {
            case: Case::I,
            process: ProcessPoint::new(6000.0, 0.002, 1e-4).unwrap(),
            geometry: ToolGeometry::new(0.02, 4, 0.25, MillingDirection::Up).unwrap(),
            revolutions: 1,
            steps_per_rev: 8,
            noise_ratio: 0.0,
            seed: 0,
        }
    }

    fn tiny() -> TimeSeriesDataset {
        let mut ds = TimeSeriesDataset::with_capacity(meta(), 3);
        for i in 0..3 {
            let engaged = i == 1;
            ds.push(&Sample {
                t: i as f64 * 1e-5,
                x: 1e-6 * i as f64,
                vx: 0.1,
                ax: -3.0,
                y: 0.0,
                vy: 0.0,
                ay: 0.0,
                fx: if engaged { 1.5 } else { 0.0 },
                fy: 0.0,
                ft: if engaged { 1.0 / 3.0 } else { 0.0 },
                fn_: 0.0,
                tooth: if engaged {
                    ToothKinematics { phi: Some(0.3), engaged: true, delta_n: 1e-7, n_dot: 0.01 }
                } else {
                    ToothKinematics::IDLE
                },
            });
        }
        ds
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,vx,ax,y,vy,ay,Fx,Fy,Ft,Fn,phi,engaged,delta_n,n_dot\n"));
        let back = TimeSeriesDataset::read_csv(buf.as_slice(), meta()).unwrap();
        assert_eq!(back.ft, ds.ft);
        assert_eq!(back.x, ds.x);
        assert!(back.phi[0].is_nan() && back.phi[1] == 0.3);
        assert_eq!(back.engaged, ds.engaged);
    }

    #[test]
    fn sidecar_round_trip_and_keys() {
        let ds = tiny();
        let json = ds.metadata_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "b_m", "case", "diameter_m", "ft_m", "milling_direction", "noise_ratio", "omega_rpm",
                "radial_immersion", "revolutions", "seed", "steps_per_rev", "teeth"
            ]
        );
        assert_eq!(TimeSeriesDataset::parse_metadata_json(&json).unwrap(), ds.meta);
    }

    #[test]
    fn rejects_bad_header_and_rows() {
        let bad = "t,x\n0,1\n";
        assert!(matches!(TimeSeriesDataset::read_csv(bad.as_bytes(), meta()), Err(DatasetError::Header { .. })));
        let mut buf = Vec::new();
        tiny().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",1,1e-7,", ",2,1e-7,");
        assert!(TimeSeriesDataset::read_csv(text.as_bytes(), meta()).is_err());
    }

    #[test]
    fn rejects_force_out_of_cut() {
        let mut ds = tiny();
        ds.fx[0] = 2.0;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.csv");
        let ds = tiny();
        ds.save(&path).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = TimeSeriesDataset::load(&path).unwrap();
        assert_eq!(back.meta, ds.meta);
        assert_eq!(back.delta_n, ds.delta_n);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let ds = tiny().truncated(2);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.engaged, vec![false, true]);
        assert_eq!(tiny().truncated(10).len(), 3);
    }
}

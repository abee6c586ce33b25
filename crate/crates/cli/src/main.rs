use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use millid_core::bench::{
    a_metric, discover_cell, emit_report, run_case_study, training_cuts, BenchConfig, BenchError, ReportFormat,
};
use millid_core::dataset::TimeSeriesDataset;
use millid_core::discovery::DiscoveredSystem;
use millid_core::dynamics::Case;
use millid_core::library::EquationId;
use millid_core::simulator::{once_per_tooth_sample, run_simulation, SimulationError};
use millid_core::stability::{
    classify_stability, extract_linear_model, zero_order_lobes, write_poincare_csv, FrequencySweep, LobeDiagram,
    StabilityError, POINCARE_TOLERANCE,
};

#[derive(Parser)]
#[command(name = "millid", version, about = "Simulate milling, discover its equations, and analyse stability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one cut and write it as CSV plus a JSON sidecar.
    Simulate {
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[arg(long)]
        omega_rpm: f64,
        #[arg(long)]
        depth_mm: f64,
        #[arg(long, default_value_t = 40)]
        revolutions: u32,
        #[arg(long, default_value_t = 1000)]
        steps_per_rev: u32,
        #[arg(long)]
        out: PathBuf,
        /// Physical parameters; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate the training cuts at one speed, add noise, and discover the six equations.
    Discover {
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[arg(long)]
        omega_rpm: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_ratio: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Per-equation term counts, e.g. `Ft=3,Fn=3`.
        #[arg(long, value_parser = parse_k_overrides)]
        k_overrides: Option<BTreeMap<EquationId, usize>>,
        #[arg(long)]
        lambda2: Option<f64>,
        #[arg(long)]
        bound_m: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Zero-order stability lobes of a discovered linear system.
    Lobes {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, default_value_t = 4000.0)]
        rpm_min: f64,
        #[arg(long, default_value_t = 12000.0)]
        rpm_max: f64,
        #[arg(long, default_value_t = 20)]
        lobe_max: u32,
        #[arg(long)]
        out: PathBuf,
        /// Tool geometry; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Once-per-tooth section of a simulated cut, plus its stability class.
    Poincare {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        discard: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full noise/speed sweep and write CSV and Markdown tables.
    Report {
        #[arg(long, value_parser = parse_case)]
        case: Case,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn bench_failure(e: BenchError) -> Failure {
    match e {
        BenchError::Config(_) | BenchError::Io { .. } | BenchError::Json(_) | BenchError::Model(_) => usage(e),
        BenchError::Simulation(SimulationError::Config(_) | SimulationError::Model(_)) => usage(e),
        _ => numerical(e),
    }
}

fn parse_case(s: &str) -> Result<Case, String> {
    s.parse().map_err(|e: millid_core::dynamics::ModelError| e.to_string())
}

fn parse_k_overrides(s: &str) -> Result<BTreeMap<EquationId, usize>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (name, k) = pair.split_once('=').ok_or_else(|| format!("expected NAME=K, got '{pair}'"))?;
            let id = EquationId::from_name(name.trim()).ok_or_else(|| format!("unknown equation '{name}'"))?;
            let k = k.trim().parse().map_err(|e| format!("bad k for {name}: {e}"))?;
            Ok((id, k))
        })
        .collect()
}

fn load_config(path: Option<&Path>) -> Result<BenchConfig, Failure> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            BenchConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn simulate(
    case: Case,
    omega_rpm: f64,
    depth_mm: f64,
    revolutions: u32,
    steps_per_rev: u32,
    out: &Path,
    config: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = BenchConfig { revolutions, steps_per_rev, ..load_config(config)? };
    let result = run_simulation(
        &cfg.structure().map_err(usage)?,
        &cfg.force_model(case).map_err(usage)?,
        &cfg.geometry().map_err(usage)?,
        &cfg.process(omega_rpm, depth_mm * 1e-3).map_err(usage)?,
        &cfg.simulation(),
    );
    match result {
        Ok(ds) => {
            ds.save(out).map_err(usage)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
            Ok(())
        }
        Err(SimulationError::Divergent { step, partial }) => {
            partial.save(out).map_err(usage)?;
            Err(numerical(format!("simulation diverged at step {step}; partial record written to {}", out.display())))
        }
        Err(e @ (SimulationError::Config(_) | SimulationError::Model(_))) => Err(usage(e)),
        Err(e) => Err(numerical(e)),
    }
}

#[allow(clippy::too_many_arguments)]
fn discover(
    case: Case,
    omega_rpm: f64,
    noise_ratio: f64,
    seed: u64,
    k_overrides: Option<BTreeMap<EquationId, usize>>,
    lambda2: Option<f64>,
    bound_m: Option<f64>,
    out: &Path,
    config: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(k) = k_overrides {
        cfg.k_overrides.extend(k);
    }
    if let Some(l) = lambda2 {
        cfg.lambda2 = l;
    }
    if let Some(m) = bound_m {
        cfg.bound_m = m;
    }
    cfg.validate().map_err(usage)?;
    if !(noise_ratio >= 0.0 && noise_ratio.is_finite()) {
        return Err(usage(format!("noise ratio must be >= 0, got {noise_ratio}")));
    }
    let clean = training_cuts(&cfg, case, omega_rpm).map_err(bench_failure)?;
    let system = discover_cell(&cfg, case, &clean, noise_ratio, seed).map_err(bench_failure)?;
    fs::write(out, system.to_json().map_err(numerical)?).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    for (id, eq) in &system.equations {
        let rhs: Vec<String> = eq.terms.iter().map(|w| format!("{:e}*{}", w.coeff, w.term)).collect();
        println!("{id} = {}", rhs.join(" + "));
    }
    let truth = cfg.ground_truth(case, omega_rpm).map_err(usage)?;
    if let Ok(a) = a_metric(&system, &truth) {
        println!("A = {a}");
    }
    Ok(())
}

fn lobes(system: &Path, rpm_min: f64, rpm_max: f64, lobe_max: u32, out: &Path, config: Option<&Path>) -> Result<(), Failure> {
    if !(rpm_min > 0.0 && rpm_max > rpm_min) {
        return Err(usage(format!("need 0 < rpm-min < rpm-max, got {rpm_min}..{rpm_max}")));
    }
    let cfg = load_config(config)?;
    let text = fs::read_to_string(system).map_err(|e| usage(format!("{}: {e}", system.display())))?;
    let system = DiscoveredSystem::from_json(&text).map_err(|e| usage(format!("bad system JSON: {e}")))?;
    let model = extract_linear_model(&system, &cfg.geometry().map_err(usage)?).map_err(numerical)?;
    let full = zero_order_lobes(&model, FrequencySweep::around(&model), 0..=lobe_max).map_err(numerical)?;
    let points: Vec<_> =
        full.points.into_iter().filter(|p| (rpm_min..=rpm_max).contains(&p.omega_rpm)).collect();
    if points.is_empty() {
        return Err(numerical(StabilityError::EmptyDiagram));
    }
    let n = points.len();
    LobeDiagram { points, sweep: full.sweep }.write_csv(create(out)?).map_err(usage)?;
    println!("wrote {n} lobe points to {}", out.display());
    Ok(())
}

fn poincare(dataset: &Path, discard: f64, out: &Path) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&discard) {
        return Err(usage(format!("discard must lie in [0, 1), got {discard}")));
    }
    let ds = TimeSeriesDataset::load(dataset).map_err(usage)?;
    let section = once_per_tooth_sample(&ds, discard);
    write_poincare_csv(&section, create(out)?).map_err(usage)?;
    println!("wrote {} section points to {}", section.len(), out.display());
    match classify_stability(&ds, POINCARE_TOLERANCE) {
        Ok(s) => {
            println!("classification: {s}");
            Ok(())
        }
        Err(e) => Err(numerical(e)),
    }
}

fn report(case: Case, config: Option<&Path>, out_dir: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let sweep = run_case_study(case, &cfg).map_err(bench_failure)?;
    let mut written = emit_report(&sweep, ReportFormat::Csv, out_dir).map_err(bench_failure)?;
    written.extend(emit_report(&sweep, ReportFormat::Markdown, out_dir).map_err(bench_failure)?);
    let json = out_dir.join("sweep.json");
    fs::write(&json, serde_json::to_string_pretty(&sweep).map_err(numerical)?)
        .map_err(|e| usage(format!("{}: {e}", json.display())))?;
    written.push(json.display().to_string());
    for path in written {
        println!("wrote {path}");
    }
    let failed = sweep.cells.iter().filter(|c| c.a().is_none()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see cells.csv", sweep.cells.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { case, omega_rpm, depth_mm, revolutions, steps_per_rev, out, config } => {
            simulate(case, omega_rpm, depth_mm, revolutions, steps_per_rev, &out, config.as_deref())
        }
        Command::Discover { case, omega_rpm, noise_ratio, seed, k_overrides, lambda2, bound_m, out, config } => {
            discover(case, omega_rpm, noise_ratio, seed, k_overrides, lambda2, bound_m, &out, config.as_deref())
        }
        Command::Lobes { system, rpm_min, rpm_max, lobe_max, out, config } => {
            lobes(&system, rpm_min, rpm_max, lobe_max, &out, config.as_deref())
        }
        Command::Poincare { dataset, discard, out } => poincare(&dataset, discard, &out),
        Command::Report { case, config, out_dir } => report(case, config.as_deref(), &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Numerical(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.exit_code())
        }
    }
}

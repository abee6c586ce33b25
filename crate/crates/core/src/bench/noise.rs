//! Additive measurement noise, `S + r·σ_S·ε`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::dataset::{MeasuredColumn, TimeSeriesDataset};
use crate::dynamics::normal_projection;
use crate::simulator::{SurfaceMemory, ToothSchedule};

/// How `delta_n` and `n_dot` pick up noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivedNoise {
    /// Rebuilt from the noisy x, vx, y, vy.
    #[default]
    Recompute,
    /// Perturbed like a measured column, from their clean values (in-cut rows only).
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub ratio: f64,
    pub seed: u64,
    pub derived: DerivedNoise,
}

impl NoiseSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self, BenchError> {
        if !(ratio >= 0.0 && ratio.is_finite()) {
            return Err(BenchError::Config(format!("noise ratio must be >= 0, got {ratio}")));
        }
        Ok(Self { ratio, seed, derived: DerivedNoise::Recompute })
    }

    pub fn with_derived(self, derived: DerivedNoise) -> Self {
        Self { derived, ..self }
    }
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Perturbs every measured column with its own stream, then rebuilds
/// `delta_n` and `n_dot` from the noisy states.
pub fn inject_noise(dataset: &TimeSeriesDataset, spec: NoiseSpec) -> Result<TimeSeriesDataset, BenchError> {
    if dataset.meta.noise_ratio != 0.0 {
        return Err(BenchError::AlreadyNoisy(dataset.meta.noise_ratio));
    }
    NoiseSpec::new(spec.ratio, spec.seed)?;
    let mut out = dataset.clone();
    if spec.ratio == 0.0 {
        return Ok(out);
    }
    for (stream, col) in MeasuredColumn::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream as u64);
        let values = out.measured_mut(col);
        let scale = spec.ratio * std_dev(values);
        for v in values.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += scale * e;
        }
    }
    match spec.derived {
        DerivedNoise::Recompute => recompute_regeneration(&mut out)?,
        DerivedNoise::Direct => {
            for (stream, values) in [(10u64, &mut out.delta_n), (11, &mut out.n_dot)] {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(stream);
                let rows: Vec<usize> = (0..values.len()).filter(|&i| dataset.engaged[i]).collect();
                let in_cut: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
                let scale = spec.ratio * std_dev(&in_cut);
                for &i in &rows {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    values[i] += scale * e;
                }
            }
        }
    }
    out.meta.noise_ratio = spec.ratio;
    out.meta.seed = spec.seed;
    Ok(out)
}

/// Replays the surface memory over the recorded engagement pattern.
fn recompute_regeneration(ds: &mut TimeSeriesDataset) -> Result<(), BenchError> {
    let schedule = ToothSchedule::new(&ds.meta.geometry, ds.meta.steps_per_rev)?;
    let ft = ds.meta.process.feed_per_tooth;
    let mut surface = SurfaceMemory::new(schedule.delay());
    for i in 0..ds.len() {
        let Some((slot, phi)) = schedule.in_window(i) else { continue };
        let n_prev = surface.get(slot);
        if ds.engaged[i] {
            let n_cur = normal_projection(ds.x[i], ds.y[i], phi);
            ds.delta_n[i] = n_prev - n_cur;
            ds.n_dot[i] = normal_projection(ds.vx[i], ds.vy[i], phi);
            surface.set(slot, n_cur);
        } else {
            surface.set(slot, n_prev + ft * phi.sin());
        }
    }
    Ok(())
}

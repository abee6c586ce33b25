#![no_main]

use libfuzzer_sys::fuzz_target;
use millid_core::bench::BenchConfig;
use millid_core::dataset::{DatasetMetadata, TimeSeriesDataset};
use millid_core::dynamics::Case;

fuzz_target!(|data: &[u8]| {
    let cfg = BenchConfig::default();
    let meta = DatasetMetadata {
        case: Case::I,
        process: cfg.process(6000.0, 2e-3).unwrap(),
        geometry: cfg.geometry().unwrap(),
        revolutions: 1,
        steps_per_rev: 8,
        noise_ratio: 0.0,
        seed: 0,
    };
    if let Ok(ds) = TimeSeriesDataset::read_csv(data, meta.clone()) {
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        let again = TimeSeriesDataset::read_csv(out.as_slice(), meta).unwrap();
        assert_eq!(ds.len(), again.len());
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use millid_core::bench::BenchConfig;

fuzz_target!(|s: &str| {
    if let Ok(cfg) = BenchConfig::from_json(s) {
        let _ = cfg.structure();
        let _ = cfg.geometry();
        let _ = cfg.force_model(millid_core::dynamics::Case::II);
    }
});

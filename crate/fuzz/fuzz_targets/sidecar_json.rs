#![no_main]

use libfuzzer_sys::fuzz_target;
use millid_core::dataset::TimeSeriesDataset;

fuzz_target!(|s: &str| {
    let _ = TimeSeriesDataset::parse_metadata_json(s);
});

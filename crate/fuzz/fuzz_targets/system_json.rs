#![no_main]

use libfuzzer_sys::fuzz_target;
use millid_core::discovery::DiscoveredSystem;

fuzz_target!(|s: &str| {
    if let Ok(system) = DiscoveredSystem::from_json(s) {
        let text = system.to_json().unwrap();
        let again = DiscoveredSystem::from_json(&text).unwrap();
        assert_eq!(again.to_json().unwrap(), text);
    }
});

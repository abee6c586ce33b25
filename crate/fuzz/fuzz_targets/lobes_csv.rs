#![no_main]

use libfuzzer_sys::fuzz_target;
use millid_core::stability::LobeDiagram;

fuzz_target!(|data: &[u8]| {
    let _ = LobeDiagram::read_csv(data);
});

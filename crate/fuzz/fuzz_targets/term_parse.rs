#![no_main]

use libfuzzer_sys::fuzz_target;
use millid_core::library::Term;

fuzz_target!(|s: &str| {
    if let Ok(term) = s.parse::<Term>() {
        let again: Term = term.to_string().parse().expect("display output must parse");
        assert_eq!(term, again);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use ucsim::history::{check_ec, check_uc_bounded};
use ucsim::History;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(h) = History::parse(text) {
        let canonical = h.serialize();
        let again = History::parse(&canonical).expect("canonical text parses");
        assert_eq!(again.serialize(), canonical);
        let _ = check_ec(&h);
        let _ = check_uc_bounded(&h, 8);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use ucsim::UpdateRecord;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = text.parse::<UpdateRecord>() {
        assert_eq!(r.to_string().parse::<UpdateRecord>().unwrap(), r);
    }
});

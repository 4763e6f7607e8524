#![no_main]

use libfuzzer_sys::fuzz_target;
use ucsim::SyncDigest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = text.parse::<SyncDigest>() {
        assert_eq!(d.to_string().parse::<SyncDigest>().unwrap(), d);
    }
});

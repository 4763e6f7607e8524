#![no_main]

use libfuzzer_sys::fuzz_target;
use ucsim::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = Scenario::parse(text) {
        let again = Scenario::parse(&sc.to_string()).expect("canonical text parses");
        assert_eq!(again.to_string(), sc.to_string());
    }
});

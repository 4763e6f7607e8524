#![no_main]

use libfuzzer_sys::fuzz_target;
use ucsim::{Adt, Op};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(op) = text.parse::<Op>() {
        assert_eq!(op.to_string().parse::<Op>().unwrap(), op);
    }
    for adt in [Adt::IntSet, Adt::Counter, Adt::Register { default: 0 }] {
        if let Ok(op) = adt.parse_op(text) {
            assert!(adt.check_op(&op).is_ok());
        }
    }
    if let Ok(adt) = text.parse::<Adt>() {
        assert_eq!(adt.to_string().parse::<Adt>().unwrap(), adt);
    }
});

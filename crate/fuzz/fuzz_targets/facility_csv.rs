#![no_main]
use foodloc::evaluate::parse_facilities;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_facilities("fuzz", data);
});

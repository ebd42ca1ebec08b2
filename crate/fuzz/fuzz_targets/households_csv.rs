#![no_main]
use foodloc::ingest::{parse_households, ColumnSchema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_households(data, &ColumnSchema::default());
    let _ = parse_households(data, &ColumnSchema::prepared());
});

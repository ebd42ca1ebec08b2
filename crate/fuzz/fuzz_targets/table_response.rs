#![no_main]
use foodloc::distance::parse_table_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let (rows, cols) = (data[0] as usize % 8, data[1] as usize % 8);
    if let Ok(values) = parse_table_response(&data[2..], rows, cols) {
        assert_eq!(values.len(), rows * cols);
    }
});

#![no_main]
use foodloc::distance::{decode_matrix, encode_matrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Anything that decodes must re-encode to a file that decodes identically.
    if let Ok((m, trailer)) = decode_matrix(data) {
        let (back, _) = decode_matrix(&encode_matrix(&m, trailer.provenance)).unwrap();
        assert_eq!(back, m);
    }
});

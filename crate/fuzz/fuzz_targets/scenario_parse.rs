#![no_main]

use libfuzzer_sys::fuzz_target;
use tsagrid::scenario::parse_scenario;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(scn) = parse_scenario(&text) {
        // accepted scenarios must describe a consistent table
        assert!(!scn.columns().is_empty());
    }
});

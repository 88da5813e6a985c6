#![no_main]

use libfuzzer_sys::fuzz_target;
use proq::maze::Dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::decode(data) {
        let again = Dataset::decode(&ds.encode()).expect("re-encoded dataset must decode");
        assert_eq!(again.len(), ds.len());
        assert_eq!(again.num_trajectories(), ds.num_trajectories());
    }
});

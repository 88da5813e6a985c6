#![no_main]

use libfuzzer_sys::fuzz_target;
use proq::nn::checkpoint::Checkpoint;
use proq::orchestrator::Model;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&ck.encode()).unwrap().encode(), ck.encode());
        // restoring may fail on missing blobs but must not panic
        let _ = Model::from_checkpoint(&ck);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use proq::orchestrator::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = TrainConfig::parse(text) {
        assert_eq!(TrainConfig::parse(&config.to_text()).unwrap(), config);
    }
});

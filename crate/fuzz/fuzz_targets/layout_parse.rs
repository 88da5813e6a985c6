#![no_main]

use libfuzzer_sys::fuzz_target;
use proq::maze::MazeLayout;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(layout) = MazeLayout::parse("fuzz", text) {
        // accepted layouts must be connected and walled in
        let free = layout.free_cells();
        assert!(!free.is_empty());
        assert_eq!(layout.flood_fill(free[0]).len(), free.len());
    }
});

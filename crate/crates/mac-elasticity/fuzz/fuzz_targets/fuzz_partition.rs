#![no_main]

use libfuzzer_sys::fuzz_target;
use mac_elasticity::grid::AxisPartition;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(axis) = AxisPartition::from_text(text) {
            let again = AxisPartition::from_text(&axis.to_text())
                .expect("accepted partitions round trip");
            assert_eq!(axis.n_cells(), again.n_cells());
        }
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use mac_elasticity::table::Table;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = Table::parse(text) {
            let again = Table::parse(&table.to_csv()).expect("accepted tables round trip");
            assert_eq!(table, again);
        }
    }
});

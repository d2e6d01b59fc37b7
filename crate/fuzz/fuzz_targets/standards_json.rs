#![no_main]
use libfuzzer_sys::fuzz_target;
use ricegrade_core::model::StandardsTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(table) = StandardsTable::from_json(text) {
            assert_eq!(StandardsTable::from_json(&table.to_json()).unwrap(), table);
        }
    }
});

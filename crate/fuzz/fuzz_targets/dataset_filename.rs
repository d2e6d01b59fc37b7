#![no_main]
use libfuzzer_sys::fuzz_target;
use ricegrade::config::CompletenessTokens;
use ricegrade::ingest;

fuzz_target!(|data: &[u8]| {
    let name = String::from_utf8_lossy(data);
    let tokens = CompletenessTokens::default();
    let _ = ingest::completeness_from_name(&name, &tokens);
    let _ = ingest::is_image(std::path::Path::new(name.as_ref()));
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use ricegrade::config::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::from_toml(text) {
        let again = PipelineConfig::from_toml(&cfg.to_toml()).expect("written config parses");
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use ricegrade_core::attention::{self, EcaParams, SimamParams, Tensor4};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(t) = Tensor4::from_json(text) else { return };
    assert_eq!(Tensor4::from_json(&t.to_json()).unwrap(), t);
    if t.data().len() <= 4096 {
        let _ = attention::simam(&t, &SimamParams::default());
        let _ = attention::eca(&t, &EcaParams::default());
    }
});

#![no_main]
use libfuzzer_sys::fuzz_target;
use ricegrade_core::imgproc::{self, GrayImage, Raster};

fuzz_target!(|data: &[u8]| {
    let Ok(img) = GrayImage::decode(data, 0.05) else { return };
    if img.pixels().len() > 1 << 16 {
        return;
    }
    let png = img.encode_png().unwrap();
    assert_eq!(GrayImage::decode(&png, 0.05).unwrap(), img);
    let _ = imgproc::binarize(&img, None);
});

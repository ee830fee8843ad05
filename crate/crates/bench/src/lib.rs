//! Fixtures shared by the benchmarks.

use rover_esb::services::image::Image;
use rover_esb::{ParamValue, RequestEnvelope};

/// The particle-speed request from the reference trace.
pub fn trace_request() -> RequestEnvelope {
    RequestEnvelope::new(
        "rover-1",
        "SpectrometryService",
        "AnalyzeParticlesSpeed",
        vec![ParamValue::float("mass", 5.0), ParamValue::float("weight", 10.0)],
    )
}

/// A deterministic RGB gradient with some texture.
pub fn test_image(width: usize, height: usize) -> Image {
    let mut px = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            px.push((x * 255 / width.max(1)) as u8);
            px.push((y * 255 / height.max(1)) as u8);
            px.push(((x * 31 + y * 17) % 256) as u8);
        }
    }
    Image::new(width, height, px).expect("dimensions are positive")
}

/// A MagnifyImage request carrying a `side`×`side` image.
pub fn image_request(side: usize) -> RequestEnvelope {
    RequestEnvelope::new(
        "rover-1",
        "ImagingService",
        "MagnifyImage",
        vec![
            ParamValue::bytes("image", test_image(side, side).to_ppm()),
            ParamValue::int("newWidth", 2 * side as i64),
            ParamValue::int("newHeight", 2 * side as i64),
        ],
    )
}

//! Visual-complexity metrics and per-game characteristic rows.

mod aggregate;
mod dog;

pub use aggregate::{aggregate_metrics, knob_contract_violations, GameMetrics, METRICS_HEADER};
pub use dog::{detect_keypoints, feature_count, DogParams, Keypoint};

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

/// zlib compression level used for the compression-ratio metric.
pub const COMPRESSION_LEVEL: u32 = 6;

fn check_dims(pixels: &[u8], width: usize, height: usize) {
    assert!(width > 0 && height > 0, "empty frame");
    assert_eq!(pixels.len(), width * height, "pixel buffer does not match {width}×{height}");
}

/// Shannon entropy (bits) of the 256-bin intensity histogram.
pub fn image_entropy(pixels: &[u8], width: usize, height: usize) -> f64 {
    check_dims(pixels, width, height);
    let mut hist = [0u64; 256];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let n = pixels.len() as f64;
    -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Uncompressed byte count over zlib-compressed byte count (level 6).
pub fn compression_ratio(pixels: &[u8], width: usize, height: usize) -> f64 {
    check_dims(pixels, width, height);
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(COMPRESSION_LEVEL));
    enc.write_all(pixels).expect("writing to a Vec cannot fail");
    let compressed = enc.finish().expect("writing to a Vec cannot fail");
    pixels.len() as f64 / compressed.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FRAME_PIXELS;
    use rand::{Rng, SeedableRng};

    fn noise(seed: u64) -> Vec<u8> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..FRAME_PIXELS).map(|_| rng.random()).collect()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(image_entropy(&[7; 100], 10, 10), 0.0);
        let two: Vec<u8> = (0..100).map(|i| if i % 2 == 0 { 0 } else { 200 }).collect();
        assert_eq!(image_entropy(&two, 10, 10), 1.0);
        let gradient: Vec<u8> = (0..256 * 256).map(|i| (i % 256) as u8).collect();
        assert_eq!(image_entropy(&gradient, 256, 256), 8.0);
    }

    #[test]
    fn entropy_ignores_pixel_order() {
        let mut px = noise(3);
        let h = image_entropy(&px, 84, 84);
        px.reverse();
        px.rotate_left(1000);
        assert_eq!(image_entropy(&px, 84, 84), h);
        assert!((0.0..=8.0).contains(&h));
    }

    #[test]
    fn compression_goldens() {
        // Frozen from a reference run of the zlib level-6 encoder.
        let constant = compression_ratio(&[0; FRAME_PIXELS], 84, 84);
        assert_eq!(constant, CONSTANT_RATIO);
        let random = compression_ratio(&noise(42), 84, 84);
        assert_eq!(random, NOISE_RATIO);
        assert!(constant > 50.0);
        assert!(random < 1.2);
        for seed in 0..20 {
            assert!(compression_ratio(&noise(seed), 84, 84) < constant);
        }
    }

    const CONSTANT_RATIO: f64 = 243.31034482758622;
    const NOISE_RATIO: f64 = 0.9984434696476582;
}

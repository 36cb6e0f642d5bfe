//! Difference-of-Gaussians keypoint counter (detection stage of SIFT only).

/// Detector settings. The defaults are SIFT's published values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DogParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma0: f64,
    /// Threshold on |DoG| for intensities normalized to [0, 1].
    pub contrast_threshold: f64,
    /// Principal-curvature ratio above which a response is an edge.
    pub edge_ratio: f64,
    /// Blur already present in the input image.
    pub input_blur: f64,
}

impl Default for DogParams {
    fn default() -> Self {
        Self {
            octaves: 3,
            scales_per_octave: 3,
            sigma0: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            input_blur: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Keypoint {
    pub octave: usize,
    /// DoG layer index within the octave, `1..=scales_per_octave`.
    pub layer: usize,
    /// Position in the octave's own pixel grid.
    pub x: usize,
    pub y: usize,
}

impl Keypoint {
    /// Position in input-image pixels.
    pub fn image_position(&self) -> (usize, usize) {
        (self.x << self.octave, self.y << self.octave)
    }
}

#[derive(Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    fn downsample(&self) -> Plane {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane { w, h, data }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
fn blur(src: &Plane, sigma: f64) -> Plane {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.w as isize, src.h as isize);
    let mut tmp = vec![0.0; src.data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = (x + i as isize - r).clamp(0, w - 1);
                acc += kv * src.data[(y * w + xx) as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; src.data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = (y + i as isize - r).clamp(0, h - 1);
                acc += kv * tmp[(yy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    Plane {
        w: src.w,
        h: src.h,
        data: out,
    }
}

fn is_extremum(dogs: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dogs[layer].at(x, y);
    let mut greater = true;
    let mut less = true;
    for plane in &dogs[layer - 1..=layer + 1] {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dogs[layer]) && nx == x && ny == y {
                    continue;
                }
                let n = plane.at(nx, ny);
                greater &= v > n;
                less &= v < n;
                if !greater && !less {
                    return false;
                }
            }
        }
    }
    true
}

fn passes_edge_test(d: &Plane, x: usize, y: usize, ratio: f64) -> bool {
    let v = d.at(x, y);
    let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * v;
    let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * v;
    let dxy = (d.at(x + 1, y + 1) - d.at(x + 1, y - 1) - d.at(x - 1, y + 1) + d.at(x - 1, y - 1)) / 4.0;
    let trace = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && trace * trace * ratio < (ratio + 1.0) * (ratio + 1.0) * det
}

/// Scale-space extrema of the DoG pyramid that pass the contrast and
/// edge tests.
pub fn detect_keypoints(pixels: &[u8], width: usize, height: usize, params: &DogParams) -> Vec<Keypoint> {
    super::check_dims(pixels, width, height);
    let s = params.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let sigmas: Vec<f64> = (0..s + 3).map(|i| params.sigma0 * k.powi(i as i32)).collect();
    let mut base = Plane {
        w: width,
        h: height,
        data: pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    };
    let pre = (params.sigma0 * params.sigma0 - params.input_blur * params.input_blur).max(0.01).sqrt();
    base = blur(&base, pre);

    let mut keypoints = Vec::new();
    for octave in 0..params.octaves {
        if base.w < 3 || base.h < 3 {
            break;
        }
        let mut gauss = vec![base.clone()];
        for i in 1..s + 3 {
            let inc = (sigmas[i] * sigmas[i] - sigmas[i - 1] * sigmas[i - 1]).sqrt();
            let next = blur(&gauss[i - 1], inc);
            gauss.push(next);
        }
        let dogs: Vec<Plane> = gauss
            .windows(2)
            .map(|g| Plane {
                w: g[0].w,
                h: g[0].h,
                data: g[1].data.iter().zip(&g[0].data).map(|(a, b)| a - b).collect(),
            })
            .collect();
        for layer in 1..=s {
            let d = &dogs[layer];
            for y in 1..d.h - 1 {
                for x in 1..d.w - 1 {
                    if d.at(x, y).abs() <= params.contrast_threshold {
                        continue;
                    }
                    if is_extremum(&dogs, layer, x, y) && passes_edge_test(d, x, y, params.edge_ratio) {
                        keypoints.push(Keypoint { octave, layer, x, y });
                    }
                }
            }
        }
        base = gauss[s].downsample();
    }
    keypoints
}

/// Number of DoG keypoints with default parameters.
pub fn feature_count(pixels: &[u8], width: usize, height: usize) -> usize {
    detect_keypoints(pixels, width, height, &DogParams::default()).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIDE: usize = 84;

    fn blob_at(x0: usize, y0: usize) -> Vec<u8> {
        let mut img = vec![0u8; SIDE * SIDE];
        for y in y0..y0 + 5 {
            for x in x0..x0 + 5 {
                img[y * SIDE + x] = 255;
            }
        }
        img
    }

    #[test]
    fn constant_frame_has_no_features() {
        assert_eq!(feature_count(&[0; SIDE * SIDE], SIDE, SIDE), 0);
        assert_eq!(feature_count(&[180; SIDE * SIDE], SIDE, SIDE), 0);
    }

    #[test]
    fn single_blob_golden() {
        let n = feature_count(&blob_at(30, 30), SIDE, SIDE);
        assert!(n >= 1);
        assert_eq!(n, BLOB_GOLDEN);
    }

    #[test]
    fn blob_count_is_translation_covariant() {
        let base = detect_keypoints(&blob_at(30, 30), SIDE, SIDE, &DogParams::default());
        for (dx, dy) in [(8, 0), (0, 8), (8, 8), (16, 8)] {
            let moved = detect_keypoints(&blob_at(30 + dx, 30 + dy), SIDE, SIDE, &DogParams::default());
            assert_eq!(moved.len(), base.len());
            for (a, b) in base.iter().zip(&moved) {
                let (ax, ay) = a.image_position();
                let (bx, by) = b.image_position();
                assert_eq!((bx - ax, by - ay), (dx, dy));
            }
        }
    }

    #[test]
    fn deterministic_on_noise() {
        let img: Vec<u8> = (0..SIDE * SIDE).map(|i| ((i * 7919) % 251) as u8).collect();
        assert_eq!(feature_count(&img, SIDE, SIDE), feature_count(&img, SIDE, SIDE));
    }

    const BLOB_GOLDEN: usize = 1;
}

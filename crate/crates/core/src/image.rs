//! Minimal image containers and the resampling primitives shared by the flow
//! solver and the input encoders.

use serde::{Deserialize, Serialize};

/// ITU-R 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "rgb buffer size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Luminance on the 0..255 scale.
    pub fn to_gray(&self) -> Plane {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                LUMA_WEIGHTS[0] * f64::from(p[0])
                    + LUMA_WEIGHTS[1] * f64::from(p[1])
                    + LUMA_WEIGHTS[2] * f64::from(p[2])
            })
            .collect();
        Plane::new(self.width, self.height, data)
    }

    /// Splits into three planes scaled to [0, 1].
    pub fn to_unit_planes(&self) -> [Plane; 3] {
        let n = self.width * self.height;
        let mut chans = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (i, p) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                chans[c][i] = f64::from(p[c]) / 255.0;
            }
        }
        chans.map(|d| Plane::new(self.width, self.height, d))
    }
}

/// Single-channel real-valued grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel access with replicate-edge padding.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centres at
    /// integers), replicate-edge outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Separable Gaussian blur with a kernel truncated at 3 sigma and
    /// replicated edges. `sigma <= 0` returns a copy.
    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil() as isize;
        let mut k: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = k.iter().sum();
        k.iter_mut().for_each(|x| *x /= sum);
        let (w, h) = (self.width() as isize, self.height() as isize);
        let pass = |src: &Plane, horizontal: bool| {
            Plane::from_fn(src.width(), src.height(), |x, y| {
                k.iter()
                    .zip(-r..=r)
                    .map(|(kv, d)| {
                        let (sx, sy) = if horizontal {
                            ((x as isize + d).clamp(0, w - 1), y as isize)
                        } else {
                            (x as isize, (y as isize + d).clamp(0, h - 1))
                        };
                        kv * src.get(sx as usize, sy as usize)
                    })
                    .sum()
            })
        };
        pass(&pass(self, true), false)
    }

    /// Bilinear resize with half-pixel-centre alignment. Resizing to the
    /// same size is the identity, and halving averages 2×2 blocks.
    pub fn resize(&self, width: usize, height: usize) -> Plane {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Plane::from_fn(width, height, |x, y| {
            self.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Gaussian-free image pyramid: level 0 is the input, each further level is a
/// bilinear half-size resample. Levels stop early once a side would drop
/// below `min_side`.
pub fn build_pyramid(base: &Plane, levels: usize, min_side: usize) -> Vec<Plane> {
    let mut out = vec![base.clone()];
    while out.len() < levels {
        let last = out.last().expect("pyramid is non-empty");
        let (w, h) = (last.width().div_ceil(2), last.height().div_ceil(2));
        if w < min_side || h < min_side {
            break;
        }
        // low-pass first, otherwise fine texture aliases into false motion
        out.push(last.gaussian_blur(PYRAMID_SIGMA).resize(w, h));
    }
    out
}

/// Blur applied before each halving of [`build_pyramid`].
pub const PYRAMID_SIGMA: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants_and_mean() {
        let c = Plane::from_fn(9, 6, |_, _| 3.5);
        let b = c.gaussian_blur(1.0);
        assert!(b.data().iter().all(|v| (v - 3.5).abs() < 1e-12));
        let p = Plane::from_fn(32, 32, |x, y| ((x + 2 * y) % 2) as f64);
        let q = p.gaussian_blur(1.0);
        assert!(q.data()[16 * 32 + 16] > 0.3 && q.data()[16 * 32 + 16] < 0.7);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let p = Plane::from_fn(7, 5, |x, y| (x * 13 + y * 7) as f64);
        assert_eq!(p.resize(7, 5), p);
    }

    #[test]
    fn halving_checkerboard_gives_half() {
        let p = Plane::from_fn(16, 16, |x, y| ((x + y) % 2) as f64);
        let h = p.resize(8, 8);
        for y in 1..7 {
            for x in 1..7 {
                assert!((h.get(x, y) - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_clamps_outside() {
        let p = Plane::from_fn(3, 3, |x, _| x as f64);
        assert_eq!(p.sample(-4.0, 1.0), 0.0);
        assert_eq!(p.sample(10.0, 1.0), 2.0);
        assert!((p.sample(0.25, 1.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gray_uses_luma_weights() {
        let img = RgbImage::filled(2, 2, [255, 0, 0]);
        assert!((img.to_gray().get(1, 1) - 0.299 * 255.0).abs() < 1e-9);
    }

    #[test]
    fn pyramid_respects_min_side() {
        let p = Plane::zeros(32, 32);
        let pyr = build_pyramid(&p, 5, 8);
        let sides: Vec<_> = pyr.iter().map(|l| l.width()).collect();
        assert_eq!(sides, vec![32, 16, 8]);
    }
}

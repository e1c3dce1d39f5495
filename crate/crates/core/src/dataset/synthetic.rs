//! Desk-scale stand-in for a real/generated video corpus.
//!
//! Every video shows the same kind of texture (a few oriented sinusoids plus
//! periodic value noise, tinted per video) translating across the frame.
//! Real videos move at a constant velocity. Fake videos draw the same base
//! velocity but perturb it every frame with zero-mean Gaussian jitter, so the
//! two classes differ only in their second-order motion.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_manifest, write_png, DatasetError, Label, Manifest, Split, VideoEntry};
use crate::image::RgbImage;

pub const MANIFEST_FILE: &str = "manifest.tsv";

const SINUSOIDS: usize = 4;
const NOISE_GRID: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub real: usize,
    pub fake: usize,
    /// Frame side in pixels (frames are square).
    pub size: usize,
    pub frames: usize,
    pub seed: u64,
    /// Std-dev of the per-frame velocity perturbation of fake videos, px/frame.
    pub jitter_std: f64,
    /// Base velocity components are uniform in [-max_speed, max_speed].
    pub max_speed: f64,
    /// Amplitude of the periodic value noise on the 0..255 scale.
    pub noise_amplitude: f64,
    /// Fractions of each class assigned to the val and test splits.
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            real: 4,
            fake: 4,
            size: 64,
            frames: 8,
            seed: 7,
            jitter_std: 1.0,
            max_speed: 1.5,
            noise_amplitude: 20.0,
            val_fraction: 0.2,
            test_fraction: 0.2,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidConfig(m.to_string()));
        if self.size < 8 {
            return bad("size must be at least 8");
        }
        if self.frames == 0 {
            return bad("frames must be positive");
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return bad("jitter_std must be finite and non-negative");
        }
        if !(self.max_speed >= 0.0 && self.max_speed.is_finite()) {
            return bad("max_speed must be finite and non-negative");
        }
        let fracs_ok = [self.val_fraction, self.test_fraction]
            .iter()
            .all(|f| (0.0..=1.0).contains(f))
            && self.val_fraction + self.test_fraction <= 1.0;
        if !fracs_ok {
            return bad("val_fraction and test_fraction must lie in [0, 1] and sum to at most 1");
        }
        Ok(())
    }
}

struct Wave {
    freq: (f64, f64),
    phase: f64,
    amplitude: f64,
}

/// Appearance of one video, evaluated at continuous texture coordinates.
struct Texture {
    waves: Vec<Wave>,
    noise: Vec<f64>,
    noise_cell: f64,
    noise_amplitude: f64,
    tint: [f64; 3],
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, size: usize, noise_amplitude: f64) -> Self {
        let waves = (0..SINUSOIDS)
            .map(|_| {
                let wavelength = rng.random_range(6.0..16.0);
                let angle = rng.random_range(0.0..TAU);
                let k = TAU / wavelength;
                Wave {
                    freq: (k * angle.cos(), k * angle.sin()),
                    phase: rng.random_range(0.0..TAU),
                    amplitude: rng.random_range(15.0..30.0),
                }
            })
            .collect();
        let noise = (0..NOISE_GRID * NOISE_GRID)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let tint = [
            rng.random_range(0.75..1.0),
            rng.random_range(0.75..1.0),
            rng.random_range(0.75..1.0),
        ];
        Self {
            waves,
            noise,
            noise_cell: (size as f64 / NOISE_GRID as f64).max(1.0),
            noise_amplitude,
            tint,
        }
    }

    fn value_noise(&self, x: f64, y: f64) -> f64 {
        let g = NOISE_GRID as f64;
        let gx = (x / self.noise_cell).rem_euclid(g);
        let gy = (y / self.noise_cell).rem_euclid(g);
        let (x0, y0) = (gx.floor() as usize % NOISE_GRID, gy.floor() as usize % NOISE_GRID);
        let (x1, y1) = ((x0 + 1) % NOISE_GRID, (y0 + 1) % NOISE_GRID);
        let (fx, fy) = (gx - gx.floor(), gy - gy.floor());
        let at = |cx: usize, cy: usize| self.noise[cy * NOISE_GRID + cx];
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    fn luminance(&self, x: f64, y: f64) -> f64 {
        let waves: f64 = self
            .waves
            .iter()
            .map(|w| w.amplitude * (w.freq.0 * x + w.freq.1 * y + w.phase).sin())
            .sum();
        128.0 + waves + self.noise_amplitude * self.value_noise(x, y)
    }

    /// Frame whose content is the texture displaced by `offset`.
    fn render(&self, size: usize, offset: (f64, f64)) -> RgbImage {
        let mut data = Vec::with_capacity(size * size * 3);
        for y in 0..size {
            for x in 0..size {
                let l = self.luminance(x as f64 - offset.0, y as f64 - offset.1);
                for t in self.tint {
                    data.push((l * t).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        RgbImage::new(size, size, data)
    }
}

/// Texture offsets of every frame. Real: constant velocity. Fake: the
/// velocity of each step is perturbed by independent N(0, jitter_std²) noise.
fn trajectory(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, label: Label) -> Vec<(f64, f64)> {
    let speed = |rng: &mut ChaCha8Rng| {
        if cfg.max_speed > 0.0 {
            rng.random_range(-cfg.max_speed..=cfg.max_speed)
        } else {
            0.0
        }
    };
    let base = (speed(rng), speed(rng));
    let start = (rng.random_range(0.0..64.0), rng.random_range(0.0..64.0));
    let jitter = Normal::new(0.0, cfg.jitter_std).expect("validated std");
    let mut pos = start;
    let mut out = Vec::with_capacity(cfg.frames);
    for _ in 0..cfg.frames {
        out.push(pos);
        let (mut vx, mut vy) = base;
        if label == Label::Fake && cfg.jitter_std > 0.0 {
            vx += jitter.sample(rng);
            vy += jitter.sample(rng);
        }
        pos = (pos.0 + vx, pos.1 + vy);
    }
    out
}

fn assign_splits(rng: &mut ChaCha8Rng, n: usize, cfg: &SyntheticConfig) -> Vec<Split> {
    let n_test = (n as f64 * cfg.test_fraction).round() as usize;
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).min(n - n_test.min(n));
    let mut splits: Vec<Split> = (0..n)
        .map(|i| {
            if i < n_test {
                Split::Test
            } else if i < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            }
        })
        .collect();
    // Fisher-Yates with our own rng so the assignment is seed-stable.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        splits.swap(i, j);
    }
    splits
}

/// Writes `out_dir/frames/<id>/NNNN.png` for every video plus
/// `out_dir/manifest.tsv`, and returns the manifest.
pub fn make_synthetic_corpus(cfg: &SyntheticConfig, out_dir: &Path) -> Result<Manifest, DatasetError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let real_splits = assign_splits(&mut master, cfg.real, cfg);
    let fake_splits = assign_splits(&mut master, cfg.fake, cfg);

    let mut entries = Vec::with_capacity(cfg.real + cfg.fake);
    let jobs = real_splits
        .into_iter()
        .enumerate()
        .map(|(i, s)| (Label::Real, i, s))
        .chain(fake_splits.into_iter().enumerate().map(|(i, s)| (Label::Fake, i, s)));
    for (label, index, split) in jobs {
        let video_seed: u64 = master.random();
        let mut rng = ChaCha8Rng::seed_from_u64(video_seed);
        let id = format!("{label}_{index:04}");
        let rel_dir = Path::new("frames").join(&id);
        let frame_dir = out_dir.join(&rel_dir);
        std::fs::create_dir_all(&frame_dir).map_err(|e| DatasetError::io(&frame_dir, e))?;

        let texture = Texture::random(&mut rng, cfg.size, cfg.noise_amplitude);
        for (t, offset) in trajectory(&mut rng, cfg, label).into_iter().enumerate() {
            let img = texture.render(cfg.size, offset);
            write_png(&frame_dir.join(format!("{t:04}.png")), &img)?;
        }
        entries.push(VideoEntry {
            id,
            frame_dir,
            label,
            source_tag: match label {
                Label::Real => "synth_constant".into(),
                Label::Fake => "synth_jitter".into(),
            },
            frame_count: cfg.frames,
            split,
        });
    }
    let manifest = Manifest::new(entries, cfg.seed)?;
    write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{list_frame_files, load_manifest};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            real: 4,
            fake: 4,
            size: 64,
            frames: 8,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_manifest_written() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_synthetic_corpus(&small(), dir.path()).unwrap();
        assert_eq!(m.len(), 8);
        assert_eq!(m.count_label(Label::Real), 4);
        assert_eq!(m.count_label(Label::Fake), 4);
        let loaded = load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, m);
        for split in [Split::Train, Split::Val, Split::Test] {
            assert!(!m.select(split).is_empty(), "{split} empty");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        make_synthetic_corpus(&small(), a.path()).unwrap();
        make_synthetic_corpus(&small(), b.path()).unwrap();
        let fa = list_frame_files(&a.path().join("frames/fake_0002")).unwrap();
        let fb = list_frame_files(&b.path().join("frames/fake_0002")).unwrap();
        assert_eq!(fa.len(), 8);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn real_trajectory_has_constant_velocity() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = trajectory(&mut rng, &cfg, Label::Real);
        let v0 = (t[1].0 - t[0].0, t[1].1 - t[0].1);
        for w in t.windows(2) {
            assert!((w[1].0 - w[0].0 - v0.0).abs() < 1e-9);
            assert!((w[1].1 - w[0].1 - v0.1).abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = trajectory(&mut rng, &cfg, Label::Fake);
        let steps: Vec<f64> = f.windows(2).map(|w| w[1].0 - w[0].0).collect();
        assert!(steps.windows(2).any(|s| (s[1] - s[0]).abs() > 1e-3));
    }

    #[test]
    fn rejects_bad_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            size: 4,
            ..small()
        };
        assert!(matches!(
            make_synthetic_corpus(&cfg, dir.path()),
            Err(DatasetError::InvalidConfig(_))
        ));
    }
}

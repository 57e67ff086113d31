//! Seeded synthetic blur-segmentation images: a sharp textured region
//! composited over a Gaussian-blurred copy of the same scene.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{EvalPair, GtMask};
use crate::gray::GrayImage;
use crate::imageio::{quantize_u8, save_map, MapFormat};
use crate::preproc::{gaussian_filter, GaussianParams};

/// Which side of a half-plane split is sharp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

/// Shape of the sharp region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// The `fraction` of the image nearest to `side` is sharp.
    HalfPlane { side: Side, fraction: f64 },
    /// Axis-aligned square of the given side, centred at `center` (row, col).
    Square { side: usize, center: (f64, f64) },
    /// Disk of the given radius centred at `center` (row, col).
    Disk { radius: f64, center: (f64, f64) },
}

impl Region {
    pub fn contains(&self, size: usize, i: usize, j: usize) -> bool {
        let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
        let n = size as f64;
        match *self {
            Region::HalfPlane { side, fraction } => {
                let cut = fraction * n;
                match side {
                    Side::Left => x < cut,
                    Side::Right => x >= n - cut,
                    Side::Top => y < cut,
                    Side::Bottom => y >= n - cut,
                }
            }
            Region::Square { side, center } => {
                let h = side as f64 / 2.0;
                (y - center.0).abs() < h && (x - center.1).abs() < h
            }
            Region::Disk { radius, center } => {
                (y - center.0).powi(2) + (x - center.1).powi(2) < radius * radius
            }
        }
    }

    pub fn mask(&self, size: usize) -> GtMask {
        let img = GrayImage::from_fn(size, size, |i, j| self.contains(size, i, j) as u8 as f64);
        GtMask::new(img).expect("binary by construction")
    }
}

/// Square image of random flat shapes overlaid with fine-grained noise.
pub fn texture(size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![rng.random_range(0.3..0.7); size * size];
    let n = size as f64;
    let shapes = (size * size / 500).max(40);
    for _ in 0..shapes {
        let level: f64 = rng.random_range(0.05..0.95);
        let cy = rng.random_range(0.0..n);
        let cx = rng.random_range(0.0..n);
        let extent = rng.random_range(3.0..(n / 6.0).max(4.0));
        let disk = rng.random_bool(0.5);
        let aspect = rng.random_range(0.4..2.5);
        let (hy, hx) = (extent, extent * aspect);
        let r0 = (cy - hy).floor().max(0.0) as usize;
        let r1 = ((cy + hy).ceil() as usize).min(size);
        let c0 = (cx - hx).floor().max(0.0) as usize;
        let c1 = ((cx + hx).ceil() as usize).min(size);
        for i in r0..r1 {
            for j in c0..c1 {
                let dy = (i as f64 + 0.5 - cy) / hy;
                let dx = (j as f64 + 0.5 - cx) / hx;
                let inside = if disk {
                    dy * dy + dx * dx < 1.0
                } else {
                    dy.abs() < 1.0 && dx.abs() < 1.0
                };
                if inside {
                    data[i * size + j] = level;
                }
            }
        }
    }
    for v in data.iter_mut() {
        *v = (*v + rng.random_range(-0.12..0.12)).clamp(0.0, 1.0);
    }
    GrayImage::new(size, size, data).expect("finite texture")
}

/// One synthetic image description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub region: Region,
    pub blur_sigma: f64,
    pub seed: u64,
}

/// Renders the image (8-bit quantized, values `k/255`) and its ground truth.
pub fn synthesize(spec: &SyntheticSpec) -> Result<(GrayImage, GtMask)> {
    if spec.size < 8 {
        return Err(Error::InvalidParam(
            "synthetic images must be at least 8x8".into(),
        ));
    }
    let sharp = texture(spec.size, spec.seed);
    let blurred = gaussian_filter(
        &sharp,
        &GaussianParams::with_three_sigma_radius(spec.blur_sigma)?,
    );
    let mask = spec.region.mask(spec.size);
    let data = (0..spec.size * spec.size)
        .map(|k| {
            let v = if mask.is_sharp(k) {
                sharp.as_slice()[k]
            } else {
                blurred.as_slice()[k]
            };
            quantize_u8(v) as f64 / 255.0
        })
        .collect();
    Ok((GrayImage::new(spec.size, spec.size, data)?, mask))
}

/// Image sharp only inside a centred square.
pub fn centered_square(
    size: usize,
    side: usize,
    blur_sigma: f64,
    seed: u64,
) -> Result<(GrayImage, GtMask)> {
    let c = size as f64 / 2.0;
    synthesize(&SyntheticSpec {
        size,
        region: Region::Square {
            side,
            center: (c, c),
        },
        blur_sigma,
        seed,
    })
}

/// Parameters of a generated evaluation suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub count: usize,
    pub seed: u64,
    pub size: usize,
    /// Background blur sigmas, cycled through by image index.
    pub blur_sigmas: Vec<f64>,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            count: 20,
            seed: 7,
            size: 256,
            blur_sigmas: vec![2.0, 4.0],
        }
    }
}

/// Image `k` of a suite: shapes cycle half-plane, square, disk; sigmas cycle
/// through `blur_sigmas`; placement and texture are drawn from the seed.
pub fn suite_item(spec: &SuiteSpec, k: usize) -> SyntheticSpec {
    let mut rng =
        ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
    let n = spec.size as f64;
    let jitter = n / 12.0;
    let center = (
        n / 2.0 + rng.random_range(-jitter..jitter),
        n / 2.0 + rng.random_range(-jitter..jitter),
    );
    let region = match k % 3 {
        0 => Region::HalfPlane {
            side: [Side::Left, Side::Right, Side::Top, Side::Bottom][rng.random_range(0..4)],
            fraction: rng.random_range(0.4..0.6),
        },
        1 => Region::Square {
            side: (n * rng.random_range(0.4..0.6)).round() as usize,
            center,
        },
        _ => Region::Disk {
            radius: n * rng.random_range(0.22..0.32),
            center,
        },
    };
    SyntheticSpec {
        size: spec.size,
        region,
        blur_sigma: spec.blur_sigmas[k % spec.blur_sigmas.len()],
        seed: rng.random(),
    }
}

pub fn generate_suite(spec: &SuiteSpec) -> Result<Vec<EvalPair>> {
    if spec.blur_sigmas.is_empty() || spec.blur_sigmas.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::InvalidParam(
            "suite needs positive blur sigmas".into(),
        ));
    }
    (0..spec.count)
        .map(|k| {
            let (image, mask) = synthesize(&suite_item(spec, k))?;
            Ok(EvalPair {
                name: format!("synth_{k:02}"),
                image,
                mask,
            })
        })
        .collect()
}

/// Writes `images/<name>.png` and `masks/<name>.png` under `out_dir`.
pub fn write_suite(pairs: &[EvalPair], out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    let images = out_dir.join("images");
    let masks = out_dir.join("masks");
    for d in [&images, &masks] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for p in pairs {
        save_map(
            &p.image,
            images.join(format!("{}.png", p.name)),
            MapFormat::Png8,
        )?;
        save_map(
            p.mask.image(),
            masks.join(format!("{}.png", p.name)),
            MapFormat::Png8,
        )?;
    }
    Ok(())
}

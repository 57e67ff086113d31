#![allow(dead_code)]

use std::f64::consts::PI;

use hifst::eval::GtMask;
use hifst::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(rows: usize, cols: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(rows, cols, |_, _| rng.random_range(0.0..1.0))
}

fn clamped(img: &GrayImage, i: isize, j: isize) -> f64 {
    let (rows, cols) = img.dims();
    img.get(
        i.clamp(0, rows as isize - 1) as usize,
        j.clamp(0, cols as isize - 1) as usize,
    )
}

/// Dense 2-D Gaussian with replicate padding.
pub fn gaussian(img: &GrayImage, sigma: f64, radius: isize) -> GrayImage {
    let mut weights = Vec::new();
    for a in -radius..=radius {
        for b in -radius..=radius {
            weights.push((
                (a, b),
                (-((a * a + b * b) as f64) / (2.0 * sigma * sigma)).exp(),
            ));
        }
    }
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let (rows, cols) = img.dims();
    GrayImage::from_fn(rows, cols, |i, j| {
        weights
            .iter()
            .map(|&((a, b), w)| w * clamped(img, i as isize + a, j as isize + b))
            .sum::<f64>()
            / total
    })
}

pub fn roberts(img: &GrayImage) -> GrayImage {
    let (rows, cols) = img.dims();
    GrayImage::from_fn(rows, cols, |i, j| {
        let (i, j) = (i as isize, j as isize);
        let gx = clamped(img, i, j) - clamped(img, i + 1, j + 1);
        let gy = clamped(img, i, j + 1) - clamped(img, i + 1, j);
        gx.hypot(gy)
    })
}

/// `cos_table[k][x] = α_k cos(π (2x + 1) k / 2M)`.
pub fn cos_table(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|k| {
            let alpha = if k == 0 {
                (1.0 / m as f64).sqrt()
            } else {
                (2.0 / m as f64).sqrt()
            };
            (0..m)
                .map(|x| alpha * (PI * (2 * x + 1) as f64 * k as f64 / (2 * m) as f64).cos())
                .collect()
        })
        .collect()
}

/// Magnitudes of the coefficients with `u + v >= m - 1` of the replicate-padded
/// patch centred at `(i, j)`, `u` indexing rows, ordered by `u` then `v`.
#[allow(clippy::needless_range_loop)]
pub fn hf_magnitudes(g: &GrayImage, i: usize, j: usize, m: usize, table: &[Vec<f64>]) -> Vec<f64> {
    let h = (m / 2) as isize;
    let patch: Vec<Vec<f64>> = (0..m as isize)
        .map(|a| {
            (0..m as isize)
                .map(|b| clamped(g, i as isize + a - h, j as isize + b - h))
                .collect()
        })
        .collect();
    // rows_t[a][v] = Σ_b patch[a][b] c_v(b)
    let rows_t: Vec<Vec<f64>> = patch
        .iter()
        .map(|row| {
            (0..m)
                .map(|v| row.iter().zip(&table[v]).map(|(p, c)| p * c).sum())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for u in 0..m {
        for v in (m - 1 - u)..m {
            let coeff: f64 = (0..m).map(|a| table[u][a] * rows_t[a][v]).sum();
            out.push(coeff.abs());
        }
    }
    out
}

/// Max-pooled normalized layer response computed by brute force from the
/// raw input image.
pub fn pooled_response(img: &GrayImage, scales: &[usize], sigma: f64, radius: isize) -> GrayImage {
    let g = roberts(&gaussian(img, sigma, radius));
    let (rows, cols) = g.dims();
    let tables: Vec<_> = scales.iter().map(|&m| cos_table(m)).collect();
    let depth: usize = scales.iter().sum();
    let mut stack = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut fused = Vec::new();
            for (&m, table) in scales.iter().zip(&tables) {
                fused.extend(hf_magnitudes(&g, i, j, m, table));
            }
            fused.sort_by(|a, b| a.partial_cmp(b).unwrap());
            fused.truncate(depth);
            stack.push(fused);
        }
    }
    let mut pooled = vec![0.0f64; rows * cols];
    for t in 0..depth {
        let lo = stack.iter().map(|px| px[t]).fold(f64::INFINITY, f64::min);
        let hi = stack
            .iter()
            .map(|px| px[t])
            .fold(f64::NEG_INFINITY, f64::max);
        for (p, px) in pooled.iter_mut().zip(&stack) {
            let v = if hi > lo {
                (px[t] - lo) / (hi - lo)
            } else {
                0.0
            };
            *p = p.max(v);
        }
    }
    GrayImage::new(rows, cols, pooled).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Means of `map` over pixels whose whole `(2 margin + 1)^2` neighbourhood
/// shares their label: `(sharp interior, blurred interior)`.
pub fn interior_means(map: &GrayImage, mask: &GtMask, margin: usize) -> (f64, f64) {
    let (rows, cols) = map.dims();
    // sat[i * (cols + 1) + j] = sharp pixels in [0, i) x [0, j)
    let mut sat = vec![0usize; (rows + 1) * (cols + 1)];
    for i in 0..rows {
        for j in 0..cols {
            sat[(i + 1) * (cols + 1) + j + 1] = mask.is_sharp(i * cols + j) as usize
                + sat[i * (cols + 1) + j + 1]
                + sat[(i + 1) * (cols + 1) + j]
                - sat[i * (cols + 1) + j];
        }
    }
    let (mut sharp, mut ns, mut blurred, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..rows {
        for j in 0..cols {
            let (y0, y1) = (i.saturating_sub(margin), (i + margin + 1).min(rows));
            let (x0, x1) = (j.saturating_sub(margin), (j + margin + 1).min(cols));
            let count = sat[y1 * (cols + 1) + x1] + sat[y0 * (cols + 1) + x0]
                - sat[y0 * (cols + 1) + x1]
                - sat[y1 * (cols + 1) + x0];
            let v = map.get(i, j);
            if count == (y1 - y0) * (x1 - x0) {
                sharp += v;
                ns += 1;
            } else if count == 0 {
                blurred += v;
                nb += 1;
            }
        }
    }
    assert!(ns > 0 && nb > 0, "no interior pixels");
    (sharp / ns as f64, blurred / nb as f64)
}

/// True when every nonzero pixel of `points` lies within Chebyshev distance
/// `radius` of a sharp mask pixel.
pub fn within_dilated_mask(points: &GrayImage, mask: &GtMask, radius: usize) -> bool {
    let (rows, cols) = points.dims();
    let r = radius as isize;
    (0..rows).all(|i| {
        (0..cols).all(|j| {
            points.get(i, j) == 0.0
                || (i as isize - r..=i as isize + r).any(|y| {
                    (j as isize - r..=j as isize + r).any(|x| {
                        y >= 0
                            && x >= 0
                            && y < rows as isize
                            && x < cols as isize
                            && mask.is_sharp(y as usize * cols + x as usize)
                    })
                })
        })
    })
}

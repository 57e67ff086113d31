//! Applications of the blur map: camera focus points, a depth-of-field
//! scalar and background blur magnification.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gray::{min_max_normalize, GrayImage};
use crate::postproc::BlurMap;
use crate::preproc::{gaussian_filter, GaussianParams};

/// Number of precomputed blur levels blended by [`magnify_blur`].
pub const MAGNIFY_LEVELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusParams {
    /// Threshold on the smoothed, renormalized map.
    pub threshold: f64,
    /// Gaussian pre-smoothing sigma, pixels (radius `⌈3σ⌉`).
    pub sigma: f64,
}

impl Default for FocusParams {
    fn default() -> Self {
        FocusParams {
            threshold: 0.98,
            sigma: 5.0,
        }
    }
}

impl FocusParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "focus threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "focus sigma must be > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Radius of the pre-smoothing kernel, `⌈3σ⌉`.
    pub fn radius(&self) -> usize {
        ((3.0 * self.sigma).ceil() as usize).max(1)
    }
}

/// Binary map of the pixels where the smoothed, renormalized blur map
/// reaches the threshold.
pub fn focus_points(blur_map: &BlurMap, params: &FocusParams) -> Result<GrayImage> {
    params.validate()?;
    let smoothed = gaussian_filter(
        &blur_map.map,
        &GaussianParams::new(params.sigma, params.radius())?,
    );
    let normalized = min_max_normalize(&smoothed);
    Ok(normalized.map(|v| if v >= params.threshold { 1.0 } else { 0.0 }))
}

/// Median of the map values (lower median for even counts).
pub fn dof_estimate(blur_map: &BlurMap) -> f64 {
    let mut values = blur_map.map.as_slice().to_vec();
    let mid = (values.len() - 1) / 2;
    let (_, median, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *median
}

/// Re-blurs out-of-focus areas: pixel `(i, j)` receives a Gaussian blur of
/// sigma `strength·(1 - D(i, j))`, approximated by linear interpolation
/// between [`MAGNIFY_LEVELS`] uniformly blurred copies.
pub fn magnify_blur(img: &GrayImage, blur_map: &BlurMap, strength: f64) -> Result<GrayImage> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "magnification strength must be >= 0, got {strength}"
        )));
    }
    img.ensure_same_dims(&blur_map.map)?;
    if strength == 0.0 {
        return Ok(img.clone());
    }
    let top = (MAGNIFY_LEVELS - 1) as f64;
    let mut levels = Vec::with_capacity(MAGNIFY_LEVELS);
    levels.push(img.clone());
    for k in 1..MAGNIFY_LEVELS {
        let params = GaussianParams::with_three_sigma_radius(strength * k as f64 / top)?;
        levels.push(gaussian_filter(img, &params));
    }

    let data: Vec<f64> = blur_map
        .map
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(idx, &d)| {
            let pos = (1.0 - d.clamp(0.0, 1.0)) * top;
            let lower = (pos.floor() as usize).min(MAGNIFY_LEVELS - 2);
            let frac = pos - lower as f64;
            let a = levels[lower].as_slice()[idx];
            let b = levels[lower + 1].as_slice()[idx];
            (1.0 - frac) * a + frac * b
        })
        .collect();
    GrayImage::new(img.rows(), img.cols(), data)
}

/// [`magnify_blur`] applied to each channel.
pub fn magnify_blur_rgb(
    channels: &[GrayImage; 3],
    blur_map: &BlurMap,
    strength: f64,
) -> Result<[GrayImage; 3]> {
    Ok([
        magnify_blur(&channels[0], blur_map, strength)?,
        magnify_blur(&channels[1], blur_map, strength)?,
        magnify_blur(&channels[2], blur_map, strength)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blur_map(map: GrayImage) -> BlurMap {
        BlurMap {
            map,
            params: PipelineConfig::default(),
        }
    }

    fn texture(rows: usize, cols: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(rows, cols, |_, _| rng.random::<f64>())
    }

    fn total_variation(img: &GrayImage) -> f64 {
        let mut tv = 0.0;
        for i in 0..img.rows() {
            for j in 0..img.cols() {
                if j + 1 < img.cols() {
                    tv += (img.get(i, j + 1) - img.get(i, j)).abs();
                }
                if i + 1 < img.rows() {
                    tv += (img.get(i + 1, j) - img.get(i, j)).abs();
                }
            }
        }
        tv
    }

    #[test]
    fn constant_map_has_no_focus_points() {
        let f = focus_points(
            &blur_map(GrayImage::filled(10, 10, 0.7)),
            &FocusParams::default(),
        )
        .unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_constant_map_has_a_focus_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let map = GrayImage::from_fn(32, 32, |_, _| rng.random::<f64>());
        let f = focus_points(&blur_map(map), &FocusParams::default()).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(f.as_slice().contains(&1.0));
    }

    #[test]
    fn focus_count_shrinks_with_threshold() {
        let map = GrayImage::from_fn(40, 40, |i, j| {
            (-(((i as f64 - 20.0).powi(2) + (j as f64 - 14.0).powi(2)) / 200.0)).exp()
        });
        let bm = blur_map(map);
        let mut prev = usize::MAX;
        for th in [0.5, 0.9, 0.95, 0.98, 1.0] {
            let f = focus_points(
                &bm,
                &FocusParams {
                    threshold: th,
                    sigma: 2.0,
                },
            )
            .unwrap();
            let count = f.as_slice().iter().filter(|&&v| v == 1.0).count();
            assert!(count <= prev && count >= 1);
            prev = count;
        }
    }

    #[test]
    fn focus_params_validation() {
        assert!(FocusParams {
            threshold: 0.0,
            sigma: 5.0
        }
        .validate()
        .is_err());
        assert!(FocusParams {
            threshold: 1.1,
            sigma: 5.0
        }
        .validate()
        .is_err());
        assert!(FocusParams {
            threshold: 1.0,
            sigma: 0.0
        }
        .validate()
        .is_err());
        assert_eq!(FocusParams::default().radius(), 15);
    }

    #[test]
    fn dof_examples() {
        assert_eq!(dof_estimate(&blur_map(GrayImage::zeros(4, 4))), 0.0);
        // 3 zeros and 2 ones -> median 0.
        let m = GrayImage::new(1, 5, vec![1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(dof_estimate(&blur_map(m)), 0.0);
        // Even count takes the lower median.
        let m = GrayImage::new(1, 4, vec![0.9, 0.1, 0.3, 0.7]).unwrap();
        assert_eq!(dof_estimate(&blur_map(m)), 0.3);
    }

    #[test]
    fn magnify_identities() {
        let img = texture(16, 20, 4);
        let map = blur_map(texture(16, 20, 5));
        assert_eq!(magnify_blur(&img, &map, 0.0).unwrap(), img);
        let sharp = blur_map(GrayImage::filled(16, 20, 1.0));
        assert_eq!(magnify_blur(&img, &sharp, 3.0).unwrap(), img);
        assert!(magnify_blur(&img, &map, -1.0).is_err());
        assert!(magnify_blur(&GrayImage::zeros(3, 3), &map, 1.0).is_err());
    }

    #[test]
    fn fully_blurred_map_is_uniform_blur() {
        let img = texture(24, 24, 6);
        let out = magnify_blur(&img, &blur_map(GrayImage::zeros(24, 24)), 2.5).unwrap();
        let oracle = gaussian_filter(&img, &GaussianParams::with_three_sigma_radius(2.5).unwrap());
        let err = out
            .as_slice()
            .iter()
            .zip(oracle.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "max abs diff {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dof_is_monotone(base in proptest::collection::vec(0.0f64..1.0, 25),
                           bump in proptest::collection::vec(0.0f64..0.5, 25)) {
            let b = GrayImage::new(5, 5, base.clone()).unwrap();
            let a = GrayImage::new(5, 5, base.iter().zip(&bump).map(|(x, y)| (x + y).min(1.0)).collect()).unwrap();
            prop_assert!(dof_estimate(&blur_map(a)) >= dof_estimate(&blur_map(b)));
        }

        #[test]
        fn magnify_never_sharpens(level in 0.0f64..1.0, strength in 0.1f64..6.0, seed in 0u64..1000) {
            let img = texture(20, 20, seed);
            let out = magnify_blur(&img, &blur_map(GrayImage::filled(20, 20, level)), strength).unwrap();
            prop_assert!(total_variation(&out) <= total_variation(&img) + 1e-6);
        }
    }
}

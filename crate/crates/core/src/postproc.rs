//! Edge-preserving smoothing (domain transform, recursive variant) and
//! final map normalization.

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::gray::{min_max_normalize, GrayImage};

/// Which image steers the edge-preserving filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuideSource {
    /// The grayscale input image.
    InputImage,
    /// The map being smoothed.
    MapItself,
}

impl GuideSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            GuideSource::InputImage => "input-image",
            GuideSource::MapItself => "map-itself",
        }
    }
}

impl std::str::FromStr for GuideSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input-image" => Ok(GuideSource::InputImage),
            "map-itself" => Ok(GuideSource::MapItself),
            other => Err(Error::InvalidParam(format!(
                "unknown guide {other:?}, expected input-image or map-itself"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothParams {
    /// Spatial standard deviation, pixels.
    pub sigma_s: f64,
    /// Range standard deviation, in guide intensity units.
    pub sigma_r: f64,
    pub iterations: usize,
    pub guide: GuideSource,
}

impl Default for SmoothParams {
    fn default() -> Self {
        SmoothParams {
            sigma_s: 15.0,
            sigma_r: 0.3,
            iterations: 3,
            guide: GuideSource::InputImage,
        }
    }
}

impl SmoothParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "sigma_s must be > 0, got {}",
                self.sigma_s
            )));
        }
        if self.sigma_r.is_nan() || self.sigma_r <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "sigma_r must be > 0, got {}",
                self.sigma_r
            )));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidParam(
                "smoothing needs at least one iteration".into(),
            ));
        }
        Ok(())
    }

    /// Feedback coefficient `a = exp(-√2 / σ_H)` for iteration `i` (zero-based).
    fn feedback(&self, i: usize) -> f64 {
        let n = self.iterations as i32;
        let sigma_h =
            self.sigma_s * 3f64.sqrt() * 2f64.powi(n - 1 - i as i32) / (4f64.powi(n) - 1.0).sqrt();
        (-(2f64.sqrt()) / sigma_h).exp()
    }
}

/// Transformed-domain distances between horizontally adjacent pixels:
/// `d[j] = 1 + (σ_s/σ_r)·|guide(j) - guide(j-1)|`, with `d[0]` unused.
fn domain_steps(guide: &GrayImage, ratio: f64) -> Vec<f64> {
    let (rows, cols) = guide.dims();
    let mut d = vec![1.0; rows * cols];
    d.par_chunks_mut(cols).enumerate().for_each(|(i, dst)| {
        let g = guide.row(i);
        for j in 1..cols {
            dst[j] = 1.0 + ratio * (g[j] - g[j - 1]).abs();
        }
    });
    d
}

/// One causal plus anti-causal recursive pass along every row.
fn recursive_rows(data: &mut [f64], steps: &[f64], cols: usize, a: f64) {
    data.par_chunks_mut(cols)
        .zip(steps.par_chunks(cols))
        .for_each(|(row, d)| {
            let weights: Vec<f64> = d.iter().map(|&x| a.powf(x)).collect();
            for j in 1..cols {
                row[j] += weights[j] * (row[j - 1] - row[j]);
            }
            for j in (0..cols.saturating_sub(1)).rev() {
                row[j] += weights[j + 1] * (row[j + 1] - row[j]);
            }
        });
}

/// Domain-transform recursive filter of `map` steered by `guide`.
pub fn domain_transform_smooth(
    map: &GrayImage,
    guide: &GrayImage,
    params: &SmoothParams,
) -> Result<GrayImage> {
    params.validate()?;
    map.ensure_same_dims(guide)?;
    let ratio = params.sigma_s / params.sigma_r;
    let (rows, cols) = map.dims();
    let steps_h = domain_steps(guide, ratio);
    let steps_v = domain_steps(&guide.transpose(), ratio);

    let mut current = map.clone();
    for i in 0..params.iterations {
        let a = params.feedback(i);
        let mut data = current.into_vec();
        recursive_rows(&mut data, &steps_h, cols, a);
        let mut t = GrayImage::from_raw(rows, cols, data).transpose().into_vec();
        recursive_rows(&mut t, &steps_v, rows, a);
        current = GrayImage::from_raw(cols, rows, t).transpose();
    }
    Ok(current)
}

/// A normalized blur detection map. Higher values mean sharper.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurMap {
    pub map: GrayImage,
    /// Parameters that produced the map.
    pub params: PipelineConfig,
}

impl BlurMap {
    pub fn dims(&self) -> (usize, usize) {
        self.map.dims()
    }
}

/// Min-max normalizes to `[0, 1]` (constant maps become zero) and attaches `params`.
pub fn normalize_map(map: &GrayImage, params: &PipelineConfig) -> BlurMap {
    BlurMap {
        map: min_max_normalize(map),
        params: params.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn step_row(cols: usize, edge: usize) -> GrayImage {
        GrayImage::from_fn(4, cols, |_, j| if j < edge { 0.0 } else { 1.0 })
    }

    /// Columns strictly inside (0.1, 0.9) on row 0.
    fn transition_width(img: &GrayImage) -> usize {
        img.row(0).iter().filter(|&&v| v > 0.1 && v < 0.9).count()
    }

    #[test]
    fn constant_map_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let guide = GrayImage::from_fn(20, 17, |_, _| rng.random::<f64>());
        let map = GrayImage::filled(20, 17, 0.25);
        let out = domain_transform_smooth(&map, &guide, &SmoothParams::default()).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn uniform_guide_blurs_a_step() {
        let map = step_row(64, 32);
        let guide = GrayImage::filled(4, 64, 0.5);
        let params = SmoothParams {
            sigma_r: f64::INFINITY,
            ..SmoothParams::default()
        };
        let out = domain_transform_smooth(&map, &guide, &params).unwrap();
        assert_eq!(transition_width(&map), 0);
        assert!(
            transition_width(&out) >= 4,
            "width {}",
            transition_width(&out)
        );
    }

    #[test]
    fn guide_edge_keeps_the_step() {
        let map = step_row(64, 32);
        let out = domain_transform_smooth(&map, &map, &SmoothParams::default()).unwrap();
        let row = out.row(0);
        let crossing = row.iter().position(|&v| v >= 0.5).unwrap();
        assert!(crossing.abs_diff(32) <= 2, "crossing at {crossing}");
    }

    #[test]
    fn output_stays_in_input_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let map = GrayImage::from_fn(24, 30, |_, _| rng.random::<f64>() * 3.0 - 1.0);
        let guide = GrayImage::from_fn(24, 30, |_, _| rng.random::<f64>());
        for guide_img in [&guide, &GrayImage::filled(24, 30, 0.0)] {
            let out = domain_transform_smooth(&map, guide_img, &SmoothParams::default()).unwrap();
            assert!(out.min() >= map.min() - 1e-6);
            assert!(out.max() <= map.max() + 1e-6);
        }
    }

    #[test]
    fn rejects_mismatched_guide() {
        let map = GrayImage::zeros(4, 5);
        let guide = GrayImage::zeros(5, 4);
        let err = domain_transform_smooth(&map, &guide, &SmoothParams::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn feedback_coefficients() {
        let p = SmoothParams::default();
        // σ_H for three iterations: σ_s·√3·{4, 2, 1}/√63.
        for (i, scale) in [4.0, 2.0, 1.0].into_iter().enumerate() {
            let sigma_h = 15.0 * 3f64.sqrt() * scale / 63f64.sqrt();
            assert!((p.feedback(i) - (-(2f64.sqrt()) / sigma_h).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_examples() {
        let cfg = PipelineConfig::default();
        let m = normalize_map(&GrayImage::new(1, 3, vec![0.0, 5.0, 10.0]).unwrap(), &cfg);
        assert_eq!(m.map.as_slice(), &[0.0, 0.5, 1.0]);
        let flat = normalize_map(&GrayImage::filled(3, 3, 2.0), &cfg);
        assert!(flat.map.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(flat.params, cfg);
    }

    #[test]
    fn guide_source_parses() {
        assert_eq!(
            "input-image".parse::<GuideSource>().unwrap(),
            GuideSource::InputImage
        );
        assert_eq!(
            "map-itself".parse::<GuideSource>().unwrap(),
            GuideSource::MapItself
        );
        assert!("other".parse::<GuideSource>().is_err());
    }
}

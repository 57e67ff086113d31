//! End-to-end blur detection.

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::gray::GrayImage;
use crate::postproc::{domain_transform_smooth, normalize_map, BlurMap, GuideSource};
use crate::preproc::{gaussian_filter, gradient_magnitude};
use crate::transform::{
    fuse_and_sort_strided, local_entropy, pooled_response, weight_map, LayerStats,
};

/// Every intermediate plane of one detection run.
#[derive(Debug, Clone)]
pub struct DetectionStages {
    /// Pre-filtered input.
    pub filtered: GrayImage,
    /// Gradient magnitudes of the filtered input.
    pub gradient: GrayImage,
    /// Max-pooled normalized layers, in `[0, 1]`.
    pub pooled: GrayImage,
    /// Local entropy of `pooled`.
    pub entropy: GrayImage,
    /// `pooled ∘ entropy` before smoothing.
    pub weighted: GrayImage,
    /// Edge-preserving smoothed `weighted`.
    pub smoothed: GrayImage,
    pub blur_map: BlurMap,
}

/// Nearest-neighbour upsampling of a grid sampled every `stride` pixels.
fn upsample_nearest(grid: &GrayImage, stride: usize, rows: usize, cols: usize) -> GrayImage {
    if stride == 1 {
        return grid.clone();
    }
    GrayImage::from_fn(rows, cols, |i, j| {
        let gi = ((i + stride / 2) / stride).min(grid.rows() - 1);
        let gj = ((j + stride / 2) / stride).min(grid.cols() - 1);
        grid.get(gi, gj)
    })
}

/// Runs the detector and keeps every intermediate.
pub fn detect_stages(image: &GrayImage, config: &PipelineConfig) -> Result<DetectionStages> {
    config.validate()?;
    let (rows, cols) = image.dims();
    let filtered = gaussian_filter(image, &config.gaussian_params());
    let gradient = gradient_magnitude(&filtered);

    let stack = fuse_and_sort_strided(&gradient, &config.scales, config.stride);
    let stats = LayerStats::of(&stack);
    let pooled = upsample_nearest(&pooled_response(&stack, &stats), config.stride, rows, cols);
    drop(stack);

    let entropy = local_entropy(&pooled, &config.entropy_params());
    let weighted = weight_map(&pooled, &entropy)?;
    let smooth = config.smooth_params();
    let smoothed = match smooth.guide {
        GuideSource::InputImage => domain_transform_smooth(&weighted, image, &smooth)?,
        GuideSource::MapItself => domain_transform_smooth(&weighted, &weighted, &smooth)?,
    };
    let blur_map = normalize_map(&smoothed, config);
    Ok(DetectionStages {
        filtered,
        gradient,
        pooled,
        entropy,
        weighted,
        smoothed,
        blur_map,
    })
}

/// Computes the normalized blur map of a grayscale image in `[0, 1]`.
pub fn detect(image: &GrayImage, config: &PipelineConfig) -> Result<BlurMap> {
    Ok(detect_stages(image, config)?.blur_map)
}

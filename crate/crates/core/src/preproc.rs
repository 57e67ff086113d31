//! Denoising pre-filter and Roberts cross gradient magnitude.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gray::GrayImage;

/// Sampled Gaussian kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for GaussianParams {
    fn default() -> Self {
        GaussianParams {
            sigma: 0.5,
            radius: 1,
        }
    }
}

impl GaussianParams {
    pub fn new(sigma: f64, radius: usize) -> Result<Self> {
        let p = GaussianParams { sigma, radius };
        p.validate()?;
        Ok(p)
    }

    /// Kernel truncated at `⌈3σ⌉` (at least 1).
    pub fn with_three_sigma_radius(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "gaussian sigma must be > 0, got {sigma}"
            )));
        }
        Self::new(sigma, ((3.0 * sigma).ceil() as usize).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "gaussian sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.radius < 1 {
            return Err(Error::InvalidParam("gaussian radius must be >= 1".into()));
        }
        Ok(())
    }

    /// Normalized 1-D weights for offsets `-radius..=radius`.
    ///
    /// The renormalized 2-D kernel is the outer product of this vector with itself.
    pub fn kernel_1d(&self) -> Vec<f64> {
        let r = self.radius as isize;
        let two_s2 = 2.0 * self.sigma * self.sigma;
        let mut w: Vec<f64> = (-r..=r)
            .map(|x| (-((x * x) as f64) / two_s2).exp())
            .collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w
    }
}

/// Correlates every row with `kernel` (odd length, centered), replicate padding.
pub(crate) fn filter_rows(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let (rows, cols) = img.dims();
    let r = kernel.len() / 2;
    let mut out = vec![0.0; rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(i, dst)| {
        let src = img.row(i);
        let mut padded = Vec::with_capacity(cols + 2 * r);
        padded.extend(std::iter::repeat_n(src[0], r));
        padded.extend_from_slice(src);
        padded.extend(std::iter::repeat_n(src[cols - 1], r));
        for (j, d) in dst.iter_mut().enumerate() {
            *d = kernel
                .iter()
                .zip(&padded[j..j + kernel.len()])
                .fold(0.0, |acc, (w, v)| acc + w * v);
        }
    });
    GrayImage::from_raw(rows, cols, out)
}

/// Separable convolution with the same symmetric kernel along both axes.
pub(crate) fn filter_separable(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let horiz = filter_rows(img, kernel);
    filter_rows(&horiz.transpose(), kernel).transpose()
}

/// Convolves with the sampled, renormalized 2-D Gaussian using replicate padding.
pub fn gaussian_filter(img: &GrayImage, params: &GaussianParams) -> GrayImage {
    filter_separable(img, &params.kernel_1d())
}

/// Roberts cross gradient magnitude.
///
/// Both 2x2 kernels are anchored at their top-left element:
/// `gx = I(i,j) - I(i+1,j+1)` and `gy = I(i,j+1) - I(i+1,j)`, with the last
/// row and column replicated.
pub fn gradient_magnitude(img: &GrayImage) -> GrayImage {
    let (rows, cols) = img.dims();
    let mut out = vec![0.0; rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(i, dst)| {
        let below = (i + 1).min(rows - 1);
        let cur = img.row(i);
        let next = img.row(below);
        for (j, d) in dst.iter_mut().enumerate() {
            let right = (j + 1).min(cols - 1);
            let gx = cur[j] - next[right];
            let gy = cur[right] - next[j];
            *d = (gx * gx + gy * gy).sqrt();
        }
    });
    GrayImage::from_raw(rows, cols, out)
}

//! Multiscale fusion, sorting, layer normalization and pooling of
//! high-frequency coefficients, plus the local-entropy weighting.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gray::GrayImage;
use crate::sliding_dct::{for_each_output_row, ScaleKernel, ScaleSet};

/// Per pixel, the `depth` smallest fused high-frequency magnitudes in
/// ascending order. Layer `t` is the plane of `t`-th entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedStack {
    rows: usize,
    cols: usize,
    depth: usize,
    values: Vec<f64>,
}

impl FusedStack {
    /// Builds a stack from pixel-major values; each pixel's entries must be
    /// finite, non-negative and non-decreasing.
    pub fn new(rows: usize, cols: usize, depth: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || depth == 0 || values.len() != rows * cols * depth {
            return Err(Error::InvalidParam(format!(
                "stack of {rows}x{cols}x{depth} cannot hold {} values",
                values.len()
            )));
        }
        for px in values.chunks(depth) {
            if px.iter().any(|v| !v.is_finite() || *v < 0.0) || px.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidParam(
                    "stack entries must be finite, non-negative and ascending".into(),
                ));
            }
        }
        Ok(FusedStack {
            rows,
            cols,
            depth,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of layers `S`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.cols + j) * self.depth;
        &self.values[k..k + self.depth]
    }

    /// Layer `t` (zero-based) as an image.
    pub fn layer(&self, t: usize) -> GrayImage {
        assert!(t < self.depth);
        let data = self
            .values
            .iter()
            .skip(t)
            .step_by(self.depth)
            .copied()
            .collect();
        GrayImage::from_raw(self.rows, self.cols, data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Fused, sorted and truncated transform at every pixel.
pub fn fuse_and_sort(g: &GrayImage, scales: &ScaleSet) -> FusedStack {
    fuse_and_sort_strided(g, scales, 1)
}

/// As [`fuse_and_sort`], evaluated only at pixels whose row and column are
/// multiples of `stride`. The stack has `⌈rows/stride⌉ x ⌈cols/stride⌉` pixels.
pub fn fuse_and_sort_strided(g: &GrayImage, scales: &ScaleSet, stride: usize) -> FusedStack {
    assert!(stride >= 1);
    let kernels = ScaleKernel::for_scales(scales);
    let total = scales.fused_len();
    let depth = scales.retained_layers().min(total);
    let rows: Vec<usize> = (0..g.rows()).step_by(stride).collect();
    let cols: Vec<usize> = (0..g.cols()).step_by(stride).collect();
    let mut values = vec![0.0; rows.len() * cols.len() * depth];
    for_each_output_row(g, &kernels, &rows, &cols, &mut values, |cand, dst| {
        for (px, out) in cand.chunks_mut(total).zip(dst.chunks_mut(depth)) {
            smallest_sorted(px, out);
        }
    });
    FusedStack {
        rows: rows.len(),
        cols: cols.len(),
        depth,
        values,
    }
}

/// Writes the `out.len()` smallest entries of `candidates` in ascending order.
fn smallest_sorted(candidates: &mut [f64], out: &mut [f64]) {
    let k = out.len();
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    let head = &mut candidates[..k];
    head.sort_unstable_by(f64::total_cmp);
    out.copy_from_slice(head);
}

/// Per-layer extrema over all pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl LayerStats {
    pub fn of(stack: &FusedStack) -> LayerStats {
        let depth = stack.depth;
        let init = || (vec![f64::INFINITY; depth], vec![f64::NEG_INFINITY; depth]);
        let (min, max) = stack
            .values
            .par_chunks(depth)
            .fold(init, |(mut lo, mut hi), px| {
                for t in 0..depth {
                    lo[t] = lo[t].min(px[t]);
                    hi[t] = hi[t].max(px[t]);
                }
                (lo, hi)
            })
            .reduce(init, |(mut lo, mut hi), (lo2, hi2)| {
                for t in 0..depth {
                    lo[t] = lo[t].min(lo2[t]);
                    hi[t] = hi[t].max(hi2[t]);
                }
                (lo, hi)
            });
        LayerStats { min, max }
    }

    #[inline]
    fn normalize(&self, t: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[t], self.max[t]);
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    }
}

/// Layers rescaled to `[0, 1]`; no ordering guarantee within a pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedStack {
    rows: usize,
    cols: usize,
    depth: usize,
    values: Vec<f64>,
}

impl NormalizedStack {
    /// Builds a stack from pixel-major values in `[0, 1]`.
    pub fn new(rows: usize, cols: usize, depth: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || depth == 0 || values.len() != rows * cols * depth {
            return Err(Error::InvalidParam(format!(
                "stack of {rows}x{cols}x{depth} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParam(
                "normalized values must lie in [0, 1]".into(),
            ));
        }
        Ok(NormalizedStack {
            rows,
            cols,
            depth,
            values,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.cols + j) * self.depth;
        &self.values[k..k + self.depth]
    }

    pub fn layer(&self, t: usize) -> GrayImage {
        assert!(t < self.depth);
        let data = self
            .values
            .iter()
            .skip(t)
            .step_by(self.depth)
            .copied()
            .collect();
        GrayImage::from_raw(self.rows, self.cols, data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Min-max normalizes each layer over the whole image. Degenerate layers
/// (`max == min`) become zero.
pub fn layer_normalize(stack: &FusedStack) -> (NormalizedStack, LayerStats) {
    let stats = LayerStats::of(stack);
    let depth = stack.depth;
    let mut values = stack.values.clone();
    values.par_chunks_mut(depth).for_each(|px| {
        for (t, v) in px.iter_mut().enumerate() {
            *v = stats.normalize(t, *v);
        }
    });
    let normalized = NormalizedStack {
        rows: stack.rows,
        cols: stack.cols,
        depth,
        values,
    };
    (normalized, stats)
}

/// Per-pixel maximum over all normalized layers.
pub fn max_pool(stack: &NormalizedStack) -> GrayImage {
    let data = stack
        .values
        .par_chunks(stack.depth)
        .map(|px| px.iter().copied().fold(0.0, f64::max))
        .collect();
    GrayImage::from_raw(stack.rows, stack.cols, data)
}

/// `max_pool(layer_normalize(stack))` without materializing the normalized stack.
pub fn pooled_response(stack: &FusedStack, stats: &LayerStats) -> GrayImage {
    let data = stack
        .values
        .par_chunks(stack.depth)
        .map(|px| {
            px.iter()
                .enumerate()
                .map(|(t, &v)| stats.normalize(t, v))
                .fold(0.0, f64::max)
        })
        .collect();
    GrayImage::from_raw(stack.rows, stack.cols, data)
}

/// Histogram-based local entropy settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntropyParams {
    /// Odd window side `k`.
    pub window: usize,
    /// Uniform bins over `[0, 1]`.
    pub bins: usize,
}

impl Default for EntropyParams {
    fn default() -> Self {
        EntropyParams {
            window: 7,
            bins: 256,
        }
    }
}

impl EntropyParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "entropy window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.bins < 2 || self.bins > u16::MAX as usize {
            return Err(Error::InvalidParam(format!(
                "entropy bins must be in 2..=65535, got {}",
                self.bins
            )));
        }
        Ok(())
    }

    /// Largest value [`local_entropy`] can produce.
    pub fn max_entropy(&self) -> f64 {
        ((self.window * self.window).min(self.bins) as f64).log2()
    }
}

/// Bin of `v ∈ [0, 1]`; the last bin is closed on the right.
#[inline]
fn bin_of(v: f64, bins: usize) -> u16 {
    ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1) as u16
}

/// Shannon entropy (bits) of the histogram of each `k x k` replicate-padded window.
pub fn local_entropy(t: &GrayImage, params: &EntropyParams) -> GrayImage {
    params.validate().expect("invalid entropy parameters");
    let (rows, cols) = t.dims();
    let bins: Vec<u16> = t
        .as_slice()
        .iter()
        .map(|&v| bin_of(v, params.bins))
        .collect();
    let h = (params.window / 2) as isize;
    let n = params.window * params.window;
    let n_f = n as f64;
    let mut out = vec![0.0; rows * cols];
    out.par_chunks_mut(cols).enumerate().for_each(|(i, dst)| {
        let mut window = Vec::with_capacity(n);
        for (j, d) in dst.iter_mut().enumerate() {
            window.clear();
            for a in -h..=h {
                let r = (i as isize + a).clamp(0, rows as isize - 1) as usize;
                for b in -h..=h {
                    let c = (j as isize + b).clamp(0, cols as isize - 1) as usize;
                    window.push(bins[r * cols + c]);
                }
            }
            window.sort_unstable();
            let mut entropy = 0.0;
            for run in window.chunk_by(|a, b| a == b) {
                let p = run.len() as f64 / n_f;
                entropy -= p * p.log2();
            }
            *d = entropy.max(0.0);
        }
    });
    GrayImage::from_raw(rows, cols, out)
}

/// Pointwise product of the pooled response and its entropy weight.
pub fn weight_map(t: &GrayImage, w: &GrayImage) -> Result<GrayImage> {
    t.ensure_same_dims(w)?;
    let data = t
        .as_slice()
        .iter()
        .zip(w.as_slice())
        .map(|(a, b)| a * b)
        .collect();
    Ok(GrayImage::from_raw(t.rows(), t.cols(), data))
}

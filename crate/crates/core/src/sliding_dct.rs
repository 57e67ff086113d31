//! Per-pixel high-frequency DCT coefficient magnitudes over centred patches.
//!
//! Two evaluation paths exist. [`hf_magnitudes_at`] extracts one patch and
//! runs a full 2-D DCT; it is slow and serves as the reference. The sliding
//! path used by [`hf_magnitudes_plane`] and by the fused transform evaluates
//! every needed coefficient as a separable correlation: rows are correlated
//! with each horizontal basis vector once, and those row-pass intermediates
//! are shared by all vertical frequencies paired with it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gray::GrayImage;

/// Output rows handled per parallel work item.
const BAND_ROWS: usize = 16;

/// Patch sizes fused by the multiscale transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleSet {
    sizes: Vec<usize>,
}

impl Default for ScaleSet {
    /// `M_r = 2^(2+r) - 1` for `r = 1..=4`: 7, 15, 31, 63.
    fn default() -> Self {
        ScaleSet {
            sizes: (1..=4).map(|r| (1usize << (2 + r)) - 1).collect(),
        }
    }
}

impl ScaleSet {
    /// Sizes must be odd, at least 3 and strictly increasing.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidParam("scale set is empty".into()));
        }
        for &m in &sizes {
            if m < 3 || m % 2 == 0 {
                return Err(Error::InvalidParam(format!(
                    "patch size {m} must be odd and >= 3"
                )));
            }
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParam(format!(
                "patch sizes must be strictly increasing, got {sizes:?}"
            )));
        }
        Ok(ScaleSet { sizes })
    }

    pub fn single(size: usize) -> Result<Self> {
        Self::new(vec![size])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Number of sorted layers kept by the detector: the sum of patch sizes.
    pub fn retained_layers(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Length of the fused per-pixel coefficient vector before truncation.
    pub fn fused_len(&self) -> usize {
        self.sizes.iter().map(|&m| hf_count(m)).sum()
    }
}

/// `(M² + M) / 2`, the size of the high-frequency band of an `M x M` block.
pub fn hf_count(m: usize) -> usize {
    (m * m + m) / 2
}

/// Index pairs `(υ, ν)` with `υ + ν >= M - 1`, ordered row-major by `υ` then `ν`.
pub fn high_freq_indices(m: usize) -> Vec<(usize, usize)> {
    assert!(m >= 1);
    let mut out = Vec::with_capacity(hf_count(m));
    for u in 0..m {
        for v in (m - 1 - u)..m {
            out.push((u, v));
        }
    }
    out
}

/// Orthonormal DCT-II basis, `basis[k * m + x] = α_k cos(π (2x + 1) k / 2m)`.
pub fn dct_basis(m: usize) -> Vec<f64> {
    assert!(m >= 1);
    let mf = m as f64;
    let mut b = vec![0.0; m * m];
    for k in 0..m {
        let alpha = if k == 0 {
            (1.0 / mf).sqrt()
        } else {
            (2.0 / mf).sqrt()
        };
        for x in 0..m {
            b[k * m + x] =
                alpha * (std::f64::consts::PI * (2 * x + 1) as f64 * k as f64 / (2.0 * mf)).cos();
        }
    }
    b
}

/// Orthonormal 2-D DCT-II of a row-major `m x m` patch.
pub fn dct2(patch: &[f64], m: usize) -> Vec<f64> {
    assert_eq!(patch.len(), m * m, "patch must be m x m");
    let c = dct_basis(m);
    // tmp[a][v] = Σ_b P[a][b] C[v][b]
    let mut tmp = vec![0.0; m * m];
    for a in 0..m {
        for v in 0..m {
            tmp[a * m + v] = (0..m).map(|b| patch[a * m + b] * c[v * m + b]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for u in 0..m {
        for v in 0..m {
            out[u * m + v] = (0..m).map(|a| c[u * m + a] * tmp[a * m + v]).sum();
        }
    }
    out
}

/// Inverse of [`dct2`].
pub fn idct2(coeffs: &[f64], m: usize) -> Vec<f64> {
    assert_eq!(coeffs.len(), m * m, "coefficients must be m x m");
    let c = dct_basis(m);
    let mut tmp = vec![0.0; m * m];
    for u in 0..m {
        for b in 0..m {
            tmp[u * m + b] = (0..m).map(|v| coeffs[u * m + v] * c[v * m + b]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            out[a * m + b] = (0..m).map(|u| c[u * m + a] * tmp[u * m + b]).sum();
        }
    }
    out
}

/// High-frequency coefficient magnitudes of one patch, in [`high_freq_indices`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HfPatchVector {
    pub scale: usize,
    pub values: Vec<f64>,
}

/// Replicate-padded `m x m` patch centred on `(i, j)`.
pub fn extract_patch(g: &GrayImage, i: usize, j: usize, m: usize) -> Vec<f64> {
    let h = (m / 2) as isize;
    let mut patch = Vec::with_capacity(m * m);
    for a in -h..=h {
        for b in -h..=h {
            patch.push(g.get_clamped(i as isize + a, j as isize + b));
        }
    }
    patch
}

/// Reference path: extract the patch, transform it, keep the high band.
pub fn hf_magnitudes_at(g: &GrayImage, i: usize, j: usize, m: usize) -> HfPatchVector {
    assert!(m % 2 == 1, "patch size must be odd");
    assert!(i < g.rows() && j < g.cols(), "pixel outside image");
    let coeffs = dct2(&extract_patch(g, i, j, m), m);
    let values = high_freq_indices(m)
        .into_iter()
        .map(|(u, v)| coeffs[u * m + v].abs())
        .collect();
    HfPatchVector { scale: m, values }
}

/// High-band magnitudes for every pixel at one scale, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HfPlanes {
    rows: usize,
    cols: usize,
    scale: usize,
    values: Vec<f64>,
}

impl HfPlanes {
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Magnitudes at `(i, j)`, same order as [`hf_magnitudes_at`].
    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let n = hf_count(self.scale);
        let k = (i * self.cols + j) * n;
        &self.values[k..k + n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Sliding evaluation of [`hf_magnitudes_at`] over every pixel.
pub fn hf_magnitudes_plane(g: &GrayImage, m: usize) -> HfPlanes {
    assert!(m % 2 == 1, "patch size must be odd");
    let kernels = [ScaleKernel::new(m, 0)];
    let n = hf_count(m);
    let rows: Vec<usize> = (0..g.rows()).collect();
    let cols: Vec<usize> = (0..g.cols()).collect();
    let mut values = vec![0.0; g.rows() * g.cols() * n];
    for_each_output_row(g, &kernels, &rows, &cols, &mut values, |cand, dst| {
        dst.copy_from_slice(cand)
    });
    HfPlanes {
        rows: g.rows(),
        cols: g.cols(),
        scale: m,
        values,
    }
}

/// Register tile of the vertical pass: frequencies by output columns.
const TILE_U: usize = 4;
const TILE_J: usize = 8;

fn round_up(n: usize, k: usize) -> usize {
    n.div_ceil(k) * k
}

/// `acc[a][c] = Σ_l coef[l * coef_stride + k0 + a] * x[l * x_stride + j0 + c]`,
/// summed in increasing `l`.
#[inline(always)]
fn tile_product(
    coef: &[f64],
    coef_stride: usize,
    k0: usize,
    x: &[f64],
    x_stride: usize,
    j0: usize,
    depth: usize,
) -> [[f64; TILE_J]; TILE_U] {
    let mut acc = [[0.0f64; TILE_J]; TILE_U];
    for l in 0..depth {
        let w: &[f64; TILE_J] = x[l * x_stride + j0..][..TILE_J].try_into().unwrap();
        let b: &[f64; TILE_U] = coef[l * coef_stride + k0..][..TILE_U].try_into().unwrap();
        for (row, &bu) in acc.iter_mut().zip(b) {
            for (a, &xv) in row.iter_mut().zip(w) {
                *a += bu * xv;
            }
        }
    }
    acc
}

/// Precomputed tables for one patch size of the sliding evaluator.
pub(crate) struct ScaleKernel {
    size: usize,
    /// Padded frequency stride of `basis_t`.
    size_pad: usize,
    /// `basis_t[x * size_pad + k] = c_k(x)`, zero for `k >= size`.
    basis_t: Vec<f64>,
    /// Position of `(υ, ν)` in the high-band ordering, `slot[υ * m + ν]`.
    slot: Vec<usize>,
    /// Offset of this scale inside the fused candidate vector.
    offset: usize,
}

impl ScaleKernel {
    pub(crate) fn new(size: usize, offset: usize) -> Self {
        let basis = dct_basis(size);
        let size_pad = round_up(size, TILE_U);
        let mut basis_t = vec![0.0; size * size_pad];
        for k in 0..size {
            for x in 0..size {
                basis_t[x * size_pad + k] = basis[k * size + x];
            }
        }
        let mut slot = vec![usize::MAX; size * size];
        for (pos, (u, v)) in high_freq_indices(size).into_iter().enumerate() {
            slot[u * size + v] = pos;
        }
        ScaleKernel {
            size,
            size_pad,
            basis_t,
            slot,
            offset,
        }
    }

    pub(crate) fn for_scales(scales: &ScaleSet) -> Vec<ScaleKernel> {
        let mut offset = 0;
        scales
            .sizes()
            .iter()
            .map(|&m| {
                let k = ScaleKernel::new(m, offset);
                offset += hf_count(m);
                k
            })
            .collect()
    }

    /// Horizontal pass for image rows `first_row .. first_row + n_rows`
    /// (clamped), evaluated at columns `cols`.
    ///
    /// Layout is `[ν][row][col]` with the column axis padded to `ncols_pad`.
    #[inline(always)]
    fn row_pass(
        &self,
        g: &GrayImage,
        first_row: isize,
        n_rows: usize,
        cols: &[usize],
        ncols_pad: usize,
    ) -> Vec<f64> {
        let m = self.size;
        let h = m as isize / 2;
        let width = g.cols() as isize;
        let mut out = vec![0.0; m * n_rows * ncols_pad];
        // gathered[b * ncols_pad + jj] = row sample at column cols[jj] + b - h.
        let mut gathered = vec![0.0; m * ncols_pad];
        for r in 0..n_rows {
            let src = g.row((first_row + r as isize).clamp(0, g.rows() as isize - 1) as usize);
            for b in 0..m {
                let dst = &mut gathered[b * ncols_pad..(b + 1) * ncols_pad];
                for (d, &j) in dst.iter_mut().zip(cols) {
                    *d = src[(j as isize + b as isize - h).clamp(0, width - 1) as usize];
                }
            }
            for v0 in (0..m).step_by(TILE_U) {
                for j0 in (0..ncols_pad).step_by(TILE_J) {
                    let acc = tile_product(
                        &self.basis_t,
                        self.size_pad,
                        v0,
                        &gathered,
                        ncols_pad,
                        j0,
                        m,
                    );
                    for (dv, row) in acc.iter().enumerate().take(m - v0) {
                        let base = ((v0 + dv) * n_rows + r) * ncols_pad + j0;
                        out[base..base + TILE_J].copy_from_slice(row);
                    }
                }
            }
        }
        out
    }

    /// Vertical pass for one output row: writes `|P̂(υ, ν)|` for every high-band
    /// pair into `cand[jj * stride + offset + slot]`.
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn column_pass(
        &self,
        inter: &[f64],
        n_rows: usize,
        local_row: usize,
        ncols: usize,
        ncols_pad: usize,
        cand: &mut [f64],
        stride: usize,
    ) {
        let m = self.size;
        for v in 0..m {
            let u0 = m - 1 - v;
            let plane = &inter[(v * n_rows + local_row) * ncols_pad..];
            for j0 in (0..ncols_pad).step_by(TILE_J) {
                for uc in (u0 / TILE_U * TILE_U..m).step_by(TILE_U) {
                    let acc =
                        tile_product(&self.basis_t, self.size_pad, uc, plane, ncols_pad, j0, m);
                    for (du, row) in acc.iter().enumerate() {
                        let u = uc + du;
                        if u < u0 || u >= m {
                            continue;
                        }
                        let slot = self.offset + self.slot[u * m + v];
                        for (dj, &a) in row.iter().enumerate().take(ncols.saturating_sub(j0)) {
                            cand[(j0 + dj) * stride + slot] = a.abs();
                        }
                    }
                }
            }
        }
    }
}

/// Drives the sliding evaluator over the output grid `rows x cols`.
///
/// For each output row, the candidate buffer holds, per output column, the
/// concatenation of all kernels' high-band magnitudes. `finish` turns that
/// buffer into the destination row (`dest` is split evenly across
/// `rows.len()` rows). Work is split into bands of rows processed in
/// parallel; results do not depend on the split because every coefficient is
/// summed in a fixed order.
pub(crate) fn for_each_output_row<F>(
    g: &GrayImage,
    kernels: &[ScaleKernel],
    rows: &[usize],
    cols: &[usize],
    dest: &mut [f64],
    finish: F,
) where
    F: Fn(&mut [f64], &mut [f64]) + Sync,
{
    if rows.is_empty() || cols.is_empty() {
        return;
    }
    assert_eq!(dest.len() % rows.len(), 0);
    let dest_row = dest.len() / rows.len();
    let total: usize = kernels.iter().map(|k| hf_count(k.size)).sum();
    let ncols = cols.len();
    let ncols_pad = round_up(ncols, TILE_J);

    let grid = Grid {
        g,
        kernels,
        cols,
        ncols_pad,
        total,
        dest_row,
    };
    dest.par_chunks_mut(BAND_ROWS * dest_row)
        .zip(rows.par_chunks(BAND_ROWS))
        .for_each(|(dst_band, band)| grid.band(band, dst_band, &finish));
}

/// Shared inputs of one sliding evaluation.
struct Grid<'a> {
    g: &'a GrayImage,
    kernels: &'a [ScaleKernel],
    cols: &'a [usize],
    ncols_pad: usize,
    total: usize,
    dest_row: usize,
}

impl Grid<'_> {
    fn band<F>(&self, band: &[usize], dst_band: &mut [f64], finish: &F)
    where
        F: Fn(&mut [f64], &mut [f64]),
    {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") {
                // SAFETY: the required feature was detected at runtime.
                unsafe { self.band_avx2(band, dst_band, finish) };
                return;
            }
        }
        self.band_generic(band, dst_band, finish);
    }

    /// Same arithmetic as [`Grid::band_generic`] with wider vectors; no
    /// operations are fused, so results are bit-identical.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn band_avx2<F>(&self, band: &[usize], dst_band: &mut [f64], finish: &F)
    where
        F: Fn(&mut [f64], &mut [f64]),
    {
        self.band_generic(band, dst_band, finish);
    }

    #[inline(always)]
    fn band_generic<F>(&self, band: &[usize], dst_band: &mut [f64], finish: &F)
    where
        F: Fn(&mut [f64], &mut [f64]),
    {
        let first = band[0];
        let last = band[band.len() - 1];
        let ncols = self.cols.len();
        // Plain loops keep the row pass inside this function's target features.
        let mut inters: Vec<(Vec<f64>, usize)> = Vec::with_capacity(self.kernels.len());
        for k in self.kernels {
            let h = k.size / 2;
            let n_rows = last - first + k.size;
            let inter = k.row_pass(
                self.g,
                first as isize - h as isize,
                n_rows,
                self.cols,
                self.ncols_pad,
            );
            inters.push((inter, n_rows));
        }
        let mut cand = vec![0.0; ncols * self.total];
        for (&i, dst) in band.iter().zip(dst_band.chunks_mut(self.dest_row)) {
            for (k, (inter, n_rows)) in self.kernels.iter().zip(&inters) {
                k.column_pass(
                    inter,
                    *n_rows,
                    i - first,
                    ncols,
                    self.ncols_pad,
                    &mut cand,
                    self.total,
                );
            }
            finish(&mut cand, dst);
        }
    }
}

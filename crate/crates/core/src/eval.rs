//! Precision-recall evaluation against binary ground truth.
//!
//! Maps are quantized to 8 bits and binarized at every threshold
//! `τ ∈ {0, …, 255}` (`round(255·v) >= τ` is predicted sharp). The positive
//! class is "sharp" (white in the mask). Dataset curves sum confusion
//! counts over images before computing precision and recall.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::gray::GrayImage;
use crate::imageio::{load_image, quantize_u8};
use crate::pipeline::detect;
use crate::postproc::BlurMap;
use crate::sliding_dct::ScaleSet;

pub const THRESHOLDS: usize = 256;

/// Extensions accepted for dataset images.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "pgm", "pfm", "bmp"];
/// Extensions searched, in order, for the mask paired with an image.
pub const MASK_EXTENSIONS: &[&str] = &["png", "pgm", "bmp"];

pub const CSV_HEADER: &str = "threshold,precision,recall,f_measure";

/// Binary ground truth: 1 = sharp, 0 = blurred.
#[derive(Debug, Clone, PartialEq)]
pub struct GtMask(GrayImage);

impl GtMask {
    /// Wraps an image whose values are exactly 0 or 1.
    pub fn new(mask: GrayImage) -> Result<Self> {
        if mask.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParam("mask values must be 0 or 1".into()));
        }
        Ok(GtMask(mask))
    }

    /// Binarizes at 0.5 (values >= 0.5 are sharp).
    pub fn from_image(img: &GrayImage) -> Self {
        GtMask(img.map(|v| if v >= 0.5 { 1.0 } else { 0.0 }))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&load_image(path)?))
    }

    pub fn image(&self) -> &GrayImage {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn is_sharp(&self, idx: usize) -> bool {
        self.0.as_slice()[idx] == 1.0
    }

    pub fn sharp_fraction(&self) -> f64 {
        self.0.mean()
    }
}

/// Confusion counts at one threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            1.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            1.0
        } else {
            self.tp as f64 / d as f64
        }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: u8,
    pub precision: f64,
    pub recall: f64,
}

/// One entry per threshold `0..=255`, with the counts behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    counts: Vec<Confusion>,
}

impl PrCurve {
    pub fn from_counts(counts: Vec<Confusion>) -> Self {
        assert_eq!(counts.len(), THRESHOLDS);
        PrCurve { counts }
    }

    pub fn counts(&self) -> &[Confusion] {
        &self.counts
    }

    pub fn entries(&self) -> Vec<PrPoint> {
        self.counts
            .iter()
            .enumerate()
            .map(|(t, c)| PrPoint {
                threshold: t as u8,
                precision: c.precision(),
                recall: c.recall(),
            })
            .collect()
    }

    pub fn at(&self, threshold: u8) -> PrPoint {
        let c = self.counts[threshold as usize];
        PrPoint {
            threshold,
            precision: c.precision(),
            recall: c.recall(),
        }
    }

    /// Best F-measure over all thresholds.
    pub fn max_f_measure(&self, beta2: f64) -> f64 {
        self.counts
            .iter()
            .map(|c| f_measure(c.precision(), c.recall(), beta2))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for p in self.entries() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.threshold,
                p.precision,
                p.recall,
                f_measure(p.precision, p.recall, 1.0)
            );
        }
        out
    }
}

/// `(1 + β²)·p·r / (β²·p + r)`, or 0 when the denominator vanishes.
pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom <= 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

/// Confusion counts of `map` (values in `[0, 1]`) at all 256 thresholds.
pub fn confusion_counts(map: &GrayImage, gt: &GtMask) -> Result<Vec<Confusion>> {
    map.ensure_same_dims(gt.image())?;
    let mut sharp = [0u64; THRESHOLDS];
    let mut blurred = [0u64; THRESHOLDS];
    for (idx, &v) in map.as_slice().iter().enumerate() {
        let q = quantize_u8(v.clamp(0.0, 1.0)) as usize;
        if gt.is_sharp(idx) {
            sharp[q] += 1;
        } else {
            blurred[q] += 1;
        }
    }
    let positives: u64 = sharp.iter().sum();
    let mut counts = vec![Confusion::default(); THRESHOLDS];
    let (mut tp, mut fp) = (0u64, 0u64);
    for t in (0..THRESHOLDS).rev() {
        tp += sharp[t];
        fp += blurred[t];
        counts[t] = Confusion {
            tp,
            fp,
            fn_: positives - tp,
        };
    }
    Ok(counts)
}

pub fn pr_curve(map: &BlurMap, gt: &GtMask) -> Result<PrCurve> {
    Ok(PrCurve::from_counts(confusion_counts(&map.map, gt)?))
}

/// Micro-average: sums the confusion counts of all curves.
pub fn aggregate(curves: &[&PrCurve]) -> PrCurve {
    let mut counts = vec![Confusion::default(); THRESHOLDS];
    for c in curves {
        for (acc, &x) in counts.iter_mut().zip(&c.counts) {
            *acc = *acc + x;
        }
    }
    PrCurve::from_counts(counts)
}

/// An image with its ground truth, named for reporting.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub name: String,
    pub image: GrayImage,
    pub mask: GtMask,
}

#[derive(Debug, Clone)]
pub struct DatasetReport {
    pub per_image: Vec<(String, PrCurve)>,
    pub aggregate: PrCurve,
    /// Images that could not be evaluated, with the reason.
    pub errors: Vec<(String, String)>,
}

impl DatasetReport {
    pub fn warning_count(&self) -> usize {
        self.errors.len()
    }
}

fn curve_for(pair: &EvalPair, config: &PipelineConfig) -> Result<PrCurve> {
    pr_curve(&detect(&pair.image, config)?, &pair.mask)
}

/// Evaluates in-memory pairs; the aggregate follows the order of `pairs`.
pub fn evaluate_pairs(pairs: &[EvalPair], config: &PipelineConfig) -> Result<DatasetReport> {
    let curves = pairs
        .par_iter()
        .map(|p| curve_for(p, config).map(|c| (p.name.clone(), c)))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&curves.iter().map(|(_, c)| c).collect::<Vec<_>>());
    Ok(DatasetReport {
        per_image: curves,
        aggregate,
        errors: Vec::new(),
    })
}

fn has_extension(path: &Path, allowed: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| allowed.iter().any(|a| a.eq_ignore_ascii_case(e)))
}

fn find_mask(masks_dir: &Path, stem: &str) -> Option<PathBuf> {
    MASK_EXTENSIONS
        .iter()
        .map(|ext| masks_dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Evaluates every image in `images_dir` against the same-stem mask in
/// `masks_dir`, writing `<stem>.csv` per image and `aggregate.csv` to `out_dir`.
/// Images without a usable mask are skipped and listed in the report errors.
pub fn run_dataset(
    images_dir: impl AsRef<Path>,
    masks_dir: impl AsRef<Path>,
    config: &PipelineConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetReport> {
    let (images_dir, masks_dir, out_dir) =
        (images_dir.as_ref(), masks_dir.as_ref(), out_dir.as_ref());
    let mut images: Vec<PathBuf> = fs::read_dir(images_dir)
        .map_err(|e| Error::io(images_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && has_extension(p, IMAGE_EXTENSIONS))
        .collect();
    images.sort();

    let mut pairs = Vec::new();
    let mut errors = Vec::new();
    for path in images {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let Some(mask_path) = find_mask(masks_dir, &stem) else {
            errors.push((stem, "no mask with a matching stem".to_string()));
            continue;
        };
        let loaded = load_image(&path).and_then(|image| {
            let mask = GtMask::load(&mask_path)?;
            image.ensure_same_dims(mask.image())?;
            Ok((image, mask))
        });
        match loaded {
            Ok((image, mask)) => pairs.push(EvalPair {
                name: stem,
                image,
                mask,
            }),
            Err(e) => errors.push((stem, e.to_string())),
        }
    }

    let mut report = evaluate_pairs(&pairs, config)?;
    report.errors = errors;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, curve: &PrCurve| {
        let path = out_dir.join(format!("{name}.csv"));
        fs::write(&path, curve.to_csv()).map_err(|e| Error::io(&path, e))
    };
    for (name, curve) in &report.per_image {
        write(name, curve)?;
    }
    write("aggregate", &report.aggregate)?;
    Ok(report)
}

/// Adds zero-mean Gaussian noise of the given variance and clamps to `[0, 1]`.
/// Variance 0 returns the input unchanged.
pub fn add_gaussian_noise(img: &GrayImage, variance: f64, seed: u64) -> Result<GrayImage> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "noise variance must be >= 0, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::InvalidParam(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .as_slice()
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    GrayImage::new(img.rows(), img.cols(), data)
}

/// Pipeline PR curve of one image under each noise variance.
pub fn noise_sweep(
    image: &GrayImage,
    gt: &GtMask,
    variances: &[f64],
    seed: u64,
    config: &PipelineConfig,
) -> Result<Vec<(f64, PrCurve)>> {
    variances
        .iter()
        .map(|&var| {
            let noisy = add_gaussian_noise(image, var, seed)?;
            Ok((var, pr_curve(&detect(&noisy, config)?, gt)?))
        })
        .collect()
}

/// Aggregate PR curve of a dataset under each noise variance. Image `k`
/// uses seed `seed + k`.
pub fn noise_sweep_dataset(
    pairs: &[EvalPair],
    variances: &[f64],
    seed: u64,
    config: &PipelineConfig,
) -> Result<Vec<(f64, PrCurve)>> {
    variances
        .iter()
        .map(|&var| {
            let noisy = pairs
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    Ok(EvalPair {
                        name: p.name.clone(),
                        image: add_gaussian_noise(&p.image, var, seed.wrapping_add(k as u64))?,
                        mask: p.mask.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((var, evaluate_pairs(&noisy, config)?.aggregate))
        })
        .collect()
}

/// Each single scale of `config.scales`, followed by the full set.
pub fn ablation_configs(config: &PipelineConfig) -> Result<Vec<ScaleSet>> {
    let mut sets = config
        .scales
        .sizes()
        .iter()
        .map(|&m| ScaleSet::single(m))
        .collect::<Result<Vec<_>>>()?;
    sets.push(config.scales.clone());
    Ok(sets)
}

/// PR curve of one image for every single-scale configuration and the multiscale one.
pub fn scale_ablation(
    image: &GrayImage,
    gt: &GtMask,
    config: &PipelineConfig,
) -> Result<Vec<(ScaleSet, PrCurve)>> {
    ablation_configs(config)?
        .into_iter()
        .map(|scales| {
            let curve = pr_curve(&detect(image, &config.with_scales(scales.clone()))?, gt)?;
            Ok((scales, curve))
        })
        .collect()
}

/// Aggregate PR curve of a dataset for every ablation configuration.
pub fn scale_ablation_dataset(
    pairs: &[EvalPair],
    config: &PipelineConfig,
) -> Result<Vec<(ScaleSet, PrCurve)>> {
    ablation_configs(config)?
        .into_iter()
        .map(|scales| {
            let report = evaluate_pairs(pairs, &config.with_scales(scales.clone()))?;
            Ok((scales, report.aggregate))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bm(map: GrayImage) -> BlurMap {
        BlurMap {
            map,
            params: PipelineConfig::default(),
        }
    }

    fn checker(rows: usize, cols: usize) -> GrayImage {
        GrayImage::from_fn(rows, cols, |i, j| ((i / 2 + j / 3) % 2) as f64)
    }

    #[test]
    fn perfect_detector() {
        let gt_img = checker(8, 9);
        let curve = pr_curve(&bm(gt_img.clone()), &GtMask::new(gt_img).unwrap()).unwrap();
        for t in 1..=255u8 {
            let p = curve.at(t);
            assert_eq!((p.precision, p.recall), (1.0, 1.0));
        }
    }

    #[test]
    fn zero_threshold_predicts_everything() {
        let gt = GtMask::new(checker(6, 6)).unwrap();
        let curve = pr_curve(&bm(GrayImage::filled(6, 6, 0.3)), &gt).unwrap();
        let p = curve.at(0);
        assert_eq!(p.recall, 1.0);
        assert_eq!(p.precision, gt.sharp_fraction());
    }

    #[test]
    fn inverted_detector() {
        let gt_img = checker(8, 8);
        let inverted = gt_img.map(|v| 1.0 - v);
        let curve = pr_curve(&bm(inverted), &GtMask::new(gt_img).unwrap()).unwrap();
        let p = curve.at(128);
        assert_eq!((p.precision, p.recall), (0.0, 0.0));
    }

    #[test]
    fn empty_prediction_has_unit_precision() {
        let gt = GtMask::new(checker(4, 4)).unwrap();
        let curve = pr_curve(&bm(GrayImage::zeros(4, 4)), &gt).unwrap();
        assert_eq!(curve.at(255).precision, 1.0);
        assert_eq!(curve.at(255).recall, 0.0);
    }

    #[test]
    fn f_measure_examples() {
        assert_eq!(f_measure(1.0, 1.0, 1.0), 1.0);
        assert_eq!(f_measure(1.0, 0.0, 1.0), 0.0);
        assert_eq!(f_measure(0.5, 0.5, 1.0), 0.5);
        assert_eq!(f_measure(0.0, 0.0, 1.0), 0.0);
        assert!((f_measure(0.8, 0.4, 0.3) - 1.3 * 0.32 / (0.24 + 0.4)).abs() < 1e-15);
    }

    #[test]
    fn mask_validation() {
        assert!(GtMask::new(GrayImage::filled(2, 2, 0.5)).is_err());
        let m = GtMask::from_image(&GrayImage::new(1, 3, vec![0.2, 0.5, 0.9]).unwrap());
        assert_eq!(m.image().as_slice(), &[0.0, 1.0, 1.0]);
        let err = pr_curve(&bm(GrayImage::zeros(2, 3)), &m).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn aggregate_of_duplicates() {
        let gt = GtMask::new(checker(6, 7)).unwrap();
        let map = GrayImage::from_fn(6, 7, |i, j| ((i * 7 + j) % 11) as f64 / 10.0);
        let c = pr_curve(&bm(map), &gt).unwrap();
        assert_eq!(aggregate(&[&c]), c);
        let doubled = aggregate(&[&c, &c]);
        assert_eq!(doubled.entries(), c.entries());
    }

    #[test]
    fn csv_layout() {
        let gt = GtMask::new(checker(4, 4)).unwrap();
        let csv = pr_curve(&bm(gt.image().clone()), &gt).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 257);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[256], "255,1,1,1");
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let img = GrayImage::filled(10, 10, 0.5);
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);
        let a = add_gaussian_noise(&img, 0.1, 9).unwrap();
        assert_eq!(a, add_gaussian_noise(&img, 0.1, 9).unwrap());
        assert_ne!(a, add_gaussian_noise(&img, 0.1, 10).unwrap());
        assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(add_gaussian_noise(&img, -1.0, 0).is_err());
    }

    #[test]
    fn ablation_configurations() {
        let sets = ablation_configs(&PipelineConfig::default()).unwrap();
        let depths: Vec<usize> = sets.iter().map(|s| s.retained_layers()).collect();
        assert_eq!(depths, vec![7, 15, 31, 63, 116]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn recall_monotone_and_positives_constant(
            map in proptest::collection::vec(0.0f64..=1.0, 36),
            gt in proptest::collection::vec(proptest::bool::ANY, 36),
        ) {
            let map = GrayImage::new(6, 6, map).unwrap();
            let gt = GtMask::new(GrayImage::new(6, 6, gt.iter().map(|&b| b as u8 as f64).collect()).unwrap()).unwrap();
            let curve = pr_curve(&bm(map.clone()), &gt).unwrap();
            let entries = curve.entries();
            prop_assert_eq!(entries.len(), 256);
            for (t, p) in entries.iter().enumerate() {
                prop_assert_eq!(p.threshold as usize, t);
                prop_assert!((0.0..=1.0).contains(&p.precision) && (0.0..=1.0).contains(&p.recall));
            }
            prop_assert!(entries.windows(2).all(|w| w[1].recall <= w[0].recall));
            let pos = curve.counts()[0].tp + curve.counts()[0].fn_;
            prop_assert!(curve.counts().iter().all(|c| c.tp + c.fn_ == pos));

            // Any map with the same 8-bit quantization yields the same curve.
            let requantized = map.map(|v| quantize_u8(v) as f64 / 255.0);
            prop_assert_eq!(pr_curve(&bm(requantized), &gt).unwrap(), curve);
        }
    }
}

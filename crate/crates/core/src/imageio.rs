//! Raster decoding and encoding.
//!
//! Inputs (PNG, JPEG, BMP, PGM/PNM, PFM) are converted to real-valued
//! luminance in `[0, 1]` using Rec. 601 weights. Maps are written either as
//! 8-bit grayscale PNG or as 32-bit little-endian PFM.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};

use crate::error::{Error, Result};
pub use crate::gray::GrayImage;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// On-disk encoding for a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    /// 8-bit grayscale PNG, `round_half_up(v * 255)`. Values must lie in `[0, 1]`.
    Png8,
    /// Single-channel 32-bit float PFM, little-endian (scale `-1.0`).
    Pfm32,
}

impl MapFormat {
    /// Picks the format from a file extension (`.png` or `.pfm`).
    pub fn from_path(path: &Path) -> Option<MapFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "png" => Some(MapFormat::Png8),
            "pfm" => Some(MapFormat::Pfm32),
            _ => None,
        }
    }
}

/// Rec. 601 luminance. Equal channels pass through unchanged so that
/// converting an already-gray image is the identity.
#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        r
    } else {
        LUMA_R * r + LUMA_G * g + LUMA_B * b
    }
}

/// Quantizes `v ∈ [0, 1]` to a byte, rounding half up.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn is_pfm(path: &Path) -> Result<bool> {
    if path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
    {
        return Ok(true);
    }
    let mut magic = [0u8; 2];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match f.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == b"Pf" || &magic == b"PF"),
        Err(_) => Ok(false),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(Error::format(path, "unrecognized image format"));
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

/// Splits a decoded image into normalized R, G, B planes (alpha dropped).
fn rgb_planes(img: &DynamicImage) -> (usize, usize, [Vec<f64>; 3]) {
    let rows = img.height() as usize;
    let cols = img.width() as usize;
    let n = rows * cols;
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    let mut push = |r: f64, g: f64, b: f64| {
        planes[0].push(r);
        planes[1].push(g);
        planes[2].push(b);
    };
    match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().for_each(|p| {
            let v = p.0[0] as f64 / 255.0;
            push(v, v, v)
        }),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().for_each(|p| {
            let v = p.0[0] as f64 / 255.0;
            push(v, v, v)
        }),
        DynamicImage::ImageLuma16(buf) => buf.pixels().for_each(|p| {
            let v = p.0[0] as f64 / 65535.0;
            push(v, v, v)
        }),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().for_each(|p| {
            let v = p.0[0] as f64 / 65535.0;
            push(v, v, v)
        }),
        DynamicImage::ImageRgb8(buf) => buf.pixels().for_each(|p| {
            let [r, g, b] = p.0.map(|c| c as f64 / 255.0);
            push(r, g, b)
        }),
        DynamicImage::ImageRgba8(buf) => buf.pixels().for_each(|p| {
            let [r, g, b, _] = p.0.map(|c| c as f64 / 255.0);
            push(r, g, b)
        }),
        DynamicImage::ImageRgb16(buf) => buf.pixels().for_each(|p| {
            let [r, g, b] = p.0.map(|c| c as f64 / 65535.0);
            push(r, g, b)
        }),
        DynamicImage::ImageRgba16(buf) => buf.pixels().for_each(|p| {
            let [r, g, b, _] = p.0.map(|c| c as f64 / 65535.0);
            push(r, g, b)
        }),
        other => other.to_rgb32f().pixels().for_each(|p| {
            let [r, g, b] = p.0.map(|c| (c as f64).clamp(0.0, 1.0));
            push(r, g, b)
        }),
    }
    (rows, cols, planes)
}

/// Loads an image as grayscale luminance in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    if is_pfm(path)? {
        let [r, g, b] = read_pfm(path)?;
        if r == g && g == b {
            return Ok(r);
        }
        let data = r
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .zip(b.as_slice())
            .map(|((&r, &g), &b)| luminance(r, g, b))
            .collect();
        return GrayImage::new(r.rows(), r.cols(), data);
    }
    let img = decode(path)?;
    let (rows, cols, [r, g, b]) = rgb_planes(&img);
    let data = r
        .iter()
        .zip(&g)
        .zip(&b)
        .map(|((&r, &g), &b)| luminance(r, g, b))
        .collect();
    GrayImage::new(rows, cols, data)
}

/// Loads an image as three `[0, 1]` channel planes (R, G, B). Gray inputs
/// yield three identical planes.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<[GrayImage; 3]> {
    let path = path.as_ref();
    if is_pfm(path)? {
        return read_pfm(path);
    }
    let img = decode(path)?;
    let (rows, cols, [r, g, b]) = rgb_planes(&img);
    Ok([
        GrayImage::new(rows, cols, r)?,
        GrayImage::new(rows, cols, g)?,
        GrayImage::new(rows, cols, b)?,
    ])
}

fn to_bytes(map: &GrayImage) -> Result<Vec<u8>> {
    map.as_slice()
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if (0.0..=1.0).contains(&value) {
                Ok(quantize_u8(value))
            } else {
                Err(Error::Range { index, value })
            }
        })
        .collect()
}

/// Writes a map in the requested format.
pub fn save_map(map: &GrayImage, path: impl AsRef<Path>, format: MapFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        MapFormat::Png8 => {
            let bytes = to_bytes(map)?;
            write_png(path, &bytes, map.cols(), map.rows(), ExtendedColorType::L8)
        }
        MapFormat::Pfm32 => write_pfm(map, path),
    }
}

/// Writes three `[0, 1]` planes as an 8-bit RGB PNG.
pub fn save_rgb_png8(channels: &[GrayImage; 3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = channels[0].dims();
    for c in &channels[1..] {
        channels[0].ensure_same_dims(c)?;
    }
    let planes = [
        to_bytes(&channels[0])?,
        to_bytes(&channels[1])?,
        to_bytes(&channels[2])?,
    ];
    let mut bytes = Vec::with_capacity(rows * cols * 3);
    for k in 0..rows * cols {
        bytes.extend(planes.iter().map(|p| p[k]));
    }
    write_png(path, &bytes, cols, rows, ExtendedColorType::Rgb8)
}

fn write_png(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<()> {
    image::save_buffer_with_format(
        path,
        bytes,
        width as u32,
        height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

fn write_pfm(map: &GrayImage, path: &Path) -> Result<()> {
    let (rows, cols) = map.dims();
    let mut out = Vec::with_capacity(32 + rows * cols * 4);
    write!(out, "Pf\n{cols} {rows}\n-1.0\n").expect("write to Vec");
    // PFM stores scanlines bottom to top.
    for i in (0..rows).rev() {
        for &v in map.row(i) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

fn read_token(reader: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut token = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        match reader.read(&mut byte) {
            Ok(0) => break,
            Ok(_) if byte[0].is_ascii_whitespace() => {
                if token.is_empty() {
                    continue;
                }
                break;
            }
            Ok(_) => token.push(byte[0]),
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    String::from_utf8(token).map_err(|_| Error::format(path, "non-ascii PFM header"))
}

fn read_pfm(path: &Path) -> Result<[GrayImage; 3]> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let magic = read_token(&mut reader, path)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::format(path, "missing PFM magic")),
    };
    let parse_dim = |s: String| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::format(path, format!("bad PFM dimension {s:?}")))
    };
    let cols = parse_dim(read_token(&mut reader, path)?)?;
    let rows = parse_dim(read_token(&mut reader, path)?)?;
    let scale: f64 = read_token(&mut reader, path)?
        .parse()
        .map_err(|_| Error::format(path, "bad PFM scale"))?;
    if scale == 0.0 {
        return Err(Error::format(path, "PFM scale must be nonzero"));
    }
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; rows * cols * channels * 4];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::format(path, "truncated PFM raster"))?;

    let mut planes = vec![vec![0.0f64; rows * cols]; channels];
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let pixel = k / channels;
        let c = k % channels;
        let (file_row, col) = (pixel / cols, pixel % cols);
        planes[c][(rows - 1 - file_row) * cols + col] = v as f64;
    }
    let mut images = planes
        .into_iter()
        .map(|p| GrayImage::new(rows, cols, p).map_err(|e| Error::format(path, e.to_string())));
    let first = images.next().expect("at least one channel")?;
    if channels == 1 {
        return Ok([first.clone(), first.clone(), first]);
    }
    let second = images.next().expect("three channels")?;
    let third = images.next().expect("three channels")?;
    Ok([first, second, third])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn white_png_loads_as_one() {
        let dir = tmp();
        let path = dir.path().join("white.png");
        image::GrayImage::from_pixel(4, 3, image::Luma([255u8]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (3, 4));
        assert!(img.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn red_pixel_uses_rec601_weight() {
        let dir = tmp();
        let path = dir.path().join("red.png");
        image::RgbImage::from_pixel(1, 1, image::Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.get(0, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn sixteen_bit_pgm_full_scale() {
        let dir = tmp();
        let path = dir.path().join("full.pgm");
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn png8_rounding() {
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(0.0), 0);

        let dir = tmp();
        let path = dir.path().join("m.png");
        let map = GrayImage::new(1, 3, vec![1.0, 0.5, 0.0]).unwrap();
        save_map(&map, &path, MapFormat::Png8).unwrap();
        let back = image::open(&path).unwrap().to_luma8();
        assert_eq!(back.as_raw(), &vec![255, 128, 0]);
    }

    #[test]
    fn png8_rejects_out_of_range() {
        let dir = tmp();
        let map = GrayImage::new(1, 2, vec![0.2, 1.5]).unwrap();
        let err = save_map(&map, dir.path().join("bad.png"), MapFormat::Png8).unwrap_err();
        assert!(matches!(err, Error::Range { index: 1, .. }));
    }

    #[test]
    fn missing_and_unsupported_files() {
        let dir = tmp();
        let err = load_image(dir.path().join("nope.png")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));

        let junk = dir.path().join("junk.xyz");
        fs::write(&junk, b"definitely not an image").unwrap();
        let err = load_image(&junk).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn gray_conversion_is_idempotent() {
        let dir = tmp();
        let path = dir.path().join("g.png");
        let src = image::RgbImage::from_fn(5, 4, |x, y| {
            let v = (x * 40 + y * 13) as u8;
            image::Rgb([v, v, v])
        });
        src.save(&path).unwrap();
        let once = load_image(&path).unwrap();
        save_map(&once, &path, MapFormat::Png8).unwrap();
        let twice = load_image(&path).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn big_endian_pfm_is_read() {
        let dir = tmp();
        let path = dir.path().join("be.pfm");
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.25f32.to_be_bytes());
        bytes.extend_from_slice(&(-3.0f32).to_be_bytes());
        fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.as_slice(), &[0.25, -3.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pfm_round_trip_is_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(-1e6f32..1e6f32, 36),
        ) {
            let data: Vec<f64> = (0..rows * cols).map(|k| seed[k] as f64).collect();
            let map = GrayImage::new(rows, cols, data).unwrap();
            let dir = tmp();
            let path = dir.path().join("x.pfm");
            save_map(&map, &path, MapFormat::Pfm32).unwrap();
            let back = load_image(&path).unwrap();
            prop_assert_eq!(back, map);
        }
    }
}

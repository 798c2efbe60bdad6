//! Global Otsu binarization of 8-bit grayscale images and binary PGM I/O.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("image has no pixels")]
    Empty,
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    Size { expected: usize, actual: usize },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PreprocessError> {
        let expected = width * height;
        if pixels.len() != expected {
            return Err(PreprocessError::Size {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in &self.pixels {
            hist[p as usize] += 1;
        }
        hist
    }
}

/// Between-class variance (up to the constant factor 1/N^2) of splitting the
/// histogram into `<= t` and `> t`, from integer prefix sums. Zero when a
/// class is empty.
pub fn between_class_variance(count0: u64, sum0: u64, total: u64, total_sum: u64) -> f64 {
    let count1 = total - count0;
    if count0 == 0 || count1 == 0 {
        return 0.0;
    }
    let m0 = sum0 as f64 / count0 as f64;
    let m1 = (total_sum - sum0) as f64 / count1 as f64;
    let d = m0 - m1;
    count0 as f64 * count1 as f64 * d * d
}

/// Threshold maximizing between-class variance; the smallest maximizer on
/// ties. A single-intensity image returns that intensity.
pub fn otsu_threshold_histogram(hist: &[u64; 256]) -> Result<u8, PreprocessError> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(PreprocessError::Empty);
    }
    if let Some(v) = single_intensity(hist) {
        return Ok(v);
    }
    let total_sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut count0, mut sum0) = (0u64, 0u64);
    let (mut best_t, mut best) = (0u8, f64::NEG_INFINITY);
    for t in 0..=255u8 {
        count0 += hist[t as usize];
        sum0 += t as u64 * hist[t as usize];
        let v = between_class_variance(count0, sum0, total, total_sum);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    Ok(best_t)
}

fn single_intensity(hist: &[u64; 256]) -> Option<u8> {
    let mut nonzero = hist.iter().enumerate().filter(|(_, &c)| c > 0);
    let (v, _) = nonzero.next()?;
    nonzero.next().is_none().then_some(v as u8)
}

pub fn otsu_threshold(img: &GrayImage) -> Result<u8, PreprocessError> {
    if img.pixels.is_empty() {
        return Err(PreprocessError::Empty);
    }
    otsu_threshold_histogram(&img.histogram())
}

/// Ink (`<= t`) becomes 0, background becomes 255.
pub fn binarize(img: &GrayImage, t: u8) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img
            .pixels
            .iter()
            .map(|&p| if p <= t { 0 } else { 255 })
            .collect(),
    }
}

/// Parses a binary PGM (P5) with maxval 255. `#` comments are allowed in the
/// header.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PreprocessError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(PreprocessError::Pgm("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(PreprocessError::Pgm(format!("unsupported magic {:?}", fields[0])));
    }
    let number = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| PreprocessError::Pgm(format!("invalid {what} {s:?}")))
    };
    let width = number(&fields[1], "width")?;
    let height = number(&fields[2], "height")?;
    let maxval = number(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(PreprocessError::Pgm(format!("maxval {maxval} is not 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PreprocessError::Pgm("truncated header".into()));
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| PreprocessError::Pgm("image too large".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(PreprocessError::Pgm(format!(
            "raster holds {} bytes, expected {expected}",
            raster.len()
        )));
    }
    GrayImage::new(width, height, raster[..expected].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, PreprocessError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PreprocessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pgm(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), PreprocessError> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|source| PreprocessError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Exhaustive search straight from the definition: class weights and
    // means recomputed from scratch for every threshold.
    fn oracle(pixels: &[u8]) -> u8 {
        let first = pixels[0];
        if pixels.iter().all(|&p| p == first) {
            return first;
        }
        let mut best_t = 0u8;
        let mut best = f64::NEG_INFINITY;
        for t in 0..=255u8 {
            let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0u64, 0u64, 0u64);
            for &p in pixels {
                if p <= t {
                    n0 += 1;
                    s0 += p as u64;
                } else {
                    n1 += 1;
                    s1 += p as u64;
                }
            }
            let v = if n0 == 0 || n1 == 0 {
                0.0
            } else {
                let d = s0 as f64 / n0 as f64 - s1 as f64 / n1 as f64;
                n0 as f64 * n1 as f64 * d * d
            };
            if v > best {
                best = v;
                best_t = t;
            }
        }
        best_t
    }

    #[test]
    fn constant_image() {
        let img = GrayImage::new(4, 2, vec![128; 8]).unwrap();
        assert_eq!(otsu_threshold(&img).unwrap(), 128);
    }

    #[test]
    fn bimodal_image() {
        let mut pixels = vec![10u8; 60];
        pixels.extend(vec![200u8; 40]);
        let img = GrayImage::new(10, 10, pixels.clone()).unwrap();
        let t = otsu_threshold(&img).unwrap();
        assert!((10..200).contains(&t));
        assert_eq!(t, oracle(&pixels));
        assert_eq!(t, 10);
        let b = binarize(&img, t);
        assert_eq!(b.pixels.iter().filter(|&&p| p == 0).count(), 60);
    }

    #[test]
    fn empty_image_is_an_error() {
        let img = GrayImage::new(0, 0, vec![]).unwrap();
        assert!(matches!(otsu_threshold(&img), Err(PreprocessError::Empty)));
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn binarize_extremes() {
        let img = GrayImage::new(3, 1, vec![1, 2, 3]).unwrap();
        assert_eq!(binarize(&img, 3).pixels, [0, 0, 0]);
        assert_eq!(binarize(&img, 0).pixels, [255, 255, 255]);
    }

    #[test]
    fn pgm_round_trip_and_errors() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(parse_pgm(&bytes).unwrap(), img);
        let commented = b"P5\n# made by hand\n3 2\n255\n\x00\x01\x02\xfd\xfe\xff";
        assert_eq!(parse_pgm(commented).unwrap(), img);
        assert!(parse_pgm(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_pgm(b"P5\n3 2\n").is_err());
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(pixels in proptest::collection::vec(any::<u8>(), 1..300)) {
            let img = GrayImage::new(pixels.len(), 1, pixels.clone()).unwrap();
            prop_assert_eq!(otsu_threshold(&img).unwrap(), oracle(&pixels));
        }

        #[test]
        fn binarize_is_idempotent(pixels in proptest::collection::vec(any::<u8>(), 1..100), t in any::<u8>()) {
            let img = GrayImage::new(pixels.len(), 1, pixels).unwrap();
            let once = binarize(&img, t);
            prop_assert!(once.pixels.iter().all(|&p| p == 0 || p == 255));
            prop_assert_eq!(binarize(&once, t), once);
        }

        #[test]
        fn threshold_ignores_pixel_positions(mut pixels in proptest::collection::vec(any::<u8>(), 1..100), k in 0usize..100) {
            let a = otsu_threshold(&GrayImage::new(pixels.len(), 1, pixels.clone()).unwrap()).unwrap();
            let k = k % pixels.len();
            pixels.rotate_left(k);
            pixels.reverse();
            let b = otsu_threshold(&GrayImage::new(pixels.len(), 1, pixels).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

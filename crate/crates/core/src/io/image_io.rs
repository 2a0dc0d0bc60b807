//! Binary PPM (P6) reading and writing; PNG reading.

use crate::image::Image;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("malformed PPM: {0}")]
    MalformedPpm(String),
    #[error("unsupported image format `{0}` (expected .ppm or .png)")]
    UnsupportedFormat(String),
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses a binary P6 PPM with maxval up to 65535 into [0, 1] intensities.
pub fn parse_ppm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let bad = |m: &str| ImageIoError::MalformedPpm(m.to_string());
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        // Whitespace and `#` comments separate header fields.
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
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("header ends early"));
        }
        header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if header[0] != "P6" {
        return Err(bad(&format!("magic `{}` is not P6", header[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad number `{s}`")));
    let (w, h, maxval) = (num(header[1])?, num(header[2])?, num(header[3])?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("zero size or maxval outside 1..=65535"));
    }
    // Exactly one whitespace byte precedes the raster.
    pos += 1;
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = w * h * 3 * bps;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| bad("raster is truncated"))?;
    let scale = maxval as f64;
    let data = if bps == 1 {
        raster.iter().map(|&b| (b as f64 / scale).min(1.0)).collect()
    } else {
        raster.chunks_exact(2).map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0)).collect()
    };
    Ok(Image::from_data(w, h, data).expect("raster length checked"))
}

/// Encodes as 8-bit P6, clamping to [0, 1] and rounding.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    std::fs::write(path, encode_ppm(img))?;
    Ok(())
}

/// Reads a `.ppm` or `.png` file, chosen by extension.
pub fn read_image(path: &Path) -> Result<Image, ImageIoError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    match ext.as_str() {
        "ppm" => parse_ppm(&std::fs::read(path)?),
        "png" => {
            let decoded = image::open(path)
                .map_err(|e| ImageIoError::Decode { path: path.display().to_string(), message: e.to_string() })?
                .to_rgb32f();
            let (w, h) = (decoded.width() as usize, decoded.height() as usize);
            let data = decoded.into_raw().into_iter().map(|v| v as f64).collect();
            Ok(Image::from_data(w, h, data).expect("decoder returns w*h*3 samples"))
        }
        other => Err(ImageIoError::UnsupportedFormat(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_exact_on_8bit_values() {
        let img = Image::from_fn(5, 3, |x, y| [x as f64 / 4.0, y as f64 / 2.0, ((x * 37 + y * 11) % 256) as f64 / 255.0]);
        let img = parse_ppm(&encode_ppm(&img)).unwrap();
        assert_eq!(parse_ppm(&encode_ppm(&img)).unwrap(), img);
        assert_eq!(img.get(4, 2)[0], 1.0);
    }

    #[test]
    fn header_comments_and_16bit() {
        let mut bytes = b"P6 # c\n2 1\n# more\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0, 0, 0x80, 0x00, 0, 0, 0, 0, 0, 0]);
        let img = parse_ppm(&bytes).unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 32768.0 / 65535.0]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(parse_ppm(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(parse_ppm(b"P6\n2").is_err());
    }
}

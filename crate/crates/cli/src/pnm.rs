//! Binary netpbm codecs: P5 (grayscale) and P6 (RGB), maxval 255 only.
//! Grayscale loads to a single [0,1] plane; color loads to planar
//! [3,H,W]. Malformed headers report the byte offset of the problem.

use std::path::Path;

use crate::error::{CliError, IoContext, Result};

#[derive(Clone, Debug)]
pub struct GrayImage {
    pub h: usize,
    pub w: usize,
    /// Row-major, values in [0,1].
    pub data: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RgbImage {
    pub h: usize,
    pub w: usize,
    /// Planar [3,H,W], values in [0,1].
    pub data: Vec<f64>,
}

struct Header {
    w: usize,
    h: usize,
    /// Offset of the first raster byte.
    data_start: usize,
}

fn bad(path: &Path, offset: usize, what: &str) -> CliError {
    CliError::contract(format!(
        "{}: byte {offset}: {what}",
        path.display()
    ))
}

/// Parse "P5"/"P6", dimensions, and maxval, tolerating '#' comments.
fn parse_header(bytes: &[u8], magic: &str, path: &Path) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(bad(path, 0, "file too short for a netpbm magic"));
    }
    let got = &bytes[..2];
    if got == b"P2" || got == b"P3" {
        return Err(bad(
            path,
            0,
            "ASCII netpbm variants (P2/P3) are not supported, use binary P5/P6",
        ));
    }
    if got != magic.as_bytes() {
        return Err(bad(
            path,
            0,
            &format!("expected magic {magic}, found {:?}", String::from_utf8_lossy(got)),
        ));
    }
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(bad(path, pos, "truncated header")),
            }
        }
        let start = pos;
        let mut value = 0usize;
        while let Some(&b) = bytes.get(pos) {
            if b.is_ascii_digit() {
                value = value * 10 + (b - b'0') as usize;
                pos += 1;
            } else {
                break;
            }
        }
        if pos == start {
            return Err(bad(path, pos, "expected a decimal header field"));
        }
        *field = value;
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(bad(path, 2, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(bad(path, pos, &format!("maxval must be 255, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(_) => return Err(bad(path, pos, "missing whitespace before raster")),
        None => return Err(bad(path, pos, "truncated before raster")),
    }
    Ok(Header {
        w,
        h,
        data_start: pos,
    })
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).io_ctx(format!("reading {}", path.display()))?;
    let hd = parse_header(&bytes, "P5", path)?;
    let need = hd.w * hd.h;
    let raster = &bytes[hd.data_start..];
    if raster.len() != need {
        return Err(bad(
            path,
            hd.data_start,
            &format!("raster has {} bytes, expected {need}", raster.len()),
        ));
    }
    Ok(GrayImage {
        h: hd.h,
        w: hd.w,
        data: raster.iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

pub fn load_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).io_ctx(format!("reading {}", path.display()))?;
    let hd = parse_header(&bytes, "P6", path)?;
    let pixels = hd.w * hd.h;
    let raster = &bytes[hd.data_start..];
    if raster.len() != pixels * 3 {
        return Err(bad(
            path,
            hd.data_start,
            &format!("raster has {} bytes, expected {}", raster.len(), pixels * 3),
        ));
    }
    // interleaved RGB to planar
    let mut data = vec![0.0; pixels * 3];
    for i in 0..pixels {
        for c in 0..3 {
            data[c * pixels + i] = raster[i * 3 + c] as f64 / 255.0;
        }
    }
    Ok(RgbImage {
        h: hd.h,
        w: hd.w,
        data,
    })
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_pgm(path: &Path, h: usize, w: usize, data: &[f64]) -> Result<()> {
    assert_eq!(data.len(), h * w, "gray raster size");
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(data.iter().map(|&v| to_byte(v)));
    std::fs::write(path, out).io_ctx(format!("writing {}", path.display()))
}

pub fn save_pgm_bytes(path: &Path, h: usize, w: usize, data: &[u8]) -> Result<()> {
    assert_eq!(data.len(), h * w, "gray raster size");
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(data);
    std::fs::write(path, out).io_ctx(format!("writing {}", path.display()))
}

/// `data` is planar [3,H,W].
pub fn save_ppm(path: &Path, h: usize, w: usize, data: &[f64]) -> Result<()> {
    let pixels = h * w;
    assert_eq!(data.len(), pixels * 3, "rgb raster size");
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..pixels {
        for c in 0..3 {
            out.push(to_byte(data[c * pixels + i]));
        }
    }
    std::fs::write(path, out).io_ctx(format!("writing {}", path.display()))
}

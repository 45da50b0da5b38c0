//! Frame and mask file I/O: 8/16-bit grayscale TIFF and binary PGM.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::image::{Image2D, LabelMap};

/// Ordered list of frame files making up one time-lapse sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub frame_count: usize,
    pub frame_paths: Vec<PathBuf>,
    /// Bit depth of the first frame.
    pub pixel_depth: u8,
}

impl SequenceMeta {
    /// Scans `dir` for `.tif`, `.tiff` and `.pgm` files, ordered by the
    /// trailing number in the file stem.
    pub fn scan(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut frames: Vec<(u64, String, PathBuf)> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if !path.is_file() {
                continue;
            }
            let ext = path
                .extension()
                .and_then(|e| e.to_str())
                .map(str::to_ascii_lowercase);
            if !matches!(ext.as_deref(), Some("tif" | "tiff" | "pgm")) {
                continue;
            }
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let Some(index) = trailing_number(&stem) else {
                continue;
            };
            frames.push((index, stem, path));
        }
        if frames.is_empty() {
            return Err(Error::NoFrames(dir.to_path_buf()));
        }
        frames.sort();
        let frame_paths: Vec<PathBuf> = frames.into_iter().map(|(_, _, p)| p).collect();
        let pixel_depth = probe_depth(&frame_paths[0])?;
        Ok(Self {
            frame_count: frame_paths.len(),
            frame_paths,
            pixel_depth,
        })
    }
}

fn trailing_number(stem: &str) -> Option<u64> {
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn probe_depth(path: &Path) -> Result<u8> {
    if is_pgm(path) {
        let (_, _, maxval, _) = read_pgm_raw(path)?;
        return Ok(if maxval < 256 { 8 } else { 16 });
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder =
        Decoder::new(BufReader::new(file)).map_err(|e| Error::format(path, e.to_string()))?;
    match decoder
        .colortype()
        .map_err(|e| Error::format(path, e.to_string()))?
    {
        ColorType::Gray(bits) => Ok(bits),
        other => Err(Error::format(
            path,
            format!("channel layout {other:?}; expected single-channel gray"),
        )),
    }
}

/// Reads one single-channel 8- or 16-bit frame. Intensities are converted
/// to floating point but not rescaled.
pub fn load_frame(path: &Path) -> Result<Image2D> {
    if is_pgm(path) {
        let (w, h, _, data) = read_pgm_raw(path)?;
        return Ok(Image2D::from_vec(
            w,
            h,
            data.into_iter().map(f64::from).collect(),
        ));
    }
    let (w, h, data) = read_tiff_gray(path)?;
    Ok(Image2D::from_vec(
        w,
        h,
        data.into_iter().map(f64::from).collect(),
    ))
}

/// Reads a 16-bit (or 8-bit) label image.
pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    let (w, h, data) = if is_pgm(path) {
        let (w, h, _, data) = read_pgm_raw(path)?;
        (w, h, data)
    } else {
        read_tiff_gray(path)?
    };
    Ok(LabelMap::from_vec(
        w,
        h,
        data.into_iter().map(u32::from).collect(),
    ))
}

fn read_tiff_gray(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let fmt = |e: tiff::TiffError| Error::format(path, e.to_string());
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(fmt)?;
    let (w, h) = decoder.dimensions().map_err(fmt)?;
    match decoder.colortype().map_err(fmt)? {
        ColorType::Gray(8 | 16) => {}
        ColorType::Gray(bits) => {
            return Err(Error::format(
                path,
                format!("bit depth {bits}; expected 8 or 16"),
            ))
        }
        other => {
            return Err(Error::format(
                path,
                format!("channel layout {other:?}; expected single-channel gray"),
            ))
        }
    }
    let data = match decoder.read_image().map_err(fmt)? {
        DecodingResult::U8(v) => v.into_iter().map(u16::from).collect(),
        DecodingResult::U16(v) => v,
        _ => {
            return Err(Error::format(
                path,
                "sample format; expected unsigned integer",
            ))
        }
    };
    let (w, h) = (w as usize, h as usize);
    if data.len() != w * h {
        return Err(Error::format(
            path,
            format!("channel count {}; expected 1", data.len() / (w * h).max(1)),
        ));
    }
    Ok((w, h, data))
}

/// Parses a binary (P5) PGM with maxval up to 65535.
fn read_pgm_raw(path: &Path) -> Result<(usize, usize, u32, Vec<u16>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|detail| Error::format(path, detail))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, u32, Vec<u16>), String> {
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> std::result::Result<String, String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    if magic != "P5" {
        return Err(format!(
            "magic {magic:?}; only binary P5 graymaps are supported"
        ));
    }
    let num = |s: String| {
        s.parse::<u32>()
            .map_err(|_| format!("bad header field {s:?}"))
    };
    let w = num(next_token(&mut pos)?)? as usize;
    let h = num(next_token(&mut pos)?)? as usize;
    let maxval = num(next_token(&mut pos)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("bit depth: maxval {maxval} outside 1..=65535"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or_default();
    let data: Vec<u16> = if maxval < 256 {
        if raster.len() < w * h {
            return Err("truncated raster".into());
        }
        raster[..w * h].iter().map(|&b| u16::from(b)).collect()
    } else {
        if raster.len() < 2 * w * h {
            return Err("truncated raster".into());
        }
        raster[..2 * w * h]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok((w, h, maxval, data))
}

/// Writes a binary PGM; 16-bit when any value exceeds 255.
pub fn save_pgm(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let maxval = data.iter().copied().max().unwrap_or(0).max(1);
    let wide = maxval > 255;
    let mut out = Vec::with_capacity(32 + data.len() * 2);
    write!(
        out,
        "P5\n{width} {height}\n{}\n",
        if wide { 65535 } else { 255 }
    )
    .expect("writing to a Vec cannot fail");
    for &v in data {
        if wide {
            out.extend_from_slice(&v.to_be_bytes());
        } else {
            out.push(v as u8);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_tiff16(path: &Path, width: usize, height: usize, data: &[u16]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder =
        TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::format(path, e.to_string()))?;
    encoder
        .write_image::<colortype::Gray16>(width as u32, height as u32, data)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Writes a label map as a 16-bit single-channel TIFF.
pub fn save_label_map(path: &Path, labels: &LabelMap) -> Result<()> {
    let mut data = Vec::with_capacity(labels.len());
    for &l in labels.labels() {
        let v = u16::try_from(l)
            .map_err(|_| Error::param("labels", format!("label {l} does not fit in 16 bits")))?;
        data.push(v);
    }
    write_tiff16(path, labels.width(), labels.height(), &data)
}

/// Writes an image min-max rescaled to the full 16-bit range.
pub fn save_image_u16_normalized(path: &Path, img: &Image2D) -> Result<()> {
    let norm = crate::image::normalize(img);
    let data: Vec<u16> = norm
        .data()
        .iter()
        .map(|&v| (v * 65535.0).round() as u16)
        .collect();
    write_tiff16(path, img.width(), img.height(), &data)
}

/// Writes an image whose values are already in [0, 1] as 16-bit, without rescaling.
pub fn save_image_u16(path: &Path, img: &Image2D) -> Result<()> {
    let data: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_tiff16(path, img.width(), img.height(), &data)
}

/// Writes an 8-bit RGB PNG from interleaved samples.
pub fn save_rgb_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(rgb)
        .map_err(|e| Error::format(path, e.to_string()))
}

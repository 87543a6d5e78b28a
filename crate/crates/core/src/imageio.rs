//! Netpbm and raw frame I/O plus the grid JSON format.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::bandit::{Cell, Layout};
use crate::error::{Error, Result};
use crate::luminance::{LuminanceGrid, LuminanceMap, RgbFrame};

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("netpbm header is not ASCII".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Format(format!("bad netpbm header field {tok:?}")))
    }
}

/// Decodes a binary PPM (P6). 16-bit files are reduced to 8 bits.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbFrame> {
    let mut hdr = HeaderReader { bytes, pos: 0 };
    if hdr.token()? != "P6" {
        return Err(Error::Format("not a binary PPM (P6) file".into()));
    }
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("invalid PPM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(hdr.pos + 1).min(bytes.len())..];
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let needed = width * height * 3 * sample_bytes;
    if data.len() < needed {
        return Err(Error::Format(format!(
            "PPM raster truncated: need {needed} bytes, have {}",
            data.len()
        )));
    }
    let scale = |v: usize| ((v * 255 + maxval / 2) / maxval) as u8;
    let samples: Vec<u8> = if sample_bytes == 1 {
        data[..needed].iter().map(|&b| scale(b as usize)).collect()
    } else {
        data[..needed]
            .chunks_exact(2)
            .map(|c| scale(((c[0] as usize) << 8) | c[1] as usize))
            .collect()
    };
    RgbFrame::from_rgb24(width, height, &samples)
}

pub fn encode_ppm(frame: &RgbFrame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.to_rgb24());
    out
}

pub fn read_ppm(path: &Path) -> Result<RgbFrame> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_ppm(path: &Path, frame: &RgbFrame) -> Result<()> {
    fs::write(path, encode_ppm(frame))?;
    Ok(())
}

/// Reads a headerless RGB24 dump holding one or more frames of the given size.
pub fn read_raw_frames(path: &Path, width: usize, height: usize) -> Result<Vec<RgbFrame>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let frame_len = width * height * 3;
    if frame_len == 0 || bytes.is_empty() || bytes.len() % frame_len != 0 {
        return Err(Error::Format(format!(
            "raw dump of {} bytes is not a whole number of {width}x{height} RGB24 frames",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(frame_len)
        .map(|chunk| RgbFrame::from_rgb24(width, height, chunk))
        .collect()
}

pub fn write_raw_frames(path: &Path, frames: &[RgbFrame]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for frame in frames {
        file.write_all(&frame.to_rgb24())?;
    }
    Ok(())
}

/// 16-bit binary PGM (P5) from values in `[0, 1]`.
pub fn encode_pgm16(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(values.len() * 2);
    for v in values {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_luminance_pgm(path: &Path, map: &LuminanceMap) -> Result<()> {
    fs::write(path, encode_pgm16(map.width(), map.height(), map.values()))?;
    Ok(())
}

/// Decodes a 16-bit P5 file back to values in `[0, 1]`.
pub fn decode_pgm16(bytes: &[u8]) -> Result<LuminanceMap> {
    let mut hdr = HeaderReader { bytes, pos: 0 };
    if hdr.token()? != "P5" {
        return Err(Error::Format("not a binary PGM (P5) file".into()));
    }
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval <= 255 {
        return Err(Error::Format("expected a 16-bit PGM".into()));
    }
    let data = &bytes[(hdr.pos + 1).min(bytes.len())..];
    if data.len() < width * height * 2 {
        return Err(Error::Format("PGM raster truncated".into()));
    }
    let values = data[..width * height * 2]
        .chunks_exact(2)
        .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / maxval as f64)
        .collect();
    LuminanceMap::new(width, height, values)
}

/// 8-bit PGM of the luminance grid with each cell drawn as a
/// `cell_px x cell_px` block. Stimulus cells get a white frame and object
/// cells a black diagonal cross.
pub fn encode_layout_overlay(grid: &LuminanceGrid, objects: &[Cell], layout: &Layout, cell_px: usize) -> Vec<u8> {
    let n = grid.side();
    let size = n * cell_px.max(3);
    let px = size / n;
    let mut raster: Vec<u8> = (0..size * size)
        .map(|i| {
            let (x, y) = (i % size / px, i / size / px);
            (40.0 + 175.0 * grid.get(x, y).clamp(0.0, 1.0)).round() as u8
        })
        .collect();
    for c in objects {
        for k in 0..px {
            for (dx, dy) in [(k, k), (k, px - 1 - k)] {
                raster[(c.y * px + dy) * size + c.x * px + dx] = 0;
            }
        }
    }
    for c in &layout.positions {
        for k in 0..px {
            for (dx, dy) in [(k, 0), (k, px - 1), (0, k), (px - 1, k)] {
                raster[(c.y * px + dy) * size + c.x * px + dx] = 255;
            }
        }
    }
    let mut out = format!("P5\n{size} {size}\n255\n").into_bytes();
    out.extend_from_slice(&raster);
    out
}

/// Grid as a JSON array of rows, every value in fixed 6-decimal notation.
pub fn grid_to_json(grid: &LuminanceGrid) -> String {
    let mut out = String::from("[");
    for (i, row) in grid.rows().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.6}").unwrap();
        }
        out.push(']');
    }
    out.push(']');
    out
}

pub fn grid_from_json(text: &str) -> Result<LuminanceGrid> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
    let n_g = rows.len();
    if rows.iter().any(|r| r.len() != n_g) {
        return Err(Error::Format("grid JSON must be square".into()));
    }
    LuminanceGrid::new(n_g, rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_marks_objects_and_stimuli() {
        let grid = LuminanceGrid::uniform(2, 0.0).unwrap();
        let bytes = encode_layout_overlay(&grid, &[Cell::new(0, 0)], &Layout::new(vec![Cell::new(1, 1)]), 4);
        let header = b"P5\n8 8\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let raster = &bytes[header.len()..];
        assert_eq!(raster.len(), 64);
        assert_eq!(raster[0], 0);
        assert_eq!(raster[1], 40);
        assert_eq!(raster[4 * 8 + 4], 255);
        assert_eq!(raster[6 * 8 + 6], 40);
    }

    #[test]
    fn ppm_round_trip_with_comments() {
        let frame = RgbFrame::new(2, 1, vec![[1, 2, 3], [250, 128, 0]]).unwrap();
        let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend(frame.to_rgb24());
        assert_eq!(decode_ppm(&bytes).unwrap(), frame);
        assert_eq!(decode_ppm(&encode_ppm(&frame)).unwrap(), frame);
    }

    #[test]
    fn ppm_sixteen_bit_is_rescaled() {
        let mut bytes = b"P6 1 1 65535\n".to_vec();
        bytes.extend([0xff, 0xff, 0x00, 0x00, 0x80, 0x00]);
        assert_eq!(decode_ppm(&bytes).unwrap().pixel(0, 0), [255, 0, 128]);
    }

    #[test]
    fn ppm_rejects_garbage() {
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(decode_ppm(b"P6\n").is_err());
    }

    #[test]
    fn pgm_quantizes_to_sixteen_bits() {
        let bytes = encode_pgm16(2, 1, &[0.0, 1.0]);
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 0, 0xff, 0xff]);
        let map = decode_pgm16(&bytes).unwrap();
        assert_eq!(map.values(), &[0.0, 1.0]);
    }

    #[test]
    fn grid_json_is_fixed_notation() {
        let grid = LuminanceGrid::new(2, vec![0.0, 1.0, 0.25, 1.0 / 3.0]).unwrap();
        let text = grid_to_json(&grid);
        assert_eq!(text, "[[0.000000,1.000000],[0.250000,0.333333]]");
        let back = grid_from_json(&text).unwrap();
        assert!((back.get(1, 1) - 0.333333).abs() < 1e-12);
    }

    #[test]
    fn raw_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.rgb");
        let frames = vec![
            RgbFrame::filled(3, 2, [10, 20, 30]).unwrap(),
            RgbFrame::filled(3, 2, [40, 50, 60]).unwrap(),
        ];
        write_raw_frames(&path, &frames).unwrap();
        assert_eq!(read_raw_frames(&path, 3, 2).unwrap(), frames);
        assert!(read_raw_frames(&path, 4, 2).is_err());
    }
}

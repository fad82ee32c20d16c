//! Image and table serialisation.
//!
//! Images are binary PGM (`P5`) with `maxval` 65535: an ASCII header
//!
//! ```text
//! P5
//! # <comment lines>
//! # scale lo=<f64> hi=<f64>
//! <width> <height>
//! 65535
//! ```
//!
//! followed by `width × height` big-endian `u16` samples in row-major
//! order. A sample `s` encodes the value `lo + (hi − lo) · s / 65535`;
//! values outside `[lo, hi]` saturate and NaN is stored as 0.
//!
//! Tables are UTF-8 CSV with a header row `row,col,value`; floats are
//! written with shortest round-trip precision.

use std::fmt::Write as _;
use std::io::{self, BufRead, BufReader, Read, Write};

use super::TransmittanceMap;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub lo: f64,
    pub hi: f64,
    pub samples: Vec<u16>,
}

impl GrayImage {
    pub fn encode(width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Self {
        assert_eq!(values.len(), width * height, "image dimensions");
        let span = hi - lo;
        let samples = values
            .iter()
            .map(|&v| {
                if v.is_nan() || span <= 0.0 {
                    0
                } else {
                    (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16
                }
            })
            .collect();
        GrayImage {
            width,
            height,
            lo,
            hi,
            samples,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * self.samples[i] as f64 / 65535.0
    }

    pub fn write<W: Write>(&self, mut w: W, comments: &[String]) -> io::Result<()> {
        let mut header = String::from("P5\n");
        for c in comments {
            for line in c.lines() {
                let _ = writeln!(header, "# {line}");
            }
        }
        let _ = writeln!(header, "# scale lo={} hi={}", self.lo, self.hi);
        let _ = write!(header, "{} {}\n65535\n", self.width, self.height);
        w.write_all(header.as_bytes())?;
        let mut body = Vec::with_capacity(self.samples.len() * 2);
        for s in &self.samples {
            body.extend_from_slice(&s.to_be_bytes());
        }
        w.write_all(&body)
    }

    pub fn read<R: Read>(r: R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != "P5" {
            return Err(bad("not a binary PGM"));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut fields: Vec<usize> = Vec::new();
        while fields.len() < 3 {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated header"));
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(rest) = comment.trim().strip_prefix("scale ") {
                    for kv in rest.split_whitespace() {
                        match kv.split_once('=') {
                            Some(("lo", v)) => lo = v.parse().map_err(|_| bad("scale lo"))?,
                            Some(("hi", v)) => hi = v.parse().map_err(|_| bad("scale hi"))?,
                            _ => {}
                        }
                    }
                }
                continue;
            }
            for tok in line.split_whitespace() {
                fields.push(tok.parse().map_err(|_| bad("header field"))?);
            }
        }
        let (width, height, maxval) = (fields[0], fields[1], fields[2]);
        if maxval != 65535 {
            return Err(bad("only 16-bit PGM is supported"));
        }
        let mut body = vec![0u8; width * height * 2];
        r.read_exact(&mut body)?;
        let samples = body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
        Ok(GrayImage {
            width,
            height,
            lo,
            hi,
            samples,
        })
    }
}

/// `row,col,value` table of a row-major grid.
pub fn write_grid_csv<W: Write>(
    mut w: W,
    width: usize,
    values: &[f64],
    comments: &[String],
) -> io::Result<()> {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("row,col,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i / width, i % width, v);
    }
    w.write_all(out.as_bytes())
}

/// Parse a `row,col,value` table back into `(rows, cols, values)`.
pub fn read_grid_csv<R: Read>(r: R) -> io::Result<(usize, usize, Vec<f64>)> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut cells = Vec::new();
    let mut header_seen = false;
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != "row,col,value" {
                return Err(bad(format!("unexpected header {line:?}")));
            }
            header_seen = true;
            continue;
        }
        let mut parts = line.split(',');
        let mut next = || parts.next().ok_or_else(|| bad(format!("short line {line:?}")));
        let row: usize = next()?.parse().map_err(|_| bad(format!("row in {line:?}")))?;
        let col: usize = next()?.parse().map_err(|_| bad(format!("col in {line:?}")))?;
        let value: f64 = next()?.parse().map_err(|_| bad(format!("value in {line:?}")))?;
        cells.push((row, col, value));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut values = vec![f64::NAN; rows * cols];
    for (r, c, v) in cells {
        values[r * cols + c] = v;
    }
    Ok((rows, cols, values))
}

pub fn write_map_csv<W: Write>(w: W, map: &TransmittanceMap, comments: &[String]) -> io::Result<()> {
    write_grid_csv(w, map.cols(), map.values(), comments)
}

pub fn write_map_pgm<W: Write>(w: W, map: &TransmittanceMap, comments: &[String]) -> io::Result<()> {
    GrayImage::encode(map.cols(), map.rows(), map.values(), 0.0, 1.0).write(w, comments)
}

//! Row-major 2-D grids and the two on-disk formats used for images:
//! a plain-text grid (`rows cols` header, then row-major values) and
//! 8-bit binary PGM (`P5`).
//!
//! Grids are laid over a rectangular domain with row 0 at the top
//! (largest y) and column 0 at the left (smallest x). Pixel `(r, c)` is
//! centered at `x = (c + 0.5) * w / cols`, `y = h - (r + 0.5) * h / rows`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("grid must be nonempty".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Center of pixel `(r, c)` on a `width × height` domain anchored at the origin.
    pub fn pixel_center(&self, r: usize, c: usize, width: f64, height: f64) -> (f64, f64) {
        let x = (c as f64 + 0.5) * width / self.cols as f64;
        let y = height - (r as f64 + 0.5) * height / self.rows as f64;
        (x, y)
    }

    /// Fractional (row, col) of a domain point in pixel-center coordinates.
    fn fractional_index(&self, x: f64, y: f64, width: f64, height: f64) -> (f64, f64) {
        let fc = x / width * self.cols as f64 - 0.5;
        let fr = (height - y) / height * self.rows as f64 - 0.5;
        (fr, fc)
    }

    /// Bilinear interpolation between pixel centers, clamped at the border.
    pub fn sample_bilinear(&self, x: f64, y: f64, width: f64, height: f64) -> f64 {
        let (fr, fc) = self.fractional_index(x, y, width, height);
        let fr = fr.clamp(0.0, (self.rows - 1) as f64);
        let fc = fc.clamp(0.0, (self.cols - 1) as f64);
        let r0 = fr.floor() as usize;
        let c0 = fc.floor() as usize;
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let tr = fr - r0 as f64;
        let tc = fc - c0 as f64;
        let top = self.get(r0, c0) * (1.0 - tc) + self.get(r0, c1) * tc;
        let bottom = self.get(r1, c0) * (1.0 - tc) + self.get(r1, c1) * tc;
        top * (1.0 - tr) + bottom * tr
    }

    /// Value of the pixel containing the point (nearest pixel center).
    pub fn sample_nearest(&self, x: f64, y: f64, width: f64, height: f64) -> f64 {
        let (r, c) = self.nearest_index(x, y, width, height);
        self.get(r, c)
    }

    pub fn nearest_index(&self, x: f64, y: f64, width: f64, height: f64) -> (usize, usize) {
        let c = (x / width * self.cols as f64).floor();
        let r = ((height - y) / height * self.rows as f64).floor();
        let c = (c.max(0.0) as usize).min(self.cols - 1);
        let r = (r.max(0.0) as usize).min(self.rows - 1);
        (r, c)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(str::split_whitespace);
        let mut header = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("grid header missing {what}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("grid header {what}: {e}")))
        };
        let rows = header("rows")?;
        let cols = header("cols")?;
        let data = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("grid value `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, data)
    }

    /// 8-bit PGM with a linear map of `[lo, hi]` onto `[0, 255]`.
    pub fn to_pgm(&self, lo: f64, hi: f64) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        let span = hi - lo;
        out.extend(self.data.iter().map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        }));
        out
    }

    /// Reads binary (`P5`) or ASCII (`P2`) PGM; values are returned as raw intensities.
    pub fn parse_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let next_token = |pos: &mut usize| -> Result<String> {
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
                return Err(Error::Parse("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = next_token(&mut pos)?;
        let num = |s: String| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("PGM header `{s}`: {e}")))
        };
        let cols = num(next_token(&mut pos)?)?;
        let rows = num(next_token(&mut pos)?)?;
        let maxval = num(next_token(&mut pos)?)?;
        match magic.as_str() {
            "P5" => {
                if maxval > 255 {
                    return Err(Error::Parse("only 8-bit PGM is supported".into()));
                }
                // exactly one whitespace byte separates the header from the raster
                pos += 1;
                let raster = bytes
                    .get(pos..pos + rows * cols)
                    .ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
                Self::new(rows, cols, raster.iter().map(|&b| b as f64).collect())
            }
            "P2" => {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows * cols {
                    data.push(num(next_token(&mut pos)?)? as f64);
                }
                Self::new(rows, cols, data)
            }
            other => Err(Error::Parse(format!("unsupported PGM magic `{other}`"))),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
        if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
            Self::parse_pgm(&bytes)
        } else {
            Self::parse_text(&String::from_utf8_lossy(&bytes))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_is_exact() {
        let g = Grid::from_fn(3, 4, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0)).unwrap();
        let back = Grid::parse_text(&g.to_text()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn pgm_roundtrip() {
        let g = Grid::from_fn(2, 3, |r, c| (r * 3 + c) as f64 * 51.0).unwrap();
        let bytes = g.to_pgm(0.0, 255.0);
        assert_eq!(Grid::parse_pgm(&bytes).unwrap(), g);
    }

    #[test]
    fn ascii_pgm_parses() {
        let g = Grid::parse_pgm(b"P2\n# comment\n2 1\n255\n7 9\n").unwrap();
        assert_eq!(g.data(), &[7.0, 9.0]);
    }

    #[test]
    fn bilinear_center_of_two_by_two_is_mean() {
        let g = Grid::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((g.sample_bilinear(0.5, 0.5, 1.0, 1.0) - 1.5).abs() < 1e-15);
        // pixel centers reproduce pixel values
        assert_eq!(g.sample_bilinear(0.25, 0.75, 1.0, 1.0), 0.0);
        assert_eq!(g.sample_bilinear(0.75, 0.25, 1.0, 1.0), 3.0);
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(matches!(
            Grid::parse_text("2 2\n1 2 3"),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}

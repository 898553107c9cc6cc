//! Built-in stand-ins for the phantoms whose source images are not available:
//! a seven-region kidney-in-gelatin label map and a grayscale abdominal
//! cross-section. Both are generated procedurally so they are reproducible
//! without shipping binary assets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::Grid;

use super::Disc;

pub const KIDNEY_GRID: usize = 100;
pub const ABDOMEN_GRID: usize = 128;

/// Disc layout of the three-inclusion model. The last disc is nested in the second.
pub fn model2_discs() -> [Disc; 3] {
    [
        Disc {
            center_mm: [12.0, 25.0],
            radius_mm: 5.0,
            modulus_pa: 30e3,
        },
        Disc {
            center_mm: [35.0, 25.0],
            radius_mm: 8.0,
            modulus_pa: 15e3,
        },
        Disc {
            center_mm: [35.0, 25.0],
            radius_mm: 3.0,
            modulus_pa: 30e3,
        },
    ]
}

/// Default region moduli (Pa) for the kidney label map.
///
/// 0 gelatin, 1 cortex, 2 outer medulla, 3 pyramids, 4 sinus, 5 pelvis, 6 vessel.
pub fn kidney_moduli() -> BTreeMap<i64, f64> {
    BTreeMap::from([
        (0, 8.0e3),
        (1, 10.4e3),
        (2, 9.3e3),
        (3, 7.7e3),
        (4, 6.7e3),
        (5, 9.6e3),
        (6, 8.8e3),
    ])
}

pub fn builtin_grid(name: &str) -> Result<Grid> {
    match name {
        "kidney" => kidney_labels(),
        "abdomen" => abdomen_intensity(),
        other => Err(Error::InvalidConfig(format!("unknown built-in grid `{other}`"))),
    }
}

fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64) -> bool {
    ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0
}

fn kidney_label_at(x: f64, y: f64) -> i64 {
    let (cx, cy) = (24.0, 26.0);
    // bean outline: ellipse with a circular notch at the hilum
    let inside_outline =
        in_ellipse(x, y, cx, cy, 15.0, 10.0) && (x - 41.0).powi(2) + (y - cy).powi(2) > 36.0;
    let vessel = x >= 33.0 && (y - 27.0).abs() <= 1.2;
    if !inside_outline {
        return if vessel { 6 } else { 0 };
    }
    if (x - 33.5).powi(2) + (y - cy).powi(2) <= 2.6f64.powi(2) {
        return 5;
    }
    if in_ellipse(x, y, 30.0, cy, 5.0, 4.0) {
        return 4;
    }
    if vessel {
        return 6;
    }
    let pyramids = [(15.0, 31.0), (13.0, 24.0), (18.0, 19.5), (23.0, 32.5), (24.5, 20.0)];
    if pyramids
        .iter()
        .any(|&(px, py)| in_ellipse(x, y, px, py, 2.6, 2.0))
    {
        return 3;
    }
    if in_ellipse(x, y, cx, cy, 12.0, 7.5) {
        return 2;
    }
    1
}

fn kidney_labels() -> Result<Grid> {
    let n = KIDNEY_GRID;
    let template = Grid::filled(n, n, 0.0)?;
    Grid::from_fn(n, n, |r, c| {
        let (x, y) = template.pixel_center(r, c, 50.0, 50.0);
        kidney_label_at(x, y) as f64
    })
}

fn abdomen_value(x: f64, y: f64) -> f64 {
    // outside the body stays dark
    if !in_ellipse(x, y, 25.0, 25.0, 23.5, 17.5) {
        return 0.0;
    }
    let mut v = 0.30;
    if in_ellipse(x, y, 25.0, 24.5, 20.5, 14.5) {
        v = 0.45;
    }
    // liver, spleen, stomach
    if in_ellipse(x, y, 15.0, 29.0, 9.5, 7.0) {
        v = 0.62;
    }
    if in_ellipse(x, y, 37.5, 29.5, 5.0, 4.0) {
        v = 0.56;
    }
    if in_ellipse(x, y, 28.0, 33.5, 5.5, 3.0) {
        v = 0.20;
    }
    // bowel loops
    for &(bx, by, r, level) in &[
        (22.0, 24.0, 2.2, 0.78),
        (27.0, 25.5, 2.0, 0.25),
        (31.5, 22.5, 2.4, 0.72),
        (25.0, 19.0, 1.8, 0.30),
        (35.5, 24.0, 1.7, 0.68),
        (18.5, 19.5, 2.0, 0.35),
    ] {
        if (x - bx).powi(2) + (y - by).powi(2) <= r * r {
            v = level;
        }
    }
    // kidneys
    if in_ellipse(x, y, 14.5, 15.5, 3.2, 4.5) || in_ellipse(x, y, 35.5, 15.5, 3.2, 4.5) {
        v = 0.70;
    }
    // aorta and vena cava
    if (x - 27.5).powi(2) + (y - 17.5).powi(2) <= 1.6f64.powi(2) {
        v = 0.88;
    }
    if (x - 22.0).powi(2) + (y - 17.0).powi(2) <= 1.4f64.powi(2) {
        v = 0.15;
    }
    // vertebral body, canal, and paraspinal muscle
    if in_ellipse(x, y, 16.5, 10.5, 4.0, 2.5) || in_ellipse(x, y, 33.5, 10.5, 4.0, 2.5) {
        v = 0.52;
    }
    if (x - 25.0).powi(2) + (y - 12.0).powi(2) <= 3.6f64.powi(2) {
        v = 1.0;
    }
    if (x - 25.0).powi(2) + (y - 9.0).powi(2) <= 1.0 {
        v = 0.1;
    }
    // gentle tissue texture
    v + 0.04 * (0.9 * x).sin() * (0.7 * y).cos()
}

fn abdomen_intensity() -> Result<Grid> {
    let n = ABDOMEN_GRID;
    let template = Grid::filled(n, n, 0.0)?;
    let raw = Grid::from_fn(n, n, |r, c| {
        let (x, y) = template.pixel_center(r, c, 50.0, 50.0);
        abdomen_value(x, y)
    })?;
    // 3x3 box blur softens edges the way a reconstructed MR slice would look
    let blurred = Grid::from_fn(n, n, |r, c| {
        let mut sum = 0.0;
        let mut count = 0.0;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let rr = r as i64 + dr;
                let cc = c as i64 + dc;
                if (0..n as i64).contains(&rr) && (0..n as i64).contains(&cc) {
                    sum += raw.get(rr as usize, cc as usize);
                    count += 1.0;
                }
            }
        }
        sum / count
    })?;
    let lo = blurred.min();
    let hi = blurred.max();
    Ok(blurred.map(|v| ((v - lo) / (hi - lo) * 255.0).round()))
}

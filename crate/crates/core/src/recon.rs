//! Young's-modulus images from a combined material/spatial network model,
//! and their relative-error scores against target fields.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mpn::MaterialPropertyNet;
use crate::phantom::ModulusField;
use crate::spatial::SpatialNet;
use crate::Voigt;

pub const DEFAULT_PROBE_STRAIN: Voigt = [0.003, 0.005, 0.0001];
pub const DEFAULT_GRID: usize = 101;
/// Largest probe-strain component inside the pretraining range.
pub const MAX_PROBE_COMPONENT: f64 = 0.2;

/// Material network plus spatial network.
#[derive(Debug, Clone, PartialEq)]
pub struct Cann {
    pub mpn: MaterialPropertyNet,
    pub sn: SpatialNet,
}

impl Cann {
    pub fn new(mpn: MaterialPropertyNet, sn: SpatialNet) -> Self {
        Self { mpn, sn }
    }

    pub fn stress_unit_pa(&self) -> f64 {
        self.mpn.stress_unit_pa()
    }

    /// Stress (Pa) predicted at a point for a strain.
    pub fn stress_at(&self, p: [f64; 2], strain: &Voigt) -> Result<Voigt> {
        let s = self.sn.predict_scale(p)?;
        self.mpn.predict_stress(strain, &s)
    }

    /// Reads `mpn.net` and `sn.net` from a directory.
    pub fn load_dir(dir: &Path, expected_unit_pa: f64) -> Result<Self> {
        Ok(Self {
            mpn: MaterialPropertyNet::load(&dir.join("mpn.net"), expected_unit_pa)?,
            sn: SpatialNet::load(&dir.join("sn.net"))?,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        self.mpn.save(&dir.join("mpn.net"))?;
        self.sn.save(&dir.join("sn.net"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconSpec {
    pub rows: usize,
    pub cols: usize,
    pub probe_strain: Voigt,
    pub poisson: f64,
}

impl Default for ReconSpec {
    fn default() -> Self {
        Self {
            rows: DEFAULT_GRID,
            cols: DEFAULT_GRID,
            probe_strain: DEFAULT_PROBE_STRAIN,
            poisson: 0.5,
        }
    }
}

impl ReconSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig("reconstruction grid must be nonempty".into()));
        }
        if self.probe_strain.iter().any(|v| !(v.abs() <= MAX_PROBE_COMPONENT)) {
            return Err(Error::InvalidConfig(format!(
                "probe strain {:?} leaves the pretraining range ±{MAX_PROBE_COMPONENT}",
                self.probe_strain
            )));
        }
        let denom = self.poisson * self.probe_strain[0] + self.probe_strain[1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "probe strain {:?} gives a zero denominator when inverting for the modulus",
                self.probe_strain
            )));
        }
        Ok(())
    }
}

/// Modulus from the axial stress and the axial/lateral strains of a
/// plane-stress state: `E = σ22 (1 - ν²) / (ν ε11 + ε22)`.
pub fn youngs_from_stress(stress: &Voigt, strain: &Voigt, nu: f64) -> f64 {
    stress[1] * (1.0 - nu * nu) / (nu * strain[0] + strain[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulusImage {
    /// Pa; row 0 is the top edge.
    pub grid: Grid,
    /// `(lower-left, upper-right)` corners in mm.
    pub extent: ([f64; 2], [f64; 2]),
    pub probe_strain: Voigt,
    /// Pa per network stress unit of the model that produced the image.
    pub stress_unit_pa: f64,
}

impl ModulusImage {
    fn size(&self) -> (f64, f64) {
        (
            self.extent.1[0] - self.extent.0[0],
            self.extent.1[1] - self.extent.0[1],
        )
    }

    /// Center of pixel `(r, c)` in mm.
    pub fn pixel_center(&self, r: usize, c: usize) -> [f64; 2] {
        let (w, h) = self.size();
        let (x, y) = self.grid.pixel_center(r, c, w, h);
        [self.extent.0[0] + x, self.extent.0[1] + y]
    }

    /// Bilinear value at a point in mm.
    pub fn sample(&self, p: [f64; 2]) -> f64 {
        let (w, h) = self.size();
        self.grid
            .sample_bilinear(p[0] - self.extent.0[0], p[1] - self.extent.0[1], w, h)
    }

    /// Number of non-positive or non-finite pixels.
    pub fn invalid_pixels(&self) -> usize {
        self.grid.data().iter().filter(|v| !(**v > 0.0 && v.is_finite())).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# modulus_pa rows {} cols {}", self.grid.rows(), self.grid.cols());
        let _ = writeln!(
            out,
            "# extent_mm {} {} {} {}",
            self.extent.0[0], self.extent.0[1], self.extent.1[0], self.extent.1[1]
        );
        let p = self.probe_strain;
        let _ = writeln!(out, "# probe_strain {} {} {}", p[0], p[1], p[2]);
        let _ = writeln!(out, "# stress_unit_pa {}", self.stress_unit_pa);
        for r in 0..self.grid.rows() {
            let row: Vec<String> = (0..self.grid.cols()).map(|c| self.grid.get(r, c).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut extent = None;
        let mut probe = None;
        let mut unit = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let nums = |s: &str, n: usize, what: &str| -> Result<Vec<f64>> {
            let v = s
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("{what}: {e}")))?;
            if v.len() != n {
                return Err(Error::Parse(format!("{what}: expected {n} numbers")));
            }
            Ok(v)
        };
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some(v) = c.strip_prefix("extent_mm") {
                    let v = nums(v, 4, "extent")?;
                    extent = Some(([v[0], v[1]], [v[2], v[3]]));
                } else if let Some(v) = c.strip_prefix("probe_strain") {
                    let v = nums(v, 3, "probe strain")?;
                    probe = Some([v[0], v[1], v[2]]);
                } else if let Some(v) = c.strip_prefix("stress_unit_pa") {
                    unit = Some(nums(v, 1, "stress unit")?[0]);
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("image row {}: {e}", rows.len() + 1)))?;
            rows.push(row);
        }
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("image rows have different lengths".into()));
        }
        let n_rows = rows.len();
        let grid = Grid::new(n_rows, cols, rows.into_iter().flatten().collect())?;
        Ok(Self {
            grid,
            extent: extent.ok_or_else(|| Error::Parse("image has no extent line".into()))?,
            probe_strain: probe.ok_or_else(|| Error::Parse("image has no probe strain line".into()))?,
            stress_unit_pa: unit.ok_or_else(|| Error::Parse("image has no stress unit line".into()))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Evaluates the model on a `rows × cols` grid of pixel centers covering `extent`.
pub fn reconstruct(cann: &Cann, extent: ([f64; 2], [f64; 2]), spec: &ReconSpec) -> Result<ModulusImage> {
    spec.validate()?;
    let mut image = ModulusImage {
        grid: Grid::filled(spec.rows, spec.cols, 0.0)?,
        extent,
        probe_strain: spec.probe_strain,
        stress_unit_pa: cann.stress_unit_pa(),
    };
    let points: Vec<[f64; 2]> = (0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| (r, c)))
        .map(|(r, c)| image.pixel_center(r, c))
        .collect();
    let scales = cann.sn.predict_many(&points)?;
    let values = scales
        .iter()
        .map(|s| {
            let stress = cann.mpn.predict_stress(&spec.probe_strain, s)?;
            Ok(youngs_from_stress(&stress, &spec.probe_strain, spec.poisson))
        })
        .collect::<Result<Vec<f64>>>()?;
    image.grid = Grid::new(spec.rows, spec.cols, values)?;
    Ok(image)
}

/// Reconstruction over the spatial network's own domain.
pub fn reconstruct_default(cann: &Cann, spec: &ReconSpec) -> Result<ModulusImage> {
    let norm = cann.sn.coord_norm();
    reconstruct(cann, (norm.lower(), norm.upper()), spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Per-pixel relative error on the scoring grid.
    pub error_map: Grid,
}

/// Relative error `|E_target - E| / E_target` on the target's native grid, or
/// on a `DEFAULT_GRID²` grid for analytic targets. The target field's domain
/// starts at the origin.
pub fn score(image: &ModulusImage, target: &ModulusField) -> Result<Score> {
    let (w, h) = (target.width_mm(), target.height_mm());
    let tol = 1e-9 * w.max(h);
    if image.extent.0[0] < -tol
        || image.extent.0[1] < -tol
        || image.extent.1[0] > w + tol
        || image.extent.1[1] > h + tol
    {
        return Err(Error::InvalidParameter(format!(
            "image extent {:?} leaves the target domain {w} × {h} mm",
            image.extent
        )));
    }
    let (rows, cols) = target.native_grid().unwrap_or((DEFAULT_GRID, DEFAULT_GRID));
    let shape = Grid::filled(rows, cols, 0.0)?;
    let errors = Grid::from_fn(rows, cols, |r, c| {
        let (x, y) = shape.pixel_center(r, c, w, h);
        let t = target.eval(x, y);
        (t - image.sample([x, y])).abs() / t
    })?;
    let n = errors.data().len() as f64;
    let mean = errors.data().iter().sum::<f64>() / n;
    let var = errors.data().iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    Ok(Score {
        mean,
        std: var.sqrt(),
        error_map: errors,
    })
}

/// Display window for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo_pa: f64,
    pub hi_pa: f64,
}

/// Writes `<stem>.csv`, `<stem>.pgm` and `<stem>.window.json` into `dir`.
/// Without an explicit window the image's own range is used.
pub fn render(image: &ModulusImage, dir: &Path, stem: &str, window: Option<Window>) -> Result<Window> {
    let window = window.unwrap_or(Window {
        lo_pa: image.grid.min(),
        hi_pa: image.grid.max(),
    });
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, image.to_csv()).map_err(|e| Error::file(&csv, e))?;
    let pgm = dir.join(format!("{stem}.pgm"));
    fs::write(&pgm, image.grid.to_pgm(window.lo_pa, window.hi_pa)).map_err(|e| Error::file(&pgm, e))?;
    let side = dir.join(format!("{stem}.window.json"));
    fs::write(&side, serde_json::to_string_pretty(&window)?).map_err(|e| Error::file(&side, e))?;
    Ok(window)
}

//! Per-location strain scales `S` found by gradient descent on the stress
//! error of the material property network.
//!
//! For each location the update runs `iterations` outer passes; inside each
//! pass the three components are updated in order, so later components see
//! the already-updated earlier ones. The step for component `k` is the mean
//! over the location's samples of `Σ_p e_p g_p`, where `e = σ^t - σ^NN` and
//! `g` is either the masked network response (approximate rule) or the
//! tangent-stiffness column times the scaled strain (exact rule). Since the
//! strain is divided by `S`, descending the error means subtracting the step.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::SampleSet;
use crate::mpn::MaterialPropertyNet;
use crate::Voigt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub iterations: usize,
    pub eta: f64,
    /// Stress unit (Pa) in which `eta` is expressed: errors and responses
    /// enter the step in this unit.
    pub eta_stress_unit_pa: f64,
    pub s_floor: f64,
    pub use_exact_gradient: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            eta: 2.5,
            eta_stress_unit_pa: 1e3,
            s_floor: 1e-3,
            use_exact_gradient: false,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("gradient descent needs at least one iteration".into()));
        }
        if !(self.eta > 0.0 && self.eta_stress_unit_pa > 0.0 && self.s_floor > 0.0) {
            return Err(Error::InvalidConfig("eta, its stress unit and the scale floor must be positive".into()));
        }
        Ok(())
    }
}

/// One stress/strain pair at a location. Stress in Pa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub stress: Voigt,
    pub strain: Voigt,
}

/// RMS of `||σ^t - σ^NN||` (Pa) over a location's pairs.
pub fn point_rms(mpn: &MaterialPropertyNet, pairs: &[Pair], scale: &Voigt) -> Result<f64> {
    let mut sum = 0.0;
    for p in pairs {
        let s = mpn.predict_stress(&p.strain, scale)?;
        sum += (0..3).map(|k| (p.stress[k] - s[k]).powi(2)).sum::<f64>();
    }
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Mean step `ΔS_k` (before multiplying by `eta`) for one component.
pub fn component_step(
    mpn: &MaterialPropertyNet,
    pairs: &[Pair],
    scale: &Voigt,
    k: usize,
    exact: bool,
    unit_pa: f64,
) -> Result<f64> {
    let out_to_ref = mpn.stress_scale() * mpn.stress_unit_pa() / unit_pa;
    let mut acc = 0.0;
    for p in pairs {
        if exact {
            let (pred, d) = mpn.tangent_stiffness(&p.strain, scale)?;
            let scaled_strain = p.strain[k] / scale[k];
            acc += (0..3)
                .map(|i| (p.stress[i] - pred[i]) / unit_pa * (d[i][k] / unit_pa) * scaled_strain)
                .sum::<f64>();
        } else {
            let pred = mpn.predict_stress(&p.strain, scale)?;
            let masked = mpn.masked_predict(&p.strain, scale, k)?;
            acc += (0..3)
                .map(|i| (p.stress[i] - pred[i]) / unit_pa * masked[i] * out_to_ref)
                .sum::<f64>();
        }
    }
    Ok(acc / pairs.len() as f64)
}

/// Result of descending at one location.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFit {
    pub scale: Voigt,
    /// RMS error (Pa) before the first pass and after each pass.
    pub rms: Vec<f64>,
}

fn descend(
    mpn: &MaterialPropertyNet,
    pairs: &[Pair],
    start: Voigt,
    cfg: &GdConfig,
    exact: bool,
    coord: [f64; 2],
) -> Result<PointFit> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no samples at ({}, {})",
            coord[0], coord[1]
        )));
    }
    let mut s = start;
    let mut rms = Vec::with_capacity(cfg.iterations + 1);
    rms.push(point_rms(mpn, pairs, &s)?);
    for _ in 0..cfg.iterations {
        for k in 0..3 {
            let step = cfg.eta * component_step(mpn, pairs, &s, k, exact, cfg.eta_stress_unit_pa)?;
            if !step.is_finite() {
                return Err(Error::Numeric(format!(
                    "scale update became {step} at ({}, {})",
                    coord[0], coord[1]
                )));
            }
            s[k] = (s[k] - step).max(cfg.s_floor);
        }
        rms.push(point_rms(mpn, pairs, &s)?);
    }
    Ok(PointFit { scale: s, rms })
}

/// Approximate (masked-response) update at one location.
pub fn update_point(mpn: &MaterialPropertyNet, pairs: &[Pair], start: Voigt, cfg: &GdConfig) -> Result<PointFit> {
    descend(mpn, pairs, start, cfg, false, [f64::NAN; 2])
}

/// Exact (tangent-stiffness) update at one location.
pub fn update_point_exact(mpn: &MaterialPropertyNet, pairs: &[Pair], start: Voigt, cfg: &GdConfig) -> Result<PointFit> {
    descend(mpn, pairs, start, cfg, true, [f64::NAN; 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationError {
    pub iter: usize,
    pub min_rms: f64,
    pub max_rms: f64,
    pub mean_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingField {
    pub coords: Vec<[f64; 2]>,
    pub scales: Vec<Voigt>,
    /// Global error statistics before descent (iter 0) and after each pass.
    pub errors: Vec<IterationError>,
}

/// Groups a sample set into per-location pairs, in first-appearance order.
pub fn pairs_by_location(samples: &SampleSet) -> Vec<([f64; 2], Vec<Pair>)> {
    samples
        .group_by_coord()
        .into_iter()
        .map(|g| {
            let pairs = g
                .indices
                .iter()
                .map(|&i| Pair {
                    stress: samples.records[i].stress,
                    strain: samples.records[i].strain,
                })
                .collect();
            (g.coord, pairs)
        })
        .collect()
}

/// Runs the descent at every location from `S = (1, 1, 1)`.
pub fn compute_field(mpn: &MaterialPropertyNet, samples: &SampleSet, cfg: &GdConfig) -> Result<ScalingField> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("sample set is empty".into()));
    }
    let groups = pairs_by_location(samples);
    let mut coords = Vec::with_capacity(groups.len());
    let mut scales = Vec::with_capacity(groups.len());
    let mut curves: Vec<Vec<f64>> = vec![Vec::with_capacity(groups.len()); cfg.iterations + 1];
    for (coord, pairs) in &groups {
        let fit = descend(mpn, pairs, [1.0; 3], cfg, cfg.use_exact_gradient, *coord)?;
        coords.push(*coord);
        scales.push(fit.scale);
        for (curve, r) in curves.iter_mut().zip(fit.rms) {
            curve.push(r);
        }
    }
    let errors = curves
        .iter()
        .enumerate()
        .map(|(iter, v)| IterationError {
            iter,
            min_rms: v.iter().copied().fold(f64::INFINITY, f64::min),
            max_rms: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_rms: v.iter().sum::<f64>() / v.len() as f64,
        })
        .collect();
    Ok(ScalingField { coords, scales, errors })
}

impl ScalingField {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.scales.iter().map(|s| s[k]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_mm,y_mm,S1,S2,S3\n");
        for (c, s) in self.coords.iter().zip(&self.scales) {
            let _ = writeln!(out, "{},{},{},{},{}", c[0], c[1], s[0], s[1], s[2]);
        }
        out
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("iter,min_rms,max_rms,mean_rms\n");
        for e in &self.errors {
            let _ = writeln!(out, "{},{},{},{}", e.iter, e.min_rms, e.max_rms, e.mean_rms);
        }
        out
    }

    /// Parses a field file; error curves are not part of it.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some("x_mm,y_mm,S1,S2,S3") => {}
            other => return Err(Error::Parse(format!("bad scaling-field header {other:?}"))),
        }
        let mut coords = Vec::new();
        let mut scales = Vec::new();
        for (n, line) in lines.enumerate() {
            let v = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("scaling row {}: {e}", n + 1)))?;
            if v.len() != 5 {
                return Err(Error::Parse(format!("scaling row {} has {} fields", n + 1, v.len())));
            }
            if v[2..].iter().any(|&s| !(s > 0.0)) {
                return Err(Error::Parse(format!("scaling row {} has a non-positive scale", n + 1)));
            }
            coords.push([v[0], v[1]]);
            scales.push([v[2], v[3], v[4]]);
        }
        Ok(Self {
            coords,
            scales,
            errors: Vec::new(),
        })
    }

    pub fn save(&self, field_path: &Path, errors_path: Option<&Path>) -> Result<()> {
        fs::write(field_path, self.to_csv()).map_err(|e| Error::file(field_path, e))?;
        if let Some(p) = errors_path {
            fs::write(p, self.errors_csv()).map_err(|e| Error::file(p, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_csv(&text)
    }
}

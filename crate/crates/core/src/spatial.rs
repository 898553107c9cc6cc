//! Spatial network: normalized mesh coordinates → strain-scale vector.
//!
//! Inputs are mapped to `[-1, 1]²` around the mesh center; each output
//! channel is trained on an affine image of its scale component in
//! `[target_lo, target_hi]`, and decoded back through the inverse map.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{CoordNorm, QuadMesh};
use crate::mlp::{train, Activation, Init, MlpNet, Optimizer, TrainConfig};
use crate::scaling::ScalingField;
use crate::Voigt;

const FORMAT_TAG: &str = "sn 1";

/// Smallest decoded scale; matches the descent floor.
pub const DECODE_FLOOR: f64 = 1e-3;

pub const HIDDEN_LAYERS: usize = 5;
pub const HIDDEN_WIDTH: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnTrainSpec {
    pub iterations: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub target_lo: f64,
    pub target_hi: f64,
    pub seed: u64,
}

impl Default for SnTrainSpec {
    fn default() -> Self {
        Self::test1()
    }
}

impl SnTrainSpec {
    /// 10 iterations of 300 epochs.
    pub fn test1() -> Self {
        Self {
            iterations: 10,
            epochs: 300,
            learning_rate: 0.03,
            batch_size: None,
            target_lo: 0.1,
            target_hi: 0.8,
            seed: 7,
        }
    }

    /// 30 iterations of 600 epochs.
    pub fn test2() -> Self {
        Self {
            iterations: 30,
            epochs: 600,
            ..Self::test1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("SN training needs at least one iteration and epoch".into()));
        }
        if !(0.0 < self.target_lo && self.target_lo < self.target_hi && self.target_hi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "SN target range must satisfy 0 < lo < hi < 1, got [{}, {}]",
                self.target_lo, self.target_hi
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("SN learning rate must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("SN batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-channel map between scale values and network targets. The field's
/// minimum goes to `target_lo` and its maximum to `target_hi`; a constant
/// channel encodes to the midpoint and decodes to the constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputAffine {
    pub value_min: f64,
    pub value_max: f64,
    pub target_lo: f64,
    pub target_hi: f64,
}

impl OutputAffine {
    fn is_constant(&self) -> bool {
        self.value_max <= self.value_min
    }

    pub fn encode(&self, s: f64) -> f64 {
        if self.is_constant() {
            return 0.5 * (self.target_lo + self.target_hi);
        }
        self.target_lo + (s - self.value_min) / (self.value_max - self.value_min) * (self.target_hi - self.target_lo)
    }

    pub fn decode(&self, t: f64) -> f64 {
        if self.is_constant() {
            return self.value_min;
        }
        let s = self.value_min + (t - self.target_lo) / (self.target_hi - self.target_lo) * (self.value_max - self.value_min);
        s.max(DECODE_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialNet {
    net: MlpNet,
    affine: [OutputAffine; 3],
    norm: CoordNorm,
}

/// Layer sizes `[2, 25 × 5, 3]`.
pub fn layer_sizes() -> Vec<usize> {
    let mut sizes = vec![2];
    sizes.extend([HIDDEN_WIDTH; HIDDEN_LAYERS]);
    sizes.push(3);
    sizes
}

/// Logistic first and output layers, tanh in between.
pub fn layer_activations() -> Vec<Activation> {
    let mut acts = vec![Activation::Logistic];
    acts.extend([Activation::Tanh; HIDDEN_LAYERS - 1]);
    acts.push(Activation::Logistic);
    acts
}

impl SpatialNet {
    pub fn from_parts(net: MlpNet, affine: [OutputAffine; 3], norm: CoordNorm) -> Result<Self> {
        if net.n_inputs() != 2 || net.n_outputs() != 3 {
            return Err(Error::InvalidParameter(format!(
                "spatial network must map 2 inputs to 3 outputs, got {} → {}",
                net.n_inputs(),
                net.n_outputs()
            )));
        }
        if net.activations().last() != Some(&Activation::Logistic) {
            return Err(Error::InvalidParameter("spatial network output layer must be logistic".into()));
        }
        Ok(Self { net, affine, norm })
    }

    /// Trains a fresh network on a scaling field. Returns the network and the
    /// concatenated per-epoch loss trace.
    pub fn fit(field: &ScalingField, mesh: &QuadMesh, spec: &SnTrainSpec) -> Result<(Self, Vec<f64>)> {
        spec.validate()?;
        if field.is_empty() {
            return Err(Error::InvalidParameter("scaling field is empty".into()));
        }
        let norm = mesh.coord_norm();
        let affine: [OutputAffine; 3] = std::array::from_fn(|k| {
            let v = field.component(k);
            OutputAffine {
                value_min: v.iter().copied().fold(f64::INFINITY, f64::min),
                value_max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                target_lo: spec.target_lo,
                target_hi: spec.target_hi,
            }
        });
        let n = field.len();
        let mut x = Array2::zeros((n, 2));
        let mut y = Array2::zeros((n, 3));
        for i in 0..n {
            let p = norm.normalize(field.coords[i])?;
            x[[i, 0]] = p[0];
            x[[i, 1]] = p[1];
            for k in 0..3 {
                y[[i, k]] = affine[k].encode(field.scales[i][k]);
            }
        }
        let mut net = MlpNet::new(&layer_sizes(), &layer_activations(), true, Init::He, spec.seed)?;
        let cfg = TrainConfig {
            optimizer: Optimizer::adam(spec.learning_rate),
            epochs: spec.epochs,
            iterations: spec.iterations,
            batch_size: spec.batch_size,
            shuffle_seed: spec.seed.wrapping_add(1),
        };
        let trace = train(&mut net, x.view(), y.view(), &cfg)?;
        Ok((Self::from_parts(net, affine, norm)?, trace))
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn affine(&self) -> &[OutputAffine; 3] {
        &self.affine
    }

    pub fn coord_norm(&self) -> &CoordNorm {
        &self.norm
    }

    /// Decoded scale at a point given in mm.
    pub fn predict_scale(&self, p: [f64; 2]) -> Result<Voigt> {
        let q = self.norm.normalize(p)?;
        let out = self.net.forward(&q)?;
        Ok(std::array::from_fn(|k| self.affine[k].decode(out[k])))
    }

    /// Decoded scales for many points at once.
    pub fn predict_many(&self, points: &[[f64; 2]]) -> Result<Vec<Voigt>> {
        let mut x = Array2::zeros((points.len(), 2));
        for (i, p) in points.iter().enumerate() {
            let q = self.norm.normalize(*p)?;
            x[[i, 0]] = q[0];
            x[[i, 1]] = q[1];
        }
        let out = self.net.forward_batch(x.view())?;
        Ok(out
            .rows()
            .into_iter()
            .map(|r| std::array::from_fn(|k| self.affine[k].decode(r[k])))
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(
            out,
            "norm {} {} {} {}",
            self.norm.center[0], self.norm.center[1], self.norm.half_extent[0], self.norm.half_extent[1]
        );
        for a in &self.affine {
            let _ = writeln!(out, "affine {} {} {} {}", a.value_min, a.value_max, a.target_lo, a.target_hi);
        }
        out.push_str(&self.net.to_text());
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some(FORMAT_TAG) {
            return Err(Error::Parse(format!("not an `{FORMAT_TAG}` file")));
        }
        let mut numbers = |key: &str| -> Result<[f64; 4]> {
            let line = lines.next().unwrap_or_default();
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::Parse(format!("expected `{key}` line, found `{line}`")))?;
            let v = rest
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("`{key}` line: {e}")))?;
            v.try_into()
                .map_err(|_| Error::Parse(format!("`{key}` line needs 4 numbers")))
        };
        let n = numbers("norm")?;
        let norm = CoordNorm {
            center: [n[0], n[1]],
            half_extent: [n[2], n[3]],
        };
        let mut affine = [OutputAffine {
            value_min: 1.0,
            value_max: 1.0,
            target_lo: 0.1,
            target_hi: 0.8,
        }; 3];
        for a in &mut affine {
            let v = numbers("affine")?;
            *a = OutputAffine {
                value_min: v[0],
                value_max: v[1],
                target_lo: v[2],
                target_hi: v[3],
            };
        }
        let start = text
            .find("mlp ")
            .ok_or_else(|| Error::Parse("missing network section".into()))?;
        Self::from_parts(MlpNet::parse_text(&text[start..])?, affine, norm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_text(&text)
    }
}

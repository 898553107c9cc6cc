//! Material property network: a small tanh network mapping scaled strain to
//! scaled stress, pretrained on a homogeneous linear-elastic reference.
//!
//! Data flow for one element: `ε → ε ⊘ S → net → σ / (U·S^σ) → σ`, where `S`
//! is the local strain scale, `S^σ` the global stress scale and `U` the stress
//! unit in Pa per network unit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::samples::DEFAULT_STRESS_UNIT_PA;
use crate::fem::{mat_vec, plane_stress_matrix};
use crate::mlp::{train, Activation, Init, MlpNet, Optimizer, TrainConfig};
use crate::Voigt;

const FORMAT_TAG: &str = "mpn 1";

/// Scaled values beyond this magnitude count as extrapolation.
pub const SCALED_LIMIT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSpec {
    pub e_ref_pa: f64,
    pub poisson: f64,
    pub n_samples: usize,
    pub strain_range: f64,
    pub weight_range: f64,
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub seed: u64,
    pub stress_unit_pa: f64,
    /// `None` starts at 1 and raises it if the targets would exceed the scaled limit.
    pub stress_scale: Option<f64>,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        Self {
            e_ref_pa: 10e3,
            poisson: 0.5,
            n_samples: 5000,
            strain_range: 0.2,
            weight_range: 0.2,
            hidden: [6, 6],
            epochs: 50,
            seed: 1,
            stress_unit_pa: DEFAULT_STRESS_UNIT_PA,
            stress_scale: Some(2.0),
        }
    }
}

impl PretrainSpec {
    /// File name that identifies a cached network for these parameters.
    pub fn cache_name(&self) -> String {
        format!(
            "mpn_e{}_nu{}_n{}_r{}_w{}_h{}x{}_ep{}_seed{}_u{}_s{}.net",
            self.e_ref_pa,
            self.poisson,
            self.n_samples,
            self.strain_range,
            self.weight_range,
            self.hidden[0],
            self.hidden[1],
            self.epochs,
            self.seed,
            self.stress_unit_pa,
            self.stress_scale.map_or("auto".to_string(), |s| s.to_string()),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialPropertyNet {
    net: MlpNet,
    stress_scale: f64,
    stress_unit_pa: f64,
}

/// Pretraining inputs and targets in network units: `(strains, scaled stresses)`,
/// with the frame-invariance copy appended.
pub fn pretraining_set(spec: &PretrainSpec) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = plane_stress_matrix(spec.e_ref_pa, spec.poisson);
    let r = spec.strain_range;
    let n = spec.n_samples;
    let mut x = Array2::zeros((2 * n, 3));
    let mut y = Array2::zeros((2 * n, 3));
    for i in 0..n {
        let e: Voigt = std::array::from_fn(|_| rng.gen_range(-r..=r));
        let s = mat_vec(&c, &e).map(|v| v / spec.stress_unit_pa);
        for k in 0..3 {
            x[[i, k]] = e[k];
            y[[i, k]] = s[k];
        }
        let (es, ss) = ([e[1], e[0], e[2]], [s[1], s[0], s[2]]);
        for k in 0..3 {
            x[[n + i, k]] = es[k];
            y[[n + i, k]] = ss[k];
        }
    }
    (x, y)
}

impl MaterialPropertyNet {
    pub fn from_parts(net: MlpNet, stress_scale: f64, stress_unit_pa: f64) -> Result<Self> {
        if net.n_inputs() != 3 || net.n_outputs() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: net.n_inputs(),
            });
        }
        if !(stress_scale > 0.0 && stress_unit_pa > 0.0) {
            return Err(Error::InvalidParameter("stress scale and unit must be positive".into()));
        }
        Ok(Self {
            net,
            stress_scale,
            stress_unit_pa,
        })
    }

    pub fn pretrain(spec: &PretrainSpec) -> Result<Self> {
        if !(spec.e_ref_pa > 0.0) {
            return Err(Error::InvalidParameter("reference modulus must be positive".into()));
        }
        if spec.n_samples == 0 || !(spec.strain_range > 0.0) || !(spec.stress_unit_pa > 0.0) {
            return Err(Error::InvalidParameter(
                "pretraining needs samples, a positive strain range and a positive stress unit".into(),
            ));
        }
        let (x, mut y) = pretraining_set(spec);
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let stress_scale = match spec.stress_scale {
            Some(s) if s > 0.0 => {
                if peak / s >= 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "scaled pretraining stress reaches {:.3}; the tanh output cannot represent it \
                         (raise the stress scale or the stress unit)",
                        peak / s
                    )));
                }
                s
            }
            Some(s) => return Err(Error::InvalidParameter(format!("stress scale must be positive, got {s}"))),
            None if peak >= SCALED_LIMIT => 1.25 * peak,
            None => 1.0,
        };
        y.mapv_inplace(|v| v / stress_scale);
        let sizes = [3, spec.hidden[0], spec.hidden[1], 3];
        // bias-free tanh layers keep f(0) = 0 exactly and make f odd
        let mut net = MlpNet::new(
            &sizes,
            &[Activation::Tanh; 3],
            false,
            Init::Uniform {
                half_width: spec.weight_range,
            },
            spec.seed,
        )?;
        let cfg = TrainConfig {
            optimizer: Optimizer::rprop(),
            epochs: spec.epochs,
            iterations: 1,
            batch_size: None,
            shuffle_seed: spec.seed,
        };
        train(&mut net, x.view(), y.view(), &cfg)?;
        Self::from_parts(net, stress_scale, spec.stress_unit_pa)
    }

    pub fn net(&self) -> &MlpNet {
        &self.net
    }

    pub fn stress_scale(&self) -> f64 {
        self.stress_scale
    }

    pub fn stress_unit_pa(&self) -> f64 {
        self.stress_unit_pa
    }

    fn scaled_input(strain: &Voigt, scale: &Voigt) -> Result<Voigt> {
        if let Some(k) = (0..3).find(|&k| !(scale[k] > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "strain scale component {} must be positive, got {}",
                k + 1,
                scale[k]
            )));
        }
        Ok(std::array::from_fn(|k| strain[k] / scale[k]))
    }

    fn raw(&self, input: &Voigt) -> Voigt {
        let out = self.net.forward(input).expect("3 inputs");
        [out[0], out[1], out[2]]
    }

    /// Stress in Pa for a strain under the local scale.
    pub fn predict_stress(&self, strain: &Voigt, scale: &Voigt) -> Result<Voigt> {
        let f = self.raw(&Self::scaled_input(strain, scale)?);
        let g = self.stress_scale * self.stress_unit_pa;
        Ok(f.map(|v| g * v))
    }

    /// Network output (scaled units) with every scaled input component except
    /// `k` (0-based) set to zero.
    pub fn masked_predict(&self, strain: &Voigt, scale: &Voigt, k: usize) -> Result<Voigt> {
        if k > 2 {
            return Err(Error::InvalidParameter(format!("component index {k} out of range")));
        }
        let full = Self::scaled_input(strain, scale)?;
        let mut masked = [0.0; 3];
        masked[k] = full[k];
        Ok(self.raw(&masked))
    }

    /// Predicted stress (Pa) and `D = dσ/dε` (Pa) at a strain.
    pub fn tangent_stiffness(&self, strain: &Voigt, scale: &Voigt) -> Result<(Voigt, [[f64; 3]; 3])> {
        let input = Self::scaled_input(strain, scale)?;
        let (out, j) = self.net.jacobian(&input)?;
        let g = self.stress_scale * self.stress_unit_pa;
        let d = std::array::from_fn(|r| std::array::from_fn(|c| g * j[r][c] / scale[c]));
        Ok(([g * out[0], g * out[1], g * out[2]], d))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_TAG}");
        let _ = writeln!(out, "stress_unit_pa {}", self.stress_unit_pa);
        let _ = writeln!(out, "stress_scale {}", self.stress_scale);
        out.push_str(&self.net.to_text());
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut head = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if head.next() != Some(FORMAT_TAG) {
            return Err(Error::Parse(format!("not an `{FORMAT_TAG}` file")));
        }
        let mut value = |key: &str| -> Result<f64> {
            let line = head.next().unwrap_or_default();
            line.strip_prefix(key)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("expected `{key} <number>`, found `{line}`")))
        };
        let unit = value("stress_unit_pa")?;
        let scale = value("stress_scale")?;
        let start = text
            .find("mlp ")
            .ok_or_else(|| Error::Parse("missing network section".into()))?;
        Self::from_parts(MlpNet::parse_text(&text[start..])?, scale, unit)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::file(path, e))
    }

    /// Loads a network and checks its stress unit.
    pub fn load(path: &Path, expected_unit_pa: f64) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mpn = Self::parse_text(&text)?;
        if mpn.stress_unit_pa != expected_unit_pa {
            return Err(Error::UnitMismatch {
                expected: expected_unit_pa,
                found: mpn.stress_unit_pa,
            });
        }
        Ok(mpn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MaterialPropertyNet {
        let net = MlpNet::new(&[3, 6, 6, 3], &[Activation::Tanh; 3], false, Init::Uniform { half_width: 0.5 }, 3)
            .unwrap();
        MaterialPropertyNet::from_parts(net, 1.0, 1e4).unwrap()
    }

    #[test]
    fn pretraining_set_doubles_with_swap() {
        let spec = PretrainSpec::default();
        let (x, y) = pretraining_set(&spec);
        assert_eq!(x.nrows(), 10_000);
        assert_eq!(x[[5000, 0]], x[[0, 1]]);
        assert_eq!(y[[5000, 1]], y[[0, 0]]);
        assert_eq!(x[[5000, 2]], x[[0, 2]]);
        // 10 kPa, ν = 0.5, |ε| ≤ 0.2 keeps stresses under 0.4 units of 1e4 Pa
        assert!(y.iter().all(|v| v.abs() <= 0.4 + 1e-12));
    }

    #[test]
    fn zero_strain_gives_zero_stress() {
        let mpn = small();
        assert_eq!(mpn.predict_stress(&[0.0; 3], &[0.7, 1.3, 2.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn non_positive_scale_rejected() {
        assert!(small().predict_stress(&[0.01; 3], &[1.0, 0.0, 1.0]).is_err());
        assert!(small().masked_predict(&[0.01; 3], &[1.0; 3], 3).is_err());
    }

    #[test]
    fn masked_predict_on_pure_shear_matches_full() {
        let mpn = small();
        let e = [0.0, 0.0, 0.03];
        let full = mpn.predict_stress(&e, &[1.0; 3]).unwrap();
        let masked = mpn.masked_predict(&e, &[1.0; 3], 2).unwrap();
        for k in 0..3 {
            assert!((full[k] / 1e4 - masked[k]).abs() < 1e-15);
        }
        assert_eq!(mpn.masked_predict(&e, &[1.0; 3], 0).unwrap(), [0.0; 3]);
    }

    #[test]
    fn tangent_matches_finite_differences_and_scales_columns() {
        let mpn = small();
        let e = [0.02, -0.01, 0.005];
        let s = [2.0, 1.0, 1.0];
        let (_, d) = mpn.tangent_stiffness(&e, &s).unwrap();
        let h = 1e-7;
        for c in 0..3 {
            let mut ep = e;
            let mut em = e;
            ep[c] += h;
            em[c] -= h;
            let fp = mpn.predict_stress(&ep, &s).unwrap();
            let fm = mpn.predict_stress(&em, &s).unwrap();
            for r in 0..3 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((d[r][c] - fd).abs() <= 1e-5 * fd.abs().max(1.0));
            }
        }
        let (_, d0) = mpn.tangent_stiffness(&[0.0; 3], &[1.0; 3]).unwrap();
        let (_, d2) = mpn.tangent_stiffness(&[0.0; 3], &s).unwrap();
        for r in 0..3 {
            assert!((d2[r][0] - 0.5 * d0[r][0]).abs() < 1e-12 * d0[r][0].abs().max(1.0));
        }
    }

    #[test]
    fn saturating_fixed_scale_is_a_config_error() {
        let spec = PretrainSpec {
            stress_unit_pa: 1000.0,
            stress_scale: Some(1.0),
            epochs: 1,
            n_samples: 50,
            ..Default::default()
        };
        assert!(matches!(MaterialPropertyNet::pretrain(&spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn auto_scale_is_raised_for_large_targets() {
        let spec = PretrainSpec {
            stress_unit_pa: 1000.0,
            stress_scale: None,
            epochs: 1,
            n_samples: 50,
            ..Default::default()
        };
        let mpn = MaterialPropertyNet::pretrain(&spec).unwrap();
        assert!(mpn.stress_scale() > 1.0);
    }

    #[test]
    fn text_roundtrip() {
        let mpn = small();
        assert_eq!(MaterialPropertyNet::parse_text(&mpn.to_text()).unwrap(), mpn);
    }
}

//! Target Young's-modulus fields for the simulated phantoms and the
//! multiplicative uniform-noise corruption applied to them.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub mod synth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    GaussianInclusion,
    ThreeInclusion,
    RegionLabeled,
    ImageDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center_mm: [f64; 2],
    pub radius_mm: f64,
    pub modulus_pa: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center_mm[0];
        let dy = y - self.center_mm[1];
        dx * dx + dy * dy <= self.radius_mm * self.radius_mm
    }
}

/// Uniform multiplicative noise, `E' = E (1 + p)` with `p ~ U(-m, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub relative_magnitude: f64,
    pub rng_seed: u64,
    pub draw_id: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.relative_magnitude) {
            return Err(Error::InvalidParameter(format!(
                "noise magnitude must lie in [0, 1), got {}",
                self.relative_magnitude
            )));
        }
        Ok(())
    }

    /// Noise factor `p` at a site. Each (seed, draw, site) triple seeds its own stream.
    pub fn draw(&self, x: f64, y: f64) -> f64 {
        if self.relative_magnitude == 0.0 {
            return 0.0;
        }
        let mut key = splitmix(self.rng_seed);
        key = splitmix(key ^ self.draw_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        key = splitmix(key ^ x.to_bits());
        key = splitmix(key ^ y.to_bits().rotate_left(29));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let m = self.relative_magnitude;
        rng.gen_range(-m..=m)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
enum FieldKind {
    Gaussian {
        peak: f64,
        background: f64,
        center: [f64; 2],
        sigma: f64,
    },
    Discs {
        background: f64,
        discs: Vec<Disc>,
    },
    Labeled {
        labels: Grid,
        moduli: BTreeMap<i64, f64>,
    },
    Image {
        moduli: Grid,
    },
    Noisy {
        base: Box<ModulusField>,
        noise: NoiseSpec,
    },
}

/// A Young's-modulus distribution `E(x, y)` in Pa over `[0, width] × [0, height]` mm.
#[derive(Debug, Clone)]
pub struct ModulusField {
    width_mm: f64,
    height_mm: f64,
    kind: FieldKind,
}

fn check_domain(width_mm: f64, height_mm: f64) -> Result<()> {
    if !(width_mm > 0.0 && height_mm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "domain must have positive size, got {width_mm} x {height_mm} mm"
        )));
    }
    Ok(())
}

impl ModulusField {
    pub fn gaussian_inclusion(
        width_mm: f64,
        height_mm: f64,
        peak: f64,
        background: f64,
        center: [f64; 2],
        sigma: f64,
    ) -> Result<Self> {
        check_domain(width_mm, height_mm)?;
        if !(background > 0.0 && peak >= background && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gaussian inclusion needs peak >= background > 0 and sigma > 0 \
                 (peak {peak}, background {background}, sigma {sigma})"
            )));
        }
        Ok(Self {
            width_mm,
            height_mm,
            kind: FieldKind::Gaussian {
                peak,
                background,
                center,
                sigma,
            },
        })
    }

    /// Piecewise-constant discs; where discs overlap the smallest one wins.
    pub fn three_inclusion(
        width_mm: f64,
        height_mm: f64,
        background: f64,
        discs: Vec<Disc>,
    ) -> Result<Self> {
        check_domain(width_mm, height_mm)?;
        if background <= 0.0 {
            return Err(Error::InvalidParameter("background modulus must be positive".into()));
        }
        for (i, d) in discs.iter().enumerate() {
            if d.modulus_pa <= 0.0 || d.radius_mm <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "disc {i} needs positive modulus and radius"
                )));
            }
            let [cx, cy] = d.center_mm;
            if cx - d.radius_mm < 0.0
                || cy - d.radius_mm < 0.0
                || cx + d.radius_mm > width_mm
                || cy + d.radius_mm > height_mm
            {
                return Err(Error::InvalidGeometry(format!(
                    "disc {i} at ({cx}, {cy}) r={} leaves the {width_mm} x {height_mm} mm domain",
                    d.radius_mm
                )));
            }
        }
        Ok(Self {
            width_mm,
            height_mm,
            kind: FieldKind::Discs { background, discs },
        })
    }

    /// Linear intensity-to-modulus map with bilinear interpolation between
    /// pixel centers. A constant image maps to the midpoint of the range.
    pub fn image_derived(
        width_mm: f64,
        height_mm: f64,
        intensity: &Grid,
        e_min: f64,
        e_max: f64,
    ) -> Result<Self> {
        check_domain(width_mm, height_mm)?;
        if !(e_max > e_min && e_min > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "image-derived field needs e_max > e_min > 0 (got {e_min}, {e_max})"
            )));
        }
        let lo = intensity.min();
        let hi = intensity.max();
        let moduli = if hi > lo {
            intensity.map(|v| e_min + (v - lo) / (hi - lo) * (e_max - e_min))
        } else {
            intensity.map(|_| 0.5 * (e_min + e_max))
        };
        Ok(Self {
            width_mm,
            height_mm,
            kind: FieldKind::Image { moduli },
        })
    }

    /// Nearest-pixel lookup of a label map.
    pub fn region_labeled(
        width_mm: f64,
        height_mm: f64,
        labels: &Grid,
        moduli: &BTreeMap<i64, f64>,
    ) -> Result<Self> {
        check_domain(width_mm, height_mm)?;
        for &v in labels.data() {
            let label = v.round() as i64;
            match moduli.get(&label) {
                Some(&e) if e > 0.0 => {}
                Some(&e) => {
                    return Err(Error::InvalidConfig(format!(
                        "label {label} has non-positive modulus {e}"
                    )))
                }
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "label {label} has no modulus entry"
                    )))
                }
            }
        }
        Ok(Self {
            width_mm,
            height_mm,
            kind: FieldKind::Labeled {
                labels: labels.clone(),
                moduli: moduli.clone(),
            },
        })
    }

    pub fn width_mm(&self) -> f64 {
        self.width_mm
    }

    pub fn height_mm(&self) -> f64 {
        self.height_mm
    }

    pub fn model_tag(&self) -> ModelTag {
        match &self.kind {
            FieldKind::Gaussian { .. } => ModelTag::GaussianInclusion,
            FieldKind::Discs { .. } => ModelTag::ThreeInclusion,
            FieldKind::Labeled { .. } => ModelTag::RegionLabeled,
            FieldKind::Image { .. } => ModelTag::ImageDerived,
            FieldKind::Noisy { base, .. } => base.model_tag(),
        }
    }

    /// Shape of the pixel grid backing the field, if any.
    pub fn native_grid(&self) -> Option<(usize, usize)> {
        match &self.kind {
            FieldKind::Labeled { labels, .. } => Some((labels.rows(), labels.cols())),
            FieldKind::Image { moduli } => Some((moduli.rows(), moduli.cols())),
            FieldKind::Noisy { base, .. } => base.native_grid(),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (self.width_mm, self.height_mm);
        match &self.kind {
            FieldKind::Gaussian {
                peak,
                background,
                center,
                sigma,
            } => {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                background + (peak - background) * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            FieldKind::Discs { background, discs } => discs
                .iter()
                .filter(|d| d.contains(x, y))
                .min_by(|a, b| a.radius_mm.total_cmp(&b.radius_mm))
                .map_or(*background, |d| d.modulus_pa),
            FieldKind::Labeled { labels, moduli } => {
                let label = labels.sample_nearest(x, y, w, h).round() as i64;
                moduli[&label]
            }
            FieldKind::Image { moduli } => moduli.sample_bilinear(x, y, w, h),
            FieldKind::Noisy { base, noise } => base.eval(x, y) * (1.0 + noise.draw(x, y)),
        }
    }

    /// Field evaluated at each pixel center of a `rows × cols` grid over the domain.
    pub fn rasterize(&self, rows: usize, cols: usize) -> Result<Grid> {
        let probe = Grid::filled(rows, cols, 0.0)?;
        Grid::from_fn(rows, cols, |r, c| {
            let (x, y) = probe.pixel_center(r, c, self.width_mm, self.height_mm);
            self.eval(x, y)
        })
    }
}

/// Corrupts a field with per-site uniform noise; `m = 0` returns the field unchanged.
pub fn apply_noise(field: &ModulusField, spec: NoiseSpec) -> Result<ModulusField> {
    spec.validate()?;
    if spec.relative_magnitude == 0.0 {
        return Ok(field.clone());
    }
    Ok(ModulusField {
        width_mm: field.width_mm,
        height_mm: field.height_mm,
        kind: FieldKind::Noisy {
            base: Box::new(field.clone()),
            noise: spec,
        },
    })
}

/// Peak signal-to-noise ratio in dB: `20 log10(max clean / rms(noisy - clean))`.
pub fn psnr(clean: &[f64], noisy: &[f64]) -> f64 {
    let peak = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mse = clean
        .iter()
        .zip(noisy)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / clean.len() as f64;
    20.0 * (peak / mse.sqrt()).log10()
}

/// Where a grayscale or label grid comes from: a file path or a built-in stand-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    Builtin(String),
    File(String),
}

impl GridSource {
    pub fn load(&self, base_dir: Option<&Path>) -> Result<Grid> {
        match self {
            GridSource::Builtin(name) => synth::builtin_grid(name),
            GridSource::File(p) => {
                let path = match base_dir {
                    Some(dir) if Path::new(p).is_relative() => dir.join(p),
                    _ => Path::new(p).to_path_buf(),
                };
                Grid::read(&path)
            }
        }
    }
}

fn default_extent() -> f64 {
    50.0
}

fn default_sigma() -> f64 {
    6.0
}

/// Declarative phantom description as stored in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomSpec {
    GaussianInclusion {
        #[serde(default = "default_extent")]
        width_mm: f64,
        #[serde(default = "default_extent")]
        height_mm: f64,
        peak_pa: f64,
        background_pa: f64,
        #[serde(default)]
        center_mm: Option<[f64; 2]>,
        #[serde(default = "default_sigma")]
        sigma_mm: f64,
    },
    ThreeInclusion {
        #[serde(default = "default_extent")]
        width_mm: f64,
        #[serde(default = "default_extent")]
        height_mm: f64,
        background_pa: f64,
        discs: Vec<Disc>,
    },
    ImageDerived {
        #[serde(default = "default_extent")]
        width_mm: f64,
        #[serde(default = "default_extent")]
        height_mm: f64,
        image: GridSource,
        e_min_pa: f64,
        e_max_pa: f64,
    },
    RegionLabeled {
        #[serde(default = "default_extent")]
        width_mm: f64,
        #[serde(default = "default_extent")]
        height_mm: f64,
        labels: GridSource,
        moduli_pa: BTreeMap<String, f64>,
    },
}

impl PhantomSpec {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ModulusField> {
        match self {
            PhantomSpec::GaussianInclusion {
                width_mm,
                height_mm,
                peak_pa,
                background_pa,
                center_mm,
                sigma_mm,
            } => ModulusField::gaussian_inclusion(
                *width_mm,
                *height_mm,
                *peak_pa,
                *background_pa,
                center_mm.unwrap_or([width_mm / 2.0, height_mm / 2.0]),
                *sigma_mm,
            ),
            PhantomSpec::ThreeInclusion {
                width_mm,
                height_mm,
                background_pa,
                discs,
            } => ModulusField::three_inclusion(*width_mm, *height_mm, *background_pa, discs.clone()),
            PhantomSpec::ImageDerived {
                width_mm,
                height_mm,
                image,
                e_min_pa,
                e_max_pa,
            } => {
                let grid = image.load(base_dir)?;
                ModulusField::image_derived(*width_mm, *height_mm, &grid, *e_min_pa, *e_max_pa)
            }
            PhantomSpec::RegionLabeled {
                width_mm,
                height_mm,
                labels,
                moduli_pa,
            } => {
                let grid = labels.load(base_dir)?;
                let moduli = moduli_pa
                    .iter()
                    .map(|(k, &v)| {
                        k.trim()
                            .parse::<i64>()
                            .map(|label| (label, v))
                            .map_err(|e| Error::InvalidConfig(format!("label key `{k}`: {e}")))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                ModulusField::region_labeled(*width_mm, *height_mm, &grid, &moduli)
            }
        }
    }

    /// Model 1: 30 kPa Gaussian inclusion centered in a 10 kPa, 50 × 50 mm block.
    pub fn model1() -> Self {
        PhantomSpec::GaussianInclusion {
            width_mm: 50.0,
            height_mm: 50.0,
            peak_pa: 30e3,
            background_pa: 10e3,
            center_mm: None,
            sigma_mm: default_sigma(),
        }
    }

    /// Model 2: two 30 kPa discs and one 15 kPa disc (one 30 kPa disc nested in it)
    /// in an 8 kPa background, all centered on the horizontal mid-line.
    pub fn model2() -> Self {
        PhantomSpec::ThreeInclusion {
            width_mm: 50.0,
            height_mm: 50.0,
            background_pa: 8e3,
            discs: synth::model2_discs().to_vec(),
        }
    }

    /// Model 3: seven-region kidney-in-gelatin label map (built-in stand-in).
    pub fn model3() -> Self {
        PhantomSpec::RegionLabeled {
            width_mm: 50.0,
            height_mm: 50.0,
            labels: GridSource::Builtin("kidney".into()),
            moduli_pa: synth::kidney_moduli()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    /// Model 4: abdominal-section grayscale stand-in mapped to 8-30 kPa.
    pub fn model4() -> Self {
        PhantomSpec::ImageDerived {
            width_mm: 50.0,
            height_mm: 50.0,
            image: GridSource::Builtin("abdomen".into()),
            e_min_pa: 8e3,
            e_max_pa: 30e3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model1() -> ModulusField {
        PhantomSpec::model1().build(None).unwrap()
    }

    #[test]
    fn gaussian_peak_and_far_field() {
        let f = model1();
        assert!((f.eval(25.0, 25.0) - 30e3).abs() < 1e-9);
        let far = ModulusField::gaussian_inclusion(500.0, 500.0, 30e3, 10e3, [25.0, 25.0], 6.0)
            .unwrap();
        assert!((far.eval(400.0, 400.0) - 10e3).abs() / 10e3 < 0.01);
        assert_eq!(far.model_tag(), ModelTag::GaussianInclusion);
    }

    #[test]
    fn gaussian_degenerate_is_constant() {
        let f = ModulusField::gaussian_inclusion(50.0, 50.0, 10e3, 10e3, [25.0, 25.0], 6.0)
            .unwrap();
        for &(x, y) in &[(0.0, 0.0), (25.0, 25.0), (40.0, 3.0)] {
            assert_eq!(f.eval(x, y), 10e3);
        }
    }

    #[test]
    fn gaussian_rejects_bad_parameters() {
        assert!(ModulusField::gaussian_inclusion(50.0, 50.0, 30e3, 10e3, [25.0, 25.0], 0.0).is_err());
        assert!(ModulusField::gaussian_inclusion(50.0, 50.0, 30e3, -1.0, [25.0, 25.0], 6.0).is_err());
    }

    #[test]
    fn three_inclusion_lookup() {
        let f = PhantomSpec::model2().build(None).unwrap();
        assert_eq!(f.eval(2.0, 2.0), 8e3);
        let discs = synth::model2_discs();
        // nested inner disc beats the enclosing softer disc
        let inner = discs.iter().min_by(|a, b| a.radius_mm.total_cmp(&b.radius_mm)).unwrap();
        assert_eq!(f.eval(inner.center_mm[0], inner.center_mm[1]), 30e3);
        let empty = ModulusField::three_inclusion(50.0, 50.0, 8e3, vec![]).unwrap();
        assert_eq!(empty.eval(25.0, 25.0), 8e3);
    }

    #[test]
    fn disc_outside_domain_rejected() {
        let d = Disc {
            center_mm: [48.0, 25.0],
            radius_mm: 5.0,
            modulus_pa: 15e3,
        };
        assert!(matches!(
            ModulusField::three_inclusion(50.0, 50.0, 8e3, vec![d]),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn image_derived_maps_intensity_range() {
        let img = Grid::new(2, 2, vec![0.0, 10.0, 20.0, 40.0]).unwrap();
        let f = ModulusField::image_derived(50.0, 50.0, &img, 8e3, 30e3).unwrap();
        assert!((f.eval(12.5, 37.5) - 8e3).abs() < 1e-9);
        assert!((f.eval(37.5, 12.5) - 30e3).abs() < 1e-9);
        let mean_corners = (8e3 + 13.5e3 + 19e3 + 30e3) / 4.0;
        assert!((f.eval(25.0, 25.0) - mean_corners).abs() < 1e-9);
    }

    #[test]
    fn constant_image_gives_midpoint() {
        let img = Grid::filled(3, 3, 7.0).unwrap();
        let f = ModulusField::image_derived(50.0, 50.0, &img, 8e3, 30e3).unwrap();
        assert_eq!(f.eval(10.0, 10.0), 19e3);
    }

    #[test]
    fn labeled_step_and_missing_label() {
        let labels = Grid::new(1, 2, vec![0.0, 1.0]).unwrap();
        let moduli = BTreeMap::from([(0, 10e3), (1, 20e3)]);
        let f = ModulusField::region_labeled(50.0, 50.0, &labels, &moduli).unwrap();
        assert_eq!(f.eval(24.999, 10.0), 10e3);
        assert_eq!(f.eval(25.001, 10.0), 20e3);
        let single = ModulusField::region_labeled(
            50.0,
            50.0,
            &Grid::filled(4, 4, 0.0).unwrap(),
            &BTreeMap::from([(0, 10e3)]),
        )
        .unwrap();
        assert_eq!(single.eval(3.0, 44.0), 10e3);
        let partial = BTreeMap::from([(0, 10e3)]);
        assert!(matches!(
            ModulusField::region_labeled(50.0, 50.0, &labels, &partial),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn kidney_field_matches_label_map() {
        let f = PhantomSpec::model3().build(None).unwrap();
        let labels = synth::builtin_grid("kidney").unwrap();
        let moduli = synth::kidney_moduli();
        let distinct: std::collections::BTreeSet<i64> =
            labels.data().iter().map(|&v| v as i64).collect();
        assert_eq!(distinct.len(), 7);
        for r in 0..labels.rows() {
            for c in 0..labels.cols() {
                let (x, y) = labels.pixel_center(r, c, 50.0, 50.0);
                assert_eq!(f.eval(x, y), moduli[&(labels.get(r, c) as i64)]);
            }
        }
    }

    #[test]
    fn noise_bounds_identity_and_determinism() {
        let f = ModulusField::gaussian_inclusion(50.0, 50.0, 10e3, 10e3, [25.0, 25.0], 6.0)
            .unwrap();
        let spec = NoiseSpec {
            relative_magnitude: 0.1,
            rng_seed: 11,
            draw_id: 1,
        };
        let noisy = apply_noise(&f, spec).unwrap();
        let again = apply_noise(&f, spec).unwrap();
        for i in 0..500 {
            let x = 0.1 * i as f64;
            let y = 50.0 - 0.07 * i as f64;
            let e = noisy.eval(x, y);
            assert!((9e3..=11e3).contains(&e));
            assert_eq!(e.to_bits(), again.eval(x, y).to_bits());
        }
        let clean = apply_noise(&f, NoiseSpec { relative_magnitude: 0.0, ..spec }).unwrap();
        assert_eq!(clean.eval(3.0, 4.0), f.eval(3.0, 4.0));
        assert!(apply_noise(&f, NoiseSpec { relative_magnitude: 1.0, ..spec }).is_err());
    }

    #[test]
    fn noise_draws_are_uncorrelated() {
        let a = NoiseSpec {
            relative_magnitude: 0.3,
            rng_seed: 5,
            draw_id: 1,
        };
        let b = NoiseSpec { draw_id: 2, ..a };
        let sites: Vec<(f64, f64)> = (0..40)
            .flat_map(|i| (0..40).map(move |j| (i as f64 * 1.25 + 0.3, j as f64 * 1.25 + 0.3)))
            .collect();
        let pa: Vec<f64> = sites.iter().map(|&(x, y)| a.draw(x, y)).collect();
        let pb: Vec<f64> = sites.iter().map(|&(x, y)| b.draw(x, y)).collect();
        let n = pa.len() as f64;
        let (ma, mb) = (pa.iter().sum::<f64>() / n, pb.iter().sum::<f64>() / n);
        let cov: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = pa.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = pb.iter().map(|y| (y - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.1, "correlation {corr}");
    }

    #[test]
    fn spec_json_roundtrip() {
        for spec in [
            PhantomSpec::model1(),
            PhantomSpec::model2(),
            PhantomSpec::model3(),
            PhantomSpec::model4(),
        ] {
            let text = serde_json::to_string(&spec).unwrap();
            let back: PhantomSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(spec, back);
        }
    }
}

//! End-to-end experiments: phantom → FE data → material network → scaling
//! field → spatial network → image → score, with every intermediate written
//! to the run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_and_solve, augment_frame_invariance, dual_fea_noise_dataset, extract_samples, FeOptions, LoadProgram,
    SampleSet,
};
use crate::mesh::conforming::{generate, ConformingLayout};
use crate::mesh::QuadMesh;
use crate::mpn::{MaterialPropertyNet, PretrainSpec};
use crate::phantom::{Disc, ModulusField, NoiseSpec, PhantomSpec};
use crate::recon::{reconstruct, render, score, Cann, ReconSpec, Window};
use crate::scaling::{compute_field, GdConfig, ScalingField};
use crate::spatial::{SnTrainSpec, SpatialNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Rectilinear {
        width_mm: f64,
        height_mm: f64,
        nodes_per_edge: usize,
    },
    /// Conforming mesh built around the discs of a three-inclusion phantom.
    ThreeInclusionConforming,
    /// Mesh text file, relative paths resolved against the config directory.
    File { path: String },
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec::Rectilinear {
            width_mm: 50.0,
            height_mm: 50.0,
            nodes_per_edge: 35,
        }
    }
}

impl MeshSpec {
    pub fn build(&self, phantom: &PhantomSpec, base_dir: Option<&Path>) -> Result<QuadMesh> {
        match self {
            MeshSpec::Rectilinear {
                width_mm,
                height_mm,
                nodes_per_edge,
            } => QuadMesh::rectilinear(*width_mm, *height_mm, *nodes_per_edge),
            MeshSpec::ThreeInclusionConforming => {
                let discs: [Disc; 3] = match phantom {
                    PhantomSpec::ThreeInclusion { discs, .. } => discs.clone().try_into().map_err(|_| {
                        Error::InvalidConfig("a conforming mesh needs exactly three discs".into())
                    })?,
                    _ => {
                        return Err(Error::InvalidConfig(
                            "a conforming mesh needs a three-inclusion phantom".into(),
                        ))
                    }
                };
                generate(&ConformingLayout::three_inclusion(&discs))
            }
            MeshSpec::File { path } => {
                let p = match base_dir {
                    Some(dir) if Path::new(path).is_relative() => dir.join(path),
                    _ => PathBuf::from(path),
                };
                QuadMesh::load(&p)
            }
        }
    }
}

/// Two independently corrupted analyses supply stresses and strains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub magnitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub phantom: PhantomSpec,
    pub mesh: MeshSpec,
    pub load: LoadProgram,
    pub fe: FeOptions,
    pub noise: Option<NoiseConfig>,
    /// Negate shear in the swapped copy of each sample.
    pub flip_shear: bool,
    pub mpn: PretrainSpec,
    pub gd: GdConfig,
    pub sn: SnTrainSpec,
    pub recon: ReconSpec,
    /// Published error for this case, reported alongside the measured one.
    pub reference: Option<ErrorStats>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        preset("model1_test1").expect("built-in preset")
    }
}

impl ExperimentConfig {
    /// Overrides the noise and spatial-network seeds. The material network
    /// seed is left alone so cached pretraining stays shared.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sn.seed = seed;
        if let Some(n) = &mut self.noise {
            n.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.load.validate()?;
        self.gd.validate()?;
        self.sn.validate()?;
        self.recon.validate()?;
        if let Some(n) = self.noise {
            NoiseSpec {
                relative_magnitude: n.magnitude,
                rng_seed: n.seed,
                draw_id: 1,
            }
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

const PRESETS: [&str; 13] = [
    "model1_test1",
    "model1_test2",
    "model2_test1",
    "model2_test2",
    "model2_mesh2_test1",
    "model3_test1",
    "model3_test2",
    "model3_noise10_test1",
    "model3_noise10_test2",
    "model3_noise30_test1",
    "model3_noise30_test2",
    "model4_test1",
    "model4_test2",
];

pub fn list_presets() -> &'static [&'static str] {
    &PRESETS
}

pub const DEFAULT_NOISE_SEED: u64 = 11;

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let (phantom, mesh, noise, sn, reference) = match name {
        "model1_test1" => (PhantomSpec::model1(), MeshSpec::default(), None, SnTrainSpec::test1(), (0.0166, 0.0099)),
        "model1_test2" => (PhantomSpec::model1(), MeshSpec::default(), None, SnTrainSpec::test2(), (0.0146, 0.0076)),
        "model2_test1" => (PhantomSpec::model2(), MeshSpec::default(), None, SnTrainSpec::test1(), (0.0131, 0.0172)),
        "model2_test2" => (PhantomSpec::model2(), MeshSpec::default(), None, SnTrainSpec::test2(), (0.0140, 0.0190)),
        "model2_mesh2_test1" => (
            PhantomSpec::model2(),
            MeshSpec::ThreeInclusionConforming,
            None,
            SnTrainSpec::test1(),
            (0.0258, 0.0334),
        ),
        "model3_test1" => (PhantomSpec::model3(), MeshSpec::default(), None, SnTrainSpec::test1(), (0.0504, 0.0142)),
        "model3_test2" => (PhantomSpec::model3(), MeshSpec::default(), None, SnTrainSpec::test2(), (0.0493, 0.0131)),
        "model3_noise10_test1" => (PhantomSpec::model3(), MeshSpec::default(), Some(0.1), SnTrainSpec::test1(), (0.0534, 0.0198)),
        "model3_noise10_test2" => (PhantomSpec::model3(), MeshSpec::default(), Some(0.1), SnTrainSpec::test2(), (0.0487, 0.0230)),
        "model3_noise30_test1" => (PhantomSpec::model3(), MeshSpec::default(), Some(0.3), SnTrainSpec::test1(), (0.0418, 0.0252)),
        "model3_noise30_test2" => (PhantomSpec::model3(), MeshSpec::default(), Some(0.3), SnTrainSpec::test2(), (0.0549, 0.0399)),
        "model4_test1" => (PhantomSpec::model4(), MeshSpec::default(), None, SnTrainSpec::test1(), (0.0658, 0.0755)),
        "model4_test2" => (PhantomSpec::model4(), MeshSpec::default(), None, SnTrainSpec::test2(), (0.0485, 0.0518)),
        _ => return None,
    };
    Some(ExperimentConfig {
        name: name.to_string(),
        phantom,
        mesh,
        load: LoadProgram::default(),
        fe: FeOptions::default(),
        noise: noise.map(|magnitude| NoiseConfig {
            magnitude,
            seed: DEFAULT_NOISE_SEED,
        }),
        flip_shear: false,
        mpn: PretrainSpec::default(),
        gd: GdConfig::default(),
        sn,
        recon: ReconSpec::default(),
        reference: Some(ErrorStats {
            mean: reference.0,
            std: reference.1,
        }),
    })
}

/// Scale-descent error summary (Pa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentSummary {
    pub mean_rms_initial: f64,
    /// Mean RMS after 50 passes, when the run has that many.
    pub mean_rms_at_50: Option<f64>,
    pub mean_rms_final: f64,
}

/// Deterministic outcome of a run; wall-clock times live in [`Timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub error: ErrorStats,
    pub reference: Option<ErrorStats>,
    pub n_records: usize,
    pub n_locations: usize,
    pub probe_displacement_mm: f64,
    pub stress_unit_pa: f64,
    pub mpn_stress_scale: f64,
    pub mpn_seed: u64,
    pub sn_seed: u64,
    pub noise_seed: Option<u64>,
    pub descent: DescentSummary,
    /// `[min, max]` of each scale component.
    pub scale_range: [[f64; 2]; 3],
    pub image_range_pa: [f64; 2],
    pub invalid_pixels: usize,
    pub scoring_grid: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<StageTime>,
}

impl Timings {
    pub fn get(&self, stage: &str) -> Option<f64> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.seconds)
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory holding pretrained material networks keyed by their spec.
    pub mpn_cache: Option<PathBuf>,
    /// Base for relative paths inside the config.
    pub base_dir: Option<PathBuf>,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Timings,
    pub samples: SampleSet,
    pub field: ScalingField,
    pub cann: Cann,
}

fn stage<T>(name: &'static str, timings: &mut Timings, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    timings.stages.push(StageTime {
        stage: name.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Loads a cached material network or pretrains and caches one.
pub fn pretrained_mpn(spec: &PretrainSpec, cache: Option<&Path>) -> Result<MaterialPropertyNet> {
    let Some(dir) = cache else {
        return MaterialPropertyNet::pretrain(spec);
    };
    let path = dir.join(spec.cache_name());
    if path.exists() {
        return MaterialPropertyNet::load(&path, spec.stress_unit_pa);
    }
    let mpn = MaterialPropertyNet::pretrain(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    // write-then-rename so concurrent runs never read a partial file
    let tmp = dir.join(format!("{}.{}.tmp", spec.cache_name(), std::process::id()));
    mpn.save(&tmp)?;
    fs::rename(&tmp, &path).map_err(|e| Error::file(&path, e))?;
    Ok(mpn)
}

/// Simulated data set for a config: one analysis, or two noisy ones.
pub fn simulate_dataset(cfg: &ExperimentConfig, target: &ModulusField, mesh: &QuadMesh) -> Result<(SampleSet, f64)> {
    let mut clean = mesh.clone();
    clean.assign_modulus(target);
    let sol = assemble_and_solve(&clean, &cfg.load, &cfg.fe)?;
    let displacement = sol.probe_displacement(cfg.load.n_steps - 1);
    let raw = match cfg.noise {
        None => extract_samples(&clean, &sol, cfg.fe.poisson),
        Some(n) => dual_fea_noise_dataset(
            target,
            NoiseSpec {
                relative_magnitude: n.magnitude,
                rng_seed: n.seed,
                draw_id: 1,
            },
            mesh,
            &cfg.load,
            &cfg.fe,
        )?,
    };
    let mut set = augment_frame_invariance(&raw, cfg.flip_shear);
    set.stress_unit_pa = cfg.mpn.stress_unit_pa;
    Ok((set, displacement))
}

/// Runs every stage and writes the artifacts into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    write(&out_dir.join("config.json"), cfg.to_json())?;
    let base = opts.base_dir.as_deref();
    let mut timings = Timings::default();

    let (target, mesh) = stage("phantom", &mut timings, || {
        let target = cfg.phantom.build(base)?;
        let mut mesh = cfg.mesh.build(&cfg.phantom, base)?;
        mesh.assign_modulus(&target);
        mesh.save(&out_dir.join("mesh.txt"))?;
        let (rows, cols) = target.native_grid().unwrap_or((cfg.recon.rows, cfg.recon.cols));
        write(&out_dir.join("target.txt"), target.rasterize(rows, cols)?.to_text())?;
        Ok((target, mesh))
    })?;

    let (samples, displacement) = stage("fea", &mut timings, || {
        let (set, d) = simulate_dataset(cfg, &target, &mesh)?;
        set.save(&out_dir.join("dataset.csv"))?;
        Ok((set, d))
    })?;

    let mpn = stage("mpn", &mut timings, || {
        let mpn = pretrained_mpn(&cfg.mpn, opts.mpn_cache.as_deref())?;
        mpn.save(&out_dir.join("mpn.net"))?;
        Ok(mpn)
    })?;

    let field = stage("scale", &mut timings, || {
        let field = compute_field(&mpn, &samples, &cfg.gd)?;
        field.save(&out_dir.join("scaling.csv"), Some(&out_dir.join("scaling_errors.csv")))?;
        Ok(field)
    })?;

    let sn = stage("sn", &mut timings, || {
        let (sn, trace) = SpatialNet::fit(&field, &mesh, &cfg.sn)?;
        sn.save(&out_dir.join("sn.net"))?;
        let mut loss = String::from("epoch,loss\n");
        for (i, l) in trace.iter().enumerate() {
            let _ = writeln!(loss, "{},{}", i + 1, l);
        }
        write(&out_dir.join("sn_loss.csv"), loss)?;
        Ok(sn)
    })?;
    let cann = Cann::new(mpn, sn);

    let (image, scored) = stage("recon", &mut timings, || {
        let (lo, hi) = mesh.bbox();
        let image = reconstruct(&cann, (lo, hi), &cfg.recon)?;
        let window = Window {
            lo_pa: target.rasterize(cfg.recon.rows, cfg.recon.cols)?.min(),
            hi_pa: target.rasterize(cfg.recon.rows, cfg.recon.cols)?.max(),
        };
        render(&image, out_dir, "image", Some(window))?;
        let scored = score(&image, &target)?;
        write(&out_dir.join("error_map.txt"), scored.error_map.to_text())?;
        Ok((image, scored))
    })?;

    let curve = |i: usize| field.errors.get(i).map(|e| e.mean_rms);
    let range = |k: usize| {
        let v = field.component(k);
        [
            v.iter().copied().fold(f64::INFINITY, f64::min),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ]
    };
    let report = RunReport {
        name: cfg.name.clone(),
        error: ErrorStats {
            mean: scored.mean,
            std: scored.std,
        },
        reference: cfg.reference,
        n_records: samples.len() / 2,
        n_locations: field.len(),
        probe_displacement_mm: displacement,
        stress_unit_pa: cann.stress_unit_pa(),
        mpn_stress_scale: cann.mpn.stress_scale(),
        mpn_seed: cfg.mpn.seed,
        sn_seed: cfg.sn.seed,
        noise_seed: cfg.noise.map(|n| n.seed),
        descent: DescentSummary {
            mean_rms_initial: curve(0).unwrap_or(f64::NAN),
            mean_rms_at_50: curve(50),
            mean_rms_final: curve(cfg.gd.iterations).unwrap_or(f64::NAN),
        },
        scale_range: [range(0), range(1), range(2)],
        image_range_pa: [image.grid.min(), image.grid.max()],
        invalid_pixels: image.invalid_pixels(),
        scoring_grid: [scored.error_map.rows(), scored.error_map.cols()],
    };
    write(&out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    write(&out_dir.join("timings.json"), serde_json::to_string_pretty(&timings)?)?;
    write(&out_dir.join("summary.txt"), summary(&report, &timings))?;
    Ok(RunOutcome {
        report,
        timings,
        samples,
        field,
        cann,
    })
}

/// Human-readable digest of a run.
pub fn summary(report: &RunReport, timings: &Timings) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run: {}", report.name);
    let _ = writeln!(s, "modulus error: {:.4} ± {:.4}", report.error.mean, report.error.std);
    if let Some(r) = report.reference {
        let _ = writeln!(s, "reference:     {:.4} ± {:.4}", r.mean, r.std);
    }
    let _ = writeln!(
        s,
        "records: {} ({} locations), probe displacement {:.3} mm",
        report.n_records, report.n_locations, report.probe_displacement_mm
    );
    let _ = writeln!(
        s,
        "stress unit {} Pa, stress scale {}",
        report.stress_unit_pa, report.mpn_stress_scale
    );
    let d = report.descent;
    let _ = write!(s, "descent mean RMS (Pa): start {:.3}", d.mean_rms_initial);
    if let Some(m) = d.mean_rms_at_50 {
        let _ = write!(s, ", pass 50 {m:.3}");
    }
    let _ = writeln!(s, ", final {:.3}", d.mean_rms_final);
    for (k, r) in report.scale_range.iter().enumerate() {
        let _ = writeln!(s, "S{} range [{:.4}, {:.4}]", k + 1, r[0], r[1]);
    }
    if report.invalid_pixels > 0 {
        let _ = writeln!(s, "warning: {} non-positive pixels", report.invalid_pixels);
    }
    for t in &timings.stages {
        let _ = writeln!(s, "time {:>8}: {:.2} s", t.stage, t.seconds);
    }
    s
}

/// Reads `report.json` and `timings.json` back from a run directory.
pub fn load_run(dir: &Path) -> Result<(RunReport, Option<Timings>)> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    let report = serde_json::from_str(&text)?;
    let tpath = dir.join("timings.json");
    let timings = match fs::read_to_string(&tpath) {
        Ok(t) => Some(serde_json::from_str(&t)?),
        Err(_) => None,
    };
    Ok((report, timings))
}

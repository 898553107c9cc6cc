use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use elastonet::fem::SampleSet;
use elastonet::mesh::QuadMesh;
use elastonet::mpn::{MaterialPropertyNet, PretrainSpec};
use elastonet::pipeline::{
    list_presets, load_run, preset, pretrained_mpn, run_experiment, simulate_dataset, summary, ExperimentConfig,
    RunOptions,
};
use elastonet::recon::{reconstruct_default, render, score, Cann, ModulusImage, ReconSpec};
use elastonet::scaling::{compute_field, GdConfig, ScalingField};
use elastonet::spatial::{SnTrainSpec, SpatialNet};

#[derive(Parser)]
#[command(name = "elastonet", version, about = "Spatially scaled neural constitutive models for elasticity imaging")]
struct Cli {
    /// Overrides the noise and spatial-network seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Experiment config (JSON). Takes precedence over --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PresetArg {
    /// Built-in experiment preset.
    #[arg(long, default_value = "model1_test1")]
    preset: String,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a target modulus field.
    Phantom {
        #[command(flatten)]
        preset: PresetArg,
        #[arg(long, default_value_t = 101)]
        rows: usize,
        #[arg(long, default_value_t = 101)]
        cols: usize,
    },
    /// Build the mesh of an experiment and write it as text.
    Mesh {
        #[command(flatten)]
        preset: PresetArg,
    },
    /// Run the finite-element analyses and write the stress/strain dataset.
    Fea {
        #[command(flatten)]
        preset: PresetArg,
    },
    /// Material property network.
    Mpn {
        #[command(subcommand)]
        action: MpnAction,
    },
    /// Strain-scale field.
    Scale {
        #[command(subcommand)]
        action: ScaleAction,
    },
    /// Spatial network.
    Sn {
        #[command(subcommand)]
        action: SnAction,
    },
    /// Image reconstruction and scoring.
    Recon {
        #[command(subcommand)]
        action: ReconAction,
    },
    /// Run a whole experiment.
    Run {
        #[command(flatten)]
        preset: PresetArg,
        /// Cache directory for pretrained material networks.
        #[arg(long)]
        mpn_cache: Option<PathBuf>,
    },
    /// Print the summary of a finished run, or list presets.
    Report {
        /// Run directory (defaults to --out-dir).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        list_presets: bool,
    },
}

#[derive(Subcommand)]
enum MpnAction {
    Pretrain {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        stress_scale: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ScaleAction {
    Compute {
        #[arg(long)]
        mpn: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// Use the tangent-stiffness update instead of the masked response.
        #[arg(long)]
        exact: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SnPreset {
    Test1,
    Test2,
}

#[derive(Subcommand)]
enum SnAction {
    Fit {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value = "test1")]
        preset: SnPreset,
    },
}

#[derive(Subcommand)]
enum ReconAction {
    Run {
        /// Directory holding mpn.net and sn.net.
        #[arg(long)]
        cann: PathBuf,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Output stem inside --out-dir.
        #[arg(long, default_value = "image")]
        out: String,
    },
    Score {
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        preset: PresetArg,
    },
}

fn experiment(cli: &Cli, preset_name: &str) -> anyhow::Result<(ExperimentConfig, Option<PathBuf>)> {
    let (cfg, base) = match &cli.config {
        Some(path) => (ExperimentConfig::load(path)?, path.parent().map(Path::to_path_buf)),
        None => {
            let Some(cfg) = preset(preset_name) else {
                return Err(elastonet::Error::InvalidConfig(format!(
                    "unknown preset `{preset_name}`; known: {}",
                    list_presets().join(", ")
                ))
                .into());
            };
            (cfg, None)
        }
    };
    let cfg = match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    cfg.validate()?;
    Ok((cfg, base))
}

fn out_dir(cli: &Cli) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    Ok(&cli.out_dir)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Phantom { preset, rows, cols } => {
            let (cfg, base) = experiment(cli, &preset.preset)?;
            let field = cfg.phantom.build(base.as_deref())?;
            let grid = field.rasterize(*rows, *cols)?;
            let dir = out_dir(cli)?;
            fs::write(dir.join("phantom.txt"), grid.to_text())?;
            fs::write(dir.join("phantom.pgm"), grid.to_pgm(grid.min(), grid.max()))?;
            println!("modulus range {:.1}..{:.1} Pa", grid.min(), grid.max());
        }
        Command::Mesh { preset } => {
            let (cfg, base) = experiment(cli, &preset.preset)?;
            let mesh = cfg.mesh.build(&cfg.phantom, base.as_deref())?;
            mesh.save(&out_dir(cli)?.join("mesh.txt"))?;
            println!("{} nodes, {} elements", mesh.nodes().len(), mesh.elements().len());
        }
        Command::Fea { preset } => {
            let (cfg, base) = experiment(cli, &preset.preset)?;
            let target = cfg.phantom.build(base.as_deref())?;
            let mut mesh = cfg.mesh.build(&cfg.phantom, base.as_deref())?;
            mesh.assign_modulus(&target);
            let (set, displacement) = simulate_dataset(&cfg, &target, &mesh)?;
            let dir = out_dir(cli)?;
            mesh.save(&dir.join("mesh.txt"))?;
            set.save(&dir.join("dataset.csv"))?;
            println!("{} records, probe displacement {displacement:.3} mm", set.len());
        }
        Command::Mpn {
            action: MpnAction::Pretrain {
                epochs,
                stress_scale,
                out,
            },
        } => {
            let mut spec = match &cli.config {
                Some(_) => experiment(cli, "model1_test1")?.0.mpn,
                None => PretrainSpec::default(),
            };
            if let Some(e) = epochs {
                spec.epochs = *e;
            }
            if stress_scale.is_some() {
                spec.stress_scale = *stress_scale;
            }
            let mpn = pretrained_mpn(&spec, None)?;
            let path = out.clone().unwrap_or(out_dir(cli)?.join("mpn.net"));
            mpn.save(&path)?;
            println!("stress scale {}, unit {} Pa → {}", mpn.stress_scale(), mpn.stress_unit_pa(), path.display());
        }
        Command::Scale {
            action: ScaleAction::Compute {
                mpn,
                data,
                iters,
                eta,
                exact,
            },
        } => {
            let mut gd = match &cli.config {
                Some(_) => experiment(cli, "model1_test1")?.0.gd,
                None => GdConfig::default(),
            };
            gd.iterations = iters.unwrap_or(gd.iterations);
            gd.eta = eta.unwrap_or(gd.eta);
            gd.use_exact_gradient |= *exact;
            let samples = SampleSet::parse_csv(&fs::read_to_string(data).with_context(|| data.display().to_string())?)?;
            let net = MaterialPropertyNet::load(mpn, samples.stress_unit_pa)?;
            let field = compute_field(&net, &samples, &gd)?;
            let dir = out_dir(cli)?;
            field.save(&dir.join("scaling.csv"), Some(&dir.join("scaling_errors.csv")))?;
            let last = field.errors.last().expect("at least one pass");
            println!("{} locations, mean RMS {:.4} Pa after {} passes", field.len(), last.mean_rms, last.iter);
        }
        Command::Sn {
            action: SnAction::Fit { field, mesh, preset },
        } => {
            let mut spec = match preset {
                SnPreset::Test1 => SnTrainSpec::test1(),
                SnPreset::Test2 => SnTrainSpec::test2(),
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let field = ScalingField::load(field)?;
            let mesh = QuadMesh::load(mesh)?;
            let (sn, trace) = SpatialNet::fit(&field, &mesh, &spec)?;
            sn.save(&out_dir(cli)?.join("sn.net"))?;
            println!("final loss {:.3e}", trace.last().copied().unwrap_or(f64::NAN));
        }
        Command::Recon {
            action: ReconAction::Run { cann, grid, out },
        } => {
            let sn = SpatialNet::load(&cann.join("sn.net"))?;
            let mpn_text = fs::read_to_string(cann.join("mpn.net")).context("reading mpn.net")?;
            let mpn = MaterialPropertyNet::parse_text(&mpn_text)?;
            let model = Cann::new(mpn, sn);
            let spec = ReconSpec {
                rows: *grid,
                cols: *grid,
                ..Default::default()
            };
            let image = reconstruct_default(&model, &spec)?;
            let window = render(&image, out_dir(cli)?, out, None)?;
            println!("modulus range {:.1}..{:.1} Pa", window.lo_pa, window.hi_pa);
            if image.invalid_pixels() > 0 {
                eprintln!("warning: {} non-positive pixels", image.invalid_pixels());
            }
        }
        Command::Recon {
            action: ReconAction::Score { image, preset },
        } => {
            let (cfg, base) = experiment(cli, &preset.preset)?;
            let target = cfg.phantom.build(base.as_deref())?;
            let img = ModulusImage::load(image)?;
            let s = score(&img, &target)?;
            println!("{}", serde_json::json!({ "mean": s.mean, "std": s.std }));
        }
        Command::Run { preset, mpn_cache } => {
            let (cfg, base) = experiment(cli, &preset.preset)?;
            let dir = out_dir(cli)?;
            let opts = RunOptions {
                mpn_cache: mpn_cache.clone(),
                base_dir: base,
            };
            let outcome = run_experiment(&cfg, dir, &opts)?;
            print!("{}", summary(&outcome.report, &outcome.timings));
        }
        Command::Report { run_dir, list_presets: list } => {
            if *list {
                for name in list_presets() {
                    println!("{name}");
                }
                return Ok(());
            }
            let dir = run_dir.as_ref().unwrap_or(&cli.out_dir);
            let (report, timings) = load_run(dir)?;
            print!("{}", summary(&report, &timings.unwrap_or_default()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<elastonet::Error>().map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}

//! `rti-studio`: plan, fly, capture and fit a dual-vehicle RTI mission.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rti_core::capture::{poses_from_events, poses_from_plan, run_capture, CaptureSet, Scene};
use rti_core::config::{MissionConfig, SequencerKind};
use rti_core::experiments::{noise_sweep, path_length_study, NoiseSweepConfig, PathStudyConfig};
use rti_core::lighting_plan::{LightingPlan, PlanKind, SppaMode};
use rti_core::mpc::CaptureManifest;
use rti_core::pipeline::{self, read_json, write_json, MissionSummary};
use rti_core::ptm::{compare_normals, fit_ptm, NormalMap, PtmImage};
use rti_core::sequencing::{Sequence, Traversal};
use rti_core::trajectory::Trajectory;
use rti_core::{Error, LightingVector, Result};

#[derive(Parser, Debug)]
#[command(name = "rti-studio", version, about = "Dual-UAV reflectance transformation imaging toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Mission configuration (JSON). The bundled demo configuration is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    generator: Option<Generator>,
    /// Row count of the predictable grid.
    #[arg(long = "v-s", global = true)]
    v_s: Option<usize>,
    /// Position count of the Fibonacci generator.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[arg(long, global = true, value_enum)]
    sequencer: Option<Sequencer>,
    #[arg(long, global = true, value_enum)]
    traversal: Option<TraversalArg>,
    #[arg(long = "h-min", global = true, allow_hyphen_values = true)]
    h_min: Option<f64>,
    #[arg(long = "h-max", global = true, allow_hyphen_values = true)]
    h_max: Option<f64>,
    #[arg(long = "v-min", global = true, allow_hyphen_values = true)]
    v_min: Option<f64>,
    #[arg(long = "v-max", global = true, allow_hyphen_values = true)]
    v_max: Option<f64>,
    /// Light distance from the object.
    #[arg(long, global = true)]
    distance: Option<f64>,
    #[arg(long = "v-des", global = true)]
    v_des: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-stab", global = true)]
    t_stab: Option<f64>,
    /// Localization noise of the light vehicle.
    #[arg(long, global = true)]
    sigma: Option<f64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Generator {
    Sppa,
    Fibonacci,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Spherical,
    Faithful,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Sequencer {
    Sppa,
    Etsp,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TraversalArg {
    Zigzag,
    DoublePass,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the lighting plan (plan.json, plan.lp).
    Plan,
    /// Order a plan into a closed tour (sequence.json, sequence.csv).
    Sequence {
        /// Plan to order; built from the configuration when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Sample a sequence into a timed trajectory (trajectory.json).
    Trajectory {
        #[arg(long)]
        sequence: Option<PathBuf>,
    },
    /// Track a trajectory with the MPC (mission_log.jsonl, capture_manifest.json, mission_summary.json).
    Simulate {
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Render the captures of a flown mission (captures/).
    Capture {
        /// Capture manifest of a flown mission; defaults to `<out>/capture_manifest.json`.
        #[arg(long, conflicts_with = "from_plan")]
        manifest: Option<PathBuf>,
        /// Capture at the planned positions instead of a flown mission.
        #[arg(long)]
        from_plan: Option<PathBuf>,
    },
    /// Fit a polynomial texture map to a capture directory (ptm.rtiptm).
    Fit {
        #[arg(long)]
        captures: Option<PathBuf>,
    },
    /// Relight a fitted map under one lighting direction.
    Relight {
        #[arg(long)]
        ptm: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        lu: f64,
        #[arg(long, allow_hyphen_values = true)]
        lv: f64,
        /// Output PNG; defaults to `<out>/relight.png`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Extract the surface-normal map of a fitted map (normals.png, normals.nrm).
    Normals {
        #[arg(long)]
        ptm: Option<PathBuf>,
    },
    /// Angular error between two normal maps (normal_error.png, normal_error.json).
    Compare {
        /// Estimated normals (`.nrm` sidecar).
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Reference normals; the configured scene's analytic normals when omitted.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Angle mapped to white in the heatmap, radians.
        #[arg(long, default_value_t = 0.5)]
        scale: f64,
    },
    /// Batch experiments.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
    /// Run plan → sequence → trajectory → simulate → capture → fit → normals.
    Demo,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Tour-length comparison of the grid planner against the tour heuristic.
    PathLengths {
        #[arg(long)]
        trials: Option<usize>,
        /// Experiment parameters (JSON); defaults otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Normal error as a function of localization noise.
    NoiseSweep {
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

/// Exit status per error class.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format { .. } | Error::Json(_) => 3,
        Error::Precondition(_)
        | Error::InvalidCamera(_)
        | Error::InvalidRegion(_)
        | Error::TooManyPoints { .. }
        | Error::DimensionMismatch(_) => 4,
        Error::DegenerateGeometry(_)
        | Error::IllConditionedLighting { .. }
        | Error::OutOfDisc { .. }
        | Error::UndefinedMean => 5,
        Error::Infeasible { .. } => 6,
        Error::File { .. } | Error::Io(_) | Error::Png(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("RTI_STUDIO_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // Only fails if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(g: &Global) -> Result<MissionConfig> {
    let mut cfg = match &g.config {
        Some(path) => MissionConfig::load(path)?,
        None => MissionConfig::demo(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
        cfg.mpc.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output = o.clone();
    }
    if let Some(k) = g.generator {
        cfg.plan.generator = match k {
            Generator::Sppa => PlanKind::Sppa,
            Generator::Fibonacci => PlanKind::Fibonacci,
        };
    }
    if let Some(v) = g.v_s {
        cfg.plan.v_s = Some(v);
    }
    if let Some(n) = g.n {
        cfg.plan.n = Some(n);
    }
    if let Some(m) = g.mode {
        cfg.plan.mode = match m {
            Mode::Spherical => SppaMode::Spherical,
            Mode::Faithful => SppaMode::Faithful,
        };
    }
    if let Some(s) = g.sequencer {
        cfg.sequencer = match s {
            Sequencer::Sppa => SequencerKind::Sppa,
            Sequencer::Etsp => SequencerKind::Etsp,
        };
    }
    if let Some(t) = g.traversal {
        cfg.traversal = match t {
            TraversalArg::Zigzag => Traversal::Zigzag,
            TraversalArg::DoublePass => Traversal::DoublePass,
        };
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.region.h_min, g.h_min);
    set(&mut cfg.region.h_max, g.h_max);
    set(&mut cfg.region.v_min, g.v_min);
    set(&mut cfg.region.v_max, g.v_max);
    set(&mut cfg.region.distance, g.distance);
    set(&mut cfg.v_des, g.v_des);
    set(&mut cfg.dt, g.dt);
    set(&mut cfg.t_stab, g.t_stab);
    set(&mut cfg.sigma, g.sigma);
    cfg.validate()?;
    Ok(cfg)
}

fn report<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_or_build_plan(cfg: &MissionConfig, path: Option<&Path>) -> Result<LightingPlan> {
    match path {
        Some(p) => read_json(p, "lighting plan"),
        None => pipeline::build_plan(cfg),
    }
}

fn input(out: &Path, given: &Option<PathBuf>, default: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| out.join(default))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let out = cfg.output.clone();
    match cli.command {
        Command::Plan => {
            let plan = pipeline::build_plan(&cfg)?;
            write_json(&out.join("plan.json"), &plan)?;
            pipeline::write_text(&out.join("plan.lp"), &plan.to_lp(&cfg.camera_model())?)?;
            report(&serde_json::json!({
                "positions": plan.len(),
                "rows": plan.row_sizes(),
                "spacing": plan.spacing,
                "plan": out.join("plan.json"),
            }))
        }
        Command::Sequence { plan } => {
            let plan = load_or_build_plan(&cfg, plan.as_deref())?;
            let seq = pipeline::build_sequence(&cfg, &plan)?;
            write_json(&out.join("sequence.json"), &seq)?;
            pipeline::write_text(&out.join("sequence.csv"), &seq.to_csv())?;
            report(&serde_json::json!({ "positions": seq.positions.len(), "length_m": seq.length_m }))
        }
        Command::Trajectory { sequence } => {
            let seq: Sequence = read_json(&input(&out, &sequence, "sequence.json"), "sequence")?;
            let traj = pipeline::build_trajectory(&cfg, &seq)?;
            write_json(&out.join("trajectory.json"), &traj)?;
            report(&serde_json::json!({ "samples": traj.len(), "duration_s": traj.samples.last().map_or(0.0, |s| s.time) }))
        }
        Command::Simulate { trajectory } => {
            let traj: Trajectory = read_json(&input(&out, &trajectory, "trajectory.json"), "trajectory")?;
            let log = pipeline::fly(&cfg, &traj)?;
            let planned = traj.holds().len();
            let summary = MissionSummary::of(&log, planned, traj.path_length());
            pipeline::write_mission(&out, &log, &summary)?;
            report(&summary)
        }
        Command::Capture { manifest, from_plan } => {
            let scene = Scene::build(&cfg.scene_config()?)?;
            let (poses, ooi, camera) = match from_plan {
                Some(p) => {
                    let plan: LightingPlan = read_json(&p, "lighting plan")?;
                    (poses_from_plan(&plan), plan.region.ooi, cfg.camera_model())
                }
                None => {
                    let m: CaptureManifest = read_json(&input(&out, &manifest, "capture_manifest.json"), "capture manifest")?;
                    (poses_from_events(&m.captures), m.ooi, m.camera)
                }
            };
            let set = run_capture(&poses, ooi, &scene, &camera, cfg.sigma, cfg.seed)?;
            set.write(&out.join("captures"))?;
            report(&serde_json::json!({
                "captures": set.captures.len(),
                "mean_recording_error_rad": set.mean_recording_error(),
            }))
        }
        Command::Fit { captures } => {
            let set = CaptureSet::read(&input(&out, &captures, "captures"))?;
            let ptm = fit_ptm(&set)?.quantize();
            ptm.write(&out.join("ptm.rtiptm"))?;
            report(&serde_json::json!({ "width": ptm.width, "height": ptm.height, "captures": set.captures.len() }))
        }
        Command::Relight { ptm, lu, lv, output } => {
            let ptm = PtmImage::read(&input(&out, &ptm, "ptm.rtiptm"))?;
            let l = LightingVector::from_uv(lu, lv)?;
            let image = ptm.relight(&l)?;
            let path = output.unwrap_or_else(|| out.join("relight.png"));
            image.save_png(&path)?;
            report(&serde_json::json!({ "image": path }))
        }
        Command::Normals { ptm } => {
            let ptm = PtmImage::read(&input(&out, &ptm, "ptm.rtiptm"))?;
            let normals = ptm.normal_map();
            normals.save_png(&out.join("normals.png"))?;
            normals.write_sidecar(&out.join("normals.nrm"))?;
            report(&serde_json::json!({ "valid": normals.valid_count(), "pixels": normals.width * normals.height }))
        }
        Command::Compare { estimate, reference, scale } => {
            let est = NormalMap::read_sidecar(&input(&out, &estimate, "normals.nrm"))?;
            let reference = match reference {
                Some(p) => NormalMap::read_sidecar(&p)?,
                None => Scene::build(&cfg.scene_config()?)?.normal_map(),
            };
            let cmp = compare_normals(&est, &reference)?;
            cmp.save_heatmap(&out.join("normal_error.png"), scale)?;
            let stats = serde_json::json!({ "mean_rad": cmp.mean, "max_rad": cmp.max, "pixels": cmp.angles.iter().filter(|a| a.is_some()).count() });
            write_json(&out.join("normal_error.json"), &stats)?;
            report(&stats)
        }
        Command::Experiment { which } => match which {
            Experiment::PathLengths { trials, params } => {
                let mut p: PathStudyConfig = match params {
                    Some(path) => read_json(&path, "path-study parameters")?,
                    None => PathStudyConfig::default(),
                };
                if let Some(t) = trials {
                    p.trials = t;
                }
                if let Some(s) = cli.global.seed {
                    p.seed = s;
                }
                let report_ = path_length_study(&p)?;
                report_.write(&out)?;
                report(&report_.summary)
            }
            Experiment::NoiseSweep { trials, sigmas, params } => {
                let mut p: NoiseSweepConfig = match params {
                    Some(path) => read_json(&path, "noise-sweep parameters")?,
                    None => NoiseSweepConfig::default(),
                };
                if let Some(t) = trials {
                    p.trials = t;
                }
                if let Some(s) = sigmas {
                    p.sigmas = s;
                }
                if let Some(s) = cli.global.seed {
                    p.seed = s;
                }
                let r = noise_sweep(&p)?;
                r.write(&out)?;
                let means: Vec<_> = r.points.iter().map(|p| serde_json::json!({ "sigma": p.sigma, "mean_rad": p.mean, "std_rad": p.std })).collect();
                report(&means)
            }
        },
        Command::Demo => {
            let manifest = pipeline::run_demo(&cfg, &out)?;
            report(&manifest)
        }
    }
}

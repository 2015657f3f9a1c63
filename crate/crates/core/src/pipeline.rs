//! Stage functions shared by the command-line tool and the end-to-end demo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capture::{poses_from_log, run_capture, CaptureSet, Scene, MIN_CAPTURES};
use crate::config::{MissionConfig, SequencerKind};
use crate::error::{Error, Result};
use crate::lighting_plan::{fibonacci_positions, sppa_positions, LightingPlan, PlanKind};
use crate::mpc::{simulate_mission, MissionLog};
use crate::ptm::{compare_normals, fit_ptm, PtmImage};
use crate::sequencing::{etsp_tour, sppa_sequence, Sequence};
use crate::trajectory::{generate_trajectory, Trajectory};

pub fn build_plan(cfg: &MissionConfig) -> Result<LightingPlan> {
    let region = cfg.scan_region();
    match cfg.plan.generator {
        PlanKind::Sppa => {
            let v_s = cfg.plan.v_s.ok_or_else(|| Error::Precondition("plan.v_s is not set".into()))?;
            sppa_positions(&region, v_s, cfg.initial, cfg.plan.mode)
        }
        PlanKind::Fibonacci => {
            let n = cfg.plan.n.ok_or_else(|| Error::Precondition("plan.n is not set".into()))?;
            fibonacci_positions(&region, n, cfg.initial)
        }
    }
}

pub fn build_sequence(cfg: &MissionConfig, plan: &LightingPlan) -> Result<Sequence> {
    match cfg.sequencer {
        SequencerKind::Sppa => sppa_sequence(plan, cfg.traversal),
        SequencerKind::Etsp => etsp_tour(&plan.with_initial()),
    }
}

pub fn build_trajectory(cfg: &MissionConfig, seq: &Sequence) -> Result<Trajectory> {
    generate_trajectory(seq, cfg.v_des, cfg.dt, cfg.t_stab)
}

pub fn fly(cfg: &MissionConfig, trajectory: &Trajectory) -> Result<MissionLog> {
    simulate_mission(trajectory, cfg.ooi, &cfg.obstacle_set(), &cfg.mpc)
}

pub fn capture_mission(cfg: &MissionConfig, log: &MissionLog) -> Result<CaptureSet> {
    let scene = Scene::build(&cfg.scene_config()?)?;
    run_capture(&poses_from_log(log), cfg.ooi, &scene, &cfg.camera_model(), cfg.sigma, cfg.seed)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::File { path: parent.into(), source })?;
    }
    std::fs::write(path, text).map_err(|source| Error::File { path: path.into(), source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what,
        detail: format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

/// Mission outcome written next to the JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub planned: usize,
    pub captured: usize,
    pub skipped: Vec<crate::mpc::SkippedCapture>,
    pub aborted: Option<String>,
    pub flown_length_m: f64,
    pub planned_length_m: f64,
    pub duration_s: f64,
    pub min_fov_distance: f64,
    pub min_clearance: f64,
}

impl MissionSummary {
    pub fn of(log: &MissionLog, planned: usize, planned_length_m: f64) -> MissionSummary {
        MissionSummary {
            planned,
            captured: log.captures.len(),
            skipped: log.skipped.clone(),
            aborted: log.aborted.clone(),
            flown_length_m: log.flown_length(),
            planned_length_m,
            duration_s: log.records.last().map_or(0.0, |r| r.time),
            min_fov_distance: log.records.iter().map(|r| r.fov_distance).fold(f64::INFINITY, f64::min),
            min_clearance: log.records.iter().map(|r| r.clearance).fold(f64::INFINITY, f64::min),
        }
    }
}

/// Writes `mission_log.jsonl`, `capture_manifest.json` and `mission_summary.json`.
pub fn write_mission(dir: &Path, log: &MissionLog, summary: &MissionSummary) -> Result<()> {
    write_text(&dir.join("mission_log.jsonl"), &log.to_jsonl()?)?;
    write_json(&dir.join("capture_manifest.json"), &log.manifest())?;
    write_json(&dir.join("mission_summary.json"), summary)
}

/// Every artifact of a demo run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoManifest {
    pub config: PathBuf,
    pub plan: PathBuf,
    pub plan_lp: PathBuf,
    pub sequence_csv: PathBuf,
    pub sequence: PathBuf,
    pub trajectory: PathBuf,
    pub mission_log: PathBuf,
    pub capture_manifest: PathBuf,
    pub mission_summary: PathBuf,
    pub captures: PathBuf,
    pub captures_lp: PathBuf,
    pub ptm: PathBuf,
    pub normals_png: PathBuf,
    pub normals_sidecar: PathBuf,
    pub truth_normals_png: PathBuf,
    pub normal_error_heatmap: PathBuf,
    pub planned: usize,
    pub captured: usize,
    pub mean_normal_error_rad: Option<f64>,
}

/// Runs plan → sequence → trajectory → simulate → capture → fit → normals
/// and writes every artifact under `out`.
pub fn run_demo(cfg: &MissionConfig, out: &Path) -> Result<DemoManifest> {
    cfg.validate()?;
    let rel = |name: &str| PathBuf::from(name);
    let m = DemoManifest {
        config: rel("config.json"),
        plan: rel("plan.json"),
        plan_lp: rel("plan.lp"),
        sequence_csv: rel("sequence.csv"),
        sequence: rel("sequence.json"),
        trajectory: rel("trajectory.json"),
        mission_log: rel("mission_log.jsonl"),
        capture_manifest: rel("capture_manifest.json"),
        mission_summary: rel("mission_summary.json"),
        captures: rel("captures"),
        captures_lp: rel("captures/captures.lp"),
        ptm: rel("ptm.rtiptm"),
        normals_png: rel("normals.png"),
        normals_sidecar: rel("normals.nrm"),
        truth_normals_png: rel("normals_truth.png"),
        normal_error_heatmap: rel("normal_error.png"),
        planned: 0,
        captured: 0,
        mean_normal_error_rad: None,
    };
    write_text(&out.join(&m.config), &cfg.to_json()?)?;

    let plan = build_plan(cfg)?;
    let camera = cfg.camera_model();
    write_json(&out.join(&m.plan), &plan)?;
    write_text(&out.join(&m.plan_lp), &plan.to_lp(&camera)?)?;

    let seq = build_sequence(cfg, &plan)?;
    write_text(&out.join(&m.sequence_csv), &seq.to_csv())?;
    write_json(&out.join(&m.sequence), &seq)?;

    let traj = build_trajectory(cfg, &seq)?;
    write_json(&out.join(&m.trajectory), &traj)?;

    let log = fly(cfg, &traj)?;
    let summary = MissionSummary::of(&log, plan.len(), seq.length_m);
    write_mission(out, &log, &summary)?;

    let set = capture_mission(cfg, &log)?;
    set.write(&out.join(&m.captures))?;
    if set.captures.len() < MIN_CAPTURES {
        return Err(Error::Precondition(format!(
            "only {} of {} positions were captured; the fit needs {MIN_CAPTURES}",
            set.captures.len(),
            plan.len()
        )));
    }
    let ptm: PtmImage = fit_ptm(&set)?.quantize();
    ptm.write(&out.join(&m.ptm))?;
    let normals = ptm.normal_map();
    normals.save_png(&out.join(&m.normals_png))?;
    normals.write_sidecar(&out.join(&m.normals_sidecar))?;
    let truth = Scene::build(&cfg.scene_config()?)?.normal_map();
    truth.save_png(&out.join(&m.truth_normals_png))?;
    let mean = match compare_normals(&normals, &truth) {
        Ok(cmp) => {
            cmp.save_heatmap(&out.join(&m.normal_error_heatmap), 0.5)?;
            Some(cmp.mean)
        }
        Err(Error::UndefinedMean) => None,
        Err(e) => return Err(e),
    };
    let manifest = DemoManifest { planned: plan.len(), captured: log.captures.len(), mean_normal_error_rad: mean, ..m };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

//! Acceptance suite. Runs every primary criterion at its stated tolerance and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::f64::consts::PI;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rti_core::capture::{poses_from_plan, run_capture, Scene, SceneConfig, Surface, GaussianBump};
use rti_core::config::MissionConfig;
use rti_core::experiments::{noise_sweep, path_length_study, pipeline_normals, NoiseSweepConfig, PathStudyConfig};
use rti_core::geometry::fov_distance;
use rti_core::lighting_plan::{sppa_positions, ScanRegion, SppaMode};
use rti_core::mpc::{rti_term, MpcConfig, ObstacleSet, PointMassState, PositionProblem, Sphere};
use rti_core::pipeline;
use rti_core::ptm::{basis, compare_normals, fit_ptm, PtmFitter, COEFFICIENTS};
use rti_core::sequencing::{brute_force_tour, etsp_tour, rows_top_down, sppa_sequence, Label, Traversal};
use rti_core::{CameraModel, LightingVector, Vec3};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn etsp_matches_brute_force() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let instances = 250;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=8);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0)))
            .collect();
        let h = etsp_tour(&pts).map_err(|e| e.to_string())?;
        let b = brute_force_tour(&pts).map_err(|e| e.to_string())?;
        worst = worst.max(h.length_m / b.length_m.max(1e-300));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1.05 && secs < 10.0,
        format!("{instances} instances, worst ratio {worst:.4} (limit 1.05), {secs:.2} s (limit 10 s)"),
    )
}

fn worked_region() -> ScanRegion {
    ScanRegion {
        h_min: -PI / 2.0,
        h_max: PI / 2.0,
        v_min: 0.0,
        v_max: PI / 3.0,
        distance: 2.0,
        ooi: Vec3::zeros(),
        cam_yaw: 0.0,
        cam_pitch: 0.0,
    }
}

fn sppa_grid_arithmetic() -> Outcome {
    let plan = sppa_positions(&worked_region(), 3, Vec3::new(-3.0, 0.0, 0.0), SppaMode::Spherical)
        .map_err(|e| e.to_string())?;
    let rows = plan.row_sizes();
    let s_d = plan.spacing.unwrap_or(f64::NAN);
    let err = (s_d - 2.0 * PI / 9.0).abs();
    check(
        rows == [10, 9, 6] && err <= 4.0 * f64::EPSILON,
        format!("rows {rows:?} (expected [10, 9, 6]), s_d error {err:.1e}"),
    )
}

fn sppa_sequence_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut with_pair = 0;
    for trial in 0..1000 {
        let h_span = rng.random_range(PI / 6.0..2.0 * PI);
        let v_span = rng.random_range(PI / 12.0..PI / 2.2);
        let lowest = rng.random_range(0.0..PI / 2.2 - v_span);
        let h_min = rng.random_range(-PI..PI - h_span.min(PI));
        let region = ScanRegion {
            h_min,
            h_max: h_min + h_span,
            v_min: -(lowest + v_span),
            v_max: -lowest,
            distance: rng.random_range(1.0..5.0),
            ooi: Vec3::zeros(),
            cam_yaw: rng.random_range(-PI..PI),
            cam_pitch: 0.0,
        };
        let r = rng.random_range(0.0..3.0) * region.distance;
        let a = rng.random_range(-PI..PI);
        let initial = Vec3::new(r * a.cos(), r * a.sin(), 0.0);
        let mode = if rng.random_bool(0.5) { SppaMode::Spherical } else { SppaMode::Faithful };
        let traversal = if rng.random_bool(0.5) { Traversal::Zigzag } else { Traversal::DoublePass };
        let v_s = rng.random_range(2..=8);
        let plan = sppa_positions(&region, v_s, initial, mode).map_err(|e| format!("trial {trial}: {e}"))?;
        let seq = sppa_sequence(&plan, traversal).map_err(|e| format!("trial {trial}: {e}"))?;

        let fail = |what: &str| Err(format!("trial {trial}: {what}"));
        if seq.positions.first() != Some(&initial) || seq.positions.last() != Some(&initial) {
            return fail("does not start and end at the initial position");
        }
        let mut visits: Vec<(usize, usize)> = seq
            .labels
            .iter()
            .filter_map(|l| match l {
                Label::Grid { row, col } => Some((*row, *col)),
                _ => None,
            })
            .collect();
        let first = visits[0];
        let last = *visits.last().unwrap();
        visits.sort_unstable();
        let expected: Vec<(usize, usize)> = plan
            .rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| (0..row.horizontal.len()).map(move |c| (r, c)))
            .collect();
        if visits != expected {
            return fail("grid positions not visited exactly once");
        }

        // Exhaustive enumeration of boundary pairs on consecutive rows.
        let grid = plan.grid();
        let order = rows_top_down(&plan);
        let cost = |p: &Vec3, q: &Vec3| (p - initial).norm() + (q - initial).norm();
        let mut best = f64::INFINITY;
        for w in order.windows(2) {
            let (up, lo) = (grid[w[0]], grid[w[1]]);
            if up.len() < 2 || lo.len() < 2 {
                continue;
            }
            best = best.min(cost(&up[0], &lo[0]));
            best = best.min(cost(&up[up.len() - 1], &lo[lo.len() - 1]));
        }
        if best.is_finite() {
            with_pair += 1;
            let (up, lo) = (grid[first.0], grid[last.0]);
            let consecutive = order.windows(2).any(|w| w == [first.0, last.0]);
            let same_side = (first.1 == 0 && last.1 == 0) || (first.1 == up.len() - 1 && last.1 == lo.len() - 1);
            let chosen = cost(&up[first.1], &lo[last.1]);
            if !consecutive || !same_side || (chosen - best).abs() > 1e-9 * best.max(1.0) {
                return fail(&format!("boundary pair cost {chosen} but the closest pair costs {best}"));
            }
        }
    }
    Ok(format!("1000 grids valid, boundary-pair rule checked exhaustively on {with_pair}"))
}

fn path_length_study_shape() -> Outcome {
    let start = Instant::now();
    let cfg = PathStudyConfig { trials: 1000, ..PathStudyConfig::default() };
    let report = path_length_study(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let s = &report.summary;
    let slowest = s.sppa_time.max_s.max(s.lkh_time.max_s).max(s.fib_lkh_time.max_s);
    check(
        s.trials >= 1000 && s.within_1_5 >= 0.90 && s.sppa_not_longer >= 0.03 && slowest < 0.5 && secs < 300.0,
        format!(
            "{} trials, ratio <= 1.5 in {:.1}% (>= 90%), SPPA <= LKH-style in {:.1}% (>= 3%), slowest planner {:.3} s (< 0.5 s), total {:.1} s (< 300 s)",
            s.trials,
            100.0 * s.within_1_5,
            100.0 * s.sppa_not_longer,
            slowest,
            secs
        ),
    )
}

fn rti_term_properties() -> Outcome {
    let mut worst: f64 = 0.0;
    for (r_d, r_a) in [(0.5, 0.05), (1.0, 0.2), (0.3, 0.0), (2.0, -0.5)] {
        if rti_term(r_d, r_d, r_a) != 0.0 {
            return Err(format!("term at r_d = {r_d} is {}", rti_term(r_d, r_d, r_a)));
        }
        worst = worst.max((rti_term(0.5 * (r_d + r_a), r_d, r_a) - 1.0).abs());
        // 10^3 points from r_d down toward r_a, excluding the singular end.
        let mut prev = 0.0;
        for i in 0..1000 {
            let d = r_d - (r_d - r_a) * i as f64 / 1000.0;
            let t = rti_term(d, r_d, r_a);
            if t + 1e-12 < prev {
                return Err(format!("not monotone at d = {d} (r_d {r_d}, r_a {r_a})"));
            }
            prev = t;
        }
    }
    check(worst <= 1e-12, format!("zero at r_d, midpoint error {worst:.1e} (<= 1e-12), monotone on 1000-point grids"))
}

fn mpc_constraint_soundness() -> Outcome {
    let base = MissionConfig::demo();
    let plan = pipeline::build_plan(&base).map_err(|e| e.to_string())?;
    let seq = pipeline::build_sequence(&base, &plan).map_err(|e| e.to_string())?;
    let traj = pipeline::build_trajectory(&base, &seq).map_err(|e| e.to_string())?;
    let targets: Vec<Vec3> = seq.positions.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut steps, mut violations, mut captures, mut planned, mut aborted) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for mission in 0..100 {
        let mut cfg = base.clone();
        cfg.mpc.seed = mission;
        let k = rng.random_range(1..=3);
        while cfg.obstacles.len() < base.obstacles.len() + k {
            // Near a random trajectory sample, clear of the targets and the camera.
            let s = &traj.samples[rng.random_range(0..traj.samples.len())];
            let offset = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let radius = rng.random_range(0.1..0.3);
            let center = s.position + offset.normalize() * rng.random_range(0.4..1.2);
            let margin = radius + cfg.mpc.obstacle_margin + cfg.mpc.light_radius + 0.05;
            let camera = cfg.camera_model();
            if targets.iter().all(|t| (t - center).norm() > margin)
                && (camera.position - center).norm() > margin + camera.body_radius
                && center.z > radius
            {
                cfg.obstacles.push(Sphere { center, radius });
            }
        }
        let log = pipeline::fly(&cfg, &traj).map_err(|e| e.to_string())?;
        steps += log.records.len();
        violations += log.records.iter().filter(|r| r.clearance < 0.0 || r.fov_distance < 0.0).count();
        captures += log.captures.len();
        planned += traj.holds().len();
        aborted += usize::from(log.aborted.is_some());
    }
    check(
        violations == 0,
        format!("100 missions, {steps} flown steps, {violations} violating g_obs or g_rti; {captures}/{planned} holds captured, {aborted} aborted"),
    )
}

fn cost_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = MpcConfig { obstacle_margin: 0.8, ..MpcConfig::default() };
    let camera = CameraModel::looking_at(Vec3::zeros(), 4.0, 0.0, 0.0);
    let mut worst: f64 = 0.0;
    let mut points = 0;
    while points < 100 {
        let start = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(1.5..3.0), rng.random_range(0.0..2.0));
        let obstacles = ObstacleSet {
            spheres: (0..2)
                .map(|_| Sphere {
                    center: start + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    radius: rng.random_range(0.05..0.3),
                })
                .collect(),
            camera,
        };
        let reference: Vec<Vec3> = (0..cfg.horizon)
            .map(|k| start + Vec3::new(0.05 * k as f64, rng.random_range(-0.2..0.2), 0.1))
            .collect();
        let state = PointMassState {
            position: start,
            velocity: Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            last_control: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        };
        let problem = PositionProblem { state, reference: &reference, obstacles: &obstacles, cfg: &cfg };
        let controls: Vec<Vec3> = (0..cfg.horizon)
            .map(|_| Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)))
            .collect();
        if problem.violation(&controls).is_some() {
            continue;
        }
        points += 1;
        let smooth = |c: &[Vec3]| {
            let b = problem.cost(c);
            cfg.w_position * b.position + cfg.w_control * b.control + cfg.w_obstacle * b.obstacle
        };
        let g = problem.smooth_gradient(&controls);
        let h = 1e-6;
        let (mut diff, mut norm) = (0.0, 0.0);
        for k in 0..cfg.horizon {
            for i in 0..3 {
                let mut a = controls.clone();
                let mut b = controls.clone();
                a[k][i] += h;
                b[k][i] -= h;
                let fd = (smooth(&a) - smooth(&b)) / (2.0 * h);
                diff += (fd - g[k][i]).powi(2);
                norm += fd * fd;
            }
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-12));
    }
    check(worst <= 1e-4, format!("100 feasible points, worst relative gradient error {worst:.2e} (<= 1e-4)"))
}

fn random_disc_lights(rng: &mut ChaCha8Rng, n: usize) -> Vec<LightingVector> {
    (0..n)
        .map(|_| {
            let r = 0.9 * rng.random_range(0.0f64..1.0).sqrt();
            let a = rng.random_range(-PI..PI);
            LightingVector::from_uv(r * a.cos(), r * a.sin()).unwrap()
        })
        .collect()
}

fn lambertian(surface: Surface) -> SceneConfig {
    SceneConfig { surface, ..SceneConfig::default() }
}

fn ptm_fitter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut recovery: f64 = 0.0;
    let mut constant: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(6..=60);
        let lights = random_disc_lights(&mut rng, n);
        let fitter = PtmFitter::new(&lights).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let a: [f64; COEFFICIENTS] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let samples: Vec<f64> = lights
                .iter()
                .map(|l| basis(l.u, l.v).iter().zip(&a).map(|(b, c)| b * c).sum())
                .collect();
            let fit = fitter.fit_samples(&samples);
            recovery = recovery.max(fit.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
            let c = rng.random_range(0.0..1.0);
            let fit = fitter.fit_samples(&vec![c; lights.len()]);
            constant = constant.max(fit[..5].iter().map(|x| x.abs()).fold(0.0, f64::max)).max((fit[5] - c).abs());
        }
    }

    // Quantized round trip on noiseless Lambertian renders.
    let camera = CameraModel::looking_at(Vec3::zeros(), 4.0, 0.0, 0.0);
    let region = NoiseSweepConfig::default().region;
    let plan = sppa_positions(&region, 8, Vec3::zeros(), SppaMode::Spherical).map_err(|e| e.to_string())?;
    let fixtures = [
        ("flat", lambertian(Surface::Flat)),
        (
            "gentle bumps",
            lambertian(Surface::Bumps {
                bumps: vec![
                    GaussianBump { center: [0.0, 0.0], sigma: 0.1, height: 0.03 },
                    GaussianBump { center: [-0.1, 0.08], sigma: 0.06, height: -0.015 },
                ],
            }),
        ),
    ];
    let mut round_trip: f64 = 0.0;
    for (_, scene_cfg) in &fixtures {
        let scene = Scene::build(scene_cfg).map_err(|e| e.to_string())?;
        let set = run_capture(&poses_from_plan(&plan), region.ooi, &scene, &camera, 0.0, 0).map_err(|e| e.to_string())?;
        let ptm = fit_ptm(&set).map_err(|e| e.to_string())?.quantize();
        let (mut sum, mut count) = (0.0, 0usize);
        for c in &set.captures {
            let relit = ptm.relight(&c.recorded_light).map_err(|e| e.to_string())?;
            for (a, b) in relit.data.iter().zip(&c.image.data) {
                sum += (*a as f64 - *b as f64).abs();
                count += 1;
            }
        }
        round_trip = round_trip.max(sum / count as f64);
    }
    check(
        recovery <= 1e-6 && constant <= 1e-9 && round_trip <= 3.0,
        format!(
            "recovery error {recovery:.1e} (<= 1e-6), constant-image alpha1..5 max {constant:.1e}, round-trip mean abs {round_trip:.2}/255 (<= 3/255) on {} fixtures",
            fixtures.len()
        ),
    )
}

fn hemisphere_normals() -> Outcome {
    let start = Instant::now();
    let defaults = NoiseSweepConfig::default();
    let scene_cfg = SceneConfig { surface: Surface::HemisphereBump { radius: 0.35 }, size: 128, ..SceneConfig::default() };
    let scene = Scene::build(&scene_cfg).map_err(|e| e.to_string())?;
    let plan = sppa_positions(&defaults.region, 8, Vec3::zeros(), SppaMode::Spherical).map_err(|e| e.to_string())?;
    let normals = pipeline_normals(&plan, &scene, &defaults.camera).map_err(|e| e.to_string())?;
    let cmp = compare_normals(&normals, &scene.normal_map()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        plan.len() == 60 && cmp.mean < 0.1 && secs < 120.0,
        format!("{} positions, mean angular error {:.4} rad (< 0.1), {secs:.1} s at 128x128 (< 120 s)", plan.len(), cmp.mean),
    )
}

fn noise_sweep_shape() -> Outcome {
    let report = noise_sweep(&NoiseSweepConfig::default()).map_err(|e| e.to_string())?;
    let means: Vec<f64> = report.points.iter().map(|p| p.mean).collect();
    let sigmas: Vec<f64> = report.points.iter().map(|p| p.sigma).collect();
    let monotone = means.windows(2).all(|w| w[1] >= w[0]);
    let text: Vec<String> = sigmas.iter().zip(&means).map(|(s, m)| format!("{s}: {m:.4}")).collect();
    check(
        monotone && means[0] < 0.05 && report.config.trials >= 20,
        format!("{} seeds, mean delta by sigma [{}] rad, non-decreasing {monotone}, delta(0) < 0.05", report.config.trials, text.join(", ")),
    )
}

fn mission_demo() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = MissionConfig::demo();
    let m = pipeline::run_demo(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let artifacts = [
        &m.config, &m.plan, &m.plan_lp, &m.sequence_csv, &m.sequence, &m.trajectory, &m.mission_log,
        &m.capture_manifest, &m.mission_summary, &m.captures, &m.captures_lp, &m.ptm, &m.normals_png,
        &m.normals_sidecar, &m.truth_normals_png, &m.normal_error_heatmap,
    ];
    let missing: Vec<_> = artifacts.iter().filter(|p| !dir.path().join(p).exists()).collect();
    let manifest: rti_core::mpc::CaptureManifest =
        pipeline::read_json(&dir.path().join(&m.capture_manifest), "capture manifest").map_err(|e| e.to_string())?;
    let camera = cfg.camera_model();
    let inside = manifest
        .captures
        .iter()
        .filter(|c| fov_distance(&c.true_position, &camera).map_or(true, |d| d < 0.0))
        .count();
    check(
        m.captured == m.planned && missing.is_empty() && inside == 0,
        format!(
            "{}/{} positions captured, {} artifacts present, {inside} captures inside the field of view, mean normal error {:.3} rad",
            m.captured,
            m.planned,
            artifacts.len() - missing.len(),
            m.mean_normal_error_rad.unwrap_or(f64::NAN)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("sequencing oracle equivalence", etsp_matches_brute_force),
        ("SPPA grid arithmetic", sppa_grid_arithmetic),
        ("SPPA sequence validity", sppa_sequence_validity),
        ("path-length study", path_length_study_shape),
        ("FoV penalty term properties", rti_term_properties),
        ("MPC constraint soundness", mpc_constraint_soundness),
        ("cost gradients", cost_gradients),
        ("PTM fitter correctness", ptm_fitter),
        ("normal pipeline", hemisphere_normals),
        ("noise sweep", noise_sweep_shape),
        ("mission demo", mission_demo),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout();
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(d) => format!("PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                format!("FAIL  {name}: {d} [{secs:.1} s]")
            }
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}

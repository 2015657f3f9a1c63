//! Position and orientation MPC for the light-carrying vehicle.
//!
//! The vehicle is a discrete double integrator with per-axis acceleration
//! and velocity limits. The position objective is
//! `J_p = α J_pos + β J_c + γ J_obs + δ J_rti`, minimized subject to control,
//! obstacle-clearance and field-of-view constraints by a seeded
//! cross-entropy search followed by gradient and coordinate refinement.
//! Orientation (yaw/pitch of the light) is a separate box-constrained
//! quadratic program solved by projected accelerated gradient.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Constraint, Error, Result};
use crate::geometry::{fov_distance, lighting_vector, wrap_angle, CameraModel, LightingVector, Vec3};
use crate::trajectory::Trajectory;

/// Per-step cap of the field-of-view penalty at and inside the avoidance radius.
pub const RTI_TERM_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Horizon length `N` in steps.
    pub horizon: usize,
    pub dt: f64,
    /// α: deviation from the reference.
    pub w_position: f64,
    /// β: change between consecutive controls.
    pub w_control: f64,
    /// γ: obstacle proximity.
    pub w_obstacle: f64,
    /// δ: field-of-view proximity.
    pub w_rti: f64,
    /// ζ: orientation error.
    pub w_orientation: f64,
    /// κ: change between consecutive orientation rates.
    pub w_orientation_rate: f64,
    /// Detection radius around the field of view, meters.
    pub fov_detect_radius: f64,
    /// Avoidance radius around the field of view, meters.
    pub fov_avoid_radius: f64,
    /// Clearance below which the obstacle penalty is active, meters.
    pub obstacle_margin: f64,
    /// Radius of the light-carrying vehicle, meters.
    pub light_radius: f64,
    pub accel_limit: f64,
    pub vel_limit: f64,
    pub yaw_rate_limit: f64,
    pub pitch_rate_limit: f64,
    pub pitch_min: f64,
    pub pitch_max: f64,
    /// Candidates drawn per cross-entropy iteration.
    pub samples: usize,
    pub iterations: usize,
    pub refine_sweeps: usize,
    pub seed: u64,
    /// Position error below which a capture may be taken, meters.
    pub capture_tolerance: f64,
    /// Longest wait at an RTI position before the capture is skipped, seconds.
    pub max_wait: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 10,
            dt: 0.1,
            w_position: 1.0,
            w_control: 0.05,
            w_obstacle: 20.0,
            w_rti: 1.0,
            w_orientation: 1.0,
            w_orientation_rate: 0.1,
            fov_detect_radius: 0.5,
            fov_avoid_radius: 0.05,
            obstacle_margin: 0.3,
            light_radius: 0.1,
            accel_limit: 2.0,
            vel_limit: 1.0,
            yaw_rate_limit: 1.5,
            pitch_rate_limit: 1.0,
            pitch_min: -1.2,
            pitch_max: 1.2,
            samples: 24,
            iterations: 3,
            refine_sweeps: 2,
            seed: 7,
            capture_tolerance: 0.05,
            max_wait: 10.0,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.w_position,
            self.w_control,
            self.w_obstacle,
            self.w_rti,
            self.w_orientation,
            self.w_orientation_rate,
        ];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Precondition("MPC weights must be non-negative".into()));
        }
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(Error::Precondition("MPC needs horizon >= 1 and dt > 0".into()));
        }
        if !(self.fov_avoid_radius < self.fov_detect_radius) {
            return Err(Error::Precondition(
                "avoidance radius must be below the detection radius".into(),
            ));
        }
        if !(self.accel_limit > 0.0 && self.vel_limit > 0.0) {
            return Err(Error::Precondition("acceleration and velocity limits must be positive".into()));
        }
        if !(self.yaw_rate_limit >= 0.0 && self.pitch_rate_limit >= 0.0)
            || !(self.pitch_min <= self.pitch_max)
        {
            return Err(Error::Precondition("invalid orientation limits".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

/// Static spheres plus the camera-carrying vehicle, which is both an
/// obstacle and the source of the field-of-view keep-out region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub spheres: Vec<Sphere>,
    pub camera: CameraModel,
}

impl ObstacleSet {
    pub fn validate(&self) -> Result<()> {
        if self.spheres.iter().any(|s| !(s.radius > 0.0)) {
            return Err(Error::Precondition("obstacle radii must be positive".into()));
        }
        self.camera.validate()
    }

    /// Smallest clearance between a vehicle of radius `body` at `p` and any
    /// obstacle, the camera vehicle included.
    pub fn clearance(&self, p: &Vec3, body: f64) -> f64 {
        let cam = (p - self.camera.position).norm() - self.camera.body_radius - body;
        self.spheres
            .iter()
            .map(|s| (p - s.center).norm() - s.radius - body)
            .fold(cam, f64::min)
    }

    fn all_spheres(&self) -> impl Iterator<Item = Sphere> + '_ {
        std::iter::once(Sphere { center: self.camera.position, radius: self.camera.body_radius })
            .chain(self.spheres.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PointMassState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Control applied on the previous step.
    pub last_control: Vec3,
}

impl PointMassState {
    pub fn at(position: Vec3) -> Self {
        PointMassState { position, ..Default::default() }
    }

    pub fn step(&self, u: &Vec3, dt: f64) -> PointMassState {
        PointMassState {
            position: self.position + self.velocity * dt + u * (0.5 * dt * dt),
            velocity: self.velocity + u * dt,
            last_control: *u,
        }
    }
}

/// Field-of-view penalty for one step:
/// `(min{0, (d - r_d) / (d - r_a)})²`, capped at [`RTI_TERM_CAP`].
pub fn rti_term(d_fov: f64, r_detect: f64, r_avoid: f64) -> f64 {
    if d_fov >= r_detect {
        return 0.0;
    }
    if d_fov <= r_avoid {
        return RTI_TERM_CAP;
    }
    let ratio = (d_fov - r_detect) / (d_fov - r_avoid);
    (ratio.min(0.0).powi(2)).min(RTI_TERM_CAP)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub position: f64,
    pub control: f64,
    pub obstacle: f64,
    pub rti: f64,
    /// Weighted total `J_p`.
    pub total: f64,
}

/// A single position-MPC instance.
#[derive(Debug, Clone, Copy)]
pub struct PositionProblem<'a> {
    pub state: PointMassState,
    /// Reference positions for steps `1..=N`; a shorter slice is padded with
    /// its last entry.
    pub reference: &'a [Vec3],
    pub obstacles: &'a ObstacleSet,
    pub cfg: &'a MpcConfig,
}

impl PositionProblem<'_> {
    fn reference_at(&self, k: usize) -> Vec3 {
        let r = self.reference;
        r.get(k).or(r.last()).copied().unwrap_or(self.state.position)
    }

    pub fn rollout(&self, controls: &[Vec3]) -> Vec<PointMassState> {
        let mut s = self.state;
        controls
            .iter()
            .map(|u| {
                s = s.step(u, self.cfg.dt);
                s
            })
            .collect()
    }

    fn hinge(&self, clearance: f64) -> f64 {
        let s = self.cfg.obstacle_margin - clearance;
        if s > 0.0 {
            s * s
        } else {
            0.0
        }
    }

    /// Cost terms of `controls` (length `N`).
    pub fn cost(&self, controls: &[Vec3]) -> CostBreakdown {
        let cfg = self.cfg;
        let mut c = CostBreakdown::default();
        let mut prev = self.state.last_control;
        for u in controls {
            c.control += (u - prev).norm_squared();
            prev = *u;
        }
        for (k, s) in self.rollout(controls).iter().enumerate() {
            c.position += (s.position - self.reference_at(k)).norm_squared();
            for sp in self.obstacles.all_spheres() {
                let clearance = (s.position - sp.center).norm() - sp.radius - cfg.light_radius;
                c.obstacle += self.hinge(clearance);
            }
            let d = fov_distance(&s.position, &self.obstacles.camera).unwrap_or(f64::NEG_INFINITY);
            c.rti += rti_term(d, cfg.fov_detect_radius, cfg.fov_avoid_radius);
        }
        c.total = cfg.w_position * c.position
            + cfg.w_control * c.control
            + cfg.w_obstacle * c.obstacle
            + cfg.w_rti * c.rti;
        c
    }

    /// Analytic gradient of `α J_pos + β J_c + γ J_obs` with respect to the
    /// controls.
    pub fn smooth_gradient(&self, controls: &[Vec3]) -> Vec<Vec3> {
        let cfg = self.cfg;
        let n = controls.len();
        let dt2 = cfg.dt * cfg.dt;
        let states = self.rollout(controls);
        let dp: Vec<Vec3> = states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut g = (s.position - self.reference_at(k)) * (2.0 * cfg.w_position);
                for sp in self.obstacles.all_spheres() {
                    let off = s.position - sp.center;
                    let dist = off.norm();
                    let h = cfg.obstacle_margin - (dist - sp.radius - cfg.light_radius);
                    if h > 0.0 && dist > 0.0 {
                        g -= off * (2.0 * cfg.w_obstacle * h / dist);
                    }
                }
                g
            })
            .collect();
        (0..n)
            .map(|j| {
                // Step k (1-based k = i + 1) depends on u_j with weight (k - j - 1/2) dt².
                let mut g = Vec3::zeros();
                for (i, d) in dp.iter().enumerate().skip(j) {
                    g += d * ((i as f64 + 0.5 - j as f64) * dt2);
                }
                let prev = if j == 0 { self.state.last_control } else { controls[j - 1] };
                g += (controls[j] - prev) * (2.0 * cfg.w_control);
                if j + 1 < n {
                    g -= (controls[j + 1] - controls[j]) * (2.0 * cfg.w_control);
                }
                g
            })
            .collect()
    }

    /// First violated hard constraint of the rolled-out controls, if any.
    pub fn violation(&self, controls: &[Vec3]) -> Option<(Constraint, String)> {
        let cfg = self.cfg;
        let tol = 1e-12;
        let mut s = self.state;
        for (k, u) in controls.iter().enumerate() {
            if u.amax() > cfg.accel_limit + tol {
                return Some((Constraint::Control, format!("step {k}: |u| = {:.4}", u.amax())));
            }
            s = s.step(u, cfg.dt);
            if s.velocity.amax() > cfg.vel_limit + tol {
                return Some((Constraint::Control, format!("step {k}: |v| = {:.4}", s.velocity.amax())));
            }
            let clearance = self.obstacles.clearance(&s.position, cfg.light_radius);
            if clearance < 0.0 {
                return Some((Constraint::Obstacle, format!("step {k}: clearance {clearance:.4}")));
            }
            let d = fov_distance(&s.position, &self.obstacles.camera).unwrap_or(f64::NEG_INFINITY);
            if d < 0.0 {
                return Some((Constraint::FieldOfView, format!("step {k}: d_FoV {d:.4}")));
            }
        }
        None
    }

    fn clamp(&self, u: Vec3) -> Vec3 {
        let a = self.cfg.accel_limit;
        u.map(|x| x.clamp(-a, a))
    }

    /// Per-step control that respects the velocity box from state `s`.
    fn limit(&self, s: &PointMassState, u: Vec3) -> Vec3 {
        let (a, vmax, dt) = (self.cfg.accel_limit, self.cfg.vel_limit, self.cfg.dt);
        Vec3::from_fn(|i, _| {
            let lo = ((-vmax - s.velocity[i]) / dt).max(-a);
            let hi = ((vmax - s.velocity[i]) / dt).min(a);
            if lo > hi {
                // Already beyond the box: brake as hard as allowed.
                if s.velocity[i] > 0.0 { -a } else { a }
            } else {
                u[i].clamp(lo, hi)
            }
        })
    }

    fn feedback_candidate(&self, law: impl Fn(&PointMassState, &Vec3) -> Vec3) -> Vec<Vec3> {
        let mut s = self.state;
        (0..self.cfg.horizon)
            .map(|k| {
                let u = self.limit(&s, law(&s, &self.reference_at(k)));
                s = s.step(&u, self.cfg.dt);
                u
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSolution {
    pub controls: Vec<Vec3>,
    pub cost: CostBreakdown,
}

/// Evaluates `J_p` and its terms for a control sequence.
pub fn position_cost(
    controls: &[Vec3],
    state: &PointMassState,
    reference: &[Vec3],
    obstacles: &ObstacleSet,
    cfg: &MpcConfig,
) -> CostBreakdown {
    PositionProblem { state: *state, reference, obstacles, cfg }.cost(controls)
}

struct Search<'a> {
    problem: &'a PositionProblem<'a>,
    best: Option<(f64, Vec<Vec3>)>,
    last_violation: Option<(Constraint, String)>,
}

impl Search<'_> {
    /// Returns the cost of a feasible candidate and keeps the best one.
    fn offer(&mut self, controls: Vec<Vec3>) -> Option<f64> {
        if let Some(v) = self.problem.violation(&controls) {
            self.last_violation = Some(v);
            return None;
        }
        let cost = self.problem.cost(&controls).total;
        if self.best.as_ref().is_none_or(|b| cost < b.0) {
            self.best = Some((cost, controls));
        }
        Some(cost)
    }
}

/// Feasible control sequence no worse than any evaluated candidate.
pub fn solve_position_mpc(
    problem: &PositionProblem,
    warm_start: Option<&[Vec3]>,
    seed: u64,
) -> Result<PositionSolution> {
    let cfg = problem.cfg;
    let n = cfg.horizon;
    let dt = cfg.dt;
    let mut search = Search { problem, best: None, last_violation: None };

    // Deterministic candidates.
    let mut seeds: Vec<Vec<Vec3>> = vec![vec![Vec3::zeros(); n]];
    seeds.push(problem.feedback_candidate(|s, _| -s.velocity / dt));
    seeds.push(problem.feedback_candidate(|s, r| (r - s.position - s.velocity * dt) * (2.0 / (dt * dt))));
    let (kp, kd) = (16.0, 8.0);
    seeds.push(problem.feedback_candidate(|s, r| (r - s.position) * kp - s.velocity * kd));
    if let Some(w) = warm_start {
        if !w.is_empty() {
            let mut shifted: Vec<Vec3> = w.iter().skip(1).copied().collect();
            let last = *w.last().unwrap();
            shifted.resize(n, last);
            shifted.truncate(n);
            seeds.push(shifted.iter().map(|u| problem.clamp(*u)).collect());
        }
    }
    for s in seeds {
        search.offer(s);
    }

    // Cross-entropy iterations around the best feasible candidate.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean: Vec<Vec3> = match &search.best {
        Some((_, c)) => c.clone(),
        None => vec![Vec3::zeros(); n],
    };
    let mut std = vec![Vec3::repeat(cfg.accel_limit * 0.5); n];
    let elites = (cfg.samples / 4).max(2);
    for _ in 0..cfg.iterations {
        let mut scored: Vec<(f64, Vec<Vec3>)> = Vec::with_capacity(cfg.samples);
        for _ in 0..cfg.samples {
            let cand: Vec<Vec3> = (0..n)
                .map(|k| {
                    let u = Vec3::from_fn(|i, _| {
                        let sd = std[k][i].max(1e-9);
                        mean[k][i] + Normal::new(0.0, sd).unwrap().sample(&mut rng)
                    });
                    problem.clamp(u)
                })
                .collect();
            if let Some(c) = search.offer(cand.clone()) {
                scored.push((c, cand));
            }
        }
        if scored.len() < 2 {
            continue;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored.truncate(elites);
        let m = scored.len() as f64;
        for k in 0..n {
            let mu: Vec3 = scored.iter().map(|(_, c)| c[k]).sum::<Vec3>() / m;
            let var: Vec3 = scored
                .iter()
                .map(|(_, c)| (c[k] - mu).component_mul(&(c[k] - mu)))
                .sum::<Vec3>()
                / m;
            mean[k] = mu;
            std[k] = var.map(f64::sqrt) * 0.8 + std[k] * 0.2;
        }
    }

    let Some((mut best_cost, mut best)) = search.best.take() else {
        let (constraint, detail) = search
            .last_violation
            .unwrap_or((Constraint::Control, "no candidate evaluated".into()));
        return Err(Error::Infeasible { constraint, detail });
    };

    // Projected gradient steps on the smooth terms, accepted only if the full
    // cost drops and the result stays feasible.
    let mut step = 0.5 / (cfg.w_position * dt.powi(4) * (n * n) as f64 + cfg.w_control * 4.0 + 1e-9);
    for _ in 0..6 {
        let g = problem.smooth_gradient(&best);
        let cand: Vec<Vec3> = best.iter().zip(&g).map(|(u, gi)| problem.clamp(u - gi * step)).collect();
        if problem.violation(&cand).is_none() {
            let c = problem.cost(&cand).total;
            if c < best_cost {
                best_cost = c;
                best = cand;
                step *= 1.5;
                continue;
            }
        }
        step *= 0.3;
    }

    // Coordinate refinement.
    let mut delta = cfg.accel_limit * 0.25;
    for _ in 0..cfg.refine_sweeps {
        for k in 0..n {
            for axis in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut cand = best.clone();
                    cand[k][axis] = (cand[k][axis] + sign * delta).clamp(-cfg.accel_limit, cfg.accel_limit);
                    if problem.violation(&cand).is_some() {
                        continue;
                    }
                    let c = problem.cost(&cand).total;
                    if c < best_cost {
                        best_cost = c;
                        best = cand;
                        break;
                    }
                }
            }
        }
        delta *= 0.5;
    }
    let cost = problem.cost(&best);
    Ok(PositionSolution { controls: best, cost })
}

/// Yaw/pitch of the light and the rates applied on the previous step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OrientationState {
    pub yaw: f64,
    pub pitch: f64,
    pub last_rates: [f64; 2],
}

/// Yaw and pitch of the direction from `from` toward `to`.
pub fn bearing(from: &Vec3, to: &Vec3) -> (f64, f64) {
    let d = to - from;
    (d.y.atan2(d.x), d.z.atan2(d.x.hypot(d.y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OrientationCost {
    pub orientation: f64,
    pub rate: f64,
    /// Weighted total `J_o`.
    pub total: f64,
}

/// `J_o = ζ J_or + κ J_co` for a rate sequence `[yaw_rate, pitch_rate]`.
pub fn orientation_cost(
    state: &OrientationState,
    rates: &[[f64; 2]],
    target: (f64, f64),
    cfg: &MpcConfig,
) -> OrientationCost {
    let mut c = OrientationCost::default();
    let (mut yaw, mut pitch) = (state.yaw, state.pitch);
    let mut prev = state.last_rates;
    for r in rates {
        yaw += r[0] * cfg.dt;
        pitch += r[1] * cfg.dt;
        c.orientation += wrap_angle(yaw - target.0).powi(2) + (pitch - target.1).powi(2);
        c.rate += (r[0] - prev[0]).powi(2) + (r[1] - prev[1]).powi(2);
        prev = *r;
    }
    c.total = cfg.w_orientation * c.orientation + cfg.w_orientation_rate * c.rate;
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationSolution {
    pub rates: Vec<[f64; 2]>,
    pub cost: OrientationCost,
    /// Target after clamping into the pitch limits.
    pub target: (f64, f64),
    /// Angular distance between the desired and the clamped target.
    pub residual: f64,
}

/// Box-constrained QP on one axis: angle `θ_k = θ_0 + dt Σ_{j<k} ω_j`.
fn solve_axis(
    start: f64,
    target: f64,
    last_rate: f64,
    rate_limit: f64,
    limits: Option<(f64, f64)>,
    cfg: &MpcConfig,
) -> Vec<f64> {
    let n = cfg.horizon;
    let (zeta, kappa, dt) = (cfg.w_orientation, cfg.w_orientation_rate, cfg.dt);
    let lip = 2.0 * zeta * dt * dt * (n * (n + 1)) as f64 / 2.0 + 8.0 * kappa + 1e-12;
    let project = |w: &mut [f64]| {
        let mut th = start;
        for x in w.iter_mut() {
            *x = x.clamp(-rate_limit, rate_limit);
            if let Some((lo, hi)) = limits {
                let next = th + *x * dt;
                if next > hi {
                    *x = ((hi - th) / dt).min(*x).max(-rate_limit);
                } else if next < lo {
                    *x = ((lo - th) / dt).max(*x).min(rate_limit);
                }
            }
            th += *x * dt;
        }
    };
    let grad = |w: &[f64]| -> Vec<f64> {
        let mut err_suffix = vec![0.0; n + 1];
        let mut th = start;
        let mut errs = Vec::with_capacity(n);
        for x in w {
            th += x * dt;
            errs.push(th - target);
        }
        for k in (0..n).rev() {
            err_suffix[k] = err_suffix[k + 1] + errs[k];
        }
        (0..n)
            .map(|j| {
                let prev = if j == 0 { last_rate } else { w[j - 1] };
                let mut g = 2.0 * zeta * dt * err_suffix[j] + 2.0 * kappa * (w[j] - prev);
                if j + 1 < n {
                    g -= 2.0 * kappa * (w[j + 1] - w[j]);
                }
                g
            })
            .collect()
    };
    let mut x = vec![0.0; n];
    project(&mut x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..400 {
        let g = grad(&y);
        let mut next: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b / lip).collect();
        project(&mut next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        y = next.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        x = next;
        t = t_next;
    }
    x
}

/// Rates steering the light toward `target` (yaw, pitch) within the rate
/// and pitch limits.
pub fn solve_orientation_mpc(
    state: &OrientationState,
    target: (f64, f64),
    cfg: &MpcConfig,
) -> OrientationSolution {
    let clamped_pitch = target.1.clamp(cfg.pitch_min, cfg.pitch_max);
    let residual = (target.1 - clamped_pitch).abs();
    let yaw_goal = state.yaw + wrap_angle(target.0 - state.yaw);
    let yaw = solve_axis(state.yaw, yaw_goal, state.last_rates[0], cfg.yaw_rate_limit, None, cfg);
    let pitch = solve_axis(
        state.pitch,
        clamped_pitch,
        state.last_rates[1],
        cfg.pitch_rate_limit,
        Some((cfg.pitch_min, cfg.pitch_max)),
        cfg,
    );
    let rates: Vec<[f64; 2]> = yaw.into_iter().zip(pitch).map(|(a, b)| [a, b]).collect();
    let clamped = (target.0, clamped_pitch);
    let cost = orientation_cost(state, &rates, clamped, cfg);
    OrientationSolution { rates, cost, target: clamped, residual }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub time: f64,
    pub light_position: Vec3,
    pub light_velocity: Vec3,
    pub light_yaw: f64,
    pub light_pitch: f64,
    pub camera_position: Vec3,
    pub camera_yaw: f64,
    pub camera_pitch: f64,
    pub reference: Vec3,
    pub position_cost: CostBreakdown,
    pub orientation_cost: OrientationCost,
    pub fov_distance: f64,
    pub clearance: f64,
    /// Capture id taken on this step.
    pub capture: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub id: usize,
    /// Index of the RTI position within the sequence.
    pub rti_index: usize,
    pub time: f64,
    pub true_position: Vec3,
    pub commanded_position: Vec3,
    pub light_yaw: f64,
    pub light_pitch: f64,
    pub lighting_vector: LightingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCapture {
    pub rti_index: usize,
    pub commanded_position: Vec3,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub ooi: Vec3,
    pub camera: CameraModel,
    pub records: Vec<MissionRecord>,
    pub captures: Vec<CaptureEvent>,
    pub skipped: Vec<SkippedCapture>,
    /// Set when the controller found no feasible control and the mission stopped.
    pub aborted: Option<String>,
}

/// Capture manifest: capture id to true and commanded light pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureManifest {
    pub ooi: Vec3,
    pub camera: CameraModel,
    pub captures: Vec<CaptureEvent>,
}

impl MissionLog {
    pub fn flown_length(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| (w[1].light_position - w[0].light_position).norm())
            .sum()
    }

    /// One JSON record per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn manifest(&self) -> CaptureManifest {
        CaptureManifest { ooi: self.ooi, camera: self.camera, captures: self.captures.clone() }
    }
}

/// Closed-loop flight of `trajectory`: position and orientation MPC at every
/// step, a capture whenever the light holds at an RTI position within the
/// capture tolerance and outside the field of view. The reference waits at
/// the end of a hold until the capture is taken or `max_wait` elapses.
pub fn simulate_mission(
    trajectory: &Trajectory,
    ooi: Vec3,
    obstacles: &ObstacleSet,
    cfg: &MpcConfig,
) -> Result<MissionLog> {
    cfg.validate()?;
    obstacles.validate()?;
    if trajectory.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    let cfg = MpcConfig { dt: trajectory.dt, ..cfg.clone() };
    let dt = cfg.dt;
    let samples = &trajectory.samples;
    let last_hold: Vec<bool> = (0..samples.len())
        .map(|i| samples[i].hold && samples.get(i + 1).is_none_or(|n| !n.hold || n.rti_index != samples[i].rti_index))
        .collect();

    let mut log = MissionLog {
        ooi,
        camera: obstacles.camera,
        records: Vec::new(),
        captures: Vec::new(),
        skipped: Vec::new(),
        aborted: None,
    };
    let mut state = PointMassState::at(samples[0].position);
    let (yaw0, pitch0) = bearing(&state.position, &ooi);
    let mut orient = OrientationState { yaw: yaw0, pitch: pitch0.clamp(cfg.pitch_min, cfg.pitch_max), last_rates: [0.0; 2] };
    let mut captured = std::collections::HashSet::new();
    let mut warm: Option<Vec<Vec3>> = None;
    let mut idx = 0usize;
    let mut waited = 0.0;
    let mut settle = 0usize;
    let max_settle = (cfg.max_wait / dt).ceil() as usize;
    let mut step = 0u64;

    loop {
        let reference: Vec<Vec3> = (1..=cfg.horizon)
            .map(|k| samples[(idx + k).min(samples.len() - 1)].position)
            .collect();
        let problem = PositionProblem { state, reference: &reference, obstacles, cfg: &cfg };
        let sol = match solve_position_mpc(&problem, warm.as_deref(), cfg.seed.wrapping_add(step)) {
            Ok(s) => s,
            Err(e) => {
                log.aborted = Some(e.to_string());
                break;
            }
        };
        state = state.step(&sol.controls[0], dt);
        warm = Some(sol.controls.clone());

        let target = bearing(&state.position, &ooi);
        let osol = solve_orientation_mpc(&orient, target, &cfg);
        let r = osol.rates[0];
        orient = OrientationState {
            yaw: wrap_angle(orient.yaw + r[0] * dt),
            pitch: orient.pitch + r[1] * dt,
            last_rates: r,
        };
        step += 1;

        let d_fov = fov_distance(&state.position, &obstacles.camera).unwrap_or(f64::NEG_INFINITY);
        let clearance = obstacles.clearance(&state.position, cfg.light_radius);
        let cur = samples[idx];
        let mut capture = None;
        if let (true, Some(rti)) = (cur.hold, cur.rti_index) {
            let err = (state.position - cur.position).norm();
            if !captured.contains(&rti) && err < cfg.capture_tolerance && d_fov >= 0.0 && clearance >= 0.0 {
                let id = log.captures.len();
                log.captures.push(CaptureEvent {
                    id,
                    rti_index: rti,
                    time: step as f64 * dt,
                    true_position: state.position,
                    commanded_position: cur.position,
                    light_yaw: orient.yaw,
                    light_pitch: orient.pitch,
                    lighting_vector: lighting_vector(&state.position, &ooi, &obstacles.camera)?,
                });
                captured.insert(rti);
                capture = Some(id);
            }
        }
        log.records.push(MissionRecord {
            time: step as f64 * dt,
            light_position: state.position,
            light_velocity: state.velocity,
            light_yaw: orient.yaw,
            light_pitch: orient.pitch,
            camera_position: obstacles.camera.position,
            camera_yaw: obstacles.camera.yaw,
            camera_pitch: obstacles.camera.pitch,
            reference: cur.position,
            position_cost: sol.cost,
            orientation_cost: osol.cost,
            fov_distance: d_fov,
            clearance,
            capture,
        });

        if idx + 1 >= samples.len() {
            settle += 1;
            let err = (state.position - cur.position).norm();
            if (err < cfg.capture_tolerance && state.velocity.norm() < 0.05) || settle > max_settle {
                break;
            }
            continue;
        }
        let pending = cur.rti_index.is_some_and(|r| !captured.contains(&r));
        if last_hold[idx] && pending {
            waited += dt;
            if waited <= cfg.max_wait {
                continue;
            }
            log.skipped.push(SkippedCapture {
                rti_index: cur.rti_index.unwrap(),
                commanded_position: cur.position,
                reason: format!(
                    "position not reached within {:.1} s (error {:.3} m, d_FoV {:.3} m)",
                    cfg.max_wait,
                    (state.position - cur.position).norm(),
                    d_fov
                ),
            });
        }
        waited = 0.0;
        idx += 1;
    }
    if log.aborted.is_some() {
        for (rti, _, last) in trajectory.holds() {
            if !captured.contains(&rti) && !log.skipped.iter().any(|s| s.rti_index == rti) {
                log.skipped.push(SkippedCapture {
                    rti_index: rti,
                    commanded_position: samples[last].position,
                    reason: "mission aborted before reaching the position".into(),
                });
            }
        }
    }
    Ok(log)
}

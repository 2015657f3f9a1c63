//! Time-sampled reference trajectory with hover holds at RTI positions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::sequencing::{Label, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub position: Vec3,
    /// Part of a hover hold at an RTI position.
    pub hold: bool,
    /// Index of the RTI position within the sequence, for hold samples.
    pub rti_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub dt: f64,
    /// Sampling distance along a leg, `v_des * dt`.
    pub d_rti: f64,
    pub n_hover: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// Sample index ranges `(rti_index, first, last)` of every hold block.
    pub fn holds(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            if let (true, Some(r)) = (s.hold, s.rti_index) {
                match out.last_mut() {
                    Some(last) if last.0 == r && last.2 + 1 == i => last.2 = i,
                    _ => out.push((r, i, i)),
                }
            }
        }
        out
    }
}

/// Number of hold samples for a stabilization time; at least one.
pub fn hover_count(t_stab: f64, dt: f64) -> usize {
    ((t_stab / dt - 1e-9).ceil().max(1.0)) as usize
}

/// Samples straight legs between consecutive sequence entries at spacing at
/// most `v_des * dt`, repeating each RTI position for the stabilization time.
pub fn generate_trajectory(seq: &Sequence, v_des: f64, dt: f64, t_stab: f64) -> Result<Trajectory> {
    if !(v_des > 0.0) || !(dt > 0.0) || !(t_stab >= 0.0) {
        return Err(Error::Precondition(format!(
            "need v_des > 0, dt > 0, t_stab >= 0 (got {v_des}, {dt}, {t_stab})"
        )));
    }
    if seq.positions.is_empty() {
        return Err(Error::Precondition("empty sequence".into()));
    }
    let d_rti = v_des * dt;
    let n_hover = hover_count(t_stab, dt);
    let mut pts: Vec<(Vec3, bool, Option<usize>)> = Vec::new();
    let is_rti = |k: usize| seq.labels.get(k).is_some_and(|l| *l != Label::Initial);

    let arrive = |pts: &mut Vec<(Vec3, bool, Option<usize>)>, k: usize| {
        let p = seq.positions[k];
        if is_rti(k) {
            pts.extend(std::iter::repeat_n((p, true, Some(k)), n_hover));
        } else {
            pts.push((p, false, None));
        }
    };

    if seq.positions.len() == 1 {
        let p = seq.positions[0];
        let idx = is_rti(0).then_some(0);
        pts.extend(std::iter::repeat_n((p, true, idx), n_hover));
    } else {
        arrive(&mut pts, 0);
        for k in 1..seq.positions.len() {
            let (a, b) = (seq.positions[k - 1], seq.positions[k]);
            let dist = (b - a).norm();
            let m = ((dist / d_rti - 1e-9).ceil().max(1.0)) as usize;
            for s in 1..m {
                pts.push((a + (b - a) * (s as f64 / m as f64), false, None));
            }
            arrive(&mut pts, k);
        }
    }
    let samples = pts
        .into_iter()
        .enumerate()
        .map(|(i, (position, hold, rti_index))| TrajectorySample {
            time: i as f64 * dt,
            position,
            hold,
            rti_index,
        })
        .collect();
    Ok(Trajectory { samples, dt, d_rti, n_hover })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequencing::Label;

    fn seq(points: &[Vec3]) -> Sequence {
        let n = points.len();
        let labels = (0..n)
            .map(|i| {
                if i == 0 || i + 1 == n {
                    Label::Initial
                } else {
                    Label::Index { index: i }
                }
            })
            .collect();
        Sequence::new(points.to_vec(), labels)
    }

    #[test]
    fn leg_and_hold_arithmetic() {
        let a = Vec3::zeros();
        let b = Vec3::new(1.0, 0.0, 0.0);
        let t = generate_trajectory(&seq(&[a, b, a]), 0.5, 0.2, 1.0).unwrap();
        assert!((t.d_rti - 0.1).abs() < 1e-15);
        assert_eq!(t.n_hover, 5);
        // Start, 9 transit samples + 5 holds, 9 transit samples + arrival.
        assert_eq!(t.len(), 1 + 9 + 5 + 9 + 1);
        assert_eq!(t.holds(), vec![(1, 10, 14)]);
        // Ten intervals of 0.1 m per leg.
        let leg: Vec<f64> = t.samples[..=10].windows(2).map(|w| (w[1].position - w[0].position).norm()).collect();
        assert_eq!(leg.len(), 10);
        assert!(leg.iter().all(|d| (d - 0.1).abs() < 1e-12));
        assert!((t.samples[3].time - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_stabilization_keeps_one_visit() {
        let a = Vec3::zeros();
        let t = generate_trajectory(&seq(&[a, Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.3, 0.3, 0.0), a]), 1.0, 0.1, 0.0)
            .unwrap();
        assert_eq!(t.n_hover, 1);
        let holds = t.holds();
        assert_eq!(holds.len(), 2);
        assert!(holds.iter().all(|h| h.1 == h.2));
    }

    #[test]
    fn single_position_hovers() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        let s = Sequence::new(vec![p], vec![Label::Index { index: 0 }]);
        let t = generate_trajectory(&s, 1.0, 0.1, 0.5).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.samples.iter().all(|x| x.position == p && x.hold));
    }

    #[test]
    fn preconditions() {
        let s = seq(&[Vec3::zeros(), Vec3::zeros()]);
        assert!(generate_trajectory(&s, 0.0, 0.1, 0.0).is_err());
        assert!(generate_trajectory(&s, 1.0, 0.0, 0.0).is_err());
        assert!(generate_trajectory(&s, 1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn spacing_and_length_invariants() {
        let pts = [
            Vec3::zeros(),
            Vec3::new(1.3, 0.2, -0.4),
            Vec3::new(-0.7, 2.0, 0.9),
            Vec3::new(-0.7, 2.0, 0.95),
            Vec3::zeros(),
        ];
        let s = seq(&pts);
        let t = generate_trajectory(&s, 0.37, 0.13, 0.4).unwrap();
        for w in t.samples.windows(2) {
            assert!((w[1].position - w[0].position).norm() <= t.d_rti + 1e-9);
            assert!((w[1].time - w[0].time - t.dt).abs() < 1e-12);
        }
        let legs = pts.len() - 1;
        assert!((t.path_length() - s.length_m).abs() <= t.d_rti * legs as f64);
        for (_, first, last) in t.holds() {
            assert!(last + 1 - first >= t.n_hover);
        }
        assert_eq!(t.samples.last().unwrap().position, Vec3::zeros());
    }
}

//! Closed visit orders over the lighting positions.
//!
//! [`sppa_sequence`] produces the safety-pilot predictable order: climb the
//! boundary column to the top row, sweep the rows boustrophedon-style back
//! down, and climb the same boundary back up to the end point. [`etsp_tour`]
//! solves the Euclidean TSP by nearest-neighbour construction followed by
//! 2-opt and Or-opt local search; [`brute_force_tour`] is the exact oracle
//! for small instances.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::lighting_plan::{LightingPlan, PlanKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Initial,
    /// Zero-based row and column of a grid position.
    Grid { row: usize, col: usize },
    /// Index into the flat list of positions.
    Index { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub positions: Vec<Vec3>,
    pub labels: Vec<Label>,
    pub length_m: f64,
}

pub fn path_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

impl Sequence {
    pub fn new(positions: Vec<Vec3>, labels: Vec<Label>) -> Sequence {
        debug_assert_eq!(positions.len(), labels.len());
        let length_m = path_length(&positions);
        Sequence { positions, labels, length_m }
    }

    /// Visits between the two endpoint entries.
    pub fn interior(&self) -> &[Vec3] {
        if self.positions.len() < 2 {
            return &[];
        }
        &self.positions[1..self.positions.len() - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,x,y,z\n");
        for (i, p) in self.positions.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", i, p.x, p.y, p.z);
        }
        s
    }
}

/// Traversal of the extra row pair inserted when the row count is odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    /// Alternate between the two rows column by column.
    #[default]
    Zigzag,
    /// Follow the first row across, return, and follow the second row across.
    DoublePass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Boundary pair chosen as start and end points of the predictable sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPair {
    /// Row of the start point (the higher of the two).
    pub start_row: usize,
    pub end_row: usize,
    /// `true` for the first column, `false` for the last.
    pub left: bool,
    pub cost: f64,
}

fn col_of(side: Side, len: usize) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => len - 1,
    }
}

/// Rows ordered from the highest (world z) to the lowest; ties keep index order.
pub fn rows_top_down(plan: &LightingPlan) -> Vec<usize> {
    let grid = plan.grid();
    let heights: Vec<f64> = grid
        .iter()
        .map(|r| r.iter().map(|p| p.z).sum::<f64>() / r.len().max(1) as f64)
        .collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| heights[b].total_cmp(&heights[a]).then(a.cmp(&b)));
    order
}

/// Closest pair of boundary positions on consecutive rows, measured as the
/// summed distance of both to the initial position. Rows with a single
/// sample have no distinct boundary columns and are skipped.
pub fn boundary_pair(plan: &LightingPlan) -> Option<BoundaryPair> {
    let grid = plan.grid();
    let order = rows_top_down(plan);
    let mut candidates: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    // Lowest row index wins ties.
    candidates.sort_by_key(|&(a, b)| a.min(b));
    let mut best: Option<BoundaryPair> = None;
    for (upper, lower) in candidates {
        let (ru, rl) = (grid[upper], grid[lower]);
        if ru.len() < 2 || rl.len() < 2 {
            continue;
        }
        for side in [Side::Left, Side::Right] {
            let cost = (ru[col_of(side, ru.len())] - plan.initial).norm()
                + (rl[col_of(side, rl.len())] - plan.initial).norm();
            if best.is_none_or(|b| cost < b.cost) {
                best = Some(BoundaryPair {
                    start_row: upper,
                    end_row: lower,
                    left: side == Side::Left,
                    cost,
                });
            }
        }
    }
    best
}

/// Consecutive rows (in top-down order) with the fewest positions in total.
/// Returns positions within the top-down order.
pub fn odd_row_pair(plan: &LightingPlan) -> Option<(usize, usize)> {
    let sizes = plan.row_sizes();
    let order = rows_top_down(plan);
    (0..order.len().saturating_sub(1))
        .min_by_key(|&t| (sizes[order[t]] + sizes[order[t + 1]], order[t].min(order[t + 1])))
        .map(|t| (t, t + 1))
}

struct Builder<'a> {
    plan: &'a LightingPlan,
    grid: Vec<&'a [Vec3]>,
    positions: Vec<Vec3>,
    labels: Vec<Label>,
}

impl Builder<'_> {
    fn push(&mut self, row: usize, col: usize) {
        self.positions.push(self.grid[row][col]);
        self.labels.push(Label::Grid { row, col });
    }

    fn push_initial(&mut self) {
        self.positions.push(self.plan.initial);
        self.labels.push(Label::Initial);
    }

    /// Columns of `row` excluding the `skip` boundary, ordered so the sweep
    /// leaves from the `from` side.
    fn sweep_cols(&self, row: usize, from: Side, skip: Option<Side>) -> Vec<usize> {
        let n = self.grid[row].len();
        let mut cols: Vec<usize> = (0..n).collect();
        if n >= 2 {
            if let Some(s) = skip {
                let c = col_of(s, n);
                cols.retain(|&x| x != c);
            }
        }
        if from == Side::Right {
            cols.reverse();
        }
        cols
    }

    fn sweep_row(&mut self, row: usize, from: Side, skip: Option<Side>) {
        for c in self.sweep_cols(row, from, skip) {
            self.push(row, c);
        }
    }

    fn sweep_pair(&mut self, upper: usize, lower: usize, from: Side, skip: Side, traversal: Traversal) {
        match traversal {
            Traversal::DoublePass => {
                self.sweep_row(upper, from, Some(skip));
                self.sweep_row(lower, from, Some(skip));
            }
            Traversal::Zigzag => {
                let sign = if from == Side::Left { 1.0 } else { -1.0 };
                let key = |row: usize, col: usize| sign * self.plan.rows[row].horizontal[col];
                let mut a = self.sweep_cols(upper, from, Some(skip)).into_iter().peekable();
                let mut b = self.sweep_cols(lower, from, Some(skip)).into_iter().peekable();
                let mut on_upper = true;
                loop {
                    let next = match (a.peek(), b.peek()) {
                        (None, None) => break,
                        (Some(_), None) => true,
                        (None, Some(_)) => false,
                        (Some(&ca), Some(&cb)) => {
                            let (ka, kb) = (key(upper, ca), key(lower, cb));
                            if (ka - kb).abs() <= 1e-12 {
                                on_upper
                            } else {
                                ka < kb
                            }
                        }
                    };
                    if next {
                        let c = a.next().unwrap();
                        self.push(upper, c);
                    } else {
                        let c = b.next().unwrap();
                        self.push(lower, c);
                    }
                    on_upper = next;
                }
            }
        }
    }
}

fn opposite(s: Side) -> Side {
    match s {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

/// Safety-pilot predictable visit order over a row-structured plan.
pub fn sppa_sequence(plan: &LightingPlan, traversal: Traversal) -> Result<Sequence> {
    if plan.kind != PlanKind::Sppa {
        return Err(Error::Precondition(
            "predictable sequencing needs a row-structured plan".into(),
        ));
    }
    if plan.rows.is_empty() || plan.rows.iter().any(|r| r.horizontal.is_empty()) {
        return Err(Error::Precondition("every row must hold at least one position".into()));
    }
    let grid = plan.grid();
    let order = rows_top_down(plan);
    let mut b = Builder {
        plan,
        grid,
        positions: Vec::with_capacity(plan.len() + 2),
        labels: Vec::with_capacity(plan.len() + 2),
    };
    b.push_initial();

    let Some(pair) = boundary_pair(plan) else {
        // No two consecutive rows with distinct boundary columns: plain
        // boustrophedon from the side nearer the initial position.
        let top = order[0];
        let row = b.grid[top];
        let mut from = if (row[0] - plan.initial).norm() <= (row[row.len() - 1] - plan.initial).norm() {
            Side::Left
        } else {
            Side::Right
        };
        for &r in &order {
            b.sweep_row(r, from, None);
            from = opposite(from);
        }
        b.push_initial();
        return Ok(Sequence::new(b.positions, b.labels));
    };

    let side = if pair.left { Side::Left } else { Side::Right };
    let start_t = order.iter().position(|&r| r == pair.start_row).unwrap();

    // Start point, then up the boundary to the top row.
    for &r in order[..=start_t].iter().rev() {
        if b.grid[r].len() >= 2 {
            b.push(r, col_of(side, b.grid[r].len()));
        }
    }

    let merged = if order.len() % 2 == 1 { odd_row_pair(plan) } else { None };
    let mut from = side;
    let mut t = 0;
    while t < order.len() {
        if merged.is_some_and(|(p, _)| p == t) {
            b.sweep_pair(order[t], order[t + 1], from, side, traversal);
            t += 2;
        } else {
            b.sweep_row(order[t], from, Some(side));
            t += 1;
        }
        from = opposite(from);
    }

    // From the bottom row up the boundary to the end point.
    for &r in order[start_t + 1..].iter().rev() {
        if b.grid[r].len() >= 2 {
            b.push(r, col_of(side, b.grid[r].len()));
        }
    }
    b.push_initial();
    Ok(Sequence::new(b.positions, b.labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtspOptions {
    /// Independent nearest-neighbour starts; the best local optimum wins.
    pub restarts: usize,
    pub seed: u64,
    /// Candidate-list size for the neighbour-restricted moves.
    pub neighbors: usize,
}

impl Default for EtspOptions {
    fn default() -> Self {
        EtspOptions { restarts: 4, seed: 0x5eed, neighbors: 12 }
    }
}

const EPS: f64 = 1e-10;

struct Tour<'a> {
    pts: &'a [Vec3],
    order: Vec<usize>,
    pos: Vec<usize>,
}

impl<'a> Tour<'a> {
    fn new(pts: &'a [Vec3], order: Vec<usize>) -> Self {
        let mut pos = vec![0; order.len()];
        for (i, &c) in order.iter().enumerate() {
            pos[c] = i;
        }
        Tour { pts, order, pos }
    }

    fn d(&self, a: usize, b: usize) -> f64 {
        (self.pts[a] - self.pts[b]).norm()
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    fn succ(&self, c: usize) -> usize {
        self.order[(self.pos[c] + 1) % self.n()]
    }

    fn pred(&self, c: usize) -> usize {
        self.order[(self.pos[c] + self.n() - 1) % self.n()]
    }

    fn length(&self) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.d(self.order[i], self.order[(i + 1) % n])).sum()
    }

    /// Reverses the path from position `from` forward to position `to`.
    fn reverse(&mut self, from: usize, to: usize) {
        let n = self.n();
        let len = (to + n - from) % n + 1;
        let (mut i, mut j, len) = if 2 * len > n {
            ((to + 1) % n, (from + n - 1) % n, n - len)
        } else {
            (from, to, len)
        };
        for _ in 0..len / 2 {
            self.order.swap(i, j);
            self.pos[self.order[i]] = i;
            self.pos[self.order[j]] = j;
            i = (i + 1) % n;
            j = (j + n - 1) % n;
        }
    }

    fn two_opt_neighbors(&mut self, neigh: &[Vec<usize>]) -> bool {
        let mut any = false;
        let mut improved = true;
        while improved {
            improved = false;
            for a in 0..self.n() {
                'dirs: for forward in [true, false] {
                    let b = if forward { self.succ(a) } else { self.pred(a) };
                    let d_ab = self.d(a, b);
                    for &c in &neigh[a] {
                        let d_ac = self.d(a, c);
                        if d_ab - d_ac <= EPS {
                            break;
                        }
                        let e = if forward { self.succ(c) } else { self.pred(c) };
                        if c == b || e == a {
                            continue;
                        }
                        let delta = d_ac + self.d(b, e) - d_ab - self.d(c, e);
                        if delta < -EPS {
                            if forward {
                                self.reverse(self.pos[b], self.pos[c]);
                            } else {
                                self.reverse(self.pos[a], self.pos[e]);
                            }
                            improved = true;
                            any = true;
                            break 'dirs;
                        }
                    }
                }
            }
        }
        any
    }

    /// One exhaustive 2-opt sweep; applies the first improving move found.
    fn two_opt_full(&mut self) -> bool {
        let n = self.n();
        for i in 0..n {
            let (a, b) = (self.order[i], self.order[(i + 1) % n]);
            let d_ab = self.d(a, b);
            for j in i + 2..n {
                let (c, e) = (self.order[j], self.order[(j + 1) % n]);
                if e == a {
                    continue;
                }
                let delta = self.d(a, c) + self.d(b, e) - d_ab - self.d(c, e);
                if delta < -EPS {
                    self.reverse(i + 1, j);
                    return true;
                }
            }
        }
        false
    }

    fn or_opt(&mut self, neigh: &[Vec<usize>]) -> bool {
        let n = self.n();
        let mut any = false;
        let mut improved = true;
        while improved {
            improved = false;
            // Scanning resumes after each move instead of restarting at 0.
            for i in 0..n {
                for len in 1..=3usize {
                    if n < len + 3 {
                        break;
                    }
                    let seg: Vec<usize> = (0..len).map(|k| self.order[(i + k) % n]).collect();
                    let (s0, sl) = (seg[0], seg[len - 1]);
                    let p = self.pred(s0);
                    let q = self.succ(sl);
                    let gain = self.d(p, s0) + self.d(sl, q) - self.d(p, q);
                    if gain <= EPS {
                        continue;
                    }
                    let mut best: Option<(f64, usize, bool)> = None;
                    for &c in neigh[s0].iter().chain(&neigh[sl]) {
                        if seg.contains(&c) {
                            continue;
                        }
                        for (x, y) in [(c, self.succ(c)), (self.pred(c), c)] {
                            if seg.contains(&x) || seg.contains(&y) {
                                continue;
                            }
                            let base = self.d(x, y);
                            let fwd = self.d(x, s0) + self.d(sl, y) - base;
                            let rev = self.d(x, sl) + self.d(s0, y) - base;
                            let (cost, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                            if cost - gain < -EPS && best.is_none_or(|b| cost < b.0) {
                                best = Some((cost, x, reversed));
                            }
                        }
                    }
                    if let Some((_, x, reversed)) = best {
                        self.move_segment(&seg, x, reversed);
                        improved = true;
                        any = true;
                        break;
                    }
                }
            }
        }
        any
    }

    fn move_segment(&mut self, seg: &[usize], after: usize, reversed: bool) {
        let mut rest: Vec<usize> = self.order.iter().copied().filter(|c| !seg.contains(c)).collect();
        let at = rest.iter().position(|&c| c == after).unwrap() + 1;
        let mut ins = seg.to_vec();
        if reversed {
            ins.reverse();
        }
        rest.splice(at..at, ins);
        *self = Tour::new(self.pts, rest);
    }

    fn optimize(&mut self, neigh: &[Vec<usize>]) {
        loop {
            let a = self.two_opt_neighbors(neigh);
            let b = self.or_opt(neigh);
            if !a && !b && !self.two_opt_full() {
                break;
            }
        }
    }
}

fn neighbor_lists(pts: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let n = pts.len();
    let k = k.min(n.saturating_sub(1));
    (0..n)
        .map(|a| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&b| b != a)
                .map(|b| ((pts[a] - pts[b]).norm(), b))
                .collect();
            if k < others.len() {
                others.select_nth_unstable_by(k, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                others.truncate(k);
            }
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            others.into_iter().map(|(_, b)| b).collect()
        })
        .collect()
}

fn nearest_neighbor(pts: &[Vec3], start: usize) -> Vec<usize> {
    let n = pts.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, &v) in visited.iter().enumerate() {
            if !v {
                let d = (pts[cur] - pts[j]).norm();
                if d < best.0 {
                    best = (d, j);
                }
            }
        }
        cur = best.1;
        visited[cur] = true;
        order.push(cur);
    }
    order
}

fn closed_from_order(points: &[Vec3], order: &[usize]) -> Sequence {
    let start = order.iter().position(|&c| c == 0).unwrap_or(0);
    let mut positions = Vec::with_capacity(order.len() + 1);
    let mut labels = Vec::with_capacity(order.len() + 1);
    for k in 0..order.len() {
        let c = order[(start + k) % order.len()];
        positions.push(points[c]);
        labels.push(if c == 0 { Label::Initial } else { Label::Index { index: c } });
    }
    positions.push(points[0]);
    labels.push(Label::Initial);
    Sequence::new(positions, labels)
}

pub fn etsp_tour(points: &[Vec3]) -> Result<Sequence> {
    etsp_tour_with(points, &EtspOptions::default())
}

/// ETSP tour over `points`, starting and ending at `points[0]`.
pub fn etsp_tour_with(points: &[Vec3], opts: &EtspOptions) -> Result<Sequence> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Precondition(format!("a tour needs at least 2 points, got {n}")));
    }
    if n <= 3 {
        let order: Vec<usize> = (0..n).collect();
        return Ok(closed_from_order(points, &order));
    }
    let neigh = neighbor_lists(points, opts.neighbors);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..opts.restarts.max(1) {
        let start = if r == 0 { 0 } else { rng.random_range(0..n) };
        let mut tour = Tour::new(points, nearest_neighbor(points, start));
        tour.optimize(&neigh);
        let len = tour.length();
        if best.as_ref().is_none_or(|b| len < b.0 - EPS) {
            best = Some((len, tour.order));
        }
    }
    Ok(closed_from_order(points, &best.unwrap().1))
}

pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Exact minimum closed tour by exhaustive search, starting at `points[0]`.
pub fn brute_force_tour(points: &[Vec3]) -> Result<Sequence> {
    let n = points.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyPoints { n, max: BRUTE_FORCE_LIMIT });
    }
    if n == 0 {
        return Err(Error::Precondition("a tour needs at least one point".into()));
    }
    if n <= 3 {
        let order: Vec<usize> = (0..n).collect();
        return Ok(closed_from_order(points, &order));
    }
    let d = |a: usize, b: usize| (points[a] - points[b]).norm();
    let mut best_len = f64::INFINITY;
    let mut best = Vec::new();
    let mut path = vec![0usize];
    let mut used = vec![false; n];
    used[0] = true;

    fn search(
        n: usize,
        d: &dyn Fn(usize, usize) -> f64,
        path: &mut Vec<usize>,
        used: &mut [bool],
        len: f64,
        best_len: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if len >= *best_len {
            return;
        }
        if path.len() == n {
            // Each cycle is enumerated in both directions; keep one.
            if path[1] > path[n - 1] {
                return;
            }
            let total = len + d(path[n - 1], 0);
            if total < *best_len {
                *best_len = total;
                *best = path.clone();
            }
            return;
        }
        let last = *path.last().unwrap();
        for c in 1..n {
            if !used[c] {
                used[c] = true;
                path.push(c);
                search(n, d, path, used, len + d(last, c), best_len, best);
                path.pop();
                used[c] = false;
            }
        }
    }

    search(n, &d, &mut path, &mut used, 0.0, &mut best_len, &mut best);
    Ok(closed_from_order(points, &best))
}

//! Degenerate geodesic distance between wells.
//!
//! Euclidean length weighted by √W makes travel inside a well free, so the
//! distance Γ(a,b) = inf ∫ √W(γ) |γ′| dλ prices the cheapest transition
//! through the barrier between two states. A string-style polyline descent
//! produces tight upper bounds; a 16-neighborhood lattice Dijkstra bounds
//! the same quantity along an independent route for cross-checks.

use crate::potential::{Landscape, Potential};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Polyline in the order-parameter plane, parameterized over [0,1].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UPath {
    nodes: Vec<Vec2>,
}

/// Errors from path construction and geodesic optimization.
#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid distance table: {0}")]
    InvalidTable(String),
    #[error("well index {0} out of range 0..3")]
    InvalidWellIndex(usize),
    #[error("descent stalled above tolerance after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("descent for well pair ({i},{j}) stalled after {iterations} iterations")]
    PairNoConvergence { i: usize, j: usize, iterations: usize },
}

impl UPath {
    /// Validates ≥ 2 nodes, finite coordinates, and distinct consecutive
    /// nodes.
    pub fn new(nodes: Vec<Vec2>) -> Result<Self, GeodesicError> {
        if nodes.len() < 2 {
            return Err(GeodesicError::InvalidPath("fewer than 2 nodes".into()));
        }
        if nodes.iter().any(|p| !p.is_finite()) {
            return Err(GeodesicError::InvalidPath("non-finite node".into()));
        }
        for (k, w) in nodes.windows(2).enumerate() {
            if w[0].dist(w[1]) == 0.0 {
                return Err(GeodesicError::InvalidPath(format!("repeated node at index {k}")));
            }
        }
        Ok(UPath { nodes })
    }

    /// The sanctioned degenerate path: both nodes at `p`, zero length and
    /// zero action. Used for coincident endpoints.
    pub fn trivial(p: Vec2) -> Self {
        UPath { nodes: vec![p, p] }
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn total_length(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn reversed(&self) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        UPath { nodes }
    }

    /// Minimum Euclidean distance from the polyline to a point.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + t * ab)
}

/// Composite-midpoint quadrature of √W · |γ′| over a polyline. Depends only
/// on the traversed point set, not the parameterization.
pub fn path_action<L: Landscape>(landscape: &L, path: &UPath) -> f64 {
    polyline_action(landscape, &path.nodes)
}

fn polyline_action<L: Landscape>(landscape: &L, nodes: &[Vec2]) -> f64 {
    let mut total = 0.0;
    for w in nodes.windows(2) {
        let ell = w[0].dist(w[1]);
        if ell > 0.0 {
            let mid = 0.5 * (w[0] + w[1]);
            total += landscape.value(mid).max(0.0).sqrt() * ell;
        }
    }
    total
}

/// Gradient of the discrete action with respect to node positions.
/// Endpoints are clamped (zero gradient).
fn polyline_grad<L: Landscape>(landscape: &L, nodes: &[Vec2], grad: &mut [Vec2]) {
    grad.fill(Vec2::ZERO);
    for k in 0..nodes.len() - 1 {
        let p = nodes[k];
        let q = nodes[k + 1];
        let d = q - p;
        let ell = d.norm();
        if ell < 1e-300 {
            continue;
        }
        let mid = 0.5 * (p + q);
        let s = landscape.value(mid).max(0.0).sqrt();
        // ∇√W = ∇W / (2√W) stays bounded approaching a well (both factors
        // vanish linearly); the cutoff only silences exact zeros.
        let gs = if s > 1e-14 { landscape.gradient(mid) / (2.0 * s) } else { Vec2::ZERO };
        let tangent = d / ell;
        grad[k] += 0.5 * ell * gs - s * tangent;
        grad[k + 1] += 0.5 * ell * gs + s * tangent;
    }
    let n = nodes.len();
    grad[0] = Vec2::ZERO;
    grad[n - 1] = Vec2::ZERO;
}

/// Resamples the polyline to equal arclength spacing, endpoints fixed.
fn redistribute(nodes: &mut Vec<Vec2>) {
    let n = nodes.len();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + nodes[k - 1].dist(nodes[k]);
    }
    let total = cum[n - 1];
    if total <= 1e-300 {
        return;
    }
    let mut out = nodes.clone();
    let mut seg = 0usize;
    for (k, slot) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        let target = total * k as f64 / (n - 1) as f64;
        while seg < n - 2 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        *slot = nodes[seg] + f * (nodes[seg + 1] - nodes[seg]);
    }
    *nodes = out;
}

/// Optimized path with its action and convergence metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicResult {
    pub path: UPath,
    pub action: f64,
    pub iterations: usize,
    pub final_step: f64,
}

/// Polyline descent controls.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GeodesicOpts {
    /// Node count of the optimized polyline.
    pub nodes: usize,
    /// Iteration cap across one initialization.
    pub max_iters: usize,
    /// Relative action change per redistribution cycle below which the
    /// descent is converged.
    pub tol: f64,
}

impl Default for GeodesicOpts {
    fn default() -> Self {
        GeodesicOpts { nodes: 257, max_iters: 8000, tol: 1e-8 }
    }
}

struct DescentOutcome {
    nodes: Vec<Vec2>,
    action: f64,
    iterations: usize,
    final_step: f64,
    converged: bool,
}

/// Barzilai-Borwein descent on node positions with backtracking on action
/// increase and equal-arclength redistribution every 10 accepted steps.
/// Keeps the best state ever visited, so the result never exceeds the
/// initialization's action.
fn descend_polyline<L: Landscape>(landscape: &L, init: Vec<Vec2>, opts: &GeodesicOpts) -> DescentOutcome {
    let n = init.len();
    let mut x = init;
    redistribute(&mut x);
    let mut action = polyline_action(landscape, &x);
    let mut best_action = action;
    let mut best_x = x.clone();
    let mut grad = vec![Vec2::ZERO; n];
    let mut prev: Option<(Vec<Vec2>, Vec<Vec2>)> = None;
    let mut t = 1e-2;
    let mut checkpoint = action;
    let mut iters = 0usize;
    let mut converged = false;

    'outer: while iters < opts.max_iters {
        for _ in 0..10 {
            if iters >= opts.max_iters {
                break;
            }
            polyline_grad(landscape, &x, &mut grad);
            let gn2: f64 = grad.iter().map(|g| g.norm_sq()).sum();
            if gn2.sqrt() <= 1e-14 * (1.0 + action) {
                converged = true;
                break 'outer;
            }
            if let Some((px, pg)) = &prev {
                let mut num = 0.0;
                let mut den = 0.0;
                for k in 0..n {
                    let dx = x[k] - px[k];
                    let dg = grad[k] - pg[k];
                    num += dx.norm_sq();
                    den += dx.dot(dg);
                }
                if den > 0.0 {
                    t = (num / den).clamp(1e-14, 1e6);
                } else {
                    t = (t * 2.0).min(1e6);
                }
            }
            let mut accepted = false;
            let mut trial = t;
            for _ in 0..48 {
                let cand: Vec<Vec2> = x.iter().zip(&grad).map(|(p, g)| *p - trial * *g).collect();
                let a_new = polyline_action(landscape, &cand);
                if a_new.is_finite() && a_new <= action - 1e-4 * trial * gn2 {
                    prev = Some((std::mem::replace(&mut x, cand), grad.clone()));
                    action = a_new;
                    t = trial;
                    accepted = true;
                    break;
                }
                trial *= 0.5;
                if trial < 1e-16 {
                    break;
                }
            }
            if !accepted {
                let rel = (checkpoint - action).abs() / action.max(1.0);
                converged = rel <= opts.tol;
                break 'outer;
            }
            iters += 1;
            if action < best_action {
                best_action = action;
                best_x.clone_from(&x);
            }
        }
        redistribute(&mut x);
        action = polyline_action(landscape, &x);
        prev = None;
        if action < best_action {
            best_action = action;
            best_x.clone_from(&x);
        }
        let rel = (checkpoint - action).abs() / action.max(1.0);
        if rel <= opts.tol {
            converged = true;
            break;
        }
        checkpoint = action;
    }

    DescentOutcome { nodes: best_x, action: best_action, iterations: iters, final_step: t, converged }
}

fn resample_to(nodes: &[Vec2], count: usize) -> Vec<Vec2> {
    let mut v = nodes.to_vec();
    while v.len() < count {
        let mut doubled = Vec::with_capacity(v.len() * 2 - 1);
        for w in v.windows(2) {
            doubled.push(w[0]);
            doubled.push(0.5 * (w[0] + w[1]));
        }
        doubled.push(*v.last().unwrap());
        v = doubled;
    }
    let mut out = Vec::with_capacity(count);
    let total: f64 = v.windows(2).map(|w| w[0].dist(w[1])).sum();
    if total <= 0.0 {
        return vec![v[0]; count];
    }
    let mut cum = vec![0.0; v.len()];
    for k in 1..v.len() {
        cum[k] = cum[k - 1] + v[k - 1].dist(v[k]);
    }
    let mut seg = 0usize;
    for k in 0..count {
        let target = total * k as f64 / (count - 1) as f64;
        while seg < v.len() - 2 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        out.push(v[seg] + f * (v[seg + 1] - v[seg]));
    }
    out
}

/// Geodesic descent between two points with caller-chosen waypoint
/// initializations in addition to the straight segment and two side arcs.
pub fn geodesic_between<L: Landscape>(
    landscape: &L,
    a: Vec2,
    b: Vec2,
    opts: &GeodesicOpts,
    vias: &[Vec2],
) -> Result<GeodesicResult, GeodesicError> {
    if opts.nodes < 3 || opts.max_iters == 0 || !(opts.tol > 0.0) {
        return Err(GeodesicError::InvalidPath("opts require nodes ≥ 3, max_iters ≥ 1, tol > 0".into()));
    }
    if a.dist(b) <= 1e-14 {
        return Ok(GeodesicResult { path: UPath::trivial(a), action: 0.0, iterations: 0, final_step: 0.0 });
    }
    let n = opts.nodes;
    let straight: Vec<Vec2> = (0..n)
        .map(|k| {
            let f = k as f64 / (n - 1) as f64;
            a + f * (b - a)
        })
        .collect();
    let span = b - a;
    let normal = Vec2::new(-span.y, span.x) / span.norm();
    let amp = 0.6 * span.norm();
    let mut inits: Vec<Vec<Vec2>> = vec![straight.clone()];
    for sign in [1.0, -1.0] {
        let arc: Vec<Vec2> = (0..n)
            .map(|k| {
                let f = k as f64 / (n - 1) as f64;
                a + f * span + sign * amp * (std::f64::consts::PI * f).sin() * normal
            })
            .collect();
        inits.push(arc);
    }
    for via in vias {
        inits.push(resample_to(&[a, *via, b], n));
    }

    let mut best: Option<DescentOutcome> = None;
    let mut worst_iters = 0usize;
    for init in inits {
        let out = descend_polyline(landscape, init, opts);
        worst_iters = worst_iters.max(out.iterations);
        if !out.converged {
            continue;
        }
        best = match best {
            None => Some(out),
            Some(cur) => {
                let tie = (out.action - cur.action).abs() <= 1e-12 * cur.action.max(1.0);
                if (tie && out.iterations < cur.iterations) || (!tie && out.action < cur.action) {
                    Some(out)
                } else {
                    Some(cur)
                }
            }
        };
    }
    let out = best.ok_or(GeodesicError::NoConvergence { iterations: worst_iters })?;

    let mut nodes = out.nodes;
    nodes.dedup_by(|a, b| a.dist(*b) == 0.0);
    if nodes.len() < 2 {
        nodes = vec![a, b];
    }
    let path = UPath::new(nodes)?;
    let action = path_action(landscape, &path);
    Ok(GeodesicResult { path, action, iterations: out.iterations, final_step: out.final_step })
}

/// Least-action path between two points of the well landscape. Detour
/// initializations bend around, and route through, every well away from the
/// endpoints, so the descent sees both the direct route and the channel
/// through a third well.
pub fn geodesic_distance(
    potential: &Potential,
    a: Vec2,
    b: Vec2,
    opts: &GeodesicOpts,
) -> Result<GeodesicResult, GeodesicError> {
    let vias: Vec<Vec2> = potential
        .wells()
        .iter()
        .copied()
        .filter(|c| c.dist(a) > 1e-9 && c.dist(b) > 1e-9)
        .collect();
    geodesic_between(potential, a, b, opts, &vias)
}

/// Geodesic distance from well `i` (index 0..3) to an arbitrary point.
pub fn well_distance(
    potential: &Potential,
    i: usize,
    p: Vec2,
    opts: &GeodesicOpts,
) -> Result<f64, GeodesicError> {
    if i >= 3 {
        return Err(GeodesicError::InvalidWellIndex(i));
    }
    Ok(geodesic_distance(potential, potential.well(i), p, opts)?.action)
}

/// Optimizing path for one well pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairPath {
    pub i: usize,
    pub j: usize,
    pub path: UPath,
}

/// Symmetric 3×3 matrix of pairwise well distances with the optimizing
/// paths that produced the off-diagonal entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceTable {
    gamma: [[f64; 3]; 3],
    paths: Vec<PairPath>,
}

impl DistanceTable {
    /// Builds a table from the three pairwise distances (no paths attached).
    pub fn from_pairs(g01: f64, g02: f64, g12: f64) -> Result<Self, GeodesicError> {
        let gamma = [[0.0, g01, g02], [g01, 0.0, g12], [g02, g12, 0.0]];
        let table = DistanceTable { gamma, paths: Vec::new() };
        table.check()?;
        Ok(table)
    }

    fn check(&self) -> Result<(), GeodesicError> {
        for i in 0..3 {
            if self.gamma[i][i] != 0.0 {
                return Err(GeodesicError::InvalidTable(format!("nonzero diagonal at {i}")));
            }
            for j in 0..3 {
                let v = self.gamma[i][j];
                if !v.is_finite() || (i != j && v <= 0.0) {
                    return Err(GeodesicError::InvalidTable(format!("entry ({i},{j}) = {v}")));
                }
                if (v - self.gamma[j][i]).abs() > 1e-9 {
                    return Err(GeodesicError::InvalidTable(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(())
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.gamma[i][j]
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.gamma
    }

    pub fn paths(&self) -> &[PairPath] {
        &self.paths
    }

    pub fn path_for(&self, i: usize, j: usize) -> Option<&UPath> {
        self.paths
            .iter()
            .find(|p| (p.i == i && p.j == j) || (p.i == j && p.j == i))
            .map(|p| &p.path)
    }
}

/// All three pairwise well distances. Symmetric by construction.
pub fn distance_table(potential: &Potential, opts: &GeodesicOpts) -> Result<DistanceTable, GeodesicError> {
    let mut gamma = [[0.0f64; 3]; 3];
    let mut paths = Vec::with_capacity(3);
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let r = geodesic_distance(potential, potential.well(i), potential.well(j), opts).map_err(|e| {
            match e {
                GeodesicError::NoConvergence { iterations } => {
                    GeodesicError::PairNoConvergence { i, j, iterations }
                }
                other => other,
            }
        })?;
        gamma[i][j] = r.action;
        gamma[j][i] = r.action;
        paths.push(PairPath { i, j, path: r.path });
    }
    let table = DistanceTable { gamma, paths };
    table.check()?;
    Ok(table)
}

/// Whether the optimizing path between wells `i` and `j` keeps Euclidean
/// distance ≥ `exclusion_radius` from the remaining well.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Connection {
    pub exists: bool,
    pub min_clearance: f64,
    pub witness: UPath,
}

pub fn connection_exists(
    potential: &Potential,
    i: usize,
    j: usize,
    exclusion_radius: f64,
    opts: &GeodesicOpts,
) -> Result<Connection, GeodesicError> {
    if i >= 3 {
        return Err(GeodesicError::InvalidWellIndex(i));
    }
    if j >= 3 || i == j {
        return Err(GeodesicError::InvalidWellIndex(j));
    }
    let k = 3 - i - j;
    let r = geodesic_distance(potential, potential.well(i), potential.well(j), opts)?;
    let min_clearance = r.path.distance_to(potential.well(k));
    Ok(Connection { exists: min_clearance >= exclusion_radius, min_clearance, witness: r.path })
}

/// Neighborhood offsets for the lattice oracle: axis, diagonal, and knight
/// moves. The knight moves cap the direction-quantization overestimate at
/// sec(π/16) − 1 ≈ 2%, matching the cross-check tolerance.
const LATTICE_OFFSETS: [(i32, i32); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
];

#[derive(Copy, Clone, PartialEq)]
struct HeapState {
    cost: f64,
    node: u32,
}

impl Eq for HeapState {}

impl Ord for HeapState {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed comparison turns the max-heap into a min-heap.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest weighted lattice path from `a` to `b`: n×n square grid covering
/// 1.5× the well hull (expanded to contain both endpoints), edge weight
/// ½(√W(p)+√W(q))·|p−q|. Independent of the polyline descent; used as its
/// cross-check oracle. Returns the distance and the lattice path.
pub fn lattice_oracle_path(
    potential: &Potential,
    a: Vec2,
    b: Vec2,
    n: usize,
) -> (f64, Vec<Vec2>) {
    assert!(n >= 2, "lattice needs at least 2 nodes per side");
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in potential.wells().iter().chain([&a, &b]) {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let center = 0.5 * (lo + hi);
    let half = 0.75 * (hi.x - lo.x).max(hi.y - lo.y).max(1e-3);
    let h = 2.0 * half / (n - 1) as f64;
    let pos = |ix: usize, iy: usize| {
        center + Vec2::new(ix as f64 * h - half, iy as f64 * h - half)
    };
    let idx = |ix: usize, iy: usize| (iy * n + ix) as u32;
    let snap = |p: Vec2| {
        let ix = (((p.x - center.x + half) / h).round() as i64).clamp(0, n as i64 - 1) as usize;
        let iy = (((p.y - center.y + half) / h).round() as i64).clamp(0, n as i64 - 1) as usize;
        (ix, iy)
    };

    let mut sqrt_w = vec![0.0f64; n * n];
    for iy in 0..n {
        for ix in 0..n {
            sqrt_w[(iy * n + ix) as usize] = potential.value(pos(ix, iy)).max(0.0).sqrt();
        }
    }

    let (sx, sy) = snap(a);
    let (tx, ty) = snap(b);
    let start = idx(sx, sy);
    let target = idx(tx, ty);
    let mut dist = vec![f64::INFINITY; n * n];
    let mut pred = vec![u32::MAX; n * n];
    dist[start as usize] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapState { cost: 0.0, node: start });
    while let Some(HeapState { cost, node }) = heap.pop() {
        if node == target {
            break;
        }
        if cost > dist[node as usize] {
            continue;
        }
        let ix = (node % n as u32) as i32;
        let iy = (node / n as u32) as i32;
        for (dx, dy) in LATTICE_OFFSETS {
            let jx = ix + dx;
            let jy = iy + dy;
            if jx < 0 || jy < 0 || jx >= n as i32 || jy >= n as i32 {
                continue;
            }
            let other = idx(jx as usize, jy as usize);
            let step = h * ((dx * dx + dy * dy) as f64).sqrt();
            let w = 0.5 * (sqrt_w[node as usize] + sqrt_w[other as usize]) * step;
            let next = cost + w;
            if next < dist[other as usize] {
                dist[other as usize] = next;
                pred[other as usize] = node;
                heap.push(HeapState { cost: next, node: other });
            }
        }
    }

    let mut route = Vec::new();
    let mut cur = target;
    while cur != u32::MAX {
        let ix = (cur % n as u32) as usize;
        let iy = (cur / n as u32) as usize;
        route.push(pos(ix, iy));
        if cur == start {
            break;
        }
        cur = pred[cur as usize];
    }
    route.reverse();
    (dist[target as usize], route)
}

/// Distance-only variant of [`lattice_oracle_path`].
pub fn lattice_oracle_distance(potential: &Potential, a: Vec2, b: Vec2, n: usize) -> f64 {
    lattice_oracle_path(potential, a, b, n).0
}

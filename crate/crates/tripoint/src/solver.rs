//! Steady states of −Δu + ∇W(u)/(2ε²) = 0 on the unit disk with Dirichlet
//! data from the boundary map, computed by integrating the parabolic flow
//! u_t = Δu − ∇W(u)/(2ε²) to stationarity. The discrete flow is the exact
//! gradient flow of a Lyapunov functional 𝒥 (edge-based Dirichlet energy
//! plus scaled potential), which is checked to descend on every accepted
//! step. A periodic strip domain supports a pseudo-one-dimensional
//! cross-check against an independent two-point boundary-value solve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::BoundaryMap;
use crate::heteroclinic::HeteroclinicProfile;
use crate::potential::Landscape;
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("grid step {h} too coarse for eps {eps}; need eps >= 3h")]
    ResolutionTooCoarse { eps: f64, h: f64 },
    #[error("flow energy rose by {delta} (more than the descent slack); step rejected, dt halved to {dt}")]
    EnergyIncreased { delta: f64, dt: f64 },
    #[error("field norm {sup} exceeded the a-priori bound {bound} at step {step}")]
    Blowup { sup: f64, bound: f64, step: usize },
    #[error("no convergence in {steps} steps: residual {residual} above target {target}")]
    MaxStepsExceeded {
        steps: usize,
        residual: f64,
        target: f64,
        trace: Vec<f64>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Classification of a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    /// Strictly inside the domain; evolved by the flow.
    Interior,
    /// Holds a fixed Dirichlet value read by interior stencils.
    Band,
    /// Outside the domain and never read by the flow.
    Outside,
}

#[derive(Clone, Copy, Debug)]
struct Span {
    /// Planar index of the first interior node of the run.
    base: usize,
    /// Number of interior nodes in the run.
    len: usize,
    /// Planar index aligned with `base` in the row the Laplacian reads
    /// above (wraps on the periodic strip).
    up: usize,
    /// Same for the row below.
    down: usize,
    /// Whether the vertical-edge energy to the `up` row is accumulated in
    /// the main pass; the periodic wrap row defers its edges instead.
    count_up: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    /// Unit disk |x| < 1 inside the square.
    Disk,
    /// x-interval (−1, 1) with Dirichlet columns, periodic in y.
    StripPeriodicY,
}

/// Uniform Cartesian grid on [−1,1]² with an interior mask and a Dirichlet
/// band.
#[derive(Clone, Debug)]
pub struct DiskGrid {
    n: usize,
    h: f64,
    kind: DomainKind,
    status: Vec<NodeStatus>,
    spans: Vec<Span>,
    /// Active edges incident to an interior node that the fused sweep does
    /// not visit: vertical edges whose lower endpoint is a Dirichlet node,
    /// and the periodic wrap row's vertical edges.
    extra_edges: Vec<(usize, usize)>,
    interior_count: usize,
}

/// Symmetric node coordinate: exactly antisymmetric under index mirroring.
fn coord(i: usize, n: usize) -> f64 {
    (2 * i as i64 - (n as i64 - 1)) as f64 / (n - 1) as f64
}

impl DiskGrid {
    /// Masked disk grid with `n` nodes per side.
    pub fn disk(n: usize) -> Result<DiskGrid, SolverError> {
        if n < 64 {
            return Err(SolverError::InvalidParameter(format!(
                "grid needs at least 64 nodes per side, got {n}"
            )));
        }
        let mut status = vec![NodeStatus::Outside; n * n];
        for row in 0..n {
            let y = coord(row, n);
            for col in 0..n {
                let x = coord(col, n);
                if x * x + y * y < 1.0 {
                    status[row * n + col] = NodeStatus::Interior;
                }
            }
        }
        mark_band(&mut status, n, false);
        Self::from_status(n, DomainKind::Disk, status)
    }

    /// Periodic-in-y strip grid: interior columns 1..n−1, Dirichlet columns
    /// at x = ±1.
    pub fn strip(n: usize) -> Result<DiskGrid, SolverError> {
        if n < 64 {
            return Err(SolverError::InvalidParameter(format!(
                "grid needs at least 64 nodes per side, got {n}"
            )));
        }
        let mut status = vec![NodeStatus::Outside; n * n];
        for row in 0..n {
            for col in 1..n - 1 {
                status[row * n + col] = NodeStatus::Interior;
            }
        }
        mark_band(&mut status, n, true);
        Self::from_status(n, DomainKind::StripPeriodicY, status)
    }

    fn from_status(
        n: usize,
        kind: DomainKind,
        status: Vec<NodeStatus>,
    ) -> Result<DiskGrid, SolverError> {
        let mut spans = Vec::new();
        let mut extra_edges = Vec::new();
        let mut interior_count = 0usize;
        for row in 0..n {
            let mut col = 0usize;
            while col < n {
                if status[row * n + col] != NodeStatus::Interior {
                    col += 1;
                    continue;
                }
                let c0 = col;
                while col < n && status[row * n + col] == NodeStatus::Interior {
                    col += 1;
                }
                let c1 = col - 1;
                let base = row * n + c0;
                let (up_row, wrap_up) = if row == 0 {
                    (n - 1, true)
                } else {
                    (row - 1, false)
                };
                let down_row = if row + 1 == n { 0 } else { row + 1 };
                if kind == DomainKind::Disk && (row == 0 || row + 1 == n) {
                    return Err(SolverError::InvalidParameter(
                        "disk interior touches the square edge".into(),
                    ));
                }
                spans.push(Span {
                    base,
                    len: c1 - c0 + 1,
                    up: up_row * n + c0,
                    down: down_row * n + c0,
                    count_up: !wrap_up,
                });
                interior_count += c1 - c0 + 1;
            }
        }
        // Deferred edges: wrap-row vertical edges, and vertical edges whose
        // lower endpoint is a Dirichlet node.
        for span in &spans {
            if !span.count_up {
                for k in 0..span.len {
                    extra_edges.push((span.up + k, span.base + k));
                }
            }
            for k in 0..span.len {
                let below = span.down + k;
                if status[below] == NodeStatus::Band {
                    extra_edges.push((span.base + k, below));
                }
            }
        }
        Ok(DiskGrid {
            n,
            h: 2.0 / (n - 1) as f64,
            kind,
            status,
            spans,
            extra_edges,
            interior_count,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn status(&self, row: usize, col: usize) -> NodeStatus {
        self.status[row * self.n + col]
    }

    pub fn interior_count(&self) -> usize {
        self.interior_count
    }

    /// Coordinates of the node at (row, col): (x, y).
    pub fn point(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(coord(col, self.n), coord(row, self.n))
    }

    /// Planar indices of all Dirichlet-band nodes.
    pub fn band_indices(&self) -> Vec<usize> {
        (0..self.n * self.n)
            .filter(|&i| self.status[i] == NodeStatus::Band)
            .collect()
    }
}

/// Marks as Band every non-interior node read by some interior stencil.
fn mark_band(status: &mut [NodeStatus], n: usize, wrap_y: bool) {
    let mut band = Vec::new();
    for row in 0..n {
        for col in 0..n {
            if status[row * n + col] != NodeStatus::Interior {
                continue;
            }
            let up_row = if row == 0 {
                if wrap_y {
                    Some(n - 1)
                } else {
                    None
                }
            } else {
                Some(row - 1)
            };
            let down_row = if row + 1 == n {
                if wrap_y {
                    Some(0)
                } else {
                    None
                }
            } else {
                Some(row + 1)
            };
            let mut neighbors = Vec::with_capacity(4);
            if col > 0 {
                neighbors.push(row * n + col - 1);
            }
            if col + 1 < n {
                neighbors.push(row * n + col + 1);
            }
            if let Some(r) = up_row {
                neighbors.push(r * n + col);
            }
            if let Some(r) = down_row {
                neighbors.push(r * n + col);
            }
            if neighbors.len() < 4 {
                // An interior node on the square edge has no Dirichlet
                // neighbor to read; the constructors prevent this.
                continue;
            }
            for nb in neighbors {
                if status[nb] == NodeStatus::Outside {
                    band.push(nb);
                }
            }
        }
    }
    for i in band {
        status[i] = NodeStatus::Band;
    }
}

/// Two-component field on a grid: planar layers in row-major order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Field2D {
    pub n: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

impl Field2D {
    pub fn constant(grid: &DiskGrid, value: Vec2) -> Field2D {
        let m = grid.n * grid.n;
        Field2D {
            n: grid.n,
            u1: vec![value.x; m],
            u2: vec![value.y; m],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Vec2 {
        let i = row * self.n + col;
        Vec2::new(self.u1[i], self.u2[i])
    }

    pub fn set(&mut self, row: usize, col: usize, value: Vec2) {
        let i = row * self.n + col;
        self.u1[i] = value.x;
        self.u2[i] = value.y;
    }

    pub fn sup_norm(&self, grid: &DiskGrid) -> f64 {
        let mut sup = 0.0f64;
        for span in &grid.spans {
            for k in span.base..span.base + span.len {
                sup = sup.max(self.u1[k] * self.u1[k] + self.u2[k] * self.u2[k]);
            }
        }
        sup.sqrt()
    }
}

/// Disk grid with Dirichlet band and interior both sampled from φ_ε.
pub fn make_grid(
    n: usize,
    eps: f64,
    map: &BoundaryMap,
) -> Result<(DiskGrid, Field2D), SolverError> {
    let grid = DiskGrid::disk(n)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(SolverError::InvalidParameter(format!(
            "eps {eps} outside (0, 1]"
        )));
    }
    if eps < 3.0 * grid.h {
        return Err(SolverError::ResolutionTooCoarse { eps, h: grid.h });
    }
    let mut field = Field2D::constant(&grid, Vec2::ZERO);
    for row in 0..n {
        for col in 0..n {
            if grid.status(row, col) != NodeStatus::Outside {
                field.set(row, col, map.eval_phi_eps(grid.point(row, col), eps));
            }
        }
    }
    Ok((grid, field))
}

/// Strip grid whose Dirichlet columns and interior are sampled from the
/// profile traversed across x at scale ε: u(x, y) = ζ(x/ε).
pub fn make_strip(
    n: usize,
    eps: f64,
    profile: &HeteroclinicProfile,
) -> Result<(DiskGrid, Field2D), SolverError> {
    let grid = DiskGrid::strip(n)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(SolverError::InvalidParameter(format!(
            "eps {eps} outside (0, 1]"
        )));
    }
    if eps < 3.0 * grid.h {
        return Err(SolverError::ResolutionTooCoarse { eps, h: grid.h });
    }
    let mut field = Field2D::constant(&grid, Vec2::ZERO);
    for row in 0..n {
        for col in 0..n {
            if grid.status(row, col) != NodeStatus::Outside {
                let x = coord(col, n);
                field.set(row, col, profile.evaluate(x / eps));
            }
        }
    }
    Ok((grid, field))
}

/// Largest spectral norm of the potential Hessian over the ball |u| ≤ R,
/// estimated on a polar sample and inflated as a safety margin; the
/// reaction stability bound uses this as the Lipschitz constant of ∇W.
pub fn gradient_lipschitz<L: Landscape>(landscape: &L, radius: f64) -> f64 {
    let mut sup = 0.0f64;
    for ir in 0..=16 {
        let r = radius * ir as f64 / 16.0;
        for it in 0..24 {
            let u = r * Vec2::from_angle(std::f64::consts::TAU * it as f64 / 24.0);
            sup = sup.max(landscape.hessian(u).spectral_norm());
        }
    }
    (1.2 * sup).max(1e-12)
}

/// One flow step's observable outcome.
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome {
    /// Sup norm of Δu − ∇W/(2ε²) over the interior of the pre-step field.
    pub residual: f64,
    /// Step size used.
    pub dt: f64,
    /// Lyapunov value after the step (equals the pre-step value when
    /// `converged`).
    pub energy: f64,
    /// True when the pre-step residual was already at or below the target
    /// passed to [`FlowState::step`]; the field is left untouched.
    pub converged: bool,
}

/// Explicit-Euler parabolic flow driving the field to the elliptic steady
/// state; owns double buffers and the descent bookkeeping.
pub struct FlowState {
    grid: DiskGrid,
    field: Field2D,
    next: Field2D,
    eps: f64,
    t: f64,
    dt: f64,
    dt_bound: f64,
    lambda: f64,
    energy: f64,
    energy_history: Vec<f64>,
    residual_history: Vec<f64>,
    accepted: usize,
    rejected: usize,
    sup_bound: f64,
}

impl FlowState {
    /// Prepares the flow; `sup_bound` is the blow-up guard level (fields
    /// whose norm exceeds 1.1× this abort the run).
    pub fn new<L: Landscape>(
        grid: DiskGrid,
        field: Field2D,
        landscape: &L,
        eps: f64,
        sup_bound: f64,
    ) -> FlowState {
        let sup0 = field.sup_norm(&grid);
        let lambda = gradient_lipschitz(landscape, (1.1 * sup0).max(sup_bound));
        let h = grid.h;
        let dt_bound = 0.9 * (h * h / 4.0).min(eps * eps / lambda);
        let energy = flow_energy(&grid, &field, landscape, eps);
        let next = field.clone();
        FlowState {
            grid,
            field,
            next,
            eps,
            t: 0.0,
            dt: dt_bound,
            dt_bound,
            lambda,
            energy,
            energy_history: vec![energy],
            residual_history: Vec::new(),
            accepted: 0,
            rejected: 0,
            sup_bound,
        }
    }

    pub fn grid(&self) -> &DiskGrid {
        &self.grid
    }

    pub fn field(&self) -> &Field2D {
        &self.field
    }

    pub fn into_field(self) -> Field2D {
        self.field
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Flow-energy (Lyapunov) trace over accepted steps, starting with the
    /// initial value.
    pub fn energy_history(&self) -> &[f64] {
        &self.energy_history
    }

    /// Pre-step sup residuals of accepted steps.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Experiment hook: force a step size (e.g. beyond the stability bound
    /// to observe rejection). Normal operation never needs it.
    pub fn override_dt(&mut self, dt: f64) {
        self.dt = dt;
    }

    /// Attempts one explicit Euler step. With `stop_below`, a pre-step sup
    /// residual at or below that target short-circuits: the field is left
    /// as is and the outcome reports convergence. A step that would raise
    /// the Lyapunov value beyond the relative slack is rolled back with
    /// [`SolverError::EnergyIncreased`] after halving dt; a field escaping
    /// the a-priori bound aborts with [`SolverError::Blowup`].
    pub fn step<L: Landscape>(
        &mut self,
        landscape: &L,
        stop_below: Option<f64>,
    ) -> Result<StepOutcome, SolverError> {
        let inv2e2 = 1.0 / (2.0 * self.eps * self.eps);
        let dt = self.dt;
        let h2 = self.grid.h * self.grid.h;
        let inv_h2 = 1.0 / h2;

        let mut sup_r2 = 0.0f64;
        let mut sup_u2 = 0.0f64;
        let mut vertical = 0.0f64;
        let mut w_sum = 0.0f64;

        for span in &self.grid.spans {
            let b = span.base;
            let len = span.len;
            let (c1, l1, r1, up1, dn1) = (
                &self.field.u1[b..b + len],
                &self.field.u1[b - 1..b - 1 + len],
                &self.field.u1[b + 1..b + 1 + len],
                &self.field.u1[span.up..span.up + len],
                &self.field.u1[span.down..span.down + len],
            );
            let (c2, l2, r2, up2, dn2) = (
                &self.field.u2[b..b + len],
                &self.field.u2[b - 1..b - 1 + len],
                &self.field.u2[b + 1..b + 1 + len],
                &self.field.u2[span.up..span.up + len],
                &self.field.u2[span.down..span.down + len],
            );
            // Split borrows: rows above `b` are complete in `next`; the
            // current run is written now.
            let (head1, tail1) = self.next.u1.split_at_mut(b);
            let (head2, tail2) = self.next.u2.split_at_mut(b);
            let out1 = &mut tail1[..len];
            let out2 = &mut tail2[..len];
            if span.count_up {
                let upn1 = &head1[span.up..span.up + len];
                let upn2 = &head2[span.up..span.up + len];
                for k in 0..len {
                    let u = Vec2::new(c1[k], c2[k]);
                    let g = landscape.gradient(u);
                    let lap1 = ((l1[k] + r1[k]) + (up1[k] + dn1[k]) - 4.0 * c1[k]) * inv_h2;
                    let lap2 = ((l2[k] + r2[k]) + (up2[k] + dn2[k]) - 4.0 * c2[k]) * inv_h2;
                    let rx = lap1 - g.x * inv2e2;
                    let ry = lap2 - g.y * inv2e2;
                    sup_r2 = sup_r2.max(rx * rx + ry * ry);
                    let n1 = c1[k] + dt * rx;
                    let n2 = c2[k] + dt * ry;
                    out1[k] = n1;
                    out2[k] = n2;
                    sup_u2 = sup_u2.max(n1 * n1 + n2 * n2);
                    let e1 = n1 - upn1[k];
                    let e2 = n2 - upn2[k];
                    vertical += e1 * e1 + e2 * e2;
                    w_sum += landscape.value(Vec2::new(n1, n2));
                }
            } else {
                for k in 0..len {
                    let u = Vec2::new(c1[k], c2[k]);
                    let g = landscape.gradient(u);
                    let lap1 = ((l1[k] + r1[k]) + (up1[k] + dn1[k]) - 4.0 * c1[k]) * inv_h2;
                    let lap2 = ((l2[k] + r2[k]) + (up2[k] + dn2[k]) - 4.0 * c2[k]) * inv_h2;
                    let rx = lap1 - g.x * inv2e2;
                    let ry = lap2 - g.y * inv2e2;
                    sup_r2 = sup_r2.max(rx * rx + ry * ry);
                    let n1 = c1[k] + dt * rx;
                    let n2 = c2[k] + dt * ry;
                    out1[k] = n1;
                    out2[k] = n2;
                    sup_u2 = sup_u2.max(n1 * n1 + n2 * n2);
                    w_sum += landscape.value(Vec2::new(n1, n2));
                }
            }
        }

        let residual = sup_r2.sqrt();
        if let Some(target) = stop_below {
            if residual <= target {
                return Ok(StepOutcome {
                    residual,
                    dt,
                    energy: self.energy,
                    converged: true,
                });
            }
        }

        let sup_u = sup_u2.sqrt();
        if sup_u > 1.1 * self.sup_bound {
            return Err(SolverError::Blowup {
                sup: sup_u,
                bound: 1.1 * self.sup_bound,
                step: self.accepted,
            });
        }

        // Horizontal edge energy over extended runs plus deferred edges.
        let mut horizontal = 0.0f64;
        for span in &self.grid.spans {
            let b = span.base;
            let len = span.len;
            let a1 = &self.next.u1[b - 1..b + len];
            let b1 = &self.next.u1[b..b + len + 1];
            let a2 = &self.next.u2[b - 1..b + len];
            let b2 = &self.next.u2[b..b + len + 1];
            for k in 0..=len {
                let e1 = b1[k] - a1[k];
                let e2 = b2[k] - a2[k];
                horizontal += e1 * e1 + e2 * e2;
            }
        }
        let mut extra = 0.0f64;
        for &(p, q) in &self.grid.extra_edges {
            let e1 = self.next.u1[p] - self.next.u1[q];
            let e2 = self.next.u2[p] - self.next.u2[q];
            extra += e1 * e1 + e2 * e2;
        }
        let energy_new =
            0.5 * (vertical + horizontal + extra) + h2 * inv2e2 * w_sum;

        let slack = 1e-12 * self.energy.abs();
        if energy_new > self.energy + slack {
            self.rejected += 1;
            self.dt = dt / 2.0;
            return Err(SolverError::EnergyIncreased {
                delta: energy_new - self.energy,
                dt: self.dt,
            });
        }

        std::mem::swap(&mut self.field, &mut self.next);
        self.t += dt;
        self.energy = energy_new;
        self.energy_history.push(energy_new);
        self.residual_history.push(residual);
        self.accepted += 1;
        if self.accepted % 64 == 0 {
            let radius = (1.05 * self.field.sup_norm(&self.grid)).max(1.0);
            self.lambda = gradient_lipschitz(landscape, radius);
            let h = self.grid.h;
            self.dt_bound = 0.9 * (h * h / 4.0).min(self.eps * self.eps / self.lambda);
            self.dt = self.dt_bound;
        }
        Ok(StepOutcome {
            residual,
            dt,
            energy: energy_new,
            converged: false,
        })
    }
}

/// Discrete Lyapunov functional of the flow: half the sum of squared
/// differences over active edges incident to the interior, plus
/// h²/(2ε²)·ΣW over interior nodes. The Euler update is exactly the
/// gradient descent of this quantity, so it decreases for admissible steps.
pub fn flow_energy<L: Landscape>(
    grid: &DiskGrid,
    field: &Field2D,
    landscape: &L,
    eps: f64,
) -> f64 {
    let mut edges = 0.0f64;
    let mut w_sum = 0.0f64;
    for span in &grid.spans {
        let b = span.base;
        let len = span.len;
        for k in 0..len {
            let i = b + k;
            let u = Vec2::new(field.u1[i], field.u2[i]);
            w_sum += landscape.value(u);
            if span.count_up {
                let up = span.up + k;
                let e1 = field.u1[i] - field.u1[up];
                let e2 = field.u2[i] - field.u2[up];
                edges += e1 * e1 + e2 * e2;
            }
        }
        for k in 0..=len {
            let e1 = field.u1[b + k] - field.u1[b + k - 1];
            let e2 = field.u2[b + k] - field.u2[b + k - 1];
            edges += e1 * e1 + e2 * e2;
        }
    }
    for &(p, q) in &grid.extra_edges {
        let e1 = field.u1[p] - field.u1[q];
        let e2 = field.u2[p] - field.u2[q];
        edges += e1 * e1 + e2 * e2;
    }
    let h2 = grid.h * grid.h;
    0.5 * edges + h2 / (2.0 * eps * eps) * w_sum
}

/// Sup norm over the interior of Δu − ∇W(u)/(2ε²), the stationarity
/// residual of the elliptic problem.
pub fn residual_sup<L: Landscape>(
    grid: &DiskGrid,
    field: &Field2D,
    landscape: &L,
    eps: f64,
) -> f64 {
    let inv2e2 = 1.0 / (2.0 * eps * eps);
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let mut sup_r2 = 0.0f64;
    for span in &grid.spans {
        let b = span.base;
        for k in 0..span.len {
            let i = b + k;
            let u = Vec2::new(field.u1[i], field.u2[i]);
            let g = landscape.gradient(u);
            let lap1 = ((field.u1[i - 1] + field.u1[i + 1])
                + (field.u1[span.up + k] + field.u1[span.down + k])
                - 4.0 * field.u1[i])
                * inv_h2;
            let lap2 = ((field.u2[i - 1] + field.u2[i + 1])
                + (field.u2[span.up + k] + field.u2[span.down + k])
                - 4.0 * field.u2[i])
                * inv_h2;
            let rx = lap1 - g.x * inv2e2;
            let ry = lap2 - g.y * inv2e2;
            sup_r2 = sup_r2.max(rx * rx + ry * ry);
        }
    }
    sup_r2.sqrt()
}

/// Diffuse energy ∫ ε|Du|² + W(u)/ε by midpoint quadrature over interior
/// cells, derivatives by central differences (neighbors always carry
/// values: interior or Dirichlet band).
pub fn energy_ieps<L: Landscape>(
    grid: &DiskGrid,
    field: &Field2D,
    landscape: &L,
    eps: f64,
) -> f64 {
    let h = grid.h;
    let inv_2h = 1.0 / (2.0 * h);
    let mut total = 0.0f64;
    for span in &grid.spans {
        let b = span.base;
        for k in 0..span.len {
            let i = b + k;
            let dx1 = (field.u1[i + 1] - field.u1[i - 1]) * inv_2h;
            let dx2 = (field.u2[i + 1] - field.u2[i - 1]) * inv_2h;
            let dy1 = (field.u1[span.down + k] - field.u1[span.up + k]) * inv_2h;
            let dy2 = (field.u2[span.down + k] - field.u2[span.up + k]) * inv_2h;
            let grad_sq = dx1 * dx1 + dx2 * dx2 + dy1 * dy1 + dy2 * dy2;
            let w = landscape.value(Vec2::new(field.u1[i], field.u2[i]));
            total += eps * grad_sq + w / eps;
        }
    }
    total * h * h
}

/// Steady-state report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub rejected: usize,
    pub final_residual: f64,
    pub residual_target: f64,
    pub energy_ieps: f64,
    pub flow_energy: f64,
    pub sup_norm: f64,
    pub sup_bound: f64,
    pub dt: f64,
    pub wall_seconds: f64,
}

/// Integrates the flow until the interior sup residual falls to
/// tol/ε². The blow-up guard level is max|cᵢ|+0.5 taken from the
/// landscape's claimed wells via `well_sup`.
pub fn solve_steady<L: Landscape>(
    grid: DiskGrid,
    field: Field2D,
    landscape: &L,
    eps: f64,
    tol: f64,
    max_steps: usize,
    well_sup: f64,
) -> Result<(SolveReport, Field2D), SolverError> {
    solve_steady_traced(grid, field, landscape, eps, tol, max_steps, well_sup, |_, _| {})
}

/// Same descent loop as [`solve_steady`], but invokes `observe` after every
/// accepted step (including the final, converged one) with the current flow
/// state and that step's outcome.  Rejected steps are not reported.  This is
/// the hook used to stream per-step traces to disk without duplicating the
/// acceptance/rejection policy.
#[allow(clippy::too_many_arguments)]
pub fn solve_steady_traced<L: Landscape>(
    grid: DiskGrid,
    field: Field2D,
    landscape: &L,
    eps: f64,
    tol: f64,
    max_steps: usize,
    well_sup: f64,
    mut observe: impl FnMut(&FlowState, StepOutcome),
) -> Result<(SolveReport, Field2D), SolverError> {
    if !(tol > 0.0) {
        return Err(SolverError::InvalidParameter(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let start = std::time::Instant::now();
    let target = tol / (eps * eps);
    let sup_bound = well_sup + 0.5;
    let mut state = FlowState::new(grid, field, landscape, eps, sup_bound);
    let mut steps = 0usize;
    loop {
        match state.step(landscape, Some(target)) {
            Ok(outcome) if outcome.converged => {
                observe(&state, outcome);
                let report = SolveReport {
                    iterations: state.accepted,
                    rejected: state.rejected,
                    final_residual: outcome.residual,
                    residual_target: target,
                    energy_ieps: energy_ieps(&state.grid, &state.field, landscape, eps),
                    flow_energy: state.energy,
                    sup_norm: state.field.sup_norm(&state.grid),
                    sup_bound,
                    dt: state.dt,
                    wall_seconds: start.elapsed().as_secs_f64(),
                };
                return Ok((report, state.into_field()));
            }
            Ok(outcome) => observe(&state, outcome),
            Err(SolverError::EnergyIncreased { .. }) => {}
            Err(e) => return Err(e),
        }
        steps += 1;
        if steps >= max_steps {
            let trace_start = state.residual_history.len().saturating_sub(100);
            return Err(SolverError::MaxStepsExceeded {
                steps,
                residual: state
                    .residual_history
                    .last()
                    .copied()
                    .unwrap_or(f64::INFINITY),
                target,
                trace: state.residual_history[trace_start..].to_vec(),
            });
        }
    }
}

/// A-priori bound verdict: every interior node's potential value must stay
/// below the largest of (a) the potential's sup over the validation ball,
/// (b) the sup over the Dirichlet data, and (c) the well values (zero), up
/// to tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub pass: bool,
    pub bound: f64,
    pub worst_value: f64,
    pub worst_point: Vec2,
}

pub fn apriori_bound_check<L: Landscape>(
    grid: &DiskGrid,
    field: &Field2D,
    landscape: &L,
    ball_radius: f64,
    boundary_sup: f64,
) -> BoundCheck {
    let mut ball_sup = 0.0f64;
    for ir in 0..=16 {
        let r = ball_radius * ir as f64 / 16.0;
        for it in 0..24 {
            let u = r * Vec2::from_angle(std::f64::consts::TAU * it as f64 / 24.0);
            ball_sup = ball_sup.max(landscape.value(u));
        }
    }
    let bound = ball_sup.max(boundary_sup);
    let tol = 1e-9 * (1.0 + bound);
    let mut worst_value = f64::NEG_INFINITY;
    let mut worst_point = Vec2::ZERO;
    let n = grid.n;
    for span in &grid.spans {
        for k in 0..span.len {
            let i = span.base + k;
            let w = landscape.value(Vec2::new(field.u1[i], field.u2[i]));
            if w > worst_value {
                worst_value = w;
                worst_point = grid.point(i / n, i % n);
            }
        }
    }
    BoundCheck {
        pass: worst_value <= bound + tol,
        bound,
        worst_value,
        worst_point,
    }
}

/// Sup of W over the Dirichlet band values.
pub fn boundary_potential_sup<L: Landscape>(
    grid: &DiskGrid,
    field: &Field2D,
    landscape: &L,
) -> f64 {
    grid.band_indices()
        .into_iter()
        .map(|i| landscape.value(Vec2::new(field.u1[i], field.u2[i])))
        .fold(0.0, f64::max)
}

/// Independent steady-profile oracle: solves the two-point boundary value
/// problem −w″ + ∇W(w)/(2ε²) = 0 on [−1, 1] with Dirichlet ends by damped
/// Newton iteration on a fine grid (block-tridiagonal direct linear solves),
/// then restricts to `n` coarse nodes. Shares no machinery with the flow.
pub fn strip_profile_oracle<L: Landscape>(
    landscape: &L,
    left: Vec2,
    right: Vec2,
    eps: f64,
    n: usize,
    refine: usize,
    init: impl Fn(f64) -> Vec2,
) -> Result<Vec<Vec2>, SolverError> {
    if n < 2 || refine == 0 {
        return Err(SolverError::InvalidParameter(
            "oracle needs n >= 2 and refine >= 1".into(),
        ));
    }
    let m = (n - 1) * refine + 1;
    let hf = 2.0 / (m - 1) as f64;
    let inv_hf2 = 1.0 / (hf * hf);
    let inv2e2 = 1.0 / (2.0 * eps * eps);
    let mut w: Vec<Vec2> = (0..m)
        .map(|k| {
            let x = coord(k, m);
            if k == 0 {
                left
            } else if k == m - 1 {
                right
            } else {
                init(x)
            }
        })
        .collect();

    let resid = |w: &[Vec2]| -> Vec<Vec2> {
        (1..m - 1)
            .map(|k| {
                let lap = (w[k - 1] + w[k + 1] - 2.0 * w[k]) * inv_hf2;
                lap - landscape.gradient(w[k]) * inv2e2
            })
            .collect()
    };
    let norm_sup = |f: &[Vec2]| f.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let mut f = resid(&w);
    let mut fnorm = norm_sup(&f);
    for _ in 0..200 {
        if fnorm <= 1e-11 * inv2e2.max(1.0) {
            break;
        }
        // Newton direction from the block-tridiagonal Jacobian
        // J = D² /hf² ⊗ I − Hess W/(2ε²); Thomas elimination with 2×2
        // blocks.
        let k_int = m - 2;
        let mut diag: Vec<[f64; 4]> = Vec::with_capacity(k_int);
        for k in 0..k_int {
            let hess = landscape.hessian(w[k + 1]);
            diag.push([
                -2.0 * inv_hf2 - hess.xx * inv2e2,
                -hess.xy * inv2e2,
                -hess.xy * inv2e2,
                -2.0 * inv_hf2 - hess.yy * inv2e2,
            ]);
        }
        let off = inv_hf2;
        // Forward sweep: eliminate the sub-diagonal, storing modified
        // diagonal blocks and right-hand sides (rhs = −F).
        let mut rhs: Vec<Vec2> = f.iter().map(|v| -*v).collect();
        let mut carry: Vec<[f64; 4]> = vec![[0.0; 4]; k_int];
        carry[0] = diag[0];
        for k in 1..k_int {
            let inv = invert2(carry[k - 1]).ok_or_else(|| {
                SolverError::InvalidParameter("singular oracle Jacobian block".into())
            })?;
            // factor = off · inv(prev)
            let factor = [
                off * inv[0],
                off * inv[1],
                off * inv[2],
                off * inv[3],
            ];
            carry[k] = [
                diag[k][0] - factor[0] * off,
                diag[k][1] - factor[1] * off,
                diag[k][2] - factor[2] * off,
                diag[k][3] - factor[3] * off,
            ];
            let adj = apply2(factor, rhs[k - 1]);
            rhs[k] = rhs[k] - adj;
        }
        let mut delta = vec![Vec2::ZERO; k_int];
        let inv_last = invert2(carry[k_int - 1]).ok_or_else(|| {
            SolverError::InvalidParameter("singular oracle Jacobian block".into())
        })?;
        delta[k_int - 1] = apply2(inv_last, rhs[k_int - 1]);
        for k in (0..k_int - 1).rev() {
            let inv = invert2(carry[k]).ok_or_else(|| {
                SolverError::InvalidParameter("singular oracle Jacobian block".into())
            })?;
            let r = rhs[k] - Vec2::new(off * delta[k + 1].x, off * delta[k + 1].y);
            delta[k] = apply2(inv, r);
        }
        // Damped update: backtrack until the residual norm drops.
        let mut step = 1.0f64;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<Vec2> = (0..m)
                .map(|k| {
                    if k == 0 || k == m - 1 {
                        w[k]
                    } else {
                        w[k] + step * delta[k - 1]
                    }
                })
                .collect();
            let tf = resid(&trial);
            let tnorm = norm_sup(&tf);
            if tnorm < fnorm {
                w = trial;
                f = tf;
                fnorm = tnorm;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((0..n).map(|k| w[k * refine]).collect())
}

fn invert2(m: [f64; 4]) -> Option<[f64; 4]> {
    let det = m[0] * m[3] - m[1] * m[2];
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        m[3] * inv_det,
        -m[1] * inv_det,
        -m[2] * inv_det,
        m[0] * inv_det,
    ])
}

fn apply2(m: [f64; 4], v: Vec2) -> Vec2 {
    Vec2::new(m[0] * v.x + m[1] * v.y, m[2] * v.x + m[3] * v.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{build_product_potential, equilateral_wells, Potential};

    fn equilateral() -> Potential {
        let [c1, c2, c3] = equilateral_wells();
        build_product_potential(c1, c2, c3).unwrap()
    }

    #[test]
    fn disk_mask_is_rotation_symmetric() {
        for n in [64, 65, 97] {
            let grid = DiskGrid::disk(n).unwrap();
            for row in 0..n {
                for col in 0..n {
                    // 90° rotation: (row, col) -> (col, n-1-row).
                    let rotated = grid.status(col, n - 1 - row);
                    assert_eq!(grid.status(row, col), rotated, "n={n} ({row},{col})");
                }
            }
        }
    }

    #[test]
    fn every_interior_neighbor_is_active() {
        let grid = DiskGrid::disk(96).unwrap();
        let n = grid.n();
        for row in 0..n {
            for col in 0..n {
                if grid.status(row, col) != NodeStatus::Interior {
                    continue;
                }
                for (r, c) in [
                    (row - 1, col),
                    (row + 1, col),
                    (row, col - 1),
                    (row, col + 1),
                ] {
                    assert_ne!(
                        grid.status(r, c),
                        NodeStatus::Outside,
                        "naked neighbor of ({row},{col})"
                    );
                }
            }
        }
    }

    /// The fused sweep's edge bookkeeping (left/up per node, extended rows,
    /// deferred list) covers each interior-incident active edge exactly
    /// once: its energy matches a brute-force edge enumeration.
    #[test]
    fn flow_energy_matches_brute_force_edges() {
        for (grid, wrap) in [
            (DiskGrid::disk(72).unwrap(), false),
            (DiskGrid::strip(64).unwrap(), true),
        ] {
            let p = equilateral();
            let n = grid.n();
            let mut field = Field2D::constant(&grid, Vec2::ZERO);
            // Deterministic wiggle so every edge contributes differently.
            for row in 0..n {
                for col in 0..n {
                    let s = (0.3 * row as f64).sin() + (0.17 * col as f64 + 0.5).cos();
                    field.set(row, col, Vec2::new(s, 0.5 - 0.1 * s * s));
                }
            }
            let eps = 0.2;
            let fast = flow_energy(&grid, &field, &p, eps);

            let mut edges = 0.0f64;
            let mut w_sum = 0.0f64;
            let active = |r: usize, c: usize| grid.status(r, c) != NodeStatus::Outside;
            let interior = |r: usize, c: usize| grid.status(r, c) == NodeStatus::Interior;
            for row in 0..n {
                for col in 0..n {
                    if interior(row, col) {
                        w_sum += p.value(field.get(row, col));
                    }
                    // Horizontal edge (row, col)-(row, col+1).
                    if col + 1 < n
                        && active(row, col)
                        && active(row, col + 1)
                        && (interior(row, col) || interior(row, col + 1))
                    {
                        let d = field.get(row, col) - field.get(row, col + 1);
                        edges += d.norm_sq();
                    }
                    // Vertical edge to the row below (wraps on the strip).
                    let below = if row + 1 < n {
                        Some(row + 1)
                    } else if wrap {
                        Some(0)
                    } else {
                        None
                    };
                    if let Some(rb) = below {
                        if active(row, col)
                            && active(rb, col)
                            && (interior(row, col) || interior(rb, col))
                        {
                            let d = field.get(row, col) - field.get(rb, col);
                            edges += d.norm_sq();
                        }
                    }
                }
            }
            let h2 = grid.h() * grid.h();
            let brute = 0.5 * edges + h2 / (2.0 * eps * eps) * w_sum;
            assert!(
                (fast - brute).abs() <= 1e-12 * brute.abs().max(1.0),
                "fast {fast} vs brute {brute}"
            );
        }
    }

    #[test]
    fn constant_field_is_an_exact_fixed_point() {
        let p = equilateral();
        let grid = DiskGrid::disk(64).unwrap();
        for i in 0..3 {
            let field = Field2D::constant(&grid, p.well(i));
            let r = residual_sup(&grid, &field, &p, 0.1);
            assert_eq!(r, 0.0, "well {i} residual {r}");
        }
    }

    #[test]
    fn constant_boundary_solve_converges_immediately() {
        let p = equilateral();
        let grid = DiskGrid::disk(64).unwrap();
        let field = Field2D::constant(&grid, p.well(1));
        let (report, steady) =
            solve_steady(grid.clone(), field, &p, 0.1, 1e-6, 10, 1.0).unwrap();
        assert!(report.iterations <= 2, "took {} steps", report.iterations);
        assert!(report.final_residual < 1e-10);
        assert_eq!(steady.get(32, 32), p.well(1));
        assert_eq!(report.energy_ieps, 0.0);
    }

    #[test]
    fn oversized_step_is_rejected_then_descent_recovers() {
        let p = equilateral();
        let grid = DiskGrid::disk(64).unwrap();
        let n = grid.n();
        let mut field = Field2D::constant(&grid, p.well(0));
        for row in 0..n {
            for col in 0..n {
                if grid.status(row, col) == NodeStatus::Interior {
                    let x = grid.point(row, col);
                    // Smooth swirl plus a checkerboard component: the
                    // latter sits on the stiffest stencil mode, so a step
                    // beyond the stability bound pumps energy into it
                    // without pushing the norm past the blow-up guard.
                    let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
                    field.set(
                        row,
                        col,
                        p.well(0) + 0.3 * Vec2::new(x.y, -x.x) + Vec2::new(0.02 * sign, 0.0),
                    );
                }
            }
        }
        let h = grid.h();
        let mut state = FlowState::new(grid, field, &p, 0.2, 2.0);
        // 1.8× the diffusion stability threshold h²/4: the checkerboard
        // mode grows by |1 − 8·dt/h²| ≈ 2.6 per step.
        let unstable_dt = 0.45 * h * h;
        state.override_dt(unstable_dt);
        match state.step(&p, None) {
            Err(SolverError::EnergyIncreased { delta, dt }) => {
                assert!(delta > 0.0);
                assert!(dt < unstable_dt);
            }
            other => panic!("expected EnergyIncreased, got {other:?}"),
        }
        // Keep halving until a step is accepted, then energy descends.
        let e0 = state.energy_history()[0];
        for _ in 0..64 {
            match state.step(&p, None) {
                Ok(outcome) => {
                    assert!(outcome.energy <= e0);
                    return;
                }
                Err(SolverError::EnergyIncreased { .. }) => continue,
                Err(e) => panic!("unexpected {e:?}"),
            }
        }
        panic!("halving never recovered descent");
    }

    #[test]
    fn blowup_guard_trips_on_escaping_field() {
        let p = equilateral();
        let grid = DiskGrid::disk(64).unwrap();
        let mut field = Field2D::constant(&grid, p.well(0));
        field.set(32, 32, Vec2::new(30.0, 0.0));
        let mut state = FlowState::new(grid, field, &p, 0.1, 1.5);
        // A huge node value forces the update to overshoot immediately.
        match state.step(&p, None) {
            Err(SolverError::Blowup { sup, bound, .. }) => {
                assert!(sup > bound);
            }
            other => panic!("expected Blowup, got {other:?}"),
        }
    }

    #[test]
    fn coarse_resolution_is_rejected() {
        let p = equilateral();
        let profile = {
            let l = 8.0;
            let n = 401;
            let dt = 2.0 * l / (n - 1) as f64;
            let (a, b) = (p.well(0), p.well(1));
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let values: Vec<Vec2> = (0..n)
                .map(|k| mid + (-l + k as f64 * dt).tanh() * half)
                .collect();
            HeteroclinicProfile::from_samples(&p, (0, 1), (a, b), l, values).unwrap()
        };
        match make_strip(64, 0.05, &profile) {
            Err(SolverError::ResolutionTooCoarse { eps, h }) => {
                assert!(eps < 3.0 * h);
            }
            other => panic!("expected ResolutionTooCoarse, got {other:?}"),
        }
        assert!(make_strip(64, 0.2, &profile).is_ok());
    }

    #[test]
    fn spike_fails_apriori_check_with_witness() {
        let p = equilateral();
        let grid = DiskGrid::disk(64).unwrap();
        let mut field = Field2D::constant(&grid, p.well(2));
        let check = apriori_bound_check(&grid, &field, &p, 3.0, 0.0);
        assert!(check.pass, "constant well field must pass");
        field.set(40, 30, Vec2::new(10.0, 0.0));
        let check = apriori_bound_check(&grid, &field, &p, 3.0, 0.0);
        assert!(!check.pass);
        assert!(check.worst_value > check.bound);
        let witness = check.worst_point;
        assert!(witness.dist(grid.point(40, 30)) < 1e-12);
    }

    #[test]
    fn oracle_reproduces_scalar_transition() {
        // Decoupled two-well section along x: the steady profile is the
        // scaled tanh and the oracle must land on it.
        use crate::potential::TwoWellSection;
        let section = TwoWellSection { kappa: 1.0 };
        let eps = 0.1;
        let left = Vec2::new((-1.0f64 / eps).tanh(), 0.0);
        let right = Vec2::new((1.0f64 / eps).tanh(), 0.0);
        let w = strip_profile_oracle(&section, left, right, eps, 129, 4, |x| {
            Vec2::new((x / eps).tanh(), 0.0)
        })
        .unwrap();
        let mut sup = 0.0f64;
        for (k, v) in w.iter().enumerate() {
            let x = coord(k, 129);
            sup = sup.max((v.x - (x / eps).tanh()).abs().max(v.y.abs()));
        }
        assert!(sup < 1e-3, "oracle error {sup}");
    }
}

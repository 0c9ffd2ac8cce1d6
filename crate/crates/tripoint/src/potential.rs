//! Three-well potentials on the order-parameter plane.
//!
//! The built-in family is the sextic product W(u) = ∏ᵢ |u − cᵢ|², which has
//! exactly three zero minima with nondegenerate Hessians and |u|⁶ growth.
//! Custom landscapes enter through the [`Landscape`] trait; every numerical
//! stage downstream is generic over it.

use crate::rng::SeededRng;
use crate::vec2::{Sym2, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Energy landscape on the plane: value, gradient, and Hessian evaluators.
///
/// Implementations must be pure; they are shared freely across solver
/// passes without synchronization.
pub trait Landscape {
    fn value(&self, u: Vec2) -> f64;
    fn gradient(&self, u: Vec2) -> Vec2;
    fn hessian(&self, u: Vec2) -> Sym2;
}

/// The built-in product-well potential W(u) = ∏ᵢ |u − cᵢ|².
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Potential {
    wells: [Vec2; 3],
    /// Radius beyond which the Hessian is expected positive semidefinite.
    pub k_radius: f64,
    /// Inner radius of the polynomial-growth regime.
    pub m_radius: f64,
}

/// Errors from potential construction, evaluation, and hypothesis checks.
#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("wells {0} and {1} coincide within 1e-12")]
    DuplicateWells(usize, usize),
    #[error("non-finite evaluation at u = ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hypothesis \"{name}\" violated at witness ({:.6}, {:.6})", witness.x, witness.y)]
    HypothesisViolated { name: &'static str, witness: Vec2, report: Box<HypothesisReport> },
}

/// Default outer radius for hypothesis checks: three times the farthest well.
pub fn default_check_radius(wells: &[Vec2; 3]) -> f64 {
    3.0 * wells.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Builds the product-well potential. Wells must be pairwise distinct.
pub fn build_product_potential(c1: Vec2, c2: Vec2, c3: Vec2) -> Result<Potential, PotentialError> {
    let wells = [c1, c2, c3];
    for c in &wells {
        if !c.is_finite() {
            return Err(PotentialError::NonFinite(c.x, c.y));
        }
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            if wells[i].dist(wells[j]) <= 1e-12 {
                return Err(PotentialError::DuplicateWells(i, j));
            }
        }
    }
    let r = default_check_radius(&wells);
    Ok(Potential { wells, k_radius: r, m_radius: r })
}

impl Potential {
    pub fn wells(&self) -> &[Vec2; 3] {
        &self.wells
    }

    pub fn well(&self, i: usize) -> Vec2 {
        self.wells[i]
    }

    /// Largest well magnitude; the flow's a priori bound is this plus 0.5.
    pub fn max_well_norm(&self) -> f64 {
        self.wells.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn offsets(&self, u: Vec2) -> ([Vec2; 3], [f64; 3]) {
        let d = [u - self.wells[0], u - self.wells[1], u - self.wells[2]];
        let q = [d[0].norm_sq(), d[1].norm_sq(), d[2].norm_sq()];
        (d, q)
    }
}

impl Landscape for Potential {
    #[inline]
    fn value(&self, u: Vec2) -> f64 {
        let (_, q) = self.offsets(u);
        q[0] * q[1] * q[2]
    }

    #[inline]
    fn gradient(&self, u: Vec2) -> Vec2 {
        let (d, q) = self.offsets(u);
        2.0 * (d[0] * (q[1] * q[2]) + d[1] * (q[0] * q[2]) + d[2] * (q[0] * q[1]))
    }

    fn hessian(&self, u: Vec2) -> Sym2 {
        let (d, q) = self.offsets(u);
        // W = q1 q2 q3 with qᵢ = |u−cᵢ|²: the Hessian splits into isotropic
        // terms 2 qⱼ qₖ I and rank-two couplings 4 qₖ (dᵢ⊗dⱼ + dⱼ⊗dᵢ).
        let iso = 2.0 * (q[1] * q[2] + q[0] * q[2] + q[0] * q[1]);
        let mut h = Sym2::identity_scaled(iso);
        let pairs = [(0usize, 1usize, 2usize), (0, 2, 1), (1, 2, 0)];
        for (i, j, k) in pairs {
            let w = 4.0 * q[k];
            h.xx += w * 2.0 * d[i].x * d[j].x;
            h.xy += w * (d[i].x * d[j].y + d[i].y * d[j].x);
            h.yy += w * 2.0 * d[i].y * d[j].y;
        }
        h
    }
}

/// Checked evaluation of (W, ∇W, W″) at a point.
pub fn evaluate<L: Landscape>(landscape: &L, u: Vec2) -> Result<(f64, Vec2, Sym2), PotentialError> {
    if !u.is_finite() {
        return Err(PotentialError::NonFinite(u.x, u.y));
    }
    let w = landscape.value(u);
    let g = landscape.gradient(u);
    let h = landscape.hessian(u);
    if !w.is_finite() || !g.is_finite() || !h.xx.is_finite() || !h.xy.is_finite() || !h.yy.is_finite() {
        return Err(PotentialError::NonFinite(u.x, u.y));
    }
    Ok((w, g, h))
}

/// Central-difference gradient of the landscape value, for cross-checks and
/// for landscapes supplied without an analytic gradient.
pub fn fd_gradient<L: Landscape>(landscape: &L, u: Vec2, h: f64) -> Vec2 {
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    Vec2::new(
        (landscape.value(u + ex) - landscape.value(u - ex)) / (2.0 * h),
        (landscape.value(u + ey) - landscape.value(u - ey)) / (2.0 * h),
    )
}

/// Central-difference Hessian of the landscape value.
pub fn fd_hessian<L: Landscape>(landscape: &L, u: Vec2, h: f64) -> Sym2 {
    let g = |p: Vec2| fd_gradient(landscape, p, h);
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let gx = (g(u + ex) - g(u - ex)) / (2.0 * h);
    let gy = (g(u + ey) - g(u - ey)) / (2.0 * h);
    Sym2 { xx: gx.x, xy: 0.5 * (gx.y + gy.x), yy: gy.y }
}

/// A located critical point of the landscape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: Vec2,
    pub value: f64,
    pub eig_lo: f64,
    pub eig_hi: f64,
}

/// Far-field convexity evidence over samples with |u| in (K, 4K].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FarFieldCheck {
    pub samples: usize,
    pub psd_fraction: f64,
    pub min_eigenvalue: f64,
    pub worst_point: Vec2,
}

/// Least-squares growth fit of log W against log |u| on rings |u| in [m, 8m].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthFit {
    pub samples: usize,
    pub p_hat: f64,
    pub k1: f64,
    pub k2: f64,
}

/// Per-hypothesis pass flags; each is a pure function of the evidence fields.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct HypothesisFlags {
    pub three_minima: bool,
    pub nondegenerate: bool,
    pub convex_far_field: bool,
    pub polynomial_growth: bool,
}

/// Numeric evidence for the structural requirements on a three-well
/// potential: exactly three nondegenerate zero minima, positive
/// semidefinite Hessian far out, and polynomial growth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub wells: [Vec2; 3],
    pub k_radius: f64,
    pub m_radius: f64,
    pub seed: u64,
    pub sample_budget: usize,
    /// Distinct zero-energy minima located by multistart descent.
    pub minima: Vec<CriticalPoint>,
    /// Hessian eigenvalues at the three claimed wells.
    pub well_eigenvalues: [[f64; 2]; 3],
    pub far_field: FarFieldCheck,
    pub growth: GrowthFit,
    pub flags: HypothesisFlags,
}

impl HypothesisReport {
    /// Recomputes the flags from the stored evidence.
    pub fn derive_flags(&self) -> HypothesisFlags {
        let match_tol = well_match_tol(&self.wells);
        let all_claimed_found = self
            .wells
            .iter()
            .all(|c| self.minima.iter().any(|m| m.point.dist(*c) <= match_tol));
        HypothesisFlags {
            three_minima: self.minima.len() == 3 && all_claimed_found,
            nondegenerate: self.well_eigenvalues.iter().all(|e| e[0] > 1e-9),
            convex_far_field: self.far_field.min_eigenvalue >= -1e-9,
            polynomial_growth: self.growth.p_hat >= 2.0 && self.growth.k1 > 0.0,
        }
    }
}

fn well_diameter(wells: &[Vec2; 3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in (i + 1)..3 {
            d = d.max(wells[i].dist(wells[j]));
        }
    }
    d
}

fn well_min_gap(wells: &[Vec2; 3]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..3 {
        for j in (i + 1)..3 {
            d = d.min(wells[i].dist(wells[j]));
        }
    }
    d
}

/// Identification radius for matching located minima to claimed wells.
/// Flat basins stall descent short of the exact minimum, so this is a
/// coarse fraction of the well spread rather than a solver tolerance.
fn well_match_tol(wells: &[Vec2; 3]) -> f64 {
    1e-2 * well_diameter(wells)
}

/// Armijo-backtracking gradient descent to a local minimum of the landscape.
fn descend<L: Landscape>(landscape: &L, start: Vec2, grad_tol: f64) -> Vec2 {
    let mut u = start;
    let mut t = 1e-2;
    for _ in 0..600 {
        let g = landscape.gradient(u);
        let gn2 = g.norm_sq();
        if gn2.sqrt() <= grad_tol {
            break;
        }
        let w = landscape.value(u);
        let mut accepted = false;
        for _ in 0..60 {
            let cand = u - t * g;
            if landscape.value(cand) <= w - 1e-4 * t * gn2 {
                u = cand;
                t = (t * 1.6).min(1e3);
                accepted = true;
                break;
            }
            t *= 0.5;
            if t < 1e-16 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    u
}

/// Checks the structural hypotheses by sampling: (a) exactly three distinct
/// zero minima found from a grid of descent starts, (b) strictly positive
/// Hessian eigenvalues at each well, (c) W″ positive semidefinite on samples
/// with |u| in (K, 4K], and (d) polynomial growth fitted on rings
/// |u| in [m, 8m]. Returns the report when all pass; otherwise the error
/// names the first failing hypothesis and carries the full report.
pub fn validate_hypotheses<L: Landscape>(
    landscape: &L,
    claimed_wells: [Vec2; 3],
    k_radius: f64,
    m_radius: f64,
    sample_budget: usize,
    seed: u64,
) -> Result<HypothesisReport, PotentialError> {
    if k_radius <= 0.0 || m_radius <= 0.0 {
        return Err(PotentialError::InvalidParameter("radii must be positive".into()));
    }
    if sample_budget < 1000 {
        return Err(PotentialError::InvalidParameter(format!(
            "sample budget {sample_budget} below minimum 1000"
        )));
    }

    let diam = well_diameter(&claimed_wells);
    let centroid = (claimed_wells[0] + claimed_wells[1] + claimed_wells[2]) / 3.0;
    let half_box = 0.75 * diam + 0.25;
    let w_ref = 1.0 + landscape.value(centroid).abs();
    let zero_tol = 1e-9 * w_ref;
    let grad_tol = 1e-10 * (1.0 + w_ref / diam.max(1e-6));

    // (a) multistart descent over a grid covering the inflated well hull.
    let grid = ((sample_budget as f64).sqrt() as usize).clamp(12, 40);
    let mut minima: Vec<CriticalPoint> = Vec::new();
    for iy in 0..grid {
        for ix in 0..grid {
            let fx = (ix as f64 + 0.5) / grid as f64 * 2.0 - 1.0;
            let fy = (iy as f64 + 0.5) / grid as f64 * 2.0 - 1.0;
            let start = centroid + Vec2::new(fx * half_box, fy * half_box);
            let end = descend(landscape, start, grad_tol);
            if landscape.value(end) > zero_tol {
                continue;
            }
            // Merge radius well below the well spacing but wide enough to
            // absorb descent stall scatter inside one flat basin.
            let cluster_tol = 0.25 * well_min_gap(&claimed_wells);
            if let Some(existing) = minima.iter_mut().find(|m| m.point.dist(end) <= cluster_tol) {
                if landscape.value(end) < existing.value {
                    let (lo, hi) = landscape.hessian(end).eigenvalues();
                    *existing = CriticalPoint { point: end, value: landscape.value(end), eig_lo: lo, eig_hi: hi };
                }
            } else {
                let (lo, hi) = landscape.hessian(end).eigenvalues();
                minima.push(CriticalPoint { point: end, value: landscape.value(end), eig_lo: lo, eig_hi: hi });
            }
        }
    }
    minima.sort_by(|a, b| a.point.angle().total_cmp(&b.point.angle()));

    // (b) Hessian eigenvalues at the claimed wells.
    let mut well_eigenvalues = [[0.0f64; 2]; 3];
    for (i, c) in claimed_wells.iter().enumerate() {
        let (lo, hi) = landscape.hessian(*c).eigenvalues();
        well_eigenvalues[i] = [lo, hi];
    }

    // (c) far-field convexity on seeded polar samples with |u| in (K, 4K].
    let mut rng = SeededRng::new(seed);
    let mut min_eig = f64::INFINITY;
    let mut worst = Vec2::ZERO;
    let mut psd_hits = 0usize;
    let far_samples = sample_budget;
    for _ in 0..far_samples {
        let r = k_radius * (1.0 + 3.0 * rng.uniform());
        let th = rng.range(0.0, std::f64::consts::TAU);
        let p = centroid + r * Vec2::from_angle(th);
        let (lo, _) = landscape.hessian(p).eigenvalues();
        if lo >= -1e-9 {
            psd_hits += 1;
        }
        if lo < min_eig {
            min_eig = lo;
            worst = p;
        }
    }
    let far_field = FarFieldCheck {
        samples: far_samples,
        psd_fraction: psd_hits as f64 / far_samples as f64,
        min_eigenvalue: min_eig,
        worst_point: worst,
    };

    // (d) growth exponent fit on rings |u| in [m, 8m].
    let rings = 24;
    let spokes = 32;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut count = 0usize;
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(rings * spokes);
    for ir in 0..rings {
        let f = ir as f64 / (rings - 1) as f64;
        let r = m_radius * (8.0f64).powf(f);
        for is in 0..spokes {
            let th = std::f64::consts::TAU * (is as f64 + 0.618 * ir as f64) / spokes as f64;
            let p = centroid + r * Vec2::from_angle(th);
            let w = landscape.value(p);
            if w <= 0.0 || !w.is_finite() {
                continue;
            }
            let (lx, ly) = (r.ln(), w.ln());
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
            count += 1;
            samples.push((r, w));
        }
    }
    let nf = count as f64;
    let p_hat = if count >= 2 { (nf * sxy - sx * sy) / (nf * sxx - sx * sx) } else { f64::NAN };
    let mut k1 = f64::INFINITY;
    let mut k2: f64 = 0.0;
    for (r, w) in &samples {
        let ratio = w / r.powf(p_hat);
        k1 = k1.min(ratio);
        k2 = k2.max(ratio);
    }
    let growth = GrowthFit { samples: count, p_hat, k1, k2 };

    let mut report = HypothesisReport {
        wells: claimed_wells,
        k_radius,
        m_radius,
        seed,
        sample_budget,
        minima,
        well_eigenvalues,
        far_field,
        growth,
        flags: HypothesisFlags {
            three_minima: false,
            nondegenerate: false,
            convex_far_field: false,
            polynomial_growth: false,
        },
    };
    report.flags = report.derive_flags();

    if !report.flags.three_minima {
        let match_tol = well_match_tol(&claimed_wells);
        let witness = claimed_wells
            .iter()
            .find(|c| !report.minima.iter().any(|m| m.point.dist(**c) <= match_tol))
            .copied()
            .or_else(|| report.minima.first().map(|m| m.point))
            .unwrap_or(Vec2::ZERO);
        return Err(PotentialError::HypothesisViolated {
            name: "three minima",
            witness,
            report: Box::new(report),
        });
    }
    if !report.flags.nondegenerate {
        let idx = (0..3).find(|&i| report.well_eigenvalues[i][0] <= 1e-9).unwrap();
        return Err(PotentialError::HypothesisViolated {
            name: "non-degenerate",
            witness: claimed_wells[idx],
            report: Box::new(report),
        });
    }
    if !report.flags.convex_far_field {
        let witness = report.far_field.worst_point;
        return Err(PotentialError::HypothesisViolated {
            name: "convex outside K",
            witness,
            report: Box::new(report),
        });
    }
    if !report.flags.polynomial_growth {
        return Err(PotentialError::HypothesisViolated {
            name: "growth",
            witness: centroid + Vec2::new(m_radius, 0.0),
            report: Box::new(report),
        });
    }
    Ok(report)
}

impl Potential {
    /// Hypothesis checks with this potential's stored radii.
    pub fn validate(&self, sample_budget: usize, seed: u64) -> Result<HypothesisReport, PotentialError> {
        validate_hypotheses(self, self.wells, self.k_radius, self.m_radius, sample_budget, seed)
    }
}

/// Equilateral wells on the unit circle, first well on the positive x-axis.
pub fn equilateral_wells() -> [Vec2; 3] {
    let r3 = 3.0f64.sqrt();
    [Vec2::new(1.0, 0.0), Vec2::new(-0.5, 0.5 * r3), Vec2::new(-0.5, -0.5 * r3)]
}

/// Two-well benchmark landscape W(u) = (1 − x²)² + κ y², wells at (±1, 0).
///
/// Its connection profile along the axis is tanh(τ) in closed form, which
/// anchors the one-dimensional solvers and the strip steady-state test.
#[derive(Clone, Copy, Debug)]
pub struct TwoWellSection {
    pub kappa: f64,
}

impl TwoWellSection {
    pub fn wells(&self) -> [Vec2; 2] {
        [Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)]
    }
}

impl Landscape for TwoWellSection {
    fn value(&self, u: Vec2) -> f64 {
        let a = 1.0 - u.x * u.x;
        a * a + self.kappa * u.y * u.y
    }

    fn gradient(&self, u: Vec2) -> Vec2 {
        Vec2::new(-4.0 * u.x * (1.0 - u.x * u.x), 2.0 * self.kappa * u.y)
    }

    fn hessian(&self, u: Vec2) -> Sym2 {
        Sym2 { xx: 12.0 * u.x * u.x - 4.0, xy: 0.0, yy: 2.0 * self.kappa }
    }
}

//! One-dimensional connection profiles between wells.
//!
//! A connection ζ traverses the barrier between two wells along the real
//! line, minimizing ∫ (|ζ′|² + W(ζ)) dτ with clamped ends. The minimizer
//! solves ζ″ = ∇W(ζ)/2 and splits its energy equally between the gradient
//! and potential halves. Profiles are stored on a uniform grid over
//! [−L, L] and evaluated anywhere through a natural cubic spline that is
//! clamped to the wells beyond the grid.

use crate::geodesics::{geodesic_distance, GeodesicError, GeodesicOpts};
use crate::potential::{Landscape, Potential};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from profile relaxation and diagnostics.
#[derive(Debug, Error)]
pub enum HeteroclinicError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ODE residual {residual} exceeds bound {bound}")]
    ResidualTooLarge { residual: f64, bound: f64 },
    #[error("tail not settled: boundary-layer gap {gap}")]
    TailNotSettled { gap: f64 },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
}

/// Natural cubic spline data for a uniformly sampled plane curve: the
/// second derivatives at the nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SplineSecondDerivs {
    d2: Vec<Vec2>,
}

fn natural_spline_second_derivs(values: &[Vec2], dt: f64) -> SplineSecondDerivs {
    let n = values.len();
    let mut d2 = vec![Vec2::ZERO; n];
    if n < 3 {
        return SplineSecondDerivs { d2 };
    }
    // Tridiagonal system (1 4 1)/6 · m = second differences / dt².
    let m = n - 2;
    let mut diag = vec![4.0 / 6.0; m];
    let mut rhs: Vec<Vec2> = (1..n - 1)
        .map(|k| (values[k + 1] - 2.0 * values[k] + values[k - 1]) / (dt * dt))
        .collect();
    for k in 1..m {
        let w = (1.0 / 6.0) / diag[k - 1];
        diag[k] -= w * (1.0 / 6.0);
        let prev = rhs[k - 1];
        rhs[k] -= w * prev;
    }
    d2[m] = rhs[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        d2[k + 1] = (rhs[k] - (1.0 / 6.0) * d2[k + 2]) / diag[k];
    }
    SplineSecondDerivs { d2 }
}

/// Connection profile between two wells on a symmetric uniform grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeteroclinicProfile {
    /// Well indices (from, to): the profile runs from wells.0 at τ = −L to
    /// wells.1 at τ = +L.
    pub wells: (usize, usize),
    /// Well coordinates matching `wells`.
    pub endpoints: (Vec2, Vec2),
    /// Half-width L of the τ grid.
    pub half_width: f64,
    values: Vec<Vec2>,
    spline: SplineSecondDerivs,
    /// Discrete total energy Σ (|Δζ/Δτ|² + W(ζ)) Δτ.
    pub energy: f64,
    /// Gradient half Σ |Δζ/Δτ|² Δτ of the energy.
    pub gradient_energy: f64,
    /// Potential half Σ W(ζ) Δτ of the energy.
    pub potential_energy: f64,
    /// Fitted exponential tail rate toward the destination well, when the
    /// outer quarter supports a fit.
    pub tail_rate: Option<f64>,
    /// Log-space root-mean-square residual of that fit.
    pub tail_fit_residual: f64,
    /// Both boundary-layer samples at τ = ±(L−1) are within 1e-3 of their
    /// wells.
    pub tails_settled: bool,
    /// Energy below the degeneracy floor (constant path at a well).
    pub degenerate: bool,
    /// Accepted descent steps spent relaxing (zero for sampled profiles).
    pub iterations: usize,
}

impl HeteroclinicProfile {
    /// Builds a profile from values sampled on the uniform grid over
    /// [−L, L]; the first and last samples are clamped to the given wells.
    pub fn from_samples<L: Landscape>(
        landscape: &L,
        wells: (usize, usize),
        endpoints: (Vec2, Vec2),
        half_width: f64,
        mut values: Vec<Vec2>,
    ) -> Result<Self, HeteroclinicError> {
        if values.len() < 3 {
            return Err(HeteroclinicError::InvalidParameter("need at least 3 samples".into()));
        }
        if !(half_width > 0.0) {
            return Err(HeteroclinicError::InvalidParameter("half width must be positive".into()));
        }
        let n = values.len();
        values[0] = endpoints.0;
        values[n - 1] = endpoints.1;
        let dt = 2.0 * half_width / (n - 1) as f64;

        let mut gradient_energy = 0.0;
        for w in values.windows(2) {
            gradient_energy += (w[1] - w[0]).norm_sq() / dt;
        }
        let mut potential_energy = 0.5 * (landscape.value(values[0]) + landscape.value(values[n - 1]));
        for v in &values[1..n - 1] {
            potential_energy += landscape.value(*v);
        }
        potential_energy *= dt;
        let energy = gradient_energy + potential_energy;
        let degenerate = energy < 1e-12;

        let near = |t: f64| ((t + half_width) / dt).round().clamp(0.0, (n - 1) as f64) as usize;
        let gap_lo = values[near(-(half_width - 1.0))].dist(endpoints.0);
        let gap_hi = values[near(half_width - 1.0)].dist(endpoints.1);
        let tails_settled = gap_lo <= 1e-3 && gap_hi <= 1e-3;

        let (tail_rate, tail_fit_residual) = fit_tail_rate(&values, endpoints.1, half_width, dt);
        let spline = natural_spline_second_derivs(&values, dt);

        Ok(HeteroclinicProfile {
            wells,
            endpoints,
            half_width,
            values,
            spline,
            energy,
            gradient_energy,
            potential_energy,
            tail_rate,
            tail_fit_residual,
            tails_settled,
            degenerate,
            iterations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.half_width / (self.values.len() - 1) as f64
    }

    pub fn tau(&self, k: usize) -> f64 {
        -self.half_width + k as f64 * self.dt()
    }

    pub fn values(&self) -> &[Vec2] {
        &self.values
    }

    /// C² evaluation: natural cubic spline inside [−L, L], constant well
    /// values beyond.
    pub fn evaluate(&self, t: f64) -> Vec2 {
        let l = self.half_width;
        if t <= -l {
            return self.endpoints.0;
        }
        if t >= l {
            return self.endpoints.1;
        }
        let dt = self.dt();
        let k = (((t + l) / dt) as usize).min(self.values.len() - 2);
        let t0 = -l + k as f64 * dt;
        let a = (t0 + dt - t) / dt;
        let b = (t - t0) / dt;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.spline.d2[k], self.spline.d2[k + 1]);
        a * y0 + b * y1 + (dt * dt / 6.0) * ((a * a * a - a) * m0 + (b * b * b - b) * m1)
    }

    /// Spline second derivative at interior node k.
    fn second_deriv_at(&self, k: usize) -> Vec2 {
        self.spline.d2[k]
    }

    /// Worst interior deviation of the profile's second derivative from
    /// ∇W/2, measured on the C² interpolant.
    pub fn ode_residual<L: Landscape>(&self, landscape: &L) -> f64 {
        (1..self.values.len() - 1)
            .map(|k| (self.second_deriv_at(k) - 0.5 * landscape.gradient(self.values[k])).norm())
            .fold(0.0, f64::max)
    }
}

/// Least-squares exponential rate of |ζ − well| over the outer quarter of
/// the grid, excluding gaps below 1e-14 (clamp and rounding floor).
fn fit_tail_rate(values: &[Vec2], well: Vec2, half_width: f64, dt: f64) -> (Option<f64>, f64) {
    let n = values.len();
    let start = n - n / 4;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (k, v) in values.iter().enumerate().skip(start) {
        let gap = v.dist(well);
        if gap >= 1e-14 {
            pts.push((-half_width + k as f64 * dt, gap.ln()));
        }
    }
    if pts.len() < 8 {
        return (None, f64::INFINITY);
    }
    let nf = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = nf * sxx - sx * sx;
    if denom <= 0.0 {
        return (None, f64::INFINITY);
    }
    let slope = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / nf;
    let mut ss = 0.0;
    for (x, y) in &pts {
        let e = y - (slope * x + intercept);
        ss += e * e;
    }
    (Some(-slope), (ss / nf).sqrt())
}

/// Relative difference of the two energy halves:
/// |∫W − ∫|ζ′|²| / energy. A minimizer balances them (equipartition).
/// Degenerate profiles report zero.
pub fn equipartition_residual(profile: &HeteroclinicProfile) -> f64 {
    if profile.degenerate {
        return 0.0;
    }
    (profile.potential_energy - profile.gradient_energy).abs() / profile.energy
}

/// Fitted exponential tail rate of a settled profile.
pub fn tail_decay_rate(profile: &HeteroclinicProfile) -> Result<f64, HeteroclinicError> {
    if !profile.tails_settled {
        let gap = profile
            .values
            .last()
            .map(|v| v.dist(profile.endpoints.1))
            .unwrap_or(f64::INFINITY);
        return Err(HeteroclinicError::TailNotSettled { gap });
    }
    match profile.tail_rate {
        Some(rate) if profile.tail_fit_residual <= 0.5 => Ok(rate),
        _ => Err(HeteroclinicError::TailNotSettled { gap: profile.tail_fit_residual }),
    }
}

/// Relaxes the discrete action Σ (|Δζ/Δτ|² + W(ζ)) Δτ from the given
/// initialization with clamped endpoints. Barzilai-Borwein steps with
/// backtracking; the descent gradient is proportional to the discrete ODE
/// residual, so convergence is monitored directly on it.
pub fn relax_profile<LS: Landscape>(
    landscape: &LS,
    wells: (usize, usize),
    endpoints: (Vec2, Vec2),
    half_width: f64,
    init: Vec<Vec2>,
    tol: f64,
) -> Result<HeteroclinicProfile, HeteroclinicError> {
    let n = init.len();
    if n < 3 {
        return Err(HeteroclinicError::InvalidParameter("need at least 3 nodes".into()));
    }
    if !(tol > 0.0) {
        return Err(HeteroclinicError::InvalidParameter("tol must be positive".into()));
    }
    let dt = 2.0 * half_width / (n - 1) as f64;
    let mut x = init;
    x[0] = endpoints.0;
    x[n - 1] = endpoints.1;

    let action = |z: &[Vec2]| -> f64 {
        let mut grad_part = 0.0;
        for w in z.windows(2) {
            grad_part += (w[1] - w[0]).norm_sq() / dt;
        }
        let mut pot = 0.5 * (landscape.value(z[0]) + landscape.value(z[n - 1]));
        for v in &z[1..n - 1] {
            pot += landscape.value(*v);
        }
        grad_part + pot * dt
    };
    let grad_fill = |z: &[Vec2], g: &mut [Vec2]| -> f64 {
        let mut max_dw: f64 = 0.0;
        g[0] = Vec2::ZERO;
        g[n - 1] = Vec2::ZERO;
        for k in 1..n - 1 {
            let dw = landscape.gradient(z[k]);
            max_dw = max_dw.max(dw.norm());
            g[k] = (2.0 / dt) * (2.0 * z[k] - z[k - 1] - z[k + 1]) + dt * dw;
        }
        max_dw
    };

    let mut a = action(&x);
    let mut g = vec![Vec2::ZERO; n];
    let mut prev: Option<(Vec<Vec2>, Vec<Vec2>)> = None;
    let mut t = 1e-3;
    let mut iters = 0usize;
    let max_iters = 120_000usize;
    let mut bound = f64::INFINITY;

    while iters < max_iters {
        let max_dw = grad_fill(&x, &mut g);
        // The descent gradient is −2Δτ (ζ″ − ∇W/2) at interior nodes.
        let residual = g.iter().map(|v| v.norm()).fold(0.0, f64::max) / (2.0 * dt);
        bound = tol * (1.0 + max_dw);
        // Push well below the bound so the tails settle to clean
        // exponentials instead of solver noise.
        if residual <= (1e-4 * bound).max(1e-12) {
            break;
        }
        if let Some((px, pg)) = &prev {
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..n {
                let dx = x[k] - px[k];
                let dg = g[k] - pg[k];
                num += dx.norm_sq();
                den += dx.dot(dg);
            }
            t = if den > 0.0 { (num / den).clamp(1e-14, 1e4) } else { (t * 2.0).min(1e4) };
        }
        let gn2: f64 = g.iter().map(|v| v.norm_sq()).sum();
        let mut trial = t;
        let mut accepted = false;
        for _ in 0..48 {
            let cand: Vec<Vec2> = x.iter().zip(&g).map(|(p, gi)| *p - trial * *gi).collect();
            let a_new = action(&cand);
            if a_new.is_finite() && a_new <= a - 1e-4 * trial * gn2 {
                prev = Some((std::mem::replace(&mut x, cand), g.clone()));
                a = a_new;
                t = trial;
                accepted = true;
                break;
            }
            trial *= 0.5;
            if trial < 1e-17 {
                break;
            }
        }
        if !accepted {
            break;
        }
        iters += 1;
    }

    let mut profile = HeteroclinicProfile::from_samples(landscape, wells, endpoints, half_width, x)?;
    profile.iterations = iters;

    // Consistency of the C² interpolant with the ODE, not the (near-zero)
    // discrete stationarity residual.
    let spline_residual = profile.ode_residual(landscape);
    if spline_residual > bound {
        return Err(HeteroclinicError::ResidualTooLarge { residual: spline_residual, bound });
    }
    if !profile.tails_settled {
        let gap = profile.values[n - 2].dist(endpoints.1);
        return Err(HeteroclinicError::TailNotSettled { gap });
    }
    Ok(profile)
}

/// Solves the connection between wells `i` and `j` of the potential on
/// [−L, L] with n nodes, initialized from the geodesic path traversed at
/// constant speed. The profile is oriented from cᵢ to cⱼ; the underlying
/// relaxation always runs on the canonical (min, max) ordering, so the
/// swapped request returns the exact reflection.
pub fn solve_connection(
    potential: &Potential,
    i: usize,
    j: usize,
    half_width: f64,
    n: usize,
    tol: f64,
) -> Result<HeteroclinicProfile, HeteroclinicError> {
    if i >= 3 || j >= 3 || i == j {
        return Err(HeteroclinicError::InvalidParameter(format!("bad well pair ({i},{j})")));
    }
    if half_width < 8.0 {
        return Err(HeteroclinicError::InvalidParameter("half width must be ≥ 8".into()));
    }
    if n < 401 || n % 2 == 0 {
        return Err(HeteroclinicError::InvalidParameter("node count must be odd and ≥ 401".into()));
    }
    let (lo, hi) = (i.min(j), i.max(j));
    let geo = geodesic_distance(potential, potential.well(lo), potential.well(hi), &GeodesicOpts::default())?;
    let init = resample_path(geo.path.nodes(), n);
    let mut profile = relax_profile(
        potential,
        (lo, hi),
        (potential.well(lo), potential.well(hi)),
        half_width,
        init,
        tol,
    )?;
    if (i, j) != (lo, hi) {
        profile = reflect_profile(potential, profile)?;
    }
    Ok(profile)
}

/// Reflection τ → −τ: reverses the traversal direction.
pub fn reflect_profile<L: Landscape>(
    landscape: &L,
    profile: HeteroclinicProfile,
) -> Result<HeteroclinicProfile, HeteroclinicError> {
    let mut values = profile.values;
    values.reverse();
    let mut out = HeteroclinicProfile::from_samples(
        landscape,
        (profile.wells.1, profile.wells.0),
        (profile.endpoints.1, profile.endpoints.0),
        profile.half_width,
        values,
    )?;
    out.iterations = profile.iterations;
    Ok(out)
}

/// Equal-arclength resampling of a polyline to `count` nodes.
fn resample_path(nodes: &[Vec2], count: usize) -> Vec<Vec2> {
    let n = nodes.len();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + nodes[k - 1].dist(nodes[k]);
    }
    let total = cum[n - 1];
    if total <= 0.0 {
        return vec![nodes[0]; count];
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0usize;
    for k in 0..count {
        let target = total * k as f64 / (count - 1) as f64;
        while seg < n - 2 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        out.push(nodes[seg] + f * (nodes[seg + 1] - nodes[seg]));
    }
    out
}

/// Summary row for reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub wells: (usize, usize),
    pub energy: f64,
    pub equipartition_residual: f64,
    pub tail_rate: Option<f64>,
    pub tails_settled: bool,
    pub iterations: usize,
}

impl HeteroclinicProfile {
    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary {
            wells: self.wells,
            energy: self.energy,
            equipartition_residual: equipartition_residual(self),
            tail_rate: self.tail_rate,
            tails_settled: self.tails_settled,
            iterations: self.iterations,
        }
    }
}

//! Far-field boundary data: an angular partition of unity blends the three
//! well constants on sector interiors with connection profiles across each
//! interface half-line, producing a map φ on the plane and its rescalings
//! φ_ε(x) = φ(x/ε) that supply Dirichlet data on the unit circle.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::heteroclinic::HeteroclinicProfile;
use crate::junction::JunctionAngles;
use crate::potential::Landscape;
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum AnsatzError {
    #[error(
        "interface half-width {delta} outside (0, {limit}) (half the smallest sector opening {min_alpha})",
        limit = min_alpha / 2.0
    )]
    DeltaTooLarge { delta: f64, min_alpha: f64 },
    #[error("finite-difference step {h} too coarse for eps {eps}; need h <= eps/10")]
    StepTooCoarse { h: f64, eps: f64 },
    #[error("interface {index} expects the profile joining wells {expected:?}, found {found:?}")]
    ProfileMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// C² monotone ramp: 0 for s ≤ 0, 1 for s ≥ 1, with vanishing first and
/// second derivatives at both ends, and f(s) + f(1−s) = 1.
fn smoothstep5(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

/// Six-window partition of unity in angle. Window 2k+1 (even in one-based
/// counting) is the interface window around half-line direction k: ramps on
/// (tₖ−δ, tₖ−δ/2) and (tₖ+δ/2, tₖ+δ), plateau ≡ 1 between. Window 2k covers
/// sector k between consecutive half-lines, complementing the interface
/// ramps so the six windows sum to one at every angle.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AngularPartition {
    delta: f64,
    /// Sector boundaries [θ₀, θ₁, θ₂, θ₃] with θ₃ = θ₀ + 2π; sector k spans
    /// (bounds[k], bounds[k+1]) and the k-th interface sits at bounds[k+1].
    bounds: [f64; 4],
}

/// Builds the angular partition for the given junction geometry with base
/// direction `theta0` (the angle of the interface between sectors 2 and 0)
/// and interface half-width `delta`.
pub fn build_partition(
    angles: &JunctionAngles,
    theta0: f64,
    delta: f64,
) -> Result<AngularPartition, AnsatzError> {
    let min_alpha = angles.alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    if !theta0.is_finite() {
        return Err(AnsatzError::InvalidParameter(format!(
            "base direction {theta0} must be finite"
        )));
    }
    if !(delta > 0.0 && delta < min_alpha / 2.0) {
        return Err(AnsatzError::DeltaTooLarge { delta, min_alpha });
    }
    Ok(AngularPartition {
        delta,
        bounds: angles.boundaries(theta0),
    })
}

impl AngularPartition {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Angles of the three interface half-lines; interface k separates
    /// sector k from sector k+1 (mod 3).
    pub fn interface_angles(&self) -> [f64; 3] {
        [self.bounds[1], self.bounds[2], self.bounds[3]]
    }

    /// The six angular windows in interleaved order
    /// [sector 0, interface 0, sector 1, interface 1, sector 2, interface 2]:
    /// sector windows are (bₖ+δ/2, bₖ₊₁−δ/2), interface windows
    /// (tₖ−δ, tₖ+δ).
    pub fn windows(&self) -> [(f64, f64); 6] {
        let d = self.delta;
        let b = self.bounds;
        [
            (b[0] + d / 2.0, b[1] - d / 2.0),
            (b[1] - d, b[1] + d),
            (b[1] + d / 2.0, b[2] - d / 2.0),
            (b[2] - d, b[2] + d),
            (b[2] + d / 2.0, b[3] - d / 2.0),
            (b[3] - d, b[3] + d),
        ]
    }

    /// Reduces an angle into the fundamental interval [θ₀, θ₀ + 2π).
    fn lift(&self, theta: f64) -> f64 {
        self.bounds[0] + (theta - self.bounds[0]).rem_euclid(TAU)
    }

    /// The six window weights at `theta`, in the order of [`Self::windows`].
    /// They are each in [0, 1] and sum to 1.
    pub fn weights(&self, theta: f64) -> [f64; 6] {
        let a = self.lift(theta);
        let d = self.delta;
        let mut out = [0.0; 6];
        for k in 0..3 {
            // The interface window at bounds[k+1]; the window around the
            // base direction straddles the fundamental interval, so both
            // lifts contribute (at most one is nonzero).
            for t in [self.bounds[k + 1], self.bounds[k + 1] - TAU] {
                out[2 * k + 1] += interface_weight(a - t, d);
            }
            out[2 * k] = sector_weight(a, self.bounds[k], self.bounds[k + 1], d);
        }
        out
    }

    /// Largest deviation of the weight sum from 1 over `n` uniformly spaced
    /// angles.
    pub fn partition_residual(&self, n: usize) -> f64 {
        (0..n)
            .map(|j| {
                let theta = TAU * j as f64 / n as f64;
                (self.weights(theta).iter().sum::<f64>() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Interface window profile as a function of the angular offset `s` from the
/// half-line: plateau ≡ 1 for |s| ≤ δ/2, ramps to 0 across δ/2 < |s| < δ.
fn interface_weight(s: f64, d: f64) -> f64 {
    let s = s.abs();
    if s >= d {
        0.0
    } else if s <= d / 2.0 {
        1.0
    } else {
        smoothstep5((d - s) / (d / 2.0))
    }
}

/// Sector window profile between boundaries `lo` and `hi`: supported on
/// (lo+δ/2, hi−δ/2), ≡ 1 on [lo+δ, hi−δ], complementing the adjacent
/// interface ramps.
fn sector_weight(a: f64, lo: f64, hi: f64, d: f64) -> f64 {
    if a <= lo + d / 2.0 || a >= hi - d / 2.0 {
        0.0
    } else if a >= lo + d && a <= hi - d {
        1.0
    } else if a < lo + d {
        smoothstep5((a - lo - d / 2.0) / (d / 2.0))
    } else {
        smoothstep5((hi - d / 2.0 - a) / (d / 2.0))
    }
}

/// The assembled boundary map φ: sector constants and interface profiles
/// blended by the angular partition, all multiplied by one minus a radial
/// cutoff that zeroes the map on |x| ≤ 1/2.
#[derive(Clone, Debug)]
pub struct BoundaryMap {
    wells: [Vec2; 3],
    partition: AngularPartition,
    /// profiles[k] joins wells (k, k+1 mod 3) across interface k.
    profiles: [HeteroclinicProfile; 3],
    /// Unit normals to the interface half-lines; the signed coordinate
    /// x·normal is negative on the sector-k side of interface k, so the
    /// profile approaches well k there and well k+1 on the other side.
    /// Within the narrow interface window its magnitude equals the distance
    /// to the half-line.
    normals: [Vec2; 3],
}

impl BoundaryMap {
    /// Assembles the map, checking that each supplied profile joins the
    /// wells its interface separates and terminates at those well values.
    pub fn assemble(
        wells: [Vec2; 3],
        angles: &JunctionAngles,
        theta0: f64,
        delta: f64,
        profiles: [HeteroclinicProfile; 3],
    ) -> Result<BoundaryMap, AnsatzError> {
        let partition = build_partition(angles, theta0, delta)?;
        let mut normals = [Vec2::ZERO; 3];
        for (k, t) in partition.interface_angles().into_iter().enumerate() {
            let expected = (k, (k + 1) % 3);
            if profiles[k].wells != expected {
                return Err(AnsatzError::ProfileMismatch {
                    index: k,
                    expected,
                    found: profiles[k].wells,
                });
            }
            let (lo, hi) = profiles[k].endpoints;
            if lo.dist(wells[k]) > 1e-9 || hi.dist(wells[(k + 1) % 3]) > 1e-9 {
                return Err(AnsatzError::InvalidParameter(format!(
                    "profile {k} endpoints {lo:?}, {hi:?} do not match wells"
                )));
            }
            normals[k] = Vec2::new(-t.sin(), t.cos());
        }
        Ok(BoundaryMap {
            wells,
            partition,
            profiles,
            normals,
        })
    }

    pub fn partition(&self) -> &AngularPartition {
        &self.partition
    }

    pub fn wells(&self) -> [Vec2; 3] {
        self.wells
    }

    pub fn profiles(&self) -> &[HeteroclinicProfile; 3] {
        &self.profiles
    }

    /// Largest norm the map can attain: the biggest of the well norms and
    /// the profile excursions.
    pub fn norm_bound(&self) -> f64 {
        let wells = self.wells.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let profiles = self
            .profiles
            .iter()
            .flat_map(|p| p.values().iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        wells.max(profiles)
    }

    /// The unscaled boundary map. Zero inside |x| ≤ 1/2 by construction;
    /// equal to a well constant on far mid-sector rays and to the interface
    /// profile (evaluated at the signed distance to the half-line) near each
    /// interface.
    pub fn eval_phi(&self, x: Vec2) -> Vec2 {
        let r = x.norm();
        // One minus the radial cutoff: 0 for r ≤ 1/2, 1 for r ≥ 1.
        let outer = smoothstep5((r - 0.5) / 0.5);
        if outer == 0.0 {
            return Vec2::ZERO;
        }
        let w = self.partition.weights(x.angle());
        let mut acc = Vec2::ZERO;
        for k in 0..3 {
            if w[2 * k] != 0.0 {
                acc += w[2 * k] * self.wells[k];
            }
            if w[2 * k + 1] != 0.0 {
                let signed = x.dot(self.normals[k]);
                acc += w[2 * k + 1] * self.profiles[k].evaluate(signed);
            }
        }
        outer * acc
    }

    /// The rescaled map φ(x/ε). Requires 0 < eps ≤ 1; on the unit circle
    /// this is the Dirichlet data for the ε-problem. Half-line distances
    /// scale exactly: the profile argument at x is the signed distance
    /// divided by ε.
    pub fn eval_phi_eps(&self, x: Vec2, eps: f64) -> Vec2 {
        assert!(
            eps > 0.0 && eps <= 1.0,
            "eps {eps} outside (0, 1]"
        );
        self.eval_phi(x / eps)
    }

    /// Values of φ_ε on the unit circle at `n` uniformly spaced angles.
    pub fn sample_boundary(&self, eps: f64, n: usize) -> Vec<(f64, Vec2)> {
        (0..n)
            .map(|j| {
                let theta = TAU * j as f64 / n as f64;
                (theta, self.eval_phi_eps(Vec2::from_angle(theta), eps))
            })
            .collect()
    }
}

/// Pointwise residual |−Δφ_ε + ∇W(φ_ε)/(2ε²)| at `x`, the Laplacian taken
/// by the 5-point second-difference stencil at step `h`.
pub fn residual_at<L: Landscape>(
    map: &BoundaryMap,
    landscape: &L,
    eps: f64,
    h: f64,
    x: Vec2,
) -> f64 {
    let ex = Vec2::new(h, 0.0);
    let ey = Vec2::new(0.0, h);
    let center = map.eval_phi_eps(x, eps);
    let lap = (map.eval_phi_eps(x + ex, eps)
        + map.eval_phi_eps(x - ex, eps)
        + map.eval_phi_eps(x + ey, eps)
        + map.eval_phi_eps(x - ey, eps)
        - 4.0 * center)
        / (h * h);
    (landscape.gradient(center) / (2.0 * eps * eps) - lap).norm()
}

/// One point of the residual trend curve: the sup of the pointwise residual
/// over samples of the annulus ε^α ≤ |x| ≤ 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualSample {
    pub eps: f64,
    pub alpha: f64,
    pub h: f64,
    pub samples: usize,
    pub sup_residual: f64,
    pub worst_point: Vec2,
}

/// Measures the sup residual of φ_ε over the annulus ε^α ≤ |x| ≤ 1 on a
/// deterministic set of about `samples` ring points (each ring also samples
/// the three interface directions, where the residual peaks). `h` defaults
/// to ε/50 and must be at most ε/10.
pub fn phi_residual_profile<L: Landscape>(
    map: &BoundaryMap,
    landscape: &L,
    eps: f64,
    alpha: f64,
    samples: usize,
    h: Option<f64>,
) -> Result<ResidualSample, AnsatzError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnsatzError::InvalidParameter(format!(
            "annulus exponent {alpha} outside (0, 1)"
        )));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(AnsatzError::InvalidParameter(format!(
            "eps {eps} outside (0, 1]"
        )));
    }
    if samples == 0 {
        return Err(AnsatzError::InvalidParameter(
            "samples must be positive".into(),
        ));
    }
    let h = h.unwrap_or(eps / 50.0);
    if h > eps / 10.0 {
        return Err(AnsatzError::StepTooCoarse { h, eps });
    }

    let r_lo = eps.powf(alpha).min(1.0);
    let rings = ((samples as f64 / 8.0).sqrt().round() as usize).clamp(4, 64);
    let spokes = samples.div_ceil(rings);
    let golden = TAU * (1.0 - (5.0f64.sqrt() - 1.0) / 2.0);
    let interface_angles = map.partition.interface_angles();

    let mut sup = 0.0f64;
    let mut worst = Vec2::ZERO;
    let mut count = 0usize;
    for ring in 0..rings {
        let frac = if rings == 1 {
            1.0
        } else {
            ring as f64 / (rings - 1) as f64
        };
        let r = r_lo + (1.0 - r_lo) * frac;
        let offset = golden * ring as f64;
        let angles = (0..spokes)
            .map(|j| offset + TAU * j as f64 / spokes as f64)
            .chain(interface_angles.iter().cloned());
        for theta in angles {
            let x = r * Vec2::from_angle(theta);
            let value = residual_at(map, landscape, eps, h, x);
            count += 1;
            if value > sup {
                sup = value;
                worst = x;
            }
        }
    }
    Ok(ResidualSample {
        eps,
        alpha,
        h,
        samples: count,
        sup_residual: sup,
        worst_point: worst,
    })
}

/// Runs [`phi_residual_profile`] for each ε in the list, producing the trend
/// curve the vanishing-viscosity estimates predict to decay as ε → 0.
pub fn phi_residual_sweep<L: Landscape>(
    map: &BoundaryMap,
    landscape: &L,
    eps_list: &[f64],
    alpha: f64,
    samples: usize,
) -> Result<Vec<ResidualSample>, AnsatzError> {
    eps_list
        .iter()
        .map(|&eps| phi_residual_profile(map, landscape, eps, alpha, samples, None))
        .collect()
}

/// Default interface half-width: a fixed fraction of the smallest sector
/// opening, comfortably inside the collision limit of half the opening.
pub fn default_delta(angles: &JunctionAngles) -> f64 {
    0.15 * angles.alpha.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesics::DistanceTable;
    use crate::junction::solve_angles;
    use crate::potential::{build_product_potential, equilateral_wells, Potential};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn equilateral() -> Potential {
        let [c1, c2, c3] = equilateral_wells();
        build_product_potential(c1, c2, c3).unwrap()
    }

    fn equilateral_angles() -> JunctionAngles {
        solve_angles(&DistanceTable::from_pairs(1.0, 1.0, 1.0).unwrap()).unwrap()
    }

    /// Straight-line profile between two wells with a tanh transition; C²,
    /// exactly equal to the wells beyond the grid.
    fn tanh_profile(p: &Potential, i: usize, j: usize) -> HeteroclinicProfile {
        let (a, b) = (p.well(i), p.well(j));
        let l = 8.0;
        let n = 1601;
        let dt = 2.0 * l / (n - 1) as f64;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let values: Vec<Vec2> = (0..n)
            .map(|k| mid + (-l + k as f64 * dt).tanh() * half)
            .collect();
        HeteroclinicProfile::from_samples(p, (i, j), (a, b), l, values).unwrap()
    }

    fn test_map(theta0: f64, delta: f64) -> BoundaryMap {
        let p = equilateral();
        let profiles = [
            tanh_profile(&p, 0, 1),
            tanh_profile(&p, 1, 2),
            tanh_profile(&p, 2, 0),
        ];
        BoundaryMap::assemble(
            [p.well(0), p.well(1), p.well(2)],
            &equilateral_angles(),
            theta0,
            delta,
            profiles,
        )
        .unwrap()
    }

    #[test]
    fn weights_sum_to_one_everywhere() {
        let partition = build_partition(&equilateral_angles(), 0.3, 0.2).unwrap();
        assert!(partition.partition_residual(10_000) < 1e-10);
        for j in 0..2000 {
            let theta = TAU * j as f64 / 2000.0;
            for w in partition.weights(theta) {
                assert!((0.0..=1.0).contains(&w), "weight {w} at {theta}");
            }
        }
    }

    #[test]
    fn weights_are_supported_in_their_windows() {
        let partition = build_partition(&equilateral_angles(), -1.1, 0.25).unwrap();
        let windows = partition.windows();
        let in_window = |theta: f64, lo: f64, hi: f64| {
            [-TAU, 0.0, TAU]
                .iter()
                .any(|shift| theta + shift > lo - 1e-12 && theta + shift < hi + 1e-12)
        };
        for j in 0..5000 {
            let theta = -1.1 + TAU * j as f64 / 5000.0;
            for (idx, w) in partition.weights(theta).into_iter().enumerate() {
                if w > 0.0 {
                    let (lo, hi) = windows[idx];
                    assert!(
                        in_window(theta, lo, hi),
                        "window {idx} leaked to {theta}, bounds ({lo}, {hi})"
                    );
                }
            }
        }
    }

    #[test]
    fn interface_plateau_is_exactly_one() {
        let partition = build_partition(&equilateral_angles(), 0.0, 0.2).unwrap();
        for (k, t) in partition.interface_angles().into_iter().enumerate() {
            for s in [-0.099, -0.05, 0.0, 0.05, 0.099] {
                let w = partition.weights(t + s);
                for (idx, value) in w.into_iter().enumerate() {
                    if idx == 2 * k + 1 {
                        assert_eq!(value, 1.0);
                    } else {
                        assert_eq!(value, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn junction_direction_is_pure_interface() {
        let partition = build_partition(&equilateral_angles(), 0.7, 0.3).unwrap();
        for (k, t) in partition.interface_angles().into_iter().enumerate() {
            let w = partition.weights(t);
            assert_eq!(w[2 * k + 1], 1.0);
            assert_eq!(w.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn too_wide_delta_is_rejected() {
        let angles = equilateral_angles();
        match build_partition(&angles, 0.0, std::f64::consts::PI / 3.0) {
            Err(AnsatzError::DeltaTooLarge { min_alpha, .. }) => {
                assert!((min_alpha - TAU / 3.0).abs() < 1e-12);
            }
            other => panic!("expected DeltaTooLarge, got {other:?}"),
        }
        assert!(matches!(
            build_partition(&angles, 0.0, 0.0),
            Err(AnsatzError::DeltaTooLarge { .. })
        ));
        assert!(matches!(
            build_partition(&angles, 0.0, f64::NAN),
            Err(AnsatzError::DeltaTooLarge { .. })
        ));
    }

    #[test]
    fn mismatched_profile_order_is_rejected() {
        let p = equilateral();
        let profiles = [
            tanh_profile(&p, 0, 1),
            tanh_profile(&p, 2, 0),
            tanh_profile(&p, 1, 2),
        ];
        match BoundaryMap::assemble(
            [p.well(0), p.well(1), p.well(2)],
            &equilateral_angles(),
            0.0,
            0.3,
            profiles,
        ) {
            Err(AnsatzError::ProfileMismatch {
                index: 1,
                expected: (1, 2),
                found: (2, 0),
            }) => {}
            other => panic!("expected ProfileMismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_inside_half_radius() {
        let map = test_map(0.2, 0.3);
        for r in [0.0, 0.1, 0.3, 0.5] {
            for j in 0..16 {
                let x = r * Vec2::from_angle(TAU * j as f64 / 16.0);
                assert_eq!(map.eval_phi(x), Vec2::ZERO);
            }
        }
    }

    #[test]
    fn far_mid_sector_is_the_well_constant() {
        let map = test_map(0.4, 0.3);
        let b = map.partition.bounds;
        for k in 0..3 {
            let mid = 0.5 * (b[k] + b[k + 1]);
            for r in [1.001, 2.0, 7.5] {
                let x = r * Vec2::from_angle(mid);
                assert_eq!(map.eval_phi(x), map.wells[k]);
            }
            // On the cutoff edge itself the value agrees to rounding.
            let edge = Vec2::from_angle(mid);
            assert!(map.eval_phi(edge).dist(map.wells[k]) < 1e-14);
        }
    }

    #[test]
    fn far_halfline_hits_the_profile_midpoint() {
        let map = test_map(-0.3, 0.25);
        for (k, t) in map.partition.interface_angles().into_iter().enumerate() {
            let x = 5.0 * Vec2::from_angle(t);
            assert_eq!(map.eval_phi(x), map.profiles[k].evaluate(0.0));
        }
    }

    #[test]
    fn interface_sides_approach_the_sector_wells() {
        let map = test_map(0.0, 0.3);
        let t = map.partition.interface_angles()[0];
        let below = 40.0 * Vec2::from_angle(t - 0.01);
        let above = 40.0 * Vec2::from_angle(t + 0.01);
        // 40·sin(0.01) ≈ 0.4 is mid-transition; 25× further out the signed
        // distance passes the profile grid and the value clamps to the well.
        assert!(map.eval_phi(25.0 * below).dist(map.wells[0]) == 0.0);
        assert!(map.eval_phi(25.0 * above).dist(map.wells[1]) == 0.0);
        assert!(map.eval_phi(below).dist(map.wells[0]) > 1e-3);
    }

    #[test]
    fn eps_one_matches_unscaled() {
        let map = test_map(0.9, 0.35);
        let mut rng = SeededRng::new(41);
        for _ in 0..200 {
            let x = Vec2::new(rng.range(-2.0, 2.0), rng.range(-2.0, 2.0));
            assert_eq!(map.eval_phi_eps(x, 1.0), map.eval_phi(x));
        }
    }

    #[test]
    fn small_eps_boundary_point_is_the_sector_constant() {
        let map = test_map(0.4, 0.3);
        let b = map.partition.bounds;
        let x = Vec2::from_angle(0.5 * (b[1] + b[2]));
        for eps in [0.5, 0.25, 0.1, 0.02] {
            assert_eq!(map.eval_phi_eps(x, eps), map.wells[1]);
        }
    }

    #[test]
    fn profile_argument_scales_as_distance_over_eps() {
        let map = test_map(0.15, 0.3);
        let mut rng = SeededRng::new(97);
        let angles = map.partition.interface_angles();
        for _ in 0..100 {
            let k = rng.index(3);
            let t = angles[k];
            // Angular offset inside the plateau, radius beyond the cutoff.
            let theta = t + rng.range(-0.14, 0.14);
            let eps = rng.range(0.05, 0.8);
            let x = rng.range(1.1 * eps, 2.0) * Vec2::from_angle(theta);
            let signed = (x / eps).dot(Vec2::new(-t.sin(), t.cos()));
            let expected = map.profiles[k].evaluate(signed);
            let got = map.eval_phi_eps(x, eps);
            assert!(got.dist(expected) <= 1e-12, "gap {}", got.dist(expected));
        }
    }

    #[test]
    fn map_is_bounded_by_wells_and_overshoot() {
        let map = test_map(0.0, 0.3);
        let bound = map.norm_bound() + 1e-9;
        let mut rng = SeededRng::new(7);
        let mut sup = 0.0f64;
        for _ in 0..100_000 {
            let x = Vec2::new(rng.range(-6.0, 6.0), rng.range(-6.0, 6.0));
            sup = sup.max(map.eval_phi(x).norm());
        }
        assert!(sup <= bound, "sup {sup} exceeds {bound}");
    }

    #[test]
    fn plateau_residual_vanishes_to_rounding() {
        let p = equilateral();
        let map = test_map(0.4, 0.3);
        let b = map.partition.bounds;
        for k in 0..3 {
            let mid = 0.5 * (b[k] + b[k + 1]);
            let x = 0.8 * Vec2::from_angle(mid);
            let r = residual_at(&map, &p, 0.1, 0.002, x);
            assert!(r < 1e-8, "plateau residual {r}");
        }
    }

    #[test]
    fn coarse_step_is_rejected() {
        let p = equilateral();
        let map = test_map(0.0, 0.3);
        match phi_residual_profile(&map, &p, 0.1, 0.5, 100, Some(0.02)) {
            Err(AnsatzError::StepTooCoarse { .. }) => {}
            other => panic!("expected StepTooCoarse, got {other:?}"),
        }
        assert!(phi_residual_profile(&map, &p, 0.1, 0.5, 100, Some(0.01)).is_ok());
        assert!(matches!(
            phi_residual_profile(&map, &p, 0.1, 1.5, 100, None),
            Err(AnsatzError::InvalidParameter(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn partition_of_unity_for_random_geometry(
            seed in 0u64..1u64 << 16,
            delta_frac in 0.05f64..0.95,
            theta0 in -10.0f64..10.0,
        ) {
            let mut rng = SeededRng::new(seed);
            // Costs in [0.8, 1.2] always satisfy the strict triangle
            // inequality, so the angle solve cannot fail.
            let g01 = rng.range(0.8, 1.2);
            let g02 = rng.range(0.8, 1.2);
            let g12 = rng.range(0.8, 1.2);
            let angles =
                solve_angles(&DistanceTable::from_pairs(g01, g02, g12).unwrap()).unwrap();
            let min_alpha = angles.alpha.iter().cloned().fold(f64::INFINITY, f64::min);
            let partition =
                build_partition(&angles, theta0, delta_frac * min_alpha / 2.0).unwrap();
            prop_assert!(partition.partition_residual(997) < 1e-10);
        }
    }
}

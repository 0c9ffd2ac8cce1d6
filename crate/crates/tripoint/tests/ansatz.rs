//! Boundary-map behavior with fully solved connection profiles: trace
//! convergence on the unit circle, continuity, and the residual trend that
//! certifies φ_ε as an approximate solution away from the core.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use tripoint::ansatz::{default_delta, phi_residual_sweep, BoundaryMap};
use tripoint::geodesics::{distance_table, GeodesicOpts};
use tripoint::heteroclinic::solve_connection;
use tripoint::junction::solve_angles;
use tripoint::potential::{build_product_potential, equilateral_wells, Potential};
use tripoint::vec2::Vec2;

struct Fixture {
    potential: Potential,
    map: BoundaryMap,
    theta0: f64,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let [c1, c2, c3] = equilateral_wells();
        let potential = build_product_potential(c1, c2, c3).unwrap();
        let table = distance_table(&potential, &GeodesicOpts::default()).unwrap();
        let angles = solve_angles(&table).unwrap();
        let profiles = [
            solve_connection(&potential, 0, 1, 10.0, 2001, 2e-4).unwrap(),
            solve_connection(&potential, 1, 2, 10.0, 2001, 2e-4).unwrap(),
            solve_connection(&potential, 2, 0, 10.0, 2001, 2e-4).unwrap(),
        ];
        let theta0 = 0.5;
        let map = BoundaryMap::assemble(
            [potential.well(0), potential.well(1), potential.well(2)],
            &angles,
            theta0,
            default_delta(&angles),
            profiles,
        )
        .unwrap();
        Fixture {
            potential,
            map,
            theta0,
        }
    })
}

/// On the unit circle, away from the three interface directions, φ_ε at
/// ε = 0.05 has already collapsed onto the sector constants.
#[test]
fn boundary_trace_reaches_sector_constants() {
    let f = fixture();
    let map = &f.map;
    let interfaces = map.partition().interface_angles();
    let mut checked = 0usize;
    for j in 0..720 {
        let theta = f.theta0 + TAU * j as f64 / 720.0;
        let angular_gap = interfaces
            .iter()
            .map(|t| {
                let d = (theta - t).rem_euclid(TAU);
                d.min(TAU - d)
            })
            .fold(f64::INFINITY, f64::min);
        if angular_gap < 0.15 {
            continue;
        }
        let sector = (0..3)
            .find(|&k| {
                let lo = map.partition().interface_angles()[(k + 2) % 3];
                let width = (theta - lo).rem_euclid(TAU);
                let span = (map.partition().interface_angles()[k] - lo).rem_euclid(TAU);
                let span = if span == 0.0 { TAU } else { span };
                width < span
            })
            .unwrap();
        let value = map.eval_phi_eps(Vec2::from_angle(theta), 0.05);
        let gap = value.dist(map.wells()[sector]);
        assert!(gap < 1e-3, "angle {theta}: gap {gap} to well {sector}");
        checked += 1;
    }
    assert!(checked > 500, "only {checked} angles checked");
}

/// Sampled modulus of continuity: the largest consecutive jump on a ring
/// shrinks proportionally when the sampling is refined.
#[test]
fn map_is_continuous_on_rings() {
    let f = fixture();
    let jump = |r: f64, n: usize| -> f64 {
        let mut worst = 0.0f64;
        let mut prev = f.map.eval_phi(r * Vec2::from_angle(0.0));
        for j in 1..=n {
            let x = r * Vec2::from_angle(TAU * j as f64 / n as f64);
            let v = f.map.eval_phi(x);
            worst = worst.max(v.dist(prev));
            prev = v;
        }
        worst
    };
    for r in [0.6, 0.85, 1.5, 4.0] {
        let coarse = jump(r, 4096);
        let fine = jump(r, 8192);
        assert!(
            fine < 0.7 * coarse + 1e-12,
            "ring {r}: jumps {coarse} -> {fine}"
        );
    }
}

/// The sup of |−Δφ_ε + ∇W(φ_ε)/(2ε²)| over the annulus ε^α ≤ |x| ≤ 1
/// decreases as ε shrinks once the interface-tail decay overtakes the 1/ε²
/// amplification; the estimate predicts that regime for this geometry below
/// ε ≈ 0.0125.
#[test]
fn residual_trend_decreases_along_the_ladder() {
    let f = fixture();
    let survey: Vec<f64> = vec![0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125];
    let mut curve = Vec::new();
    for &eps in &survey {
        let h = eps / 512.0;
        let sample = tripoint::ansatz::phi_residual_profile(
            &f.map,
            &f.potential,
            eps,
            0.5,
            1500,
            Some(h),
        )
        .unwrap();
        println!(
            "eps {:9.6}  h {:10.3e}  sup residual {:12.6e}  at ({:+.4}, {:+.4})",
            eps, h, sample.sup_residual, sample.worst_point.x, sample.worst_point.y
        );
        curve.push((eps, sample.sup_residual));
    }
    let pinned: Vec<f64> = curve
        .iter()
        .filter(|(eps, _)| *eps <= 0.0126)
        .map(|(_, sup)| *sup)
        .collect();
    assert_eq!(pinned.len(), 3);
    assert!(
        pinned[1] < pinned[0] && pinned[2] < pinned[1],
        "residuals not decreasing: {pinned:?}"
    );
}

/// The sweep helper returns one record per ε with the requested exponent.
#[test]
fn sweep_records_match_requested_ladder() {
    let f = fixture();
    let eps_list = [0.2, 0.1];
    let records = phi_residual_sweep(&f.map, &f.potential, &eps_list, 0.5, 200).unwrap();
    assert_eq!(records.len(), 2);
    for (record, &eps) in records.iter().zip(&eps_list) {
        assert_eq!(record.eps, eps);
        assert_eq!(record.alpha, 0.5);
        assert!(record.samples >= 200);
        assert!(record.sup_residual.is_finite());
    }
}

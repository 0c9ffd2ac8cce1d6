//! Cross-checks of the polyline descent against the independent lattice
//! oracle, plus the metric properties of the distance table.

use tripoint::geodesics::{
    connection_exists, distance_table, geodesic_distance, lattice_oracle_distance,
    lattice_oracle_path, well_distance, GeodesicOpts,
};
use tripoint::potential::{build_product_potential, equilateral_wells, Landscape, Potential};
use tripoint::rng::SeededRng;
use tripoint::Vec2;

fn equilateral() -> Potential {
    let [c1, c2, c3] = equilateral_wells();
    build_product_potential(c1, c2, c3).unwrap()
}

/// Descent upper bound and lattice shortest path agree within 2% on the
/// canonical equilateral pair.
#[test]
fn descent_matches_lattice_oracle_within_two_percent() {
    let p = equilateral();
    let opts = GeodesicOpts::default();
    let descent = geodesic_distance(&p, p.well(0), p.well(1), &opts).unwrap();
    let oracle = lattice_oracle_distance(&p, p.well(0), p.well(1), 600);
    let rel = (descent.action - oracle).abs() / oracle;
    assert!(rel < 0.02, "descent {} oracle {} rel {}", descent.action, oracle, rel);
}

#[test]
fn equilateral_table_is_symmetric_and_balanced() {
    let p = equilateral();
    let table = distance_table(&p, &GeodesicOpts::default()).unwrap();
    let g = table.entries();
    for i in 0..3 {
        assert_eq!(g[i][i], 0.0);
        for j in 0..3 {
            assert!((g[i][j] - g[j][i]).abs() < 1e-9);
        }
    }
    let vals = [g[0][1], g[0][2], g[1][2]];
    let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
    for v in vals {
        assert!((v - mean).abs() / mean < 0.01, "entry {v} vs mean {mean}");
    }
    // Triangle inequality with slack for the 2% oracle tolerance.
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                if i != j && j != k && i != k {
                    assert!(g[i][j] <= g[i][k] + g[k][j] + 2.0 * 0.02 * g[i][j]);
                }
            }
        }
    }
}

/// An isoceles configuration orders the table like the oracle: the closer
/// pair is strictly cheaper.
#[test]
fn closer_well_pair_has_smaller_distance() {
    let c1 = Vec2::new(-0.5, 0.0);
    let c2 = Vec2::new(0.5, 0.0);
    let c3 = Vec2::new(0.0, 1.5);
    let p = build_product_potential(c1, c2, c3).unwrap();
    let table = distance_table(&p, &GeodesicOpts::default()).unwrap();
    assert!(table.gamma(0, 1) < table.gamma(0, 2), "{} vs {}", table.gamma(0, 1), table.gamma(0, 2));
    assert!(table.gamma(0, 1) < table.gamma(1, 2));
    let o01 = lattice_oracle_distance(&p, c1, c2, 400);
    let o02 = lattice_oracle_distance(&p, c1, c3, 400);
    assert!(o01 < o02, "oracle disagrees on ordering: {o01} vs {o02}");
    assert!((table.gamma(0, 1) - o01).abs() / o01 < 0.02);
    assert!((table.gamma(0, 2) - o02).abs() / o02 < 0.02);
}

/// |∇gᵢ| = √W away from the wells: finite differences of the sampled
/// distance-to-well function against the local barrier height.
#[test]
fn well_distance_gradient_matches_barrier_height() {
    let p = equilateral();
    let opts = GeodesicOpts { nodes: 65, max_iters: 8000, tol: 1e-9 };
    let mut rng = SeededRng::new(17);
    let fd = 1e-3;
    for trial in 0..20 {
        let r = rng.range(0.35, 0.7);
        let th = rng.range(0.0, std::f64::consts::TAU);
        let q = p.well(0) + r * Vec2::from_angle(th);
        let gx = (well_distance(&p, 0, q + Vec2::new(fd, 0.0), &opts).unwrap()
            - well_distance(&p, 0, q - Vec2::new(fd, 0.0), &opts).unwrap())
            / (2.0 * fd);
        let gy = (well_distance(&p, 0, q + Vec2::new(0.0, fd), &opts).unwrap()
            - well_distance(&p, 0, q - Vec2::new(0.0, fd), &opts).unwrap())
            / (2.0 * fd);
        let grad_norm = Vec2::new(gx, gy).norm();
        let expected = p.value(q).sqrt();
        let rel = (grad_norm - expected).abs() / expected;
        assert!(rel < 0.05, "trial {trial} at {q:?}: |∇g| {grad_norm} vs √W {expected}");
    }
}

#[test]
fn well_distance_vanishes_at_its_own_well() {
    let p = equilateral();
    let d = well_distance(&p, 2, p.well(2), &GeodesicOpts::default()).unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn well_distance_to_other_well_matches_table() {
    let p = equilateral();
    let opts = GeodesicOpts::default();
    let table = distance_table(&p, &opts).unwrap();
    let g = well_distance(&p, 0, p.well(1), &opts).unwrap();
    assert!((g - table.gamma(0, 1)).abs() / table.gamma(0, 1) < 1e-6);
}

/// The equilateral transition path stays clear of the third well; the
/// lattice oracle's own path confirms the clearance independently.
#[test]
fn equilateral_connection_avoids_third_well() {
    let p = equilateral();
    let conn = connection_exists(&p, 0, 1, 0.2, &GeodesicOpts::default()).unwrap();
    assert!(conn.exists, "min clearance {}", conn.min_clearance);
    let (_, oracle_path) = lattice_oracle_path(&p, p.well(0), p.well(1), 400);
    let oracle_clearance = oracle_path
        .iter()
        .map(|q| q.dist(p.well(2)))
        .fold(f64::INFINITY, f64::min);
    assert!(oracle_clearance >= 0.2, "oracle path clearance {oracle_clearance}");
}

/// With the third well sitting on the segment between the others, the
/// cheapest route runs straight through it and the exclusion test fails.
#[test]
fn channel_through_third_well_blocks_connection() {
    let p = build_product_potential(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::ZERO).unwrap();
    let conn = connection_exists(&p, 0, 1, 0.2, &GeodesicOpts::default()).unwrap();
    assert!(!conn.exists, "min clearance {}", conn.min_clearance);
    assert!(conn.min_clearance < 0.05);
}

#[test]
fn zero_exclusion_radius_always_connects() {
    let p = build_product_potential(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::ZERO).unwrap();
    let conn = connection_exists(&p, 0, 1, 0.0, &GeodesicOpts::default()).unwrap();
    assert!(conn.exists);
}

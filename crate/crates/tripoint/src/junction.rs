//! Triple-junction geometry from pairwise interface costs.
//!
//! Three interfaces meeting at a point are balanced when the sine of each
//! opening angle is proportional to the cost of the opposite interface and
//! the three openings sum to a full turn. The closed form builds an
//! auxiliary triangle with the three costs as side lengths: its interior
//! angles βᵢ (law of cosines) give the openings αᵢ = π − βᵢ.

use crate::geodesics::DistanceTable;
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Errors from the angle solve.
#[derive(Debug, Error)]
pub enum JunctionError {
    #[error(
        "no junction: opposite cost {value} for sector {sector} is ≥ the sum {sum_others} of the other two"
    )]
    NoJunction { sector: usize, value: f64, sum_others: f64 },
}

/// Sector openings αᵢ and cumulative directions θᵢ (θ measured from the
/// positive x-axis with base direction 0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JunctionAngles {
    /// Sector openings in radians, each in (0,π), summing to 2π.
    pub alpha: [f64; 3],
    /// Cumulative directions θᵢ = Σ_{k≤i} α_k for the base choice θ₀ = 0.
    pub theta: [f64; 3],
    table: DistanceTable,
}

/// Solves the balance condition for the three sector openings.
///
/// The costs must satisfy the strict triangle inequality; otherwise no
/// angle triple in (0,π)³ has positive sines in the required proportion
/// while summing to 2π, and [`JunctionError::NoJunction`] reports the
/// offending side.
pub fn solve_angles(table: &DistanceTable) -> Result<JunctionAngles, JunctionError> {
    let s = opposite_costs(table);
    let scale = s[0].max(s[1]).max(s[2]);
    let sn = [s[0] / scale, s[1] / scale, s[2] / scale];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        if sn[i] >= sn[j] + sn[k] {
            return Err(JunctionError::NoJunction {
                sector: i,
                value: s[i],
                sum_others: s[j] + s[k],
            });
        }
    }
    let mut alpha = [0.0f64; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let cos_beta = ((sn[j] * sn[j] + sn[k] * sn[k] - sn[i] * sn[i]) / (2.0 * sn[j] * sn[k]))
            .clamp(-1.0, 1.0);
        alpha[i] = PI - cos_beta.acos();
    }
    let theta = [alpha[0], alpha[0] + alpha[1], alpha[0] + alpha[1] + alpha[2]];
    Ok(JunctionAngles { alpha, theta, table: table.clone() })
}

/// Costs opposite each sector: sector i is bounded by the interfaces to the
/// other two wells, so the cost paired with sin αᵢ is Γ(c_j, c_k).
fn opposite_costs(table: &DistanceTable) -> [f64; 3] {
    [table.gamma(1, 2), table.gamma(0, 2), table.gamma(0, 1)]
}

impl JunctionAngles {
    pub fn table(&self) -> &DistanceTable {
        &self.table
    }

    /// Worst deviation of sin αᵢ / (opposite cost) from their mean, with
    /// the costs normalized by their maximum. Zero for an exact solve.
    pub fn sine_law_residual(&self) -> f64 {
        let s = opposite_costs(&self.table);
        let scale = s[0].max(s[1]).max(s[2]);
        let r: Vec<f64> = (0..3).map(|i| self.alpha[i].sin() / (s[i] / scale)).collect();
        let mean = (r[0] + r[1] + r[2]) / 3.0;
        r.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
    }

    /// Interface directions for an arbitrary base direction: θᵢ = base +
    /// running sum of the openings. The last direction closes the turn and
    /// is reported as exactly base + 2π.
    pub fn directions(&self, theta0: f64) -> [f64; 3] {
        [theta0 + self.theta[0], theta0 + self.theta[1], theta0 + TAU]
    }

    /// Sector boundaries [θ₀, θ₁, θ₂, θ₃] with θ₃ = θ₀ + 2π; sector i
    /// spans (boundaries[i], boundaries[i+1]) and carries well i.
    pub fn boundaries(&self, theta0: f64) -> [f64; 4] {
        let d = self.directions(theta0);
        [theta0, d[0], d[1], d[2]]
    }
}

/// Euclidean distance from `x` to the closed half-line
/// {r (cos θ, sin θ) : r ≥ 0}. Positively homogeneous: d(x/ε) = d(x)/ε.
pub fn halfline_distance(direction: f64, x: Vec2) -> f64 {
    let d = Vec2::from_angle(direction);
    let t = x.dot(d);
    if t <= 0.0 {
        x.norm()
    } else {
        (x - t * d).norm()
    }
}

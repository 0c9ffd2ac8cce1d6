//! Run configuration for the command-line harness.
//!
//! A [`RunConfig`] is a plain TOML document describing one experiment: the
//! three-well potential, the junction layout parameters, the shrinking
//! interface-width ladder, grid resolution, solver budget, seed, and output
//! directory.  Loading validates every field; the canonical serialization
//! (`canonical_toml`) is byte-stable, so a config can be hashed, re-emitted,
//! and re-parsed without drift, which is what makes reruns comparable
//! checksum-for-checksum.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potential::equilateral_wells;
use crate::vec2::Vec2;

/// Errors raised while reading, writing, or validating a run configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot access config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse as TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config cannot be serialized: {0}")]
    Emit(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// The three well locations of the product potential, one `[x, y]` pair per
/// phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub wells: [[f64; 2]; 3],
}

/// Steady-state solve budget: residual tolerance (the stopping threshold is
/// `tol / eps^2`) and the maximum number of descent steps per interface
/// width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub tol: f64,
    pub max_steps: usize,
}

/// Full description of one harness run.
///
/// Scalar fields come first so the TOML serializer emits them before the
/// `[potential]` and `[solver]` tables; keep that ordering when adding
/// fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Angular half-width of the boundary blending; `None` picks the widest
    /// value the sector openings allow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Rotation of the first sector ray.
    pub theta0: f64,
    /// Strictly decreasing interface widths, largest first.
    pub eps_ladder: Vec<f64>,
    /// Nodes per side of the square sampling the disk.
    pub grid_n: usize,
    /// Annulus exponents for the core-exclusion diagnostics, each in (0, 1).
    pub alphas: Vec<f64>,
    /// Seed for every randomized probe in the run; must fit a signed
    /// 64-bit integer, the config format's integer type.
    pub seed: u64,
    /// Directory receiving all artifacts and the manifest.
    pub output_dir: PathBuf,
    /// When set, use these pair costs (g01, g02, g12) instead of computing
    /// degenerate geodesic distances — an isolation mode for exercising the
    /// junction geometry on synthetic tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_override: Option<[f64; 3]>,
    pub potential: PotentialSpec,
    pub solver: SolverSpec,
}

impl Default for RunConfig {
    /// The stock symmetric run: unit-circle equilateral wells, widths
    /// {0.2, 0.1, 0.05} on a 256-node grid.
    fn default() -> Self {
        let wells = equilateral_wells();
        RunConfig {
            delta: None,
            theta0: 0.4,
            eps_ladder: vec![0.2, 0.1, 0.05],
            grid_n: 256,
            alphas: vec![0.5],
            seed: 7,
            output_dir: PathBuf::from("runs/equilateral"),
            table_override: None,
            potential: PotentialSpec {
                wells: [
                    [wells[0].x, wells[0].y],
                    [wells[1].x, wells[1].y],
                    [wells[2].x, wells[2].y],
                ],
            },
            solver: SolverSpec {
                tol: 1e-6,
                max_steps: 4_000_000,
            },
        }
    }
}

impl RunConfig {
    /// Grid spacing implied by `grid_n` on the square `[-1, 1]^2`.
    pub fn h(&self) -> f64 {
        2.0 / (self.grid_n as f64 - 1.0)
    }

    /// Well locations as vectors, in phase order.
    pub fn wells(&self) -> [Vec2; 3] {
        let w = &self.potential.wells;
        [
            Vec2::new(w[0][0], w[0][1]),
            Vec2::new(w[1][0], w[1][1]),
            Vec2::new(w[2][0], w[2][1]),
        ]
    }

    /// Parse and validate a TOML config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Parse and validate a TOML config document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The canonical serialization: fixed key order, shortest float
    /// representations that round-trip bit-exactly.
    pub fn canonical_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Write the canonical serialization to a file.
    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        self.validate()?;
        let text = self.canonical_toml()?;
        std::fs::write(path, text).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Check every structural invariant; called by all load paths.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));

        for (i, w) in self.potential.wells.iter().enumerate() {
            if !(w[0].is_finite() && w[1].is_finite()) {
                return fail(format!("well {i} has non-finite coordinates"));
            }
        }
        let wells = self.wells();
        for i in 0..3 {
            for j in (i + 1)..3 {
                if (wells[i] - wells[j]).norm() < 1e-9 {
                    return fail(format!("wells {i} and {j} coincide"));
                }
            }
        }

        if !(64..=4096).contains(&self.grid_n) {
            return fail(format!("grid_n {} outside [64, 4096]", self.grid_n));
        }

        if self.eps_ladder.is_empty() {
            return fail("eps_ladder is empty".into());
        }
        let h = self.h();
        for (k, &eps) in self.eps_ladder.iter().enumerate() {
            if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
                return fail(format!("eps_ladder[{k}] = {eps} outside (0, 1]"));
            }
            if eps < 3.0 * h {
                return fail(format!(
                    "eps_ladder[{k}] = {eps} under-resolved: needs at least 3h = {}",
                    3.0 * h
                ));
            }
        }
        for pair in self.eps_ladder.windows(2) {
            if !(pair[1] < pair[0]) {
                return fail(format!(
                    "eps_ladder must be strictly decreasing, got {} then {}",
                    pair[0], pair[1]
                ));
            }
        }

        if !self.theta0.is_finite() {
            return fail(format!("theta0 = {} is not finite", self.theta0));
        }
        if let Some(delta) = self.delta {
            if !(delta.is_finite() && delta > 0.0 && delta <= std::f64::consts::FRAC_PI_2) {
                return fail(format!("delta = {delta} outside (0, pi/2]"));
            }
        }

        if self.alphas.is_empty() {
            return fail("alphas is empty; need at least one annulus exponent".into());
        }
        for (k, &a) in self.alphas.iter().enumerate() {
            if !(a.is_finite() && a > 0.0 && a < 1.0) {
                return fail(format!("alphas[{k}] = {a} outside (0, 1)"));
            }
        }

        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return fail(format!("solver.tol = {} must be positive", self.solver.tol));
        }
        if self.solver.max_steps == 0 {
            return fail("solver.max_steps must be at least 1".into());
        }

        if self.seed > i64::MAX as u64 {
            return fail(format!(
                "seed {} exceeds the integer range of the config format",
                self.seed
            ));
        }

        if self.output_dir.as_os_str().is_empty() {
            return fail("output_dir is empty".into());
        }

        if let Some(t) = self.table_override {
            for (k, &g) in t.iter().enumerate() {
                if !(g.is_finite() && g > 0.0) {
                    return fail(format!("table_override[{k}] = {g} must be positive"));
                }
            }
        }

        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_config_validates_and_round_trips_bit_exactly() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.canonical_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.canonical_toml().unwrap(), text);
    }

    #[test]
    fn awkward_floats_survive_the_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.delta = Some(0.1 + 0.2);
        cfg.theta0 = std::f64::consts::PI / 7.0;
        cfg.eps_ladder = vec![1.0 / 3.0, 0.123456789012345, 3.0 * cfg.h()];
        cfg.potential.wells[1][1] = (3.0f64).sqrt() / 2.0 + 1e-13;
        cfg.validate().unwrap();
        let text = cfg.canonical_toml().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.canonical_toml().unwrap(), text);
    }

    #[test]
    fn optional_fields_appear_only_when_set() {
        let cfg = RunConfig::default();
        let text = cfg.canonical_toml().unwrap();
        assert!(!text.contains("delta"));
        assert!(!text.contains("table_override"));

        let mut with = cfg.clone();
        with.delta = Some(0.3);
        with.table_override = Some([1.0, 1.0, 2.5]);
        let text = with.canonical_toml().unwrap();
        assert!(text.contains("delta = 0.3"));
        assert!(text.contains("table_override = [1.0, 1.0, 2.5]"));
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, with);
    }

    #[test]
    fn a_triangle_violating_override_passes_config_validation() {
        // The override is vetted for positivity only; whether a junction
        // exists is decided downstream, where the failure is reported
        // against the geometry stage.
        let mut cfg = RunConfig::default();
        cfg.table_override = Some([1.0, 1.0, 2.5]);
        cfg.validate().unwrap();
    }

    fn rejects(mutate: impl FnOnce(&mut RunConfig)) -> String {
        let mut cfg = RunConfig::default();
        mutate(&mut cfg);
        match cfg.validate() {
            Err(ConfigError::Invalid(msg)) => msg,
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn each_structural_invariant_is_enforced() {
        assert!(rejects(|c| c.eps_ladder = vec![]).contains("empty"));
        assert!(rejects(|c| c.eps_ladder = vec![0.1, 0.1]).contains("strictly decreasing"));
        assert!(rejects(|c| c.eps_ladder = vec![0.2, 0.3]).contains("strictly decreasing"));
        assert!(rejects(|c| c.eps_ladder = vec![0.2, 0.01]).contains("under-resolved"));
        assert!(rejects(|c| c.eps_ladder = vec![1.5]).contains("outside"));
        assert!(rejects(|c| c.grid_n = 16).contains("grid_n"));
        assert!(rejects(|c| c.alphas = vec![1.0]).contains("alphas"));
        assert!(rejects(|c| c.alphas = vec![]).contains("alphas"));
        assert!(rejects(|c| c.solver.tol = 0.0).contains("tol"));
        assert!(rejects(|c| c.solver.max_steps = 0).contains("max_steps"));
        assert!(rejects(|c| c.delta = Some(-0.1)).contains("delta"));
        assert!(rejects(|c| c.theta0 = f64::NAN).contains("theta0"));
        assert!(rejects(|c| c.potential.wells[1] = c.potential.wells[0]).contains("coincide"));
        assert!(rejects(|c| c.table_override = Some([1.0, -1.0, 1.0])).contains("table_override"));
        assert!(rejects(|c| c.output_dir = PathBuf::new()).contains("output_dir"));
        assert!(rejects(|c| c.seed = u64::MAX).contains("seed"));
    }

    proptest! {
        #[test]
        fn random_valid_configs_round_trip_bit_exactly(
            theta0 in -6.28f64..6.28,
            eps_hi in 0.11f64..0.9,
            ratio in 0.3f64..0.9,
            alpha in 0.01f64..0.99,
            seed in 0u64..=i64::MAX as u64,
            n in 64usize..512,
        ) {
            let mut cfg = RunConfig::default();
            cfg.theta0 = theta0;
            cfg.grid_n = n;
            let lo = (eps_hi * ratio).max(3.0 * cfg.h() + 1e-9);
            prop_assume!(lo < eps_hi);
            cfg.eps_ladder = vec![eps_hi, lo];
            cfg.alphas = vec![alpha];
            cfg.seed = seed;
            cfg.validate().unwrap();
            let text = cfg.canonical_toml().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.canonical_toml().unwrap(), text);
        }
    }
}

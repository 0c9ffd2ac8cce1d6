//! End-to-end run orchestration.
//!
//! A run walks a fixed sequence of stages, each consuming the previous
//! stage's products and emitting its artifacts through the manifest-keeping
//! [`Emitter`]:
//!
//! 1. `validate_potential` — build the three-well potential and check its
//!    structural hypotheses.
//! 2. `geodesics` — pairwise degenerate path costs (or a synthetic table).
//! 3. `connections` — the three one-dimensional transition profiles.
//! 4. `junction_geometry` — sector openings from the pair costs.
//! 5. `boundary_ansatz` — the glued boundary map.
//! 6. `solve_sweep` — steady states for every interface width, largest
//!    first, with per-step descent traces and raw field dumps.
//! 7. `diagnostics` — distances to the sharp limit, annulus errors,
//!    cross-width comparisons, rescaled-field distances, label images.
//! 8. `report` — the convergence table, measured junction angles, the
//!    partition stability probe, and pass/fail verdicts.
//!
//! Each subcommand of the binary runs a prefix (or, for `report`, reloads
//! the sweep's dumps instead of re-solving).  Failures carry the stage name
//! and a class — configuration/validation versus numerical — that the
//! binary maps to its exit code.  Every artifact encoder is deterministic,
//! so rerunning a config reproduces the manifest checksum-for-checksum;
//! wall-clock timings are deliberately kept out of the artifacts.

use serde::Serialize;
use thiserror::Error;

use crate::ansatz::{build_partition, default_delta, AnsatzError, BoundaryMap};
use crate::config::{ConfigError, RunConfig};
use crate::geodesics::{distance_table, DistanceTable, GeodesicError, GeodesicOpts};
use crate::heteroclinic::{solve_connection, HeteroclinicError, HeteroclinicProfile, ProfileSummary};
use crate::junction::{solve_angles, JunctionAngles, JunctionError};
use crate::output::{eps_tag, fmt_f64, Emitter, OutputError, RunManifest, read_field_dump, render_pgm, sha256_hex};
use crate::potential::{build_product_potential, Potential, PotentialError};
use crate::sharp_interface::{
    annulus_grad_sup_error, annulus_sup_error, blowdown_distances, energy_i0, l1_distance,
    measure_junction_angles, partition_perturbation_probe, quantize_to_wells, relative_energy_g,
    two_scale_core_error, u0_field, u0_partition, BlowdownEntry, I0Breakdown, ProbeReport,
    SectorTrace, SharpError,
};
use crate::solver::{
    energy_ieps, make_grid, solve_steady_traced, DiskGrid, Field2D, SolveReport, SolverError,
};
use crate::vec2::Vec2;

/// Transition-profile discretization used by the pipeline: half-width of
/// the truncated line, node count, and residual tolerance.  Accurate to a
/// few parts in 1e5 on the pair energies while staying fast.
pub const CONNECTION_HALF_WIDTH: f64 = 10.0;
pub const CONNECTION_NODES: usize = 801;
pub const CONNECTION_TOL: f64 = 5e-4;

/// Random samples drawn when checking the potential's hypotheses.
const VALIDATE_SAMPLES: usize = 4000;
/// Accepted descent steps between trace rows.
const TRACE_STRIDE: usize = 256;
/// Trials in the partition stability probe.
const PROBE_TRIALS: usize = 100;
/// Samples along the rim in the boundary-trace table.
const BOUNDARY_SAMPLES: usize = 720;

/// How far the run goes, and what the width list is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Goal {
    /// Stage 1 only.
    ValidatePotential,
    /// Through stage 2.
    Geodesics,
    /// Through stage 3.
    Connections,
    /// Stages 1, 2, 4 — the geometry needs only the pair costs.
    Angles,
    /// Through stage 6 at a single width (default: the ladder's largest).
    Solve { eps: Option<f64> },
    /// Through stage 6 over the full ladder.
    Sweep,
    /// Stages 1–5, then 7–8 on the dumps a previous sweep left behind.
    Report,
    /// All eight stages.
    Full,
}

/// Failure family, fixing the process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureClass {
    /// Bad configuration or violated structural requirements (exit 2).
    Validation,
    /// A numerical procedure failed to converge or blew up (exit 3).
    Numerical,
}

/// A failure, attributed to the stage that raised it.
#[derive(Debug, Error)]
#[error("stage {stage} failed: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub class: FailureClass,
    pub message: String,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self.class {
            FailureClass::Validation => 2,
            FailureClass::Numerical => 3,
        }
    }
}

fn verr(stage: &'static str, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError {
        stage,
        class: FailureClass::Validation,
        message: msg.to_string(),
    }
}

fn stage_err<E: ClassifyFailure + std::fmt::Display>(stage: &'static str, e: E) -> PipelineError {
    PipelineError {
        stage,
        class: e.failure_class(),
        message: e.to_string(),
    }
}

/// Maps a module error onto the validation/numerical split.
trait ClassifyFailure {
    fn failure_class(&self) -> FailureClass;
}

impl ClassifyFailure for ConfigError {
    fn failure_class(&self) -> FailureClass {
        FailureClass::Validation
    }
}

impl ClassifyFailure for PotentialError {
    fn failure_class(&self) -> FailureClass {
        FailureClass::Validation
    }
}

impl ClassifyFailure for GeodesicError {
    fn failure_class(&self) -> FailureClass {
        match self {
            GeodesicError::NoConvergence { .. } | GeodesicError::PairNoConvergence { .. } => {
                FailureClass::Numerical
            }
            _ => FailureClass::Validation,
        }
    }
}

impl ClassifyFailure for JunctionError {
    fn failure_class(&self) -> FailureClass {
        FailureClass::Validation
    }
}

impl ClassifyFailure for HeteroclinicError {
    fn failure_class(&self) -> FailureClass {
        match self {
            HeteroclinicError::ResidualTooLarge { .. } | HeteroclinicError::TailNotSettled { .. } => {
                FailureClass::Numerical
            }
            HeteroclinicError::InvalidParameter(_) => FailureClass::Validation,
            HeteroclinicError::Geodesic(g) => g.failure_class(),
        }
    }
}

impl ClassifyFailure for AnsatzError {
    fn failure_class(&self) -> FailureClass {
        FailureClass::Validation
    }
}

impl ClassifyFailure for SolverError {
    fn failure_class(&self) -> FailureClass {
        match self {
            SolverError::InvalidParameter(_) | SolverError::ResolutionTooCoarse { .. } => {
                FailureClass::Validation
            }
            _ => FailureClass::Numerical,
        }
    }
}

impl ClassifyFailure for SharpError {
    fn failure_class(&self) -> FailureClass {
        match self {
            SharpError::NoTriplePoint => FailureClass::Numerical,
            _ => FailureClass::Validation,
        }
    }
}

impl ClassifyFailure for OutputError {
    fn failure_class(&self) -> FailureClass {
        FailureClass::Validation
    }
}

#[derive(Serialize)]
struct DistanceReport {
    mode: &'static str,
    gamma: [[f64; 3]; 3],
}

#[derive(Serialize)]
struct JunctionReport {
    alpha: [f64; 3],
    theta: [f64; 3],
    sine_law_residual: f64,
    sector_bounds: [f64; 4],
}

#[derive(Serialize)]
struct AnsatzReport {
    theta0: f64,
    delta: f64,
    delta_was_default: bool,
    partition_residual: f64,
}

#[derive(Serialize)]
struct SolveSummaryRow {
    eps: f64,
    iterations: usize,
    rejected: usize,
    final_residual: f64,
    residual_target: f64,
    interface_energy: f64,
    flow_energy: f64,
    sup_norm: f64,
    sup_bound: f64,
    dt: f64,
}

/// Per-width diagnostic record.
#[derive(Clone, Serialize)]
pub struct DiagRow {
    pub eps: f64,
    pub interface_energy: f64,
    /// |interface energy − limit energy| / limit energy.
    pub relative_gap: f64,
    /// Phase-space L1 distance to the sharp limit field.
    pub l1_to_limit: f64,
    /// Width-normalized energy gap to the resampled boundary map.
    pub relative_flow_gap: f64,
    pub annulus: Vec<AnnulusRow>,
    pub angles: Option<AngleRow>,
}

#[derive(Clone, Serialize)]
pub struct AnnulusRow {
    pub alpha: f64,
    pub sup_error: f64,
    pub grad_sup_error: f64,
}

#[derive(Clone, Serialize)]
pub struct AngleRow {
    pub junction: [f64; 2],
    pub alpha_deg: [f64; 3],
    pub max_deviation_deg: f64,
    /// Worst per-arm root-mean-square fit residual.
    pub max_rms_residual: f64,
}

#[derive(Serialize)]
struct TwoScaleRow {
    eps: f64,
    sigma: f64,
    alpha: f64,
    core_error: Option<f64>,
    note: &'static str,
}

#[derive(Serialize)]
struct DiagnosticsReport {
    limit_energy: I0Breakdown,
    rows: Vec<DiagRow>,
    blowdown_computed: bool,
}

#[derive(Serialize)]
struct Verdicts {
    l1_strictly_decreasing: Option<bool>,
    energy_gap_strictly_decreasing: Option<bool>,
    final_energy_gap: f64,
    final_gap_within_15_percent: bool,
    junction_angles_within_5_deg: Option<bool>,
    probe_all_pass: bool,
}

#[derive(Serialize)]
struct FinalReport {
    limit_energy: I0Breakdown,
    sweep: Vec<DiagRow>,
    angle_targets_deg: [f64; 3],
    measured_angles_deg: Option<[f64; 3]>,
    max_angle_deviation_deg: Option<f64>,
    stability_probe: ProbeReport,
    verdicts: Verdicts,
}

struct Solved {
    eps: f64,
    grid: DiskGrid,
    field: Field2D,
    report: Option<SolveReport>,
}

/// Run `cfg` up to `goal`, returning the manifest of everything written.
pub fn run(cfg: &RunConfig, goal: Goal) -> Result<RunManifest, PipelineError> {
    cfg.validate().map_err(|e| stage_err("validate_potential", e))?;
    let canonical = cfg
        .canonical_toml()
        .map_err(|e| stage_err("validate_potential", e))?;
    let mut em = Emitter::create(&cfg.output_dir, sha256_hex(canonical.as_bytes()))
        .map_err(|e| stage_err("validate_potential", e))?;

    // Stage 1: the potential and its structural hypotheses.
    em.begin_stage("validate_potential");
    em.emit_bytes("config.toml", canonical.as_bytes())
        .map_err(|e| stage_err("validate_potential", e))?;
    let wells = cfg.wells();
    let potential = build_product_potential(wells[0], wells[1], wells[2])
        .map_err(|e| stage_err("validate_potential", e))?;
    let hypotheses = potential
        .validate(VALIDATE_SAMPLES, cfg.seed)
        .map_err(|e| stage_err("validate_potential", e))?;
    em.emit_json("potential.json", &hypotheses)
        .map_err(|e| stage_err("validate_potential", e))?;
    if goal == Goal::ValidatePotential {
        return finish(em);
    }

    // Stage 2: pair costs, computed or injected.
    em.begin_stage("geodesics");
    let table = stage_geodesics(&mut em, cfg, &potential)?;
    if goal == Goal::Geodesics {
        return finish(em);
    }

    // Stage 3: transition profiles (the geometry-only goal skips them).
    let profiles = if goal == Goal::Angles {
        None
    } else {
        em.begin_stage("connections");
        Some(stage_connections(&mut em, &potential)?)
    };
    if goal == Goal::Connections {
        return finish(em);
    }

    // Stage 4: sector openings from the pair costs.
    em.begin_stage("junction_geometry");
    let angles = solve_angles(&table).map_err(|e| stage_err("junction_geometry", e))?;
    em.emit_json(
        "junction.json",
        &JunctionReport {
            alpha: angles.alpha,
            theta: angles.theta,
            sine_law_residual: angles.sine_law_residual(),
            sector_bounds: angles.boundaries(cfg.theta0),
        },
    )
    .map_err(|e| stage_err("junction_geometry", e))?;
    if goal == Goal::Angles {
        return finish(em);
    }

    // Stage 5: glue profiles across the sector rays.
    em.begin_stage("boundary_ansatz");
    let profiles = profiles.expect("profiles computed for every map-building goal");
    let map = stage_ansatz(&mut em, cfg, &angles, profiles)?;
    let trace = SectorTrace::new(&angles, cfg.theta0);

    // Stage 6: steady states over the width list.
    let solved = match goal {
        Goal::Solve { eps } => {
            em.begin_stage("solve_sweep");
            let eps = eps.unwrap_or(cfg.eps_ladder[0]);
            vec![stage_solve_one(&mut em, cfg, &potential, &map, eps)?]
        }
        Goal::Sweep | Goal::Full => {
            em.begin_stage("solve_sweep");
            let mut all = Vec::new();
            for &eps in &cfg.eps_ladder {
                all.push(stage_solve_one(&mut em, cfg, &potential, &map, eps)?);
            }
            all
        }
        Goal::Report => reload_sweep(cfg)?,
        _ => unreachable!("earlier goals returned above"),
    };
    if matches!(goal, Goal::Solve { .. } | Goal::Sweep) {
        return finish(em);
    }

    // Stage 7: distances to the sharp limit.
    em.begin_stage("diagnostics");
    let (i0, rows) = stage_diagnostics(&mut em, cfg, &potential, &table, &angles, &map, &trace, &solved)?;

    // Stage 8: verdicts and the stability probe.
    em.begin_stage("report");
    stage_report(&mut em, cfg, &table, &angles, &trace, i0, rows)?;
    finish(em)
}

fn finish(em: Emitter) -> Result<RunManifest, PipelineError> {
    em.finish().map_err(|e| stage_err("report", e))
}

fn stage_geodesics(
    em: &mut Emitter,
    cfg: &RunConfig,
    potential: &Potential,
) -> Result<DistanceTable, PipelineError> {
    const STAGE: &str = "geodesics";
    let oops = |e: GeodesicError| stage_err(STAGE, e);
    let (table, mode) = match cfg.table_override {
        Some([g01, g02, g12]) => (
            DistanceTable::from_pairs(g01, g02, g12).map_err(oops)?,
            "synthetic",
        ),
        None => (
            distance_table(potential, &GeodesicOpts::default()).map_err(oops)?,
            "computed",
        ),
    };
    em.emit_json(
        "distances.json",
        &DistanceReport {
            mode,
            gamma: *table.entries(),
        },
    )
    .map_err(|e| stage_err(STAGE, e))?;
    let mut rows = Vec::new();
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        rows.push(vec![
            i.to_string(),
            j.to_string(),
            fmt_f64(table.gamma(i, j)),
        ]);
    }
    em.emit_csv("distances.csv", &["i", "j", "cost"], &rows)
        .map_err(|e| stage_err(STAGE, e))?;
    if mode == "computed" {
        let mut rows = Vec::new();
        for pair in table.paths() {
            for (k, p) in pair.path.nodes().iter().enumerate() {
                rows.push(vec![
                    pair.i.to_string(),
                    pair.j.to_string(),
                    k.to_string(),
                    fmt_f64(p.x),
                    fmt_f64(p.y),
                ]);
            }
        }
        em.emit_csv("geodesic_paths.csv", &["i", "j", "node", "u1", "u2"], &rows)
            .map_err(|e| stage_err(STAGE, e))?;
    }
    Ok(table)
}

fn stage_connections(
    em: &mut Emitter,
    potential: &Potential,
) -> Result<[HeteroclinicProfile; 3], PipelineError> {
    const STAGE: &str = "connections";
    let mut profiles = Vec::with_capacity(3);
    let mut summaries: Vec<ProfileSummary> = Vec::with_capacity(3);
    let mut rows = Vec::new();
    for (i, j) in [(0usize, 1usize), (1, 2), (2, 0)] {
        let profile = solve_connection(
            potential,
            i,
            j,
            CONNECTION_HALF_WIDTH,
            CONNECTION_NODES,
            CONNECTION_TOL,
        )
        .map_err(|e| stage_err(STAGE, e))?;
        summaries.push(profile.summary());
        let step = 2.0 * CONNECTION_HALF_WIDTH / (CONNECTION_NODES as f64 - 1.0);
        for k in 0..CONNECTION_NODES {
            let tau = -CONNECTION_HALF_WIDTH + k as f64 * step;
            let v = profile.evaluate(tau);
            rows.push(vec![
                format!("{i}{j}"),
                fmt_f64(tau),
                fmt_f64(v.x),
                fmt_f64(v.y),
            ]);
        }
        profiles.push(profile);
    }
    em.emit_json("connections.json", &summaries)
        .map_err(|e| stage_err(STAGE, e))?;
    em.emit_csv("profiles.csv", &["pair", "tau", "u1", "u2"], &rows)
        .map_err(|e| stage_err(STAGE, e))?;
    Ok(profiles.try_into().map_err(|_| verr(STAGE, "expected three profiles"))?)
}

fn stage_ansatz(
    em: &mut Emitter,
    cfg: &RunConfig,
    angles: &JunctionAngles,
    profiles: [HeteroclinicProfile; 3],
) -> Result<BoundaryMap, PipelineError> {
    const STAGE: &str = "boundary_ansatz";
    let delta = cfg.delta.unwrap_or_else(|| default_delta(angles));
    let map = BoundaryMap::assemble(cfg.wells(), angles, cfg.theta0, delta, profiles)
        .map_err(|e| stage_err(STAGE, e))?;
    let partition = build_partition(angles, cfg.theta0, delta).map_err(|e| stage_err(STAGE, e))?;
    em.emit_json(
        "ansatz.json",
        &AnsatzReport {
            theta0: cfg.theta0,
            delta,
            delta_was_default: cfg.delta.is_none(),
            partition_residual: partition.partition_residual(4096),
        },
    )
    .map_err(|e| stage_err(STAGE, e))?;

    let trace = SectorTrace::new(angles, cfg.theta0);
    let mut rows = Vec::with_capacity(BOUNDARY_SAMPLES);
    for k in 0..BOUNDARY_SAMPLES {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / BOUNDARY_SAMPLES as f64;
        let v = map.eval_phi(Vec2::new(theta.cos(), theta.sin()));
        rows.push(vec![
            fmt_f64(theta),
            fmt_f64(v.x),
            fmt_f64(v.y),
            trace.phase_at(theta).to_string(),
        ]);
    }
    em.emit_csv(
        "boundary_trace.csv",
        &["theta", "phi1", "phi2", "phase"],
        &rows,
    )
    .map_err(|e| stage_err(STAGE, e))?;
    Ok(map)
}

fn stage_solve_one(
    em: &mut Emitter,
    cfg: &RunConfig,
    potential: &Potential,
    map: &BoundaryMap,
    eps: f64,
) -> Result<Solved, PipelineError> {
    const STAGE: &str = "solve_sweep";
    let (grid, init) = make_grid(cfg.grid_n, eps, map).map_err(|e| stage_err(STAGE, e))?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let (report, field) = solve_steady_traced(
        grid.clone(),
        init,
        potential,
        eps,
        cfg.solver.tol,
        cfg.solver.max_steps,
        potential.max_well_norm(),
        |state, outcome| {
            let step = state.accepted();
            if step == 1 || step % TRACE_STRIDE == 0 || outcome.converged {
                rows.push(vec![
                    step.to_string(),
                    fmt_f64(state.t()),
                    fmt_f64(outcome.dt),
                    fmt_f64(outcome.residual),
                    fmt_f64(outcome.energy),
                    fmt_f64(energy_ieps(state.grid(), state.field(), potential, eps)),
                ]);
            }
        },
    )
    .map_err(|e| stage_err(STAGE, e))?;

    let tag = eps_tag(eps);
    em.emit_csv(
        &format!("solve/{tag}_trace.csv"),
        &["step", "time", "dt", "residual", "flow_energy", "interface_energy"],
        &rows,
    )
    .map_err(|e| stage_err(STAGE, e))?;
    em.emit_field(&format!("fields/{tag}"), &grid, &field, eps)
        .map_err(|e| stage_err(STAGE, e))?;
    em.emit_json(
        &format!("solve/{tag}_summary.json"),
        &SolveSummaryRow {
            eps,
            iterations: report.iterations,
            rejected: report.rejected,
            final_residual: report.final_residual,
            residual_target: report.residual_target,
            interface_energy: report.energy_ieps,
            flow_energy: report.flow_energy,
            sup_norm: report.sup_norm,
            sup_bound: report.sup_bound,
            dt: report.dt,
        },
    )
    .map_err(|e| stage_err(STAGE, e))?;
    Ok(Solved {
        eps,
        grid,
        field,
        report: Some(report),
    })
}

/// For the report goal: load the fields a previous sweep dumped.
fn reload_sweep(cfg: &RunConfig) -> Result<Vec<Solved>, PipelineError> {
    const STAGE: &str = "diagnostics";
    let mut solved = Vec::new();
    for &eps in &cfg.eps_ladder {
        let grid = DiskGrid::disk(cfg.grid_n).map_err(|e| stage_err(STAGE, e))?;
        let base = format!("fields/{}", eps_tag(eps));
        let (meta, field) =
            read_field_dump(&cfg.output_dir, &base, &grid).map_err(|e| {
                verr(
                    STAGE,
                    format!("cannot reload the sweep dump {base}: {e}; run the sweep first"),
                )
            })?;
        if meta.eps != eps {
            return Err(verr(
                STAGE,
                format!("dump {base} was computed at width {} not {eps}", meta.eps),
            ));
        }
        solved.push(Solved {
            eps,
            grid,
            field,
            report: None,
        });
    }
    Ok(solved)
}

#[allow(clippy::too_many_arguments)]
fn stage_diagnostics(
    em: &mut Emitter,
    cfg: &RunConfig,
    potential: &Potential,
    table: &DistanceTable,
    angles: &JunctionAngles,
    map: &BoundaryMap,
    trace: &SectorTrace,
    solved: &[Solved],
) -> Result<(I0Breakdown, Vec<DiagRow>), PipelineError> {
    const STAGE: &str = "diagnostics";
    let oops = |e: SharpError| stage_err(STAGE, e);
    let wells = cfg.wells();

    let grid0 = DiskGrid::disk(cfg.grid_n).map_err(|e| stage_err(STAGE, e))?;
    let part0 = u0_partition(&grid0, angles, cfg.theta0);
    let i0 = energy_i0(&part0, table, trace);
    em.emit_bytes(
        "labels/limit.pgm",
        &render_pgm(cfg.grid_n, |row, col| part0.label(row, col)),
    )
    .map_err(|e| stage_err(STAGE, e))?;

    let mut rows: Vec<DiagRow> = Vec::new();
    let mut annulus_rows: Vec<Vec<String>> = Vec::new();
    let smallest_eps = solved.iter().map(|s| s.eps).fold(f64::INFINITY, f64::min);
    for s in solved {
        let limit_field = u0_field(&s.grid, angles, &wells, cfg.theta0);
        let l1 = l1_distance(&s.grid, &s.field, &limit_field).map_err(oops)?;
        let interface_energy = match &s.report {
            Some(r) => r.energy_ieps,
            None => energy_ieps(&s.grid, &s.field, potential, s.eps),
        };
        let relative_gap = (interface_energy - i0.total).abs() / i0.total;
        let relative_flow_gap = relative_energy_g(&s.grid, &s.field, map, potential, s.eps);

        let mut annulus = Vec::new();
        for &alpha in &cfg.alphas {
            let sup = annulus_sup_error(&s.grid, &s.field, map, s.eps, alpha).map_err(oops)?;
            let grad = annulus_grad_sup_error(&s.grid, &s.field, map, s.eps, alpha).map_err(oops)?;
            annulus_rows.push(vec![
                fmt_f64(s.eps),
                fmt_f64(alpha),
                fmt_f64(sup),
                fmt_f64(grad),
            ]);
            annulus.push(AnnulusRow {
                alpha,
                sup_error: sup,
                grad_sup_error: grad,
            });
        }

        let quantized = quantize_to_wells(&s.grid, &s.field, &wells);
        em.emit_bytes(
            &format!("labels/{}.pgm", eps_tag(s.eps)),
            &render_pgm(cfg.grid_n, |row, col| quantized.label(row, col)),
        )
        .map_err(|e| stage_err(STAGE, e))?;
        let angles_row = match measure_junction_angles(&quantized) {
            Ok(m) => {
                let deg = |r: f64| r.to_degrees();
                let max_dev = (0..3)
                    .map(|i| (m.alpha[i] - angles.alpha[i]).abs().to_degrees())
                    .fold(0.0f64, f64::max);
                Some(AngleRow {
                    junction: [m.junction.x, m.junction.y],
                    alpha_deg: [deg(m.alpha[0]), deg(m.alpha[1]), deg(m.alpha[2])],
                    max_deviation_deg: max_dev,
                    max_rms_residual: m.rms_residual.iter().cloned().fold(0.0, f64::max),
                })
            }
            Err(SharpError::NoTriplePoint) if s.eps > smallest_eps => None,
            Err(e) => return Err(stage_err(STAGE, e)),
        };

        rows.push(DiagRow {
            eps: s.eps,
            interface_energy,
            relative_gap,
            l1_to_limit: l1,
            relative_flow_gap,
            annulus,
            angles: angles_row,
        });
    }

    em.emit_csv(
        "diagnostics.csv",
        &[
            "eps",
            "interface_energy",
            "relative_gap",
            "l1_to_limit",
            "relative_flow_gap",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.eps),
                    fmt_f64(r.interface_energy),
                    fmt_f64(r.relative_gap),
                    fmt_f64(r.l1_to_limit),
                    fmt_f64(r.relative_flow_gap),
                ]
            })
            .collect::<Vec<_>>(),
    )
    .map_err(|e| stage_err(STAGE, e))?;
    em.emit_csv(
        "annulus.csv",
        &["eps", "alpha", "sup_error", "grad_sup_error"],
        &annulus_rows,
    )
    .map_err(|e| stage_err(STAGE, e))?;

    // Cross-width core comparison on consecutive ladder rungs.
    let mut two_scale = Vec::new();
    for pair in solved.windows(2) {
        let (big, small) = (&pair[0], &pair[1]);
        let alpha = cfg.alphas[0];
        let row = match two_scale_core_error(
            &big.grid,
            &big.field,
            big.eps,
            &small.grid,
            &small.field,
            small.eps,
            alpha,
        ) {
            Ok(err) => TwoScaleRow {
                eps: big.eps,
                sigma: small.eps,
                alpha,
                core_error: Some(err),
                note: "",
            },
            Err(SharpError::ScaleConditionViolated { .. }) => TwoScaleRow {
                eps: big.eps,
                sigma: small.eps,
                alpha,
                core_error: None,
                note: "skipped: widths too close for the core comparison",
            },
            Err(e) => return Err(stage_err(STAGE, e)),
        };
        two_scale.push(row);
    }
    em.emit_csv(
        "two_scale.csv",
        &["eps", "sigma", "alpha", "core_error", "note"],
        &two_scale
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.eps),
                    fmt_f64(r.sigma),
                    fmt_f64(r.alpha),
                    r.core_error.map(fmt_f64).unwrap_or_default(),
                    r.note.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )
    .map_err(|e| stage_err(STAGE, e))?;

    // Pairwise distances between the rescaled fields, widest to narrowest.
    let blowdown_computed = solved.len() >= 2;
    if blowdown_computed {
        let entries: Vec<BlowdownEntry> = solved
            .iter()
            .map(|s| BlowdownEntry {
                eps: s.eps,
                grid: &s.grid,
                field: &s.field,
            })
            .collect();
        let matrix = blowdown_distances(&entries, map).map_err(oops)?;
        let mut rows = Vec::new();
        for (a, row) in matrix.iter().enumerate() {
            for (b, &d) in row.iter().enumerate() {
                rows.push(vec![
                    fmt_f64(solved[a].eps),
                    fmt_f64(solved[b].eps),
                    fmt_f64(d),
                ]);
            }
        }
        em.emit_csv("blowdown.csv", &["eps_a", "eps_b", "sup_distance"], &rows)
            .map_err(|e| stage_err(STAGE, e))?;
    }

    em.emit_json(
        "diagnostics.json",
        &DiagnosticsReport {
            limit_energy: i0.clone(),
            rows: rows.clone(),
            blowdown_computed,
        },
    )
    .map_err(|e| stage_err(STAGE, e))?;
    Ok((i0, rows))
}

fn stage_report(
    em: &mut Emitter,
    cfg: &RunConfig,
    table: &DistanceTable,
    angles: &JunctionAngles,
    trace: &SectorTrace,
    i0: I0Breakdown,
    rows: Vec<DiagRow>,
) -> Result<(), PipelineError> {
    const STAGE: &str = "report";
    let grid0 = DiskGrid::disk(cfg.grid_n).map_err(|e| stage_err(STAGE, e))?;
    let part0 = u0_partition(&grid0, angles, cfg.theta0);
    let probe = partition_perturbation_probe(&part0, table, trace, PROBE_TRIALS, cfg.seed);

    let strictly_decreasing = |vals: &[f64]| vals.windows(2).all(|w| w[1] < w[0]);
    let l1s: Vec<f64> = rows.iter().map(|r| r.l1_to_limit).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.relative_gap).collect();
    let final_gap = *gaps.last().expect("at least one width was solved");
    let finest = rows.last().expect("at least one width was solved");
    let measured = finest.angles.as_ref();

    let verdicts = Verdicts {
        l1_strictly_decreasing: (rows.len() >= 2).then(|| strictly_decreasing(&l1s)),
        energy_gap_strictly_decreasing: (rows.len() >= 2).then(|| strictly_decreasing(&gaps)),
        final_energy_gap: final_gap,
        final_gap_within_15_percent: final_gap <= 0.15,
        junction_angles_within_5_deg: measured.map(|m| m.max_deviation_deg <= 5.0),
        probe_all_pass: probe.all_pass,
    };

    em.emit_csv(
        "convergence.csv",
        &["eps", "l1_to_limit", "relative_gap", "relative_flow_gap"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.eps),
                    fmt_f64(r.l1_to_limit),
                    fmt_f64(r.relative_gap),
                    fmt_f64(r.relative_flow_gap),
                ]
            })
            .collect::<Vec<_>>(),
    )
    .map_err(|e| stage_err(STAGE, e))?;
    em.emit_json("probe.json", &probe)
        .map_err(|e| stage_err(STAGE, e))?;
    em.emit_json(
        "report.json",
        &FinalReport {
            limit_energy: i0,
            angle_targets_deg: [
                angles.alpha[0].to_degrees(),
                angles.alpha[1].to_degrees(),
                angles.alpha[2].to_degrees(),
            ],
            measured_angles_deg: measured.map(|m| m.alpha_deg),
            max_angle_deviation_deg: measured.map(|m| m.max_deviation_deg),
            sweep: rows,
            stability_probe: probe,
            verdicts,
        },
    )
    .map_err(|e| stage_err(STAGE, e))?;
    Ok(())
}

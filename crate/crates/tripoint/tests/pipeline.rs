//! End-to-end runs of the artifact pipeline at a small, fast scale:
//! manifest structure and checksums, in-place rerun determinism, the
//! report-from-dumps path, synthetic-table failure attribution, and the
//! command-line surface of the installed binary.

use std::path::Path;
use std::sync::OnceLock;

use tempfile::TempDir;
use tripoint::config::RunConfig;
use tripoint::output::{sha256_hex, RunManifest};
use tripoint::pipeline::{run, FailureClass, Goal};

const STAGE_NAMES: [&str; 8] = [
    "validate_potential",
    "geodesics",
    "connections",
    "junction_geometry",
    "boundary_ansatz",
    "solve_sweep",
    "diagnostics",
    "report",
];

fn small_cfg(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid_n = 96;
    cfg.eps_ladder = vec![0.2];
    cfg.seed = 11;
    cfg.output_dir = out.to_path_buf();
    cfg
}

struct Fixture {
    cfg: RunConfig,
    _dir: TempDir,
    manifest: RunManifest,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

/// One complete small run, shared by the read-only tests below.
fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let cfg = small_cfg(&dir.path().join("run"));
        let manifest = run(&cfg, Goal::Full).unwrap();
        Fixture {
            cfg,
            _dir: dir,
            manifest,
        }
    })
}

fn json_at(root: &Path, rel: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(root.join(rel)).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn a_full_run_emits_eight_verified_stages_and_replays_from_its_dumps() {
    let fix = fixture();
    let root = &fix.cfg.output_dir;

    // All eight stages, in order, every file present with its recorded
    // checksum.
    let names: Vec<&str> = fix.manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, STAGE_NAMES);
    for stage in &fix.manifest.stages {
        assert!(
            !stage.files.is_empty(),
            "stage {} recorded no artifacts",
            stage.stage
        );
    }
    fix.manifest.verify(root).unwrap();

    // The emitted config is canonical: it parses back to the config that
    // ran, and its digest is the manifest's config digest.
    let text = std::fs::read_to_string(root.join("config.toml")).unwrap();
    let parsed = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(parsed, fix.cfg);
    assert_eq!(sha256_hex(text.as_bytes()), fix.manifest.config_sha256);

    // The report carries the headline numbers: a symmetric junction has
    // three 120-degree openings, and the measured angles at the finest
    // width should sit within the coarse-grid tolerance.
    let report = json_at(root, "report.json");
    let targets = report["angle_targets_deg"].as_array().unwrap();
    for t in targets {
        assert!((t.as_f64().unwrap() - 120.0).abs() < 1e-3);
    }
    let max_dev = report["max_angle_deviation_deg"].as_f64().unwrap();
    assert!(max_dev < 10.0, "measured angles off by {max_dev} degrees");
    assert!(report["stability_probe"]["all_pass"].as_bool().unwrap());
    assert!(report["verdicts"]["final_gap_within_15_percent"].is_boolean());

    // The descent trace ends at or below the residual target.
    let summary = json_at(root, "solve/eps0p2_summary.json");
    assert!(
        summary["final_residual"].as_f64().unwrap()
            <= summary["residual_target"].as_f64().unwrap()
    );
    let trace = std::fs::read_to_string(root.join("solve/eps0p2_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,time,dt,residual,flow_energy,interface_energy"
    );
    assert!(lines.count() >= 2);

    // Replaying the report from the dumps, without re-solving, reproduces
    // the diagnostics byte-for-byte.
    let before = std::fs::read(root.join("diagnostics.csv")).unwrap();
    let replay = run(&fix.cfg, Goal::Report).unwrap();
    let names: Vec<&str> = replay.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(
        names,
        [
            "validate_potential",
            "geodesics",
            "connections",
            "junction_geometry",
            "boundary_ansatz",
            "diagnostics",
            "report",
        ]
    );
    let after = std::fs::read(root.join("diagnostics.csv")).unwrap();
    assert_eq!(before, after);

    // Without the dumps the replay must fail cleanly, pointing at the
    // missing sweep.
    std::fs::remove_dir_all(root.join("fields")).unwrap();
    let err = run(&fix.cfg, Goal::Report).unwrap_err();
    assert_eq!(err.stage, "diagnostics");
    assert_eq!(err.class, FailureClass::Validation);
    assert_eq!(err.exit_code(), 2);
    assert!(err.message.contains("run the sweep first"), "{}", err.message);
}

#[test]
fn rerunning_a_config_in_place_reproduces_every_checksum() {
    let dir = TempDir::new().unwrap();
    let cfg = small_cfg(&dir.path().join("run"));
    let first = run(&cfg, Goal::Full).unwrap();
    let second = run(&cfg, Goal::Full).unwrap();
    assert_eq!(first.config_sha256, second.config_sha256);
    assert_eq!(first.checksums(), second.checksums());
    second.verify(&cfg.output_dir).unwrap();
}

#[test]
fn a_triangle_violating_synthetic_table_halts_at_the_geometry_stage() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_cfg(&dir.path().join("run"));
    // One pair cost dearer than the other two combined: no junction can
    // balance these, so the geometry stage must refuse.
    cfg.table_override = Some([1.0, 1.0, 2.5]);
    let err = run(&cfg, Goal::Full).unwrap_err();
    assert_eq!(err.stage, "junction_geometry");
    assert_eq!(err.class, FailureClass::Validation);
    assert_eq!(err.exit_code(), 2);

    // A failed run writes no manifest; the partial artifacts are on disk.
    assert!(!cfg.output_dir.join("manifest.json").exists());
    assert!(cfg.output_dir.join("distances.json").exists());
    let distances = json_at(&cfg.output_dir, "distances.json");
    assert_eq!(distances["mode"], "synthetic");
    assert!(cfg.output_dir.join("connections.json").exists());
}

#[test]
fn the_geometry_only_goal_skips_the_profile_solves() {
    let dir = TempDir::new().unwrap();
    let cfg = small_cfg(&dir.path().join("run"));
    let manifest = run(&cfg, Goal::Angles).unwrap();
    let names: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(names, ["validate_potential", "geodesics", "junction_geometry"]);
    assert!(!cfg.output_dir.join("connections.json").exists());

    let junction = json_at(&cfg.output_dir, "junction.json");
    for a in junction["alpha"].as_array().unwrap() {
        assert!((a.as_f64().unwrap() - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-6);
    }
}

#[test]
fn the_binary_loads_overrides_and_reports_config_errors_with_exit_two() {
    let exe = env!("CARGO_BIN_EXE_tripoint");
    let dir = TempDir::new().unwrap();

    // init-config writes the default config, which loads back.
    let cfg_path = dir.path().join("cfg.toml");
    let status = std::process::Command::new(exe)
        .args(["init-config".as_ref(), cfg_path.as_os_str()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg, RunConfig::default());

    // The cheapest stage runs end to end with --out and --seed overrides.
    let out = dir.path().join("run");
    let output = std::process::Command::new(exe)
        .args(["validate-potential", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out.join("potential.json").exists());
    assert!(out.join("manifest.json").exists());
    let emitted = RunConfig::from_toml_str(&std::fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(emitted.seed, 3);
    assert_eq!(emitted.output_dir, out);

    // A config that fails validation exits with the validation code.
    let bad_path = dir.path().join("bad.toml");
    let mut bad = RunConfig::default();
    bad.eps_ladder = vec![0.1, 0.2];
    std::fs::write(&bad_path, toml::to_string(&bad).unwrap()).unwrap();
    let output = std::process::Command::new(exe)
        .args(["validate-potential", "--config"])
        .arg(&bad_path)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("strictly decreasing"), "{stderr}");
}

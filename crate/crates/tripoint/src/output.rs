//! Deterministic artifact writing for the harness.
//!
//! Every file a run produces goes through the [`Emitter`], which creates it
//! under the run directory, checksums the exact bytes written, and records
//! it in the [`RunManifest`] under the currently open stage.  All encoders
//! here are bit-deterministic: floats are printed in their shortest
//! round-trip form, JSON preserves struct field order, and raw dumps are
//! little-endian regardless of host.  Re-running the same config on the
//! same build therefore reproduces every checksum.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::solver::{DiskGrid, DomainKind, Field2D};
use crate::vec2::Vec2;

/// Errors raised while writing or reading run artifacts.
#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("dump {path} is inconsistent: {reason}")]
    BadDump { path: PathBuf, reason: String },
    #[error("no stage is open; call begin_stage before emitting files")]
    NoOpenStage,
}

fn io_err(path: &Path, source: std::io::Error) -> OutputError {
    OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Shortest decimal form of `x` that parses back to exactly `x`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Hex SHA-256 digest of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Render a CSV document: UTF-8, comma-separated, one header row, `\n` line
/// endings.  Cells are written verbatim; numeric cells should come from
/// [`fmt_f64`].
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

/// Sidecar metadata describing a raw field dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    /// Nodes per side of the square grid.
    pub n: usize,
    /// Grid spacing.
    pub h: f64,
    /// Interface width the field was computed at.
    pub eps: f64,
    /// `"disk"` or `"strip-periodic-y"`.
    pub domain: String,
    /// Component names, in plane order.
    pub components: Vec<String>,
    /// Element type of the raw file.
    pub dtype: String,
    /// Byte order of the raw file.
    pub byte_order: String,
    /// Plane-major layout: all of component 0 (row-major), then component 1.
    pub layout: String,
}

fn domain_name(kind: DomainKind) -> &'static str {
    match kind {
        DomainKind::Disk => "disk",
        DomainKind::StripPeriodicY => "strip-periodic-y",
    }
}

/// Encode a two-component field as raw little-endian f64 planes
/// (component 0 row-major, then component 1) plus its metadata sidecar.
pub fn encode_field(grid: &DiskGrid, field: &Field2D, eps: f64) -> (Vec<u8>, FieldMeta) {
    let n = grid.n();
    let mut bytes = Vec::with_capacity(2 * n * n * 8);
    for component in 0..2 {
        for row in 0..n {
            for col in 0..n {
                let v = field.get(row, col);
                let x = if component == 0 { v.x } else { v.y };
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let meta = FieldMeta {
        n,
        h: grid.h(),
        eps,
        domain: domain_name(grid.kind()).to_string(),
        components: vec!["u1".into(), "u2".into()],
        dtype: "f64".into(),
        byte_order: "little-endian".into(),
        layout: "plane-major, rows of increasing y".into(),
    };
    (bytes, meta)
}

/// Rebuild a field from the raw bytes written by [`encode_field`].
pub fn decode_field(
    grid: &DiskGrid,
    meta: &FieldMeta,
    bytes: &[u8],
    path: &Path,
) -> Result<Field2D, OutputError> {
    let n = grid.n();
    let bad = |reason: String| OutputError::BadDump {
        path: path.to_path_buf(),
        reason,
    };
    if meta.n != n {
        return Err(bad(format!("sidecar n = {} but grid n = {n}", meta.n)));
    }
    let expect = 2 * n * n * 8;
    if bytes.len() != expect {
        return Err(bad(format!(
            "raw file holds {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let mut field = Field2D::constant(grid, Vec2::ZERO);
    let plane = n * n * 8;
    for row in 0..n {
        for col in 0..n {
            let at = 8 * (row * n + col);
            let u1 = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            let u2 = f64::from_le_bytes(bytes[plane + at..plane + at + 8].try_into().unwrap());
            field.set(row, col, Vec2::new(u1, u2));
        }
    }
    Ok(field)
}

/// Render a phase-label image as a binary PGM (P5).  Rows are written top
/// edge first (largest y down to smallest), phases 0/1/2 map to gray levels
/// 60/150/240, and unlabeled nodes (outside the domain) are black.
pub fn render_pgm(n: usize, label: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    bytes.reserve(n * n);
    for row in (0..n).rev() {
        for col in 0..n {
            let gray = match label(row, col) {
                0 => 60u8,
                1 => 150,
                2 => 240,
                _ => 0,
            };
            bytes.push(gray);
        }
    }
    bytes
}

/// One artifact: run-relative path, size, and content digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// All artifacts produced by one pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub files: Vec<FileRecord>,
}

/// The run ledger: config digest, toolchain fingerprint, and every written
/// file grouped by stage, checksummed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Digest of the canonical config serialization.
    pub config_sha256: String,
    /// Package name and version that produced the run.
    pub produced_by: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// Collect every recorded checksum, ordered by run-relative path.
    pub fn checksums(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .stages
            .iter()
            .flat_map(|s| s.files.iter())
            .map(|f| (f.path.clone(), f.sha256.clone()))
            .collect();
        out.sort();
        out
    }

    /// Verify that every listed file exists under `root` with the recorded
    /// digest, and that nothing was written twice under different stages.
    pub fn verify(&self, root: &Path) -> Result<(), OutputError> {
        let mut seen = BTreeSet::new();
        for stage in &self.stages {
            for file in &stage.files {
                if !seen.insert(file.path.clone()) {
                    return Err(OutputError::BadDump {
                        path: root.join(&file.path),
                        reason: "listed in more than one stage".into(),
                    });
                }
                let full = root.join(&file.path);
                let bytes = std::fs::read(&full).map_err(|e| io_err(&full, e))?;
                if bytes.len() as u64 != file.bytes {
                    return Err(OutputError::BadDump {
                        path: full,
                        reason: format!(
                            "size {} does not match manifest ({})",
                            bytes.len(),
                            file.bytes
                        ),
                    });
                }
                let digest = sha256_hex(&bytes);
                if digest != file.sha256 {
                    return Err(OutputError::BadDump {
                        path: full,
                        reason: "checksum does not match manifest".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Writes artifacts under a run directory while building the manifest.
pub struct Emitter {
    root: PathBuf,
    manifest: RunManifest,
    open: bool,
}

impl Emitter {
    /// Create the run directory (and parents) and start an empty manifest.
    pub fn create(root: &Path, config_sha256: String) -> Result<Self, OutputError> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Emitter {
            root: root.to_path_buf(),
            manifest: RunManifest {
                config_sha256,
                produced_by: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
                stages: Vec::new(),
            },
            open: false,
        })
    }

    /// The run directory.
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Open a new stage; subsequent emissions are recorded under it.
    pub fn begin_stage(&mut self, name: &str) {
        self.manifest.stages.push(StageRecord {
            stage: name.to_string(),
            files: Vec::new(),
        });
        self.open = true;
    }

    /// Write `bytes` to `rel` under the run directory and record the file in
    /// the open stage.
    pub fn emit_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), OutputError> {
        if !self.open {
            return Err(OutputError::NoOpenStage);
        }
        let full = self.root.join(rel);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        std::fs::write(&full, bytes).map_err(|e| io_err(&full, e))?;
        let record = FileRecord {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        };
        self.manifest
            .stages
            .last_mut()
            .expect("open stage")
            .files
            .push(record);
        Ok(())
    }

    /// Serialize `value` as pretty JSON (struct field order, trailing
    /// newline) and emit it.
    pub fn emit_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), OutputError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|source| OutputError::Json {
            what: rel.to_string(),
            source,
        })?;
        text.push('\n');
        self.emit_bytes(rel, text.as_bytes())
    }

    /// Render and emit a CSV document.
    pub fn emit_csv(
        &mut self,
        rel: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), OutputError> {
        self.emit_bytes(rel, render_csv(header, rows).as_bytes())
    }

    /// Emit a raw field dump `{rel}.f64` plus its `{rel}.json` sidecar.
    pub fn emit_field(
        &mut self,
        rel: &str,
        grid: &DiskGrid,
        field: &Field2D,
        eps: f64,
    ) -> Result<(), OutputError> {
        let (bytes, meta) = encode_field(grid, field, eps);
        self.emit_bytes(&format!("{rel}.f64"), &bytes)?;
        self.emit_json(&format!("{rel}.json"), &meta)
    }

    /// Finish the run: write `manifest.json` at the run root and return the
    /// manifest.  The manifest file itself is the one artifact not listed
    /// inside itself.
    pub fn finish(self) -> Result<RunManifest, OutputError> {
        let mut text =
            serde_json::to_string_pretty(&self.manifest).map_err(|source| OutputError::Json {
                what: "manifest.json".to_string(),
                source,
            })?;
        text.push('\n');
        let full = self.root.join("manifest.json");
        std::fs::write(&full, text).map_err(|e| io_err(&full, e))?;
        Ok(self.manifest)
    }
}

/// Load a field dump pair written by [`Emitter::emit_field`]: `base.f64`
/// and `base.json` under `root`.
pub fn read_field_dump(
    root: &Path,
    base: &str,
    grid: &DiskGrid,
) -> Result<(FieldMeta, Field2D), OutputError> {
    let meta_path = root.join(format!("{base}.json"));
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: FieldMeta =
        serde_json::from_str(&meta_text).map_err(|source| OutputError::Json {
            what: meta_path.display().to_string(),
            source,
        })?;
    let raw_path = root.join(format!("{base}.f64"));
    let bytes = std::fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let field = decode_field(grid, &meta, &bytes, &raw_path)?;
    Ok((meta, field))
}

/// Tag an interface width for file names: `0.05` becomes `eps0p05`.
pub fn eps_tag(eps: f64) -> String {
    format!("eps{}", fmt_f64(eps).replace('.', "p").replace('-', "m"))
}

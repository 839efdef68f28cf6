//! File formats and run reports.
//!
//! One JSON-based structured-text family covers landmark sets, planes,
//! synthetic cases, and run reports. Documents carry a format version and
//! enforce millimeter units; unknown fields are rejected.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fit::{FitDiagnostics, PipelineOutcome};
use crate::model::{Landmark, LandmarkPair, LandmarkSet, Plane};
use crate::ranking::{DroppableUnit, Severity, UnitScore};
use crate::selection::StageStats;
use crate::synth::{DeformityCase, DeformitySpec, ValidationMetrics};

pub const FORMAT_VERSION: &str = "1";
const UNITS: &str = "mm";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported units {0:?}: all files use \"mm\"")]
    Units(String),

    #[error("unsupported format version {0:?} (expected {FORMAT_VERSION:?})")]
    Version(String),

    #[error(transparent)]
    Invalid(#[from] Error),
}

fn syntax_error(e: serde_json::Error) -> IoError {
    IoError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn check_header(format_version: &str, units: &str) -> Result<(), IoError> {
    if format_version != FORMAT_VERSION {
        return Err(IoError::Version(format_version.to_string()));
    }
    if units != UNITS {
        return Err(IoError::Units(units.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkFileDoc {
    format_version: String,
    units: String,
    unpaired: Vec<UnpairedDoc>,
    pairs: Vec<PairDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnpairedDoc {
    name: String,
    xyz: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairDoc {
    name: String,
    right_xyz: [f64; 3],
    left_xyz: [f64; 3],
}

fn set_to_doc(set: &LandmarkSet) -> LandmarkFileDoc {
    LandmarkFileDoc {
        format_version: FORMAT_VERSION.to_string(),
        units: UNITS.to_string(),
        unpaired: set
            .unpaired()
            .iter()
            .map(|l| UnpairedDoc {
                name: l.name.clone(),
                xyz: [l.position.x, l.position.y, l.position.z],
            })
            .collect(),
        pairs: set
            .pairs()
            .iter()
            .map(|p| PairDoc {
                name: p.name.clone(),
                right_xyz: [p.right.x, p.right.y, p.right.z],
                left_xyz: [p.left.x, p.left.y, p.left.z],
            })
            .collect(),
    }
}

fn doc_to_set(doc: LandmarkFileDoc) -> Result<LandmarkSet, IoError> {
    check_header(&doc.format_version, &doc.units)?;
    let unpaired = doc
        .unpaired
        .into_iter()
        .map(|u| Landmark::new(u.name, u.xyz))
        .collect();
    let pairs = doc
        .pairs
        .into_iter()
        .map(|p| LandmarkPair::new(p.name, p.right_xyz, p.left_xyz))
        .collect();
    Ok(LandmarkSet::new(unpaired, pairs)?)
}

/// Parses a landmark file, enforcing units, schema, and set invariants.
pub fn parse_landmark_set(text: &str) -> Result<LandmarkSet, IoError> {
    let doc: LandmarkFileDoc = serde_json::from_str(text).map_err(syntax_error)?;
    doc_to_set(doc)
}

/// Serializes a landmark set; floats use the shortest round-trip form.
pub fn write_landmark_set(set: &LandmarkSet) -> String {
    let mut s =
        serde_json::to_string_pretty(&set_to_doc(set)).expect("landmark doc serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneDoc {
    format_version: String,
    units: String,
    normal: [f64; 3],
    offset: f64,
}

/// 17 significant digits: enough to reproduce any f64 bit pattern exactly.
fn float17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a plane document. The stored normal and offset are already
/// canonical, and 17-significant-digit floats make the round trip bitwise.
pub fn write_plane(plane: &Plane) -> String {
    let n = plane.normal();
    format!(
        "{{\n  \"format_version\": \"{FORMAT_VERSION}\",\n  \"units\": \"{UNITS}\",\n  \"normal\": [{}, {}, {}],\n  \"offset\": {}\n}}\n",
        float17(n.x),
        float17(n.y),
        float17(n.z),
        float17(plane.offset()),
    )
}

/// Parses a plane document; the result is canonicalized.
pub fn parse_plane(text: &str) -> Result<Plane, IoError> {
    let doc: PlaneDoc = serde_json::from_str(text).map_err(syntax_error)?;
    check_header(&doc.format_version, &doc.units)?;
    let normal = nalgebra::Vector3::new(doc.normal[0], doc.normal[1], doc.normal[2]);
    Ok(Plane::new(normal, doc.offset)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDoc {
    format_version: String,
    units: String,
    subject: usize,
    spec: DeformitySpec,
    noise_seed: u64,
    noise_sd_mm: f64,
    ground_truth_normal: [f64; 3],
    ground_truth_offset: f64,
    ground_truth: LandmarkFileDoc,
    deformed: LandmarkFileDoc,
}

/// Serializes a whole synthetic case (ground truth, plane, deformed set, and
/// provenance) into one self-contained document.
pub fn write_case(case: &DeformityCase) -> String {
    let n = case.ground_truth_plane.normal();
    let doc = CaseDoc {
        format_version: FORMAT_VERSION.to_string(),
        units: UNITS.to_string(),
        subject: case.subject,
        spec: case.spec.clone(),
        noise_seed: case.noise_seed,
        noise_sd_mm: case.noise_sd_mm,
        ground_truth_normal: [n.x, n.y, n.z],
        ground_truth_offset: case.ground_truth_plane.offset(),
        ground_truth: set_to_doc(&case.ground_truth),
        deformed: set_to_doc(&case.deformed),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("case doc serializes");
    s.push('\n');
    s
}

pub fn parse_case(text: &str) -> Result<DeformityCase, IoError> {
    let doc: CaseDoc = serde_json::from_str(text).map_err(syntax_error)?;
    check_header(&doc.format_version, &doc.units)?;
    let normal = nalgebra::Vector3::new(
        doc.ground_truth_normal[0],
        doc.ground_truth_normal[1],
        doc.ground_truth_normal[2],
    );
    Ok(DeformityCase {
        subject: doc.subject,
        spec: doc.spec,
        ground_truth: doc_to_set(doc.ground_truth)?,
        ground_truth_plane: Plane::new(normal, doc.ground_truth_offset)?,
        deformed: doc_to_set(doc.deformed)?,
        noise_seed: doc.noise_seed,
        noise_sd_mm: doc.noise_sd_mm,
    })
}

/// One recorded elimination stage: the unit removed to get here, the stage's
/// distribution statistics, and its per-unit scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageReport {
    pub stage: usize,
    pub removed: Option<DroppableUnit>,
    pub stats: Option<StageStats>,
    pub tscores: Vec<UnitScore>,
}

/// Everything one pipeline run produced, serialized losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format_version: String,
    pub input_digest_sha256: String,
    pub severity: Severity,
    pub stages: Vec<StageReport>,
    pub selected_stage: usize,
    pub dropped_outliers: Vec<DroppableUnit>,
    pub plane_normal: [f64; 3],
    pub plane_offset: f64,
    pub diagnostics: FitDiagnostics,
    pub warning: Option<String>,
    pub metrics: Option<ValidationMetrics>,
}

impl RunReport {
    pub fn from_outcome(
        input_digest_sha256: String,
        outcome: &PipelineOutcome,
        metrics: Option<ValidationMetrics>,
    ) -> Self {
        let stages = outcome
            .trace
            .stage_systems
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let removed = (k > 0).then(|| outcome.trace.elimination_order[k - 1].clone());
                let tscores = outcome.trace.stage_tscores[k]
                    .as_ref()
                    .map(|t| t.scores.clone())
                    .unwrap_or_default();
                let stats = outcome
                    .selection
                    .stage_stats
                    .iter()
                    .find(|s| s.stage_index == k)
                    .copied();
                StageReport {
                    stage: k,
                    removed,
                    stats,
                    tscores,
                }
            })
            .collect();
        let n = outcome.plane.normal();
        RunReport {
            format_version: FORMAT_VERSION.to_string(),
            input_digest_sha256,
            severity: outcome.severity,
            stages,
            selected_stage: outcome.selection.selected_stage,
            dropped_outliers: outcome.selection.dropped_outliers.clone(),
            plane_normal: [n.x, n.y, n.z],
            plane_offset: outcome.plane.offset(),
            diagnostics: outcome.diagnostics,
            warning: outcome.selection.warning.clone(),
            metrics,
        }
    }
}

pub fn write_report(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<RunReport, IoError> {
    serde_json::from_str(text).map_err(syntax_error)
}

/// Hex SHA-256 of raw input bytes, recorded in reports for provenance.
pub fn digest_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(bytes) {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{run_pipeline, FitConfig};
    use crate::synth::{default_templates, generate_cases, nominal_catalog_set, Side};

    #[test]
    fn landmark_file_round_trip_and_counts() {
        let set = nominal_catalog_set();
        let text = write_landmark_set(&set);
        let parsed = parse_landmark_set(&text).unwrap();
        assert_eq!(parsed, set);
        assert_eq!(parsed.unpaired_count(), 11);
        assert_eq!(parsed.pair_count(), 13);
    }

    #[test]
    fn wrong_units_and_versions_are_rejected() {
        let set = nominal_catalog_set();
        let text = write_landmark_set(&set).replace("\"units\": \"mm\"", "\"units\": \"cm\"");
        assert!(matches!(
            parse_landmark_set(&text),
            Err(IoError::Units(u)) if u == "cm"
        ));
        let text = write_landmark_set(&set)
            .replace("\"format_version\": \"1\"", "\"format_version\": \"9\"");
        assert!(matches!(parse_landmark_set(&text), Err(IoError::Version(_))));
    }

    #[test]
    fn duplicate_name_errors_mention_the_name() {
        let text = r#"{
            "format_version": "1",
            "units": "mm",
            "unpaired": [
                {"name": "A", "xyz": [0.0, 1.0, 0.0]},
                {"name": "A", "xyz": [0.0, 2.0, 0.0]}
            ],
            "pairs": [
                {"name": "P", "right_xyz": [1.0, 0.0, 0.0], "left_xyz": [-1.0, 0.0, 0.0]}
            ]
        }"#;
        let err = parse_landmark_set(text).unwrap_err();
        assert!(err.to_string().contains("\"A\""), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let text = r#"{
            "format_version": "1",
            "units": "mm",
            "unpaired": [],
            "pairs": [],
            "extra": 1
        }"#;
        match parse_landmark_set(text) {
            Err(IoError::Syntax { line, .. }) => assert!(line > 0),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn plane_round_trip_is_bitwise() {
        use nalgebra::Vector3;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let plane = Plane::new(
                Vector3::new(
                    rng.random_range(-1.0..1.0f64),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                rng.random_range(-100.0..100.0),
            );
            let plane = match plane {
                Ok(p) => p,
                Err(_) => continue,
            };
            let parsed = parse_plane(&write_plane(&plane)).unwrap();
            assert_eq!(parsed.normal(), plane.normal());
            assert_eq!(parsed.offset(), plane.offset());
        }
    }

    #[test]
    fn plane_doc_contains_values() {
        let plane = Plane::new(nalgebra::Vector3::new(1.0, 0.0, 0.0), 0.0).unwrap();
        let text = write_plane(&plane);
        assert!(text.contains("\"normal\""));
        assert!(text.contains("1.0000000000000000e0"));
        let parsed = parse_plane(&text).unwrap();
        assert_eq!(parsed, plane);
    }

    #[test]
    fn case_round_trip() {
        let cases = generate_cases(1, &default_templates(Side::Right), 3.0, 5).unwrap();
        for case in &cases {
            let text = write_case(case);
            let parsed = parse_case(&text).unwrap();
            assert_eq!(&parsed, case);
        }
    }

    #[test]
    fn report_round_trip() {
        let set = nominal_catalog_set();
        let outcome = run_pipeline(&set, &FitConfig::default(), 8).unwrap();
        let report = RunReport::from_outcome(digest_hex(b"input"), &outcome, None);
        let text = write_report(&report);
        let parsed = parse_report(&text).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(
            digest_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}

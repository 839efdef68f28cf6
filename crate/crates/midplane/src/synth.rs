//! Synthetic deformity benchmark: symmetric base subjects, parametrized
//! deformity morphs, seeded fluctuating-asymmetry noise, and clinical
//! outcome scoring against the constructed ground truth.
//!
//! Ground truth is built, not measured: a catalog-shaped subject is jittered
//! into plausible ranges and mirror-symmetrized about a known plane, so the
//! premorbid midsagittal plane is exact by construction. Deformities are
//! deterministic displacement fields over named landmark subsets standing in
//! for manual free-form morphs.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::Error;
use crate::fit::{run_pipeline, FitConfig};
use crate::model::{catalog, Landmark, LandmarkPair, LandmarkSet, Plane};
use crate::par;
use crate::ranking::{DroppableUnit, Severity};

/// Clinical acceptability thresholds, in degrees and millimeters.
pub const THETA_MAX_DEGREES: f64 = 2.0;
pub const DIST_N_MAX_MM: f64 = 1.0;
pub const DIST_U1_MAX_MM: f64 = 1.0;
pub const DIST_PG_MAX_MM: f64 = 2.0;

/// The canonical frame used by the generator: x is lateral (right positive),
/// y anterior, z superior; the midsagittal plane is x = 0.
pub fn canonical_plane() -> Plane {
    Plane::new(Vector3::new(1.0, 0.0, 0.0), 0.0).expect("unit axis")
}

/// Nominal catalog geometry in the canonical frame, in mm. Synthetic but
/// anatomically plausible; only used as a seed shape for subject generation.
pub fn nominal_catalog_set() -> LandmarkSet {
    let unpaired: [(&str, [f64; 3]); 11] = [
        ("S", [0.0, 0.0, 0.0]),
        ("N", [0.0, 72.0, 28.0]),
        ("Ba", [0.0, -12.0, -38.0]),
        ("FMp", [0.0, -42.0, -32.0]),
        ("ANS", [0.0, 82.0, -22.0]),
        ("PNS", [0.0, 36.0, -28.0]),
        ("U1", [0.0, 88.0, -58.0]),
        ("L1", [0.0, 86.0, -70.0]),
        ("Pg", [0.0, 80.0, -94.0]),
        ("Gn", [0.0, 76.0, -102.0]),
        ("Me", [0.0, 70.0, -108.0]),
    ];
    let paired: [(&str, [f64; 3]); 13] = [
        ("Or", [34.0, 64.0, 6.0]),
        ("Fz", [49.0, 46.0, 22.0]),
        ("J", [46.0, 42.0, -24.0]),
        ("SOF", [16.0, 42.0, 10.0]),
        ("Po", [56.0, -16.0, -14.0]),
        ("ZMS", [41.0, 52.0, -34.0]),
        ("U6", [26.0, 46.0, -58.0]),
        ("L6", [27.0, 44.0, -68.0]),
        ("Co", [54.0, -12.0, -18.0]),
        ("SIG", [48.0, 2.0, -32.0]),
        ("Cr", [45.0, 14.0, -30.0]),
        ("Gos", [51.0, -16.0, -62.0]),
        ("Goi", [48.0, -12.0, -76.0]),
    ];
    debug_assert_eq!(unpaired.len(), catalog::UNPAIRED.len());
    debug_assert_eq!(paired.len(), catalog::PAIRED.len());

    LandmarkSet::new(
        unpaired
            .iter()
            .map(|(n, p)| Landmark::new(*n, *p))
            .collect(),
        paired
            .iter()
            .map(|(n, p)| LandmarkPair::new(*n, *p, [-p[0], p[1], p[2]]))
            .collect(),
    )
    .expect("nominal geometry is valid")
}

/// Mirror-symmetrizes a set about `plane`: every pair's left member becomes
/// the reflection of its right member, every unpaired landmark is projected
/// onto the plane. The result has an identically zero asymmetry vector.
pub fn symmetrize(set: &LandmarkSet, plane: &Plane) -> LandmarkSet {
    LandmarkSet::from_parts_unchecked(
        set.unpaired()
            .iter()
            .map(|l| Landmark {
                name: l.name.clone(),
                position: plane.project(&l.position),
            })
            .collect(),
        set.pairs()
            .iter()
            .map(|p| LandmarkPair {
                name: p.name.clone(),
                right: p.right,
                left: plane.reflect(&p.right),
            })
            .collect(),
    )
}

/// Deformity archetypes available to the morph generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeformityKind {
    HorizontalCondylarHyperplasia,
    VerticalCondylarHyperplasia,
    HemifacialType1,
    HemifacialType2,
}

impl DeformityKind {
    pub const ALL: [DeformityKind; 4] = [
        DeformityKind::HorizontalCondylarHyperplasia,
        DeformityKind::VerticalCondylarHyperplasia,
        DeformityKind::HemifacialType1,
        DeformityKind::HemifacialType2,
    ];

    /// Default morph magnitude in mm, tuned so severity classification lands
    /// in the intended band: mild/moderate for the condylar and type-1
    /// morphs, severe for type 2.
    pub fn default_magnitude_mm(self) -> f64 {
        match self {
            DeformityKind::HemifacialType2 => 12.0,
            _ => 6.0,
        }
    }
}

impl fmt::Display for DeformityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeformityKind::HorizontalCondylarHyperplasia => "horizontal-condylar-hyperplasia",
            DeformityKind::VerticalCondylarHyperplasia => "vertical-condylar-hyperplasia",
            DeformityKind::HemifacialType1 => "hemifacial-type1",
            DeformityKind::HemifacialType2 => "hemifacial-type2",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Right,
    Left,
}

impl Side {
    fn lateral_sign(self) -> f64 {
        match self {
            Side::Right => 1.0,
            Side::Left => -1.0,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Right => write!(f, "right"),
            Side::Left => write!(f, "left"),
        }
    }
}

/// A parametrized deformity morph: which landmarks move, on which side, and
/// how far at the region core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformitySpec {
    pub kind: DeformityKind,
    pub side: Side,
    pub magnitude_mm: f64,
    /// Affected landmark names: pair names move on `side`, unpaired names
    /// drift off the midline.
    pub affected: Vec<String>,
}

impl DeformitySpec {
    /// The default affected region per kind: the condylar kinds deform the
    /// mandibular ramus and lower molar plus the chin midline; hemifacial
    /// type 1 extends into the ear and midface, type 2 further into the
    /// orbit and zygoma.
    pub fn default_for(kind: DeformityKind, side: Side) -> Self {
        let mut affected: Vec<&str> = vec!["Co", "SIG", "Cr", "Gos", "Goi", "L6"];
        if matches!(
            kind,
            DeformityKind::HemifacialType1 | DeformityKind::HemifacialType2
        ) {
            affected.extend(["Po", "ZMS", "U6"]);
        }
        if kind == DeformityKind::HemifacialType2 {
            affected.extend(["Or", "J", "Fz"]);
        }
        affected.extend(["L1", "Pg", "Gn", "Me"]);
        DeformitySpec {
            kind,
            side,
            magnitude_mm: kind.default_magnitude_mm(),
            affected: affected.into_iter().map(String::from).collect(),
        }
    }
}

/// The four default deformity templates on one side.
pub fn default_templates(side: Side) -> Vec<DeformitySpec> {
    DeformityKind::ALL
        .iter()
        .map(|&k| DeformitySpec::default_for(k, side))
        .collect()
}

/// Displacement fraction of the core magnitude; 1.0 at the region core,
/// tapering toward the region boundary.
fn taper(name: &str) -> f64 {
    match name {
        "Co" | "SIG" | "Cr" => 1.0,
        "Gos" | "Goi" => 0.85,
        "Po" => 0.7,
        "L6" => 0.6,
        "ZMS" => 0.6,
        "Pg" | "Gn" => 0.6,
        "J" => 0.55,
        "Me" => 0.55,
        "U6" => 0.5,
        "Or" => 0.5,
        "L1" => 0.5,
        "Fz" => 0.4,
        _ => 1.0,
    }
}

/// Displacement direction for affected side landmarks, in the canonical
/// frame. Hyperplasia grows the side along an anatomical axis; hemifacial
/// hypoplasia pulls the side medially and slightly upward.
fn side_axis(kind: DeformityKind, side: Side) -> Vector3<f64> {
    match kind {
        DeformityKind::HorizontalCondylarHyperplasia => Vector3::new(0.0, 1.0, 0.0),
        DeformityKind::VerticalCondylarHyperplasia => Vector3::new(0.0, 0.0, -1.0),
        DeformityKind::HemifacialType1 | DeformityKind::HemifacialType2 => {
            Vector3::new(-side.lateral_sign(), 0.0, 0.4).normalize()
        }
    }
}

/// Lateral drift direction for affected midline landmarks: condylar
/// overgrowth pushes the chin away from the affected side, hemifacial
/// undergrowth pulls it toward the affected side.
fn midline_axis(kind: DeformityKind, side: Side) -> Vector3<f64> {
    let sign = match kind {
        DeformityKind::HorizontalCondylarHyperplasia
        | DeformityKind::VerticalCondylarHyperplasia => -side.lateral_sign(),
        DeformityKind::HemifacialType1 | DeformityKind::HemifacialType2 => side.lateral_sign(),
    };
    Vector3::new(sign, 0.0, 0.0)
}

/// Applies the deformity morph in the canonical frame: each affected
/// landmark moves by `magnitude * taper` along its kind-specific axis;
/// everything else is untouched.
pub fn apply_deformity(base: &LandmarkSet, spec: &DeformitySpec) -> Result<LandmarkSet, Error> {
    let side_dir = side_axis(spec.kind, spec.side);
    let mid_dir = midline_axis(spec.kind, spec.side);

    let mut unpaired = base.unpaired().to_vec();
    let mut pairs = base.pairs().to_vec();
    for name in &spec.affected {
        if let Some(l) = unpaired.iter_mut().find(|l| &l.name == name) {
            l.position += spec.magnitude_mm * taper(name) * mid_dir;
        } else if let Some(p) = pairs.iter_mut().find(|p| &p.name == name) {
            let delta = spec.magnitude_mm * taper(name) * side_dir;
            match spec.side {
                Side::Right => p.right += delta,
                Side::Left => p.left += delta,
            }
        } else {
            return Err(Error::MissingLandmark(name.clone()));
        }
    }
    let morphed = LandmarkSet::from_parts_unchecked(unpaired, pairs);
    morphed.validate()?;
    Ok(morphed)
}

/// Adds seeded i.i.d. zero-mean Gaussian offsets (per coordinate, given
/// standard deviation) to every listed landmark; landmarks not listed are
/// returned bit-for-bit unchanged. Both members of a listed pair receive
/// independent offsets.
pub fn add_fluctuating_noise(
    set: &LandmarkSet,
    noisy_names: &[String],
    sd_mm: f64,
    seed: u64,
) -> LandmarkSet {
    assert!(sd_mm >= 0.0, "noise standard deviation must be non-negative");
    if sd_mm == 0.0 {
        return set.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd_mm).expect("validated standard deviation");
    let draw = |rng: &mut ChaCha8Rng| {
        Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
    };
    let is_noisy = |name: &str| noisy_names.iter().any(|n| n == name);

    LandmarkSet::from_parts_unchecked(
        set.unpaired()
            .iter()
            .map(|l| {
                let mut l = l.clone();
                if is_noisy(&l.name) {
                    l.position += draw(&mut rng);
                }
                l
            })
            .collect(),
        set.pairs()
            .iter()
            .map(|p| {
                let mut p = p.clone();
                if is_noisy(&p.name) {
                    p.right += draw(&mut rng);
                    p.left += draw(&mut rng);
                }
                p
            })
            .collect(),
    )
}

/// A complete synthetic case: constructed ground truth, the morphed and
/// noised subject, and the provenance needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformityCase {
    pub subject: usize,
    pub spec: DeformitySpec,
    pub ground_truth: LandmarkSet,
    pub ground_truth_plane: Plane,
    pub deformed: LandmarkSet,
    pub noise_seed: u64,
    pub noise_sd_mm: f64,
}

impl DeformityCase {
    /// Clinical outcome variables of a fitted plane against this case's
    /// ground truth.
    pub fn outcome_metrics(&self, fitted: &Plane) -> Result<ValidationMetrics, Error> {
        outcome_metrics(fitted, &self.ground_truth, &self.ground_truth_plane)
    }
}

/// The angular and three linear outcome variables with the clinical
/// pass/fail verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub theta_degrees: f64,
    pub dist_n_mm: f64,
    pub dist_u1_mm: f64,
    pub dist_pg_mm: f64,
    pub pass: bool,
}

/// Scores a fitted plane: the angle to the ground-truth plane, and the
/// distances from the symmetric model's N, U1 and Pg landmarks to the
/// fitted plane.
pub fn outcome_metrics(
    fitted: &Plane,
    reference: &LandmarkSet,
    ground_truth: &Plane,
) -> Result<ValidationMetrics, Error> {
    let point = |name: &str| -> Result<Vector3<f64>, Error> {
        reference
            .find_unpaired(name)
            .map(|l| l.position)
            .ok_or_else(|| Error::MissingLandmark(name.to_string()))
    };
    let theta_degrees = ground_truth.angle_degrees_to(fitted);
    let dist_n_mm = fitted.distance(&point("N")?);
    let dist_u1_mm = fitted.distance(&point("U1")?);
    let dist_pg_mm = fitted.distance(&point("Pg")?);
    let pass = theta_degrees < THETA_MAX_DEGREES
        && dist_n_mm < DIST_N_MAX_MM
        && dist_u1_mm < DIST_U1_MAX_MM
        && dist_pg_mm < DIST_PG_MAX_MM;
    Ok(ValidationMetrics {
        theta_degrees,
        dist_n_mm,
        dist_u1_mm,
        dist_pg_mm,
        pass,
    })
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 {
            break Unit::new_normalize(v);
        }
    };
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Rotation3::from_axis_angle(&axis, angle)
}

/// Half-width of the uniform jitter box around nominal positions, in mm.
const JITTER_MM: f64 = 15.0;
/// Smallest lateral half-width a jittered pair may end up with, in mm.
const MIN_PAIR_HALF_WIDTH_MM: f64 = 5.0;

fn jittered_catalog(rng: &mut ChaCha8Rng) -> LandmarkSet {
    let nominal = nominal_catalog_set();
    let mut j = |c: f64| c + rng.random_range(-JITTER_MM..JITTER_MM);
    LandmarkSet::from_parts_unchecked(
        nominal
            .unpaired()
            .iter()
            .map(|l| Landmark {
                name: l.name.clone(),
                position: Vector3::new(
                    j(l.position.x),
                    j(l.position.y),
                    j(l.position.z),
                ),
            })
            .collect(),
        nominal
            .pairs()
            .iter()
            .map(|p| {
                let right = Vector3::new(
                    j(p.right.x).max(MIN_PAIR_HALF_WIDTH_MM),
                    j(p.right.y),
                    j(p.right.z),
                );
                LandmarkPair {
                    name: p.name.clone(),
                    right,
                    left: Vector3::new(-right.x, right.y, right.z),
                }
            })
            .collect(),
    )
}

/// A random symmetric subject: the jittered catalog symmetrized about the
/// canonical plane and moved by a random rigid motion. Returns the set and
/// its ground-truth plane.
pub fn random_symmetric_subject(seed: u64, stream: u64) -> (LandmarkSet, Plane) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sym = symmetrize(&jittered_catalog(&mut rng), &canonical_plane());
    let rot = random_rotation(&mut rng);
    let t = Vector3::new(
        rng.random_range(-40.0..40.0),
        rng.random_range(-40.0..40.0),
        rng.random_range(-40.0..40.0),
    );
    (
        sym.transformed(&rot, &t),
        canonical_plane().transformed(&rot, &t),
    )
}

/// A synthetic mirror-symmetric set with `m` unpaired and `n` paired
/// landmarks in general position. Useful for stress tests and benchmarks on
/// systems larger than the catalog.
pub fn synthetic_symmetric_set(m: usize, n: usize, seed: u64) -> LandmarkSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unpaired = (0..m)
        .map(|i| {
            Landmark::new(
                format!("U{i}"),
                [
                    0.0,
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                ],
            )
        })
        .collect();
    let pairs = (0..n)
        .map(|i| {
            let x = rng.random_range(10.0..70.0);
            let y = rng.random_range(-100.0..100.0);
            let z = rng.random_range(-100.0..100.0);
            LandmarkPair::new(format!("P{i}"), [x, y, z], [-x, y, z])
        })
        .collect();
    LandmarkSet::new(unpaired, pairs).expect("generated set is valid")
}

/// Generates `n_subjects` random symmetric subjects and one deformity case
/// per template for each, all derived deterministically from `seed`.
///
/// The morph and noise are applied in the canonical frame; the finished
/// ground truth and deformed sets share one random rigid motion per subject.
pub fn generate_cases(
    n_subjects: usize,
    templates: &[DeformitySpec],
    noise_sd_mm: f64,
    seed: u64,
) -> Result<Vec<DeformityCase>, Error> {
    let mut cases = Vec::with_capacity(n_subjects * templates.len());
    for subject in 0..n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(subject as u64 + 1);
        let sym = symmetrize(&jittered_catalog(&mut rng), &canonical_plane());
        let rot = random_rotation(&mut rng);
        let t = Vector3::new(
            rng.random_range(-40.0..40.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(-40.0..40.0),
        );
        let ground_truth = sym.transformed(&rot, &t);
        let ground_truth_plane = canonical_plane().transformed(&rot, &t);

        for (k, template) in templates.iter().enumerate() {
            let morphed = apply_deformity(&sym, template)?;
            let noisy_names: Vec<String> = sym
                .names()
                .filter(|n| !template.affected.iter().any(|a| a == n))
                .map(String::from)
                .collect();
            let noise_seed = mix_seed(seed, subject as u64, k as u64);
            let noisy = add_fluctuating_noise(&morphed, &noisy_names, noise_sd_mm, noise_seed);
            let deformed = noisy.transformed(&rot, &t);
            deformed.validate()?;
            cases.push(DeformityCase {
                subject,
                spec: template.clone(),
                ground_truth: ground_truth.clone(),
                ground_truth_plane,
                deformed,
                noise_seed,
                noise_sd_mm,
            });
        }
    }
    Ok(cases)
}

/// One benchmark case's outcome. Failures are recorded, not propagated, so a
/// bad case cannot abort a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub subject: usize,
    pub kind: DeformityKind,
    pub side: Side,
    pub magnitude_mm: f64,
    pub severity: Option<Severity>,
    pub selected_stage: Option<usize>,
    pub dropped_outliers: Vec<DroppableUnit>,
    pub warning: Option<String>,
    pub metrics: Option<ValidationMetrics>,
    pub error: Option<String>,
}

/// Runs the full pipeline on one case and scores it.
pub fn evaluate_case(case: &DeformityCase, config: &FitConfig, min_points: usize) -> BenchmarkRow {
    let mut row = BenchmarkRow {
        subject: case.subject,
        kind: case.spec.kind,
        side: case.spec.side,
        magnitude_mm: case.spec.magnitude_mm,
        severity: None,
        selected_stage: None,
        dropped_outliers: Vec::new(),
        warning: None,
        metrics: None,
        error: None,
    };
    match run_pipeline(&case.deformed, config, min_points) {
        Ok(out) => {
            row.severity = Some(out.severity);
            row.selected_stage = Some(out.selection.selected_stage);
            row.dropped_outliers = out.selection.dropped_outliers.clone();
            row.warning = out.selection.warning.clone();
            match case.outcome_metrics(&out.plane) {
                Ok(m) => row.metrics = Some(m),
                Err(e) => row.error = Some(e.to_string()),
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// The benchmark report: one row per (subject, deformity kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub subjects: usize,
    pub noise_sd_mm: f64,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn all_pass(&self) -> bool {
        !self.rows.is_empty()
            && self
                .rows
                .iter()
                .all(|r| r.metrics.map(|m| m.pass).unwrap_or(false))
    }
}

/// Generates and evaluates the full benchmark. Case evaluation is
/// independent per case and runs data-parallel when the `parallel` feature
/// is on; row order is deterministic either way.
pub fn run_benchmark(
    n_subjects: usize,
    templates: &[DeformitySpec],
    noise_sd_mm: f64,
    seed: u64,
    config: &FitConfig,
    min_points: usize,
) -> Result<BenchmarkReport, Error> {
    let cases = generate_cases(n_subjects, templates, noise_sd_mm, seed)?;
    let rows = par::map_collect(&cases, |case| evaluate_case(case, config, min_points));
    Ok(BenchmarkReport {
        subjects: n_subjects,
        noise_sd_mm,
        seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::{classify_severity, ratio_vector};
    use approx::assert_relative_eq;

    #[test]
    fn nominal_catalog_is_symmetric_and_complete() {
        let set = nominal_catalog_set();
        assert_eq!(set.unpaired_count(), 11);
        assert_eq!(set.pair_count(), 13);
        let rv = ratio_vector(&set).unwrap();
        assert!(rv.entries().iter().all(|&h| h == 0.0));
        assert_eq!(classify_severity(&set).unwrap(), Severity::Normal);
    }

    #[test]
    fn symmetrize_is_idempotent_and_zeroes_asymmetry() {
        let plane = canonical_plane();
        let noisy = nominal_catalog_set().map_positions(|p| {
            // deterministic lopsided warp
            p + Vector3::new(0.3 * (p.y * 0.01).sin(), 0.2, -0.1)
        });
        let sym = symmetrize(&noisy, &plane);
        let rv = ratio_vector(&sym).unwrap();
        assert!(rv.entries().iter().all(|&h| h < 1e-12));

        let again = symmetrize(&sym, &plane);
        for (a, b) in sym.unpaired().iter().zip(again.unpaired()) {
            assert!((a.position - b.position).norm() < 1e-12);
        }
        for (a, b) in sym.pairs().iter().zip(again.pairs()) {
            assert!((a.right - b.right).norm() < 1e-12);
            assert!((a.left - b.left).norm() < 1e-12);
        }

        // Off-plane unpaired landmarks land on the plane.
        let off = nominal_catalog_set().map_positions(|p| p + Vector3::new(0.5, 0.0, 0.0));
        let fixed = symmetrize(&off, &plane);
        for l in fixed.unpaired() {
            assert!(plane.distance(&l.position) < 1e-12);
        }
    }

    #[test]
    fn zero_magnitude_morph_is_identity() {
        let base = nominal_catalog_set();
        let mut spec =
            DeformitySpec::default_for(DeformityKind::HorizontalCondylarHyperplasia, Side::Right);
        spec.magnitude_mm = 0.0;
        let morphed = apply_deformity(&base, &spec).unwrap();
        assert_eq!(base, morphed);
    }

    #[test]
    fn core_landmark_moves_exactly_magnitude() {
        let base = nominal_catalog_set();
        for kind in DeformityKind::ALL {
            let spec = DeformitySpec::default_for(kind, Side::Right);
            let morphed = apply_deformity(&base, &spec).unwrap();
            let before = base.find_pair("Co").unwrap().right;
            let after = morphed.find_pair("Co").unwrap().right;
            assert_relative_eq!(
                (after - before).norm(),
                spec.magnitude_mm,
                epsilon = 1e-12
            );
            // Left member untouched for a right-side morph.
            assert_eq!(
                base.find_pair("Co").unwrap().left,
                morphed.find_pair("Co").unwrap().left
            );
            // Unaffected landmarks are untouched.
            assert_eq!(
                base.find_pair("SOF").unwrap().right,
                morphed.find_pair("SOF").unwrap().right
            );
        }
    }

    #[test]
    fn missing_affected_name_errors() {
        let base = nominal_catalog_set();
        let mut spec =
            DeformitySpec::default_for(DeformityKind::HorizontalCondylarHyperplasia, Side::Right);
        spec.affected.push("Nope".into());
        assert!(matches!(
            apply_deformity(&base, &spec),
            Err(Error::MissingLandmark(n)) if n == "Nope"
        ));
    }

    #[test]
    fn noise_is_deterministic_and_confined() {
        let set = nominal_catalog_set();
        let noisy_names: Vec<String> = vec!["N".into(), "Co".into()];
        let a = add_fluctuating_noise(&set, &noisy_names, 3.0, 99);
        let b = add_fluctuating_noise(&set, &noisy_names, 3.0, 99);
        assert_eq!(a, b);

        // Listed landmarks move, everything else is bitwise unchanged.
        assert_ne!(a.find_unpaired("N").unwrap().position, set.find_unpaired("N").unwrap().position);
        assert_ne!(a.find_pair("Co").unwrap().right, set.find_pair("Co").unwrap().right);
        assert_ne!(a.find_pair("Co").unwrap().left, set.find_pair("Co").unwrap().left);
        for l in set.unpaired() {
            if l.name != "N" {
                assert_eq!(a.find_unpaired(&l.name).unwrap().position, l.position);
            }
        }
        for p in set.pairs() {
            if p.name != "Co" {
                assert_eq!(a.find_pair(&p.name).unwrap().right, p.right);
                assert_eq!(a.find_pair(&p.name).unwrap().left, p.left);
            }
        }

        let zero = add_fluctuating_noise(&set, &noisy_names, 0.0, 99);
        assert_eq!(zero, set);
    }

    #[test]
    fn noise_sample_standard_deviation() {
        // ~10^4 coordinate samples across a large synthetic set.
        let set = synthetic_symmetric_set(0, 1700, 7);
        let names: Vec<String> = set.names().map(String::from).collect();
        let noisy = add_fluctuating_noise(&set, &names, 3.0, 12345);
        let mut deltas: Vec<f64> = Vec::new();
        for (a, b) in set.pairs().iter().zip(noisy.pairs()) {
            for k in 0..3 {
                deltas.push(b.right[k] - a.right[k]);
                deltas.push(b.left[k] - a.left[k]);
            }
        }
        assert!(deltas.len() >= 10_000);
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
            / (deltas.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((2.9..=3.1).contains(&sd), "sample sd {sd}");
    }

    #[test]
    fn outcome_metrics_examples() {
        let set = nominal_catalog_set();
        let g = canonical_plane();
        let exact = outcome_metrics(&g, &set, &g).unwrap();
        assert_eq!(exact.theta_degrees, 0.0);
        assert_eq!(exact.dist_n_mm, 0.0);
        assert!(exact.pass);

        // Paper-magnitude outcomes pass, a 2.5 degree angle fails.
        assert!(0.13 < THETA_MAX_DEGREES && 0.18 < DIST_N_MAX_MM && 0.36 < DIST_U1_MAX_MM && 0.4 < DIST_PG_MAX_MM);
        let tilted = Plane::new(Vector3::new(1.0, 0.0, 2.5f64.to_radians().tan()), 0.0).unwrap();
        let m = outcome_metrics(&tilted, &set, &g).unwrap();
        assert!(m.theta_degrees > 2.0);
        assert!(!m.pass);

        // Missing landmark is an error.
        let small = synthetic_symmetric_set(1, 2, 3);
        assert!(matches!(
            outcome_metrics(&g, &small, &g),
            Err(Error::MissingLandmark(n)) if n == "N"
        ));
    }

    #[test]
    fn case_generation_is_deterministic() {
        let templates = default_templates(Side::Right);
        let a = generate_cases(2, &templates, 3.0, 11).unwrap();
        let b = generate_cases(2, &templates, 3.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        for case in &a {
            let rv = ratio_vector(&case.ground_truth).unwrap();
            assert!(rv.entries().iter().all(|&h| h < 1e-9));
        }
    }
}

//! Landmark data model, plane representation, and elementary 3D geometry.
//!
//! All coordinates are in millimeters. A [`LandmarkSet`] partitions named
//! points into unpaired (midline) landmarks and left/right pairs; a [`Plane`]
//! is stored as a unit normal plus a signed offset, so the plane is the set
//! `{x : normal . x + offset = 0}`.

use nalgebra::{Rotation3, Vector3};

use crate::error::{Error, ValidationErrors, Violation};

/// Minimum separation between any two points of a set, in mm.
///
/// Guards the log-ratio asymmetry measure against zero distances. Far below
/// any realistic digitization error.
pub const COINCIDENCE_TOLERANCE_MM: f64 = 1e-9;

/// A normal component smaller than this is treated as zero by the canonical
/// sign rule.
pub const NORMAL_SIGN_TOLERANCE: f64 = 1e-9;

/// Unit-norm slack accepted without renormalizing a plane normal.
const UNIT_NORM_TOLERANCE: f64 = 1e-12;

/// A named 3D point.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub name: String,
    pub position: Vector3<f64>,
}

impl Landmark {
    pub fn new(name: impl Into<String>, position: [f64; 3]) -> Self {
        Landmark {
            name: name.into(),
            position: Vector3::new(position[0], position[1], position[2]),
        }
    }
}

/// A left/right landmark pair sharing one name.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkPair {
    pub name: String,
    pub right: Vector3<f64>,
    pub left: Vector3<f64>,
}

impl LandmarkPair {
    pub fn new(name: impl Into<String>, right: [f64; 3], left: [f64; 3]) -> Self {
        LandmarkPair {
            name: name.into(),
            right: Vector3::new(right[0], right[1], right[2]),
            left: Vector3::new(left[0], left[1], left[2]),
        }
    }

    pub fn midpoint(&self) -> Vector3<f64> {
        (self.right + self.left) / 2.0
    }

    /// Direction of the segment joining the right member to the left member.
    pub fn direction(&self) -> Vector3<f64> {
        self.right - self.left
    }
}

/// A validated collection of unpaired landmarks and left/right pairs.
///
/// Invariants enforced at construction: names are unique, every coordinate is
/// finite, no two points coincide within [`COINCIDENCE_TOLERANCE_MM`], and at
/// least one pair is present.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    unpaired: Vec<Landmark>,
    pairs: Vec<LandmarkPair>,
}

impl LandmarkSet {
    /// Validates the raw parts and builds a set, reporting every violation on
    /// failure.
    pub fn new(unpaired: Vec<Landmark>, pairs: Vec<LandmarkPair>) -> Result<Self, Error> {
        let violations = validate_parts(&unpaired, &pairs);
        if violations.is_empty() {
            Ok(LandmarkSet { unpaired, pairs })
        } else {
            Err(Error::InvalidSet(ValidationErrors(violations)))
        }
    }

    /// Builds a set without re-validating. For internal transforms that
    /// preserve the invariants.
    pub(crate) fn from_parts_unchecked(unpaired: Vec<Landmark>, pairs: Vec<LandmarkPair>) -> Self {
        LandmarkSet { unpaired, pairs }
    }

    pub fn unpaired(&self) -> &[Landmark] {
        &self.unpaired
    }

    pub fn pairs(&self) -> &[LandmarkPair] {
        &self.pairs
    }

    /// Number of unpaired landmarks (M).
    pub fn unpaired_count(&self) -> usize {
        self.unpaired.len()
    }

    /// Number of pairs (N).
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Total point count; a pair counts as two points.
    pub fn point_count(&self) -> usize {
        self.unpaired.len() + 2 * self.pairs.len()
    }

    /// All names in set order: unpaired first, then pair names.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.unpaired
            .iter()
            .map(|l| l.name.as_str())
            .chain(self.pairs.iter().map(|p| p.name.as_str()))
    }

    pub fn find_unpaired(&self, name: &str) -> Option<&Landmark> {
        self.unpaired.iter().find(|l| l.name == name)
    }

    pub fn find_pair(&self, name: &str) -> Option<&LandmarkPair> {
        self.pairs.iter().find(|p| p.name == name)
    }

    /// Re-checks all invariants; useful after transforms that could in
    /// principle collapse points.
    pub fn validate(&self) -> Result<(), Error> {
        let violations = validate_parts(&self.unpaired, &self.pairs);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSet(ValidationErrors(violations)))
        }
    }

    /// Applies `f` to every point position, keeping names and pairing.
    pub fn map_positions(&self, mut f: impl FnMut(&Vector3<f64>) -> Vector3<f64>) -> LandmarkSet {
        LandmarkSet {
            unpaired: self
                .unpaired
                .iter()
                .map(|l| Landmark {
                    name: l.name.clone(),
                    position: f(&l.position),
                })
                .collect(),
            pairs: self
                .pairs
                .iter()
                .map(|p| LandmarkPair {
                    name: p.name.clone(),
                    right: f(&p.right),
                    left: f(&p.left),
                })
                .collect(),
        }
    }

    /// Rigidly transforms every point by `x -> rot * x + translation`.
    pub fn transformed(&self, rot: &Rotation3<f64>, translation: &Vector3<f64>) -> LandmarkSet {
        self.map_positions(|p| rot * p + translation)
    }

    /// Swaps the right and left member of every pair.
    pub fn with_sides_swapped(&self) -> LandmarkSet {
        LandmarkSet {
            unpaired: self.unpaired.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|p| LandmarkPair {
                    name: p.name.clone(),
                    right: p.left,
                    left: p.right,
                })
                .collect(),
        }
    }
}

fn validate_parts(unpaired: &[Landmark], pairs: &[LandmarkPair]) -> Vec<Violation> {
    let mut violations = Vec::new();

    if pairs.is_empty() {
        violations.push(Violation::NoPairs);
    }

    let mut seen: Vec<&str> = Vec::new();
    for name in unpaired
        .iter()
        .map(|l| l.name.as_str())
        .chain(pairs.iter().map(|p| p.name.as_str()))
    {
        if seen.contains(&name) {
            violations.push(Violation::DuplicateName(name.to_string()));
        } else {
            seen.push(name);
        }
    }

    // Flatten to labeled points for the finiteness and coincidence checks.
    let mut points: Vec<(String, Vector3<f64>)> = Vec::with_capacity(unpaired.len() + 2 * pairs.len());
    for l in unpaired {
        points.push((l.name.clone(), l.position));
    }
    for p in pairs {
        points.push((format!("{} (right)", p.name), p.right));
        points.push((format!("{} (left)", p.name), p.left));
    }

    for (name, pos) in &points {
        if !pos.iter().all(|c| c.is_finite()) {
            violations.push(Violation::NonFiniteCoordinate(name.clone()));
        }
    }

    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if (points[i].1 - points[j].1).norm() < COINCIDENCE_TOLERANCE_MM {
                violations.push(Violation::Coincident(
                    points[i].0.clone(),
                    points[j].0.clone(),
                ));
            }
        }
    }

    violations
}

/// An oriented plane `{x : normal . x + offset = 0}` with unit normal.
///
/// The stored normal follows a canonical sign rule: its first component with
/// magnitude above [`NORMAL_SIGN_TOLERANCE`] is positive. This makes planes
/// directly comparable even though the underlying geometry only determines
/// the normal up to sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vector3<f64>,
    offset: f64,
}

impl Plane {
    /// Canonicalizes the raw `(normal, offset)` description: renormalizes the
    /// normal if needed and fixes the sign of both fields together.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self, Error> {
        if !normal.iter().all(|c| c.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("plane parameters"));
        }
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(Error::ZeroNormal);
        }
        // Inputs already unit to within the invariant tolerance are kept
        // bit-for-bit, so canonicalization is idempotent.
        let (mut n, mut d) = if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            (normal, offset)
        } else {
            (normal / norm, offset / norm)
        };
        if let Some(c) = n.iter().copied().find(|c| c.abs() > NORMAL_SIGN_TOLERANCE) {
            if c < 0.0 {
                n = -n;
                d = -d;
            }
        }
        Ok(Plane { normal: n, offset: d })
    }

    /// The plane through `point` with the given normal direction.
    pub fn through_point(normal: Vector3<f64>, point: &Vector3<f64>) -> Result<Self, Error> {
        let norm = normal.norm();
        if norm < 1e-12 {
            return Err(Error::ZeroNormal);
        }
        let unit = normal / norm;
        Plane::new(unit, -unit.dot(point))
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance `p . normal + offset`.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Absolute point-to-plane distance in mm.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Angle between two planes in degrees, in [0, 90]. Sign of either
    /// normal does not matter. Computed through atan2 so angles far below a
    /// microdegree are still resolved.
    pub fn angle_degrees_to(&self, other: &Plane) -> f64 {
        let cross = self.normal.cross(&other.normal).norm();
        let dot = self.normal.dot(&other.normal).abs();
        cross.atan2(dot).to_degrees()
    }

    /// Mirror image of `p` across the plane.
    pub fn reflect(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - 2.0 * self.signed_distance(p) * self.normal
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.signed_distance(p) * self.normal
    }

    /// The image of the plane under the rigid motion `x -> rot * x + t`.
    pub fn transformed(&self, rot: &Rotation3<f64>, t: &Vector3<f64>) -> Plane {
        let n = rot * self.normal;
        Plane::new(n, self.offset - n.dot(t)).expect("rotation preserves unit normals")
    }
}

/// Canonical landmark names for craniofacial data sets.
pub mod catalog {
    /// Midline landmark names.
    pub const UNPAIRED: [&str; 11] = [
        "S", "N", "Ba", "FMp", "ANS", "PNS", "U1", "L1", "Pg", "Gn", "Me",
    ];

    /// Bilateral (left/right) landmark names.
    pub const PAIRED: [&str; 13] = [
        "Or", "Fz", "J", "SOF", "Po", "ZMS", "U6", "L6", "Co", "SIG", "Cr", "Gos", "Goi",
    ];
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn x_plane() -> Plane {
        Plane::new(Vector3::new(1.0, 0.0, 0.0), 0.0).unwrap()
    }

    #[test]
    fn point_plane_distance_examples() {
        let p = x_plane();
        assert_eq!(p.distance(&Vector3::new(0.0, 0.0, 0.0)), 0.0);
        assert_eq!(p.distance(&Vector3::new(3.0, 5.0, 7.0)), 3.0);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let diag = Plane::new(Vector3::new(s, s, 0.0), -std::f64::consts::SQRT_2).unwrap();
        assert_relative_eq!(
            diag.distance(&Vector3::new(1.0, 1.0, 0.0)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn plane_angle_examples() {
        let a = x_plane();
        let b = Plane::new(Vector3::new(0.0, 1.0, 0.0), 3.0).unwrap();
        assert_eq!(a.angle_degrees_to(&a), 0.0);
        assert_relative_eq!(a.angle_degrees_to(&b), 90.0, epsilon = 1e-12);

        let c = Plane::new(Vector3::new(-1.0, 0.0, 0.0), 5.0).unwrap();
        assert_relative_eq!(a.angle_degrees_to(&c), 0.0, epsilon = 1e-12);
        // symmetry
        assert_eq!(a.angle_degrees_to(&b), b.angle_degrees_to(&a));
    }

    #[test]
    fn plane_angle_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut random_plane = || {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                Plane::new(v, rng.random_range(-10.0..10.0)).unwrap()
            };
            let (a, b, c) = (random_plane(), random_plane(), random_plane());
            let (ab, bc, ac) = (
                a.angle_degrees_to(&b),
                b.angle_degrees_to(&c),
                a.angle_degrees_to(&c),
            );
            assert!(ac <= ab + bc + 1e-9, "{ac} > {ab} + {bc}");
            assert!((0.0..=90.0).contains(&ab));
        }
    }

    #[test]
    fn reflect_examples_and_involution() {
        let p = x_plane();
        let on_plane = Vector3::new(0.0, 2.0, -4.0);
        assert_eq!(p.reflect(&on_plane), on_plane);
        assert_eq!(
            p.reflect(&Vector3::new(1.0, 0.0, 0.0)),
            Vector3::new(-1.0, 0.0, 0.0)
        );

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let plane = Plane::new(v, rng.random_range(-50.0..50.0));
            let plane = match plane {
                Ok(p) => p,
                Err(_) => continue,
            };
            let q = Vector3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
            );
            let twice = plane.reflect(&plane.reflect(&q));
            assert!((twice - q).norm() <= 1e-12 * (1.0 + q.norm()));
        }
    }

    #[test]
    fn canonicalize_examples() {
        let p = Plane::new(Vector3::new(-2.0, 0.0, 0.0), 4.0).unwrap();
        assert_eq!(*p.normal(), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(p.offset(), -2.0);

        let q = Plane::new(Vector3::new(0.0, -3.0, 0.0), 0.0).unwrap();
        assert_eq!(*q.normal(), Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(q.offset(), 0.0);

        // idempotence
        let r = Plane::new(*q.normal(), q.offset()).unwrap();
        assert_eq!(r, q);

        assert!(matches!(
            Plane::new(Vector3::zeros(), 1.0),
            Err(Error::ZeroNormal)
        ));
    }

    #[test]
    fn distance_invariant_under_canonicalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = Vector3::new(
                rng.random_range(0.1..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let d = rng.random_range(-20.0..20.0);
            let p = Plane::new(v, d).unwrap();
            let flipped = Plane::new(-v, -d).unwrap();
            let q = Vector3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            assert_relative_eq!(p.distance(&q), flipped.distance(&q), epsilon = 1e-9);
        }
    }

    fn tiny_valid_set() -> LandmarkSet {
        LandmarkSet::new(
            vec![Landmark::new("A", [0.0, 1.0, 0.0])],
            vec![LandmarkPair::new("P", [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0])],
        )
        .unwrap()
    }

    #[test]
    fn validate_catches_violations() {
        tiny_valid_set();

        let coincident = LandmarkSet::new(
            vec![
                Landmark::new("A", [0.0, 1.0, 0.0]),
                Landmark::new("B", [0.0, 1.0, 0.0]),
            ],
            vec![LandmarkPair::new("P", [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0])],
        );
        match coincident {
            Err(Error::InvalidSet(ValidationErrors(v))) => {
                assert!(v.iter().any(|x| matches!(x, Violation::Coincident(..))))
            }
            other => panic!("expected coincident violation, got {other:?}"),
        }

        let no_pairs = LandmarkSet::new(vec![Landmark::new("A", [0.0, 1.0, 0.0])], vec![]);
        match no_pairs {
            Err(Error::InvalidSet(ValidationErrors(v))) => {
                assert!(v.contains(&Violation::NoPairs))
            }
            other => panic!("expected no-pairs violation, got {other:?}"),
        }

        let dup = LandmarkSet::new(
            vec![Landmark::new("P", [0.0, 1.0, 0.0])],
            vec![LandmarkPair::new("P", [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0])],
        );
        match dup {
            Err(Error::InvalidSet(ValidationErrors(v))) => assert!(v
                .iter()
                .any(|x| matches!(x, Violation::DuplicateName(n) if n == "P"))),
            other => panic!("expected duplicate violation, got {other:?}"),
        }

        let non_finite = LandmarkSet::new(
            vec![Landmark::new("A", [f64::NAN, 1.0, 0.0])],
            vec![LandmarkPair::new("P", [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0])],
        );
        assert!(non_finite.is_err());
    }

    #[test]
    fn catalog_counts() {
        assert_eq!(catalog::UNPAIRED.len(), 11);
        assert_eq!(catalog::PAIRED.len(), 13);
    }

    #[test]
    fn side_swap_keeps_names() {
        let set = tiny_valid_set();
        let swapped = set.with_sides_swapped();
        assert_eq!(swapped.pairs()[0].right, set.pairs()[0].left);
        assert_eq!(swapped.pairs()[0].left, set.pairs()[0].right);
        assert_eq!(swapped.pairs()[0].name, "P");
    }
}

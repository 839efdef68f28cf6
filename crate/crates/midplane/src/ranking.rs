//! Per-landmark asymmetry quantification and recursive ranking.
//!
//! Asymmetry is measured through inter-landmark distances: for the right-side
//! system (right pair members plus all unpaired landmarks) and the left-side
//! system, matching distance vectors are built in the same entry order, and
//! their entrywise absolute log ratios form the asymmetry vector H. A
//! perfectly mirror-symmetric set yields H = 0. Leaving one droppable unit
//! out (an unpaired landmark, or a pair as a whole) and taking the mean of
//! the remaining entries gives that unit's T-score; the unit with the lowest
//! T-score is the most asymmetric one and is removed first.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::Error;
use crate::model::{LandmarkSet, COINCIDENCE_TOLERANCE_MM};
use crate::par;

/// A unit that ranking can remove in one step: a single unpaired landmark or
/// a whole pair (both members).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum DroppableUnit {
    Unpaired(String),
    Pair(String),
}

impl DroppableUnit {
    pub fn name(&self) -> &str {
        match self {
            DroppableUnit::Unpaired(n) | DroppableUnit::Pair(n) => n,
        }
    }

    /// Points removed when this unit is dropped.
    pub fn point_count(&self) -> usize {
        match self {
            DroppableUnit::Unpaired(_) => 1,
            DroppableUnit::Pair(_) => 2,
        }
    }
}

impl fmt::Display for DroppableUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DroppableUnit::Unpaired(n) => write!(f, "{n}"),
            DroppableUnit::Pair(n) => write!(f, "{n} (pair)"),
        }
    }
}

/// Which landmark combination produced a distance-vector entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntrySource {
    /// Distance from unpaired landmark `unpaired` to pair `pair`'s side member.
    UnpairedToPair { unpaired: usize, pair: usize },
    /// Distance between the side members of pairs `first` and `second` (first < second).
    PairToPair { first: usize, second: usize },
}

/// Side-by-side distance vectors over the right and left systems.
///
/// Entry order: all unpaired-to-pair distances (unpaired index major, pair
/// index minor), then pair-to-pair distances for first < second. Entry `k`
/// of both vectors refers to the same landmark combination, so the two are
/// directly comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVectors {
    right: Vec<f64>,
    left: Vec<f64>,
    sources: Vec<EntrySource>,
}

impl DistanceVectors {
    pub fn len(&self) -> usize {
        self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.right.is_empty()
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn sources(&self) -> &[EntrySource] {
        &self.sources
    }
}

/// Builds the right/left distance vectors. Length is N(N-1)/2 + M*N.
pub fn distance_vectors(set: &LandmarkSet) -> Result<DistanceVectors, Error> {
    let m = set.unpaired_count();
    let n = set.pair_count();
    let len = n * (n - 1) / 2 + m * n;
    let mut right = Vec::with_capacity(len);
    let mut left = Vec::with_capacity(len);
    let mut sources = Vec::with_capacity(len);

    let mut push = |r: f64, l: f64, src: EntrySource, a: &str, b: &str| -> Result<(), Error> {
        if r < COINCIDENCE_TOLERANCE_MM || l < COINCIDENCE_TOLERANCE_MM {
            return Err(Error::DegenerateDistance {
                a: a.to_string(),
                b: b.to_string(),
                distance_mm: r.min(l),
            });
        }
        right.push(r);
        left.push(l);
        sources.push(src);
        Ok(())
    };

    for (i, u) in set.unpaired().iter().enumerate() {
        for (j, p) in set.pairs().iter().enumerate() {
            push(
                (u.position - p.right).norm(),
                (u.position - p.left).norm(),
                EntrySource::UnpairedToPair { unpaired: i, pair: j },
                &u.name,
                &p.name,
            )?;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&set.pairs()[i], &set.pairs()[j]);
            push(
                (a.right - b.right).norm(),
                (a.left - b.left).norm(),
                EntrySource::PairToPair { first: i, second: j },
                &a.name,
                &b.name,
            )?;
        }
    }

    Ok(DistanceVectors { right, left, sources })
}

/// The asymmetry vector H: entrywise |log(right distance / left distance)|.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioVector {
    entries: Vec<f64>,
    sources: Vec<EntrySource>,
}

impl RatioVector {
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn sources(&self) -> &[EntrySource] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The pair of landmark names whose distance produced entry `index`.
    pub fn landmarks_for_entry(&self, set: &LandmarkSet, index: usize) -> (String, String) {
        match self.sources[index] {
            EntrySource::UnpairedToPair { unpaired, pair } => (
                set.unpaired()[unpaired].name.clone(),
                set.pairs()[pair].name.clone(),
            ),
            EntrySource::PairToPair { first, second } => (
                set.pairs()[first].name.clone(),
                set.pairs()[second].name.clone(),
            ),
        }
    }

    /// Mean of the asymmetry entries.
    pub fn mean(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }
}

/// Computes H for the set.
pub fn ratio_vector(set: &LandmarkSet) -> Result<RatioVector, Error> {
    let dv = distance_vectors(set)?;
    // |ln r - ln l| rather than |ln(r/l)|: algebraically identical, and
    // exactly invariant under swapping the two sides.
    let entries = dv
        .right
        .iter()
        .zip(&dv.left)
        .map(|(r, l)| (r.ln() - l.ln()).abs())
        .collect();
    Ok(RatioVector {
        entries,
        sources: dv.sources,
    })
}

/// One droppable unit's leave-one-out score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScore {
    pub unit: DroppableUnit,
    pub score: f64,
}

/// T-scores for every droppable unit of a system, in set order (unpaired
/// landmarks first, then pairs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TScores {
    pub scores: Vec<UnitScore>,
}

impl TScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.scores.iter().map(|s| s.score).sum::<f64>() / self.scores.len() as f64
    }

    pub fn get(&self, unit: &DroppableUnit) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| &s.unit == unit)
            .map(|s| s.score)
    }

    /// The unit with the lowest score; ties break toward the earliest unit in
    /// set order, making the result deterministic.
    pub fn most_asymmetric(&self) -> Option<&UnitScore> {
        self.scores
            .iter()
            .reduce(|best, s| if s.score < best.score { s } else { best })
    }
}

/// True if removing `unit` leaves a system that still supports the asymmetry
/// vector: at least one pair and at least one H entry remain.
fn remaining_entries(unit_index: usize, m: usize, n: usize, total: usize) -> Option<usize> {
    if unit_index < m {
        // Removing an unpaired landmark deletes its N entries.
        let remaining = total - n;
        (remaining >= 1).then_some(remaining)
    } else {
        // Removing a pair deletes its M unpaired entries and its N-1
        // pair-to-pair entries.
        let remaining = total - (m + n - 1);
        (n >= 2 && remaining >= 1).then_some(remaining)
    }
}

/// Leave-one-out T-scores over all droppable units of the set.
///
/// Distances between the remaining landmarks do not change when a unit is
/// removed, so each score is the mean of the H entries not touching that
/// unit. Units whose removal would leave the system unusable are skipped;
/// if nothing is droppable, the system is too small.
pub fn t_scores(set: &LandmarkSet) -> Result<TScores, Error> {
    let rv = ratio_vector(set)?;
    let m = set.unpaired_count();
    let n = set.pair_count();
    let total = rv.len();

    let unit_indices: Vec<usize> = (0..m + n).collect();
    let scores: Vec<Option<UnitScore>> = par::map_collect(&unit_indices, |&idx| {
        remaining_entries(idx, m, n, total)?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for (entry, src) in rv.entries.iter().zip(&rv.sources) {
            let touches = match *src {
                EntrySource::UnpairedToPair { unpaired, pair } => {
                    (idx < m && unpaired == idx) || (idx >= m && pair == idx - m)
                }
                EntrySource::PairToPair { first, second } => {
                    idx >= m && (first == idx - m || second == idx - m)
                }
            };
            if !touches {
                sum += entry;
                count += 1;
            }
        }
        let unit = if idx < m {
            DroppableUnit::Unpaired(set.unpaired()[idx].name.clone())
        } else {
            DroppableUnit::Pair(set.pairs()[idx - m].name.clone())
        };
        Some(UnitScore {
            unit,
            score: sum / count as f64,
        })
    });

    let scores: Vec<UnitScore> = scores.into_iter().flatten().collect();
    if scores.is_empty() {
        return Err(Error::SystemTooSmall);
    }
    Ok(TScores { scores })
}

impl LandmarkSet {
    /// The set with one droppable unit removed; `None` if no such unit exists.
    pub fn without_unit(&self, unit: &DroppableUnit) -> Option<LandmarkSet> {
        match unit {
            DroppableUnit::Unpaired(name) => {
                let mut unpaired = self.unpaired().to_vec();
                let pos = unpaired.iter().position(|l| &l.name == name)?;
                unpaired.remove(pos);
                Some(LandmarkSet::from_parts_unchecked(
                    unpaired,
                    self.pairs().to_vec(),
                ))
            }
            DroppableUnit::Pair(name) => {
                let mut pairs = self.pairs().to_vec();
                let pos = pairs.iter().position(|p| &p.name == name)?;
                pairs.remove(pos);
                Some(LandmarkSet::from_parts_unchecked(
                    self.unpaired().to_vec(),
                    pairs,
                ))
            }
        }
    }
}

/// The full elimination record: which unit was removed at each stage, the
/// systems after 0, 1, 2, ... removals, and each scored stage's T-scores.
///
/// `stage_tscores[k]` belongs to `stage_systems[k]`; it is `None` only when
/// the final system was too small to score.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetryTrace {
    pub elimination_order: Vec<DroppableUnit>,
    pub stage_systems: Vec<LandmarkSet>,
    pub stage_tscores: Vec<Option<TScores>>,
}

impl AsymmetryTrace {
    pub fn stage_count(&self) -> usize {
        self.stage_systems.len()
    }
}

/// Recursively removes the most asymmetric unit, recording every stage.
///
/// Stops before the remaining point count (pairs count 2, unpaired count 1)
/// would drop below `min_points`, or when no droppable unit remains.
pub fn rank_landmarks(set: &LandmarkSet, min_points: usize) -> Result<AsymmetryTrace, Error> {
    if min_points < 4 {
        return Err(Error::MinPointsTooSmall(min_points));
    }
    set.validate()?;

    let mut current = set.clone();
    let mut elimination_order = Vec::new();
    let mut stage_systems = vec![current.clone()];
    let mut stage_tscores = Vec::new();

    loop {
        match t_scores(&current) {
            Err(Error::SystemTooSmall) => {
                stage_tscores.push(None);
                break;
            }
            Err(e) => return Err(e),
            Ok(ts) => {
                let candidate = ts
                    .most_asymmetric()
                    .expect("non-empty scores")
                    .unit
                    .clone();
                stage_tscores.push(Some(ts));
                if current.point_count() - candidate.point_count() < min_points {
                    break;
                }
                current = current
                    .without_unit(&candidate)
                    .expect("scored unit exists in current system");
                elimination_order.push(candidate);
                stage_systems.push(current.clone());
            }
        }
    }

    Ok(AsymmetryTrace {
        elimination_order,
        stage_systems,
        stage_tscores,
    })
}

/// Deformity severity classes derived from the first-iteration T-scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Normal,
    MildModerate,
    Severe,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Normal => write!(f, "normal"),
            Severity::MildModerate => write!(f, "mild/moderate"),
            Severity::Severe => write!(f, "severe"),
        }
    }
}

/// Mean first-iteration T below this is a normal-range subject.
pub const SEVERITY_MILD_THRESHOLD: f64 = 0.02;
/// Mean first-iteration T at or above this marks a severe deformity.
pub const SEVERITY_SEVERE_THRESHOLD: f64 = 0.04;

/// Classifies deformity severity from the mean of the first-iteration
/// T-scores.
pub fn classify_severity(set: &LandmarkSet) -> Result<Severity, Error> {
    let mean = t_scores(set)?.mean();
    Ok(if mean < SEVERITY_MILD_THRESHOLD {
        Severity::Normal
    } else if mean < SEVERITY_SEVERE_THRESHOLD {
        Severity::MildModerate
    } else {
        Severity::Severe
    })
}

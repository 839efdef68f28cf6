//! Outlier-stage selection from the elimination trace.
//!
//! Each stage of the trace has a T-score distribution. A trustworthy stage
//! has uniformly comparable elimination impact across its remaining units:
//! small variance and little skew. Selection keeps the stages whose variance
//! is within 1.5x of the best stage and picks the least-skewed one among
//! them, preferring fewer dropped outliers on ties.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::LandmarkSet;
use crate::ranking::{classify_severity, AsymmetryTrace, DroppableUnit, Severity, TScores};

/// Variance slack factor relative to the best stage.
pub const VARIANCE_SLACK: f64 = 1.5;

/// Distribution statistics of one stage's T-scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    /// Number of outliers dropped before this stage.
    pub stage_index: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Adjusted Fisher-Pearson sample skewness; 0 for a constant sample.
    pub skewness: f64,
}

/// Computes mean, unbiased sample variance, and adjusted Fisher-Pearson
/// skewness of a stage's scores. Requires at least 3 scores.
pub fn distribution_stats(stage_index: usize, scores: &TScores) -> Result<StageStats, Error> {
    let n = scores.len();
    if n < 3 {
        return Err(Error::InsufficientScores(n));
    }
    let nf = n as f64;
    let mean = scores.mean();
    let (mut m2, mut m3, mut ss) = (0.0, 0.0, 0.0);
    for s in &scores.scores {
        let d = s.score - mean;
        m2 += d * d;
        m3 += d * d * d;
        ss += d * d;
    }
    let variance = ss / (nf - 1.0);
    m2 /= nf;
    m3 /= nf;
    let skewness = if m2 <= f64::MIN_POSITIVE {
        0.0
    } else {
        let g1 = m3 / m2.powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    };
    Ok(StageStats {
        stage_index,
        mean,
        variance,
        skewness,
    })
}

/// Configuration for the severe-case warning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    /// If the subject classifies as severe and the selected stage's variance
    /// still exceeds this absolute threshold, no stage is trustworthy and a
    /// warning is attached.
    pub severe_variance_threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            severe_variance_threshold: 1e-3,
        }
    }
}

/// Outcome of stage selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub selected_stage: usize,
    pub dropped_outliers: Vec<DroppableUnit>,
    pub kept_set: LandmarkSet,
    /// Present when the deformity looks severe everywhere and even the
    /// selected stage is not trustworthy.
    pub warning: Option<String>,
    /// Statistics of every scored stage, for reporting.
    pub stage_stats: Vec<StageStats>,
}

/// Picks the stage with small variance (within [`VARIANCE_SLACK`] of the
/// minimum) and least absolute skewness; ties resolve toward fewer dropped
/// outliers.
pub fn select_system(
    trace: &AsymmetryTrace,
    config: &SelectionConfig,
) -> Result<SelectionResult, Error> {
    let mut stats = Vec::new();
    for (k, ts) in trace.stage_tscores.iter().enumerate() {
        if let Some(ts) = ts {
            if ts.len() >= 3 {
                stats.push(distribution_stats(k, ts)?);
            }
        }
    }
    let max_scores = trace
        .stage_tscores
        .iter()
        .flatten()
        .map(|t| t.len())
        .max()
        .unwrap_or(0);
    if stats.is_empty() {
        return Err(Error::InsufficientScores(max_scores));
    }

    let min_variance = stats
        .iter()
        .map(|s| s.variance)
        .fold(f64::INFINITY, f64::min);
    let selected = stats
        .iter()
        .filter(|s| s.variance <= VARIANCE_SLACK * min_variance)
        .reduce(|best, s| {
            if s.skewness.abs() < best.skewness.abs() {
                s
            } else {
                best
            }
        })
        .expect("at least one stage passes the variance filter");

    let severity = classify_severity(&trace.stage_systems[0])?;
    let warning = (severity == Severity::Severe
        && selected.variance > config.severe_variance_threshold)
        .then(|| {
            format!(
                "severe deformity: every stage keeps a heterogeneous T-score \
                 distribution (selected variance {:.3e} > {:.3e}); the estimated \
                 plane may be unreliable",
                selected.variance, config.severe_variance_threshold
            )
        });

    Ok(SelectionResult {
        selected_stage: selected.stage_index,
        dropped_outliers: trace.elimination_order[..selected.stage_index].to_vec(),
        kept_set: trace.stage_systems[selected.stage_index].clone(),
        warning,
        stage_stats: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::{rank_landmarks, UnitScore};
    use approx::assert_relative_eq;

    fn scores_of(values: &[f64]) -> TScores {
        TScores {
            scores: values
                .iter()
                .enumerate()
                .map(|(i, &v)| UnitScore {
                    unit: DroppableUnit::Unpaired(format!("U{i}")),
                    score: v,
                })
                .collect(),
        }
    }

    #[test]
    fn stats_examples() {
        let s = distribution_stats(0, &scores_of(&[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.skewness, 0.0);

        let s = distribution_stats(0, &scores_of(&[1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(s.mean, 2.0);
        assert_relative_eq!(s.variance, 1.0);
        assert_relative_eq!(s.skewness, 0.0);

        // Direct evaluation of the adjusted Fisher-Pearson formula for
        // {0,0,0,1}: m2 = 3/16, m3 = 3/32, G1 = 2.
        let s = distribution_stats(0, &scores_of(&[0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(s.skewness > 0.0);
        assert_relative_eq!(s.skewness, 2.0, epsilon = 1e-12);

        assert!(matches!(
            distribution_stats(0, &scores_of(&[1.0, 2.0])),
            Err(Error::InsufficientScores(2))
        ));
    }

    #[test]
    fn symmetric_trace_selects_stage_zero() {
        let set = crate::ranking::tests::symmetric_set(5, 6, 77);
        let trace = rank_landmarks(&set, 8).unwrap();
        let sel = select_system(&trace, &SelectionConfig::default()).unwrap();
        assert_eq!(sel.selected_stage, 0);
        assert!(sel.dropped_outliers.is_empty());
        assert_eq!(sel.kept_set, trace.stage_systems[0]);
        assert!(sel.warning.is_none());
    }

    #[test]
    fn displaced_pair_is_dropped() {
        use crate::model::LandmarkSet;
        use nalgebra::Vector3;

        for seed in [5u64, 6, 7] {
            let base = crate::ranking::tests::noisy_set(5, 6, seed, 0.3);
            let set = LandmarkSet::from_parts_unchecked(
                base.unpaired().to_vec(),
                base.pairs()
                    .iter()
                    .map(|p| {
                        let mut p = p.clone();
                        if p.name == "P3" {
                            p.right += Vector3::new(4.0, 8.0, -4.0);
                        }
                        p
                    })
                    .collect(),
            );
            let trace = rank_landmarks(&set, 8).unwrap();
            let sel = select_system(&trace, &SelectionConfig::default()).unwrap();
            assert!(sel.selected_stage >= 1, "seed {seed}");
            assert!(
                sel.dropped_outliers
                    .contains(&DroppableUnit::Pair("P3".into())),
                "seed {seed}: dropped = {:?}",
                sel.dropped_outliers
            );

            // Brute-force check of the selection rule over the stage stats.
            let stats = &sel.stage_stats;
            let vmin = stats.iter().map(|s| s.variance).fold(f64::INFINITY, f64::min);
            let best = stats
                .iter()
                .filter(|s| s.variance <= VARIANCE_SLACK * vmin)
                .min_by(|a, b| {
                    (a.skewness.abs(), a.stage_index)
                        .partial_cmp(&(b.skewness.abs(), b.stage_index))
                        .unwrap()
                })
                .unwrap();
            assert_eq!(best.stage_index, sel.selected_stage);
        }
    }

    #[test]
    fn selection_invariants_hold() {
        let set = crate::ranking::tests::noisy_set(6, 7, 11, 1.5);
        let trace = rank_landmarks(&set, 8).unwrap();
        let sel = select_system(&trace, &SelectionConfig::default()).unwrap();
        let vmin = sel
            .stage_stats
            .iter()
            .map(|s| s.variance)
            .fold(f64::INFINITY, f64::min);
        let chosen = sel
            .stage_stats
            .iter()
            .find(|s| s.stage_index == sel.selected_stage)
            .unwrap();
        assert!(chosen.variance <= VARIANCE_SLACK * vmin);
        for s in &sel.stage_stats {
            if s.variance <= VARIANCE_SLACK * vmin {
                assert!(chosen.skewness.abs() <= s.skewness.abs() + 1e-15);
            }
        }
        // Determinism.
        let again = select_system(&trace, &SelectionConfig::default()).unwrap();
        assert_eq!(again.selected_stage, sel.selected_stage);
        assert_eq!(again.dropped_outliers, sel.dropped_outliers);
    }
}

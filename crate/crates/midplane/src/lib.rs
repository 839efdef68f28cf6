//! Midsagittal plane estimation for bilateral landmark data.
//!
//! Craniofacial deformities warp the apparent symmetry plane of a skull, so
//! a plane fit to all landmarks is biased toward the deformity. This crate
//! estimates the premorbid midsagittal plane in three steps:
//!
//! 1. **Rank** ([`ranking`]): quantify each landmark's bilateral asymmetry
//!    from inter-landmark distance log-ratios and rank by leave-one-out
//!    impact.
//! 2. **Drop** ([`selection`]): walk the elimination trace and keep the
//!    stage whose score distribution has small variance and least skew; the
//!    landmarks removed up to that stage are the outliers.
//! 3. **Fit** ([`fit`]): minimize a weighted distance-plus-angle objective
//!    over planes with unit normal, initialized by a closed-form smallest
//!    eigenvector solution and refined by projected gradient descent, with
//!    outliers at weight zero.
//!
//! The [`synth`] module reproduces the validation protocol: perfectly
//! symmetric synthetic subjects, parametrized deformity morphs, seeded
//! fluctuating-asymmetry noise, and clinical outcome scoring. [`io`] defines
//! the JSON file formats used by the `midplane` CLI.
//!
//! Hot inner loops (leave-one-out scoring, benchmark case evaluation) run
//! data-parallel under the default `parallel` feature and fall back to
//! sequential iterators without it; results are identical either way.

pub mod error;
pub mod fit;
pub mod io;
mod linalg;
pub mod model;
mod par;
pub mod ranking;
pub mod selection;
pub mod synth;

pub use error::{Error, ValidationErrors, Violation};
pub use fit::{
    build_b_matrix, build_problem, fit_plane, fit_without_dropping, objective,
    objective_gradient, run_pipeline, solve_quadratic, FitConfig, FitDiagnostics, FitProblem,
    FitWarning, PipelineOutcome, QuadraticSystem, Weights,
};
pub use model::{catalog, Landmark, LandmarkPair, LandmarkSet, Plane};
pub use ranking::{
    classify_severity, distance_vectors, rank_landmarks, ratio_vector, t_scores, AsymmetryTrace,
    DistanceVectors, DroppableUnit, RatioVector, Severity, TScores, UnitScore,
};
pub use selection::{
    distribution_stats, select_system, SelectionConfig, SelectionResult, StageStats,
};
pub use synth::{
    add_fluctuating_noise, apply_deformity, default_templates, generate_cases, nominal_catalog_set,
    outcome_metrics, run_benchmark, symmetrize, BenchmarkReport, BenchmarkRow, DeformityCase,
    DeformityKind, DeformitySpec, Side, ValidationMetrics,
};

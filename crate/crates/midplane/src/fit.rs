//! Weighted plane fitting: nonlinear objective, closed-form quadratic
//! solver, projected gradient descent, and the end-to-end pipeline.
//!
//! The objective over a candidate plane (n, d) with |n| = 1 is
//!
//! ```text
//! f = 1/(M+N) * sum over s1 of w * (x.n + d)^2
//!   + gamma/N * sum over s2 of p * asin(|x cross n| / |x|)^2
//! ```
//!
//! where s1 holds the unpaired landmarks and pair midpoints and s2 the
//! right-to-left pair segment directions. Replacing asin(s) by s gives a
//! quadratic form n'Bn whose constrained minimizer is the eigenvector of the
//! smallest eigenvalue of B; that closed form (with gamma = 0) initializes
//! the gradient descent on the full objective.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::Error;
use crate::linalg::sym_eigen_3x3;
use crate::model::{LandmarkSet, Plane, NORMAL_SIGN_TOLERANCE};
use crate::ranking::{classify_severity, rank_landmarks, AsymmetryTrace, DroppableUnit, Severity};
use crate::selection::{select_system, SelectionConfig, SelectionResult};

/// Fraction below 1 at which a pair direction counts as lying in the plane,
/// making the asin derivative blow up.
const ARCSIN_SINGULAR: f64 = 1e-12;

/// Clamp margin keeping asin and its derivative finite in the objective.
const ARCSIN_CLAMP: f64 = 1e-15;

/// Per-landmark fit weights; zero removes a landmark from the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// One weight per unpaired landmark.
    pub unpaired: Vec<f64>,
    /// One weight per pair midpoint.
    pub midpoint: Vec<f64>,
    /// One weight per pair direction.
    pub angle: Vec<f64>,
}

impl Weights {
    /// All-ones weights for a set with `m` unpaired landmarks and `n` pairs.
    pub fn ones(m: usize, n: usize) -> Self {
        Weights {
            unpaired: vec![1.0; m],
            midpoint: vec![1.0; n],
            angle: vec![1.0; n],
        }
    }

    /// Zeroes out every weight touched by the given units: an unpaired unit
    /// clears its point weight, a pair unit clears its midpoint and angle
    /// weights.
    pub fn without_units(mut self, set: &LandmarkSet, dropped: &[DroppableUnit]) -> Self {
        for unit in dropped {
            match unit {
                DroppableUnit::Unpaired(name) => {
                    if let Some(i) = set.unpaired().iter().position(|l| &l.name == name) {
                        self.unpaired[i] = 0.0;
                    }
                }
                DroppableUnit::Pair(name) => {
                    if let Some(i) = set.pairs().iter().position(|p| &p.name == name) {
                        self.midpoint[i] = 0.0;
                        self.angle[i] = 0.0;
                    }
                }
            }
        }
        self
    }
}

/// Parameters of the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Balance between the squared-distance and squared-angle terms.
    /// With millimeter coordinates the default 480 makes typical distance
    /// residuals (a few mm, squared ~25) commensurate with typical angular
    /// residuals (a few degrees).
    pub gamma: f64,
    /// Optional per-landmark weights; defaults to all ones.
    pub weights: Option<Weights>,
    pub max_iterations: usize,
    /// Descent stops once the projected gradient norm falls below this.
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    pub step_shrink: f64,
    pub sufficient_decrease: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            gamma: 480.0,
            weights: None,
            max_iterations: 10_000,
            gradient_tolerance: 1e-10,
            initial_step: 1.0,
            step_shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl FitConfig {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_weights(mut self, weights: Weights) -> Self {
        self.weights = Some(weights);
        self
    }
}

/// Warnings attached to a problem that can still be attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWarning {
    /// Fewer than three weighted points and no weighted pair direction; the
    /// quadratic form will be rank deficient.
    RankDeficientWeights,
    /// Every angle weight is zero while gamma is positive.
    NoActiveAngleTerm,
}

impl fmt::Display for FitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWarning::RankDeficientWeights => write!(
                f,
                "too few weighted landmarks to determine a plane; expect a degenerate fit"
            ),
            FitWarning::NoActiveAngleTerm => {
                write!(f, "all angle weights are zero; the angle term is inactive")
            }
        }
    }
}

struct PointTerm {
    point: Vector3<f64>,
    weight: f64,
}

struct DirectionTerm {
    unit: Vector3<f64>,
    weight: f64,
    name: String,
}

/// The assembled fit problem: weighted points (unpaired landmarks followed by
/// pair midpoints) and weighted pair directions.
pub struct FitProblem {
    s1: Vec<PointTerm>,
    s2: Vec<DirectionTerm>,
    m: usize,
    n: usize,
    warnings: Vec<FitWarning>,
}

impl FitProblem {
    /// Number of unpaired landmarks behind s1.
    pub fn unpaired_count(&self) -> usize {
        self.m
    }

    /// Number of pairs behind s1 midpoints and s2 directions.
    pub fn pair_count(&self) -> usize {
        self.n
    }

    pub fn s1_len(&self) -> usize {
        self.s1.len()
    }

    pub fn s2_len(&self) -> usize {
        self.s2.len()
    }

    pub fn warnings(&self) -> &[FitWarning] {
        &self.warnings
    }

    pub fn s1_points(&self) -> impl Iterator<Item = (&Vector3<f64>, f64)> {
        self.s1.iter().map(|t| (&t.point, t.weight))
    }

    pub fn s2_units(&self) -> impl Iterator<Item = (&Vector3<f64>, f64)> {
        self.s2.iter().map(|t| (&t.unit, t.weight))
    }

    fn weight_sum(&self) -> f64 {
        self.s1.iter().map(|t| t.weight).sum()
    }

    /// Weighted centroid of s1.
    fn weighted_mean(&self) -> Vector3<f64> {
        let mut acc = Vector3::zeros();
        for t in &self.s1 {
            acc += t.weight * t.point;
        }
        acc / self.weight_sum()
    }

    /// The offset minimizing the objective for a fixed normal.
    fn optimal_offset(&self, normal: &Vector3<f64>) -> f64 {
        let num: f64 = self.s1.iter().map(|t| t.weight * t.point.dot(normal)).sum();
        -num / self.weight_sum()
    }
}

fn check_weights(family: &'static str, w: &[f64], expected: usize) -> Result<(), Error> {
    if w.len() != expected {
        return Err(Error::WeightLength {
            family,
            got: w.len(),
            expected,
        });
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidWeight { family });
    }
    Ok(())
}

/// Assembles the fit problem from a landmark set.
///
/// s1 holds the unpaired points followed by pair midpoints; s2 holds the
/// right-minus-left pair directions. A pair whose members coincide has no
/// direction and is an error.
pub fn build_problem(set: &LandmarkSet, config: &FitConfig) -> Result<FitProblem, Error> {
    if !config.gamma.is_finite() || config.gamma < 0.0 {
        return Err(Error::InvalidGamma(config.gamma));
    }
    let m = set.unpaired_count();
    let n = set.pair_count();
    let weights = config
        .weights
        .clone()
        .unwrap_or_else(|| Weights::ones(m, n));
    check_weights("unpaired", &weights.unpaired, m)?;
    check_weights("midpoint", &weights.midpoint, n)?;
    check_weights("angle", &weights.angle, n)?;

    let mut s1 = Vec::with_capacity(m + n);
    for (l, &w) in set.unpaired().iter().zip(&weights.unpaired) {
        s1.push(PointTerm {
            point: l.position,
            weight: w,
        });
    }
    for (p, &w) in set.pairs().iter().zip(&weights.midpoint) {
        s1.push(PointTerm {
            point: p.midpoint(),
            weight: w,
        });
    }

    let mut s2 = Vec::with_capacity(n);
    for (p, &w) in set.pairs().iter().zip(&weights.angle) {
        let dir = p.direction();
        let norm = dir.norm();
        if norm < 1e-9 {
            return Err(Error::CoincidentPair(p.name.clone()));
        }
        s2.push(DirectionTerm {
            unit: dir / norm,
            weight: w,
            name: p.name.clone(),
        });
    }

    if s1.iter().map(|t| t.weight).sum::<f64>() <= 0.0 {
        return Err(Error::AllPointWeightsZero);
    }

    let mut warnings = Vec::new();
    let active_points = s1.iter().filter(|t| t.weight > 0.0).count();
    let active_dirs = s2.iter().filter(|t| t.weight > 0.0).count();
    if active_points < 3 && active_dirs == 0 {
        warnings.push(FitWarning::RankDeficientWeights);
    }
    if active_dirs == 0 && config.gamma > 0.0 {
        warnings.push(FitWarning::NoActiveAngleTerm);
    }

    Ok(FitProblem {
        s1,
        s2,
        m,
        n,
        warnings,
    })
}

fn objective_nd(n: &Vector3<f64>, d: f64, prob: &FitProblem, gamma: f64) -> f64 {
    let mut dist = 0.0;
    for t in &prob.s1 {
        let r = t.point.dot(n) + d;
        dist += t.weight * r * r;
    }
    dist /= (prob.m + prob.n) as f64;

    let mut angle = 0.0;
    if gamma > 0.0 {
        for t in &prob.s2 {
            if t.weight == 0.0 {
                continue;
            }
            let s = t.unit.cross(n).norm().min(1.0 - ARCSIN_CLAMP);
            let theta = s.asin();
            angle += t.weight * theta * theta;
        }
        angle *= gamma / prob.n as f64;
    }

    dist + angle
}

/// Evaluates the full nonlinear objective at a plane.
pub fn objective(plane: &Plane, prob: &FitProblem, config: &FitConfig) -> f64 {
    objective_nd(plane.normal(), plane.offset(), prob, config.gamma)
}

fn gradient_nd(
    n: &Vector3<f64>,
    d: f64,
    prob: &FitProblem,
    gamma: f64,
) -> Result<(Vector3<f64>, f64), Error> {
    let inv_count = 1.0 / (prob.m + prob.n) as f64;
    let mut grad_n = Vector3::zeros();
    let mut grad_d = 0.0;
    for t in &prob.s1 {
        let r = t.point.dot(n) + d;
        grad_n += 2.0 * inv_count * t.weight * r * t.point;
        grad_d += 2.0 * inv_count * t.weight * r;
    }

    if gamma > 0.0 {
        let angle_scale = gamma / prob.n as f64;
        for t in &prob.s2 {
            if t.weight == 0.0 {
                continue;
            }
            let c = t.unit.cross(n);
            let s = c.norm();
            if s >= 1.0 - ARCSIN_SINGULAR {
                return Err(Error::InPlanePairDirection(t.name.clone()));
            }
            if s < 1e-15 {
                // theta ~ s here, so the contribution vanishes smoothly.
                continue;
            }
            let theta = s.asin();
            let coef = angle_scale * t.weight * 2.0 * theta / (1.0 - s * s).sqrt() / s;
            grad_n += coef * c.cross(&t.unit);
        }
    }

    Ok((grad_n, grad_d))
}

/// Analytic gradient of the objective with respect to the raw normal and
/// offset. Constraint handling (projection onto the sphere) is the caller's
/// job. Errors if a pair direction lies in the candidate plane.
pub fn objective_gradient(
    plane: &Plane,
    prob: &FitProblem,
    config: &FitConfig,
) -> Result<(Vector3<f64>, f64), Error> {
    gradient_nd(plane.normal(), plane.offset(), prob, config.gamma)
}

/// The quadratic form behind the small-angle approximation, with its
/// eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    pub b_matrix: Matrix3<f64>,
    /// Ascending.
    pub eigenvalues: [f64; 3],
    /// Unit eigenvectors matching `eigenvalues`.
    pub eigenvectors: [Vector3<f64>; 3],
}

/// Assembles B: the weighted centered scatter of s1 plus the angle block
/// `gamma/N * sum p (I - u u')` over unit pair directions, and diagonalizes
/// it.
pub fn build_b_matrix(prob: &FitProblem, config: &FitConfig) -> Result<QuadraticSystem, Error> {
    if !config.gamma.is_finite() || config.gamma < 0.0 {
        return Err(Error::InvalidGamma(config.gamma));
    }
    let w_sum = prob.weight_sum();
    if w_sum <= 0.0 {
        return Err(Error::AllPointWeightsZero);
    }
    let mean = prob.weighted_mean();

    let mut b = Matrix3::zeros();
    for t in &prob.s1 {
        let centered = t.point - mean;
        b += t.weight * centered * centered.transpose();
    }
    b /= (prob.m + prob.n) as f64;

    let angle_scale = config.gamma / prob.n as f64;
    for t in &prob.s2 {
        b += angle_scale * t.weight * (Matrix3::identity() - t.unit * t.unit.transpose());
    }

    if !b.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("quadratic form"));
    }

    let (eigenvalues, eigenvectors) = sym_eigen_3x3(&b);
    Ok(QuadraticSystem {
        b_matrix: b,
        eigenvalues,
        eigenvectors,
    })
}

/// Relative eigenvalue gap below which the smallest eigenvalue counts as
/// repeated and the configuration as non-generic.
pub const GENERICITY_GAP: f64 = 1e-9;

/// Solves the small-angle quadratic problem in closed form: the normal is
/// the eigenvector of the smallest eigenvalue of B, the offset follows from
/// the weighted mean. Errors when that eigenvalue is not simple.
pub fn solve_quadratic(prob: &FitProblem, config: &FitConfig) -> Result<Plane, Error> {
    let qs = build_b_matrix(prob, config)?;
    let [l0, l1, l2] = qs.eigenvalues;
    let spread = l2 - l0;
    if spread <= 0.0 || (l1 - l0) < GENERICITY_GAP * spread {
        return Err(Error::DegenerateConfiguration);
    }
    let mut normal = qs.eigenvectors[0];
    if let Some(c) = normal
        .iter()
        .copied()
        .find(|c| c.abs() > NORMAL_SIGN_TOLERANCE)
    {
        if c < 0.0 {
            normal = -normal;
        }
    }
    let offset = prob.optimal_offset(&normal);
    Plane::new(normal, offset)
}

/// Iteration record of the projected gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Norm of the projected gradient at the returned plane.
    pub final_gradient_norm: f64,
    /// Projected gradient norm reached the tolerance.
    pub converged: bool,
    /// The line search could no longer find a descent step; the iterate sits
    /// at the floating-point floor of the objective.
    pub stalled: bool,
}

/// Minimizes the full objective by projected gradient descent on the unit
/// sphere, starting from the closed-form gamma = 0 plane.
///
/// Each iteration steps the normal along the negative projected gradient
/// under Armijo backtracking and sets the offset to its exact minimizer for
/// that normal (the offset enters the objective quadratically, so its
/// optimum is closed-form; descending jointly in (n, d) instead couples the
/// millimeter scale of d to the unit scale of n and conditions the problem
/// badly). The objective sequence is non-increasing. Returns the best
/// iterate with diagnostics; when the iteration budget runs out without
/// reaching tolerance, `converged` is false.
pub fn fit_plane(prob: &FitProblem, config: &FitConfig) -> Result<(Plane, FitDiagnostics), Error> {
    let init = solve_quadratic(prob, &config.clone().with_gamma(0.0))?;
    let mut n = *init.normal();
    let mut d = init.offset();
    let initial_objective = objective_nd(&n, d, prob, config.gamma);
    let mut f_cur = initial_objective;

    let mut iterations = 0usize;
    let mut converged = false;
    let mut stalled = false;
    let mut grad_norm = f64::NAN;
    let mut nudges = 0u32;

    while iterations < config.max_iterations {
        let (gn, gd) = match gradient_nd(&n, d, prob, config.gamma) {
            Ok(g) => g,
            Err(Error::InPlanePairDirection(name)) => {
                // An active pair direction fell exactly into the candidate
                // plane; deterministically nudge the normal toward the mean
                // pair direction and retry, a little harder each time.
                nudges += 1;
                if nudges > 60 {
                    return Err(Error::InPlanePairDirection(name));
                }
                let mut bias = Vector3::zeros();
                for t in &prob.s2 {
                    bias += t.weight * t.unit;
                }
                if bias.norm() < 1e-12 {
                    bias = Vector3::new(1.0, 0.0, 0.0);
                }
                let scale = 1e-9 * 2f64.powi(nudges as i32);
                n = (n + scale * bias.normalize()).normalize();
                d = prob.optimal_offset(&n);
                f_cur = objective_nd(&n, d, prob, config.gamma);
                continue;
            }
            Err(e) => return Err(e),
        };
        let proj = gn - gn.dot(&n) * n;
        let proj_sq = proj.norm_squared();
        grad_norm = (proj_sq + gd * gd).sqrt();
        if grad_norm <= config.gradient_tolerance {
            converged = true;
            break;
        }

        let mut alpha = config.initial_step;
        let mut accepted = None;
        while alpha >= 1e-20 {
            let cand_n = (n - alpha * proj).normalize();
            let cand_d = prob.optimal_offset(&cand_n);
            let f_cand = objective_nd(&cand_n, cand_d, prob, config.gamma);
            // Strict inequality: once the required decrease underflows the
            // objective's float resolution, the search must fail and stall
            // rather than spin on no-progress steps.
            if f_cand < f_cur - config.sufficient_decrease * alpha * proj_sq {
                accepted = Some((cand_n, cand_d, f_cand));
                break;
            }
            alpha *= config.step_shrink;
        }
        match accepted {
            Some((cand_n, cand_d, f_cand)) => {
                n = cand_n;
                d = cand_d;
                f_cur = f_cand;
                iterations += 1;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }

    if let Ok((gn, gd)) = gradient_nd(&n, d, prob, config.gamma) {
        let proj = gn - gn.dot(&n) * n;
        grad_norm = (proj.norm_squared() + gd * gd).sqrt();
        if grad_norm <= config.gradient_tolerance {
            converged = true;
        }
    }

    let plane = Plane::new(n, d)?;
    Ok((
        plane,
        FitDiagnostics {
            iterations,
            initial_objective,
            final_objective: f_cur,
            final_gradient_norm: grad_norm,
            converged,
            stalled,
        },
    ))
}

/// Everything the end-to-end pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub severity: Severity,
    pub trace: AsymmetryTrace,
    pub selection: SelectionResult,
    pub plane: Plane,
    pub diagnostics: FitDiagnostics,
}

/// Ranks landmarks, selects the outlier stage, zeroes the dropped landmarks'
/// weights, and fits the plane on the full set.
pub fn run_pipeline(
    set: &LandmarkSet,
    config: &FitConfig,
    min_points: usize,
) -> Result<PipelineOutcome, Error> {
    let severity = classify_severity(set)?;
    let trace = rank_landmarks(set, min_points)?;
    let selection = select_system(&trace, &SelectionConfig::default())?;

    let base = config
        .weights
        .clone()
        .unwrap_or_else(|| Weights::ones(set.unpaired_count(), set.pair_count()));
    let weights = base.without_units(set, &selection.dropped_outliers);
    let fit_config = config.clone().with_weights(weights);
    let prob = build_problem(set, &fit_config)?;
    let (plane, diagnostics) = fit_plane(&prob, &fit_config)?;

    Ok(PipelineOutcome {
        severity,
        trace,
        selection,
        plane,
        diagnostics,
    })
}

/// Fits with every weight at one, bypassing outlier dropping entirely.
pub fn fit_without_dropping(
    set: &LandmarkSet,
    config: &FitConfig,
) -> Result<(Plane, FitDiagnostics), Error> {
    let mut config = config.clone();
    config.weights = None;
    let prob = build_problem(set, &config)?;
    fit_plane(&prob, &config)
}

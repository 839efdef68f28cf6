//! Command-line interface for the midsagittal plane pipeline.
//!
//! Exit codes: 0 on success (a severe-deformity warning still exits 0 and is
//! printed to stderr), 1 on input errors, 2 on numerical failure such as a
//! non-generic landmark configuration or a fit that hits its iteration
//! budget without converging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use midplane::io;
use midplane::synth::{self, DeformityKind, DeformitySpec, Side};
use midplane::{
    fit_without_dropping, outcome_metrics, rank_landmarks, run_pipeline, select_system, Error,
    FitConfig, LandmarkSet, Plane, SelectionConfig,
};

#[derive(Parser)]
#[command(
    name = "midplane",
    version,
    about = "Estimate the midsagittal plane of bilateral landmark data by ranking asymmetry, dropping outliers, and fitting a weighted plane"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FitOptions {
    /// Weight of the angle term relative to the squared-distance term.
    #[arg(long, default_value_t = 480.0)]
    gamma: f64,

    /// Stop dropping outliers once this many points would remain.
    #[arg(long, default_value_t = 8)]
    min_points: usize,
}

impl FitOptions {
    fn config(&self) -> FitConfig {
        FitConfig::default().with_gamma(self.gamma)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Rank landmarks by asymmetry and print the elimination trace.
    Rank {
        landmarks: PathBuf,
        #[arg(long, default_value_t = 8)]
        min_points: usize,
        /// Print the full trace as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },

    /// Run the pipeline on a landmark file and print the fitted plane.
    Fit {
        landmarks: PathBuf,
        #[command(flatten)]
        options: FitOptions,
        /// Fit with every weight at one, skipping outlier dropping.
        #[arg(long)]
        no_drop: bool,
        /// Write the full run report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the fitted plane to this path.
        #[arg(long)]
        plane: Option<PathBuf>,
    },

    /// Generate synthetic deformity cases.
    Synth {
        #[arg(long)]
        subjects: usize,
        /// Deformity kinds to generate, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![
            KindArg::HorizontalCondylar,
            KindArg::VerticalCondylar,
            KindArg::HemifacialType1,
            KindArg::HemifacialType2,
        ])]
        kinds: Vec<KindArg>,
        /// Affected side of the morph.
        #[arg(long, value_enum, default_value_t = SideArg::Right)]
        side: SideArg,
        /// Per-coordinate noise standard deviation in mm for unmorphed landmarks.
        #[arg(long, default_value_t = 3.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Override the per-kind default morph magnitude (mm).
        #[arg(long)]
        magnitude: Option<f64>,
        /// Output directory for case files.
        #[arg(long)]
        out: PathBuf,
    },

    /// Evaluate every case file in a directory and print the outcome table.
    Validate {
        case_dir: PathBuf,
        #[command(flatten)]
        options: FitOptions,
        /// Fit with every weight at one, skipping outlier dropping.
        #[arg(long)]
        no_drop: bool,
    },

    /// End to end: rank, drop, fit, and score against a ground-truth plane.
    Pipeline {
        landmarks: PathBuf,
        /// Ground-truth plane file.
        #[arg(long)]
        ground_truth: PathBuf,
        /// Landmark file providing the reference N, U1 and Pg positions;
        /// defaults to the input landmarks.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        options: FitOptions,
        /// Write the full run report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    #[value(name = "horizontal-condylar")]
    HorizontalCondylar,
    #[value(name = "vertical-condylar")]
    VerticalCondylar,
    #[value(name = "hemifacial-type1")]
    HemifacialType1,
    #[value(name = "hemifacial-type2")]
    HemifacialType2,
}

impl std::fmt::Display for KindArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KindArg::HorizontalCondylar => "horizontal-condylar",
            KindArg::VerticalCondylar => "vertical-condylar",
            KindArg::HemifacialType1 => "hemifacial-type1",
            KindArg::HemifacialType2 => "hemifacial-type2",
        };
        write!(f, "{s}")
    }
}

impl From<KindArg> for DeformityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::HorizontalCondylar => DeformityKind::HorizontalCondylarHyperplasia,
            KindArg::VerticalCondylar => DeformityKind::VerticalCondylarHyperplasia,
            KindArg::HemifacialType1 => DeformityKind::HemifacialType1,
            KindArg::HemifacialType2 => DeformityKind::HemifacialType2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Right,
    Left,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Right => Side::Right,
            SideArg::Left => Side::Left,
        }
    }
}

enum CliError {
    /// Bad input: unreadable files, malformed documents, invalid sets.
    Input(String),
    /// Numerical failure: degenerate configurations, non-convergence.
    Numerical(String),
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        match e {
            io::IoError::Invalid(ref inner) => classify_core(inner, e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        classify_core(&e, msg)
    }
}

fn classify_core(e: &Error, msg: String) -> CliError {
    match e {
        Error::DegenerateConfiguration
        | Error::InPlanePairDirection(_)
        | Error::NonFinite(_)
        | Error::ZeroNormal => CliError::Numerical(msg),
        _ => CliError::Input(msg),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn load_landmarks(path: &Path) -> Result<(LandmarkSet, String), CliError> {
    let text = read_file(path)?;
    let set = io::parse_landmark_set(&text)?;
    Ok((set, io::digest_hex(text.as_bytes())))
}

fn print_plane(plane: &Plane) {
    let n = plane.normal();
    println!(
        "plane: normal = ({:+.6}, {:+.6}, {:+.6}), offset = {:+.4} mm",
        n.x,
        n.y,
        n.z,
        plane.offset()
    );
}

fn check_convergence(diag: &midplane::FitDiagnostics) -> Result<(), CliError> {
    // A stalled line search means the objective cannot be improved at f64
    // resolution; only an exhausted iteration budget counts as failure.
    if !diag.converged && !diag.stalled {
        return Err(CliError::Numerical(format!(
            "plane fit did not converge within {} iterations (gradient norm {:.3e})",
            diag.iterations, diag.final_gradient_norm
        )));
    }
    Ok(())
}

fn cmd_rank(landmarks: &Path, min_points: usize, json: bool) -> Result<(), CliError> {
    let (set, _) = load_landmarks(landmarks)?;
    let severity = midplane::classify_severity(&set)?;
    let trace = rank_landmarks(&set, min_points)?;
    let selection = select_system(&trace, &SelectionConfig::default())?;

    if json {
        #[derive(serde::Serialize)]
        struct Stage<'a> {
            stage: usize,
            removed: Option<&'a midplane::DroppableUnit>,
            mean_t: Option<f64>,
            variance: Option<f64>,
            skewness: Option<f64>,
        }
        let stages: Vec<Stage> = trace
            .stage_systems
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let stats = selection.stage_stats.iter().find(|s| s.stage_index == k);
                Stage {
                    stage: k,
                    removed: (k > 0).then(|| &trace.elimination_order[k - 1]),
                    mean_t: stats.map(|s| s.mean),
                    variance: stats.map(|s| s.variance),
                    skewness: stats.map(|s| s.skewness),
                }
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "severity": severity,
                "selected_stage": selection.selected_stage,
                "stages": stages,
            }))
            .expect("trace serializes")
        );
    } else {
        println!("severity: {severity}");
        println!("stage  removed            mean T      variance    skewness");
        for (k, _) in trace.stage_systems.iter().enumerate() {
            let removed = if k > 0 {
                trace.elimination_order[k - 1].to_string()
            } else {
                "-".to_string()
            };
            match selection.stage_stats.iter().find(|s| s.stage_index == k) {
                Some(s) => println!(
                    "{k:>5}  {removed:<18} {:>9.6}  {:>10.3e}  {:>9.4}",
                    s.mean, s.variance, s.skewness
                ),
                None => println!("{k:>5}  {removed:<18} (unscored)"),
            }
        }
        println!(
            "selected stage: {} ({} outliers dropped)",
            selection.selected_stage,
            selection.dropped_outliers.len()
        );
    }
    if let Some(w) = &selection.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    landmarks: &Path,
    options: &FitOptions,
    no_drop: bool,
    report_path: Option<&Path>,
    plane_path: Option<&Path>,
) -> Result<(), CliError> {
    let (set, digest) = load_landmarks(landmarks)?;
    let config = options.config();

    let (plane, report) = if no_drop {
        let (plane, diag) = fit_without_dropping(&set, &config)?;
        check_convergence(&diag)?;
        println!("severity: {}", midplane::classify_severity(&set)?);
        println!("outliers: none (dropping disabled)");
        print_plane(&plane);
        println!(
            "fit: {} iterations, objective {:.6e}, gradient {:.3e}",
            diag.iterations, diag.final_objective, diag.final_gradient_norm
        );
        (plane, None)
    } else {
        let outcome = run_pipeline(&set, &config, options.min_points)?;
        check_convergence(&outcome.diagnostics)?;
        println!("severity: {}", outcome.severity);
        println!(
            "outliers dropped ({}): {}",
            outcome.selection.dropped_outliers.len(),
            outcome
                .selection
                .dropped_outliers
                .iter()
                .map(|u| u.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
        print_plane(&outcome.plane);
        println!(
            "fit: {} iterations, objective {:.6e}, gradient {:.3e}",
            outcome.diagnostics.iterations,
            outcome.diagnostics.final_objective,
            outcome.diagnostics.final_gradient_norm
        );
        if let Some(w) = &outcome.selection.warning {
            eprintln!("warning: {w}");
        }
        let report = io::RunReport::from_outcome(digest, &outcome, None);
        (outcome.plane, Some(report))
    };

    if let Some(path) = plane_path {
        write_file(path, &io::write_plane(&plane))?;
    }
    if let Some(path) = report_path {
        match &report {
            Some(r) => write_file(path, &io::write_report(r))?,
            None => {
                return Err(CliError::Input(
                    "--report requires outlier dropping; rerun without --no-drop".into(),
                ))
            }
        }
    }
    Ok(())
}

fn cmd_synth(
    subjects: usize,
    kinds: &[KindArg],
    side: SideArg,
    noise_sd: f64,
    seed: u64,
    magnitude: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    if subjects == 0 {
        return Err(CliError::Input("--subjects must be at least 1".into()));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(CliError::Input("--noise-sd must be non-negative".into()));
    }
    let templates: Vec<DeformitySpec> = kinds
        .iter()
        .map(|&k| {
            let mut t = DeformitySpec::default_for(k.into(), side.into());
            if let Some(m) = magnitude {
                t.magnitude_mm = m;
            }
            t
        })
        .collect();
    let cases = synth::generate_cases(subjects, &templates, noise_sd, seed)?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    for case in &cases {
        let name = format!("subject{:02}_{}.case.json", case.subject, case.spec.kind);
        write_file(&out.join(name), &io::write_case(case))?;
    }
    println!(
        "wrote {} cases ({} subjects x {} kinds) to {}",
        cases.len(),
        subjects,
        templates.len(),
        out.display()
    );
    Ok(())
}

fn cmd_validate(case_dir: &Path, options: &FitOptions, no_drop: bool) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(case_dir)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", case_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".case.json")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Input(format!(
            "no .case.json files in {}",
            case_dir.display()
        )));
    }

    let config = options.config();
    println!("case                                        theta    DistN   DistU1   DistPg  pass");
    let mut all_pass = true;
    let mut failures = 0usize;
    for path in &paths {
        let case = io::parse_case(&read_file(path)?)?;
        let label = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let fitted = if no_drop {
            fit_without_dropping(&case.deformed, &config).map(|(p, _)| p)
        } else {
            run_pipeline(&case.deformed, &config, options.min_points).map(|o| {
                if let Some(w) = &o.selection.warning {
                    eprintln!("warning [{label}]: {w}");
                }
                o.plane
            })
        };
        match fitted.and_then(|plane| case.outcome_metrics(&plane)) {
            Ok(m) => {
                all_pass &= m.pass;
                println!(
                    "{label:<42} {:>7.3} {:>8.3} {:>8.3} {:>8.3}  {}",
                    m.theta_degrees,
                    m.dist_n_mm,
                    m.dist_u1_mm,
                    m.dist_pg_mm,
                    if m.pass { "yes" } else { "NO" }
                );
            }
            Err(e) => {
                failures += 1;
                all_pass = false;
                println!("{label:<42} failed: {e}");
            }
        }
    }
    println!(
        "{} cases, all pass: {}",
        paths.len(),
        if all_pass { "yes" } else { "no" }
    );
    if failures > 0 {
        return Err(CliError::Numerical(format!(
            "{failures} case(s) failed to produce a plane"
        )));
    }
    Ok(())
}

fn cmd_pipeline(
    landmarks: &Path,
    ground_truth: &Path,
    reference: Option<&Path>,
    options: &FitOptions,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let (set, digest) = load_landmarks(landmarks)?;
    let gt_plane = io::parse_plane(&read_file(ground_truth)?)?;
    let reference_set = match reference {
        Some(path) => load_landmarks(path)?.0,
        None => set.clone(),
    };

    let config = options.config();
    let outcome = run_pipeline(&set, &config, options.min_points)?;
    check_convergence(&outcome.diagnostics)?;
    let metrics = outcome_metrics(&outcome.plane, &reference_set, &gt_plane)?;

    println!("severity: {}", outcome.severity);
    println!(
        "outliers dropped ({}): {}",
        outcome.selection.dropped_outliers.len(),
        outcome
            .selection
            .dropped_outliers
            .iter()
            .map(|u| u.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    print_plane(&outcome.plane);
    println!(
        "theta = {:.4} deg, DistN = {:.4} mm, DistU1 = {:.4} mm, DistPg = {:.4} mm -> {}",
        metrics.theta_degrees,
        metrics.dist_n_mm,
        metrics.dist_u1_mm,
        metrics.dist_pg_mm,
        if metrics.pass {
            "clinically acceptable"
        } else {
            "NOT clinically acceptable"
        }
    );
    if let Some(w) = &outcome.selection.warning {
        eprintln!("warning: {w}");
    }
    if let Some(path) = report_path {
        let report = io::RunReport::from_outcome(digest, &outcome, Some(metrics));
        write_file(path, &io::write_report(&report))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Rank {
            landmarks,
            min_points,
            json,
        } => cmd_rank(landmarks, *min_points, *json),
        Command::Fit {
            landmarks,
            options,
            no_drop,
            report,
            plane,
        } => cmd_fit(landmarks, options, *no_drop, report.as_deref(), plane.as_deref()),
        Command::Synth {
            subjects,
            kinds,
            side,
            noise_sd,
            seed,
            magnitude,
            out,
        } => cmd_synth(*subjects, kinds, *side, *noise_sd, *seed, *magnitude, out),
        Command::Validate {
            case_dir,
            options,
            no_drop,
        } => cmd_validate(case_dir, options, *no_drop),
        Command::Pipeline {
            landmarks,
            ground_truth,
            reference,
            options,
            report,
        } => cmd_pipeline(
            landmarks,
            ground_truth,
            reference.as_deref(),
            options,
            report.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

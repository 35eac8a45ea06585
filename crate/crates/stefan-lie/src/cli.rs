//! Command-line surface: load a problem file, run one stage or the whole
//! chain, and write machine-readable artifacts.
//!
//! Subcommands nest: `classify` stops after the diffusivity classification,
//! `check` after the invariance verdicts, `reduce` after building the
//! reduced problems, `solve` after shooting, `validate` after independent
//! validation, and `pipeline` runs everything including the classification
//! detail.  Every run writes `summary.json` into the output directory
//! (flag `--out-dir`, else `STEFAN_LIE_OUTDIR`, else the working
//! directory); repeated runs with identical inputs and configuration
//! produce byte-identical summaries.  CSV artifacts use `,` delimiters,
//! `.` decimal points, a header row, and LF line endings.
//!
//! Exit codes: 0 success; 1 input or configuration problem; 2 no admitted
//! symmetry (or none with a reduction rule); 3 solver non-convergence;
//! 4 validation failure.  Failures short-circuit but still write the
//! summary, with the failing stage and a machine-readable code recorded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::problem::{load_problem, CanonicalProblem, Coef, Coef2, ProblemError};
use crate::reduction::{reduce, ReducedBVP, ReducedKind, ReductionError};
use crate::solver::{solve, ShootingConfig, SolutionResult, SolverError};
use crate::symmetry::{
    admitted_symmetries, classify_mai, diffusivity_class, AdmissionResult, AdmittedForm,
    MaiCase, SymmetryError,
};
use crate::validate::{
    validate_solution, ValidateConfig, ValidateError, ValidationReport,
};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "stefan-lie", version, about = "Symmetry toolkit for two-phase free-boundary problems", disable_help_subcommand = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Classify the diffusivity pair and print the admitted algebra of the
    /// decoupled equations.
    Classify(StageArgs),
    /// Check boundary-value invariance of every candidate operator.
    Check(StageArgs),
    /// Build the reduced free-parameter problem for each admitted operator.
    Reduce(StageArgs),
    /// Reduce and solve, writing profile CSVs.
    Solve(SolveArgs),
    /// Solve and validate the reconstruction independently.
    Validate(FullArgs),
    /// Run every stage and write a combined summary.
    Pipeline(FullArgs),
}

#[derive(Args)]
pub struct StageArgs {
    /// Problem file: JSON with a `canonical` or `physical` block.
    pub problem: PathBuf,
    /// Output directory (default: $STEFAN_LIE_OUTDIR, else `.`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Print the summary JSON to stdout instead of the table view.
    #[arg(long)]
    pub json: bool,
    /// Also write tabular views (classification, verdicts) as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Boundary-residual tolerance of the shooting solver.
    #[arg(long)]
    pub root_tol: Option<f64>,
    /// Relative tolerance of the profile integrator.
    #[arg(long)]
    pub ode_rtol: Option<f64>,
    /// Absolute tolerance of the profile integrator.
    #[arg(long)]
    pub ode_atol: Option<f64>,
    /// Warm start for the two free parameters, written `a,b`.
    #[arg(long, value_parser = parse_pair)]
    pub guess: Option<(f64, f64)>,
    /// Points per profile CSV.
    #[arg(long, default_value_t = 201)]
    pub rows: usize,
}

#[derive(Args)]
pub struct FullArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Acceptance threshold for the finite-difference residual scan.
    #[arg(long)]
    pub residual_tol: Option<f64>,
    /// Acceptance threshold for the tracked-front relative error.
    #[arg(long)]
    pub front_rel_tol: Option<f64>,
    /// Start time of the front-tracking run.
    #[arg(long)]
    pub t0: Option<f64>,
    /// End time of the front-tracking run.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Liquid-strip cell count of the tracker.
    #[arg(long)]
    pub melt_cells: Option<usize>,
    /// Solid-strip cell count of the tracker.
    #[arg(long)]
    pub solid_cells: Option<usize>,
    /// Output rows of the tracker.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Truncation coordinate of the solid strip (default: auto-scan).
    #[arg(long)]
    pub x_far: Option<f64>,
    /// Also run the grid-refinement study (doubles the tracker cells).
    #[arg(long)]
    pub convergence: bool,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `a,b`, got `{s}`"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad number `{}`: {e}", t.trim()))
    };
    Ok((parse(a)?, parse(b)?))
}

// ---------------------------------------------------------------------------
// Summary schema
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ToolInfo {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct ResolvedConfig {
    subcommand: &'static str,
    problem: String,
    out_dir: String,
    json: bool,
    csv: bool,
    rows: usize,
    shooting: ShootingConfig,
    validation: Option<ValidateConfig>,
    convergence: bool,
}

#[derive(Serialize)]
struct CanonicalEcho {
    d1: String,
    d2: String,
    rho1: String,
    rho2: String,
    qhat: String,
    hhat: String,
    u_m: f64,
    v_m: f64,
    v_inf: f64,
    l_v: f64,
    l_m: f64,
    u_range: (f64, f64),
    v_range: (f64, f64),
}

#[derive(Serialize)]
struct ProblemEcho {
    source: &'static str,
    /// Heat-capacity substitution applied to a physical input.
    transformed: bool,
    canonical: CanonicalEcho,
}

#[derive(Serialize)]
struct ClassificationSummary {
    d1_class: String,
    d2_class: String,
    /// Both diffusivities constant: linear pair, outside the classification.
    linear_pair: bool,
    case: Option<MaiCase>,
    table_row: Option<u8>,
    dim: Option<usize>,
    basis: Vec<String>,
    infinite_family: Option<String>,
}

#[derive(Serialize)]
struct ReductionSummary {
    operator: String,
    kind: ReducedKind,
    invariant_variable: String,
    parameters: [String; 2],
    description: String,
}

#[derive(Serialize)]
struct SolutionSummary {
    operator: String,
    parameters: [String; 2],
    values: [f64; 2],
    residuals: crate::solver::ResidualNorms,
    diagnostics: crate::solver::Diagnostics,
}

#[derive(Serialize)]
struct ValidationSummary {
    operator: String,
    report: ValidationReport,
}

#[derive(Serialize, Clone)]
struct FailureNote {
    stage: &'static str,
    code: String,
    message: String,
}

#[derive(Serialize)]
struct Summary {
    schema_version: u32,
    tool: ToolInfo,
    config: ResolvedConfig,
    problem: Option<ProblemEcho>,
    classification: Option<ClassificationSummary>,
    admission: Option<AdmissionResult>,
    reductions: Vec<ReductionSummary>,
    solutions: Vec<SolutionSummary>,
    validations: Vec<ValidationSummary>,
    failure: Option<FailureNote>,
    artifacts: Vec<String>,
}

// ---------------------------------------------------------------------------
// Error codes
// ---------------------------------------------------------------------------

struct Failure {
    note: FailureNote,
    exit: i32,
}

fn fail(stage: &'static str, code: &str, message: String, exit: i32) -> Failure {
    Failure { note: FailureNote { stage, code: code.into(), message }, exit }
}

fn problem_code(e: &ProblemError) -> &'static str {
    match e {
        ProblemError::Parse { .. } => "parse_error",
        ProblemError::Invalid { .. } => "invalid_problem",
        ProblemError::Io(_) => "io_error",
        ProblemError::Json(_) => "malformed_json",
        ProblemError::Numeric(_) => "numeric_error",
    }
}

fn symmetry_code(e: &SymmetryError) -> &'static str {
    match e {
        SymmetryError::LinearSystem => "linear_system",
        SymmetryError::Classify(_) => "classification_failed",
        SymmetryError::Numeric(_) => "numeric_error",
    }
}

fn reduction_code(e: &ReductionError) -> &'static str {
    match e {
        ReductionError::NotAdmitted { .. } => "not_admitted",
        ReductionError::NoReduction(_) => "no_reduction_rule",
        ReductionError::NonPositiveTime(_) => "non_positive_time",
        ReductionError::OutsideDomain { .. } => "outside_domain",
        ReductionError::Numeric(_) => "numeric_error",
    }
}

fn solver_code(e: &SolverError) -> &'static str {
    match e {
        SolverError::WrongKind { .. } => "wrong_kind",
        SolverError::NonMonotoneVelocityLaw { .. } => "non_monotone_velocity",
        SolverError::NoBracket { .. } => "no_bracket",
        SolverError::NonPositiveGap(_) => "non_positive_gap",
        SolverError::FoldedProfile => "folded_profile",
        SolverError::NewtonDiverged { .. } => "newton_diverged",
        SolverError::FrontOrdering => "front_ordering",
        SolverError::FarFieldCap(_) => "far_field_cap",
        SolverError::Config(_) => "bad_config",
        SolverError::Numeric(_) => "numeric_error",
        SolverError::Ode(_) => "ode_error",
    }
}

fn validate_code(e: &ValidateError) -> &'static str {
    match e {
        ValidateError::NonConstantDiffusivity(_) => "non_constant_diffusivity",
        ValidateError::Degenerate(_) => "degenerate_profiles",
        ValidateError::NonPositiveTime(_) => "non_positive_time",
        ValidateError::GridTouchesFront { .. } => "grid_touches_front",
        ValidateError::Grid(_) => "bad_grid",
        ValidateError::FrontCrossing { .. } => "front_crossing",
        ValidateError::Truncation { .. } => "truncation_reached",
        ValidateError::Stiffness { .. } => "step_collapse",
        ValidateError::NonFinite { .. } => "non_finite",
        ValidateError::Solver(_) => "solver_error",
        ValidateError::Numeric(_) => "numeric_error",
    }
}

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

fn coef_text(c: &Coef) -> String {
    match c {
        Coef::Expr { expr, .. } => expr.to_string(),
        Coef::Fn { label, .. } => format!("<fn {label}>"),
    }
}

fn coef2_text(c: &Coef2) -> String {
    match c {
        Coef2::Expr(expr) => expr.to_string(),
        Coef2::Fn { label, .. } => format!("<fn {label}>"),
    }
}

fn echo_problem(p: &CanonicalProblem, transformed: bool) -> ProblemEcho {
    ProblemEcho {
        source: if transformed { "physical" } else { "canonical" },
        transformed,
        canonical: CanonicalEcho {
            d1: coef_text(&p.d1),
            d2: coef_text(&p.d2),
            rho1: coef_text(&p.rho1),
            rho2: coef_text(&p.rho2),
            qhat: coef2_text(&p.qhat),
            hhat: coef2_text(&p.hhat),
            u_m: p.u_m,
            v_m: p.v_m,
            v_inf: p.v_inf,
            l_v: p.l_v,
            l_m: p.l_m,
            u_range: p.u_range,
            v_range: p.v_range,
        },
    }
}

fn form_tag(form: &AdmittedForm) -> String {
    match form {
        AdmittedForm::X1Family => "wave".into(),
        AdmittedForm::X2 => "similarity".into(),
        AdmittedForm::Unexpected { label } => {
            let slug: String = label
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
                .collect();
            format!("extension_{slug}")
        }
    }
}

fn form_name(form: &AdmittedForm) -> String {
    match form {
        AdmittedForm::X1Family => "time translation + wave advection (speed free)".into(),
        AdmittedForm::X2 => "dilation".into(),
        AdmittedForm::Unexpected { label } => format!("extension {label}"),
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn resolve_out_dir(flag: Option<PathBuf>, env: Option<std::ffi::OsString>) -> PathBuf {
    flag.or_else(|| env.map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Parse real argv and run; the returned code is the process exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outputs, not usage errors.
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if ok { 0 } else { 1 };
        }
    };
    run(cli)
}

struct Ctx {
    summary: Summary,
    human: String,
    out_dir: PathBuf,
    print_json: bool,
    csv: bool,
    rows: usize,
    shooting: ShootingConfig,
    validation: Option<ValidateConfig>,
    convergence_band: Option<(f64, f64)>,
}

pub fn run(cli: Cli) -> i32 {
    let (stage_args, solve_args, full_args, subcommand) = match &cli.command {
        Command::Classify(a) => (a, None, None, "classify"),
        Command::Check(a) => (a, None, None, "check"),
        Command::Reduce(a) => (a, None, None, "reduce"),
        Command::Solve(s) => (&s.stage, Some(s), None, "solve"),
        Command::Validate(f) => (&f.solve.stage, Some(&f.solve), Some(f), "validate"),
        Command::Pipeline(f) => (&f.solve.stage, Some(&f.solve), Some(f), "pipeline"),
    };

    let mut shooting = ShootingConfig::default();
    let rows = solve_args.map_or(201, |s| s.rows);
    if let Some(s) = solve_args {
        if let Some(v) = s.root_tol {
            shooting.root_tol = v;
        }
        if let Some(v) = s.ode_rtol {
            shooting.ode_rtol = v;
        }
        if let Some(v) = s.ode_atol {
            shooting.ode_atol = v;
        }
        if let Some((a, b)) = s.guess {
            shooting.guess = Some([a, b]);
        }
    }

    let mut convergence_band = None;
    let validation = full_args.map(|f| {
        let mut cfg = ValidateConfig::default();
        if let Some(v) = f.residual_tol {
            cfg.residual_tol = v;
        }
        if let Some(v) = f.front_rel_tol {
            cfg.front_rel_tol = v;
        }
        if let Some(v) = f.t0 {
            cfg.t0 = v;
        }
        if let Some(v) = f.t_end {
            cfg.t_end = v;
        }
        if let Some(v) = f.melt_cells {
            cfg.track.melt_cells = v;
        }
        if let Some(v) = f.solid_cells {
            cfg.track.solid_cells = v;
        }
        if let Some(v) = f.samples {
            cfg.track.samples = v;
        }
        if let Some(v) = f.x_far {
            cfg.track.x_far = Some(v);
        }
        if f.convergence {
            cfg.convergence_band = Some((3.5, 4.5));
            convergence_band = cfg.convergence_band;
        }
        cfg
    });

    let out_dir = resolve_out_dir(stage_args.out_dir.clone(), std::env::var_os("STEFAN_LIE_OUTDIR"));

    let mut ctx = Ctx {
        summary: Summary {
            schema_version: SCHEMA_VERSION,
            tool: ToolInfo { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") },
            config: ResolvedConfig {
                subcommand,
                problem: stage_args.problem.display().to_string(),
                out_dir: out_dir.display().to_string(),
                json: stage_args.json,
                csv: stage_args.csv,
                rows,
                shooting: shooting.clone(),
                validation: validation.clone(),
                convergence: convergence_band.is_some(),
            },
            problem: None,
            classification: None,
            admission: None,
            reductions: Vec::new(),
            solutions: Vec::new(),
            validations: Vec::new(),
            failure: None,
            artifacts: Vec::new(),
        },
        human: String::new(),
        out_dir,
        print_json: stage_args.json,
        csv: stage_args.csv,
        rows,
        shooting,
        validation,
        convergence_band,
    };

    let code = match execute(&mut ctx, &stage_args.problem, subcommand) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error [stage {}, code {}]: {}", f.note.stage, f.note.code, f.note.message);
            ctx.summary.failure = Some(f.note);
            f.exit
        }
    };

    // The summary is written even after a failure; a write problem only
    // degrades the exit code when the run itself was clean.
    let json = serde_json::to_string_pretty(&ctx.summary).expect("summary serializes") + "\n";
    if let Err(e) = std::fs::create_dir_all(&ctx.out_dir)
        .and_then(|_| std::fs::write(ctx.out_dir.join("summary.json"), &json))
    {
        eprintln!("error [stage artifact, code io_error]: cannot write summary: {e}");
        return if code == 0 { 1 } else { code };
    }
    if ctx.print_json {
        print!("{json}");
    } else {
        print!("{}", ctx.human);
    }
    code
}

fn execute(ctx: &mut Ctx, problem_path: &Path, subcommand: &'static str) -> Result<(), Failure> {
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| {
        fail("artifact", "io_error", format!("cannot create output directory: {e}"), 1)
    })?;

    let input = load_problem(problem_path)
        .map_err(|e| fail("load", problem_code(&e), e.to_string(), 1))?;
    let (p, maps) = input
        .into_canonical()
        .map_err(|e| fail("load", problem_code(&e), e.to_string(), 1))?;
    let transformed = maps.is_some();
    ctx.summary.problem = Some(echo_problem(&p, transformed));
    let _ = writeln!(
        ctx.human,
        "problem: {} ({}{})",
        problem_path.display(),
        if transformed { "physical" } else { "canonical" },
        if transformed { ", substitution applied" } else { "" },
    );

    if matches!(subcommand, "classify" | "pipeline") {
        stage_classify(ctx, &p)?;
        if subcommand == "classify" {
            return Ok(());
        }
    }

    let admission = stage_admission(ctx, &p, subcommand == "check")?;
    if subcommand == "check" {
        return Ok(());
    }

    let reduced = stage_reduce(ctx, &p, &admission)?;
    if subcommand == "reduce" {
        return Ok(());
    }

    let solved = stage_solve(ctx, &reduced)?;
    if subcommand == "solve" {
        return Ok(());
    }

    stage_validate(ctx, &p, &solved)
}

fn stage_classify(ctx: &mut Ctx, p: &CanonicalProblem) -> Result<(), Failure> {
    let c1 = diffusivity_class(&p.d1, p.u_range)
        .map_err(|e| fail("classify", symmetry_code(&e), e.to_string(), 1))?;
    let c2 = diffusivity_class(&p.d2, p.v_range)
        .map_err(|e| fail("classify", symmetry_code(&e), e.to_string(), 1))?;
    let family = match classify_mai(&c1, &c2) {
        Ok(f) => Some(f),
        Err(SymmetryError::LinearSystem) => None,
        Err(e) => return Err(fail("classify", symmetry_code(&e), e.to_string(), 1)),
    };

    let _ = writeln!(ctx.human, "d1: {}, d2: {}", c1.label(), c2.label());
    let summary = match &family {
        None => {
            let _ = writeln!(
                ctx.human,
                "classification: linear pair (both constant), outside the nonlinear table"
            );
            ClassificationSummary {
                d1_class: c1.label(),
                d2_class: c2.label(),
                linear_pair: true,
                case: None,
                table_row: None,
                dim: None,
                basis: Vec::new(),
                infinite_family: None,
            }
        }
        Some(f) => {
            let _ = writeln!(
                ctx.human,
                "classification: row {}, dimension {}{}",
                f.case.table_row(),
                f.dim(),
                if f.infinite_family.is_some() { " plus an infinite family" } else { "" },
            );
            for op in &f.basis {
                let _ = writeln!(ctx.human, "  {op}");
            }
            if let Some(fam) = &f.infinite_family {
                let _ = writeln!(ctx.human, "  {}", fam.description());
            }
            ClassificationSummary {
                d1_class: c1.label(),
                d2_class: c2.label(),
                linear_pair: false,
                case: Some(f.case.clone()),
                table_row: Some(f.case.table_row()),
                dim: Some(f.dim()),
                basis: f.basis.iter().map(|op| op.to_string()).collect(),
                infinite_family: f.infinite_family.as_ref().map(|x| x.description()),
            }
        }
    };
    ctx.summary.classification = Some(summary);

    if ctx.csv {
        if let Some(f) = &family {
            let rows: Vec<Vec<String>> = f
                .basis
                .iter()
                .map(|op| {
                    vec![
                        op.to_string(),
                        op.xi0.to_string(),
                        op.xi1.to_string(),
                        op.eta_u.to_string(),
                        op.eta_v.to_string(),
                    ]
                })
                .collect();
            write_artifact(
                ctx,
                "classification.csv",
                &csv_text(&["operator", "xi0", "xi1", "eta_u", "eta_v"], &rows),
            )?;
        }
    }
    Ok(())
}

fn stage_admission(
    ctx: &mut Ctx,
    p: &CanonicalProblem,
    print_table: bool,
) -> Result<AdmissionResult, Failure> {
    let result = admitted_symmetries(p)
        .map_err(|e| fail("admission", symmetry_code(&e), e.to_string(), 1))?;

    if print_table {
        let _ = writeln!(
            ctx.human,
            "{:<28} {:<4} {:<44} {:<7} residual",
            "operator", "item", "condition", "verdict"
        );
        let reports = result
            .admitted
            .iter()
            .map(|a| &a.report)
            .chain(result.rejected.iter().filter_map(|r| r.report.as_ref()));
        for report in reports {
            for v in &report.verdicts {
                let _ = writeln!(
                    ctx.human,
                    "{:<28} {:<4} {:<44} {:<7} {:.3e}",
                    report.operator,
                    v.item.to_string(),
                    v.condition,
                    if v.passed { "pass" } else { "FAIL" },
                    v.residual.max_abs,
                );
            }
        }
        for r in result.rejected.iter().filter(|r| r.report.is_none()) {
            let _ = writeln!(ctx.human, "{:<28} rejected: {:?}", r.operator, r.reason);
        }
    }
    for a in &result.admitted {
        let _ = writeln!(
            ctx.human,
            "admitted: {} where {}",
            form_name(&a.form),
            a.restriction
        );
    }
    if result.admitted.is_empty() {
        let _ = writeln!(ctx.human, "no operator admitted");
    }

    if ctx.csv {
        let mut rows = Vec::new();
        let reports = result
            .admitted
            .iter()
            .map(|a| &a.report)
            .chain(result.rejected.iter().filter_map(|r| r.report.as_ref()));
        for report in reports {
            for v in &report.verdicts {
                rows.push(vec![
                    report.operator.clone(),
                    v.item.to_string(),
                    v.condition.clone(),
                    if v.passed { "pass" } else { "fail" }.into(),
                    num(v.residual.max_abs),
                ]);
            }
        }
        write_artifact(
            ctx,
            "conditions.csv",
            &csv_text(&["operator", "item", "condition", "verdict", "residual"], &rows),
        )?;
    }

    ctx.summary.admission = Some(result.clone());
    if result.admitted.is_empty() {
        return Err(fail(
            "admission",
            "no_admitted_symmetry",
            "no candidate operator passes the invariance conditions; see the rejection table".into(),
            2,
        ));
    }
    Ok(result)
}

fn stage_reduce(
    ctx: &mut Ctx,
    p: &CanonicalProblem,
    admission: &AdmissionResult,
) -> Result<Vec<(AdmittedForm, ReducedBVP)>, Failure> {
    let mut out = Vec::new();
    let mut first_err: Option<(ReductionError, AdmittedForm)> = None;
    for a in &admission.admitted {
        match reduce(p, &a.form) {
            Ok(r) => {
                let labels = r.parameter_labels();
                ctx.summary.reductions.push(ReductionSummary {
                    operator: form_tag(&a.form),
                    kind: r.kind,
                    invariant_variable: r.invariant_variable().into(),
                    parameters: [labels[0].into(), labels[1].into()],
                    description: r.describe(),
                });
                let _ = writeln!(ctx.human, "reduction [{}]: {}", form_tag(&a.form), r.describe());
                out.push((a.form.clone(), r));
            }
            Err(e) => {
                let _ = writeln!(
                    ctx.human,
                    "reduction [{}] unavailable: {e}",
                    form_tag(&a.form)
                );
                if first_err.is_none() {
                    first_err = Some((e, a.form.clone()));
                }
            }
        }
    }
    if out.is_empty() {
        let (e, _) = first_err.expect("admitted operators exist");
        return Err(fail("reduce", reduction_code(&e), e.to_string(), 2));
    }
    Ok(out)
}

fn stage_solve(
    ctx: &mut Ctx,
    reduced: &[(AdmittedForm, ReducedBVP)],
) -> Result<Vec<(AdmittedForm, ReducedBVP, SolutionResult)>, Failure> {
    let mut out = Vec::new();
    let mut first_err: Option<SolverError> = None;
    for (form, r) in reduced {
        let tag = form_tag(form);
        match solve(r, &ctx.shooting) {
            Ok(sol) => {
                let labels = r.parameter_labels();
                let vals = sol.params();
                let _ = writeln!(
                    ctx.human,
                    "solved [{tag}]: {} = {:.12}, {} = {:.12}; max boundary residual {:.3e}; method {}{}",
                    labels[0],
                    vals[0],
                    labels[1],
                    vals[1],
                    sol.residuals.max_boundary(),
                    sol.diagnostics.method,
                    if sol.diagnostics.stationary_front { " (stationary front)" } else { "" },
                );
                ctx.summary.solutions.push(SolutionSummary {
                    operator: tag.clone(),
                    parameters: [labels[0].into(), labels[1].into()],
                    values: vals,
                    residuals: sol.residuals.clone(),
                    diagnostics: sol.diagnostics.clone(),
                });
                let inv = r.invariant_variable();
                for (phase, profile, value_name) in
                    [("liquid", &sol.reduced.u, "u"), ("solid", &sol.reduced.v, "v")]
                {
                    // The profile sampler counts panels; the flag counts rows.
                    let rows: Vec<Vec<String>> = profile
                        .rows(ctx.rows.saturating_sub(1).max(1))
                        .into_iter()
                        .map(|[s, w, g]| vec![num(s), num(w), num(g)])
                        .collect();
                    write_artifact(
                        ctx,
                        &format!("profile_{tag}_{phase}.csv"),
                        &csv_text(&[inv, value_name, "flux"], &rows),
                    )?;
                }
                out.push((form.clone(), r.clone(), sol));
            }
            Err(e) => {
                let _ = writeln!(ctx.human, "solve [{tag}] failed: {e}");
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if out.is_empty() {
        let e = first_err.expect("reduced problems exist");
        return Err(fail("solve", solver_code(&e), e.to_string(), 3));
    }
    Ok(out)
}

fn stage_validate(
    ctx: &mut Ctx,
    p: &CanonicalProblem,
    solved: &[(AdmittedForm, ReducedBVP, SolutionResult)],
) -> Result<(), Failure> {
    let base_cfg = ctx.validation.clone().expect("validate stages carry a config");
    let mut failed: Option<Failure> = None;
    for (form, r, sol) in solved {
        let tag = form_tag(form);
        let mut cfg = base_cfg.clone();
        cfg.convergence_band = ctx.convergence_band;
        let report = match validate_solution(p, r, &sol.reduced, &cfg) {
            Ok(rep) => rep,
            Err(e) => {
                let _ = writeln!(ctx.human, "validation [{tag}] failed to run: {e}");
                if failed.is_none() {
                    failed = Some(fail("validate", validate_code(&e), e.to_string(), 4));
                }
                continue;
            }
        };

        let _ = writeln!(
            ctx.human,
            "validation [{tag}]: {} (pde residual {:.3e}/{:.3e}, front error {:.3}%, far field {:.3e})",
            if report.passed { "passed" } else { "FAILED" },
            report.pde_residual_liquid,
            report.pde_residual_solid,
            100.0 * report.max_front_rel_error,
            report.far_field_value,
        );
        for c in report.checks.iter().filter(|c| !c.passed) {
            let _ = writeln!(
                ctx.human,
                "  failed check {}: measured {:.6e}, threshold {:.3e}",
                c.name, c.measured, c.threshold
            );
        }

        let report_json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write_artifact(ctx, &format!("validation_{tag}.json"), &report_json)?;

        let (derived, derive): (&str, Box<dyn Fn(&crate::validate::FrontSample) -> f64>) =
            match r.kind {
                ReducedKind::TravelingWave => {
                    let mu = sol.params()[0];
                    ("s2_minus_mu_t", Box::new(move |s| s.s2 - mu * s.t))
                }
                ReducedKind::SelfSimilar => ("s2_over_sqrt_t", Box::new(|s| s.s2 / s.t.sqrt())),
            };
        let rows: Vec<Vec<String>> = report
            .front
            .iter()
            .map(|s| vec![num(s.t), num(s.s1), num(s.s2), num(derive(s))])
            .collect();
        write_artifact(
            ctx,
            &format!("front_{tag}.csv"),
            &csv_text(&["t", "s1", "s2", derived], &rows),
        )?;

        let passed = report.passed;
        ctx.summary.validations.push(ValidationSummary { operator: tag.clone(), report });
        if !passed && failed.is_none() {
            failed = Some(fail(
                "validate",
                "checks_failed",
                format!("validation checks failed for [{tag}]; see the report"),
                4,
            ));
        }
    }
    match failed {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn write_artifact(ctx: &mut Ctx, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::write(ctx.out_dir.join(name), text)
        .map_err(|e| fail("artifact", "io_error", format!("cannot write {name}: {e}"), 1))?;
    ctx.summary.artifacts.push(name.to_string());
    Ok(())
}

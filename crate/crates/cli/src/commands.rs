//! One function per subcommand. Each returns a JSON summary plus the files to write.

use std::fmt;

use clap::ValueEnum;
use halfline_isp::domain::matrix_from_rows;
use halfline_isp::example_e1::{
    e1_invert_transforms, e1_roundtrip, e1_scattering, e1_split_with, E1Boundary, E1Profiles, E1System, Family,
    RecoveredProfile, SGrid,
};
use halfline_isp::forward::{
    assemble_ah, kernel_transforms, scattering_matrix, solve_to_kernels_with, strip_diagnostics, strip_widths,
    transmission_matrix, BlockTransforms, TOKernels,
};
use halfline_isp::rh::{
    plemelj_split_exact, plemelj_split_with, recover_blocks, solvability_report, solve_regular_rh_with, RhOptions,
    RhSolution,
};
use halfline_isp::spectral::CauchyProjector;
use halfline_isp::{
    theta_exponent, validate_potential, Analyticity, BoundaryMatrix, Dispersion, ExpTerm, IspError, LineMatrixFunction,
    MCanonicalPotential, ScalarProfile, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ConfigError, E1Spec, FunctionSource, RunConfig};
use crate::output::{kernels_csv, line_function_csv, parse_line_function_csv, profiles_csv, quadrant_csv, Artifacts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Forward,
    Split,
    RhSolve,
    RecoverBlocks,
    E1Forward,
    E1Roundtrip,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Forward => "forward",
            Command::Split => "split",
            Command::RhSolve => "rh-solve",
            Command::RecoverBlocks => "recover-blocks",
            Command::E1Forward => "e1-forward",
            Command::E1Roundtrip => "e1-roundtrip",
            Command::Report => "report",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// Missing or malformed problem data.
    Input(String),
    Isp(IspError),
    /// Failure writing results.
    Output(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Isp(e) => e.fmt(f),
            CliError::Output(m) => write!(f, "cannot write results: {m}"),
        }
    }
}

impl From<IspError> for CliError {
    fn from(e: IspError) -> Self {
        CliError::Isp(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(e) => e.name(),
            CliError::Input(_) => "InputError",
            CliError::Isp(e) => e.name(),
            CliError::Output(_) => "OutputError",
        }
    }

    /// 2 for input and configuration errors, 1 for numerical and output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Isp(e) if e.is_input_error() => 2,
            CliError::Isp(_) | CliError::Output(_) => 1,
        }
    }

    pub fn location(&self) -> Value {
        match self {
            CliError::Isp(e) => match e.location() {
                Some((name, v)) => json!({ "parameter": name, "value": v }),
                None => Value::Null,
            },
            CliError::Config(ConfigError::Parse { path, line, column, .. }) => {
                json!({ "file": path.display().to_string(), "line": line, "column": column })
            }
            _ => Value::Null,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Context {
    pub seed: u64,
}

pub struct Outcome {
    pub summary: Value,
    pub artifacts: Artifacts,
}

pub fn run_command(cmd: Command, cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    match cmd {
        Command::Validate => validate(cfg, ctx),
        Command::Forward => forward(cfg, ctx),
        Command::Split => split(cfg),
        Command::RhSolve => rh_solve(cfg, ctx),
        Command::RecoverBlocks => recover(cfg),
        Command::E1Forward => e1_forward(cfg, ctx),
        Command::E1Roundtrip => e1_round(cfg, ctx),
        Command::Report => diagnostics(cfg, ctx),
    }
}

/// Tolerances and grids actually used, echoed into every report.
pub fn settings(cfg: &RunConfig) -> Value {
    json!({
        "lambda_max": cfg.lambda_max,
        "n_lambda": cfg.n_lambda,
        "h": cfg.h,
        "x_max": cfg.x_max,
        "t_max": cfg.t_max,
        "s_max": cfg.s_max,
        "n_s": cfg.n_s,
        "tail_tol": cfg.tail_tol,
        "iteration_tol": cfg.iteration_tol,
        "max_sweeps": cfg.max_sweeps,
        "split_tol": cfg.split_tol,
        "singularity_tol": cfg.singularity_tol,
        "consistency_tol": cfg.consistency_tol,
        "shifted_lines": cfg.shifted_lines,
    })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn c64(v: C64) -> Value {
    json!([v.re, v.im])
}

fn csv(s: String) -> Vec<u8> {
    s.into_bytes()
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> CliResult<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Input(format!("problem.{what} is required for this command")))
}

fn check_n(what: &str, got: usize, n: usize) -> CliResult<()> {
    if got != n {
        return Err(IspError::DimensionMismatch(format!("{what} has n = {got}, dispersion has n = {n}")).into());
    }
    Ok(())
}

/// Dispersion and potential, checked against each other.
fn system(cfg: &RunConfig, ctx: &Context) -> CliResult<(Dispersion, MCanonicalPotential)> {
    if let Some(e1) = &cfg.problem.e1 {
        if cfg.problem.potential.is_none() {
            let sys = e1_system(e1, ctx)?;
            return Ok((sys.disp.clone(), sys.to_potential()));
        }
    }
    let disp = need(&cfg.problem.dispersion, "dispersion")?.clone();
    let pot = need(&cfg.problem.potential, "potential")?.clone();
    check_n("potential", pot.n, disp.n())?;
    Ok((disp, pot))
}

fn boundary(cfg: &RunConfig, n: usize) -> CliResult<BoundaryMatrix> {
    let h = need(&cfg.problem.boundary, "boundary")?.clone();
    check_n("boundary", h.n(), n)?;
    Ok(h)
}

struct Forward {
    kernels: TOKernels,
    blocks: BlockTransforms,
    ah_plus: LineMatrixFunction,
    ah_minus: LineMatrixFunction,
}

fn forward_path(cfg: &RunConfig, disp: &Dispersion, pot: &MCanonicalPotential, h: &BoundaryMatrix) -> CliResult<Forward> {
    pot.ensure_valid()?;
    let kernels = solve_to_kernels_with(pot, disp, &cfg.solver())?;
    let blocks = kernel_transforms(&kernels, disp, &cfg.grid())?;
    let (ah_plus, ah_minus) = assemble_ah(&blocks, h)?;
    Ok(Forward { kernels, blocks, ah_plus, ah_minus })
}

fn kernel_summary(k: &TOKernels, disp: &Dispersion) -> Value {
    let (minus, plus) = strip_widths(k, disp);
    json!({
        "n": k.n,
        "h": k.h,
        "steps": k.steps,
        "t_max": k.t_max(),
        "theta": k.theta,
        "eps": k.eps,
        "c_tilde": k.c_tilde,
        "coupling_iterations": k.coupling_iterations,
        "strip_minus": minus,
        "strip_plus": plus,
    })
}

fn validate(cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    let (disp, pot) = system(cfg, ctx)?;
    let report = validate_potential(&pot);
    if let Some(h) = &cfg.problem.boundary {
        check_n("boundary", h.n(), disp.n())?;
    }
    let summary = json!({
        "n": disp.n(),
        "theta": theta_exponent(&disp),
        "valid": report.is_valid(),
        "violations": to_value(&report.violations),
    });
    if let Some(v) = report.violations.first() {
        return Err(IspError::InvalidPotential(format!("{v} ({} violations)", report.violations.len())).into());
    }
    Ok(Outcome { summary, artifacts: Artifacts::default() })
}

fn forward(cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    let (disp, pot) = system(cfg, ctx)?;
    let h = boundary(cfg, disp.n())?;
    let fw = forward_path(cfg, &disp, &pot, &h)?;
    let s_h = scattering_matrix(&fw.ah_plus, &fw.ah_minus, cfg.singularity_tol)?;
    let strips = strip_diagnostics(&fw.ah_plus, &fw.ah_minus, &cfg.shifted_lines);
    let solv = solvability_report(&s_h, cfg.singularity_tol);
    let mut art = Artifacts::default();
    art.add("kernels.csv", csv(kernels_csv(&fw.kernels)));
    art.add(
        "blocks.csv",
        csv(line_function_csv(&[
            ("A11-", &fw.blocks.a11_minus),
            ("A21-", &fw.blocks.a21_minus),
            ("A12+", &fw.blocks.a12_plus),
            ("A22+", &fw.blocks.a22_plus),
        ])),
    );
    art.add("ah_plus.csv", csv(line_function_csv(&[("AH+", &fw.ah_plus)])));
    art.add("ah_minus.csv", csv(line_function_csv(&[("AH-", &fw.ah_minus)])));
    art.add("s_h.csv", csv(line_function_csv(&[("S_H", &s_h)])));
    let pi_status = match transmission_matrix(&fw.blocks, cfg.singularity_tol) {
        Ok((_, pi)) => {
            art.add("pi.csv", csv(quadrant_csv(&pi)));
            json!("ok")
        }
        Err(e) => json!({ "error": e.name(), "message": e.to_string() }),
    };
    let summary = json!({
        "kernels": kernel_summary(&fw.kernels, &disp),
        "min_det_plus": strips.min_det_plus,
        "min_det_minus": strips.min_det_minus,
        "strip_diagnostics": to_value(&strips),
        "solvability": to_value(&solv),
        "pi": pi_status,
    });
    Ok(Outcome { summary, artifacts: art })
}

/// An input function from CSV or exact rational entries. The grid comes from
/// the file in the first case and from the config in the second.
fn load_function(cfg: &RunConfig, src: &FunctionSource) -> CliResult<LineMatrixFunction> {
    match src {
        FunctionSource::Csv(p) => {
            let path = cfg.resolve(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            parse_line_function_csv(&text, Analyticity::None)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        FunctionSource::Rational(r) => Ok(r.to_line(cfg.grid(), Analyticity::None)),
    }
}

fn projector(cfg: &RunConfig, f: &LineMatrixFunction) -> CauchyProjector {
    CauchyProjector::with_edge_tolerance(f.grid, cfg.split_tol)
}

fn split(cfg: &RunConfig) -> CliResult<Outcome> {
    let src = need(&cfg.problem.function, "function")?;
    let f = load_function(cfg, src)?;
    let (plus, minus) = plemelj_split_with(&f, &projector(cfg, &f))?;
    let reconstruction = plus.add(&minus)?.max_distance(&f);
    let mut summary = json!({
        "dim": f.dim,
        "grid_len": f.grid.len(),
        "max_abs_plus": plus.max_abs(),
        "max_abs_minus": minus.max_abs(),
        "reconstruction_error": reconstruction,
    });
    if let FunctionSource::Rational(r) = src {
        let (ep, em) = plemelj_split_exact(r)?;
        let ep = ep.to_line(f.grid, Analyticity::None);
        let em = em.to_line(f.grid, Analyticity::None);
        summary["exact_error_plus"] = json!(plus.max_distance(&ep));
        summary["exact_error_minus"] = json!(minus.max_distance(&em));
    }
    let mut art = Artifacts::default();
    art.add("plus.csv", csv(line_function_csv(&[("F+", &plus)])));
    art.add("minus.csv", csv(line_function_csv(&[("F-", &minus)])));
    Ok(Outcome { summary, artifacts: art })
}

fn rh_options(cfg: &RunConfig) -> RhOptions {
    RhOptions { singularity_tol: cfg.singularity_tol, ..RhOptions::default() }
}

fn rh_summary(sol: &RhSolution) -> Value {
    json!({
        "method": format!("{:?}", sol.method).to_lowercase(),
        "iterations": sol.iterations,
        "factorization_residual": sol.factorization_residual,
        "plus_defect": sol.plus_defect,
    })
}

/// `S_H` from `problem.function`, or from the forward path when absent.
/// A rational source `R` stands for `S_H = I + R`.
fn scattering_input(cfg: &RunConfig, ctx: &Context) -> CliResult<LineMatrixFunction> {
    if let Some(src) = &cfg.problem.function {
        let f = load_function(cfg, src)?;
        return match src {
            FunctionSource::Rational(_) => Ok(f.add(&LineMatrixFunction::identity(f.grid, f.dim))?),
            FunctionSource::Csv(_) => Ok(f),
        };
    }
    let (disp, pot) = system(cfg, ctx)?;
    let h = boundary(cfg, disp.n())?;
    let fw = forward_path(cfg, &disp, &pot, &h)?;
    Ok(scattering_matrix(&fw.ah_plus, &fw.ah_minus, cfg.singularity_tol)?)
}

fn rh_solve(cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    let s = scattering_input(cfg, ctx)?;
    let solv = solvability_report(&s, cfg.singularity_tol);
    let sol = solve_regular_rh_with(&s, &projector(cfg, &s), &rh_options(cfg))?;
    let strips = strip_diagnostics(&sol.ah_plus, &sol.ah_minus, &cfg.shifted_lines);
    let mut art = Artifacts::default();
    art.add("ah_plus.csv", csv(line_function_csv(&[("AH+", &sol.ah_plus)])));
    art.add("ah_minus.csv", csv(line_function_csv(&[("AH-", &sol.ah_minus)])));
    let summary = json!({
        "rh": rh_summary(&sol),
        "solvability": to_value(&solv),
        "min_det_plus": strips.min_det_plus,
        "min_det_minus": strips.min_det_minus,
        "strip_diagnostics": to_value(&strips),
    });
    Ok(Outcome { summary, artifacts: art })
}

fn recover(cfg: &RunConfig) -> CliResult<Outcome> {
    let facts = need(&cfg.problem.factorizations, "factorizations")?;
    if facts.len() != 2 {
        return Err(CliError::Input(format!("exactly two factorizations are needed, got {}", facts.len())));
    }
    let (h1, h2) = (&facts[0].boundary, &facts[1].boundary);
    check_n("second boundary", h2.n(), h1.n())?;
    let det_abs = (h1.matrix() - h2.matrix()).determinant().norm();
    if !(det_abs > cfg.singularity_tol) {
        return Err(IspError::DegenerateBoundaryPair { det_abs }.into());
    }
    // factorizations come from files when given, otherwise from the forward path
    let direct = match (&cfg.problem.dispersion, &cfg.problem.potential) {
        (Some(d), Some(p)) => {
            check_n("potential", p.n, d.n())?;
            p.ensure_valid()?;
            let k = solve_to_kernels_with(p, d, &cfg.solver())?;
            Some(kernel_transforms(&k, d, &cfg.grid())?)
        }
        _ => None,
    };
    let mut parts = Vec::with_capacity(2);
    let mut rh = Vec::new();
    for (i, f) in facts.iter().enumerate() {
        match (&f.plus, &f.minus, &direct) {
            (Some(p), Some(m), _) => {
                let plus = load_function(cfg, &FunctionSource::Csv(p.clone()))?;
                let minus = load_function(cfg, &FunctionSource::Csv(m.clone()))?;
                parts.push((plus, minus));
            }
            (None, None, Some(blocks)) => {
                let (p, m) = assemble_ah(blocks, &f.boundary)?;
                let s = scattering_matrix(&p, &m, cfg.singularity_tol)?;
                let sol = solve_regular_rh_with(&s, &projector(cfg, &s), &rh_options(cfg))?;
                rh.push(rh_summary(&sol));
                parts.push((sol.ah_plus, sol.ah_minus));
            }
            _ => {
                return Err(CliError::Input(format!(
                    "factorization {} needs both plus and minus files, or the problem potential",
                    i + 1
                )))
            }
        }
    }
    let (blocks, rep) = recover_blocks(
        &parts[0].0,
        &parts[0].1,
        &parts[1].0,
        &parts[1].1,
        h1,
        h2,
        cfg.singularity_tol,
        cfg.consistency_tol,
    )?;
    let mut summary = json!({ "recovery": to_value(&rep), "rh": rh });
    if let Some(d) = &direct {
        summary["block_error"] = json!(blocks.max_distance(d));
    }
    let mut art = Artifacts::default();
    art.add(
        "blocks.csv",
        csv(line_function_csv(&[
            ("A11-", &blocks.a11_minus),
            ("A21-", &blocks.a21_minus),
            ("A12+", &blocks.a12_plus),
            ("A22+", &blocks.a22_plus),
        ])),
    );
    Ok(Outcome { summary, artifacts: art })
}

fn random_profile(rng: &mut ChaCha8Rng, terms: usize) -> CliResult<ScalarProfile> {
    let t = (0..terms)
        .map(|_| ExpTerm {
            gamma: C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            a: rng.random_range(1.0..2.5),
        })
        .collect();
    Ok(ScalarProfile::exp_sum(t)?)
}

fn e1_system(spec: &E1Spec, ctx: &Context) -> CliResult<E1System> {
    let slots = 2 * spec.dispersion.n() - 2;
    let (first, last) = match (&spec.c_first, &spec.c_last, spec.random_terms) {
        (Some(f), Some(l), None) => (f.clone(), l.clone()),
        (None, None, Some(terms)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let mut draw = || (0..slots).map(|_| random_profile(&mut rng, terms)).collect::<CliResult<Vec<_>>>();
            (draw()?, draw()?)
        }
        _ => return Err(CliError::Input("e1 needs either c_first and c_last, or random_terms".into())),
    };
    Ok(E1System::new(spec.dispersion.clone(), first, last, spec.envelope)?)
}

fn e1_boundary(cfg: &RunConfig, rows: &[Vec<C64>], n: usize) -> CliResult<E1Boundary> {
    let m = matrix_from_rows(rows)?;
    if m.nrows() + 1 != n {
        return Err(IspError::DimensionMismatch(format!("h1 must be {0} x {0} for n = {n}", n - 1)).into());
    }
    Ok(E1Boundary::with_tolerance(m, cfg.singularity_tol)?)
}

fn s_grid(cfg: &RunConfig) -> CliResult<SGrid> {
    Ok(SGrid::new(cfg.s_max, cfg.n_s)?)
}

/// Per-family density samples as `s,k,which_family,re,im`.
fn densities_csv(p: &E1Profiles) -> String {
    let pts = p.s_grid.points();
    let as_profile = |k: usize, family: Family, v: &[C64]| RecoveredProfile {
        k,
        family,
        scale: 1.0,
        x: pts.clone(),
        values: v.to_vec(),
    };
    let rows: Vec<RecoveredProfile> = p
        .c_minus
        .iter()
        .enumerate()
        .map(|(i, v)| as_profile(i + 2, Family::First, v))
        .chain(p.c_plus.iter().enumerate().map(|(i, v)| as_profile(i + 2, Family::Last, v)))
        .collect();
    profiles_csv(&rows.iter().collect::<Vec<_>>())
}

fn e1_forward(cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    let spec = need(&cfg.problem.e1, "e1")?;
    let sys = e1_system(spec, ctx)?;
    let bnd = e1_boundary(cfg, &spec.h1, sys.n())?;
    let grid = cfg.grid();
    let sg = s_grid(cfg)?;
    let s_h = e1_scattering(&sys, &bnd, grid)?;
    let proj = CauchyProjector::with_edge_tolerance(grid, cfg.split_tol);
    let splits = e1_split_with(&s_h, &proj)?;
    let inverted = e1_invert_transforms(&splits, &grid, sg);
    let exact = E1Profiles::from_system(&sys, &bnd, sg);
    let dist = |a: &[Vec<C64>], b: &[Vec<C64>]| {
        a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm())).fold(0.0, f64::max)
    };
    let column_sup = s_h.sub(&LineMatrixFunction::identity(grid, sys.n()))?.max_abs();
    let mut art = Artifacts::default();
    art.add("s_h.csv", csv(line_function_csv(&[("S_H", &s_h)])));
    art.add("densities.csv", csv(densities_csv(&inverted)));
    let summary = json!({
        "column_sup": column_sup,
        "density_error_minus": dist(&inverted.c_minus, &exact.c_minus),
        "density_error_plus": dist(&inverted.c_plus, &exact.c_plus),
        "envelope_constant": exact.envelope_constant(sys.density_rate()),
        "s_h_at_zero": s_h.values[grid.nearest(0.0)].iter().map(|v| c64(*v)).collect::<Vec<_>>(),
    });
    Ok(Outcome { summary, artifacts: art })
}

fn e1_round(cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    let spec = need(&cfg.problem.e1, "e1")?;
    let sys = e1_system(spec, ctx)?;
    let bnd = e1_boundary(cfg, &spec.h1, sys.n())?;
    let tilde = e1_boundary(cfg, need(&spec.h1_tilde, "e1.h1_tilde")?, sys.n())?;
    let (rec, rep) = e1_roundtrip(&sys, &bnd, &tilde, cfg.grid(), s_grid(cfg)?)?;
    let all: Vec<&RecoveredProfile> = rec.c_first.iter().chain(&rec.c_last).collect();
    let mut art = Artifacts::default();
    art.add("profiles.csv", csv(profiles_csv(&all)));
    art.add(
        "diagnostics.json",
        crate::output::canonical_json(&json!({
            "s": s_grid(cfg)?.points(),
            "diagnostics": to_value(&rec.diagnostics),
        }))
        .into_bytes(),
    );
    let summary = json!({
        "max_rel_error": rep.max_rel_error,
        "min_singular": rep.min_singular,
        "column_sup": rep.column_sup,
        "profiles": to_value(&rep.profiles),
        "deficient_fraction": rec.diagnostics.deficient_fraction(),
    });
    Ok(Outcome { summary, artifacts: art })
}

/// Validation, strip and solvability diagnostics without the bulky data files.
fn diagnostics(cfg: &RunConfig, ctx: &Context) -> CliResult<Outcome> {
    let (disp, pot) = system(cfg, ctx)?;
    let report = validate_potential(&pot);
    let mut summary = json!({
        "n": disp.n(),
        "theta": theta_exponent(&disp),
        "valid": report.is_valid(),
        "violations": to_value(&report.violations),
    });
    if report.is_valid() {
        if let Some(h) = &cfg.problem.boundary {
            check_n("boundary", h.n(), disp.n())?;
            let fw = forward_path(cfg, &disp, &pot, h)?;
            summary["kernels"] = kernel_summary(&fw.kernels, &disp);
            let strips = strip_diagnostics(&fw.ah_plus, &fw.ah_minus, &cfg.shifted_lines);
            summary["min_det_plus"] = json!(strips.min_det_plus);
            summary["min_det_minus"] = json!(strips.min_det_minus);
            summary["strip_diagnostics"] = to_value(&strips);
            match scattering_matrix(&fw.ah_plus, &fw.ah_minus, cfg.singularity_tol) {
                Ok(s) => summary["solvability"] = to_value(&solvability_report(&s, cfg.singularity_tol)),
                Err(e) => summary["solvability"] = json!({ "error": e.name(), "message": e.to_string() }),
            }
        }
    }
    Ok(Outcome { summary, artifacts: Artifacts::default() })
}

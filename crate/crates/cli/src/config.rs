//! Run configuration: one JSON file per run, every field optional.

use std::fmt;
use std::path::{Path, PathBuf};

use halfline_isp::forward::SolverOptions;
use halfline_isp::rational::RationalMatrix;
use halfline_isp::{BoundaryMatrix, Dispersion, Envelope, LambdaGrid, MCanonicalPotential, ScalarProfile, C64};
use serde::Deserialize;

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    Validation(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse { path, line, column, message } => {
                write!(f, "{}:{line}:{column}: {message}", path.display())
            }
            ConfigError::Validation(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl ConfigError {
    pub fn name(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "IoError",
            ConfigError::Parse { .. } => "ParseError",
            ConfigError::Validation(_) => "ValidationError",
        }
    }
}

/// Where a sampled line function comes from.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionSource {
    /// A `(lambda, block, k, j, re, im)` file as written by this tool.
    Csv(PathBuf),
    /// Exact rational entries, sampled on the configured grid.
    Rational(RationalMatrix),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizationInput {
    pub boundary: BoundaryMatrix,
    /// `A_H+` and `A_H-` files; computed from the problem potential when absent.
    #[serde(default)]
    pub plus: Option<PathBuf>,
    #[serde(default)]
    pub minus: Option<PathBuf>,
}

/// A member of the first/last-column coupling class.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct E1Spec {
    pub dispersion: Dispersion,
    #[serde(default)]
    pub c_first: Option<Vec<ScalarProfile>>,
    #[serde(default)]
    pub c_last: Option<Vec<ScalarProfile>>,
    /// Draw every profile as a random exponential sum with this many terms (uses `--seed`).
    #[serde(default)]
    pub random_terms: Option<usize>,
    pub envelope: Envelope,
    pub h1: Vec<Vec<C64>>,
    #[serde(default)]
    pub h1_tilde: Option<Vec<Vec<C64>>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Problem {
    pub dispersion: Option<Dispersion>,
    pub potential: Option<MCanonicalPotential>,
    pub boundary: Option<BoundaryMatrix>,
    pub function: Option<FunctionSource>,
    pub factorizations: Option<Vec<FactorizationInput>>,
    pub e1: Option<E1Spec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lambda_max: f64,
    pub n_lambda: usize,
    /// Step in `x` and `t`.
    pub h: f64,
    pub x_max: Option<f64>,
    pub t_max: Option<f64>,
    pub s_max: f64,
    pub n_s: usize,
    pub tail_tol: f64,
    pub iteration_tol: f64,
    pub max_sweeps: usize,
    /// Edge tolerance of the additive split.
    pub split_tol: f64,
    pub singularity_tol: f64,
    /// Relative tolerance of the structural check in block recovery.
    pub consistency_tol: f64,
    pub stored_rows: Vec<f64>,
    /// Offsets of the shifted lines used in determinant diagnostics.
    pub shifted_lines: Vec<f64>,
    pub problem: Problem,
    /// A separate file holding `problem`; relative to the config file.
    pub problem_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Directory of the config file; relative input paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            lambda_max: 100.0,
            n_lambda: 4096,
            h: solver.h,
            x_max: None,
            t_max: None,
            s_max: 10.0,
            n_s: 201,
            tail_tol: solver.tail_tol,
            iteration_tol: solver.iteration_tol,
            max_sweeps: solver.max_sweeps,
            split_tol: halfline_isp::spectral::EDGE_TOL,
            singularity_tol: solver.singularity_tol,
            consistency_tol: 1e-5,
            stored_rows: solver.stored_rows,
            shifted_lines: vec![0.05, 0.1],
            problem: Problem::default(),
            problem_path: None,
            output_dir: None,
            base_dir: PathBuf::from("."),
        }
    }
}

fn parse_error(path: &Path, e: serde_json::Error) -> ConfigError {
    ConfigError::Parse { path: path.to_path_buf(), line: e.line(), column: e.column(), message: e.to_string() }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = read(path)?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| parse_error(path, e))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    if let Some(p) = cfg.problem_path.clone() {
        let full = cfg.resolve(&p);
        let text = read(&full)?;
        cfg.problem = serde_json::from_str(&text).map_err(|e| parse_error(&full, e))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Validation(m));
        if !(self.lambda_max > 0.0) || !self.lambda_max.is_finite() {
            return bad(format!("lambda_max must be positive, got {}", self.lambda_max));
        }
        if self.n_lambda < 4 || !self.n_lambda.is_power_of_two() {
            return bad(format!("n_lambda must be a power of two >= 4, got {}", self.n_lambda));
        }
        if !(self.h > 0.0) {
            return bad(format!("step h must be positive, got {}", self.h));
        }
        for (name, v) in [("x_max", self.x_max), ("t_max", self.t_max)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.s_max > 0.0) || self.n_s < 2 {
            return bad("s grid needs s_max > 0 and n_s >= 2".into());
        }
        for (name, v) in [
            ("tail_tol", self.tail_tol),
            ("iteration_tol", self.iteration_tol),
            ("split_tol", self.split_tol),
            ("singularity_tol", self.singularity_tol),
            ("consistency_tol", self.consistency_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be positive".into());
        }
        if self.stored_rows.iter().chain(&self.shifted_lines).any(|v| !(*v >= 0.0)) {
            return bad("stored_rows and shifted_lines must be non-negative".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> LambdaGrid {
        LambdaGrid::new(self.lambda_max, self.n_lambda).expect("validated grid")
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            h: self.h,
            tail_tol: self.tail_tol,
            iteration_tol: self.iteration_tol,
            max_sweeps: self.max_sweeps,
            x_max: self.x_max,
            t_max: self.t_max,
            singularity_tol: self.singularity_tol,
            stored_rows: self.stored_rows.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::File::create(&path).unwrap().write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let (_d, p) = write_config(r#"{"lambda_max": 100, "n_lambda": 4096}"#);
        let cfg = load_config(&p).unwrap();
        assert_eq!(cfg.h, 0.01);
        assert_eq!(cfg.grid().len(), 4096);
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        let (_d, p) = write_config(r#"{"n_lambda": 1000}"#);
        let e = load_config(&p).unwrap_err();
        assert_eq!(e.name(), "ValidationError");
        assert!(e.to_string().contains("power of two"));
    }

    #[test]
    fn negative_step_is_rejected() {
        let (_d, p) = write_config(r#"{"h": -0.01}"#);
        assert_eq!(load_config(&p).unwrap_err().name(), "ValidationError");
    }

    #[test]
    fn parse_errors_carry_position() {
        let (_d, p) = write_config("{\n  \"lambda_max\": 100,\n  \"bogus\": 1\n}");
        match load_config(&p).unwrap_err() {
            ConfigError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn problem_file_is_resolved_relative_to_config() {
        let (dir, p) = write_config(r#"{"problem_path": "problem.json"}"#);
        std::fs::write(dir.path().join("problem.json"), r#"{"dispersion": {"n": 1, "xi": [-1, 1]}}"#).unwrap();
        let cfg = load_config(&p).unwrap();
        assert_eq!(cfg.problem.dispersion.unwrap().n(), 1);
    }
}

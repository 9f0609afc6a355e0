//! `isp <command> --config <path> [--out <dir>] [--threads K] [--seed S]`

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Map, Value};

use commands::{run_command, settings, CliError, Command, Context};
use config::{load_config, RunConfig};
use output::{atomic_write, canonical_json};

#[derive(Parser, Debug)]
#[command(name = "isp", version, about = "Direct and inverse scattering on the half-axis")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `$ISP_OUT_DIR`, then `isp-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the numerical kernels.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for randomly generated fixtures.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn out_dir(args: &Args, cfg: Option<&RunConfig>) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.as_ref().map(|p| c.resolve(p))))
        .or_else(|| std::env::var_os("ISP_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("isp-out"))
}

fn base_report(args: &Args, cfg: Option<&RunConfig>) -> Map<String, Value> {
    let mut r = Map::new();
    r.insert("command".into(), json!(args.command.name()));
    r.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    r.insert("seed".into(), json!(args.seed));
    r.insert("settings".into(), cfg.map(settings).unwrap_or(Value::Null));
    r
}

fn write_report(dir: &Path, report: Map<String, Value>) -> Result<(), CliError> {
    atomic_write(&dir.join("report.json"), canonical_json(&Value::Object(report)).as_bytes())
        .map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn fail(args: &Args, cfg: Option<&RunConfig>, err: CliError) -> ExitCode {
    eprintln!("isp {}: {} ({err})", args.command.name(), err.name());
    let mut report = base_report(args, cfg);
    report.insert("status".into(), json!("error"));
    report.insert("exit_code".into(), json!(err.exit_code()));
    report.insert(
        "error".into(),
        json!({ "name": err.name(), "message": err.to_string(), "location": err.location() }),
    );
    report.insert("manifest".into(), json!({}));
    if let Err(e) = write_report(&out_dir(args, cfg), report) {
        eprintln!("isp: {e}");
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(k) = args.threads {
        if k == 0 {
            return fail(&args, None, CliError::Input("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("isp: cannot size thread pool: {e}");
        }
    }
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&args, None, e.into()),
    };
    let ctx = Context { seed: args.seed };
    let outcome = match run_command(args.command, &cfg, &ctx) {
        Ok(o) => o,
        Err(e) => return fail(&args, Some(&cfg), e),
    };
    let dir = out_dir(&args, Some(&cfg));
    let manifest = match outcome.artifacts.write_all(&dir) {
        Ok(m) => m,
        Err(e) => return fail(&args, Some(&cfg), CliError::Output(format!("{}: {e}", dir.display()))),
    };
    let mut report = base_report(&args, Some(&cfg));
    report.insert("status".into(), json!("ok"));
    report.insert("exit_code".into(), json!(0));
    report.insert("results".into(), outcome.summary);
    report.insert("manifest".into(), Value::Object(manifest.into_iter().map(|(k, v)| (k, json!(v))).collect()));
    if let Err(e) = write_report(&dir, report) {
        eprintln!("isp: {e}");
        return ExitCode::from(1);
    }
    println!("{}", dir.join("report.json").display());
    ExitCode::SUCCESS
}

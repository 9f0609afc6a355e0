//! Canonical JSON, CSV layouts and atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use halfline_isp::example_e1::RecoveredProfile;
use halfline_isp::forward::TOKernels;
use halfline_isp::{Analyticity, Block, CMatrix, LambdaGrid, LineMatrixFunction, C64};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Scientific notation with 16 fractional digits, stable across platforms.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "Infinity".into()
    } else {
        "-Infinity".into()
    }
}

/// JSON with sorted keys, two-space indent and fixed float formatting.
/// Non-finite floats become strings.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n(' ', 2 * d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, depth);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, x, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files produced by one command, in the order they were added.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Writes every file into `dir` and returns the `name -> sha256` manifest.
    pub fn write_all(&self, dir: &Path) -> std::io::Result<Vec<(String, String)>> {
        self.files
            .iter()
            .map(|(name, bytes)| {
                atomic_write(&dir.join(name), bytes)?;
                Ok((name.clone(), sha256_hex(bytes)))
            })
            .collect()
    }
}

/// Quadrant label and one-based `(k, j)` of entry `(r, c)` in a `dim x dim` matrix.
fn entry_label(dim: usize, r: usize, c: usize) -> (&'static str, usize, usize) {
    let (b, k, j) = Block::locate(dim / 2, r, c);
    (b.label(), k + 1, j + 1)
}

/// `lambda,block,k,j,re,im` for every grid node and entry, with `name` in the
/// block column.
pub fn line_function_csv(named: &[(&str, &LineMatrixFunction)]) -> String {
    csv_with_labels(named, false)
}

/// Like [`line_function_csv`] for one `2n x 2n` function, labelled by quadrant.
pub fn quadrant_csv(f: &LineMatrixFunction) -> String {
    csv_with_labels(&[("", f)], true)
}

fn csv_with_labels(named: &[(&str, &LineMatrixFunction)], quadrants: bool) -> String {
    let mut out = String::from("lambda,block,k,j,re,im\n");
    for (name, f) in named {
        let pts = f.grid.points();
        for (l, m) in pts.iter().zip(&f.values) {
            for r in 0..f.dim {
                for c in 0..f.dim {
                    let (blk, k, j) = if quadrants {
                        entry_label(f.dim, r, c)
                    } else {
                        (*name, r + 1, c + 1)
                    };
                    let v = m[(r, c)];
                    let _ = writeln!(out, "{},{blk},{k},{j},{},{}", fmt_f64(*l), fmt_f64(v.re), fmt_f64(v.im));
                }
            }
        }
    }
    out
}

/// Inverse of [`line_function_csv`] (single name) and [`quadrant_csv`].
pub fn parse_line_function_csv(text: &str, analyticity: Analyticity) -> Result<LineMatrixFunction, String> {
    let mut rows: Vec<(f64, usize, usize, String, C64)> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(format!("line {}: expected 6 columns, found {}", ln + 1, cols.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", ln + 1));
        let idx = |s: &str| s.parse::<usize>().map_err(|e| format!("line {}: {e}", ln + 1));
        rows.push((num(cols[0])?, idx(cols[2])?, idx(cols[3])?, cols[1].to_string(), C64::new(num(cols[4])?, num(cols[5])?)));
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    let first_lambda = rows[0].0;
    let per_node = rows.iter().take_while(|r| r.0 == first_lambda).count();
    let dim = (per_node as f64).sqrt().round() as usize;
    if dim * dim != per_node || rows.len() % per_node != 0 {
        return Err(format!("{per_node} entries per node is not a square matrix"));
    }
    let n_nodes = rows.len() / per_node;
    let last_lambda = rows[rows.len() - 1].0;
    let step = (last_lambda - first_lambda) / (n_nodes - 1).max(1) as f64;
    let lambda_max = -first_lambda;
    let grid = LambdaGrid::new(lambda_max, n_nodes).map_err(|e| e.to_string())?;
    if (grid.step() - step).abs() > 1e-9 * step.abs().max(1.0) {
        return Err("lambda values do not form the symmetric periodic grid".into());
    }
    let quadrants = rows.iter().all(|r| matches!(r.3.as_str(), "11" | "12" | "21" | "22"));
    if !quadrants && rows.iter().any(|r| r.3 != rows[0].3) {
        return Err("file holds more than one named function".into());
    }
    let values = rows
        .chunks(per_node)
        .map(|chunk| {
            let mut m = CMatrix::zeros(dim, dim);
            for (_, k, j, blk, v) in chunk {
                if *k == 0 || *j == 0 {
                    return Err("indices are one-based".into());
                }
                let half = dim / 2;
                let (r, c) = match (quadrants, blk.as_str()) {
                    (true, "12") => (k - 1, j - 1 + half),
                    (true, "21") => (k - 1 + half, j - 1),
                    (true, "22") => (k - 1 + half, j - 1 + half),
                    _ => (k - 1, j - 1),
                };
                if r >= dim || c >= dim {
                    return Err(format!("entry ({k},{j}) of block {blk} is out of range"));
                }
                m[(r, c)] = *v;
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>, String>>()?;
    LineMatrixFunction::new(grid, values, analyticity).map_err(|e| e.to_string())
}

/// `x,t,block,k,j,re,im` for every stored kernel node.
pub fn kernels_csv(k: &TOKernels) -> String {
    let mut out = String::from("x,t,block,k,j,re,im\n");
    for (x, t, r, c, v) in k.records() {
        let (b, kk, jj) = Block::locate(k.n, r, c);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(x),
            fmt_f64(t),
            b.label(),
            kk + 1,
            jj + 1,
            fmt_f64(v.re),
            fmt_f64(v.im)
        );
    }
    out
}

/// `s,k,which_family,re,im`: each recovered coupling against `s = d x`.
pub fn profiles_csv(profiles: &[&RecoveredProfile]) -> String {
    let mut out = String::from("s,k,which_family,re,im\n");
    for p in profiles {
        for (x, v) in p.x.iter().zip(&p.values) {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(x * p.scale),
                p.k,
                p.family.label(),
                fmt_f64(v.re),
                fmt_f64(v.im)
            );
        }
    }
    out
}

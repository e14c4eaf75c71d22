//! Matrix/vector CSV files and the sketch-distribution JSON format.
//!
//! Matrices are plain CSV without a header, one row per line. Vectors are
//! single-column CSV. Blank lines are ignored; ragged rows are rejected with
//! the offending line number.

use std::fs;
use std::path::Path;

use asgd_core::{DenseMatrix, LinearSystem, SketchDistribution, SpdMatrix};
use serde_json::Value;

use crate::error::{CliError, CliResult};

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parses CSV text into a dense matrix. `source` names the input in error
/// messages.
pub fn parse_matrix(text: &str, source: &str) -> CliResult<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                let field = field.trim();
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    CliError::validation(format!(
                        "{source}: line {lineno}, column {}: invalid number {field:?}",
                        col + 1
                    ))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::validation(format!(
                    "{source}: line {lineno}: ragged row, expected {w} fields, found {}",
                    row.len()
                )))
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::validation(format!("{source}: no data")));
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

pub fn parse_vector(text: &str, source: &str) -> CliResult<Vec<f64>> {
    let m = parse_matrix(text, source)?;
    if m.cols() != 1 {
        return Err(CliError::validation(format!(
            "{source}: expected a single column, found {}",
            m.cols()
        )));
    }
    Ok(m.as_slice().to_vec())
}

pub fn read_matrix(path: &Path) -> CliResult<DenseMatrix> {
    parse_matrix(&read_text(path)?, &path.display().to_string())
}

pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    parse_vector(&read_text(path)?, &path.display().to_string())
}

/// `B` from a CSV file, or the identity for the literal `identity`.
pub fn read_geometry(spec: &str, n: usize) -> CliResult<SpdMatrix> {
    if spec == "identity" {
        return Ok(SpdMatrix::identity(n));
    }
    Ok(SpdMatrix::new(read_matrix(Path::new(spec))?)?)
}

fn field_error(source: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::validation(format!("{source}: {msg}"))
}

fn float_array(v: &Value, source: &str, name: &str) -> CliResult<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| field_error(source, format!("\"{name}\" must be an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| field_error(source, format!("\"{name}\" must hold numbers")))
        })
        .collect()
}

fn usize_of(v: &Value, source: &str, name: &str) -> CliResult<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| field_error(source, format!("\"{name}\" must be a nonnegative integer")))
}

/// Parses
/// `{"variant": "coordinate"|"block"|"gaussian", "weights": [...], "blocks": [[...]], "q": n}`.
///
/// Coordinate and block weights default to uniform; coordinate weights may
/// also be the string `"row_norm"` (probabilities proportional to squared
/// row norms of `a`).
pub fn parse_distribution(text: &str, source: &str, a: &DenseMatrix) -> CliResult<SketchDistribution> {
    let v: Value = serde_json::from_str(text).map_err(|e| {
        field_error(source, format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    let variant = v
        .get("variant")
        .and_then(Value::as_str)
        .ok_or_else(|| field_error(source, "missing string field \"variant\""))?;
    let dist = match variant {
        "coordinate" => match v.get("weights") {
            None => SketchDistribution::coordinate_uniform(a.rows())?,
            Some(Value::String(s)) if s == "row_norm" => SketchDistribution::coordinate_row_norm(a)?,
            Some(w) => SketchDistribution::coordinate(float_array(w, source, "weights")?)?,
        },
        "block" => {
            let blocks = v
                .get("blocks")
                .and_then(Value::as_array)
                .ok_or_else(|| field_error(source, "block variant needs \"blocks\""))?
                .iter()
                .map(|b| {
                    b.as_array()
                        .ok_or_else(|| field_error(source, "each block must be an array"))?
                        .iter()
                        .map(|i| usize_of(i, source, "blocks"))
                        .collect::<CliResult<Vec<usize>>>()
                })
                .collect::<CliResult<Vec<_>>>()?;
            match v.get("weights") {
                None => SketchDistribution::block_uniform(blocks)?,
                Some(w) => SketchDistribution::block(blocks, float_array(w, source, "weights")?)?,
            }
        }
        "gaussian" => {
            let q = v
                .get("q")
                .ok_or_else(|| field_error(source, "gaussian variant needs \"q\""))?;
            SketchDistribution::gaussian(usize_of(q, source, "q")?)?
        }
        other => return Err(field_error(source, format!("unknown variant {other:?}"))),
    };
    dist.validate(a.rows())?;
    Ok(dist)
}

pub fn read_distribution(path: &Path, a: &DenseMatrix) -> CliResult<SketchDistribution> {
    parse_distribution(&read_text(path)?, &path.display().to_string(), a)
}

/// Loads `(A, b, B)` and the sketch distribution. Without `A` this is the
/// 2x2 identity system with `b = (1, 1)`; without a distribution file the
/// sketch is a uniform coordinate one.
pub fn load_system(
    a: Option<&Path>,
    b: Option<&Path>,
    geometry: Option<&str>,
    dist: Option<&Path>,
) -> CliResult<(LinearSystem, SketchDistribution)> {
    let (a, b) = match (a, b) {
        (Some(a), Some(b)) => (read_matrix(a)?, read_vector(b)?),
        (None, None) => (DenseMatrix::identity(2), vec![1.0, 1.0]),
        (Some(_), None) => return Err(CliError::validation("--A requires --b")),
        (None, Some(_)) => return Err(CliError::validation("--b requires --A")),
    };
    let geometry = read_geometry(geometry.unwrap_or("identity"), a.cols())?;
    let dist = match dist {
        Some(p) => read_distribution(p, &a)?,
        None => SketchDistribution::coordinate_uniform(a.rows())?,
    };
    let system = LinearSystem::new(a, b, geometry)?;
    Ok((system, dist))
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

//! File formats: observation files, sampling-distribution files, dense
//! matrix CSV, and the JSON fit configuration.
//!
//! All text formats are UTF-8. Coordinate files start with a `# m1 m2 n`
//! header; any further lines starting with `#` are comments and are ignored
//! by the parsers (writers use them to embed the resolved configuration, so
//! artifacts stay self-describing without breaking the format).

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Dimensions, Observation, SamplingDistribution};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Header of a coordinate file: `# m1 m2 n`.
fn parse_coord_header(line: &str, lineno: usize) -> Result<(Dimensions, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(lineno, "expected `# m1 m2 n` header"))?;
    let fields: Vec<&str> = body.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(lineno, "header must have exactly `m1 m2 n`"));
    }
    let m1: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(lineno, "bad m1 in header"))?;
    let m2: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(lineno, "bad m2 in header"))?;
    let n: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(lineno, "bad n in header"))?;
    let dims = Dimensions::new(m1, m2).map_err(|e| parse_err(lineno, e.to_string()))?;
    // Refuse absurd headers before allocating anything proportional to n.
    if n > 50_000_000 || dims.cells() > 10_000_000 {
        return Err(parse_err(lineno, "header is implausibly large"));
    }
    Ok((dims, n))
}

fn parse_coord_line(line: &str, lineno: usize, dims: Dimensions) -> Result<(usize, usize, f64)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(lineno, "expected `row col value`"));
    }
    let row: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(lineno, "bad row index"))?;
    let col: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(lineno, "bad col index"))?;
    let value: f64 = fields[2]
        .parse()
        .map_err(|_| parse_err(lineno, "bad value"))?;
    if row >= dims.m1() || col >= dims.m2() {
        return Err(parse_err(
            lineno,
            format!("index ({row}, {col}) outside {dims}"),
        ));
    }
    if !value.is_finite() {
        return Err(parse_err(lineno, "value must be finite"));
    }
    Ok((row, col, value))
}

// ---------------------------------------------------------------------------
// Observation files
// ---------------------------------------------------------------------------

/// Parses an observation file: `# m1 m2 n` header, then one `row col value`
/// per line with 0-based indices. A `# provenance {json}` comment, written
/// by the generator, restores the generating metadata.
pub fn parse_observations(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty observation file"))?;
    let (dims, n) = parse_coord_header(header, lineno + 1)?;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    let mut provenance = None;
    for (idx, line) in lines {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("# provenance ") {
            provenance = Some(
                serde_json::from_str(rest)
                    .map_err(|e| parse_err(idx + 1, format!("bad provenance: {e}")))?,
            );
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (row, col, value) = parse_coord_line(trimmed, idx + 1, dims)?;
        entries.push(Observation { row, col, value });
    }
    if entries.len() != n {
        return Err(parse_err(
            1,
            format!("header declares n={n} but file has {} observations", entries.len()),
        ));
    }
    Dataset::new(dims, entries, provenance)
}

pub fn read_observations(path: &Path) -> Result<Dataset> {
    parse_observations(&fs::read_to_string(path)?)
}

/// Serializes a dataset, embedding `config` (any JSON value) as a comment.
pub fn format_observations(data: &Dataset, config: Option<&serde_json::Value>) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# {} {} {}\n",
        data.dims().m1(),
        data.dims().m2(),
        data.n()
    ));
    if let Some(cfg) = config {
        out.push_str(&format!("# config {cfg}\n"));
    }
    if let Some(prov) = data.provenance() {
        let json = serde_json::to_string(prov).expect("provenance serializes");
        out.push_str(&format!("# provenance {json}\n"));
    }
    for obs in data.entries() {
        out.push_str(&format!("{} {} {}\n", obs.row, obs.col, obs.value));
    }
    out
}

pub fn write_observations(
    data: &Dataset,
    config: Option<&serde_json::Value>,
    path: &Path,
) -> Result<()> {
    fs::write(path, format_observations(data, config))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sampling distribution files
// ---------------------------------------------------------------------------

/// Parses a sampling-distribution file (same coordinate format, values are
/// probabilities). All `m1 * m2` cells must be present exactly once; the
/// result must pass the distribution invariants.
pub fn parse_distribution(text: &str) -> Result<SamplingDistribution> {
    let mut lines = text.lines().enumerate();
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty distribution file"))?;
    let (dims, n) = parse_coord_header(header, lineno + 1)?;
    if n != dims.cells() {
        return Err(parse_err(
            lineno + 1,
            format!("distribution must list all {} cells", dims.cells()),
        ));
    }
    let mut pmf = DMatrix::from_element(dims.m1(), dims.m2(), f64::NAN);
    let mut seen = 0usize;
    for (idx, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (row, col, p) = parse_coord_line(trimmed, idx + 1, dims)?;
        if !pmf[(row, col)].is_nan() {
            return Err(parse_err(idx + 1, format!("duplicate cell ({row}, {col})")));
        }
        pmf[(row, col)] = p;
        seen += 1;
    }
    if seen != dims.cells() {
        return Err(parse_err(
            1,
            format!("expected {} cells, found {seen}", dims.cells()),
        ));
    }
    SamplingDistribution::from_pmf(dims, pmf)
}

pub fn read_distribution(path: &Path) -> Result<SamplingDistribution> {
    parse_distribution(&fs::read_to_string(path)?)
}

pub fn format_distribution(
    pi: &SamplingDistribution,
    config: Option<&serde_json::Value>,
) -> String {
    let dims = pi.dims();
    let mut out = String::new();
    out.push_str(&format!("# {} {} {}\n", dims.m1(), dims.m2(), dims.cells()));
    if let Some(cfg) = config {
        out.push_str(&format!("# config {cfg}\n"));
    }
    for j in 0..dims.m1() {
        for k in 0..dims.m2() {
            out.push_str(&format!("{j} {k} {}\n", pi.prob(j, k)));
        }
    }
    out
}

pub fn write_distribution(
    pi: &SamplingDistribution,
    config: Option<&serde_json::Value>,
    path: &Path,
) -> Result<()> {
    fs::write(path, format_distribution(pi, config))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dense matrix CSV
// ---------------------------------------------------------------------------

/// Parses a dense matrix CSV: `# m1 m2` header, then `m1` comma-separated
/// rows of `m2` values each.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate();
    let (lineno, header) = lines.next().ok_or_else(|| parse_err(1, "empty matrix file"))?;
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(lineno + 1, "expected `# m1 m2` header"))?;
    let fields: Vec<&str> = body.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(parse_err(lineno + 1, "header must have exactly `m1 m2`"));
    }
    let m1: usize = fields[0]
        .parse()
        .map_err(|_| parse_err(lineno + 1, "bad m1 in header"))?;
    let m2: usize = fields[1]
        .parse()
        .map_err(|_| parse_err(lineno + 1, "bad m2 in header"))?;
    let dims = Dimensions::new(m1, m2).map_err(|e| parse_err(lineno + 1, e.to_string()))?;
    if dims.cells() > 10_000_000 {
        return Err(parse_err(lineno + 1, "matrix implausibly large"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m1.min(4096));
    for (idx, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(idx + 1, format!("bad number `{}`", tok.trim())))
            })
            .collect::<Result<_>>()?;
        if row.len() != m2 {
            return Err(parse_err(
                idx + 1,
                format!("expected {m2} values, found {}", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(idx + 1, "matrix entries must be finite"));
        }
        rows.push(row);
    }
    if rows.len() != m1 {
        return Err(parse_err(1, format!("expected {m1} rows, found {}", rows.len())));
    }
    Ok(DMatrix::from_fn(m1, m2, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

/// Row-major CSV with `# m1 m2` header and optional embedded config comment.
pub fn format_matrix_csv(a: &DMatrix<f64>, config: Option<&serde_json::Value>) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {} {}\n", a.nrows(), a.ncols()));
    if let Some(cfg) = config {
        out.push_str(&format!("# config {cfg}\n"));
    }
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| a[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(
    a: &DMatrix<f64>,
    config: Option<&serde_json::Value>,
    path: &Path,
) -> Result<()> {
    fs::write(path, format_matrix_csv(a, config))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Fit configuration JSON
// ---------------------------------------------------------------------------

/// JSON fit configuration accepted by the `fit` front end.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitConfigFile {
    pub lambda_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceleration: Option<bool>,
}

/// Parses the fit configuration document.
pub fn parse_fit_config(text: &str) -> Result<FitConfigFile> {
    let cfg: FitConfigFile = serde_json::from_str(text)?;
    match cfg.lambda_mode.as_str() {
        "explicit" | "theorem" | "optimal" | "calibrated" => {}
        other => {
            return Err(Error::param(format!(
                "unknown lambda_mode `{other}` (want explicit|theorem|optimal|calibrated)"
            )))
        }
    }
    if let Some(l) = cfg.lambda {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::param("lambda must be positive and finite"));
        }
    }
    if let Some(tol) = cfg.tolerance {
        if !(tol > 0.0) {
            return Err(Error::param("tolerance must be positive"));
        }
    }
    if cfg.max_iterations == Some(0) {
        return Err(Error::param("max_iterations must be at least 1"));
    }
    Ok(cfg)
}

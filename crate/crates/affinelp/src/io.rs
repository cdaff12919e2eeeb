//! File formats: dataset CSV with a JSON sidecar header, constraint-row CSV,
//! and LP import/export.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every value bit for bit and rerunning a
//! seeded experiment reproduces files byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::lp::{LpProblem, LpRow};
use crate::model::Dataset;
use crate::synthesis::{feature_dim, ConstraintRow, RowMeta};
use crate::{Error, Result};

// ── Generic JSON helpers ─────────────────────────────────────────────

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ── Dataset CSV + header ─────────────────────────────────────────────

/// Sidecar header describing a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub single_trajectory: bool,
    pub has_omega: bool,
}

impl DatasetHeader {
    pub fn for_dataset(ds: &Dataset) -> Self {
        Self {
            n: ds.n(),
            m: ds.m(),
            d: ds.len(),
            single_trajectory: ds.is_single_trajectory(),
            has_omega: ds.omega().is_some(),
        }
    }
}

fn push_row(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

/// One CSV row per time index: `x…, u…, xplus…[, omega…]`.
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let (n, m) = (ds.n(), ds.m());
    let mut out = String::new();
    let mut header: Vec<String> = Vec::new();
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..n).map(|i| format!("xplus{i}")));
    if ds.omega().is_some() {
        header.extend((0..n).map(|i| format!("omega{i}")));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for k in 0..ds.len() {
        let x = ds.x().column(k);
        let u = ds.u().column(k);
        let xp = ds.xplus().column(k);
        let base = x.iter().chain(u.iter()).chain(xp.iter()).copied();
        match ds.omega() {
            Some(om) => {
                let omega_col = om.column(k);
                push_row(
                    &mut out,
                    base.chain(omega_col.iter().copied())
                        .collect::<Vec<_>>()
                        .into_iter(),
                );
            }
            None => push_row(&mut out, base.collect::<Vec<_>>().into_iter()),
        }
    }
    out
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse '{field}' as a number")))
}

/// Parses a dataset CSV against its header.
pub fn dataset_from_csv(text: &str, header: &DatasetHeader) -> Result<Dataset> {
    let (n, m, d) = (header.n, header.m, header.d);
    let expected_cols = n + m + n + if header.has_omega { n } else { 0 };
    let mut x = DMatrix::zeros(n, d);
    let mut u = DMatrix::zeros(m, d);
    let mut xplus = DMatrix::zeros(n, d);
    let mut omega = header.has_omega.then(|| DMatrix::zeros(n, d));
    let mut k = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue; // column-name header
        }
        if k >= d {
            return Err(Error::Parse(format!(
                "dataset csv has more than the declared {d} rows"
            )));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {expected_cols} fields, got {}",
                fields.len()
            )));
        }
        let mut at = 0;
        for i in 0..n {
            x[(i, k)] = parse_f64(fields[at], lineno)?;
            at += 1;
        }
        for i in 0..m {
            u[(i, k)] = parse_f64(fields[at], lineno)?;
            at += 1;
        }
        for i in 0..n {
            xplus[(i, k)] = parse_f64(fields[at], lineno)?;
            at += 1;
        }
        if let Some(om) = omega.as_mut() {
            for i in 0..n {
                om[(i, k)] = parse_f64(fields[at], lineno)?;
                at += 1;
            }
        }
        k += 1;
    }
    if k != d {
        return Err(Error::Parse(format!(
            "dataset csv has {k} rows, header declares {d}"
        )));
    }
    Dataset::new(x, u, xplus, omega, None, header.single_trajectory)
}

/// Writes `dataset.csv` and `dataset.json` under the given base name.
pub fn write_dataset(
    ds: &Dataset,
    csv_path: impl AsRef<Path>,
    header_path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(csv_path, dataset_to_csv(ds))?;
    save_json(header_path, &DatasetHeader::for_dataset(ds))
}

/// Loads a dataset from its CSV and JSON header files.
pub fn read_dataset(csv_path: impl AsRef<Path>, header_path: impl AsRef<Path>) -> Result<Dataset> {
    let header: DatasetHeader = load_json(header_path)?;
    let text = std::fs::read_to_string(csv_path)?;
    dataset_from_csv(&text, &header)
}

// ── Constraint-row CSV ───────────────────────────────────────────────

/// Flat CSV of constraint rows: `rho0..rho{p-1}, rhs, x…, u…, w…,
/// alpha_norm_sq` (last field empty for exact rows).
pub fn constraints_to_csv(rows: &[ConstraintRow], n: usize, m: usize) -> Result<String> {
    let p = feature_dim(n, m);
    let mut out = String::new();
    let mut header: Vec<String> = (0..p).map(|i| format!("rho{i}")).collect();
    header.push("rhs".into());
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..m).map(|i| format!("w{i}")));
    header.push("alpha_norm_sq".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for (idx, row) in rows.iter().enumerate() {
        if row.rho.len() != p {
            return Err(Error::Dimension(format!(
                "row {idx} has {} features, expected {p}",
                row.rho.len()
            )));
        }
        let mut fields: Vec<String> = row.rho.iter().map(|v| format!("{v}")).collect();
        fields.push(format!("{}", row.rhs));
        fields.extend(row.meta.x.iter().map(|v| format!("{v}")));
        fields.extend(row.meta.u.iter().map(|v| format!("{v}")));
        fields.extend(row.meta.w.iter().map(|v| format!("{v}")));
        fields.push(
            row.meta
                .alpha_norm_sq
                .map_or(String::new(), |v| format!("{v}")),
        );
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses rows written by [`constraints_to_csv`].
pub fn constraints_from_csv(text: &str, n: usize, m: usize) -> Result<Vec<ConstraintRow>> {
    let p = feature_dim(n, m);
    let expected = p + 1 + n + 2 * m + 1;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {expected} fields, got {}",
                fields.len()
            )));
        }
        let mut at = 0;
        let mut take = |count: usize| -> Result<Vec<f64>> {
            let mut vals = Vec::with_capacity(count);
            for _ in 0..count {
                vals.push(parse_f64(fields[at], lineno)?);
                at += 1;
            }
            Ok(vals)
        };
        let rho = DVector::from_vec(take(p)?);
        let rhs = take(1)?[0];
        let x = DVector::from_vec(take(n)?);
        let u = DVector::from_vec(take(m)?);
        let w = DVector::from_vec(take(m)?);
        let alpha_field = fields[at].trim();
        let alpha_norm_sq = if alpha_field.is_empty() {
            None
        } else {
            Some(parse_f64(alpha_field, lineno)?)
        };
        rows.push(ConstraintRow {
            rho,
            rhs,
            meta: RowMeta {
                x,
                u,
                w,
                alpha_norm_sq,
            },
        });
    }
    Ok(rows)
}

// ── LP import/export ─────────────────────────────────────────────────

/// JSON side of an exported LP: objective, bound and dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpHeader {
    pub objective: Vec<f64>,
    pub var_bound: Option<f64>,
    pub decision_dim: usize,
}

/// CSV side of an exported LP: `c0..c{p-1}, rhs` per row.
pub fn lp_rows_to_csv(lp: &LpProblem) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = (0..lp.decision_dim).map(|i| format!("c{i}")).collect();
    header.push("rhs".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &lp.rows {
        push_row(
            &mut out,
            row.coeffs.iter().copied().chain(std::iter::once(row.rhs)),
        );
    }
    out
}

pub fn lp_header(lp: &LpProblem) -> LpHeader {
    LpHeader {
        objective: lp.objective.as_slice().to_vec(),
        var_bound: lp.var_bound,
        decision_dim: lp.decision_dim,
    }
}

/// Rebuilds an [`LpProblem`] from its CSV rows and JSON header.
pub fn lp_from_parts(rows_csv: &str, header: &LpHeader) -> Result<LpProblem> {
    let p = header.decision_dim;
    let mut rows = Vec::new();
    for (lineno, line) in rows_csv.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(Error::Parse(format!(
                "line {lineno}: expected {} fields, got {}",
                p + 1,
                fields.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(p);
        for f in &fields[..p] {
            coeffs.push(parse_f64(f, lineno)?);
        }
        rows.push(LpRow {
            coeffs: DVector::from_vec(coeffs),
            rhs: parse_f64(fields[p], lineno)?,
        });
    }
    LpProblem::new(
        DVector::from_vec(header.objective.clone()),
        rows,
        header.var_bound,
    )
}

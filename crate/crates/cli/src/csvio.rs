//! Long-format CSV ingestion: one row per `(i, t, k)` cell.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use bprttd_core::{CountTensor, DesignData, Dims};

use crate::error::{CliError, Result};

/// Missing cells named in an error message.
const MISSING_SHOWN: usize = 10;

/// Original labels of every axis and covariate, in dense-index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub i: Vec<String>,
    pub t: Vec<String>,
    pub k: Vec<String>,
    pub covariates: Vec<String>,
}

impl Labels {
    /// `1..=n` labels for every axis.
    pub fn numbered(dims: Dims, covariates: Vec<String>) -> Self {
        let seq = |n: usize| (1..=n).map(|v| v.to_string()).collect();
        Self {
            i: seq(dims.n),
            t: seq(dims.t),
            k: seq(dims.k),
            covariates,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.i.len(), self.t.len(), self.k.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub counts: CountTensor,
    pub data: DesignData,
    pub labels: Labels,
}

struct Table {
    path: PathBuf,
    columns: Vec<String>,
    keys: Vec<[String; 3]>,
    values: Vec<Vec<String>>,
    lines: Vec<u64>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut key_pos = [usize::MAX; 3];
    for (slot, name) in key_pos.iter_mut().zip(["i", "t", "k"]) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(path, format!("header has no `{name}` column")))?;
    }
    let value_pos: Vec<usize> = (0..header.len()).filter(|c| !key_pos.contains(c)).collect();
    let mut table = Table {
        path: path.to_path_buf(),
        columns: value_pos.iter().map(|&c| header[c].clone()).collect(),
        keys: Vec::new(),
        values: Vec::new(),
        lines: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, expected_len, len } => CliError::data(
                path,
                format!(
                    "ragged row at line {}: expected {expected_len} fields, found {len}",
                    pos.as_ref().map_or(0, |p| p.line())
                ),
            ),
            _ => CliError::csv(path, e),
        })?;
        table.lines.push(rec.position().map_or(0, |p| p.line()));
        table.keys.push(key_pos.map(|c| rec[c].to_string()));
        table
            .values
            .push(value_pos.iter().map(|&c| rec[c].to_string()).collect());
    }
    Ok(table)
}

/// Dense index per label: numeric order when every label is an integer,
/// first appearance otherwise.
fn axis_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashMap::new();
    let mut order = Vec::new();
    for l in labels {
        if !seen.contains_key(l) {
            seen.insert(l.to_string(), order.len());
            order.push(l.to_string());
        }
    }
    let numeric: Option<Vec<i64>> = order.iter().map(|l| l.parse().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(i64, String)> = nums.into_iter().zip(order).collect();
        paired.sort_by_key(|p| p.0);
        order = paired.into_iter().map(|p| p.1).collect();
    }
    order
}

fn index_of(labels: &[String]) -> HashMap<&str, usize> {
    labels.iter().enumerate().map(|(n, l)| (l.as_str(), n)).collect()
}

/// Maps every row of `table` to a cell of `labels`, rejecting duplicates and
/// unknown labels and requiring every cell to be present.
fn cell_rows(table: &Table, labels: &Labels) -> Result<Vec<usize>> {
    let dims = labels.dims();
    let maps = [index_of(&labels.i), index_of(&labels.t), index_of(&labels.k)];
    let mut row_of = vec![usize::MAX; dims.cells()];
    for (row, key) in table.keys.iter().enumerate() {
        let mut idx = [0; 3];
        for (a, (map, l)) in maps.iter().zip(key).enumerate() {
            idx[a] = *map.get(l.as_str()).ok_or_else(|| {
                CliError::data(
                    &table.path,
                    format!("line {}: label `{l}` does not occur in the data file", table.lines[row]),
                )
            })?;
        }
        let cell = dims.cell(idx[0], idx[1], idx[2]);
        if row_of[cell] != usize::MAX {
            return Err(CliError::data(
                &table.path,
                format!(
                    "duplicate cell (i={}, t={}, k={}) at line {}, first seen at line {}",
                    key[0], key[1], key[2], table.lines[row], table.lines[row_of[cell]]
                ),
            ));
        }
        row_of[cell] = row;
    }
    let missing: Vec<usize> = (0..dims.cells()).filter(|&c| row_of[c] == usize::MAX).collect();
    if !missing.is_empty() {
        let shown: Vec<String> = missing
            .iter()
            .take(MISSING_SHOWN)
            .map(|&c| {
                let (i, t, k) = dims.unravel(c);
                format!("({}, {}, {})", labels.i[i], labels.t[t], labels.k[k])
            })
            .collect();
        return Err(CliError::data(
            &table.path,
            format!(
                "{} of {} cells missing; first absent (i, t, k): {}",
                missing.len(),
                dims.cells(),
                shown.join(", ")
            ),
        ));
    }
    Ok(row_of)
}

fn parse_count(s: &str, path: &Path, line: u64) -> Result<u64> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(CliError::data(path, format!("negative count {s} at line {line}"))),
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(CliError::data(
            path,
            format!("count `{s}` at line {line} is not a non-negative integer"),
        )),
    }
}

fn parse_real(s: &str, what: &str, path: &Path, line: u64) -> Result<f64> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::data(
            path,
            format!("{what} `{s}` at line {line} is not a finite number"),
        )),
    }
}

fn is_offset(column: &str) -> bool {
    column.starts_with("offset")
}

/// Multiplies the offset columns of `table` into `u`.
fn apply_offsets(table: &Table, columns: &[usize], row_of: &[usize], u: &mut [f64]) -> Result<()> {
    for (cell, &row) in row_of.iter().enumerate() {
        for &c in columns {
            let line = table.lines[row];
            let v = parse_real(&table.values[row][c], &table.columns[c], &table.path, line)?;
            if v < 0.0 {
                return Err(CliError::data(
                    &table.path,
                    format!("negative offset {v} in `{}` at line {line}", table.columns[c]),
                ));
            }
            u[cell] *= v;
        }
    }
    Ok(())
}

fn append_covariates(table: &Table, columns: &[usize], row_of: &[usize], x: &mut [Vec<f64>]) -> Result<()> {
    for (cell, &row) in row_of.iter().enumerate() {
        for &c in columns {
            let v = parse_real(&table.values[row][c], &table.columns[c], &table.path, table.lines[row])?;
            x[cell].push(v);
        }
    }
    Ok(())
}

/// Loads a complete long-format table with columns `i,t,k,count`, any number
/// of `offset*` columns (multiplied into `u`, which defaults to 1) and the
/// remaining columns as covariates, in file order.
pub fn load_long_csv(path: &Path) -> Result<LoadedData> {
    load_inputs(path, None, None)
}

/// Like [`load_long_csv`], with optional side tables keyed by `i,t,k` that
/// contribute extra covariate columns or extra offset factors.
pub fn load_inputs(data: &Path, covariates: Option<&Path>, offsets: Option<&Path>) -> Result<LoadedData> {
    let main = read_table(data)?;
    let count_col = main
        .columns
        .iter()
        .position(|c| c == "count")
        .ok_or_else(|| CliError::data(data, "header has no `count` column"))?;
    let labels_i = axis_labels(main.keys.iter().map(|k| k[0].as_str()));
    let labels_t = axis_labels(main.keys.iter().map(|k| k[1].as_str()));
    let labels_k = axis_labels(main.keys.iter().map(|k| k[2].as_str()));
    let mut labels = Labels {
        i: labels_i,
        t: labels_t,
        k: labels_k,
        covariates: Vec::new(),
    };
    let dims = labels.dims();
    if dims.cells() == 0 {
        return Err(CliError::data(data, "no data rows"));
    }
    let row_of = cell_rows(&main, &labels)?;
    let counts: Vec<u64> = row_of
        .iter()
        .map(|&r| parse_count(&main.values[r][count_col], data, main.lines[r]))
        .collect::<Result<_>>()?;

    let mut u = vec![1.0; dims.cells()];
    let mut x: Vec<Vec<f64>> = vec![Vec::new(); dims.cells()];
    let others: Vec<usize> = (0..main.columns.len()).filter(|&c| c != count_col).collect();
    let (off_cols, cov_cols): (Vec<usize>, Vec<usize>) = others.into_iter().partition(|&c| is_offset(&main.columns[c]));
    apply_offsets(&main, &off_cols, &row_of, &mut u)?;
    append_covariates(&main, &cov_cols, &row_of, &mut x)?;
    labels
        .covariates
        .extend(cov_cols.iter().map(|&c| main.columns[c].clone()));

    if let Some(path) = covariates {
        let side = read_table(path)?;
        let rows = cell_rows(&side, &labels)?;
        let cols: Vec<usize> = (0..side.columns.len()).collect();
        append_covariates(&side, &cols, &rows, &mut x)?;
        labels.covariates.extend(side.columns.iter().cloned());
    }
    if let Some(path) = offsets {
        let side = read_table(path)?;
        let rows = cell_rows(&side, &labels)?;
        let cols: Vec<usize> = (0..side.columns.len()).collect();
        apply_offsets(&side, &cols, &rows, &mut u)?;
    }

    let p = labels.covariates.len();
    if p == 0 {
        return Err(CliError::data(
            data,
            "no covariate columns (add an `intercept` column of ones)",
        ));
    }
    let mut seen = HashMap::new();
    for (j, name) in labels.covariates.iter().enumerate() {
        if let Some(first) = seen.insert(name.as_str(), j) {
            return Err(CliError::data(
                data,
                format!("covariate `{name}` appears twice (columns {} and {})", first + 1, j + 1),
            ));
        }
    }
    for (cell, (&y, &w)) in counts.iter().zip(&u).enumerate() {
        if w == 0.0 && y > 0 {
            let (i, t, k) = dims.unravel(cell);
            return Err(CliError::data(
                data,
                format!(
                    "cell (i={}, t={}, k={}) has offset 0 but count {y}",
                    labels.i[i], labels.t[t], labels.k[k]
                ),
            ));
        }
    }
    let counts = CountTensor::new(dims, counts)?;
    let design = DesignData::new(dims, p, x.concat(), u)?;
    Ok(LoadedData {
        counts,
        data: design,
        labels,
    })
}

/// Writes the long-format table read by [`load_long_csv`]: `i,t,k,count,offset`
/// followed by the covariates. Numbers use the shortest round-trip form.
pub fn write_long_csv<W: Write>(out: W, loaded: &LoadedData) -> csv::Result<()> {
    let LoadedData { counts, data, labels } = loaded;
    let dims = counts.dims();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["i", "t", "k", "count", "offset"];
    header.extend(labels.covariates.iter().map(String::as_str));
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for cell in 0..dims.cells() {
        let (i, t, k) = dims.unravel(cell);
        rec.clear();
        rec.push(labels.i[i].clone());
        rec.push(labels.t[t].clone());
        rec.push(labels.k[k].clone());
        rec.push(counts.as_slice()[cell].to_string());
        rec.push(data.offset(cell).to_string());
        rec.extend(data.x(cell).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

//! Dataset files: feature and kernel matrices, labels.
//!
//! CSV files have no header; blank lines and lines starting with `#` are
//! skipped. Binary kernels are a little-endian `u64` n followed by n² `f64`
//! values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use latefusion::{
    compute_kernel, preprocess_kernel, validate_and_symmetrize, ClusterLabels, FeatureView,
    KernelMatrix,
};
use nalgebra::DMatrix;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_rows(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rows = Vec::new();
    for record in csv_reader(path)?.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, record));
    }
    Ok(rows)
}

/// Reads a dense numeric matrix; every row must have the same width.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = csv_rows(path)?;
    let width = rows.first().map_or(0, |(_, r)| r.len());
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, record) in &rows {
        if record.len() != width {
            return Err(parse_error(
                path,
                *line,
                format!("{} fields, expected {width}", record.len()),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, *line, format!("not a number: {field:?}")))?;
            values.push(v);
        }
    }
    if rows.is_empty() {
        return Err(parse_error(path, 0, "no data rows"));
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &values))
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let io = |e| HarnessError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_kernel_bin(path: &Path) -> Result<DMatrix<f64>> {
    let io = |e| HarnessError::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    let truncated = |expected: u64| HarnessError::TruncatedFile {
        path: path.to_path_buf(),
        expected,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 8 {
        return Err(truncated(8));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let expected = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(8))
        .ok_or_else(|| parse_error(path, 0, format!("header n = {n} is too large")))?;
    if (bytes.len() as u64) < expected {
        return Err(truncated(expected));
    }
    if (bytes.len() as u64) > expected {
        return Err(parse_error(
            path,
            0,
            format!(
                "{} trailing bytes after the payload",
                bytes.len() as u64 - expected
            ),
        ));
    }
    let n = n as usize;
    let values: Vec<f64> = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DMatrix::from_row_slice(n, n, &values))
}

pub fn write_kernel_bin(path: &Path, k: &DMatrix<f64>) -> Result<()> {
    let io = |e| HarnessError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&(k.nrows() as u64).to_le_bytes()).map_err(io)?;
    for i in 0..k.nrows() {
        for v in k.row(i).iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Kernel from `.bin` or, for any other extension, CSV.
pub fn read_kernel_file(path: &Path) -> Result<DMatrix<f64>> {
    let m = if path.extension().is_some_and(|e| e == "bin") {
        read_kernel_bin(path)?
    } else {
        read_matrix_csv(path)?
    };
    if !m.is_square() {
        return Err(parse_error(
            path,
            0,
            format!("kernel is {}x{}, not square", m.nrows(), m.ncols()),
        ));
    }
    Ok(m)
}

/// One integer label per line. Distinct values are mapped to `0..k` in
/// ascending order, so `1..=10` becomes `0..=9`.
pub fn read_labels(path: &Path) -> Result<ClusterLabels> {
    let mut raw = Vec::new();
    for (line, record) in csv_rows(path)? {
        if record.len() != 1 {
            return Err(parse_error(
                path,
                line,
                format!("{} fields, expected 1", record.len()),
            ));
        }
        let v: i64 = record[0].parse().map_err(|_| {
            parse_error(
                path,
                line,
                format!("not an integer label: {:?}", &record[0]),
            )
        })?;
        raw.push(v);
    }
    if raw.is_empty() {
        return Err(parse_error(path, 0, "no labels"));
    }
    let mut distinct = raw.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels = raw
        .iter()
        .map(|v| distinct.binary_search(v).expect("value is present"))
        .collect();
    Ok(ClusterLabels::new(labels))
}

pub fn write_labels(path: &Path, labels: &ClusterLabels) -> Result<()> {
    let io = |e| HarnessError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for l in labels.as_slice() {
        writeln!(w, "{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub kernels: Vec<KernelMatrix<f64>>,
    pub truth: ClusterLabels,
    /// Largest `|K − Kᵀ|` entry repaired per view; zero for computed kernels.
    pub max_asymmetry: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.truth.len()
    }

    pub fn m(&self) -> usize {
        self.kernels.len()
    }
}

fn data_error(context: String) -> impl FnOnce(latefusion::Error) -> HarnessError {
    move |source| HarnessError::Data { context, source }
}

/// Kernels for every view of `config`, validated, symmetrised and
/// preprocessed when `preprocess` is set, together with the labels.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    config.validate()?;
    let truth = read_labels(&config.label_file)?;
    let mut kernels = Vec::new();
    let mut max_asymmetry = Vec::new();
    if config.feature_files.is_empty() {
        for (p, path) in config.kernel_files.iter().enumerate() {
            let raw = read_kernel_file(path)?;
            let sym =
                validate_and_symmetrize(raw, p).map_err(data_error(path.display().to_string()))?;
            kernels.push(sym.kernel);
            max_asymmetry.push(sym.max_asymmetry);
        }
    } else {
        for (p, path) in config.feature_files.iter().enumerate() {
            let view = FeatureView::new(read_matrix_csv(path)?, p)
                .map_err(data_error(path.display().to_string()))?;
            let kernel = compute_kernel(&view, &config.spec_for(p))
                .map_err(data_error(path.display().to_string()))?;
            kernels.push(kernel);
            max_asymmetry.push(0.0);
        }
    }
    for (p, k) in kernels.iter().enumerate() {
        if k.n() != truth.len() {
            return Err(HarnessError::InconsistentViews(format!(
                "view {p} has {} samples but there are {} labels",
                k.n(),
                truth.len()
            )));
        }
    }
    if config.preprocess {
        kernels = kernels
            .iter()
            .map(|k| {
                preprocess_kernel(k)
                    .map_err(data_error(format!("preprocessing view {}", k.view_id())))
            })
            .collect::<Result<_>>()?;
    }
    Ok(Dataset {
        kernels,
        truth,
        max_asymmetry,
    })
}

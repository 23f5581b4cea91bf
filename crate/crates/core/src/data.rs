//! Dataset loading and the preprocessing steps of a replicate run: random
//! train/test split, standard scaling fitted on the training rows, and
//! one-hot targets.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// Class indices into `class_labels`.
    pub y: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Distinct original labels in sorted order.
    pub class_labels: Vec<String>,
}

/// How the label column of a CSV file is identified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// A header name when one matches, otherwise a zero-based index.
    fn resolve(&self, headers: &[String]) -> Result<usize> {
        match self {
            LabelColumn::Name(name) => {
                if let Some(i) = headers.iter().position(|h| h == name) {
                    return Ok(i);
                }
                match name.parse::<usize>() {
                    Ok(i) if i < headers.len() => Ok(i),
                    _ => Err(Error::arg(format!("label column '{name}' not found"))),
                }
            }
            LabelColumn::Index(i) if *i < headers.len() => Ok(*i),
            LabelColumn::Index(i) => Err(Error::arg(format!(
                "label column index {i} out of range for {} columns",
                headers.len()
            ))),
        }
    }
}

impl From<&str> for LabelColumn {
    fn from(s: &str) -> Self {
        LabelColumn::Name(s.to_owned())
    }
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, feature_names: Vec<String>, class_labels: Vec<String>) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Dimension {
                expected: x.n_rows(),
                got: y.len(),
            });
        }
        if feature_names.len() != x.n_cols() {
            return Err(Error::Dimension {
                expected: x.n_cols(),
                got: feature_names.len(),
            });
        }
        if x.n_rows() < 2 {
            return Err(Error::arg(format!(
                "dataset needs at least 2 samples, got {}",
                x.n_rows()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= class_labels.len()) {
            return Err(Error::arg(format!(
                "label index {bad} outside {} classes",
                class_labels.len()
            )));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("dataset contains non-finite values"));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            class_labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Rows at `indices`, keeping the full label vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn distinct_classes(&self) -> usize {
        self.y.iter().collect::<BTreeSet<_>>().len()
    }
}

/// Labels sort numerically when every label parses as a number, otherwise
/// lexicographically.
fn sort_labels(labels: &mut [String]) {
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.trim().parse::<f64>().ok()).collect();
    if numeric.is_some() {
        labels.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| a.cmp(b))
        });
    } else {
        labels.sort();
    }
}

struct Table {
    feature_names: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
    /// Cells of the skipped column, if one was skipped.
    skipped: Vec<String>,
}

fn read_table(path: &Path, skip: impl FnOnce(&[String]) -> Result<Option<usize>>) -> Result<Table> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Parse(format!("{}: empty file", path.display())));
    }
    let skip_idx = skip(&headers)?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != skip_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut skipped = Vec::new();
    let mut n_rows = 0;
    for (r, record) in reader.records().enumerate() {
        // header is line 1
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::Csv {
                row: line,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == skip_idx {
                skipped.push(cell.to_owned());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Csv {
                        row: line,
                        column: c + 1,
                        message: format!("non-numeric value '{cell}'"),
                    })
                }
            }
        }
        n_rows += 1;
    }
    Ok(Table {
        feature_names,
        values,
        n_rows,
        skipped,
    })
}

/// Reads a headed CSV file. Every column other than the label column must
/// hold finite decimal reals.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let Table {
        feature_names,
        values,
        skipped: raw_labels,
        ..
    } = read_table(path, |headers| label.resolve(headers).map(Some))?;
    if raw_labels.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: need at least 2 data rows, found {}",
            path.display(),
            raw_labels.len()
        )));
    }

    let mut class_labels: Vec<String> = raw_labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    sort_labels(&mut class_labels);
    let y = raw_labels
        .iter()
        .map(|l| class_labels.iter().position(|c| c == l).expect("label collected above"))
        .collect();
    let x = Matrix::new(raw_labels.len(), feature_names.len(), values)?;
    Dataset::new(x, y, feature_names, class_labels)
}

/// Reads an all-numeric headed CSV file for prediction, dropping the
/// column named `drop` when present. Returns the feature names and rows.
pub fn load_features(path: impl AsRef<Path>, drop: Option<&str>) -> Result<(Vec<String>, Matrix)> {
    let table = read_table(path.as_ref(), |headers| {
        Ok(drop.and_then(|name| headers.iter().position(|h| h == name)))
    })?;
    if table.n_rows == 0 {
        return Err(Error::Parse(format!("{}: no data rows", path.as_ref().display())));
    }
    let x = Matrix::new(table.n_rows, table.feature_names.len(), table.values)?;
    Ok((table.feature_names, x))
}

/// Uniformly random split; the test part gets `round(test_fraction * n)`
/// rows, kept within `[1, n - 1]`.
pub fn train_test_split<R: Rng + ?Sized>(d: &Dataset, test_fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::arg(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = d.n_samples();
    if n < 2 {
        return Err(Error::arg("cannot split fewer than 2 samples"));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let (test_idx, train_idx) = order.split_at(n_test);
    let train = d.subset(train_idx);
    let test = d.subset(test_idx);
    let classes = train.distinct_classes();
    if classes < 2 {
        return Err(Error::DegenerateSplit(classes));
    }
    Ok((train, test))
}

/// Per-feature mean and scale of a standard scaler.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Column means and population standard deviations. Columns whose spread is
/// indistinguishable from rounding noise get scale 1.
pub fn fit_scaler(x: &Matrix) -> Result<ScalerParams> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::arg("cannot fit a scaler on zero samples"));
    }
    let mut mean = vec![0.0; x.n_cols()];
    let mut scale = vec![1.0; x.n_cols()];
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        mean[j] = m;
        if sd.is_finite() && sd > 10.0 * f64::EPSILON * m.abs().max(f64::MIN_POSITIVE) {
            scale[j] = sd;
        }
    }
    Ok(ScalerParams { mean, scale })
}

impl ScalerParams {
    fn check(&self, x: &Matrix) -> Result<()> {
        if x.n_cols() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: x.n_cols(),
            });
        }
        Ok(())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                out.set(i, j, (x.get(i, j) - self.mean[j]) / self.scale[j]);
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                out.set(i, j, x.get(i, j) * self.scale[j] + self.mean[j]);
            }
        }
        Ok(out)
    }
}

pub fn transform_scaler(params: &ScalerParams, x: &Matrix) -> Result<Matrix> {
    params.transform(x)
}

/// `n x n_classes` indicator matrix.
pub fn one_hot(y: &[usize], n_classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(y.len(), n_classes);
    for (i, &c) in y.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::arg(format!("label {c} outside {n_classes} classes")));
        }
        m.set(i, c, 1.0);
    }
    Ok(m)
}

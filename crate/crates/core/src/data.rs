//! Datasets: CSV ingestion, train/test splitting with normalization, and the
//! synthetic UBall5D problem.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("target column {0:?} not found in header")]
    MissingTarget(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column:?}: non-finite value {value:?}")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset needs at least one row and one feature")]
    Empty,
    #[error("feature columns and target must all have {0} rows")]
    Shape(usize),
    #[error("split ratio {ratio} on {n} rows leaves an empty partition")]
    DegenerateSplit { ratio: f64, n: usize },
}

/// Feature matrix (column-major) and target vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    feature_names: Vec<String>,
    target_name: String,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        columns: Vec<Vec<f64>>,
        y: Vec<f64>,
    ) -> Result<Self, DataError> {
        if y.is_empty() || columns.is_empty() {
            return Err(DataError::Empty);
        }
        if columns.iter().any(|c| c.len() != y.len()) || feature_names.len() != columns.len() {
            return Err(DataError::Shape(y.len()));
        }
        let target_name = target_name.into();
        for (t, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: t,
                    column: target_name.clone(),
                    value: v.to_string(),
                });
            }
        }
        for (d, col) in columns.iter().enumerate() {
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    row: t,
                    column: feature_names[d].clone(),
                    value: col[t].to_string(),
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            feature_names,
            target_name,
            columns,
            y,
        })
    }

    /// Dataset with generated feature names `x0..` and target name `y`.
    pub fn from_columns(
        name: impl Into<String>,
        columns: Vec<Vec<f64>>,
        y: Vec<f64>,
    ) -> Result<Self, DataError> {
        let names = (0..columns.len()).map(|d| format!("x{d}")).collect();
        Dataset::new(name, names, "y", columns, y)
    }

    pub fn from_rows(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        y: Vec<f64>,
    ) -> Result<Self, DataError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DataError::Shape(rows.len()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Dataset::from_columns(name, columns, y)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn column(&self, d: usize) -> &[f64] {
        &self.columns[d]
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&t| c[t]).collect())
                .collect(),
            y: indices.iter().map(|&t| self.y[t]).collect(),
        }
    }

    /// Writes features followed by the target as the last column. Values use
    /// the shortest representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for t in 0..self.n_rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[t].to_string()).collect();
            rec.push(self.y[t].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Reads a headered CSV. The target is the named column, or the last one.
pub fn read_csv<R: Read>(
    reader: R,
    name: &str,
    target: Option<&str>,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(DataError::Empty);
    }
    let target_idx = match target {
        Some(t) => header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| DataError::MissingTarget(t.to_string()))?,
        None => header.len() - 1,
    };
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    let mut y = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        let mut d = 0;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: header[j].clone(),
                    value: cell.to_string(),
                });
            }
            if j == target_idx {
                y.push(v);
            } else {
                columns[d].push(v);
                d += 1;
            }
        }
    }
    let target_name = header[target_idx].clone();
    let feature_names = header
        .into_iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h)
        .collect();
    Dataset::new(name, feature_names, target_name, columns, y)
}

pub fn load_csv(path: impl AsRef<Path>, target: Option<&str>) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned());
    let f = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(f), &name, target)
}

/// Mean and population standard deviation of one column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnScale {
    pub mean: f64,
    pub std: f64,
    /// Constant columns pass through unchanged.
    pub constant: bool,
}

impl ColumnScale {
    pub fn fit(values: &[f64]) -> Self {
        // moments of values / max|v|, so tiny and huge columns neither
        // underflow nor overflow when squared
        let n = values.len() as f64;
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(scale > 0.0 && scale.is_finite()) {
            return ColumnScale {
                mean: values.iter().sum::<f64>() / n,
                std: 0.0,
                constant: true,
            };
        }
        let mean_s = values.iter().map(|v| v / scale).sum::<f64>() / n;
        let var_s = values.iter().map(|v| (v / scale - mean_s).powi(2)).sum::<f64>() / n;
        let std_s = var_s.sqrt();
        ColumnScale {
            mean: mean_s * scale,
            std: std_s * scale,
            constant: !(std_s > 1e-12),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.constant {
            v
        } else {
            (v - self.mean) / self.std
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.constant {
            v
        } else {
            v * self.std + self.mean
        }
    }
}

/// Training-split statistics applied to both partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub features: Vec<ColumnScale>,
    pub target: ColumnScale,
}

impl Normalization {
    pub fn fit(train: &Dataset) -> Self {
        Normalization {
            features: train.columns.iter().map(|c| ColumnScale::fit(c)).collect(),
            target: ColumnScale::fit(&train.y),
        }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let columns = data
            .columns
            .iter()
            .zip(&self.features)
            .map(|(c, s)| c.iter().map(|&v| s.apply(v)).collect())
            .collect();
        Dataset {
            name: data.name.clone(),
            feature_names: data.feature_names.clone(),
            target_name: data.target_name.clone(),
            columns,
            y: data.y.iter().map(|&v| self.target.apply(v)).collect(),
        }
    }

    /// Names of feature columns left unnormalized because they are constant.
    pub fn constant_features<'a>(&self, data: &'a Dataset) -> Vec<&'a str> {
        self.features
            .iter()
            .zip(&data.feature_names)
            .filter(|(s, _)| s.constant)
            .map(|(_, n)| n.as_str())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Dataset,
    pub test: Dataset,
    pub normalization: Normalization,
}

impl SplitDataset {
    /// Normalizes both partitions with statistics fitted on `train`.
    pub fn from_partitions(train: Dataset, test: Dataset) -> Self {
        let normalization = Normalization::fit(&train);
        SplitDataset {
            train: normalization.apply(&train),
            test: normalization.apply(&test),
            normalization,
        }
    }
}

/// Random train/test partition with `round(ratio * N)` training rows, then
/// normalization from training statistics.
pub fn split_normalize<R: Rng + ?Sized>(
    data: &Dataset,
    ratio: f64,
    rng: &mut R,
) -> Result<SplitDataset, DataError> {
    let n = data.n_rows();
    let n_train = (ratio * n as f64).round() as usize;
    if !(ratio > 0.0 && ratio < 1.0) || n < 2 || n_train == 0 || n_train >= n {
        return Err(DataError::DegenerateSplit { ratio, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (tr, te) = idx.split_at(n_train);
    Ok(SplitDataset::from_partitions(
        data.subset(tr),
        data.subset(te),
    ))
}

pub const UBALL5D_DIM: usize = 5;
pub const UBALL5D_TRAIN: usize = 1024;
pub const UBALL5D_TEST: usize = 5000;
/// Uniform sampling range for UBall5D inputs.
pub const UBALL5D_DOMAIN: (f64, f64) = (0.05, 6.05);

/// `10 / (5 + sum_i (x_i - 3)^2)`
pub fn uball5d_target(x: &[f64]) -> f64 {
    10.0 / (5.0 + x.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>())
}

/// Raw (unnormalized) UBall5D samples drawn uniformly from `domain`.
pub fn sample_uball5d<R: Rng + ?Sized>(n: usize, domain: (f64, f64), rng: &mut R) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..UBALL5D_DIM)
                .map(|_| rng.random_range(domain.0..domain.1))
                .collect()
        })
        .collect();
    let y = rows.iter().map(|r| uball5d_target(r)).collect();
    let mut d = Dataset::from_rows("uball5d", &rows, y).expect("n > 0");
    d.name = "uball5d".into();
    d
}

pub fn generate_uball5d<R: Rng + ?Sized>(n_train: usize, n_test: usize, rng: &mut R) -> SplitDataset {
    generate_uball5d_in(n_train, n_test, UBALL5D_DOMAIN, rng)
}

pub fn generate_uball5d_in<R: Rng + ?Sized>(
    n_train: usize,
    n_test: usize,
    domain: (f64, f64),
    rng: &mut R,
) -> SplitDataset {
    assert!(n_train > 0 && n_test > 0, "UBall5D needs nonempty partitions");
    let train = sample_uball5d(n_train, domain, rng);
    let test = sample_uball5d(n_test, domain, rng);
    SplitDataset::from_partitions(train, test)
}

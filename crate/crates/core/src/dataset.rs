//! Sample matrices, feature standardisation and CSV loading.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KmseError, Result};

/// Per-feature statistics recorded by [`Dataset::standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features whose variance was zero: centred but not scaled.
    pub constant_features: Vec<usize>,
}

/// An `n × d` real sample, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(KmseError::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), d, values)
    }

    pub fn from_flat(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * d {
            return Err(KmseError::DimensionMismatch {
                expected: n * d,
                found: values.len(),
            });
        }
        if n > 0 && d == 0 {
            return Err(KmseError::Input("rows must have at least one feature".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KmseError::Input("dataset contains non-finite values".into()));
        }
        Ok(Dataset {
            n,
            d,
            values,
            standardization: None,
        })
    }

    /// One-dimensional dataset from scalar points.
    pub fn from_scalars(points: &[f64]) -> Result<Self> {
        Self::from_flat(points.len(), 1, points.to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            n: indices.len(),
            d: self.d,
            values,
            standardization: self.standardization.clone(),
        }
    }

    /// Per-feature mean.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.n as f64;
        }
        mean
    }

    /// Centres every feature and scales it to unit population (1/n) standard
    /// deviation. Zero-variance features are centred only and flagged.
    pub fn standardize(&self) -> Result<Dataset> {
        if self.n < 2 {
            return Err(KmseError::Input(format!(
                "standardisation needs at least 2 rows, got {}",
                self.n
            )));
        }
        let mean = self.column_means();
        let mut var = vec![0.0; self.d];
        for row in self.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut std = Vec::with_capacity(self.d);
        let mut constant_features = Vec::new();
        for (j, v) in var.iter().enumerate() {
            let s = (v / self.n as f64).sqrt();
            // relative to the feature's magnitude, so round-off in the
            // centring of a constant column does not count as spread
            if s <= 1e-12 * (1.0 + mean[j].abs()) {
                constant_features.push(j);
                std.push(1.0);
            } else {
                std.push(s);
            }
        }
        let mut values = self.values.clone();
        for row in values.chunks_exact_mut(self.d) {
            for (j, x) in row.iter_mut().enumerate() {
                *x = if constant_features.contains(&j) {
                    0.0
                } else {
                    (*x - mean[j]) / std[j]
                };
            }
        }
        Ok(Dataset {
            n: self.n,
            d: self.d,
            values,
            standardization: Some(Standardization {
                mean,
                std,
                constant_features,
            }),
        })
    }

    /// Seeded shuffle, then the last `test_frac` of rows (rounded, at least
    /// one) become the test set.
    pub fn shuffle_split(&self, test_frac: f64, rng: &mut impl Rng) -> Result<(Dataset, Dataset)> {
        if !(test_frac > 0.0 && test_frac < 1.0) {
            return Err(KmseError::Config(format!(
                "test fraction must lie in (0, 1), got {test_frac}"
            )));
        }
        let n_test = ((self.n as f64) * test_frac).round().max(1.0) as usize;
        if n_test >= self.n {
            return Err(KmseError::Input(format!(
                "{} rows are too few for a train/test split",
                self.n
            )));
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(rng);
        let (train, test) = order.split_at(self.n - n_test);
        Ok((self.select(train), self.select(test)))
    }
}

/// Reads comma-separated numeric rows. A first line that does not parse as
/// numbers is treated as a header and skipped.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| KmseError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(KmseError::Parse {
                    line,
                    message: format!("non-numeric cell ({e})"),
                })
            }
        };
        if row.iter().any(|v| !v.is_finite()) {
            return Err(KmseError::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(KmseError::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
        n += 1;
    }
    let d = width.ok_or_else(|| KmseError::Input("CSV contains no data rows".into()))?;
    Dataset::from_flat(n, d, values)
}

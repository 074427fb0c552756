//! Serialized matrix format and the JSON-lines results store.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix<T: Real>(m: &DMatrix<T>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)].as_f64())).collect();
        MatrixJson { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix<T: Real>(&self) -> Option<DMatrix<T>> {
        if self.data.len() != self.rows * self.cols {
            return None;
        }
        Some(DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&x| T::lit(x))))
    }
}

/// Append-only JSON-lines file. Each call to [`ResultsStore::append`]
/// writes exactly one line.
pub struct ResultsStore {
    out: BufWriter<File>,
}

impl ResultsStore {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResultsStore { out: BufWriter::new(file) })
    }

    pub fn append<R: Serialize>(&mut self, record: &R) -> std::io::Result<()> {
        let line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

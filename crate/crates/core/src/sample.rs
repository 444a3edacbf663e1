use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Grid;

/// `n` trajectories observed on a common grid, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalSample {
    values: Vec<f64>,
    n: usize,
    grid: Grid,
    pub seed: Option<u64>,
    pub model_tag: String,
}

/// Provenance written next to a sample file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub model: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub grid: Grid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_halfwidth: Option<f64>,
}

impl FunctionalSample {
    /// Builds a sample from row-major values; every entry must be finite.
    pub fn new(values: Vec<f64>, grid: Grid) -> Result<Self> {
        let m = grid.len();
        if values.is_empty() || !values.len().is_multiple_of(m) {
            return Err(invalid(format!(
                "{} values do not form rows of length {m}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value at row {}, column {}",
                pos / m,
                pos % m
            )));
        }
        Ok(Self {
            n: values.len() / m,
            values,
            grid,
            seed: None,
            model_tag: String::from("data"),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, grid: Grid) -> Result<Self> {
        let m = grid.len();
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(invalid(format!(
                "row {i} has {} values, expected {m}",
                rows[i].len()
            )));
        }
        Self::new(rows.into_iter().flatten().collect(), grid)
    }

    pub fn with_provenance(mut self, model_tag: impl Into<String>, seed: Option<u64>) -> Self {
        self.model_tag = model_tag.into();
        self.seed = seed;
        self
    }

    /// Replaces the grid by another one with the same number of locations.
    pub fn with_grid(mut self, grid: Grid) -> Result<Self> {
        if grid.len() != self.grid.len() {
            return Err(invalid(
                "replacement grid has a different number of locations",
            ));
        }
        self.grid = grid;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.grid.len())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

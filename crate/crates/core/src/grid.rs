use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Ordered observation locations in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    locations: Vec<f64>,
}

impl Grid {
    pub fn new(locations: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(invalid("grid must contain at least one location"));
        }
        for (i, &t) in locations.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("grid location {i} = {t} is not in [0, 1]")));
            }
        }
        if let Some(i) = locations.windows(2).position(|w| w[0] >= w[1]) {
            return Err(invalid(format!(
                "grid locations must be strictly increasing (index {} -> {})",
                i,
                i + 1
            )));
        }
        Ok(Self { locations })
    }

    /// The uniform grid `{r / N : r = 0, …, N}`.
    pub fn uniform(intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(invalid("a uniform grid needs N >= 1 intervals"));
        }
        let n = intervals as f64;
        Self::new((0..=intervals).map(|r| r as f64 / n).collect())
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Number of intervals N, i.e. `len() - 1`.
    pub fn intervals(&self) -> usize {
        self.locations.len() - 1
    }

    /// Whether the grid is `{r / N}` up to 1e-12 per location.
    pub fn is_uniform(&self) -> bool {
        let n = self.intervals();
        if n == 0 {
            return false;
        }
        self.locations
            .iter()
            .enumerate()
            .all(|(r, &t)| (t - r as f64 / n as f64).abs() <= 1e-12)
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = crate::Error;

    fn try_from(locations: Vec<f64>) -> Result<Self> {
        Self::new(locations)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(grid: Grid) -> Self {
        grid.locations
    }
}

/// The distortion map `f_θ(t) = (2 − θt)t / [1 − θ + √((2 − θt)θt + (1 − θ)²)]`.
///
/// `f_0` is the identity and `f_1(t) = √((2 − t)t)` is a quarter circle.
pub fn distortion(theta: f64, t: f64) -> f64 {
    if t == 1.0 {
        return 1.0;
    }
    let num = (2.0 - theta * t) * t;
    let den = 1.0 - theta + ((2.0 - theta * t) * theta * t + (1.0 - theta).powi(2)).sqrt();
    if den == 0.0 {
        // θ = 1, t = 0
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Applies [`distortion`] to every location of `grid`.
pub fn distort_grid(grid: &Grid, theta: f64) -> Result<Grid> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid(format!("theta = {theta} is outside [0, 1]")));
    }
    Grid::new(
        grid.locations
            .iter()
            .map(|&t| distortion(theta, t))
            .collect(),
    )
}

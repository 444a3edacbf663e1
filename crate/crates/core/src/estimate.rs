//! Rank-based estimators: empirical tail copula, empirical stable tail
//! dependence function, the known-margins tail empirical distribution
//! function, and finite-difference partial derivatives.
//!
//! Observation `i` is in the tail at location `t` and level `x` when
//! `rank_i(t) > n − k·x + 1`. The comparison is done exactly for the binary
//! values of `k` and `x`, so lattice points such as `k·x = 55` are never
//! perturbed by rounding in the product.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::rank::RankMatrix;

/// Evaluation point of `R̂` and `l̂`: distinct grid indices, levels and the
/// threshold parameter `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailCopulaQuery {
    pub t_indices: Vec<usize>,
    pub x: Vec<f64>,
    pub k: f64,
}

impl TailCopulaQuery {
    pub fn new(t_indices: Vec<usize>, x: Vec<f64>, k: f64) -> Result<Self> {
        if t_indices.is_empty() {
            return Err(invalid("a query needs at least one location"));
        }
        if t_indices.len() != x.len() {
            return Err(invalid(format!(
                "{} locations but {} levels",
                t_indices.len(),
                x.len()
            )));
        }
        for (a, &ta) in t_indices.iter().enumerate() {
            if t_indices[..a].contains(&ta) {
                return Err(invalid(format!("location index {ta} repeated in query")));
            }
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(invalid(format!("level {v} must be finite and nonnegative")));
        }
        check_k_finite(k)?;
        Ok(Self { t_indices, x, k })
    }

    /// Query at the unit point `x = (1, …, 1)`.
    pub fn at_unit(t_indices: Vec<usize>, k: f64) -> Result<Self> {
        let d = t_indices.len();
        Self::new(t_indices, vec![1.0; d], k)
    }

    pub fn dim(&self) -> usize {
        self.t_indices.len()
    }

    fn check_against(&self, ranks: &RankMatrix) -> Result<()> {
        check_k(self.k, ranks.n())?;
        if let Some(&t) = self.t_indices.iter().find(|&&t| t >= ranks.locations()) {
            return Err(invalid(format!(
                "location index {t} out of range for a grid of {} points",
                ranks.locations()
            )));
        }
        Ok(())
    }
}

fn check_k_finite(k: f64) -> Result<()> {
    if !(k.is_finite() && k > 0.0) {
        return Err(invalid(format!("threshold k = {k} must be positive")));
    }
    Ok(())
}

pub(crate) fn check_k(k: f64, n: usize) -> Result<()> {
    check_k_finite(k)?;
    if k > n as f64 {
        return Err(invalid(format!("threshold k = {k} exceeds n = {n}")));
    }
    Ok(())
}

/// Number of ranks `r ∈ {1, …, n}` with `r > n + 1 − k·x`, i.e. the count of
/// integers `c ∈ {1, …, n}` with `c < k·x`.
pub fn tail_size(n: usize, k: f64, x: f64) -> usize {
    if !(x > 0.0) {
        return 0;
    }
    let p = k * x;
    if !p.is_finite() {
        return n;
    }
    // Levels such as 1.1 are not representable; a product within a few ulps
    // of an integer is treated as that integer so decimal inputs count as
    // written.
    let nearest = p.round();
    let below = if (p - nearest).abs() <= 4.0 * f64::EPSILON * p.abs().max(1.0) {
        nearest - 1.0
    } else {
        p.ceil() - 1.0
    };
    if below <= 0.0 {
        0
    } else if below >= n as f64 {
        n
    } else {
        below as usize
    }
}

/// Smallest rank that counts as a tail observation (`n + 1` when none does).
fn rank_threshold(n: usize, k: f64, x: f64) -> u32 {
    (n + 1 - tail_size(n, k, x)) as u32
}

fn thresholds(ranks: &RankMatrix, q: &TailCopulaQuery) -> Vec<(usize, u32)> {
    q.t_indices
        .iter()
        .zip(&q.x)
        .map(|(&t, &x)| (t, rank_threshold(ranks.n(), q.k, x)))
        .collect()
}

/// `R̂_{n,t}(x) = k⁻¹ #{i : rank_i(t_j) > n − k x_j + 1 for all j}`.
pub fn empirical_tail_copula(ranks: &RankMatrix, q: &TailCopulaQuery) -> Result<f64> {
    q.check_against(ranks)?;
    let thr = thresholds(ranks, q);
    let count = (0..ranks.n())
        .filter(|&i| thr.iter().all(|&(t, r)| ranks.rank(i, t) >= r))
        .count();
    Ok(count as f64 / q.k)
}

/// `l̂_{n,t}(x) = k⁻¹ #{i : rank_i(t_j) > n − k x_j + 1 for some j}`.
pub fn empirical_stdf(ranks: &RankMatrix, q: &TailCopulaQuery) -> Result<f64> {
    q.check_against(ranks)?;
    let thr = thresholds(ranks, q);
    let count = (0..ranks.n())
        .filter(|&i| thr.iter().any(|&(t, r)| ranks.rank(i, t) >= r))
        .count();
    Ok(count as f64 / q.k)
}

/// `G_{n,t}(x) = k⁻¹ #{i : U_i(t_j) < (k/n) x_j for all j}` for uniforms with
/// known margins. `uniforms[i]` is the i-th trajectory.
pub fn tail_empirical_df(
    uniforms: &[Vec<f64>],
    k: f64,
    t_indices: &[usize],
    x: &[f64],
) -> Result<f64> {
    let n = uniforms.len();
    if n == 0 {
        return Err(invalid("no observations"));
    }
    check_k(k, n)?;
    if t_indices.len() != x.len() || t_indices.is_empty() {
        return Err(invalid(
            "locations and levels must be nonempty and of equal length",
        ));
    }
    let m = uniforms[0].len();
    for (i, row) in uniforms.iter().enumerate() {
        if row.len() != m {
            return Err(invalid(format!(
                "row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|u| !(*u > 0.0 && *u < 1.0)) {
            return Err(invalid(format!(
                "U[{i}][{j}] = {} is not in (0, 1)",
                row[j]
            )));
        }
    }
    if let Some(&t) = t_indices.iter().find(|&&t| t >= m) {
        return Err(invalid(format!("location index {t} out of range")));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(invalid(format!("level {v} must be finite and nonnegative")));
    }
    let bounds: Vec<f64> = x.iter().map(|&xj| k / n as f64 * xj).collect();
    let count = uniforms
        .iter()
        .filter(|row| t_indices.iter().zip(&bounds).all(|(&t, &b)| row[t] < b))
        .count();
    Ok(count as f64 / k)
}

/// Which argument of a bivariate tail copula is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coordinate {
    First,
    Second,
}

/// Default finite-difference bandwidth `η = k^{−1/4}`.
pub fn default_bandwidth(k: f64) -> f64 {
    k.powf(-0.25)
}

/// Central difference `(R̂(1+η, 1) − R̂(1−η, 1)) / (2η)` (or in the second
/// argument), without clamping.
pub fn raw_partial_derivative(
    ranks: &RankMatrix,
    k: f64,
    s_index: usize,
    t_index: usize,
    coord: Coordinate,
    eta: f64,
) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("bandwidth eta = {eta} must be positive")));
    }
    if s_index == t_index {
        return Err(invalid("partial derivatives need two distinct locations"));
    }
    let at = |shift: f64| {
        let x = match coord {
            Coordinate::First => vec![1.0 + shift, 1.0],
            Coordinate::Second => vec![1.0, 1.0 + shift],
        };
        TailCopulaQuery::new(vec![s_index, t_index], x, k)
            .and_then(|q| empirical_tail_copula(ranks, &q))
    };
    let lower = (1.0 - eta).max(0.0);
    Ok((at(eta)? - at(lower - 1.0)?) / (2.0 * eta))
}

/// [`raw_partial_derivative`] clamped into `[0, 1]`, the range of any tail
/// copula partial derivative.
pub fn estimate_partial_derivative(
    ranks: &RankMatrix,
    k: f64,
    s_index: usize,
    t_index: usize,
    coord: Coordinate,
    eta: f64,
) -> Result<f64> {
    raw_partial_derivative(ranks, k, s_index, t_index, coord, eta).map(|d| d.clamp(0.0, 1.0))
}

/// Tail indicator sets of every column at a common level `x`, as bitsets.
#[derive(Clone, Debug)]
pub struct ExceedanceSets {
    words: usize,
    bits: Vec<u64>,
    k: f64,
}

impl ExceedanceSets {
    pub fn new(ranks: &RankMatrix, k: f64, x: f64) -> Result<Self> {
        check_k(k, ranks.n())?;
        let n = ranks.n();
        let words = n.div_ceil(64);
        let thr = rank_threshold(n, k, x);
        let mut bits = vec![0u64; words * ranks.locations()];
        for j in 0..ranks.locations() {
            let row = &mut bits[j * words..(j + 1) * words];
            for (i, &r) in ranks.column(j).iter().enumerate() {
                if r >= thr {
                    row[i / 64] |= 1 << (i % 64);
                }
            }
        }
        Ok(Self { words, bits, k })
    }

    fn column(&self, j: usize) -> &[u64] {
        &self.bits[j * self.words..(j + 1) * self.words]
    }

    /// Number of observations in the tail at every location in `cols`.
    pub fn joint_count(&self, cols: &[usize]) -> usize {
        (0..self.words)
            .map(|w| {
                cols.iter()
                    .fold(u64::MAX, |acc, &j| acc & self.column(j)[w])
                    .count_ones() as usize
            })
            .sum()
    }

    pub fn union_count(&self, cols: &[usize]) -> usize {
        (0..self.words)
            .map(|w| {
                cols.iter()
                    .fold(0u64, |acc, &j| acc | self.column(j)[w])
                    .count_ones() as usize
            })
            .sum()
    }

    /// `R̂` at the common level for the locations in `cols`.
    pub fn tail_copula(&self, cols: &[usize]) -> f64 {
        self.joint_count(cols) as f64 / self.k
    }
}

/// Matrix of `R̂_{n;s,t}(1, 1)`; the diagonal holds the univariate value at 1.
pub fn pairwise_tdc_matrix(ranks: &RankMatrix, k: f64) -> Result<DMatrix<f64>> {
    let sets = ExceedanceSets::new(ranks, k, 1.0)?;
    let m = ranks.locations();
    Ok(DMatrix::from_fn(m, m, |s, t| {
        if s == t {
            sets.tail_copula(&[s])
        } else {
            sets.tail_copula(&[s, t])
        }
    }))
}

//! Stationarity test for the tail copula of a process observed on the
//! uniform grid `{r/N}`.
//!
//! For every interior grid point `r₀ ∈ {Δ, …, N − Δ}` the local statistic
//! `Î(r₀/N)` averages the pairwise tail dependence coefficients between `r₀`
//! and its `2Δ` neighbours. Under stationarity all of them estimate the same
//! number, so the range `D = √k (max Î − min Î)` is compared with the range of
//! the Gaussian limit `V^(N)`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cov::{min_eigenvalue, CovMatrix};
use crate::error::{invalid, Error, Result};
use crate::estimate::{
    check_k, default_bandwidth, estimate_partial_derivative, tail_size, Coordinate, ExceedanceSets,
};
use crate::grid::{distort_grid, Grid};
use crate::mvn::{range_cdf, MvnOptions};
use crate::rank::{compute_ranks, RankMatrix};
use crate::sample::FunctionalSample;
use crate::sim::{derive_seed, simulate_pareto, simulate_smith, DEFAULT_SMITH_WINDOW};
use crate::theory::{hatw_covariance, ModelCoefficients, ModelSpec, TailCoefficients};

/// Significance levels reported by [`monte_carlo_experiment`].
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub k: f64,
    pub delta: usize,
    /// Finite-difference bandwidth for the partial derivatives; `k^{-1/4}`
    /// when absent.
    pub eta: Option<f64>,
    pub mvn: MvnOptions,
    /// Added to `|λ_min|` when the Toeplitz projection is not positive
    /// definite.
    pub ridge_floor: f64,
}

impl TestConfig {
    pub fn new(k: f64, delta: usize) -> Self {
        Self {
            k,
            delta,
            eta: None,
            mvn: MvnOptions::default(),
            ridge_floor: 1e-8,
        }
    }

    pub fn with_mvn_tol(mut self, tol: f64) -> Self {
        self.mvn = self.mvn.with_tol(tol);
        self
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| default_bandwidth(self.k))
    }

    fn validate(&self, n: usize, grid: &Grid) -> Result<usize> {
        check_k(self.k, n)?;
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(invalid(format!("bandwidth eta = {eta} must be positive")));
            }
        }
        if !(self.ridge_floor >= 0.0 && self.ridge_floor.is_finite()) {
            return Err(invalid("ridge floor must be a nonnegative number"));
        }
        check_design(grid, self.delta)
    }
}

/// Returns `N` for a uniform grid `{r/N}` with `1 ≤ Δ < N/2`.
fn check_design(grid: &Grid, delta: usize) -> Result<usize> {
    if !grid.is_uniform() {
        return Err(invalid(
            "the stationarity test needs the uniform grid {r/N}",
        ));
    }
    let big_n = grid.intervals();
    if delta == 0 || 2 * delta >= big_n {
        return Err(invalid(format!(
            "Delta = {delta} must satisfy 1 <= Delta < N/2 with N = {big_n}"
        )));
    }
    Ok(big_n)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tie_count: usize,
    /// Ridge added to the Toeplitz projection of the covariance estimate.
    pub ridge_applied: Option<f64>,
    /// Frobenius norm of the change made by the Toeplitz projection.
    pub toeplitz_deviation: f64,
    pub mvn_budget_exceeded: bool,
    pub mvn_error_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub d: f64,
    /// `2Δ√k·D`, the integer range of the summed joint exceedance counts.
    pub range_count: u64,
    pub i_hat: Vec<f64>,
    pub sigma_hat: CovMatrix,
    pub p_value: f64,
    pub diagnostics: Diagnostics,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

fn interior(big_n: usize, delta: usize) -> std::ops::RangeInclusive<usize> {
    delta..=big_n - delta
}

fn neighbours(r0: usize, delta: usize) -> impl Iterator<Item = usize> {
    (r0 - delta..=r0 + delta).filter(move |&r| r != r0)
}

/// Summed joint exceedance counts `Σ_r #{i : both r and r₀ in the tail}`.
fn neighbour_counts(sets: &ExceedanceSets, big_n: usize, delta: usize) -> Vec<u64> {
    interior(big_n, delta)
        .map(|r0| {
            neighbours(r0, delta)
                .map(|r| sets.joint_count(&[r, r0]) as u64)
                .sum()
        })
        .collect()
}

/// `Î(r₀/N) = (2Δ)⁻¹ Σ_{1≤|r−r₀|≤Δ} R̂_{r/N, r₀/N}(1, 1)` for
/// `r₀ = Δ, …, N − Δ`.
pub fn integral_statistic(ranks: &RankMatrix, k: f64, delta: usize) -> Result<Vec<f64>> {
    let big_n = check_design(ranks.grid(), delta)?;
    let sets = ExceedanceSets::new(ranks, k, 1.0)?;
    let scale = 2.0 * delta as f64 * k;
    Ok(neighbour_counts(&sets, big_n, delta)
        .into_iter()
        .map(|c| c as f64 / scale)
        .collect())
}

/// `√k (max Î − min Î)`.
pub fn test_statistic(i_hat: &[f64], k: f64) -> Result<f64> {
    if i_hat.is_empty() {
        return Err(invalid(
            "the test statistic needs at least one local statistic",
        ));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid(format!("threshold k = {k} must be positive")));
    }
    let (lo, hi) = i_hat
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(k.sqrt() * (hi - lo))
}

/// Empirical coefficients: tail copulas by counting at the unit point and
/// partial derivatives averaged over all ordered pairs with the same lag.
struct EmpiricalCoefficients {
    sets: ExceedanceSets,
    /// Mean of `Ṙ_{s,s+L;1}` indexed by the signed lag `L`.
    first_by_lag: HashMap<isize, f64>,
}

impl EmpiricalCoefficients {
    fn new(ranks: &RankMatrix, k: f64, eta: f64, max_lag: usize) -> Result<Self> {
        let sets = ExceedanceSets::new(ranks, k, 1.0)?;
        let m = ranks.locations();
        let mut first_by_lag = HashMap::new();
        for lag in 1..=max_lag.min(m - 1) {
            for sign in [1isize, -1] {
                let mut sum = 0.0;
                for s in 0..m - lag {
                    let (a, b) = if sign > 0 { (s, s + lag) } else { (s + lag, s) };
                    sum += estimate_partial_derivative(ranks, k, a, b, Coordinate::First, eta)?;
                }
                first_by_lag.insert(sign * lag as isize, sum / (m - lag) as f64);
            }
        }
        Ok(Self { sets, first_by_lag })
    }
}

impl TailCoefficients for EmpiricalCoefficients {
    fn joint(&self, locs: &[usize]) -> Result<f64> {
        Ok(self.sets.tail_copula(locs))
    }

    fn partial(&self, s: usize, t: usize, coord: Coordinate) -> Result<f64> {
        // Ṙ_{s,t;2} = Ṙ_{t,s;1}
        let lag = match coord {
            Coordinate::First => t as isize - s as isize,
            Coordinate::Second => s as isize - t as isize,
        };
        self.first_by_lag
            .get(&lag)
            .copied()
            .ok_or_else(|| invalid(format!("no derivative estimate at lag {lag}")))
    }
}

/// Covariance of `V^(N)(r₀/N) = (2Δ)⁻¹ Σ_r Ŵ(r/N, r₀/N)` over the interior
/// points, from any provider of coefficients.
fn vn_covariance_raw<P: TailCoefficients>(
    p: &P,
    big_n: usize,
    delta: usize,
    toeplitz: bool,
) -> Result<DMatrix<f64>> {
    let centres: Vec<usize> = interior(big_n, delta).collect();
    let m = centres.len();
    let scale = (2.0 * delta as f64).powi(-2);
    let entry = |a: usize, b: usize| -> Result<f64> {
        let mut sum = 0.0;
        for r in neighbours(centres[a], delta) {
            for r2 in neighbours(centres[b], delta) {
                sum += hatw_covariance(p, r, centres[a], r2, centres[b])?;
            }
        }
        Ok(sum * scale)
    };
    let mut out = DMatrix::zeros(m, m);
    if toeplitz {
        for h in 0..m {
            let v = entry(0, h)?;
            for i in 0..m - h {
                out[(i, i + h)] = v;
                out[(i + h, i)] = v;
            }
        }
    } else {
        for a in 0..m {
            for b in a..m {
                let v = entry(a, b)?;
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
    }
    Ok(out)
}

struct Regularized {
    sigma: CovMatrix,
    ridge: Option<f64>,
    toeplitz_deviation: f64,
}

fn regularize(raw: DMatrix<f64>, ridge_floor: f64) -> Result<Regularized> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData(
            "covariance estimate has non-finite entries".into(),
        ));
    }
    let (projected, toeplitz_deviation) = CovMatrix::new_unchecked_psd(raw)?.toeplitz_projection();
    let lambda = min_eigenvalue(projected.matrix());
    let (sigma, ridge) = if lambda <= 0.0 {
        let ridge = lambda.abs() + ridge_floor;
        (projected.with_ridge(ridge), Some(ridge))
    } else {
        (projected, None)
    };
    Ok(Regularized {
        sigma: CovMatrix::new(sigma.matrix().clone())?,
        ridge,
        toeplitz_deviation,
    })
}

fn check_tail_nonempty(ranks: &RankMatrix, k: f64) -> Result<()> {
    if tail_size(ranks.n(), k, 1.0) == 0 {
        return Err(Error::DegenerateData(format!(
            "no observation exceeds the threshold at k = {k} (need k > 1)"
        )));
    }
    Ok(())
}

/// Estimated covariance matrix of `V^(N)`, projected onto Toeplitz matrices
/// and ridged when the projection is not positive definite.
pub fn estimate_vn_covariance(ranks: &RankMatrix, config: &TestConfig) -> Result<CovMatrix> {
    estimate_vn_covariance_with_diagnostics(ranks, config).map(|r| r.sigma)
}

fn estimate_vn_covariance_with_diagnostics(
    ranks: &RankMatrix,
    config: &TestConfig,
) -> Result<Regularized> {
    let big_n = config.validate(ranks.n(), ranks.grid())?;
    check_tail_nonempty(ranks, config.k)?;
    let provider = EmpiricalCoefficients::new(ranks, config.k, config.eta(), config.delta)?;
    let raw = vn_covariance_raw(&provider, big_n, config.delta, false)?;
    regularize(raw, config.ridge_floor)
}

/// Covariance of `V^(N)` under a model, from exact tail copulas and partial
/// derivatives on the grid `{r/N}`.
pub fn theoretical_vn_covariance(
    model: ModelSpec,
    big_n: usize,
    delta: usize,
    opts: &MvnOptions,
) -> Result<CovMatrix> {
    let grid = Grid::uniform(big_n)?;
    check_design(&grid, delta)?;
    let coeffs = ModelCoefficients::new(model, grid.locations().to_vec(), true, *opts);
    let raw = vn_covariance_raw(&coeffs, big_n, delta, true)?;
    CovMatrix::new(raw)
}

/// Ranks the sample, computes `Î` and `D`, estimates the covariance of the
/// limit and returns `p = 1 − F(D; Σ̂)`.
pub fn stationarity_test(sample: &FunctionalSample, config: &TestConfig) -> Result<TestResult> {
    let ranks = compute_ranks(sample)?;
    test_ranks(&ranks, config)
}

/// [`stationarity_test`] on precomputed ranks.
pub fn test_ranks(ranks: &RankMatrix, config: &TestConfig) -> Result<TestResult> {
    let (i_hat, range_count, d) = local_statistics(ranks, config)?;
    let reg = estimate_vn_covariance_with_diagnostics(ranks, config)?;
    let mut diagnostics = Diagnostics {
        tie_count: ranks.tie_count(),
        ridge_applied: reg.ridge,
        toeplitz_deviation: reg.toeplitz_deviation,
        ..Diagnostics::default()
    };
    let p_value = if range_count == 0 {
        1.0
    } else {
        let f = range_cdf(d, &reg.sigma, &config.mvn)?;
        diagnostics.mvn_budget_exceeded = f.budget_exceeded;
        diagnostics.mvn_error_estimate = f.error_estimate;
        (1.0 - f.value).clamp(0.0, 1.0)
    };
    Ok(TestResult {
        d,
        range_count,
        i_hat,
        sigma_hat: reg.sigma,
        p_value,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub thetas: Vec<f64>,
    pub n: usize,
    pub grid_n: usize,
    pub reps: usize,
    pub seed: u64,
    pub test: TestConfig,
    pub alphas: Vec<f64>,
    /// Window half-width for the Smith sampler.
    pub smith_window: f64,
    /// Skip the p-value (and its MVN integration); only `D` is recorded.
    pub statistics_only: bool,
}

impl ExperimentConfig {
    pub fn new(
        model: ModelSpec,
        thetas: Vec<f64>,
        n: usize,
        grid_n: usize,
        reps: usize,
        seed: u64,
        test: TestConfig,
    ) -> Self {
        Self {
            model,
            thetas,
            n,
            grid_n,
            reps,
            seed,
            test,
            alphas: DEFAULT_ALPHAS.to_vec(),
            smith_window: DEFAULT_SMITH_WINDOW,
            statistics_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub theta: f64,
    pub alpha: f64,
    pub reject_rate: f64,
    /// Binomial standard error `√(r(1 − r)/reps)`.
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaOutcome {
    pub theta: f64,
    pub statistics: Vec<f64>,
    pub range_counts: Vec<u64>,
    /// Empty when the experiment ran with `statistics_only`.
    pub p_values: Vec<f64>,
    /// Replications whose test failed (for example on degenerate data).
    pub failures: Vec<String>,
}

impl ThetaOutcome {
    /// Empirical pmf of `2Δ√k·D` as `(value, probability)` pairs.
    pub fn range_count_pmf(&self) -> Vec<(u64, f64)> {
        let mut counts = std::collections::BTreeMap::new();
        for &c in &self.range_counts {
            *counts.entry(c).or_insert(0usize) += 1;
        }
        let total = self.range_counts.len() as f64;
        counts
            .into_iter()
            .map(|(v, c)| (v, c as f64 / total))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub rates: Vec<RejectionRate>,
    pub outcomes: Vec<ThetaOutcome>,
}

/// Simulates `reps` samples on `distort_grid(r/N, θ)` for every θ, tests each
/// as if it were observed on the uniform grid and tabulates rejection rates.
/// Replication `i` uses the same sampler seed for every θ.
pub fn monte_carlo_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    if config.reps == 0 {
        return Err(invalid("the experiment needs at least one replication"));
    }
    if config.thetas.is_empty() {
        return Err(invalid("the experiment needs at least one theta"));
    }
    if let Some(a) = config.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(invalid(format!(
            "significance level {a} must lie in (0, 1)"
        )));
    }
    let nominal = Grid::uniform(config.grid_n)?;
    config.test.validate(config.n, &nominal)?;

    let mut outcomes = Vec::with_capacity(config.thetas.len());
    for &theta in &config.thetas {
        let grid = distort_grid(&nominal, theta)?;
        let reps: Vec<Result<TestResult>> = (0..config.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(config.seed, rep);
                let sample = match config.model {
                    ModelSpec::Smith => simulate_smith(config.n, &grid, config.smith_window, seed)?,
                    ModelSpec::Pareto => simulate_pareto(config.n, &grid, seed)?,
                }
                .with_grid(nominal.clone())?;
                let ranks = compute_ranks(&sample)?;
                if config.statistics_only {
                    statistic_only(&ranks, &config.test)
                } else {
                    test_ranks(&ranks, &config.test)
                }
            })
            .collect();
        let mut out = ThetaOutcome {
            theta,
            statistics: Vec::new(),
            range_counts: Vec::new(),
            p_values: Vec::new(),
            failures: Vec::new(),
        };
        for r in reps {
            match r {
                Ok(t) => {
                    out.statistics.push(t.d);
                    out.range_counts.push(t.range_count);
                    if !config.statistics_only {
                        out.p_values.push(t.p_value);
                    }
                }
                Err(e) => out.failures.push(e.to_string()),
            }
        }
        outcomes.push(out);
    }

    let mut rates = Vec::new();
    if !config.statistics_only {
        for o in &outcomes {
            let total = o.p_values.len();
            for &alpha in &config.alphas {
                let rate = if total == 0 {
                    f64::NAN
                } else {
                    o.p_values.iter().filter(|&&p| p <= alpha).count() as f64 / total as f64
                };
                rates.push(RejectionRate {
                    theta: o.theta,
                    alpha,
                    reject_rate: rate,
                    se: (rate * (1.0 - rate) / total as f64).sqrt(),
                });
            }
        }
    }
    Ok(ExperimentSummary {
        config: config.clone(),
        rates,
        outcomes,
    })
}

fn local_statistics(ranks: &RankMatrix, config: &TestConfig) -> Result<(Vec<f64>, u64, f64)> {
    let big_n = config.validate(ranks.n(), ranks.grid())?;
    check_tail_nonempty(ranks, config.k)?;
    let sets = ExceedanceSets::new(ranks, config.k, 1.0)?;
    let counts = neighbour_counts(&sets, big_n, config.delta);
    let scale = 2.0 * config.delta as f64 * config.k;
    let i_hat: Vec<f64> = counts.iter().map(|&c| c as f64 / scale).collect();
    let range_count = counts.iter().max().unwrap() - counts.iter().min().unwrap();
    let d = test_statistic(&i_hat, config.k)?;
    Ok((i_hat, range_count, d))
}

fn statistic_only(ranks: &RankMatrix, config: &TestConfig) -> Result<TestResult> {
    let (i_hat, range_count, d) = local_statistics(ranks, config)?;
    Ok(TestResult {
        d,
        range_count,
        sigma_hat: CovMatrix::identity(i_hat.len()),
        i_hat,
        p_value: f64::NAN,
        diagnostics: Diagnostics {
            tie_count: ranks.tie_count(),
            ..Diagnostics::default()
        },
    })
}

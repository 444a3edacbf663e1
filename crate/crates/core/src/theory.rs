//! Closed-form tail copulas of the Smith model (scalar, unit kernel variance)
//! and of the Pareto process, their partial derivatives, d-variate tail
//! dependence coefficients, and the covariance of the limiting empirical tail
//! copula process `Ŵ`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cov::CovMatrix;
use crate::error::{invalid, Error, Result};
use crate::estimate::Coordinate;
use crate::mvn::{rectangle, MvnOptions, MvnResult};
use crate::normal::norm_sf;

/// The two stationary example models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSpec {
    /// Smith moving-maximum process on `[0, 1]` with a standard normal kernel.
    Smith,
    /// `Y · exp{W(t) − t/2}` with `Y` standard Pareto and `W` a Wiener process.
    Pareto,
}

impl ModelSpec {
    /// Hüsler–Reiss parameter `a(s, t)` of the bivariate tail copula.
    pub fn hr_parameter(self, s: f64, t: f64) -> f64 {
        match self {
            ModelSpec::Smith => (s - t).abs(),
            ModelSpec::Pareto => (s - t).abs().sqrt(),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSpec::Smith => "smith",
            ModelSpec::Pareto => "pareto",
        })
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smith" => Ok(ModelSpec::Smith),
            "pareto" => Ok(ModelSpec::Pareto),
            other => Err(invalid(format!(
                "unknown model '{other}' (expected smith or pareto)"
            ))),
        }
    }
}

fn check_level(v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(invalid(format!(
            "tail copula argument {v} must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// Hüsler–Reiss tail copula `x Φ̄(a/2 + ln(x/y)/a) + y Φ̄(a/2 + ln(y/x)/a)`.
///
/// The comonotone limit `a = 0` gives `min(x, y)`; a zero argument gives 0.
pub fn husler_reiss(a: f64, x: f64, y: f64) -> f64 {
    if x == 0.0 || y == 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return x.min(y);
    }
    let l = (x / y).ln();
    x * norm_sf(0.5 * a + l / a) + y * norm_sf(0.5 * a - l / a)
}

/// Bivariate tail copula `R_{s,t}(x, y)` of `model`.
pub fn bivariate_r(model: ModelSpec, s: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_level(x)?;
    check_level(y)?;
    Ok(husler_reiss(model.hr_parameter(s, t), x, y))
}

/// Analytic partial derivative of [`bivariate_r`] in the chosen argument.
///
/// `∂R/∂x = Φ̄(a/2 + ln(x/y)/a)`; at `(1, 1)` this is `Φ̄(a/2)`.
pub fn husler_reiss_partial(
    model: ModelSpec,
    s: f64,
    t: f64,
    coord: Coordinate,
    x: f64,
    y: f64,
) -> Result<f64> {
    check_level(x)?;
    check_level(y)?;
    let (own, other) = match coord {
        Coordinate::First => (x, y),
        Coordinate::Second => (y, x),
    };
    let a = model.hr_parameter(s, t);
    if a == 0.0 {
        return Ok(match own.partial_cmp(&other) {
            Some(std::cmp::Ordering::Less) => 1.0,
            Some(std::cmp::Ordering::Greater) => 0.0,
            _ => 0.5,
        });
    }
    if own == 0.0 {
        return Err(invalid(
            "partial derivative needs a positive differentiated argument",
        ));
    }
    if other == 0.0 {
        return Ok(0.0);
    }
    Ok(norm_sf(0.5 * a + (own / other).ln() / a))
}

/// `R_t(1) = 2 Φ̄((max t − min t) / 2)` for the Smith model.
pub fn smith_dvariate_r(t: &[f64]) -> Result<f64> {
    if t.is_empty() || t.iter().any(|v| !v.is_finite()) {
        return Err(invalid("locations must be nonempty and finite"));
    }
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(2.0 * norm_sf(0.5 * (hi - lo)))
}

/// `R_t(1) = E[min_j exp{W(t_j) − t_j/2}]` for the Pareto process, through
/// [`gaussian_min_exp`] with `Γ = min(t_j, t_k)`.
pub fn pareto_dvariate_r(t: &[f64], opts: &MvnOptions) -> Result<f64> {
    if t.is_empty() || t.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(
            "locations must be nonempty, finite and nonnegative",
        ));
    }
    for (i, a) in t.iter().enumerate() {
        if t[..i].contains(a) {
            return Err(invalid(format!("duplicate location {a}")));
        }
    }
    if t.len() == 1 {
        return Ok(1.0);
    }
    // Independent stationary increments: shifting every location by the same
    // constant leaves the expectation unchanged and makes Γ definite.
    let shift = if t.contains(&0.0) { 1.0 } else { 0.0 };
    let d = t.len();
    let gamma = CovMatrix::new(DMatrix::from_fn(d, d, |j, k| t[j].min(t[k]) + shift))?;
    Ok(gaussian_min_exp(&gamma, opts)?.value)
}

/// `E[min_j exp(X_j − γ_jj / 2)]` for `X ~ N(0, Γ)`, as a sum of `d`
/// orthant probabilities of dimension `d − 1`.
pub fn gaussian_min_exp(gamma: &CovMatrix, opts: &MvnOptions) -> Result<MvnResult> {
    let d = gamma.dim();
    if d < 2 {
        return Err(invalid("gaussian_min_exp needs dimension at least 2"));
    }
    let (gamma, ridge) = gamma.regularized();
    let g = gamma.matrix();
    let mut total = MvnResult {
        value: 0.0,
        error_estimate: 0.0,
        points_used: 0,
        budget_exceeded: false,
        ridge,
    };
    for j in 0..d {
        let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
        let cov = DMatrix::from_fn(d - 1, d - 1, |a, b| {
            let (k, l) = (others[a], others[b]);
            g[(j, j)] - g[(j, l)] - g[(k, j)] + g[(k, l)]
        });
        let upper: Vec<f64> = (0..d - 1).map(|a| -0.5 * cov[(a, a)]).collect();
        let lower = vec![f64::NEG_INFINITY; d - 1];
        let term_opts = opts.with_seed(crate::sim::derive_seed(opts.seed, j as u64));
        let r = rectangle(&lower, &upper, &cov, &term_opts)?;
        total.value += r.value;
        total.error_estimate += r.error_estimate;
        total.points_used += r.points_used;
        total.budget_exceeded |= r.budget_exceeded;
    }
    Ok(total)
}

/// Tail dependence coefficients at the unit point and bivariate partial
/// derivatives at `(1, 1)`, indexed by grid location.
pub trait TailCoefficients {
    /// `R_t(1)` for a sorted set of distinct locations (length 1 to 4).
    fn joint(&self, locs: &[usize]) -> Result<f64>;

    /// `Ṙ_{s,t;j}(1, 1)` for distinct `s`, `t`.
    fn partial(&self, s: usize, t: usize, coord: Coordinate) -> Result<f64>;
}

fn joint_collapsed<P: TailCoefficients + ?Sized>(p: &P, locs: &[usize]) -> Result<f64> {
    let mut set = locs.to_vec();
    set.sort_unstable();
    set.dedup();
    p.joint(&set)
}

/// `E[Ŵ(s, t) Ŵ(s′, t′)]` at the unit point via the nine-term expansion.
/// Repeated locations inside a coefficient collapse to the lower-dimensional
/// tail copula.
pub fn hatw_covariance<P: TailCoefficients + ?Sized>(
    p: &P,
    s: usize,
    t: usize,
    s2: usize,
    t2: usize,
) -> Result<f64> {
    if s == t || s2 == t2 {
        return Err(invalid("Ŵ(s, t) is defined for distinct s and t"));
    }
    let r = |locs: &[usize]| joint_collapsed(p, locs);
    let d1 = p.partial(s, t, Coordinate::First)?;
    let d2 = p.partial(s, t, Coordinate::Second)?;
    let e1 = p.partial(s2, t2, Coordinate::First)?;
    let e2 = p.partial(s2, t2, Coordinate::Second)?;
    Ok(
        r(&[s, t, s2, t2])? - e1 * r(&[s, t, s2])? - e2 * r(&[s, t, t2])? - d1 * r(&[s, s2, t2])?
            + d1 * e1 * r(&[s, s2])?
            + d1 * e2 * r(&[s, t2])?
            - d2 * r(&[t, s2, t2])?
            + d2 * e1 * r(&[t, s2])?
            + d2 * e2 * r(&[t, t2])?,
    )
}

/// Standard deviation semimetric `√(x − 2 R_{s,t}(x, y) + y)`.
pub fn rho2(model: ModelSpec, s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
    let r = bivariate_r(model, s, t, x, y)?;
    let radicand = x - 2.0 * r + y;
    if radicand < -1e-12 {
        return Err(Error::Numerical(format!(
            "negative variance {radicand:e} in rho2"
        )));
    }
    Ok(radicand.max(0.0).sqrt())
}

/// Exact coefficients of a model on a fixed set of locations.
pub struct ModelCoefficients {
    model: ModelSpec,
    locations: Vec<f64>,
    offsets_only: bool,
    opts: MvnOptions,
    cache: RefCell<HashMap<Vec<usize>, f64>>,
}

impl ModelCoefficients {
    /// `uniform` declares the locations equally spaced, so coefficients only
    /// depend on index offsets and are shared between translated sets.
    pub fn new(model: ModelSpec, locations: Vec<f64>, uniform: bool, opts: MvnOptions) -> Self {
        Self {
            model,
            locations,
            offsets_only: uniform,
            opts,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl TailCoefficients for ModelCoefficients {
    fn joint(&self, locs: &[usize]) -> Result<f64> {
        if let Some(&i) = locs.iter().find(|&&i| i >= self.locations.len()) {
            return Err(invalid(format!("location index {i} out of range")));
        }
        if locs.len() <= 1 {
            return Ok(1.0);
        }
        let key: Vec<usize> = if self.offsets_only {
            locs.iter().map(|&i| i - locs[0]).collect()
        } else {
            locs.to_vec()
        };
        if let Some(&v) = self.cache.borrow().get(&key) {
            return Ok(v);
        }
        let base = if self.offsets_only { locs[0] } else { 0 };
        let t: Vec<f64> = key.iter().map(|&i| self.locations[i + base]).collect();
        let v = match self.model {
            ModelSpec::Smith => smith_dvariate_r(&t)?,
            ModelSpec::Pareto => pareto_dvariate_r(&t, &self.opts)?,
        };
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }

    fn partial(&self, s: usize, t: usize, coord: Coordinate) -> Result<f64> {
        husler_reiss_partial(
            self.model,
            self.locations[s],
            self.locations[t],
            coord,
            1.0,
            1.0,
        )
    }
}

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tailfield_core::estimate::raw_partial_derivative;
use tailfield_core::io::{parse_query, read_sample_csv, write_metadata, write_sample_csv};
use tailfield_core::mvn::default_pdf_step;
use tailfield_core::stattest::{test_ranks, ThetaOutcome};
use tailfield_core::theory::{bivariate_r, husler_reiss_partial};
use tailfield_core::{
    compute_ranks, distort_grid, empirical_stdf, empirical_tail_copula,
    estimate_partial_derivative, monte_carlo_experiment, pairwise_tdc_matrix, range_cdf, range_pdf,
    simulate_pareto, simulate_smith, theoretical_vn_covariance, Coordinate, CovMatrix, Error,
    ExperimentConfig, FunctionalSample, Grid, ModelSpec, MvnOptions, SampleMetadata, TestConfig,
    TestResult,
};

use crate::output::{io_error, write_atomic, write_csv, write_json, write_to, Cell};
use crate::{EstimateArgs, Format, McArgs, SimulateArgs, TestArgs, TestOptions, TheoryArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                Error::DegenerateData(_) => 2,
                Error::Io(_) => 3,
                _ => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn read_sample(path: &Path) -> Result<FunctionalSample, CliError> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    read_sample_csv(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Io(io) => io_error(path, io),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })
}

fn metadata_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let model = a.model.model;
    let grid = distort_grid(&Grid::uniform(a.grid_n)?, a.theta)?;
    let sample = match model {
        ModelSpec::Smith => simulate_smith(a.n, &grid, a.window, a.seed)?,
        ModelSpec::Pareto => simulate_pareto(a.n, &grid, a.seed)?,
    };
    let meta = SampleMetadata {
        model: model.to_string(),
        seed: Some(a.seed),
        n: a.n,
        grid,
        theta: Some(a.theta),
        window_halfwidth: (model == ModelSpec::Smith).then_some(a.window),
    };
    write_atomic(&a.output, |w| Ok(write_sample_csv(&sample, w)?))?;
    let meta_path = a
        .metadata
        .clone()
        .unwrap_or_else(|| metadata_path(&a.output));
    write_atomic(&meta_path, |w| Ok(write_metadata(&meta, w)?))
}

#[derive(Serialize)]
struct QueryEstimate {
    t: Vec<usize>,
    x: Vec<f64>,
    tail_copula: f64,
    stdf: f64,
}

#[derive(Serialize)]
struct PartialEstimate {
    s: usize,
    t: usize,
    first: f64,
    second: f64,
    first_raw: f64,
    second_raw: f64,
}

#[derive(Serialize)]
struct EstimateReport {
    input: PathBuf,
    n: usize,
    k: f64,
    eta: f64,
    grid: Vec<f64>,
    tie_count: usize,
    tdc_matrix: Vec<Vec<f64>>,
    queries: Vec<QueryEstimate>,
    partials: Vec<PartialEstimate>,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn estimate(a: &EstimateArgs, format: Format) -> Result<(), CliError> {
    let specs = a
        .queries
        .iter()
        .map(|q| parse_query(q))
        .collect::<Result<Vec<_>, _>>()?;
    let sample = read_sample(&a.input)?;
    let ranks = compute_ranks(&sample)?;
    let eta = a
        .eta
        .unwrap_or_else(|| tailfield_core::default_bandwidth(a.k));
    let tdc = pairwise_tdc_matrix(&ranks, a.k)?;
    let m = ranks.locations();
    let mut queries = Vec::new();
    for spec in &specs {
        let q = spec.with_k(a.k)?;
        queries.push(QueryEstimate {
            tail_copula: empirical_tail_copula(&ranks, &q)?,
            stdf: empirical_stdf(&ranks, &q)?,
            t: q.t_indices,
            x: q.x,
        });
    }
    let mut partials = Vec::new();
    for s in 0..m {
        for t in s + 1..m {
            let est = |c| estimate_partial_derivative(&ranks, a.k, s, t, c, eta);
            let raw = |c| raw_partial_derivative(&ranks, a.k, s, t, c, eta);
            partials.push(PartialEstimate {
                s,
                t,
                first: est(Coordinate::First)?,
                second: est(Coordinate::Second)?,
                first_raw: raw(Coordinate::First)?,
                second_raw: raw(Coordinate::Second)?,
            });
        }
    }
    let report = EstimateReport {
        input: a.input.clone(),
        n: ranks.n(),
        k: a.k,
        eta,
        grid: sample.grid().locations().to_vec(),
        tie_count: ranks.tie_count(),
        tdc_matrix: (0..m)
            .map(|i| (0..m).map(|j| tdc[(i, j)]).collect())
            .collect(),
        queries,
        partials,
    };
    write_to(a.output.as_deref(), |w| match format {
        Format::Json => write_json(w, &report),
        Format::Csv => {
            let text = |s: &str| Cell::Text(s.to_string());
            let mut rows = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    rows.push(vec![
                        text("tdc"),
                        Cell::Text(format!("{i} {j}")),
                        text("1 1"),
                        Cell::Num(report.tdc_matrix[i][j]),
                    ]);
                }
            }
            for q in &report.queries {
                for (name, v) in [("tail_copula", q.tail_copula), ("stdf", q.stdf)] {
                    rows.push(vec![
                        text(name),
                        Cell::Text(join(&q.t)),
                        Cell::Text(join(&q.x)),
                        Cell::Num(v),
                    ]);
                }
            }
            for p in &report.partials {
                let locs = Cell::Text(format!("{} {}", p.s, p.t));
                rows.push(vec![
                    text("partial_first"),
                    locs,
                    text("1 1"),
                    Cell::Num(p.first),
                ]);
                let locs = Cell::Text(format!("{} {}", p.s, p.t));
                rows.push(vec![
                    text("partial_second"),
                    locs,
                    text("1 1"),
                    Cell::Num(p.second),
                ]);
            }
            write_csv(w, &["quantity", "locations", "levels", "value"], rows)
        }
    })
}

fn test_config(o: &TestOptions) -> TestConfig {
    let mut cfg = TestConfig::new(o.k, o.delta).with_mvn_tol(o.mvn_tol);
    cfg.eta = o.eta;
    if let Some(seed) = o.mvn_seed {
        cfg.mvn = cfg.mvn.with_seed(seed);
    }
    cfg
}

#[derive(Serialize)]
struct TestReport<'a> {
    input: &'a Path,
    assume_uniform: bool,
    n: usize,
    grid: &'a [f64],
    config: &'a TestConfig,
    eta: f64,
    result: &'a TestResult,
}

pub fn test(a: &TestArgs, format: Format) -> Result<(), CliError> {
    let mut sample = read_sample(&a.input)?;
    if a.assume_uniform {
        let intervals = sample.grid().intervals();
        sample = sample.with_grid(Grid::uniform(intervals)?)?;
    }
    let config = test_config(&a.test);
    let ranks = compute_ranks(&sample)?;
    let result = test_ranks(&ranks, &config)?;
    let report = TestReport {
        input: &a.input,
        assume_uniform: a.assume_uniform,
        n: sample.n(),
        grid: sample.grid().locations(),
        config: &config,
        eta: config.eta(),
        result: &result,
    };
    if let Some(path) = &a.output {
        write_atomic(path, |w| write_json(w, &report))?;
    }
    if format == Format::Json && a.output.is_none() {
        return write_to(None, |w| write_json(w, &report));
    }
    let d = &result.diagnostics;
    println!(
        "stationarity test: n = {}, N = {}, k = {}, Delta = {}",
        sample.n(),
        sample.grid().intervals(),
        config.k,
        config.delta
    );
    println!(
        "D = {:.6}  (2*Delta*sqrt(k)*D = {})",
        result.d, result.range_count
    );
    println!("p-value = {:.6}", result.p_value);
    println!(
        "ties = {}, Toeplitz deviation = {:.3e}, ridge = {}, MVN error = {:.1e}{}",
        d.tie_count,
        d.toeplitz_deviation,
        d.ridge_applied
            .map_or_else(|| "none".to_string(), |r| format!("{r:.3e}")),
        d.mvn_error_estimate,
        if d.mvn_budget_exceeded {
            " (budget exceeded)"
        } else {
            ""
        }
    );
    Ok(())
}

/// Limit density of the integer statistic `J = c·D` at `j`, `c = 2Δ√k`.
fn limit_count_pdf(j: u64, c: f64, sigma: &CovMatrix, opts: &MvnOptions) -> Result<f64, CliError> {
    let q = j as f64 / c;
    let h = default_pdf_step(opts);
    let pdf = if q > h {
        range_pdf(q, sigma, Some(h), opts)?
    } else {
        // one-sided difference near the boundary of the support
        let hi = range_cdf(q + h, sigma, opts)?.value;
        let lo = if q > 0.0 {
            range_cdf(q, sigma, opts)?.value
        } else {
            0.0
        };
        (hi - lo) / h
    };
    Ok(pdf.max(0.0) / c)
}

fn null_pmf_rows(
    null: &ThetaOutcome,
    c: f64,
    sigma: &CovMatrix,
    opts: &MvnOptions,
) -> Result<Vec<Vec<Cell>>, CliError> {
    let pmf = null.range_count_pmf();
    let observed_max = pmf.last().map_or(0, |&(v, _)| v);
    // continue past the observed support until the limit density is negligible
    let cap = 4 * observed_max + 20;
    let mut rows = Vec::new();
    for j in 0..=cap {
        let density = limit_count_pdf(j, c, sigma, opts)?;
        let p = pmf.iter().find(|&&(v, _)| v == j).map_or(0.0, |&(_, p)| p);
        rows.push(vec![Cell::Int(j), Cell::Num(p), Cell::Num(density)]);
        if j > observed_max && density < 1e-6 {
            break;
        }
    }
    Ok(rows)
}

pub fn mc(a: &McArgs) -> Result<(), CliError> {
    let test = test_config(&a.test);
    let mut cfg = ExperimentConfig::new(
        a.model.model,
        a.thetas.clone(),
        a.n,
        a.grid_n,
        a.reps,
        a.seed,
        test.clone(),
    );
    cfg.alphas = a.alphas.clone();
    cfg.smith_window = a.window;
    let summary = monte_carlo_experiment(&cfg)?;

    fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    let rows = summary.rates.iter().map(|r| {
        vec![
            Cell::Num(r.theta),
            Cell::Num(r.alpha),
            Cell::Num(r.reject_rate),
            Cell::Num(r.se),
        ]
    });
    write_atomic(&a.out_dir.join("rates.csv"), |w| {
        write_csv(w, &["theta", "alpha", "reject_rate", "se"], rows)
    })?;

    let mut pp = Vec::new();
    for o in &summary.outcomes {
        let mut p = o.p_values.clone();
        p.sort_by(f64::total_cmp);
        let len = p.len() as f64;
        for (i, v) in p.into_iter().enumerate() {
            pp.push(vec![
                Cell::Num(o.theta),
                Cell::Num((i + 1) as f64 / (len + 1.0)),
                Cell::Num(v),
            ]);
        }
    }
    write_atomic(&a.out_dir.join("pp_plot.csv"), |w| {
        write_csv(w, &["theta", "uniform_quantile", "p_value"], pp)
    })?;

    if let Some(null) = summary.outcomes.iter().find(|o| o.theta == 0.0) {
        let sigma = theoretical_vn_covariance(a.model.model, a.grid_n, a.test.delta, &test.mvn)?;
        let c = 2.0 * a.test.delta as f64 * a.test.k.sqrt();
        let rows = null_pmf_rows(null, c, &sigma, &test.mvn)?;
        write_atomic(&a.out_dir.join("null_pmf.csv"), |w| {
            write_csv(w, &["value", "pmf", "limit_pdf"], rows)
        })?;
    }

    write_atomic(&a.out_dir.join("summary.json"), |w| write_json(w, &summary))?;

    println!("theta   alpha   reject_rate   se");
    for r in &summary.rates {
        println!(
            "{:<7} {:<7} {:<13.4} {:.4}",
            r.theta, r.alpha, r.reject_rate, r.se
        );
    }
    for o in &summary.outcomes {
        if !o.failures.is_empty() {
            eprintln!(
                "theta = {}: {} replications failed",
                o.theta,
                o.failures.len()
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TheoryReport {
    model: ModelSpec,
    grid: Vec<f64>,
    delta: usize,
    tdc_matrix: Vec<Vec<f64>>,
    /// `Ṙ_{s,t;1}(1, 1)`; the second-coordinate derivative is the transpose.
    partial_first: Vec<Vec<f64>>,
    sigma: CovMatrix,
}

pub fn theory(a: &TheoryArgs, format: Format) -> Result<(), CliError> {
    let model = a.model.model;
    let grid = Grid::uniform(a.grid_n)?;
    let t = grid.locations();
    let m = t.len();
    let mut tdc = vec![vec![0.0; m]; m];
    let mut partial = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            tdc[i][j] = bivariate_r(model, t[i], t[j], 1.0, 1.0)?;
            if i != j {
                partial[i][j] =
                    husler_reiss_partial(model, t[i], t[j], Coordinate::First, 1.0, 1.0)?;
            }
        }
    }
    let opts = MvnOptions::default().with_tol(a.mvn_tol);
    let sigma = theoretical_vn_covariance(model, a.grid_n, a.delta, &opts)?;
    let report = TheoryReport {
        model,
        grid: t.to_vec(),
        delta: a.delta,
        tdc_matrix: tdc,
        partial_first: partial,
        sigma,
    };
    write_to(a.output.as_deref(), |w| match format {
        Format::Json => write_json(w, &report),
        Format::Csv => {
            let mut rows = Vec::new();
            let mut push = |name: &str, mat: &[Vec<f64>]| {
                for (i, row) in mat.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        rows.push(vec![
                            Cell::Text(name.to_string()),
                            Cell::Int(i as u64),
                            Cell::Int(j as u64),
                            Cell::Num(v),
                        ]);
                    }
                }
            };
            push("tdc", &report.tdc_matrix);
            push("partial_first", &report.partial_first);
            push("sigma", &report.sigma.to_rows());
            write_csv(w, &["quantity", "i", "j", "value"], rows)
        }
    })
}

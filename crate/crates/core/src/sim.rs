//! Seeded samplers for the Smith moving-maximum process and the Pareto
//! process `Y · exp{W(t) − t/2}`.
//!
//! Each trajectory draws from its own ChaCha stream (`seed`, row index), so a
//! sample is bitwise identical regardless of how rows are scheduled.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::normal::norm_pdf;
use crate::sample::FunctionalSample;

/// Default half-width `A` of the spatial window `[−A, 1 + A]` for storm centres.
pub const DEFAULT_SMITH_WINDOW: f64 = 5.0;

const MIN_SMITH_WINDOW: f64 = 4.0;

pub(crate) fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// SplitMix64 finalizer; derives well-separated child seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("sample size n must be at least 1"));
    }
    Ok(())
}

/// Draws `n` Pareto-process trajectories `ξ(t) = Y · B(t)` on `grid`.
pub fn simulate_pareto(n: usize, grid: &Grid, seed: u64) -> Result<FunctionalSample> {
    check_n(n)?;
    let locs = grid.locations();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = row_rng(seed, i);
            pareto_row(&mut rng, locs)
        })
        .collect();
    Ok(FunctionalSample::new(values, grid.clone())?.with_provenance("pareto", Some(seed)))
}

fn pareto_row<R: Rng>(rng: &mut R, locs: &[f64]) -> Vec<f64> {
    // P(Y > y) = 1/y on [1, ∞)
    let u: f64 = rng.random();
    let y = 1.0 / (1.0 - u);
    let mut w = 0.0;
    let mut prev = 0.0;
    locs.iter()
        .map(|&t| {
            let z: f64 = rng.sample(StandardNormal);
            w += (t - prev).sqrt() * z;
            prev = t;
            y * (w - 0.5 * t).exp()
        })
        .collect()
}

/// Draws `n` Smith-model trajectories (scalar case, unit kernel variance).
///
/// Storm centres are restricted to `[−A, 1 + A]` with `A = window_halfwidth`.
pub fn simulate_smith(
    n: usize,
    grid: &Grid,
    window_halfwidth: f64,
    seed: u64,
) -> Result<FunctionalSample> {
    check_n(n)?;
    if !(window_halfwidth >= MIN_SMITH_WINDOW) || !window_halfwidth.is_finite() {
        return Err(invalid(format!(
            "window half-width {window_halfwidth} is below {MIN_SMITH_WINDOW}; truncation bias would dominate"
        )));
    }
    let locs = grid.locations();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = row_rng(seed, i);
            smith_row(&mut rng, locs, window_halfwidth, None)
        })
        .collect();
    Ok(FunctionalSample::new(values, grid.clone())?
        .with_provenance(format!("smith(A={window_halfwidth})"), Some(seed)))
}

/// One Smith trajectory. When `trace` is given, the running maximum after
/// every consumed Poisson point is appended to it.
pub(crate) fn smith_row<R: Rng>(
    rng: &mut R,
    locs: &[f64],
    half_width: f64,
    mut trace: Option<&mut Vec<Vec<f64>>>,
) -> Vec<f64> {
    let width = 2.0 * half_width + 1.0;
    let peak = width * norm_pdf(0.0);
    let mut running = vec![0.0_f64; locs.len()];
    let mut gamma = 0.0;
    loop {
        let e: f64 = rng.sample(Exp1);
        gamma += e;
        let floor = running.iter().copied().fold(f64::INFINITY, f64::min);
        if floor > 0.0 && peak / gamma < floor {
            break;
        }
        let centre = -half_width + width * rng.random::<f64>();
        let scale = width / gamma;
        for (slot, &u) in running.iter_mut().zip(locs) {
            let v = scale * norm_pdf(centre - u);
            if v > *slot {
                *slot = v;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(running.clone());
        }
    }
    running
}

use serde::{Deserialize, Serialize};

use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    /// Asymptote.
    pub a: f64,
    /// Rate.
    pub b: f64,
    /// Initial slope `a * b`.
    pub init: f64,
    /// Per-step retention `exp(-b)`.
    pub retain: f64,
    pub residual_sse: f64,
    /// All-zero input: `a = 0` and `b` sits at the grid floor.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x must be strictly increasing (at index {0})")]
    NotIncreasing(usize),
    #[error("y must be finite and non-negative (at index {0})")]
    BadValue(usize),
}

pub const GRID_POINTS: usize = 400;
pub const B_MIN: f64 = 1e-4;
pub const B_MAX: f64 = 10.0;
const TOL: f64 = 1e-6;

/// Log-spaced rate grid.
pub fn rate_grid() -> Vec<f64> {
    let (lo, hi) = (B_MIN.ln(), B_MAX.ln());
    (0..GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect()
}

/// Best asymptote for a fixed rate and the resulting squared error.
pub fn profile(points: &[(f64, f64)], b: f64) -> (f64, f64) {
    let (mut yf, mut ff) = (0.0, 0.0);
    for &(x, y) in points {
        let f = -(-b * x).exp_m1();
        yf += y * f;
        ff += f * f;
    }
    let a = if ff > 0.0 { (yf / ff).max(0.0) } else { 0.0 };
    let sse = points
        .iter()
        .map(|&(x, y)| {
            let r = y + a * (-b * x).exp_m1();
            r * r
        })
        .sum();
    (a, sse)
}

fn check(points: &[(f64, f64)]) -> Result<(), FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !x.is_finite() || (i > 0 && x <= points[i - 1].0) {
            return Err(FitError::NotIncreasing(i));
        }
        if !y.is_finite() || y < 0.0 {
            return Err(FitError::BadValue(i));
        }
    }
    Ok(())
}

/// Least-squares fit of `y = a (1 - exp(-b x))`.
pub fn fit_saturation(points: &[(f64, f64)]) -> Result<SaturationFit, FitError> {
    fit_saturation_with(points, Exec::Sequential)
}

/// As [`fit_saturation`], scanning the rate grid with `exec`.
///
/// The rate is scanned over a 400-point log grid on `[1e-4, 10]`, with the
/// asymptote solved in closed form for each rate. Golden-section search
/// then refines the rate between the neighbours of the best grid point
/// until the bracket is narrower than `1e-6`; the refined rate is kept only
/// if it does not increase the error.
pub fn fit_saturation_with(points: &[(f64, f64)], exec: Exec) -> Result<SaturationFit, FitError> {
    check(points)?;
    let finish = |a: f64, b: f64, sse: f64, degenerate: bool| SaturationFit {
        a,
        b,
        init: a * b,
        retain: (-b).exp(),
        residual_sse: sse,
        degenerate,
    };
    if points.iter().all(|&(_, y)| y == 0.0) {
        return Ok(finish(0.0, B_MIN, 0.0, true));
    }
    let grid = rate_grid();
    let sse = exec.map(&grid, |&b| profile(points, b).1);
    let best = (0..grid.len()).min_by(|&i, &j| sse[i].total_cmp(&sse[j])).expect("grid is non-empty");
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |b: f64| profile(points, b).1;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    let refined = (lo + hi) / 2.0;
    let (ra, rs) = profile(points, refined);
    let (b, a, s) = if rs <= sse[best] {
        (refined, ra, rs)
    } else {
        let (ga, gs) = profile(points, grid[best]);
        (grid[best], ga, gs)
    };
    Ok(finish(a, b, s, false))
}

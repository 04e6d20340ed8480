//! Degree-support check of a torus scan by 2-D FFT.

use qfl_core::qfl::TorusPoint;
use qfl_core::C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub const SUPPORT_TOLERANCE: f64 = 1e-6;
pub const PERIODICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub degree: usize,
    pub resolution: usize,
    /// Spectral mass at frequencies other than `(a, b)` with `a, b ≥ 0` and `a + b ≤ degree`,
    /// over the total mass.
    pub outside_fraction: f64,
    /// Largest difference between the `θ = 0` and `θ = 2π` edges of the grid.
    pub periodicity_error: f64,
    pub pass: bool,
}

/// `grid` is a `resolution²` scan over `[0, 2π]²`, both ends included, `θ₁` slow.
pub fn degree_support(grid: &[TorusPoint], resolution: usize, degree: usize) -> Result<SupportReport, String> {
    if resolution < 3 || grid.len() != resolution * resolution {
        return Err(format!("expected a {resolution}x{resolution} grid, got {} points", grid.len()));
    }
    let at = |a: usize, b: usize| grid[a * resolution + b].value;
    let last = resolution - 1;
    let mut periodicity_error: f64 = 0.0;
    for k in 0..resolution {
        periodicity_error = periodicity_error.max((at(0, k) - at(last, k)).norm()).max((at(k, 0) - at(k, last)).norm());
    }

    // drop the duplicated 2π edge; the rest is one period sampled at 2πk/n
    let n = last;
    let mut data: Vec<C64> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| at(a, b)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut column = vec![C64::new(0.0, 0.0); n];
    for b in 0..n {
        for a in 0..n {
            column[a] = data[a * n + b];
        }
        fft.process(&mut column);
        for a in 0..n {
            data[a * n + b] = column[a];
        }
    }
    let signed = |k: usize| if k <= n / 2 { k as i64 } else { k as i64 - n as i64 };
    let (mut total, mut outside) = (0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            let mass = data[a * n + b].norm_sqr();
            total += mass;
            let (fa, fb) = (signed(a), signed(b));
            if fa < 0 || fb < 0 || (fa + fb) as usize > degree {
                outside += mass;
            }
        }
    }
    let outside_fraction = if total > 0.0 { outside / total } else { 0.0 };
    let pass = outside_fraction < SUPPORT_TOLERANCE && periodicity_error < PERIODICITY_TOLERANCE;
    Ok(SupportReport { degree, resolution, outside_fraction, periodicity_error, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn scan(resolution: usize, f: impl Fn(f64, f64) -> C64) -> Vec<TorusPoint> {
        let step = TAU / (resolution - 1) as f64;
        let mut out = Vec::new();
        for a in 0..resolution {
            for b in 0..resolution {
                let (theta1, theta2) = (a as f64 * step, b as f64 * step);
                out.push(TorusPoint { theta1, theta2, value: f(theta1, theta2) });
            }
        }
        out
    }

    #[test]
    fn monomials_land_in_their_bins() {
        let g = scan(21, |a, b| C64::from_polar(1.0, 2.0 * a + b) + 0.5 * C64::from_polar(1.0, b));
        assert!(degree_support(&g, 21, 3).unwrap().pass);
        let r = degree_support(&g, 21, 2).unwrap();
        assert!(!r.pass && r.outside_fraction > 0.5);
    }

    #[test]
    fn negative_frequencies_are_outside() {
        let g = scan(17, |a, _| C64::from_polar(1.0, -a));
        assert!((degree_support(&g, 17, 4).unwrap().outside_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_is_checked() {
        assert!(degree_support(&scan(5, |_, _| C64::new(1.0, 0.0)), 6, 1).is_err());
    }
}

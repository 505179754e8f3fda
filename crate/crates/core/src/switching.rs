//! Sign-change detection between a boundary and a reference line.
//!
//! The region sequences of the solvers (where a boundary leaves the state
//! space across `x = s` or `x = s - y` and where it comes back) are the sign
//! changes of `boundary - reference` along a grid, refined by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bisect;

/// Bisection tolerance in the grid coordinate.
pub const SWITCH_TOL: f64 = 1e-10;

/// Which side of the reference line counts as inside the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inside {
    /// `curve ≤ reference` is inside (e.g. `h(s) ≤ s`).
    Below,
    /// `curve ≥ reference` is inside (e.g. `a(s, y) ≥ s - y`).
    Above,
}

/// Direction of a crossing, read in increasing grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Enters,
    Exits,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Enters => "enters",
            Direction::Exits => "exits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoint {
    pub at: f64,
    pub direction: Direction,
}

/// Crossings of `curve` through `reference` on a shared monotone grid.
///
/// Locations are refined by bisection on a four-point cubic interpolant of
/// the difference. A curve that touches the reference without crossing is not
/// a switch. Two crossings in adjacent cells mean the grid is too coarse to
/// separate them and yield [`Error::Resolution`].
pub fn detect_switch_points(
    grid: &[f64],
    curve: &[f64],
    reference: &[f64],
    inside: Inside,
) -> Result<Vec<SwitchPoint>> {
    assert_eq!(grid.len(), curve.len());
    assert_eq!(grid.len(), reference.len());
    let n = grid.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    let diff: Vec<f64> = curve.iter().zip(reference).map(|(c, r)| c - r).collect();

    // Zeros inherit the previous nonzero sign so a touch is not a crossing.
    let mut signs = Vec::with_capacity(n);
    let mut last = diff
        .iter()
        .copied()
        .find(|d| *d != 0.0)
        .map_or(0.0, f64::signum);
    for d in &diff {
        if *d != 0.0 {
            last = d.signum();
        }
        signs.push(last);
    }

    let ascending = grid[n - 1] > grid[0];
    let mut points: Vec<SwitchPoint> = Vec::new();
    let mut last_cell: Option<usize> = None;
    for k in 0..n - 1 {
        if signs[k] == signs[k + 1] || signs[k] == 0.0 {
            continue;
        }
        if let Some(prev) = last_cell {
            if k == prev + 1 {
                return Err(Error::Resolution(grid[k]));
            }
        }
        last_cell = Some(k);
        let lo = k.saturating_sub(1).min(n.saturating_sub(4));
        let idx: Vec<usize> = (lo..(lo + 4).min(n)).collect();
        let interp = |t: f64| lagrange(&idx, grid, &diff, t);
        let at = bisect(interp, grid[k], grid[k + 1], SWITCH_TOL);
        // sign after the crossing, in increasing grid coordinate
        let after = if ascending { signs[k + 1] } else { signs[k] };
        let goes_inside = match inside {
            Inside::Below => after < 0.0,
            Inside::Above => after > 0.0,
        };
        points.push(SwitchPoint {
            at,
            direction: if goes_inside {
                Direction::Enters
            } else {
                Direction::Exits
            },
        });
    }
    if !ascending {
        points.reverse();
    }
    Ok(points)
}

fn lagrange(idx: &[usize], grid: &[f64], vals: &[f64], t: f64) -> f64 {
    let mut out = 0.0;
    for &i in idx {
        let mut w = 1.0;
        for &j in idx {
            if i != j {
                w *= (t - grid[j]) / (grid[i] - grid[j]);
            }
        }
        out += w * vals[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn constant_call_boundary_crosses_diagonal_once() {
        let grid = linspace(1.0, 10.0, 91);
        let curve = vec![3.0; grid.len()];
        let pts = detect_switch_points(&grid, &curve, &grid, Inside::Below).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].at - 3.0).abs() < 1e-10);
        assert_eq!(pts[0].direction, Direction::Enters);
    }

    #[test]
    fn no_crossing_gives_empty_list() {
        let grid = linspace(1.0, 10.0, 50);
        let curve: Vec<f64> = grid.iter().map(|s| s - 0.5).collect();
        assert!(detect_switch_points(&grid, &curve, &grid, Inside::Below)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sine_perturbation_crossings_at_multiples_of_pi() {
        let grid = linspace(0.5, 20.0, 2000);
        let curve: Vec<f64> = grid.iter().map(|s| s + 0.1 * s.sin()).collect();
        let pts = detect_switch_points(&grid, &curve, &grid, Inside::Below).unwrap();
        assert_eq!(pts.len(), 6);
        for (k, p) in pts.iter().enumerate() {
            let exact = (k + 1) as f64 * std::f64::consts::PI;
            assert!((p.at - exact).abs() < 1e-8, "{} vs {}", p.at, exact);
        }
        for w in pts.windows(2) {
            assert_ne!(w[0].direction, w[1].direction);
        }
    }

    #[test]
    fn tangency_is_not_a_switch() {
        let grid = linspace(-1.0, 1.0, 21);
        let curve: Vec<f64> = grid.iter().map(|t| t * t).collect();
        let zero = vec![0.0; grid.len()];
        assert!(detect_switch_points(&grid, &curve, &zero, Inside::Below)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn descending_grid_reports_in_grid_order() {
        let grid = linspace(10.0, 1.0, 91);
        let curve = vec![3.0; grid.len()];
        let pts = detect_switch_points(&grid, &curve, &grid, Inside::Below).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].direction, Direction::Enters);
    }

    #[test]
    fn adjacent_crossings_need_finer_grid() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let curve = [1.0, -1.0, 1.0, 1.0];
        let zero = [0.0; 4];
        assert!(matches!(
            detect_switch_points(&grid, &curve, &zero, Inside::Below),
            Err(Error::Resolution(_))
        ));
    }
}

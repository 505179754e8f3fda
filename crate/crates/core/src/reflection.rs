//! Coefficients `C₁(s, y)`, `C₂(s, y)` on a reflection region.
//!
//! Inside a region where the process is pushed back at `x = s` and
//! `x = s - y` the value is `C₁ x^{γ₁} + C₂ x^{γ₂}`, and normal reflection on
//! the two planes reads
//!
//! ```text
//! Σᵢ s^{γᵢ}       (∂ₛCᵢ + Cᵢ ∂ₛγᵢ ln s)             = 0
//! Σᵢ (s-y)^{γᵢ}   (∂ᵧCᵢ + Cᵢ ∂ᵧγᵢ ln(s - y))       = 0
//! ```
//!
//! Both are discretized on a uniform grid shared by `s` and `y` and solved
//! node by node, in decreasing `y` and decreasing `s`,
//! starting from the places where the reflected process leaves the region.

use crate::coefficients::{roots, ModelSpec};
use crate::error::{Error, Result};

/// What the region prescribes where a row or column leaves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exit {
    /// Value and x-slope at the exit point, at distance `at` along the line.
    Data { at: f64, value: f64, slope: f64 },
    /// `C₁ = 0` at the last node (rows running to the far end of the grid).
    FirstVanishes,
    /// `C₂ = 0` at the last node (columns reaching the diagonal).
    SecondVanishes,
}

/// A reflection region together with its exit data.
pub trait ReflectionRegion: Sync {
    fn spec(&self) -> &ModelSpec;

    /// Whether grid node `(s, y)` lies in the region.
    fn contains(&self, s: f64, y: f64) -> bool;

    /// Where row `y` leaves the region after its last inside node `s_in`.
    /// `s_out` is the next grid node, `None` at the end of the grid. `Data`
    /// refers to the plane `x = s`.
    fn row_exit(&self, y: f64, s_in: f64, s_out: Option<f64>) -> Result<Exit>;

    /// Where column `s` leaves the region above its last inside node `y_in`.
    /// `y_out` is the next grid node, `None` when that would be the diagonal.
    /// `Data` refers to the plane `x = s - y`.
    fn column_exit(&self, s: f64, y_in: f64, y_out: Option<f64>) -> Result<Exit>;
}

/// Uniform nodes `t_k`, used for both `s` (columns) and `y` (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionGrid {
    pub nodes: Vec<f64>,
}

impl ReflectionGrid {
    pub fn uniform(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if !(t0 > 0.0 && t1 > t0 && n >= 4) {
            return Err(Error::Config(format!(
                "reflection grid needs 0 < t0 < t1 and n >= 4, got [{t0}, {t1}], n = {n}"
            )));
        }
        let h = (t1 - t0) / (n - 1) as f64;
        Ok(Self {
            nodes: (0..n).map(|k| t0 + h * k as f64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }
}

/// The solved coefficients. Node `(i, j)` sits at `y = t_i`, `s = t_j`, `i < j`.
#[derive(Debug, Clone)]
pub struct CoefficientGrid {
    grid: ReflectionGrid,
    c: Vec<Option<[f64; 2]>>,
    exits: Vec<ExitRecord>,
}

/// Where a grid line left the region, as seen by the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    /// `true` for a row (fixed `y`, exit in `s`), `false` for a column.
    pub row: bool,
    pub fixed: f64,
    pub exit: Exit,
}

impl CoefficientGrid {
    pub fn grid(&self) -> &ReflectionGrid {
        &self.grid
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid.len() + j
    }

    /// Coefficients at node `(i, j)` (`y = t_i`, `s = t_j`), if it is in the region.
    pub fn node(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        if i >= j || j >= self.grid.len() {
            return None;
        }
        self.c[self.idx(i, j)]
    }

    pub fn exits(&self) -> &[ExitRecord] {
        &self.exits
    }

    pub fn inside_count(&self) -> usize {
        self.c.iter().filter(|c| c.is_some()).count()
    }

    /// Bilinear interpolation from the region nodes of the enclosing cell.
    ///
    /// Corners outside the region are dropped and the weights renormalized;
    /// if the whole cell is outside, the nearest region node within two cells
    /// is used.
    pub fn coefficients_at(&self, s: f64, y: f64) -> Option<[f64; 2]> {
        let t = &self.grid.nodes;
        let n = t.len();
        let h = self.grid.step();
        let locate = |v: f64| -> (usize, f64) {
            let k = ((v - t[0]) / h).floor().clamp(0.0, (n - 2) as f64) as usize;
            (k, ((v - t[k]) / h).clamp(0.0, 1.0))
        };
        let (j, u) = locate(s);
        let (i, w) = locate(y);
        let mut acc = [0.0; 2];
        let mut weight = 0.0;
        for (di, wy) in [(0, 1.0 - w), (1, w)] {
            for (dj, ws) in [(0, 1.0 - u), (1, u)] {
                if let Some(c) = self.node(i + di, j + dj) {
                    let wt = wy * ws;
                    acc[0] += wt * c[0];
                    acc[1] += wt * c[1];
                    weight += wt;
                }
            }
        }
        if weight > 1e-12 {
            return Some([acc[0] / weight, acc[1] / weight]);
        }
        let mut best: Option<(f64, [f64; 2])> = None;
        for ii in i.saturating_sub(2)..(i + 4).min(n) {
            for jj in j.saturating_sub(2)..(j + 4).min(n) {
                if let Some(c) = self.node(ii, jj) {
                    let d = (t[ii] - y).hypot(t[jj] - s);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, c));
                    }
                }
            }
        }
        best.map(|(_, c)| c)
    }
}

/// Coefficients matching value `v` and slope `d` of `C₁x^{γ₁} + C₂x^{γ₂}` at `x`.
pub fn coefficients_from_data(gamma: [f64; 2], x: f64, v: f64, d: f64) -> [f64; 2] {
    let [g1, g2] = gamma;
    let p1 = x.powf(g1);
    let p2 = x.powf(g2);
    // [p1 p2; g1 p1/x g2 p2/x] C = [v; d]
    let det = p1 * p2 * (g2 - g1) / x;
    let c1 = (v * g2 * p2 / x - p2 * d) / det;
    let c2 = (p1 * d - v * g1 * p1 / x) / det;
    [c1, c2]
}

/// One relation between the node and a neighbor at distance `dist` along `s`
/// (`along_s`) or `y`: `a · C = rhs`.
///
/// Along the segment, `Σᵢ ∂(Cᵢ p^{γᵢ})` vanishes with the plane `p` frozen,
/// so each term is carried by `exp(∫ ∂γᵢ ln p)`; the integral uses Simpson's
/// rule and the weights `p^{γᵢ}` are taken at the midpoint. A single active
/// coefficient is transported with fourth-order accuracy.
fn relation(
    spec: &ModelSpec,
    s: f64,
    y: f64,
    dist: f64,
    along_s: bool,
    neighbor: [f64; 2],
) -> Result<([f64; 2], f64)> {
    let at = |f: f64| {
        if along_s {
            (s + f * dist, y)
        } else {
            (s, y + f * dist)
        }
    };
    let mut kappa = [[0.0; 2]; 3];
    let mut mid = None;
    for (k, f) in [0.0, 0.5, 1.0].into_iter().enumerate() {
        let (sk, yk) = at(f);
        let rp = roots(spec, sk, yk.min(sk))?;
        let plane = if along_s { sk } else { sk - yk };
        for i in 0..2 {
            let dg = if along_s {
                rp.dgamma_ds(i)
            } else {
                rp.dgamma_dy(i)
            };
            kappa[k][i] = if dg == 0.0 { 0.0 } else { dg * plane.ln() };
        }
        if k == 1 {
            mid = Some((rp, plane));
        }
    }
    let (rp, plane) = mid.expect("midpoint evaluated");
    let mut a = [0.0; 2];
    let mut rhs = 0.0;
    for i in 0..2 {
        let m = plane.powf(rp.gamma(i));
        let integral = dist / 6.0 * (kappa[0][i] + 4.0 * kappa[1][i] + kappa[2][i]);
        a[i] = m * (-0.5 * integral).exp();
        rhs += m * (0.5 * integral).exp() * neighbor[i];
    }
    Ok((a, rhs))
}

enum Condition {
    Relation([f64; 2], f64),
    Zero(usize),
}

fn row_condition<R: ReflectionRegion + ?Sized>(
    region: &R,
    sol: &[Option<[f64; 2]>],
    t: &[f64],
    i: usize,
    j: usize,
    exits: &mut Vec<ExitRecord>,
) -> Result<Condition> {
    let n = t.len();
    let (s, y) = (t[j], t[i]);
    if j + 1 < n {
        if let Some(c) = sol[i * n + j + 1] {
            let (a, rhs) = relation(region.spec(), s, y, t[j + 1] - s, true, c)?;
            return Ok(Condition::Relation(a, rhs));
        }
    }
    let s_out = (j + 1 < n).then(|| t[j + 1]);
    let exit = region.row_exit(y, s, s_out)?;
    exits.push(ExitRecord {
        row: true,
        fixed: y,
        exit,
    });
    exit_condition(region, s, y, true, exit)
}

fn column_condition<R: ReflectionRegion + ?Sized>(
    region: &R,
    sol: &[Option<[f64; 2]>],
    t: &[f64],
    i: usize,
    j: usize,
    exits: &mut Vec<ExitRecord>,
) -> Result<Condition> {
    let n = t.len();
    let (s, y) = (t[j], t[i]);
    if i + 1 < j {
        if let Some(c) = sol[(i + 1) * n + j] {
            let (a, rhs) = relation(region.spec(), s, y, t[i + 1] - y, false, c)?;
            return Ok(Condition::Relation(a, rhs));
        }
    }
    let y_out = (i + 1 < j).then(|| t[i + 1]);
    let exit = region.column_exit(s, y, y_out)?;
    exits.push(ExitRecord {
        row: false,
        fixed: s,
        exit,
    });
    exit_condition(region, s, y, false, exit)
}

fn solve_node(row: Condition, col: Condition, s: f64, y: f64) -> Result<[f64; 2]> {
    let as_rel = |c: Condition| match c {
        Condition::Relation(a, r) => (a, r),
        Condition::Zero(k) => {
            let mut a = [0.0; 2];
            a[k] = 1.0;
            (a, 0.0)
        }
    };
    let (a, r) = as_rel(row);
    let (b, q) = as_rel(col);
    let det = a[0] * b[1] - a[1] * b[0];
    let scale = (a[0].abs() + a[1].abs()) * (b[0].abs() + b[1].abs());
    if !(det.abs() > 1e-14 * scale) {
        return Err(Error::NonConvergence(format!(
            "singular node system at (s, y) = ({s}, {y}): {a:?} {b:?}"
        )));
    }
    Ok([(r * b[1] - a[1] * q) / det, (a[0] * q - r * b[0]) / det])
}

/// Solve for `(C₁, C₂)` on every grid node of `region`.
///
/// Nodes are visited in decreasing `y`, and within a row in decreasing `s`,
/// so each node's row and column neighbors toward the exits are already
/// known. A node without a known neighbor asks the region for exit data.
pub fn solve_reflection_region<R: ReflectionRegion + ?Sized>(
    region: &R,
    grid: &ReflectionGrid,
) -> Result<CoefficientGrid> {
    let t = &grid.nodes;
    let n = t.len();
    let mut sol: Vec<Option<[f64; 2]>> = vec![None; n * n];
    let mut exits = Vec::new();
    for i in (0..n - 1).rev() {
        for j in ((i + 1)..n).rev() {
            let (s, y) = (t[j], t[i]);
            if !region.contains(s, y) {
                continue;
            }
            let row = row_condition(region, &sol, t, i, j, &mut exits)?;
            let col = column_condition(region, &sol, t, i, j, &mut exits)?;
            sol[i * n + j] = Some(solve_node(row, col, s, y)?);
        }
    }
    Ok(CoefficientGrid {
        grid: grid.clone(),
        c: sol,
        exits,
    })
}

/// Relation from the query point towards exit data on its row or column.
fn exit_condition<R: ReflectionRegion + ?Sized>(
    region: &R,
    s: f64,
    y: f64,
    along_s: bool,
    exit: Exit,
) -> Result<Condition> {
    match exit {
        Exit::Data { at, value, slope } => {
            let (ps, py, x) = if along_s {
                (at, y, at)
            } else {
                (s, at, s - at)
            };
            let rp = roots(region.spec(), ps, py)?;
            let ce = coefficients_from_data([rp.gamma1, rp.gamma2], x, value, slope);
            let dist = if along_s { at - s } else { at - y };
            let (a, rhs) = relation(region.spec(), s, y, dist, along_s, ce)?;
            Ok(Condition::Relation(a, rhs))
        }
        Exit::FirstVanishes => Ok(Condition::Zero(0)),
        Exit::SecondVanishes => Ok(Condition::Zero(1)),
    }
}

fn lerp(a: [f64; 2], b: [f64; 2], w: f64) -> [f64; 2] {
    [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
}

/// `C` at `(s, y)` on a grid line, from the two bracketing nodes or from one
/// node and the line's exit.
fn on_line<R: ReflectionRegion + ?Sized>(
    region: &R,
    grid: &CoefficientGrid,
    along_s: bool,
    line: usize,
    k: usize,
    at: f64,
) -> Result<Option<[f64; 2]>> {
    let t = &grid.grid.nodes;
    let n = t.len();
    let fetch = |m: usize| {
        if along_s {
            grid.node(line, m)
        } else {
            grid.node(m, line)
        }
    };
    let lo = fetch(k);
    let hi = if k + 1 < n { fetch(k + 1) } else { None };
    let w = if k + 1 < n {
        (at - t[k]) / (t[k + 1] - t[k])
    } else {
        0.0
    };
    Ok(match (lo, hi) {
        (Some(a), Some(b)) => Some(lerp(a, b, w)),
        (None, Some(b)) => Some(b),
        (None, None) => None,
        (Some(a), None) => {
            let next = (k + 1 < n).then(|| t[k + 1]);
            let exit = if along_s {
                region.row_exit(t[line], t[k], next)?
            } else {
                let next = next.filter(|v| *v < t[line]);
                region.column_exit(t[line], t[k], next)?
            };
            match exit {
                Exit::Data {
                    at: e,
                    value,
                    slope,
                } if e > t[k] => {
                    let (ps, py, x) = if along_s {
                        (e, t[line], e)
                    } else {
                        (t[line], e, t[line] - e)
                    };
                    let rp = roots(region.spec(), ps, py)?;
                    let ce = coefficients_from_data([rp.gamma1, rp.gamma2], x, value, slope);
                    Some(lerp(a, ce, ((at - t[k]) / (e - t[k])).min(1.0)))
                }
                _ => Some(a),
            }
        }
    })
}

/// `(C₁, C₂)` at an arbitrary point of the region.
///
/// The point is solved like a grid node: its row relation points to the next
/// column and its column relation to the next row, with the coefficients
/// there interpolated along that grid line, or to the exact exit when the
/// region ends first. This keeps points between the last nodes and a cap as
/// accurate as the nodes themselves. Falls back to [`CoefficientGrid::coefficients_at`]
/// where a grid line has no nodes nearby.
pub fn coefficients_at_point<R: ReflectionRegion + ?Sized>(
    region: &R,
    grid: &CoefficientGrid,
    s: f64,
    y: f64,
) -> Result<Option<[f64; 2]>> {
    let t = &grid.grid.nodes;
    let n = t.len();
    let h = grid.grid.step();
    let fallback = || grid.coefficients_at(s, y);
    let j = (((s - t[0]) / h).floor().max(0.0) as usize).min(n - 1);
    let i = (((y - t[0]) / h).floor().max(0.0) as usize).min(n - 2);
    let spec = region.spec();

    let row = if j + 1 < n && t[j + 1] > s && region.contains(t[j + 1], y) {
        match on_line(region, grid, false, j + 1, i, y)? {
            Some(c) => {
                let (a, rhs) = relation(spec, s, y, t[j + 1] - s, true, c)?;
                Condition::Relation(a, rhs)
            }
            None => return Ok(fallback()),
        }
    } else {
        let next = (j + 1 < n).then(|| t[j + 1]).filter(|v| *v > s);
        exit_condition(region, s, y, true, region.row_exit(y, s, next)?)?
    };

    let y_next = t[i + 1];
    let col = if y_next > y && y_next < s && region.contains(s, y_next) {
        match on_line(region, grid, true, i + 1, j, s)? {
            Some(c) => {
                let (a, rhs) = relation(spec, s, y, y_next - y, false, c)?;
                Condition::Relation(a, rhs)
            }
            None => return Ok(fallback()),
        }
    } else {
        let next = (y_next > y && y_next < s).then_some(y_next);
        exit_condition(region, s, y, false, region.column_exit(s, y, next)?)?
    };
    solve_node(row, col, s, y).map(Some)
}

/// Per-node residuals of the two reflection equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeResidual {
    pub s: f64,
    pub y: f64,
    pub c: [f64; 2],
    /// Residual along `s`, `None` away from the interior.
    pub along_s: Option<f64>,
    pub along_y: Option<f64>,
}

/// Central-difference residuals of both equations at every region node,
/// normalized by `max(|C₁ p^{γ₁}|, |C₂ p^{γ₂}|)` on the respective plane `p`.
///
/// Only interior nodes are evaluated: the five-point stencil must lie in the
/// region and stay at least one step away from the diagonal `s = y`.
pub fn pde_residuals(spec: &ModelSpec, grid: &CoefficientGrid) -> Result<Vec<NodeResidual>> {
    let t = &grid.grid.nodes;
    let n = t.len();
    let h = grid.grid.step();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let Some(c) = grid.node(i, j) else { continue };
            let (s, y) = (t[j], t[i]);
            let rp = roots(spec, s, y)?;
            let at = |di: isize, dj: isize| -> Option<[f64; 2]> {
                let ii = i as isize + di;
                let jj = j as isize + dj;
                if ii < 0 || jj < 0 {
                    return None;
                }
                grid.node(ii as usize, jj as usize)
            };
            let interior = s - y >= 3.0 * h * (1.0 - 1e-9);
            let deriv = |step: &dyn Fn(isize) -> Option<[f64; 2]>| -> Option<[f64; 2]> {
                if !interior {
                    return None;
                }
                let (m2, m1, p1, p2) = (step(-2)?, step(-1)?, step(1)?, step(2)?);
                Some(std::array::from_fn(|k| {
                    (m2[k] - 8.0 * m1[k] + 8.0 * p1[k] - p2[k]) / (12.0 * h)
                }))
            };
            let residual = |dc: [f64; 2], plane: f64, dg: [f64; 2]| -> f64 {
                let ln = plane.ln();
                let mut sum = 0.0;
                let mut norm: f64 = 0.0;
                for k in 0..2 {
                    let m = plane.powf(rp.gamma(k));
                    sum += m * (dc[k] + c[k] * dg[k] * ln);
                    norm = norm.max((c[k] * m).abs());
                }
                if norm > 0.0 {
                    sum.abs() / norm
                } else {
                    sum.abs()
                }
            };
            let along_s =
                deriv(&|d| at(0, d)).map(|dc| residual(dc, s, [rp.dgamma1_ds, rp.dgamma2_ds]));
            let along_y =
                deriv(&|d| at(d, 0)).map(|dc| residual(dc, s - y, [rp.dgamma1_dy, rp.dgamma2_dy]));
            out.push(NodeResidual {
                s,
                y,
                c,
                along_s,
                along_y,
            });
        }
    }
    Ok(out)
}

/// Largest residual along `s` and along `y` over all nodes.
pub fn max_residuals(res: &[NodeResidual]) -> (f64, f64) {
    res.iter().fold((0.0f64, 0.0f64), |(a, b), r| {
        (
            a.max(r.along_s.unwrap_or(0.0)),
            b.max(r.along_y.unwrap_or(0.0)),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Payoff;

    /// The whole triangle above `s - y > w`, with the constant put solution
    /// as exit data: columns stop at `y = s - w`, rows run to the grid end.
    struct Band {
        spec: ModelSpec,
        w: f64,
        c: [f64; 2],
    }

    impl Band {
        fn value(&self, x: f64) -> (f64, f64) {
            let rp = roots(&self.spec, 1.0, 0.5).unwrap();
            let g = [rp.gamma1, rp.gamma2];
            let v = self.c[0] * x.powf(g[0]) + self.c[1] * x.powf(g[1]);
            let d = self.c[0] * g[0] * x.powf(g[0] - 1.0) + self.c[1] * g[1] * x.powf(g[1] - 1.0);
            (v, d)
        }
    }

    impl ReflectionRegion for Band {
        fn spec(&self) -> &ModelSpec {
            &self.spec
        }
        fn contains(&self, s: f64, y: f64) -> bool {
            s - y > self.w
        }
        fn row_exit(&self, _y: f64, _s_in: f64, _s_out: Option<f64>) -> Result<Exit> {
            Ok(Exit::FirstVanishes)
        }
        fn column_exit(&self, s: f64, _y_in: f64, _y_out: Option<f64>) -> Result<Exit> {
            let (value, slope) = self.value(self.w);
            Ok(Exit::Data {
                at: s - self.w,
                value,
                slope,
            })
        }
    }

    fn constant_spec() -> ModelSpec {
        ModelSpec::reference(Payoff::Put, 1.0)
    }

    #[test]
    fn constant_fields_keep_coefficients_constant() {
        let band = Band {
            spec: constant_spec(),
            w: 2.0 / 3.0,
            c: [0.0, 4.0 / 27.0],
        };
        let grid = ReflectionGrid::uniform(0.05, 20.0, 201).unwrap();
        let sol = solve_reflection_region(&band, &grid).unwrap();
        assert!(sol.inside_count() > 1000);
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                if let Some(c) = sol.node(i, j) {
                    assert!(c[0].abs() < 1e-13, "C1 = {}", c[0]);
                    assert!((c[1] - 4.0 / 27.0).abs() < 1e-12, "C2 = {}", c[1]);
                }
            }
        }
        let res = pde_residuals(&band.spec, &sol).unwrap();
        let (rc, rd) = max_residuals(&res);
        assert!(rc < 1e-12 && rd < 1e-12, "{rc} {rd}");
    }

    #[test]
    fn data_round_trip() {
        let g = [1.5, -2.0];
        let c = coefficients_from_data(g, 0.7, 0.3, -1.0);
        let v = c[0] * 0.7f64.powf(1.5) + c[1] * 0.7f64.powf(-2.0);
        let d = 1.5 * c[0] * 0.7f64.powf(0.5) - 2.0 * c[1] * 0.7f64.powf(-3.0);
        assert!((v - 0.3).abs() < 1e-14 && (d + 1.0).abs() < 1e-14);
    }

    #[test]
    fn interpolation_uses_region_nodes_only() {
        let band = Band {
            spec: constant_spec(),
            w: 2.0 / 3.0,
            c: [0.0, 4.0 / 27.0],
        };
        let grid = ReflectionGrid::uniform(0.05, 20.0, 101).unwrap();
        let sol = solve_reflection_region(&band, &grid).unwrap();
        // a cell straddling the exit line
        let c = sol.coefficients_at(3.0, 3.0 - 0.7).unwrap();
        assert!((c[1] - 4.0 / 27.0).abs() < 1e-12);
    }
}

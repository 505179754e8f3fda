//! The three-dimensional `(X, S, Y)` problem.
//!
//! The call boundary `b(s, y)` is integrated along `y` for each fixed `s`,
//! downward from `b(s, s-) = h*(s)`; the put boundary `a(s, y)` along `s` for
//! each fixed `y`, upward from `a(y+, y) = g*(y)`. Both use the generic
//! boundary equation with the plane `s - y` (call) or `s` (put).
//!
//! Where a boundary leaves `[s - y, s]` toward the side where the process is
//! reflected, the value comes from [`crate::reflection`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{roots, ModelSpec, Payoff, StateTriple};
use crate::error::{Error, Result};
use crate::numerics::{bisect, boundary_slope, rk4_refined, Trajectory};
use crate::power::{Branch, PowerForm};
use crate::reflection::{
    coefficients_at_point, coefficients_from_data, solve_reflection_region, CoefficientGrid, Exit,
    ReflectionGrid, ReflectionRegion,
};
use crate::solver2d::{
    call_boundary_2d, call_coefficients, put_boundary_2d, put_coefficients, CallSolution2d, Grid2d,
    PutBoundary2d, STEP_TOL,
};
use crate::switching::{detect_switch_points, Inside};

/// Offset from the diagonal where slices start, relative to the strike.
pub const EDGE_EPS: f64 = 1e-6;
/// Largest number of `(ŝ₂ₖ₋₁, ŝ₂ₖ)` pairs reported per put slice.
pub const MAX_PAIRS: usize = 16;
/// Relative distance from the constraint at which a slice is cut. The
/// boundary equation's denominator vanishes on `x = r·strike/δ`, so steps
/// cannot approach it closely.
pub const GUARD_MARGIN: f64 = 1e-2;
/// Step-count doublings allowed per slice when the step error is too large.
pub const MAX_DOUBLINGS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options3d {
    pub s_min: f64,
    pub s_max: f64,
    /// Nodes per axis of the surface and reflection grids.
    pub nodes: usize,
    /// RK4 steps across `[s_min, s_max]`; slices use the same step length.
    pub steps: usize,
    /// Assemble fields that ignore `y` through the general route as well.
    pub general: bool,
}

impl Options3d {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        Self {
            s_min: 0.05 * spec.strike(),
            s_max: spec.domain().s_max,
            nodes: 257,
            steps: crate::solver2d::DEFAULT_STEPS,
            general: false,
        }
    }

    fn step_len(&self) -> f64 {
        (self.s_max - self.s_min) / self.steps as f64
    }

    fn steps_for(&self, len: f64) -> usize {
        ((len.abs() / self.step_len()).ceil() as usize).max(16)
    }

    fn nodes_vec(&self) -> Vec<f64> {
        let h = (self.s_max - self.s_min) / (self.nodes - 1) as f64;
        (0..self.nodes).map(|k| self.s_min + h * k as f64).collect()
    }
}

/// One boundary slice: `y ↦ b(s, y)` at fixed `s`, or `s ↦ a(s, y)` at fixed `y`.
#[derive(Debug, Clone)]
pub struct Slice {
    pub fixed: f64,
    traj: Trajectory,
    /// Set when the slice was cut because the constraint would be violated.
    pub cut: Option<Cut>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub at: f64,
    /// The boundary was still in play (not on the stopping side of both
    /// planes) when the constraint failed. Otherwise the stopping region is
    /// taken to persist past the cut.
    pub active: bool,
}

impl Slice {
    pub fn at(&self, v: f64) -> f64 {
        self.traj.interp(v)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    /// Whether the slice is usable at `v`: integrated there, or cut on the
    /// stopping side.
    pub fn covers(&self, v: f64) -> bool {
        let (a, b) = (self.traj.t[0], *self.traj.t.last().unwrap());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        match self.cut {
            Some(c) if c.active => v >= lo - 1e-12 && v <= hi + 1e-12,
            _ => true,
        }
    }
}

/// `K ∨ rK/δ(s, y)` for the call, `L ∧ rL/δ(s, y)` for the put.
pub fn constraint_3d(spec: &ModelSpec, s: f64, y: f64) -> f64 {
    let k = spec.strike();
    let alt = spec.r() * k / spec.delta().value(s, y);
    match spec.payoff() {
        Payoff::Call => k.max(alt),
        Payoff::Put => k.min(alt),
    }
}

type Cache = Mutex<HashMap<u64, Arc<Slice>>>;

fn cached(cache: &Cache, key: f64, make: impl FnOnce() -> Result<Slice>) -> Result<Arc<Slice>> {
    if let Some(s) = cache.lock().unwrap().get(&key.to_bits()) {
        return Ok(s.clone());
    }
    let slice = Arc::new(make()?);
    cache.lock().unwrap().insert(key.to_bits(), slice.clone());
    Ok(slice)
}

/// The call boundary surface `b(s, y)`.
#[derive(Debug)]
pub struct CallSurface {
    spec: ModelSpec,
    opts: Options3d,
    cache: Cache,
}

/// The slice `y ↦ b(s, y)` from `y = s - ε` down to `y = 0`.
pub fn call_boundary_slice(spec: &ModelSpec, s: f64, opts: &Options3d) -> Result<Slice> {
    let spec = spec.with_payoff(Payoff::Call);
    if !(s > 0.0) {
        return Err(Error::Domain(format!("call slice needs s > 0, got {s}")));
    }
    let k = spec.strike();
    let top = s - EDGE_EPS * k;
    if !(top > 0.0) {
        return Err(Error::Domain(format!(
            "call slice at s = {s} is below the edge offset"
        )));
    }
    let start = call_boundary_2d(&spec, s)?;
    let run = rk4_refined(
        |y, b| {
            // stage points can round to just below y = 0
            let rp = roots(&spec, s, y.max(0.0))?;
            boundary_slope(
                b,
                k,
                s - y,
                [rp.gamma1, rp.gamma2],
                [rp.dgamma1_dy, rp.dgamma2_dy],
            )
        },
        top,
        start,
        0.0,
        opts.steps_for(top),
        STEP_TOL,
        |y, b| b > constraint_3d(&spec, s, y) * (1.0 + GUARD_MARGIN),
        MAX_DOUBLINGS,
    )?;
    let cut = run.stopped_at.map(|at| Cut {
        at,
        active: run.trajectory.y.last().is_some_and(|b| *b >= s - at),
    });
    Ok(Slice {
        fixed: s,
        traj: run.trajectory,
        cut,
    })
}

/// The slice `s ↦ a(s, y)` from the diagonal `s = y` up to `s_max`, started
/// at `g*(y)`. The put equation has no singularity on the diagonal, so no
/// offset is needed.
pub fn put_boundary_slice(
    spec: &ModelSpec,
    edge: &PutBoundary2d,
    y: f64,
    opts: &Options3d,
) -> Result<Slice> {
    let spec = spec.with_payoff(Payoff::Put);
    let l = spec.strike();
    let start_s = y;
    if !(y > 0.0 && start_s < opts.s_max) {
        return Err(Error::Domain(format!(
            "put slice needs 0 < y < s_max, got y = {y}"
        )));
    }
    let run = rk4_refined(
        |s, a| {
            let rp = roots(&spec, s, y)?;
            boundary_slope(
                a,
                l,
                s,
                [rp.gamma1, rp.gamma2],
                [rp.dgamma1_ds, rp.dgamma2_ds],
            )
        },
        start_s,
        edge.at(y),
        opts.s_max,
        opts.steps_for(opts.s_max - start_s),
        STEP_TOL,
        |s, a| a > 0.0 && a < constraint_3d(&spec, s, y) * (1.0 - GUARD_MARGIN),
        MAX_DOUBLINGS,
    )?;
    let cut = run.stopped_at.map(|at| Cut {
        at,
        active: run.trajectory.y.last().is_some_and(|a| *a <= at),
    });
    Ok(Slice {
        fixed: y,
        traj: run.trajectory,
        cut,
    })
}

impl CallSurface {
    pub fn new(spec: &ModelSpec, opts: Options3d) -> Self {
        Self {
            spec: spec.with_payoff(Payoff::Call),
            opts,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn slice(&self, s: f64) -> Result<Arc<Slice>> {
        cached(&self.cache, s, || {
            call_boundary_slice(&self.spec, s, &self.opts)
        })
    }

    /// Compute the slices at `columns` in parallel.
    pub fn prefetch(&self, columns: &[f64]) -> Result<()> {
        columns
            .par_iter()
            .map(|&s| self.slice(s).map(|_| ()))
            .collect()
    }

    /// `b(s, y)`.
    pub fn boundary(&self, s: f64, y: f64) -> Result<f64> {
        let sl = self.slice(s)?;
        if !sl.covers(y) {
            return Err(breach(&self.spec, s, y, &sl));
        }
        Ok(sl.at(y))
    }
}

fn breach(spec: &ModelSpec, s: f64, y: f64, sl: &Slice) -> Error {
    Error::ConstraintBreach {
        location: format!(
            "(s, y) = ({s}, {y}), slice cut at {}",
            sl.cut.map_or(f64::NAN, |c| c.at)
        ),
        value: sl.at(y),
        limit: constraint_3d(spec, s, y),
    }
}

/// The put boundary surface `a(s, y)`.
#[derive(Debug)]
pub struct PutSurface {
    spec: ModelSpec,
    opts: Options3d,
    edge: PutBoundary2d,
    cache: Cache,
}

impl PutSurface {
    pub fn new(spec: &ModelSpec, opts: Options3d) -> Result<Self> {
        let spec = spec.with_payoff(Payoff::Put);
        let edge = put_boundary_2d(
            &spec,
            Grid2d {
                s_min: opts.s_min,
                s_max: opts.s_max,
                steps: opts.steps,
            },
            0.0,
        )?;
        Ok(Self {
            spec,
            opts,
            edge,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// The diagonal boundary `g*` the slices start from.
    pub fn edge(&self) -> &PutBoundary2d {
        &self.edge
    }

    pub fn slice(&self, y: f64) -> Result<Arc<Slice>> {
        cached(&self.cache, y, || {
            put_boundary_slice(&self.spec, &self.edge, y, &self.opts)
        })
    }

    pub fn prefetch(&self, rows: &[f64]) -> Result<()> {
        rows.par_iter()
            .map(|&y| self.slice(y).map(|_| ()))
            .collect()
    }

    /// `a(s, y)`; on and past the diagonal this is `g*(s)`. Rows below
    /// `y = s_min` have no diagonal start and take the `s_min` row.
    pub fn boundary(&self, s: f64, y: f64) -> Result<f64> {
        if y >= s {
            return Ok(self.edge.at(s));
        }
        let y = y.max(self.opts.s_min);
        if y >= s {
            return Ok(self.edge.at(y));
        }
        let sl = self.slice(y)?;
        if !sl.covers(s) {
            return Err(breach(&self.spec, s, y, &sl));
        }
        Ok(sl.at(s))
    }
}

/// Where the boundary sits relative to the two planes at `(s, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    /// Inside `[s - y, s]`: stop on one side, direct continuation on the other.
    Direct,
    /// Beyond the reflecting plane: continuation throughout `[s - y, s]`.
    Reflection,
    /// Beyond the other plane: stop throughout `[s - y, s]`.
    Stop,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::Direct => "direct",
            RegionLabel::Reflection => "reflection",
            RegionLabel::Stop => "stop",
        }
    }
}

pub fn region_label(payoff: Payoff, boundary: f64, s: f64, y: f64) -> RegionLabel {
    match payoff {
        Payoff::Call if boundary > s => RegionLabel::Reflection,
        Payoff::Call if boundary < s - y => RegionLabel::Stop,
        Payoff::Put if boundary < s - y => RegionLabel::Reflection,
        Payoff::Put if boundary > s => RegionLabel::Stop,
        _ => RegionLabel::Direct,
    }
}

/// The switch sequences of one slice.
///
/// For a call slice at fixed `s`, in decreasing `y`: `tilde` holds
/// `ỹ₁ > ỹ₂ > …` (starts of stretches with `b > s`, then `b ≤ s`, …) and
/// `hat` holds `ŷ₁ > ŷ₂ > …` (`b < s - y`, then `b ≥ s - y`, …).
/// For a put slice at fixed `y`, in increasing `s`: `tilde` holds
/// `s̃₁ < s̃₂ < …` (`a > s`, then `a ≤ s`) and `hat` holds `ŝ₁ < ŝ₂ < …`
/// (`a < s - y`, then `a ≥ s - y`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRegions {
    pub fixed: f64,
    pub tilde: Vec<f64>,
    pub hat: Vec<f64>,
    /// Put slices: pairs `(ŝ₂ₖ₋₁, ŝ₂ₖ)` with `ŝ₂ₖ₋₁ - y < L`.
    pub k_hat: usize,
    /// The pair count hit [`MAX_PAIRS`].
    pub truncated: bool,
}

/// Switch points of a call slice (`payoff = Call`) or a put slice.
pub fn detect_regions_3d(spec: &ModelSpec, sl: &Slice) -> Result<SliceRegions> {
    let traj = sl.trajectory();
    // ascending coordinate
    let mut pts: Vec<(f64, f64)> = traj.t.iter().copied().zip(traj.y.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grid: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let vals: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let fixed = sl.fixed;
    match spec.payoff() {
        Payoff::Call => {
            let s = fixed;
            let upper = vec![s; grid.len()];
            let lower: Vec<f64> = grid.iter().map(|y| s - y).collect();
            let mut tilde: Vec<f64> = detect_switch_points(&grid, &vals, &upper, Inside::Below)?
                .iter()
                .map(|p| p.at)
                .collect();
            tilde.reverse();
            if vals.last().is_some_and(|b| *b > s) {
                tilde.insert(0, s);
            }
            let mut hat: Vec<f64> = detect_switch_points(&grid, &vals, &lower, Inside::Above)?
                .iter()
                .map(|p| p.at)
                .collect();
            hat.reverse();
            Ok(SliceRegions {
                fixed,
                tilde,
                hat,
                k_hat: 0,
                truncated: false,
            })
        }
        Payoff::Put => {
            let y = fixed;
            let l = spec.strike();
            let tilde: Vec<f64> = detect_switch_points(&grid, &vals, &grid, Inside::Below)?
                .iter()
                .map(|p| p.at)
                .collect();
            let lower: Vec<f64> = grid.iter().map(|s| s - y).collect();
            let mut hat: Vec<f64> = detect_switch_points(&grid, &vals, &lower, Inside::Above)?
                .iter()
                .map(|p| p.at)
                .collect();
            let mut k_hat = hat.iter().step_by(2).filter(|s| **s - y < l).count();
            let truncated = k_hat > MAX_PAIRS;
            if truncated {
                k_hat = MAX_PAIRS;
                hat.truncate(2 * MAX_PAIRS);
            }
            Ok(SliceRegions {
                fixed,
                tilde,
                hat,
                k_hat,
                truncated,
            })
        }
    }
}

/// A boundary surface sampled on the node grid, `y < s` and `y ≤ y_max`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySurface {
    pub payoff: Payoff,
    pub nodes: Vec<SurfaceNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceNode {
    pub s: f64,
    pub y: f64,
    pub value: f64,
    /// The boundary lies in `[s - y, s]`.
    pub active: bool,
    pub label: RegionLabel,
}

enum Surface {
    Call(CallSurface),
    Put(PutSurface),
}

enum Reduced {
    Call(CallSolution2d),
    Put(PutBoundary2d),
}

/// Boundary surface and value function of the call or put in `(X, S, Y)`.
pub struct Solution3d {
    spec: ModelSpec,
    opts: Options3d,
    surface: Surface,
    reduced: Option<Reduced>,
    coeffs: OnceLock<Result<CoefficientGrid>>,
}

impl std::fmt::Debug for Solution3d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solution3d")
            .field("spec", &self.spec)
            .field("opts", &self.opts)
            .finish_non_exhaustive()
    }
}

impl Solution3d {
    pub fn new(spec: &ModelSpec, opts: Options3d) -> Result<Self> {
        if !(opts.s_min > 0.0 && opts.s_max > opts.s_min && opts.nodes >= 4 && opts.steps >= 1) {
            return Err(Error::Config(format!("invalid 3D options {opts:?}")));
        }
        let surface = match spec.payoff() {
            Payoff::Call => Surface::Call(CallSurface::new(spec, opts)),
            Payoff::Put => Surface::Put(PutSurface::new(spec, opts)?),
        };
        let reduced = if spec.is_y_free() && !opts.general {
            Some(match &surface {
                Surface::Call(_) => Reduced::Call(CallSolution2d::new(spec)),
                Surface::Put(p) => Reduced::Put(p.edge().clone()),
            })
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            opts,
            surface,
            reduced,
            coeffs: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn options(&self) -> &Options3d {
        &self.opts
    }

    /// `b(s, y)` or `a(s, y)`.
    pub fn boundary(&self, s: f64, y: f64) -> Result<f64> {
        match &self.surface {
            Surface::Call(c) => c.boundary(s, y),
            Surface::Put(p) => p.boundary(s, y),
        }
    }

    pub fn slice(&self, fixed: f64) -> Result<Arc<Slice>> {
        match &self.surface {
            Surface::Call(c) => c.slice(fixed),
            Surface::Put(p) => p.slice(fixed),
        }
    }

    /// The put's diagonal boundary `g*`, if this is a put.
    pub fn put_edge(&self) -> Option<&PutBoundary2d> {
        match &self.surface {
            Surface::Put(p) => Some(p.edge()),
            Surface::Call(_) => None,
        }
    }

    /// The surface on the node grid, slices computed in parallel.
    pub fn surface(&self) -> Result<BoundarySurface> {
        let t = self.opts.nodes_vec();
        let y_max = self.spec.domain().y_max;
        let fixed: Vec<f64> = match self.spec.payoff() {
            Payoff::Call => t.clone(),
            Payoff::Put => t
                .iter()
                .copied()
                .filter(|y| *y <= y_max && *y < t[t.len() - 1])
                .collect(),
        };
        self.prefetch(&fixed)?;
        let mut nodes = Vec::new();
        for (j, &s) in t.iter().enumerate() {
            for &y in t[..j].iter().filter(|y| **y <= y_max) {
                let value = self.boundary(s, y)?;
                let label = region_label(self.spec.payoff(), value, s, y);
                nodes.push(SurfaceNode {
                    s,
                    y,
                    value,
                    active: label == RegionLabel::Direct,
                    label,
                });
            }
        }
        Ok(BoundarySurface {
            payoff: self.spec.payoff(),
            nodes,
        })
    }

    /// Compute the slices at `fixed` in parallel and cache them.
    pub fn prefetch(&self, fixed: &[f64]) -> Result<()> {
        match &self.surface {
            Surface::Call(c) => c.prefetch(fixed),
            Surface::Put(p) => p.prefetch(fixed),
        }
    }

    /// Switch sequences of the slices at the node grid.
    pub fn regions(&self) -> Result<Vec<SliceRegions>> {
        let t = self.opts.nodes_vec();
        let fixed: Vec<f64> = match self.spec.payoff() {
            Payoff::Call => t[1..].to_vec(),
            Payoff::Put => t[..t.len() - 1].to_vec(),
        };
        self.prefetch(&fixed)?;
        fixed
            .iter()
            .map(|&v| {
                self.slice(v)
                    .and_then(|sl| detect_regions_3d(&self.spec, &sl))
            })
            .collect()
    }

    /// The reflection grid: the put uses `[s_min, s_max]`, the call stops a
    /// little past the largest `s` whose slice rises above `x = s`.
    pub fn reflection_grid(&self) -> Result<ReflectionGrid> {
        let o = &self.opts;
        let t1 = match &self.surface {
            Surface::Put(_) => o.s_max,
            Surface::Call(c) => {
                let coarse: Vec<f64> = (0..=64)
                    .map(|k| o.s_min + (o.s_max - o.s_min) * k as f64 / 64.0)
                    .collect();
                c.prefetch(&coarse)?;
                let mut last = o.s_min;
                for &s in &coarse {
                    let sl = c.slice(s)?;
                    if sl.trajectory().y.iter().any(|b| *b > s) {
                        last = s;
                    }
                }
                let step = coarse[1] - coarse[0];
                (last + 2.0 * step).min(o.s_max)
            }
        };
        ReflectionGrid::uniform(o.s_min, t1, o.nodes)
    }

    /// `(C₁, C₂)` on the reflection region, solved once and kept.
    pub fn coefficient_grid(&self) -> Result<&CoefficientGrid> {
        self.coeffs
            .get_or_init(|| {
                let grid = self.reflection_grid()?;
                match &self.surface {
                    Surface::Call(c) => {
                        c.prefetch(&grid.nodes[1..])?;
                        solve_reflection_region(&CallRegion { surface: c }, &grid)
                    }
                    Surface::Put(p) => {
                        p.prefetch(&grid.nodes[..grid.len() - 1])?;
                        solve_reflection_region(&PutRegion { surface: p }, &grid)
                    }
                }
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// The piece of the value function that applies at `p`.
    pub fn branch(&self, p: StateTriple) -> Result<Branch> {
        if !p.in_state_space() {
            return Err(Error::Domain(format!(
                "({}, {}, {}) is outside 0 < s - y <= x <= s",
                p.x, p.s, p.y
            )));
        }
        let (x, s, y) = (p.x, p.s, p.y);
        match &self.reduced {
            Some(Reduced::Call(c)) => return c.branch(x, s),
            Some(Reduced::Put(g)) => return g.branch(x, s),
            None => {}
        }
        let k = self.spec.strike();
        let bd = self.boundary(s, y)?;
        let rp = roots(&self.spec, s, y)?;
        let gamma = [rp.gamma1, rp.gamma2];
        match self.spec.payoff() {
            Payoff::Call => {
                if x >= bd {
                    return Ok(Branch::Stop);
                }
                if bd <= s {
                    return Ok(Branch::Power(PowerForm::new(
                        call_coefficients(gamma, bd, k),
                        gamma,
                    )));
                }
            }
            Payoff::Put => {
                if x <= bd {
                    return Ok(Branch::Stop);
                }
                if bd >= s - y {
                    return Ok(Branch::Power(PowerForm::new(
                        put_coefficients(gamma, bd, k),
                        gamma,
                    )));
                }
            }
        }
        let grid = self.coefficient_grid()?;
        let t0 = grid.grid().nodes[0];
        let missing = || {
            Error::UnderdeterminedRegion(format!("no reflection nodes near (s, y) = ({s}, {y})"))
        };
        let at_point = |y: f64| {
            match &self.surface {
                Surface::Call(c) => coefficients_at_point(&CallRegion { surface: c }, grid, s, y),
                Surface::Put(p) => coefficients_at_point(&PutRegion { surface: p }, grid, s, y),
            }
            .and_then(|c| c.ok_or_else(missing))
        };
        if y >= t0 {
            return Ok(Branch::Power(PowerForm::new(at_point(y)?, gamma)));
        }
        // Below the first row both planes nearly coincide and the individual
        // coefficients are ill-determined; carry value and slope at x = s over
        // from the first row instead.
        let c0 = at_point(t0)?;
        let r0 = roots(&self.spec, s, t0)?;
        let first = PowerForm::new(c0, [r0.gamma1, r0.gamma2]);
        let c = coefficients_from_data(gamma, s, first.value(s), first.dx(s));
        Ok(Branch::Power(PowerForm::new(c, gamma)))
    }

    pub fn value(&self, x: f64, s: f64, y: f64) -> Result<f64> {
        Ok(self
            .branch(StateTriple::new(x, s, y)?)?
            .value(&self.spec, x))
    }

    pub fn dx(&self, x: f64, s: f64, y: f64) -> Result<f64> {
        Ok(self.branch(StateTriple::new(x, s, y)?)?.dx(&self.spec, x))
    }
}

/// `V(x, s, y)` for the call with default options.
pub fn call_value_3d(spec: &ModelSpec, x: f64, s: f64, y: f64) -> Result<f64> {
    let spec = spec.with_payoff(Payoff::Call);
    Solution3d::new(&spec, Options3d::for_spec(&spec))?.value(x, s, y)
}

/// `V(x, s, y)` for the put with default options.
pub fn put_value_3d(spec: &ModelSpec, x: f64, s: f64, y: f64) -> Result<f64> {
    let spec = spec.with_payoff(Payoff::Put);
    Solution3d::new(&spec, Options3d::for_spec(&spec))?.value(x, s, y)
}

/// The call reflection region `{b(s, y) > s}`.
struct CallRegion<'a> {
    surface: &'a CallSurface,
}

impl ReflectionRegion for CallRegion<'_> {
    fn spec(&self) -> &ModelSpec {
        &self.surface.spec
    }

    fn contains(&self, s: f64, y: f64) -> bool {
        self.surface.boundary(s, y).is_ok_and(|b| b > s)
    }

    fn row_exit(&self, y: f64, s_in: f64, s_out: Option<f64>) -> Result<Exit> {
        let Some(s_out) = s_out else {
            return Err(Error::UnderdeterminedRegion(format!(
                "call row y = {y} stays in the reflection region up to the grid end"
            )));
        };
        // `b(·, y) - id` is interpolated linearly between the two columns
        let f_in = self.surface.boundary(s_in, y)? - s_in;
        let f_out = self.surface.boundary(s_out, y)? - s_out;
        let at = s_in + f_in / (f_in - f_out) * (s_out - s_in);
        Ok(Exit::Data {
            at,
            value: at - self.surface.spec.strike(),
            slope: 1.0,
        })
    }

    fn column_exit(&self, s: f64, y_in: f64, y_out: Option<f64>) -> Result<Exit> {
        let sl = self.surface.slice(s)?;
        let k = self.surface.spec.strike();
        let hi = y_out.unwrap_or(s - EDGE_EPS * k);
        let f = |y: f64| sl.at(y) - s;
        if y_out.is_none() && f(hi) > 0.0 {
            return Ok(Exit::SecondVanishes);
        }
        let at = bisect(f, y_in, hi, 1e-14 * s);
        let b = sl.at(at);
        let rp = roots(&self.surface.spec, s, at)?;
        let form = PowerForm::new(
            call_coefficients([rp.gamma1, rp.gamma2], b, k),
            [rp.gamma1, rp.gamma2],
        );
        let x = s - at;
        Ok(Exit::Data {
            at,
            value: form.value(x),
            slope: form.dx(x),
        })
    }
}

/// The put reflection region `{a(s, y) < s - y}`.
struct PutRegion<'a> {
    surface: &'a PutSurface,
}

impl PutRegion<'_> {
    /// Value and slope of the direct branch at `x = s` where row `y` crosses
    /// `a = s - y` between `lo` and `hi`.
    fn direct_data(&self, y: f64, lo: f64, hi: f64) -> Result<Exit> {
        let sl = self.surface.slice(y)?;
        let at = bisect(|s| sl.at(s) - (s - y), lo, hi, 1e-14 * hi);
        let a = sl.at(at);
        let rp = roots(&self.surface.spec, at, y)?;
        let gamma = [rp.gamma1, rp.gamma2];
        let form = PowerForm::new(
            put_coefficients(gamma, a, self.surface.spec.strike()),
            gamma,
        );
        Ok(Exit::Data {
            at,
            value: form.value(at),
            slope: form.dx(at),
        })
    }
}

impl ReflectionRegion for PutRegion<'_> {
    fn spec(&self) -> &ModelSpec {
        &self.surface.spec
    }

    fn contains(&self, s: f64, y: f64) -> bool {
        self.surface.boundary(s, y).is_ok_and(|a| a < s - y)
    }

    fn row_exit(&self, y: f64, s_in: f64, s_out: Option<f64>) -> Result<Exit> {
        let Some(s_out) = s_out else {
            return Ok(Exit::FirstVanishes);
        };
        self.direct_data(y, s_in, s_out)
    }

    fn column_exit(&self, s: f64, y_in: f64, y_out: Option<f64>) -> Result<Exit> {
        // `a(s, ·) - (s - ·)` is interpolated linearly between the two rows;
        // the row through the diagonal starts at `g*(s)`
        let y_hi = y_out.unwrap_or(s);
        let f_in = self.surface.boundary(s, y_in)? - (s - y_in);
        let f_out = self.surface.boundary(s, y_hi)? - (s - y_hi);
        let at = y_in + (-f_in) / (f_out - f_in) * (y_hi - y_in);
        Ok(Exit::Data {
            at,
            value: self.surface.spec.strike() - (s - at),
            slope: -1.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientField, DomainBox};
    use crate::solver2d::{call_value_2d, put_value_2d};

    fn spec(payoff: Payoff, delta: CoefficientField) -> ModelSpec {
        ModelSpec::new(
            0.06,
            1.0,
            payoff,
            delta,
            CoefficientField::constant(0.2),
            DomainBox {
                s_max: 20.0,
                y_max: 20.0,
            },
        )
        .unwrap()
    }

    fn quick(spec: &ModelSpec) -> Options3d {
        Options3d {
            nodes: 129,
            ..Options3d::for_spec(spec)
        }
    }

    #[test]
    fn constant_call_slice_is_flat() {
        let sp = ModelSpec::reference(Payoff::Call, 1.0);
        let sl = call_boundary_slice(&sp, 5.0, &Options3d::for_spec(&sp)).unwrap();
        assert!(sl.trajectory().y.iter().all(|b| (b - 3.0).abs() < 1e-12));
        let reg = detect_regions_3d(&sp, &sl).unwrap();
        assert!(reg.tilde.is_empty());
        assert_eq!(reg.hat.len(), 1);
        assert!((reg.hat[0] - 2.0).abs() < 1e-9);

        let sl = call_boundary_slice(&sp, 2.0, &Options3d::for_spec(&sp)).unwrap();
        let reg = detect_regions_3d(&sp, &sl).unwrap();
        assert_eq!(reg.tilde, vec![2.0]);
    }

    #[test]
    fn constant_put_slice_is_flat() {
        let sp = ModelSpec::reference(Payoff::Put, 1.0);
        let sol = Solution3d::new(&sp, Options3d::for_spec(&sp)).unwrap();
        let sl = sol.slice(0.5).unwrap();
        assert!(sl
            .trajectory()
            .y
            .iter()
            .all(|a| (a - 2.0 / 3.0).abs() < 1e-9));
        let reg = detect_regions_3d(&sp, &sl).unwrap();
        assert_eq!(reg.hat.len(), 1);
        assert!((reg.hat[0] - 7.0 / 6.0).abs() < 1e-8);
        assert_eq!(reg.k_hat, 1);
    }

    #[test]
    fn s_only_surfaces_do_not_depend_on_y() {
        let field = CoefficientField::s_only(0.02, 0.01);
        let call = spec(Payoff::Call, field.clone());
        let cs = CallSurface::new(&call, Options3d::for_spec(&call));
        for s in [0.7, 1.5, 4.0] {
            let h = call_boundary_2d(&call, s).unwrap();
            for y in [0.0, 0.3 * s, 0.9 * s] {
                assert!((cs.boundary(s, y).unwrap() - h).abs() <= 1e-12 * h);
            }
        }
        let put = spec(Payoff::Put, field);
        let ps = PutSurface::new(&put, Options3d::for_spec(&put)).unwrap();
        for y in [0.1, 0.5, 2.0] {
            for s in [y + 0.2, y + 1.0, y + 5.0] {
                let g = ps.edge().at(s);
                let a = ps.boundary(s, y).unwrap();
                assert!((a - g).abs() <= 1e-8 * g, "{a} vs {g} at ({s}, {y})");
            }
        }
    }

    #[test]
    fn edges_match_two_dimensional_boundaries() {
        let field = CoefficientField::bounded_rational(0.02, 0.0, 0.01);
        let call = spec(Payoff::Call, field.clone());
        let cs = CallSurface::new(&call, Options3d::for_spec(&call));
        for s in [0.5, 2.0, 6.0] {
            let h = call_boundary_2d(&call, s).unwrap();
            assert!((cs.boundary(s, s - 1e-6).unwrap() - h).abs() < 1e-10);
        }
        let put = spec(Payoff::Put, field);
        let ps = PutSurface::new(&put, Options3d::for_spec(&put)).unwrap();
        for y in [0.2, 1.0, 3.0] {
            let g = ps.edge().at(y);
            assert!((ps.boundary(y, y).unwrap() - g).abs() < 1e-10);
        }
    }

    #[test]
    fn slices_converge_under_step_halving() {
        let field = CoefficientField::bounded_rational(0.02, 0.0, 0.01);
        let call = spec(Payoff::Call, field.clone());
        let coarse = Options3d::for_spec(&call);
        let fine = Options3d {
            steps: 2 * coarse.steps,
            ..coarse
        };
        for s in [1.0, 3.0] {
            let a = call_boundary_slice(&call, s, &coarse).unwrap();
            let b = call_boundary_slice(&call, s, &fine).unwrap();
            for y in [0.1, 0.5 * s] {
                assert!(
                    (a.at(y) - b.at(y)).abs() < 1e-8 * b.at(y),
                    "{s} {y}: {} {}",
                    a.at(y),
                    b.at(y)
                );
            }
        }
        let put = spec(Payoff::Put, field);
        let pa = PutSurface::new(&put, coarse).unwrap();
        let pb = PutSurface::new(&put, fine).unwrap();
        for y in [0.3, 1.0] {
            for s in [y + 0.5, y + 4.0] {
                let (va, vb) = (pa.boundary(s, y).unwrap(), pb.boundary(s, y).unwrap());
                assert!((va - vb).abs() < 1e-8 * vb, "{va} {vb}");
            }
        }
    }

    #[test]
    fn constant_values_reduce_to_two_dimensions() {
        let call = ModelSpec::reference(Payoff::Call, 1.0);
        let v3 = call_value_3d(&call, 2.0, 2.5, 1.0).unwrap();
        assert!((v3 - call_value_2d(&call, 2.0, 2.5).unwrap()).abs() < 1e-12);
        let put = ModelSpec::reference(Payoff::Put, 1.0);
        let v3 = put_value_3d(&put, 0.8, 1.0, 0.5).unwrap();
        assert!((v3 - put_value_2d(&put, 0.8, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn general_route_matches_reduction_for_constant_fields() {
        for payoff in [Payoff::Put, Payoff::Call] {
            let sp = ModelSpec::reference(payoff, 1.0);
            let opts = Options3d {
                general: true,
                ..quick(&sp)
            };
            let gen = Solution3d::new(&sp, opts).unwrap();
            let red = Solution3d::new(&sp, quick(&sp)).unwrap();
            for (s, y) in [(1.0, 0.5), (2.0, 1.5), (2.5, 0.3), (4.0, 2.0), (1.2, 0.9)] {
                for f in [0.0, 0.5, 1.0] {
                    let x = s - y + f * y;
                    let a = gen.value(x, s, y).unwrap();
                    let b = red.value(x, s, y).unwrap();
                    assert!(
                        (a - b).abs() < 1e-9 * b.abs().max(1.0),
                        "{payoff:?} ({x},{s},{y}): {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn general_route_tracks_reduction_for_s_only_fields() {
        let field = CoefficientField::s_only(0.02, 0.01);
        for payoff in [Payoff::Put, Payoff::Call] {
            let sp = spec(payoff, field.clone());
            let opts = Options3d {
                general: true,
                ..Options3d::for_spec(&sp)
            };
            let gen = Solution3d::new(&sp, opts).unwrap();
            let red = Solution3d::new(&sp, Options3d::for_spec(&sp)).unwrap();
            for (s, y) in [(1.0, 0.5), (2.0, 1.5), (2.5, 0.3), (4.0, 2.0)] {
                for f in [0.0, 0.5, 1.0] {
                    let x = s - y + f * y;
                    let a = gen.value(x, s, y).unwrap();
                    let b = red.value(x, s, y).unwrap();
                    assert!(
                        (a - b).abs() < 1e-4 * b.abs().max(1.0),
                        "{payoff:?} ({x},{s},{y}): {a} vs {b}"
                    );
                }
            }
        }
    }
}

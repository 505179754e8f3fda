//! The two-dimensional `(X, S)` problem.
//!
//! When the coefficients depend on the running maximum only, the call
//! boundary is explicit, `h*(s) = β₁(s) K/(β₁(s) - 1)`, and the put boundary
//! `g*(s)` is the maximal solution of a first-order ODE in `s`, shot downward
//! from its limit `g*(∞) = β₂(∞) L/(β₂(∞) - 1)` at the truncation point.
//!
//! For a field that also depends on `y` the same construction runs on the
//! diagonal `y = s`; that is how the three-dimensional surfaces are started.

use serde::{Deserialize, Serialize};

use crate::coefficients::{edge_roots, EdgeRoots, ModelSpec, Payoff};
use crate::error::{Error, Result};
use crate::numerics::{
    bisect, boundary_denominator, boundary_slope, integrate, rk4_richardson, Trajectory,
};
use crate::power::{Branch, PowerForm};
use crate::switching::{detect_switch_points, Inside, SwitchPoint};

/// Richardson estimate allowed per RK4 step, relative.
pub const STEP_TOL: f64 = 1e-6;
/// Default number of RK4 steps across `[s_min, s_max]`.
pub const DEFAULT_STEPS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    CallH,
    PutG,
}

/// A boundary `s ↦ h(s)` or `s ↦ g(s)` sampled on a monotone grid, with the
/// points where it crosses the diagonal `x = s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub kind: CurveKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub switch_points: Vec<SwitchPoint>,
}

impl BoundaryCurve {
    /// 1 above the first crossing, then 2, 3, ... going down in `s`.
    pub fn region_index(&self, s: f64) -> usize {
        1 + self.switch_points.iter().filter(|p| p.at >= s).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2d {
    pub s_min: f64,
    pub s_max: f64,
    pub steps: usize,
}

impl Grid2d {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        Self {
            s_min: 0.05 * spec.strike(),
            s_max: spec.domain().s_max,
            steps: DEFAULT_STEPS,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|i| self.s_min + (self.s_max - self.s_min) * i as f64 / self.steps as f64)
            .collect()
    }
}

/// `h*(s) = β₁(s) K/(β₁(s) - 1)`.
pub fn call_boundary_2d(spec: &ModelSpec, s: f64) -> Result<f64> {
    let b = edge_roots(spec, s)?;
    Ok(b.beta1 * spec.strike() / (b.beta1 - 1.0))
}

/// `g*(∞) = β₂ L/(β₂ - 1)` with `β₂` taken at the truncation point `s_max`.
pub fn put_asymptote(spec: &ModelSpec) -> Result<f64> {
    let b = edge_roots(spec, spec.domain().s_max)?;
    Ok(b.beta2 * spec.strike() / (b.beta2 - 1.0))
}

fn diagonal_delta(spec: &ModelSpec, s: f64) -> f64 {
    spec.delta().value(s, s)
}

/// `L ∧ (rL/δ(s))` or `K ∨ (rK/δ(s))` on the diagonal.
fn constraint_2d(spec: &ModelSpec, s: f64) -> f64 {
    let k = spec.strike();
    let alt = spec.r() * k / diagonal_delta(spec, s);
    match spec.payoff() {
        Payoff::Put => k.min(alt),
        Payoff::Call => k.max(alt),
    }
}

/// The explicit call boundary on a grid, checked against `K ∨ rK/δ`.
pub fn call_boundary_curve(spec: &ModelSpec, grid: &[f64]) -> Result<BoundaryCurve> {
    let spec = spec.with_payoff(Payoff::Call);
    let mut values = Vec::with_capacity(grid.len());
    for &s in grid {
        let h = call_boundary_2d(&spec, s)?;
        let limit = constraint_2d(&spec, s);
        if !(h > limit) {
            return Err(Error::ConstraintBreach {
                location: format!("s = {s}"),
                value: h,
                limit,
            });
        }
        values.push(h);
    }
    let switch_points = detect_switch_points(grid, &values, grid, Inside::Below)?;
    Ok(BoundaryCurve {
        kind: CurveKind::CallH,
        grid: grid.to_vec(),
        values,
        switch_points,
    })
}

/// Right-hand side of the put boundary equation at `(s, g)`.
fn put_rhs(spec: &ModelSpec, s: f64, g: f64) -> Result<f64> {
    let b = edge_roots(spec, s)?;
    boundary_slope(
        g,
        spec.strike(),
        s,
        [b.beta1, b.beta2],
        [b.dbeta1, b.dbeta2],
    )
}

/// The put boundary `g*` of the two-dimensional problem.
#[derive(Debug, Clone)]
pub struct PutBoundary2d {
    spec: ModelSpec,
    grid: Grid2d,
    start: f64,
    traj: Trajectory,
    curve: BoundaryCurve,
}

/// Integrate the put boundary equation downward from `s_max`.
///
/// Starts at `g*(∞) - shoot_offset`; the shipped boundary uses offset 0.
/// A trajectory that touches `L ∧ (rL/δ)` is a [`Error::ConstraintBreach`],
/// one whose denominator changes sign is a [`Error::SingularDenominator`].
pub fn put_boundary_2d(spec: &ModelSpec, grid: Grid2d, shoot_offset: f64) -> Result<PutBoundary2d> {
    let spec = spec.with_payoff(Payoff::Put);
    if !(grid.s_min > 0.0 && grid.s_max > grid.s_min) {
        return Err(Error::Config(format!(
            "put grid needs 0 < s_min < s_max, got [{}, {}]",
            grid.s_min, grid.s_max
        )));
    }
    let start = put_asymptote(&spec)? - shoot_offset;
    let l = spec.strike();
    let run = rk4_richardson(
        |s, g| put_rhs(&spec, s, g),
        grid.s_max,
        start,
        grid.s_min,
        grid.steps,
        STEP_TOL,
        |s, g| g > 0.0 && g < constraint_2d(&spec, s),
    )?;
    if let Some(at) = run.stopped_at {
        return Err(Error::ConstraintBreach {
            location: format!("s = {at}"),
            value: run.trajectory.y.last().copied().unwrap_or(start),
            limit: constraint_2d(&spec, at),
        });
    }
    let traj = run.trajectory;
    let sign0 = {
        let b = edge_roots(&spec, traj.t[0])?;
        boundary_denominator(traj.y[0], l, [b.beta1, b.beta2]).signum()
    };
    for (s, g) in traj.t.iter().zip(&traj.y) {
        let b = edge_roots(&spec, *s)?;
        if boundary_denominator(*g, l, [b.beta1, b.beta2]).signum() != sign0 {
            return Err(Error::SingularDenominator(format!("s = {s}")));
        }
    }

    let s_asc: Vec<f64> = traj.t.iter().rev().copied().collect();
    let g_asc: Vec<f64> = traj.y.iter().rev().copied().collect();
    let switch_points = detect_switch_points(&s_asc, &g_asc, &s_asc, Inside::Below)?;
    Ok(PutBoundary2d {
        spec,
        grid,
        start,
        traj,
        curve: BoundaryCurve {
            kind: CurveKind::PutG,
            grid: s_asc,
            values: g_asc,
            switch_points,
        },
    })
}

impl PutBoundary2d {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> Grid2d {
        self.grid
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    /// Starting value at `s_max`.
    pub fn start(&self) -> f64 {
        self.start
    }

    /// `g*(s)`; flat beyond the integrated range.
    pub fn at(&self, s: f64) -> f64 {
        self.traj.interp(s)
    }

    /// `(D₁, D₂)` of the direct continuation form at `s`.
    pub fn coefficients(&self, s: f64) -> Result<(EdgeRoots, [f64; 2])> {
        let b = edge_roots(&self.spec, s)?;
        let g = self.at(s);
        Ok((
            b,
            put_coefficients([b.beta1, b.beta2], g, self.spec.strike()),
        ))
    }

    /// The branch of the value function at `(x, s)`.
    pub fn branch(&self, x: f64, s: f64) -> Result<Branch> {
        check_e2(x, s)?;
        let g = self.at(s);
        if x <= g {
            return Ok(Branch::Stop);
        }
        let (b, c) = self.coefficients(s)?;
        Ok(Branch::Power(PowerForm::new(c, [b.beta1, b.beta2])))
    }

    /// `U(x, s)`: `L - x` up to the boundary, `D₁x^β₁ + D₂x^β₂` above it.
    pub fn value(&self, x: f64, s: f64) -> Result<f64> {
        Ok(self.branch(x, s)?.value(&self.spec, x))
    }

    pub fn dx(&self, x: f64, s: f64) -> Result<f64> {
        Ok(self.branch(x, s)?.dx(&self.spec, x))
    }
}

/// `Dᵢ = ((βⱼ - 1) g - βⱼ L)/((βᵢ - βⱼ) g^βᵢ)`, the put coefficients that
/// give value `L - g` and slope `-1` at `x = g`.
pub fn put_coefficients(beta: [f64; 2], g: f64, l: f64) -> [f64; 2] {
    let c = |i: usize| {
        let j = 1 - i;
        ((beta[j] - 1.0) * g - beta[j] * l) / ((beta[i] - beta[j]) * g.powf(beta[i]))
    };
    [c(0), c(1)]
}

/// `Cᵢ = ((γⱼ - 1) b - γⱼ K)/((γⱼ - γᵢ) b^γᵢ)`, the call coefficients that
/// give value `b - K` and slope `1` at `x = b`.
pub fn call_coefficients(gamma: [f64; 2], b: f64, k: f64) -> [f64; 2] {
    let c = |i: usize| {
        let j = 1 - i;
        ((gamma[j] - 1.0) * b - gamma[j] * k) / ((gamma[j] - gamma[i]) * b.powf(gamma[i]))
    };
    [c(0), c(1)]
}

fn check_e2(x: f64, s: f64) -> Result<()> {
    if !(x > 0.0 && x <= s) || !x.is_finite() || !s.is_finite() {
        return Err(Error::Domain(format!(
            "(x, s) = ({x}, {s}) violates 0 < x ≤ s"
        )));
    }
    Ok(())
}

/// The call problem in `(X, S)`: explicit boundary plus the reflection
/// representation where `h*(s) > s`.
#[derive(Debug, Clone)]
pub struct CallSolution2d {
    spec: ModelSpec,
    s_cap: f64,
}

impl CallSolution2d {
    pub fn new(spec: &ModelSpec) -> Self {
        let spec = spec.with_payoff(Payoff::Call);
        let s_cap = 1e3 * spec.strike().max(spec.domain().s_max);
        Self { spec, s_cap }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn boundary(&self, s: f64) -> Result<f64> {
        call_boundary_2d(&self.spec, s)
    }

    /// `s̃ = inf{q > s | h*(q) ≤ q}`: where the running maximum reaches the
    /// stopping region when it starts in a reflection stretch at `s`.
    pub fn exit_point(&self, s: f64) -> Result<f64> {
        let f = |q: f64| call_boundary_2d(&self.spec, q).map(|h| h - q);
        if f(s)? <= 0.0 {
            return Ok(s);
        }
        let step = 1e-2 * self.spec.strike();
        let mut lo = s;
        let mut hi = s + step;
        while f(hi)? > 0.0 {
            lo = hi;
            hi += step;
            if hi > self.s_cap {
                return Err(Error::Domain(format!(
                    "call boundary stays above the diagonal beyond s = {}",
                    self.s_cap
                )));
            }
        }
        Ok(bisect(|q| f(q).unwrap_or(f64::NAN), lo, hi, 1e-13 * hi))
    }

    /// `∫ₛ^ŝ β₁'(q) ln q dq`.
    pub fn reflection_integral(&self, s: f64, exit: f64) -> f64 {
        integrate(
            |q| edge_roots(&self.spec, q).map_or(f64::NAN, |b| b.dbeta1 * q.ln()),
            s,
            exit,
            1e-14,
        )
    }

    /// `D₁(s)` in the reflection stretch: normal reflection at `x = s` gives
    /// `D₁' = -D₁ β₁' ln s`, and continuity at the exit `s̃` fixes
    /// `D₁(s̃) = s̃^(1-β₁(s̃))/β₁(s̃)`.
    pub fn reflection_coefficient(&self, s: f64) -> Result<f64> {
        let exit = self.exit_point(s)?;
        let be = edge_roots(&self.spec, exit)?;
        let d_exit = exit.powf(1.0 - be.beta1) / be.beta1;
        Ok(d_exit * self.reflection_integral(s, exit).exp())
    }

    pub fn branch(&self, x: f64, s: f64) -> Result<Branch> {
        check_e2(x, s)?;
        let b = edge_roots(&self.spec, s)?;
        let h = b.beta1 * self.spec.strike() / (b.beta1 - 1.0);
        if h <= s {
            if x >= h {
                return Ok(Branch::Stop);
            }
            let c1 = h.powf(1.0 - b.beta1) / b.beta1;
            return Ok(Branch::Power(PowerForm::new([c1, 0.0], [b.beta1, b.beta2])));
        }
        let c1 = self.reflection_coefficient(s)?;
        Ok(Branch::Power(PowerForm::new([c1, 0.0], [b.beta1, b.beta2])))
    }

    pub fn value(&self, x: f64, s: f64) -> Result<f64> {
        Ok(self.branch(x, s)?.value(&self.spec, x))
    }

    pub fn dx(&self, x: f64, s: f64) -> Result<f64> {
        Ok(self.branch(x, s)?.dx(&self.spec, x))
    }
}

/// `U(x, s)` for the call.
pub fn call_value_2d(spec: &ModelSpec, x: f64, s: f64) -> Result<f64> {
    CallSolution2d::new(spec).value(x, s)
}

/// `U(x, s)` for the put, solving the boundary with default resolution.
pub fn put_value_2d(spec: &ModelSpec, x: f64, s: f64) -> Result<f64> {
    put_boundary_2d(spec, Grid2d::for_spec(spec), 0.0)?.value(x, s)
}

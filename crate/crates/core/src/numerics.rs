//! Integrators and small numerical kernels shared by the boundary solvers.

use crate::error::{Error, Result};

/// Below this `|ln ρ|` the ln-ratio bracket switches to its series.
pub const LN_RATIO_SERIES_CUTOFF: f64 = 1e-6;

/// `1/(γⱼ - γᵢ) + ρ^γᵢ ln ρ / (ρ^γᵢ - ρ^γⱼ)` written in terms of `u = ln ρ`.
///
/// The two terms cancel as `ρ → 1`; near there the second-order series
/// `u/2 - (γⱼ - γᵢ) u²/12` is used instead.
pub fn ln_ratio_bracket(u: f64, gi: f64, gj: f64) -> f64 {
    let d = gj - gi;
    if u.abs() < LN_RATIO_SERIES_CUTOFF {
        u / 2.0 - d * u * u / 12.0
    } else {
        1.0 / d + u / (-(d * u).exp_m1())
    }
}

/// Common denominator `(γ₁ - 1)(γ₂ - 1) z - γ₁γ₂ k` of the boundary equations.
pub fn boundary_denominator(z: f64, k: f64, g: [f64; 2]) -> f64 {
    (g[0] - 1.0) * (g[1] - 1.0) * z - g[0] * g[1] * k
}

/// Right-hand side of the first-order boundary equation.
///
/// `z` is the boundary level, `k` the strike, `plane` the reflecting-plane
/// coordinate at which normal reflection is imposed (`s` for the put,
/// `s - y` for the call), `g` the roots and `dg` their derivatives in the
/// integration variable:
///
/// ```text
/// z' = Σᵢ ((γⱼ - 1) z - γⱼ k) z / ((γᵢ - 1)(γⱼ - 1) z - γᵢγⱼ k)
///        · (1/(γⱼ - γᵢ) + ρ^γᵢ ln ρ / (ρ^γᵢ - ρ^γⱼ)) · γᵢ',   ρ = plane / z
/// ```
pub fn boundary_slope(z: f64, k: f64, plane: f64, g: [f64; 2], dg: [f64; 2]) -> Result<f64> {
    if dg[0] == 0.0 && dg[1] == 0.0 {
        return Ok(0.0);
    }
    let den = boundary_denominator(z, k, g);
    let scale = ((g[0] - 1.0) * (g[1] - 1.0) * z).abs() + (g[0] * g[1] * k).abs();
    if den.abs() <= 1e-12 * scale {
        return Err(Error::SingularDenominator(format!(
            "level {z}, plane {plane}"
        )));
    }
    let u = (plane / z).ln();
    let mut out = 0.0;
    for i in 0..2 {
        let j = 1 - i;
        let num = ((g[j] - 1.0) * z - g[j] * k) * z;
        out += num / den * ln_ratio_bracket(u, g[i], g[j]) * dg[i];
    }
    Ok(out)
}

/// Samples of an ODE solution with slopes, for cubic Hermite dense output.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Hermite interpolation; `t` is clamped to the sampled range.
    pub fn interp(&self, t: f64) -> f64 {
        let n = self.t.len();
        debug_assert!(n > 0);
        if n == 1 {
            return self.y[0];
        }
        let ascending = self.t[n - 1] > self.t[0];
        let (lo, hi) = if ascending {
            (self.t[0], self.t[n - 1])
        } else {
            (self.t[n - 1], self.t[0])
        };
        let t = t.clamp(lo, hi);
        // index k with t between t[k] and t[k+1]
        let k = if ascending {
            self.t.partition_point(|&v| v <= t).saturating_sub(1)
        } else {
            self.t.partition_point(|&v| v >= t).saturating_sub(1)
        }
        .min(n - 2);
        hermite(
            self.t[k],
            self.t[k + 1],
            self.y[k],
            self.y[k + 1],
            self.dy[k],
            self.dy[k + 1],
            t,
        )
    }
}

fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let u = (t - t0) / h;
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Outcome of a fixed-step integration that may stop early.
#[derive(Debug, Clone)]
pub struct Integration {
    pub trajectory: Trajectory,
    /// Set when the `guard` rejected a state; integration stopped before it.
    pub stopped_at: Option<f64>,
}

fn rk4_step<F>(f: &F, t: f64, y: f64, h: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1)?;
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2)?;
    let k4 = f(t + h, y + h * k3)?;
    Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Fixed-step RK4 from `t0` to `t1` in `steps` equal steps (either direction).
///
/// Every step is also taken as two half steps; the half-step result is kept
/// and `|full - half| / 15` serves as the Richardson error estimate, which
/// must stay below `tol` relative to `max(|y|, 1)`. `guard(t, y)` returning
/// `false` ends the integration before that state is recorded.
pub fn rk4_richardson<F, G>(
    f: F,
    t0: f64,
    y0: f64,
    t1: f64,
    steps: usize,
    tol: f64,
    guard: G,
) -> Result<Integration>
where
    F: Fn(f64, f64) -> Result<f64>,
    G: Fn(f64, f64) -> bool,
{
    let steps = steps.max(1);
    let h = (t1 - t0) / steps as f64;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        dy: Vec::with_capacity(steps + 1),
    };
    let mut t = t0;
    let mut y = y0;
    traj.t.push(t);
    traj.y.push(y);
    traj.dy.push(f(t, y)?);
    for n in 0..steps {
        let full = rk4_step(&f, t, y, h)?;
        let mid = rk4_step(&f, t, y, 0.5 * h)?;
        let t_next = if n + 1 == steps {
            t1
        } else {
            t0 + h * (n + 1) as f64
        };
        let half = rk4_step(&f, t + 0.5 * h, mid, 0.5 * h)?;
        let est = (full - half).abs() / 15.0 / half.abs().max(1.0);
        if !(est <= tol) {
            return Err(Error::StepError {
                estimate: est,
                tolerance: tol,
                at: t,
            });
        }
        if !guard(t_next, half) {
            return Ok(Integration {
                trajectory: traj,
                stopped_at: Some(t_next),
            });
        }
        t = t_next;
        y = half;
        traj.t.push(t);
        traj.y.push(y);
        traj.dy.push(f(t, y)?);
    }
    Ok(Integration {
        trajectory: traj,
        stopped_at: None,
    })
}

/// [`rk4_richardson`], doubling the step count (at most `max_doublings`
/// times) while the step error estimate is too large.
#[allow(clippy::too_many_arguments)]
pub fn rk4_refined<F, G>(
    f: F,
    t0: f64,
    y0: f64,
    t1: f64,
    steps: usize,
    tol: f64,
    guard: G,
    max_doublings: u32,
) -> Result<Integration>
where
    F: Fn(f64, f64) -> Result<f64>,
    G: Fn(f64, f64) -> bool,
{
    let mut steps = steps.max(1);
    let mut left = max_doublings;
    loop {
        match rk4_richardson(&f, t0, y0, t1, steps, tol, &guard) {
            Err(Error::StepError { .. }) if left > 0 => {
                steps *= 2;
                left -= 1;
            }
            other => return other,
        }
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Bisection for a sign change of `f` on `[a, b]` down to `tol` in the argument.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    if f(b) == 0.0 {
        return b;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

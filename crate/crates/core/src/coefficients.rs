//! Model specification, coefficient fields and characteristic roots.
//!
//! The asset follows `dX = (r - δ(S, Y)) X dt + σ(S, Y) X dB` where `S` is the
//! running maximum and `Y` the running maximum drawdown. At a frozen `(s, y)`
//! the generator equation `𝕃V = rV` has power solutions `x^γ` with
//!
//! ```text
//! (σ²/2) γ (γ - 1) + (r - δ) γ - r = 0,      γ₂ < 0 < 1 < γ₁.
//! ```
//!
//! Every solver works with these roots and with their partial derivatives in
//! `s` and `y`, so the coefficient fields are restricted to parametric families
//! whose partials are available in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values below this are treated as non-positive by the construction check.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Side length of the log-spaced sampling grid used to validate a spec.
const CHECK_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    /// `c₀`
    Constant,
    /// `c₀ + c₁·s/(1+s)`
    SOnly,
    /// `c₀ + c₁·s/(1+s) + c₂·y/(1+y)`
    BoundedRational,
}

impl FieldFamily {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "constant" => Some(Self::Constant),
            "s_only" => Some(Self::SOnly),
            "bounded_rational" => Some(Self::BoundedRational),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::SOnly => "s_only",
            Self::BoundedRational => "bounded_rational",
        }
    }

    fn arity(self) -> usize {
        match self {
            Self::Constant => 1,
            Self::SOnly => 2,
            Self::BoundedRational => 3,
        }
    }
}

/// Field value together with both first partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub d_ds: f64,
    pub d_dy: f64,
}

/// A smooth, bounded coefficient field on the quadrant `s ≥ y ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    family: FieldFamily,
    params: Vec<f64>,
}

impl CoefficientField {
    pub fn new(family: FieldFamily, params: Vec<f64>) -> Result<Self> {
        if params.len() != family.arity() {
            return Err(Error::Config(format!(
                "family {} takes {} parameter(s), got {}",
                family.name(),
                family.arity(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config(format!(
                "non-finite parameter for family {}",
                family.name()
            )));
        }
        Ok(Self { family, params })
    }

    pub fn constant(c0: f64) -> Self {
        Self {
            family: FieldFamily::Constant,
            params: vec![c0],
        }
    }

    pub fn s_only(c0: f64, c1: f64) -> Self {
        Self {
            family: FieldFamily::SOnly,
            params: vec![c0, c1],
        }
    }

    pub fn bounded_rational(c0: f64, c1: f64, c2: f64) -> Self {
        Self {
            family: FieldFamily::BoundedRational,
            params: vec![c0, c1, c2],
        }
    }

    pub fn family(&self) -> FieldFamily {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn eval(&self, s: f64, y: f64) -> FieldValue {
        let p = &self.params;
        match self.family {
            FieldFamily::Constant => FieldValue {
                value: p[0],
                d_ds: 0.0,
                d_dy: 0.0,
            },
            FieldFamily::SOnly => FieldValue {
                value: p[0] + p[1] * s / (1.0 + s),
                d_ds: p[1] / ((1.0 + s) * (1.0 + s)),
                d_dy: 0.0,
            },
            FieldFamily::BoundedRational => FieldValue {
                value: p[0] + p[1] * s / (1.0 + s) + p[2] * y / (1.0 + y),
                d_ds: p[1] / ((1.0 + s) * (1.0 + s)),
                d_dy: p[2] / ((1.0 + y) * (1.0 + y)),
            },
        }
    }

    pub fn value(&self, s: f64, y: f64) -> f64 {
        self.eval(s, y).value
    }

    /// True when the field does not depend on `y` (constant or s-only).
    pub fn is_y_free(&self) -> bool {
        match self.family {
            FieldFamily::Constant | FieldFamily::SOnly => true,
            FieldFamily::BoundedRational => self.params[2] == 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self.family {
            FieldFamily::Constant => true,
            FieldFamily::SOnly => self.params[1] == 0.0,
            FieldFamily::BoundedRational => self.params[1] == 0.0 && self.params[2] == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payoff {
    Call,
    Put,
}

impl Payoff {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "call" => Some(Self::Call),
            "put" => Some(Self::Put),
            _ => None,
        }
    }

    /// `(x - K)⁺` or `(L - x)⁺`.
    pub fn eval(self, strike: f64, x: f64) -> f64 {
        match self {
            Self::Call => (x - strike).max(0.0),
            Self::Put => (strike - x).max(0.0),
        }
    }
}

/// Truncation box for the `(s, y)` quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub s_max: f64,
    pub y_max: f64,
}

/// Interest rate, strike, payoff and coefficient fields.
///
/// Immutable once built; construction samples both fields on a log-spaced
/// grid over the domain box and rejects any value at or below
/// [`POSITIVITY_FLOOR`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    r: f64,
    strike: f64,
    payoff: Payoff,
    delta: CoefficientField,
    sigma: CoefficientField,
    domain: DomainBox,
}

impl ModelSpec {
    pub fn new(
        r: f64,
        strike: f64,
        payoff: Payoff,
        delta: CoefficientField,
        sigma: CoefficientField,
        domain: DomainBox,
    ) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("r must be positive, got {r}")));
        }
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::Config(format!(
                "strike must be positive, got {strike}"
            )));
        }
        if !(domain.s_max > 0.0 && domain.y_max > 0.0) {
            return Err(Error::Config(
                "domain.s_max and domain.y_max must be positive".into(),
            ));
        }
        let spec = Self {
            r,
            strike,
            payoff,
            delta,
            sigma,
            domain,
        };
        spec.check_positivity()?;
        Ok(spec)
    }

    /// Reference constant-coefficient model: r = 0.06, δ = 0.03, σ = 0.2.
    pub fn reference(payoff: Payoff, strike: f64) -> Self {
        Self::new(
            0.06,
            strike,
            payoff,
            CoefficientField::constant(0.03),
            CoefficientField::constant(0.2),
            DomainBox {
                s_max: 20.0 * strike,
                y_max: 20.0 * strike,
            },
        )
        .expect("reference model is valid")
    }

    fn check_positivity(&self) -> Result<()> {
        let s_hi = self.domain.s_max;
        let s_lo = s_hi * 1e-6;
        let step = (s_hi / s_lo).ln() / (CHECK_GRID - 1) as f64;
        for i in 0..CHECK_GRID {
            let s = s_lo * (step * i as f64).exp();
            let y_hi = self.domain.y_max.min(s);
            for j in 0..CHECK_GRID {
                // first column is y = 0, the rest log-spaced up to y_hi
                let y = if j == 0 {
                    0.0
                } else {
                    let y_lo = y_hi * 1e-6;
                    y_lo * ((y_hi / y_lo).ln() * (j - 1) as f64 / (CHECK_GRID - 2) as f64).exp()
                };
                for (name, field) in [("delta", &self.delta), ("sigma", &self.sigma)] {
                    let v = field.value(s, y);
                    if !(v > POSITIVITY_FLOOR && v.is_finite()) {
                        return Err(Error::NonPositiveCoefficient {
                            field: name,
                            value: v,
                            s,
                            y,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn strike(&self) -> f64 {
        self.strike
    }
    pub fn payoff(&self) -> Payoff {
        self.payoff
    }
    pub fn delta(&self) -> &CoefficientField {
        &self.delta
    }
    pub fn sigma(&self) -> &CoefficientField {
        &self.sigma
    }
    pub fn domain(&self) -> DomainBox {
        self.domain
    }

    /// Same model with a different payoff.
    pub fn with_payoff(&self, payoff: Payoff) -> Self {
        Self {
            payoff,
            ..self.clone()
        }
    }

    /// Same model with a different truncation box.
    pub fn with_domain(&self, domain: DomainBox) -> Result<Self> {
        Self::new(
            self.r,
            self.strike,
            self.payoff,
            self.delta.clone(),
            self.sigma.clone(),
            domain,
        )
    }

    /// `G(x)`.
    pub fn payoff_value(&self, x: f64) -> f64 {
        self.payoff.eval(self.strike, x)
    }

    /// True when both fields ignore `y`.
    pub fn is_y_free(&self) -> bool {
        self.delta.is_y_free() && self.sigma.is_y_free()
    }

    pub fn is_constant(&self) -> bool {
        self.delta.is_constant() && self.sigma.is_constant()
    }
}

/// Coefficient fields and their first partials at one `(s, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEval {
    pub delta: f64,
    pub sigma: f64,
    pub ddelta_ds: f64,
    pub ddelta_dy: f64,
    pub dsigma_ds: f64,
    pub dsigma_dy: f64,
}

pub fn eval_fields(spec: &ModelSpec, s: f64, y: f64) -> Result<FieldEval> {
    if !(s > 0.0 && y >= 0.0 && y <= s) || !s.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!(
            "(s, y) = ({s}, {y}) outside the quadrant 0 ≤ y ≤ s, s > 0"
        )));
    }
    let d = spec.delta.eval(s, y);
    let v = spec.sigma.eval(s, y);
    if !(d.value > 0.0) {
        return Err(Error::NonPositiveCoefficient {
            field: "delta",
            value: d.value,
            s,
            y,
        });
    }
    if !(v.value > 0.0) {
        return Err(Error::NonPositiveCoefficient {
            field: "sigma",
            value: v.value,
            s,
            y,
        });
    }
    Ok(FieldEval {
        delta: d.value,
        sigma: v.value,
        ddelta_ds: d.d_ds,
        ddelta_dy: d.d_dy,
        dsigma_ds: v.d_ds,
        dsigma_dy: v.d_dy,
    })
}

/// Characteristic roots and their partial derivatives at one `(s, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub gamma1: f64,
    pub gamma2: f64,
    pub dgamma1_ds: f64,
    pub dgamma2_ds: f64,
    pub dgamma1_dy: f64,
    pub dgamma2_dy: f64,
}

impl RootPair {
    pub fn gamma(&self, i: usize) -> f64 {
        if i == 0 {
            self.gamma1
        } else {
            self.gamma2
        }
    }

    pub fn dgamma_ds(&self, i: usize) -> f64 {
        if i == 0 {
            self.dgamma1_ds
        } else {
            self.dgamma2_ds
        }
    }

    pub fn dgamma_dy(&self, i: usize) -> f64 {
        if i == 0 {
            self.dgamma1_dy
        } else {
            self.dgamma2_dy
        }
    }
}

/// Roots from raw coefficients. The larger-magnitude root comes straight from
/// the quadratic formula and the other from `γ₁γ₂ = -2r/σ²`.
pub(crate) fn roots_from(r: f64, delta: f64, sigma: f64) -> (f64, f64) {
    let var = sigma * sigma;
    let a = 0.5 - (r - delta) / var;
    let disc = (a * a + 2.0 * r / var).sqrt();
    let product = -2.0 * r / var;
    if a >= 0.0 {
        let g1 = a + disc;
        (g1, product / g1)
    } else {
        let g2 = a - disc;
        (product / g2, g2)
    }
}

/// `γ₁, γ₂` and their `s`/`y` partials.
///
/// With `A = 1/2 - (r - δ)/σ²` and `Δ = √(A² + 2r/σ²)` the roots are `A ± Δ`.
/// `∂A = φ` (resp. `ψ`) with `φ = (σ ∂δ + 2(r - δ) ∂σ)/σ³`, and
/// `∂Δ = (A φ - 2r ∂σ/σ³)/Δ`, so `∂γ₁ = φ + ∂Δ`, `∂γ₂ = φ - ∂Δ`.
pub fn roots(spec: &ModelSpec, s: f64, y: f64) -> Result<RootPair> {
    let f = eval_fields(spec, s, y)?;
    Ok(roots_at(spec.r, &f))
}

pub(crate) fn roots_at(r: f64, f: &FieldEval) -> RootPair {
    let (g1, g2) = roots_from(r, f.delta, f.sigma);
    let sig = f.sigma;
    let sig3 = sig * sig * sig;
    let a = 0.5 - (r - f.delta) / (sig * sig);
    let half_gap = 0.5 * (g1 - g2);

    let partial = |dd: f64, ds: f64| -> (f64, f64) {
        if dd == 0.0 && ds == 0.0 {
            return (0.0, 0.0);
        }
        let phi = (sig * dd + 2.0 * (r - f.delta) * ds) / sig3;
        let dgap = (a * phi - 2.0 * r * ds / sig3) / half_gap;
        (phi + dgap, phi - dgap)
    };
    let (d1s, d2s) = partial(f.ddelta_ds, f.dsigma_ds);
    let (d1y, d2y) = partial(f.ddelta_dy, f.dsigma_dy);
    RootPair {
        gamma1: g1,
        gamma2: g2,
        dgamma1_ds: d1s,
        dgamma2_ds: d2s,
        dgamma1_dy: d1y,
        dgamma2_dy: d2y,
    }
}

/// Roots restricted to the diagonal `y = s`, with derivatives taken along it.
///
/// These are the `βᵢ(s)` of the two-dimensional edge problems: for a field
/// that ignores `y` they coincide with `γᵢ(s, ·)` and `∂ₛγᵢ`; for a general
/// field they are the limits `γᵢ(s, s-)` used to start the surfaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeRoots {
    pub beta1: f64,
    pub beta2: f64,
    pub dbeta1: f64,
    pub dbeta2: f64,
}

impl EdgeRoots {
    pub fn beta(&self, i: usize) -> f64 {
        if i == 0 {
            self.beta1
        } else {
            self.beta2
        }
    }
    pub fn dbeta(&self, i: usize) -> f64 {
        if i == 0 {
            self.dbeta1
        } else {
            self.dbeta2
        }
    }
}

pub fn edge_roots(spec: &ModelSpec, s: f64) -> Result<EdgeRoots> {
    let rp = roots(spec, s, s)?;
    Ok(EdgeRoots {
        beta1: rp.gamma1,
        beta2: rp.gamma2,
        dbeta1: rp.dgamma1_ds + rp.dgamma1_dy,
        dbeta2: rp.dgamma2_ds + rp.dgamma2_dy,
    })
}

/// A point of the state space `E³ = {0 < s - y ≤ x ≤ s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateTriple {
    pub x: f64,
    pub s: f64,
    pub y: f64,
}

impl StateTriple {
    pub fn new(x: f64, s: f64, y: f64) -> Result<Self> {
        let p = Self { x, s, y };
        if !p.in_state_space() {
            return Err(Error::Domain(format!(
                "(x, s, y) = ({x}, {s}, {y}) violates 0 < s - y ≤ x ≤ s"
            )));
        }
        Ok(p)
    }

    pub fn in_state_space(&self) -> bool {
        self.x.is_finite()
            && self.s.is_finite()
            && self.y.is_finite()
            && self.y >= 0.0
            && self.s - self.y > 0.0
            && self.s - self.y <= self.x
            && self.x <= self.s
    }

    /// Strictly between the reflecting planes `x = s - y` and `x = s`.
    pub fn is_interior(&self) -> bool {
        self.s - self.y < self.x && self.x < self.s
    }
}

/// A function on `E³` whose `x`-derivatives the generator needs.
///
/// The defaults use central differences; solver outputs override them with
/// analytic derivatives.
pub trait SpatialFunction {
    fn value(&self, x: f64, s: f64, y: f64) -> f64;

    fn dx(&self, x: f64, s: f64, y: f64) -> f64 {
        let h = 1e-5 * x.abs().max(1e-3);
        (self.value(x + h, s, y) - self.value(x - h, s, y)) / (2.0 * h)
    }

    fn dxx(&self, x: f64, s: f64, y: f64) -> f64 {
        let h = 1e-4 * x.abs().max(1e-3);
        (self.value(x + h, s, y) - 2.0 * self.value(x, s, y) + self.value(x - h, s, y)) / (h * h)
    }
}

impl<F: Fn(f64, f64, f64) -> f64> SpatialFunction for F {
    fn value(&self, x: f64, s: f64, y: f64) -> f64 {
        self(x, s, y)
    }
}

/// `(𝕃F - rF)(x, s, y)` with `𝕃F = (r - δ) x ∂ₓF + (σ²/2) x² ∂²ₓₓF`.
pub fn generator_residual<F: SpatialFunction + ?Sized>(
    spec: &ModelSpec,
    f: &F,
    p: StateTriple,
) -> Result<f64> {
    if !p.in_state_space() || !p.is_interior() {
        return Err(Error::Domain(format!(
            "generator needs an interior point, got ({}, {}, {})",
            p.x, p.s, p.y
        )));
    }
    let c = eval_fields(spec, p.s, p.y)?;
    let (x, s, y) = (p.x, p.s, p.y);
    let r = spec.r;
    Ok(
        (r - c.delta) * x * f.dx(x, s, y) + 0.5 * c.sigma * c.sigma * x * x * f.dxx(x, s, y)
            - r * f.value(x, s, y),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with(delta: CoefficientField, sigma: CoefficientField) -> ModelSpec {
        ModelSpec::new(
            0.06,
            1.0,
            Payoff::Put,
            delta,
            sigma,
            DomainBox {
                s_max: 20.0,
                y_max: 20.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_fields_have_zero_partials() {
        let spec = ModelSpec::reference(Payoff::Put, 1.0);
        let f = eval_fields(&spec, 2.0, 1.0).unwrap();
        assert_eq!(
            (
                f.delta,
                f.sigma,
                f.ddelta_ds,
                f.ddelta_dy,
                f.dsigma_ds,
                f.dsigma_dy
            ),
            (0.03, 0.2, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn bounded_rational_partials_match_hand_values() {
        let spec = spec_with(
            CoefficientField::bounded_rational(0.02, 0.0, 0.01),
            CoefficientField::constant(0.2),
        );
        let f = eval_fields(&spec, 2.0, 1.0).unwrap();
        assert!((f.delta - 0.025).abs() < 1e-15);
        assert!((f.ddelta_dy - 0.0025).abs() < 1e-15);
        let h = 1e-6;
        let fd = (spec.delta().value(2.0, 1.0 + h) - spec.delta().value(2.0, 1.0 - h)) / (2.0 * h);
        assert!((fd - f.ddelta_dy).abs() < 1e-9);
    }

    #[test]
    fn s_only_has_exactly_zero_y_partial() {
        let spec = spec_with(
            CoefficientField::constant(0.03),
            CoefficientField::s_only(0.2, 0.05),
        );
        let f = eval_fields(&spec, 3.0, 1.0).unwrap();
        assert_eq!(f.dsigma_dy, 0.0);
        let rp = roots(&spec, 3.0, 1.0).unwrap();
        assert_eq!((rp.dgamma1_dy, rp.dgamma2_dy), (0.0, 0.0));
    }

    #[test]
    fn eval_rejects_points_outside_quadrant() {
        let spec = ModelSpec::reference(Payoff::Put, 1.0);
        assert!(matches!(
            eval_fields(&spec, 1.0, 2.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            eval_fields(&spec, -1.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            eval_fields(&spec, 1.0, -0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn construction_rejects_field_that_turns_negative() {
        let err = ModelSpec::new(
            0.06,
            1.0,
            Payoff::Put,
            CoefficientField::s_only(0.01, -0.05),
            CoefficientField::constant(0.2),
            DomainBox {
                s_max: 20.0,
                y_max: 20.0,
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NonPositiveCoefficient { field: "delta", .. }
        ));
    }

    #[test]
    fn wrong_parameter_count_is_a_config_error() {
        assert!(CoefficientField::new(FieldFamily::SOnly, vec![0.1]).is_err());
        assert!(CoefficientField::new(FieldFamily::BoundedRational, vec![0.1, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn reference_roots() {
        let spec = ModelSpec::reference(Payoff::Call, 1.0);
        let rp = roots(&spec, 2.0, 1.0).unwrap();
        assert!((rp.gamma1 - 1.5).abs() < 1e-12);
        assert!((rp.gamma2 + 2.0).abs() < 1e-12);
        assert_eq!(
            [rp.dgamma1_ds, rp.dgamma2_ds, rp.dgamma1_dy, rp.dgamma2_dy],
            [0.0; 4]
        );
    }

    #[test]
    fn y_derivative_matches_finite_differences() {
        let spec = spec_with(
            CoefficientField::bounded_rational(0.02, 0.0, 0.01),
            CoefficientField::constant(0.2),
        );
        let h = 1e-5;
        let rp = roots(&spec, 2.0, 1.0).unwrap();
        let up = roots(&spec, 2.0, 1.0 + h).unwrap();
        let dn = roots(&spec, 2.0, 1.0 - h).unwrap();
        let fd1 = (up.gamma1 - dn.gamma1) / (2.0 * h);
        let fd2 = (up.gamma2 - dn.gamma2) / (2.0 * h);
        assert!((fd1 - rp.dgamma1_dy).abs() <= 1e-6 * fd1.abs());
        assert!((fd2 - rp.dgamma2_dy).abs() <= 1e-6 * fd2.abs());
    }

    #[test]
    fn generator_kills_root_powers() {
        let spec = ModelSpec::reference(Payoff::Put, 1.0);
        let g1 = roots(&spec, 1.0, 0.5).unwrap().gamma1;
        let p = StateTriple::new(0.8, 1.0, 0.5).unwrap();
        struct Power(f64);
        impl SpatialFunction for Power {
            fn value(&self, x: f64, _: f64, _: f64) -> f64 {
                x.powf(self.0)
            }
            fn dx(&self, x: f64, _: f64, _: f64) -> f64 {
                self.0 * x.powf(self.0 - 1.0)
            }
            fn dxx(&self, x: f64, _: f64, _: f64) -> f64 {
                self.0 * (self.0 - 1.0) * x.powf(self.0 - 2.0)
            }
        }
        let res = generator_residual(&spec, &Power(g1), p).unwrap();
        assert!(res.abs() <= 1e-10 * 0.8f64.powf(g1));
    }

    #[test]
    fn generator_on_put_payoff_and_constants() {
        let spec = ModelSpec::reference(Payoff::Put, 1.0);
        let p = StateTriple::new(0.5, 0.6, 0.2).unwrap();
        let res = generator_residual(&spec, &|x: f64, _: f64, _: f64| 1.0 - x, p).unwrap();
        assert!((res + 0.045).abs() < 1e-8);
        let res = generator_residual(&spec, &|_: f64, _: f64, _: f64| 2.5, p).unwrap();
        assert!((res + 0.06 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn generator_rejects_boundary_points() {
        let spec = ModelSpec::reference(Payoff::Put, 1.0);
        let on_plane = StateTriple::new(1.0, 1.0, 0.5).unwrap();
        assert!(generator_residual(&spec, &|x: f64, _: f64, _: f64| x, on_plane).is_err());
    }

    #[test]
    fn state_triple_invariant() {
        assert!(StateTriple::new(1.0, 1.0, 0.0).is_ok());
        assert!(StateTriple::new(1.1, 1.0, 0.0).is_err());
        assert!(StateTriple::new(0.4, 1.0, 0.5).is_err());
        assert!(StateTriple::new(0.5, 1.0, 1.0).is_err());
    }
}

//! Power-form value representations `C₁x^γ₁ + C₂x^γ₂`.

use crate::coefficients::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerForm {
    pub c: [f64; 2],
    pub gamma: [f64; 2],
}

impl PowerForm {
    pub fn new(c: [f64; 2], gamma: [f64; 2]) -> Self {
        Self { c, gamma }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.term(0, x) + self.term(1, x)
    }

    pub fn dx(&self, x: f64) -> f64 {
        (self.gamma[0] * self.term(0, x) + self.gamma[1] * self.term(1, x)) / x
    }

    pub fn dxx(&self, x: f64) -> f64 {
        let g = self.gamma;
        (g[0] * (g[0] - 1.0) * self.term(0, x) + g[1] * (g[1] - 1.0) * self.term(1, x)) / (x * x)
    }

    fn term(&self, i: usize, x: f64) -> f64 {
        if self.c[i] == 0.0 {
            0.0
        } else {
            self.c[i] * x.powf(self.gamma[i])
        }
    }
}

/// Which piece of a piecewise value function applies at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// Stopping region: the value is the payoff.
    Stop,
    /// Continuation region with a power representation.
    Power(PowerForm),
}

impl Branch {
    pub fn value(&self, spec: &ModelSpec, x: f64) -> f64 {
        match self {
            Branch::Stop => spec.payoff_value(x),
            Branch::Power(p) => p.value(x),
        }
    }

    pub fn dx(&self, spec: &ModelSpec, x: f64) -> f64 {
        match self {
            Branch::Stop => match spec.payoff() {
                crate::coefficients::Payoff::Call => 1.0,
                crate::coefficients::Payoff::Put => -1.0,
            },
            Branch::Power(p) => p.dx(x),
        }
    }

    pub fn dxx(&self, x: f64) -> f64 {
        match self {
            Branch::Stop => 0.0,
            Branch::Power(p) => p.dxx(x),
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Branch::Stop)
    }
}

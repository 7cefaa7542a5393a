//! The multivalued nonlinearity φ, maximal monotone extension of
//! `x ↦ x·1{|x| > 1}`, together with its antiderivative ψ, the energy
//! functional `∫ψ(u)`, and the closed-form resolvent and Yosida approximation.
//!
//! Everything is evaluated by branch selection; nothing here iterates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::Field;

/// A closed interval `[lo, hi]`, possibly degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    /// Euclidean distance from `x` to the interval.
    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }
}

/// The value set φ(x).
pub fn phi(x: f64) -> Interval {
    if !(-1.0..=1.0).contains(&x) {
        Interval::point(x)
    } else if x == 1.0 {
        Interval { lo: 0.0, hi: 1.0 }
    } else if x == -1.0 {
        Interval { lo: -1.0, hi: 0.0 }
    } else {
        Interval::point(0.0)
    }
}

/// The single-valued selection `x·1{|x| > 1}`; monotone nondecreasing.
pub fn phi_selection(x: f64) -> f64 {
    if x.abs() > 1.0 {
        x
    } else {
        0.0
    }
}

/// Antiderivative of φ with ψ(0) = 0: `½(x² − 1)·1{|x| > 1}`.
pub fn psi(x: f64) -> f64 {
    if x.abs() > 1.0 {
        0.5 * (x * x - 1.0)
    } else {
        0.0
    }
}

/// Quadrature `h Σ ψ(u_i)` of the energy functional.
pub fn varphi_functional(u: &Field) -> f64 {
    u.grid().h() * u.values().iter().map(|&v| psi(v)).sum::<f64>()
}

/// Regularisation parameter ε ∈ (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct YosidaParams {
    epsilon: f64,
}

impl TryFrom<f64> for YosidaParams {
    type Error = crate::error::Error;
    fn try_from(eps: f64) -> Result<Self> {
        YosidaParams::new(eps)
    }
}

impl From<YosidaParams> for f64 {
    fn from(p: YosidaParams) -> f64 {
        p.epsilon
    }
}

impl YosidaParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(
                "epsilon",
                format!("must lie in (0, 1], got {epsilon}"),
            ));
        }
        Ok(YosidaParams { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The unique `s` with `s + ε φ(s) ∋ x`.
    pub fn resolvent(&self, x: f64) -> f64 {
        let e = self.epsilon;
        let a = x.abs();
        if a <= 1.0 {
            x
        } else if a <= 1.0 + e {
            x.signum()
        } else {
            x / (1.0 + e)
        }
    }

    /// φ^ε(x) = (x − R^ε(x)) / ε, written out branch by branch.
    pub fn yosida(&self, x: f64) -> f64 {
        let e = self.epsilon;
        if x.abs() <= 1.0 {
            0.0
        } else if x > 1.0 && x <= 1.0 + e {
            (x - 1.0) / e
        } else if x < -1.0 && x >= -1.0 - e {
            (x + 1.0) / e
        } else {
            x / (1.0 + e)
        }
    }

    /// Slope of φ^ε; at the kinks |x| ∈ {1, 1+ε} the right-hand slope.
    pub fn yosida_derivative(&self, x: f64) -> f64 {
        let e = self.epsilon;
        if x >= 1.0 + e || x < -1.0 - e {
            1.0 / (1.0 + e)
        } else if (1.0..1.0 + e).contains(&x) || (-1.0 - e..-1.0).contains(&x) {
            1.0 / e
        } else {
            0.0
        }
    }

    /// The full drift flux `ε x + φ^ε(x)` entering the approximating equation.
    pub fn flux(&self, x: f64) -> f64 {
        self.epsilon * x + self.yosida(x)
    }

    pub fn flux_derivative(&self, x: f64) -> f64 {
        self.epsilon + self.yosida_derivative(x)
    }

    /// Inverse of the strictly increasing map [`YosidaParams::flux`].
    pub fn flux_inverse(&self, w: f64) -> f64 {
        let e = self.epsilon;
        let a = w.abs();
        let s = w.signum();
        // Breakpoints of the flux at x = 1 and x = 1 + ε.
        let w1 = e;
        let w2 = e * (1.0 + e) + 1.0;
        if a <= w1 {
            w / e
        } else if a <= w2 {
            s * (a + 1.0 / e) / (e + 1.0 / e)
        } else {
            s * (a - w2) / (e + 1.0 / (1.0 + e)) + s * (1.0 + e)
        }
    }
}

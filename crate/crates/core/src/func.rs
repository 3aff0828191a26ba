//! Real-to-real function descriptors used for drift and diffusion
//! coefficients.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A named parametric function `R -> R`, evaluable everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Func {
    Constant { value: f64 },
    /// `intercept + slope * x`
    Linear { intercept: f64, slope: f64 },
    /// `sum_k coeffs[k] * x^k`
    Polynomial { coeffs: Vec<f64> },
    /// `-amplitude * tanh((x - center) / width)`: mean reversion with bounded pull.
    Tanh { amplitude: f64, center: f64, width: f64 },
    /// Linear interpolation between knots, linear extrapolation by the end segments.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// Linear interpolation between knots, constant extrapolation.
    Tabulated { knots: Vec<(f64, f64)> },
}

impl Func {
    pub fn constant(value: f64) -> Self {
        Func::Constant { value }
    }

    pub fn linear(intercept: f64, slope: f64) -> Self {
        Func::Linear { intercept, slope }
    }

    /// Build a descriptor from the flat `kind` + `params`/`knots` form used in
    /// problem files.
    pub fn from_parts(kind: &str, params: &[f64], knots: &[(f64, f64)]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() != n {
                return Err(Error::Format(format!(
                    "function kind `{kind}` expects {n} params, got {}",
                    params.len()
                )));
            }
            Ok(())
        };
        let f = match kind {
            "constant" => {
                want(1)?;
                Func::Constant { value: params[0] }
            }
            "linear" => {
                want(2)?;
                Func::Linear { intercept: params[0], slope: params[1] }
            }
            "polynomial" => {
                if params.is_empty() {
                    return Err(Error::Format("polynomial needs at least one coefficient".into()));
                }
                Func::Polynomial { coeffs: params.to_vec() }
            }
            "tanh" => {
                want(3)?;
                Func::Tanh { amplitude: params[0], center: params[1], width: params[2] }
            }
            "piecewise_linear" => Func::PiecewiseLinear { knots: knots.to_vec() },
            "tabulated" => Func::Tabulated { knots: knots.to_vec() },
            other => return Err(Error::Format(format!("unknown function kind `{other}`"))),
        };
        f.check()?;
        Ok(f)
    }

    /// Structural validation of the descriptor parameters.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        match self {
            Func::Constant { value } if !value.is_finite() => bad("non-finite constant".into()),
            Func::Linear { intercept, slope } if !(intercept.is_finite() && slope.is_finite()) => {
                bad("non-finite linear coefficient".into())
            }
            Func::Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                bad("non-finite polynomial coefficient".into())
            }
            Func::Tanh { width, .. } if !(*width > 0.0) => bad("tanh width must be positive".into()),
            Func::PiecewiseLinear { knots } | Func::Tabulated { knots } => {
                if knots.len() < 2 {
                    return bad("interpolated function needs at least two knots".into());
                }
                if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    return bad("non-finite knot".into());
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("knots must be strictly increasing in x".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Func::Constant { value } => *value,
            Func::Linear { intercept, slope } => intercept + slope * x,
            Func::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Func::Tanh { amplitude, center, width } => -amplitude * ((x - center) / width).tanh(),
            Func::PiecewiseLinear { knots } => interpolate(knots, x, true),
            Func::Tabulated { knots } => interpolate(knots, x, false),
        }
    }

    /// `Some(c)` when the function is identically `c`.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Func::Constant { value } => Some(*value),
            _ => None,
        }
    }

    /// Multiply the function by `k`.
    pub fn scaled(&self, k: f64) -> Func {
        match self {
            Func::Constant { value } => Func::Constant { value: value * k },
            Func::Linear { intercept, slope } => Func::Linear { intercept: intercept * k, slope: slope * k },
            Func::Polynomial { coeffs } => Func::Polynomial { coeffs: coeffs.iter().map(|c| c * k).collect() },
            Func::Tanh { amplitude, center, width } => {
                Func::Tanh { amplitude: amplitude * k, center: *center, width: *width }
            }
            Func::PiecewiseLinear { knots } => {
                Func::PiecewiseLinear { knots: knots.iter().map(|&(x, y)| (x, y * k)).collect() }
            }
            Func::Tabulated { knots } => Func::Tabulated { knots: knots.iter().map(|&(x, y)| (x, y * k)).collect() },
        }
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64, extrapolate: bool) -> f64 {
    let n = knots.len();
    let (x0, y0) = knots[0];
    let (xn, yn) = knots[n - 1];
    let seg = |i: usize| {
        let (xa, ya) = knots[i];
        let (xb, yb) = knots[i + 1];
        ya + (yb - ya) * (x - xa) / (xb - xa)
    };
    if x <= x0 {
        return if extrapolate { seg(0) } else { y0 };
    }
    if x >= xn {
        return if extrapolate { seg(n - 2) } else { yn };
    }
    let i = knots.partition_point(|k| k.0 <= x) - 1;
    seg(i.min(n - 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_horner() {
        let f = Func::Polynomial { coeffs: vec![1.0, 0.0, -2.0, 0.5] };
        let x: f64 = 1.7;
        assert!((f.eval(x) - (1.0 - 2.0 * x * x + 0.5 * x.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn interpolation_modes() {
        let knots = vec![(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)];
        let pl = Func::PiecewiseLinear { knots: knots.clone() };
        let tab = Func::Tabulated { knots };
        assert_eq!(pl.eval(0.5), 1.0);
        assert_eq!(pl.eval(1.5), 1.5);
        assert_eq!(pl.eval(3.0), 0.0);
        assert_eq!(pl.eval(-1.0), -2.0);
        assert_eq!(tab.eval(3.0), 1.0);
        assert_eq!(tab.eval(-1.0), 0.0);
    }

    #[test]
    fn from_parts_rejects_bad_input() {
        assert!(Func::from_parts("linear", &[1.0], &[]).is_err());
        assert!(Func::from_parts("wiggle", &[], &[]).is_err());
        assert!(Func::from_parts("tabulated", &[], &[(1.0, 0.0), (0.0, 1.0)]).is_err());
        assert_eq!(Func::from_parts("linear", &[0.0, -1.0], &[]).unwrap(), Func::linear(0.0, -1.0));
    }
}

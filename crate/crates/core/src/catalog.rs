//! Built-in example problems.
//!
//! All share `y0 = 0`, `y1 = 0.5` and the capped-linear reward
//! `g(y) = min(y, beta) - 0.5`.

use crate::diffusion::{DiffusionModel, DriftClassParams};
use crate::func::Func;
use crate::problem::{Problem, RewardFn};
use crate::{Error, Result};

pub const NAMES: &[&str] = &["ou", "ou_wide", "tanh", "piecewise", "ou_varvol"];

fn build(name: &str, drift: Func, sigma: Func, class: (f64, f64, f64, f64, f64), beta: f64) -> Problem {
    let (c, a, gamma, lo, hi) = class;
    let params = DriftClassParams::new(c, a, gamma, lo, hi).expect("catalog class parameters");
    let model = DiffusionModel::new(name, drift, sigma, params).expect("catalog model");
    let g = RewardFn::CappedLinear { cost: 0.5, cap: beta };
    Problem::build(model, g, 1.0, (0.0, 0.5, beta), (None, None), None).expect("catalog problem")
}

/// Ornstein-Uhlenbeck `dX = -X dt + dW` with `beta = 1.5`.
pub fn ou() -> Problem {
    build("ou", Func::linear(0.0, -1.0), Func::constant(1.0), (1.0, 1.0, 0.5, 1.0, 1.0), 1.5)
}

/// Same dynamics with `beta = 3`. `xi(3)` is in the thousands, so this one is
/// only meant for oracle computations, not for exploration runs.
pub fn ou_wide() -> Problem {
    build("ou_wide", Func::linear(0.0, -1.0), Func::constant(1.0), (1.0, 1.0, 0.5, 1.0, 1.0), 3.0)
}

/// Bounded mean reversion `b(x) = -2 tanh(x)`.
pub fn tanh() -> Problem {
    let drift = Func::Tanh { amplitude: 2.0, center: 0.0, width: 1.0 };
    build("tanh", drift, Func::constant(1.0), (2.0, 1.0, 1.5, 1.0, 1.0), 1.5)
}

/// Piecewise-linear drift, `-x` on `[-1, 1]` and half that slope outside.
pub fn piecewise() -> Problem {
    let drift = Func::PiecewiseLinear { knots: vec![(-3.0, 2.0), (-1.0, 1.0), (1.0, -1.0), (3.0, -2.0)] };
    build("piecewise", drift, Func::constant(1.0), (1.0, 1.0, 1.0, 1.0, 1.0), 1.5)
}

/// OU drift with state-dependent volatility between 0.8 and 1.2.
pub fn ou_varvol() -> Problem {
    let sigma = Func::Tabulated { knots: vec![(-2.0, 0.8), (0.0, 1.0), (2.0, 1.2)] };
    build("ou_varvol", Func::linear(0.0, -1.0), sigma, (1.0, 1.0, 0.6, 0.8, 1.2), 1.5)
}

pub fn by_name(name: &str) -> Result<Problem> {
    match name {
        "ou" => Ok(ou()),
        "ou_wide" => Ok(ou_wide()),
        "tanh" => Ok(tanh()),
        "piecewise" => Ok(piecewise()),
        "ou_varvol" => Ok(ou_varvol()),
        other => Err(Error::Format(format!("unknown catalog problem `{other}` (known: {})", NAMES.join(", ")))),
    }
}

pub fn all() -> Vec<Problem> {
    NAMES.iter().map(|n| by_name(n).expect("listed name")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_models_are_in_class() {
        for p in all() {
            p.model.ensure_in_class().unwrap();
            p.reward.validate().unwrap();
        }
        assert!(by_name("nope").is_err());
    }
}

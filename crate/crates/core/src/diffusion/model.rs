use serde::{Deserialize, Serialize};

use crate::func::Func;
use crate::{Error, Result};

/// Constants of the drift class: `|b(x)| <= C (1 + |x|)`,
/// `sigma_lower <= |sigma| <= sigma_upper` and
/// `b(x) / sigma^2(x) * sgn(x) <= -gamma` for `|x| > A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftClassParams {
    pub lin_growth_c: f64,
    pub recurrence_a: f64,
    pub recurrence_gamma: f64,
    pub sigma_lower: f64,
    pub sigma_upper: f64,
}

impl DriftClassParams {
    pub fn new(
        lin_growth_c: f64,
        recurrence_a: f64,
        recurrence_gamma: f64,
        sigma_lower: f64,
        sigma_upper: f64,
    ) -> Result<Self> {
        let p = DriftClassParams { lin_growth_c, recurrence_a, recurrence_gamma, sigma_lower, sigma_upper };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let finite = [self.lin_growth_c, self.recurrence_a, self.recurrence_gamma, self.sigma_lower, self.sigma_upper]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("class parameters must be finite".into()));
        }
        if self.lin_growth_c < 1.0 {
            return Err(Error::InvalidModel(format!("linear growth constant C = {} < 1", self.lin_growth_c)));
        }
        if !(self.recurrence_a > 0.0 && self.recurrence_gamma > 0.0) {
            return Err(Error::InvalidModel("recurrence constants A and gamma must be positive".into()));
        }
        if !(self.sigma_lower > 0.0 && self.sigma_lower <= self.sigma_upper) {
            return Err(Error::InvalidModel(format!(
                "need 0 < sigma_lower <= sigma_upper, got {} and {}",
                self.sigma_lower, self.sigma_upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionModel {
    pub name: String,
    pub drift: Func,
    pub sigma: Func,
    pub class_params: DriftClassParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    LinearGrowth,
    SigmaBounds,
    Recurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub kind: ViolationKind,
}

/// Outcome of a grid-based class membership check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub points_checked: usize,
    pub violation: Option<Violation>,
}

impl ClassReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

// Slack for pointwise inequalities that hold with equality (e.g. |b| = C(1+|x|)).
const INEQ_SLACK: f64 = 1e-12;

impl DiffusionModel {
    pub fn new(name: impl Into<String>, drift: Func, sigma: Func, class_params: DriftClassParams) -> Result<Self> {
        drift.check()?;
        sigma.check()?;
        class_params.check()?;
        Ok(DiffusionModel { name: name.into(), drift, sigma, class_params })
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    #[inline]
    pub fn sigma2(&self, x: f64) -> f64 {
        let s = self.sigma.eval(x);
        s * s
    }

    /// Grid `[-R, R]` with step 0.01 where `R = max(2A, A + 5)`.
    pub fn validation_grid(&self) -> Vec<f64> {
        let a = self.class_params.recurrence_a;
        let r = (2.0 * a).max(a + 5.0);
        let n = (2.0 * r / 0.01).round() as usize;
        crate::quad::uniform_grid(-r, r, n + 1)
    }

    /// Pointwise check of the class conditions on `grid`. Returns the first
    /// violation in grid order.
    pub fn validate_class_membership(&self, grid: &[f64]) -> Result<ClassReport> {
        let p = &self.class_params;
        if grid.is_empty() {
            return Err(Error::Domain("validation grid is empty".into()));
        }
        let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < -p.recurrence_a && hi > p.recurrence_a) {
            return Err(Error::Domain(format!(
                "validation grid [{lo}, {hi}] must extend beyond [-A, A] = [-{a}, {a}]",
                a = p.recurrence_a
            )));
        }
        for (i, &x) in grid.iter().enumerate() {
            let b = self.drift(x);
            let s = self.sigma(x);
            if !b.is_finite() || !s.is_finite() {
                return Err(Error::InvalidModel(format!("non-finite coefficient at x = {x}")));
            }
            let violation = if b.abs() > p.lin_growth_c * (1.0 + x.abs()) * (1.0 + INEQ_SLACK) {
                Some(ViolationKind::LinearGrowth)
            } else if s.abs() < p.sigma_lower * (1.0 - INEQ_SLACK) || s.abs() > p.sigma_upper * (1.0 + INEQ_SLACK) {
                Some(ViolationKind::SigmaBounds)
            } else if x.abs() > p.recurrence_a && b / (s * s) * x.signum() > -p.recurrence_gamma + INEQ_SLACK {
                Some(ViolationKind::Recurrence)
            } else {
                None
            };
            if let Some(kind) = violation {
                return Ok(ClassReport { points_checked: i + 1, violation: Some(Violation { x, kind }) });
            }
        }
        Ok(ClassReport { points_checked: grid.len(), violation: None })
    }

    /// Convenience: validate on [`Self::validation_grid`] and turn a violation
    /// into an error.
    pub fn ensure_in_class(&self) -> Result<()> {
        let report = self.validate_class_membership(&self.validation_grid())?;
        match report.violation {
            None => Ok(()),
            Some(v) => Err(Error::InvalidModel(format!(
                "model `{}` violates {:?} condition at x = {}",
                self.name, v.kind, v.x
            ))),
        }
    }
}

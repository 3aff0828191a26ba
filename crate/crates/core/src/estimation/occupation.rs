//! Sorted occupation sample of a discretely observed path.
//!
//! The continuous-record time integrals `int_0^T f(X_s) ds` are replaced by
//! left-endpoint Riemann sums `dt * sum_i f(X_i)`, `i = 0..n-1`, so only the
//! multiset of visited states matters. Keeping it sorted turns every kernel
//! sum into a window scan; compensated prefix sums of the first two centred
//! powers give O(log n) evaluation for kernels of degree at most two.

use crate::diffusion::SamplePath;
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Occupation {
    sorted: Vec<f64>,
    dt: f64,
    center: f64,
    /// `prefix1[i] = sum_{j<i} (X_j - center)`
    prefix1: Vec<f64>,
    /// `prefix2[i] = sum_{j<i} (X_j - center)^2`
    prefix2: Vec<f64>,
}

impl Occupation {
    /// Occupation of the left endpoints `values[..len-1]` of `path`.
    pub fn from_path(path: &SamplePath) -> Result<Self> {
        let n = path.values.len();
        if n < 2 {
            return Err(Error::Domain("path of zero duration carries no occupation".into()));
        }
        Self::from_states(&path.values[..n - 1], path.dt)
    }

    /// Each state carries weight `dt`.
    pub fn from_states(states: &[f64], dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("occupation states must be finite".into()));
        }
        let mut sorted = states.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut occ = Occupation { sorted, dt, ..Default::default() };
        occ.rebuild_prefix();
        Ok(occ)
    }

    /// Add more states (same `dt`), keeping the sample sorted.
    pub fn extend(&mut self, states: &[f64]) {
        if states.is_empty() {
            return;
        }
        let mut fresh = states.to_vec();
        fresh.sort_unstable_by(f64::total_cmp);
        let old = std::mem::take(&mut self.sorted);
        let mut merged = Vec::with_capacity(old.len() + fresh.len());
        let (mut i, mut j) = (0, 0);
        while i < old.len() && j < fresh.len() {
            if old[i] <= fresh[j] {
                merged.push(old[i]);
                i += 1;
            } else {
                merged.push(fresh[j]);
                j += 1;
            }
        }
        merged.extend_from_slice(&old[i..]);
        merged.extend_from_slice(&fresh[j..]);
        self.sorted = merged;
        self.rebuild_prefix();
    }

    fn rebuild_prefix(&mut self) {
        let n = self.sorted.len();
        self.center = if n == 0 { 0.0 } else { self.sorted[n / 2] };
        self.prefix1 = compensated_prefix(self.sorted.iter().map(|x| x - self.center));
        self.prefix2 = compensated_prefix(self.sorted.iter().map(|x| (x - self.center).powi(2)));
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Observation length `T = n dt`.
    pub fn duration(&self) -> f64 {
        self.dt * self.sorted.len() as f64
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> Option<f64> {
        self.sorted.first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.sorted.last().copied()
    }

    /// Index range of states in the closed interval `[lo, hi]`.
    #[inline]
    pub fn window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let a = self.sorted.partition_point(|&v| v < lo);
        let b = self.sorted.partition_point(|&v| v <= hi);
        a..b.max(a)
    }

    /// Number of states strictly below `x`.
    #[inline]
    pub fn count_below(&self, x: f64) -> usize {
        self.sorted.partition_point(|&v| v < x)
    }

    /// `sum_{i in range} P((x - X_i) / h)` for a polynomial `P` of degree at
    /// most two, from the prefix sums.
    pub(crate) fn quadratic_window_sum(&self, range: std::ops::Range<usize>, x: f64, h: f64, c: [f64; 3]) -> f64 {
        let n = (range.end - range.start) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let s1 = self.prefix1[range.end] - self.prefix1[range.start];
        let s2 = self.prefix2[range.end] - self.prefix2[range.start];
        let a = x - self.center;
        // sum (a - d)^k for k = 1, 2
        let p1 = n * a - s1;
        let p2 = (n * a * a - 2.0 * a * s1 + s2).max(0.0);
        c[0] * n + c[1] * p1 / h + c[2] * p2 / (h * h)
    }
}

fn compensated_prefix(iter: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in iter {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
    out
}

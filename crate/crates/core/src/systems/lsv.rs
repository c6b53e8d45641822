use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Liverani–Saussol–Vaienti (Pomeau–Manneville type) intermittent map
/// `T(x) = x (1 + (2x)^alpha)` on `[0, 1/2)`, `T(x) = 2x - 1` on `[1/2, 1]`.
///
/// Neutral fixed point at 0; the first-return map to `[1/2, 1]` is
/// Gibbs–Markov with return-time tail `m(phi > n) ~ n^(-1/alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsvMap {
    pub alpha: f64,
}

/// Steps discarded from a Lebesgue start when sampling the invariant measure.
pub const LSV_BURN_IN: usize = 10_000;

impl LsvMap {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("LSV parameter alpha must lie in (0, 1)"));
        }
        Ok(LsvMap { alpha })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        if x < 0.5 {
            // 2^alpha x^alpha = (2x)^alpha
            x * (1.0 + (2.0 * x).powf(self.alpha))
        } else {
            2.0 * x - 1.0
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x < 0.5 {
            1.0 + (1.0 + self.alpha) * (2.0 * x).powf(self.alpha)
        } else {
            2.0
        }
    }

    /// Inverse of the left branch, `[0, 1] -> [0, 1/2]`, by safeguarded
    /// Newton iteration.
    pub fn left_inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 0.5;
        }
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        // T(x) <= 2x on [0, 1/2] and T(x) >= x, so y/2 <= x <= y
        let mut x = 0.5 * y;
        for _ in 0..100 {
            let fx = self.apply(x) - y;
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - fx / self.derivative(x);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-17 * x.max(1e-300) {
                return next;
            }
            x = next;
        }
        x
    }

    /// Inverse of the right branch, `[0, 1] -> [1/2, 1]`.
    #[inline]
    pub fn right_inverse(&self, y: f64) -> f64 {
        0.5 * (y + 1.0)
    }
}

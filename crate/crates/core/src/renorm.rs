//! Slowly varying functions and renormalizing sequences `B(x) = x^d L(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A slowly varying function `L`, restricted to a closed set of kinds so that
/// experiment configs stay serializable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum SlowVar {
    Constant { value: f64 },
    /// `(ln max(x, e))^exponent`, i.e. a power of the logarithm, held at 1 on
    /// `(0, e]` so that it stays positive everywhere.
    LogPower { exponent: f64 },
    /// Piecewise log-log linear interpolation through `(grid, values)`, held
    /// constant outside the grid. Normalization of a tabulated `L` cannot be
    /// checked and is the caller's responsibility.
    TableInterpolated { grid: Vec<f64>, values: Vec<f64> },
}

impl SlowVar {
    pub fn one() -> Self {
        SlowVar::Constant { value: 1.0 }
    }

    pub fn log() -> Self {
        SlowVar::LogPower { exponent: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlowVar::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::invalid("constant slowly varying part must be positive"));
                }
            }
            SlowVar::LogPower { exponent } => {
                if !exponent.is_finite() {
                    return Err(Error::invalid("log-power exponent must be finite"));
                }
            }
            SlowVar::TableInterpolated { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return Err(Error::invalid("table needs matching, non-empty grid and values"));
                }
                if grid.iter().any(|&x| !(x > 0.0)) || values.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::invalid("table grid and values must be positive"));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("table grid must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    /// `L(x)` for `x > 0`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SlowVar::Constant { value } => *value,
            SlowVar::LogPower { exponent } => x.max(std::f64::consts::E).ln().powf(*exponent),
            SlowVar::TableInterpolated { grid, values } => {
                let last = grid.len() - 1;
                if x <= grid[0] {
                    return values[0];
                }
                if x >= grid[last] {
                    return values[last];
                }
                let j = grid.partition_point(|&g| g <= x);
                let (x0, x1) = (grid[j - 1].ln(), grid[j].ln());
                let (y0, y1) = (values[j - 1].ln(), values[j].ln());
                let w = (x.ln() - x0) / (x1 - x0);
                (y0 + w * (y1 - y0)).exp()
            }
        }
    }
}

/// A renormalizing sequence `B_n = n^d L(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormSeq {
    pub d: f64,
    #[serde(rename = "L")]
    pub slow: SlowVar,
}

impl RenormSeq {
    pub fn new(d: f64, slow: SlowVar) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::invalid("renormalization exponent d must be positive"));
        }
        slow.validate()?;
        Ok(RenormSeq { d, slow })
    }

    /// `B_n = sqrt(n)`.
    pub fn sqrt() -> Self {
        RenormSeq {
            d: 0.5,
            slow: SlowVar::one(),
        }
    }

    /// `B_n = n^d`.
    pub fn power(d: f64) -> Self {
        RenormSeq {
            d,
            slow: SlowVar::one(),
        }
    }

    pub fn eval(&self, n: u64) -> f64 {
        self.eval_at(n as f64)
    }

    /// `B(x) = x^d L(x)` at a real argument.
    pub fn eval_at(&self, x: f64) -> f64 {
        x.powf(self.d) * self.slow.eval(x)
    }

    /// Smallest point of a logarithmic grid on `[1, n_max]` from which `B` is
    /// nondecreasing along the rest of the grid.
    pub fn monotone_from(&self, n_max: f64, points_per_decade: usize) -> f64 {
        let decades = n_max.log10();
        let count = (decades * points_per_decade as f64).ceil() as usize + 1;
        let grid: Vec<f64> = (0..count)
            .map(|i| 10f64.powf(decades * i as f64 / (count - 1) as f64))
            .collect();
        let values: Vec<f64> = grid.iter().map(|&x| self.eval_at(x)).collect();
        let mut start = grid.len() - 1;
        while start > 0 && values[start - 1] <= values[start] {
            start -= 1;
        }
        grid[start]
    }
}

/// Solves `n L(x) = x^p` for `x`, the normalizing constant of a stable
/// domain of attraction with index `p`.
///
/// Bisection on `ln x` over `[1, 1e30]`; the relative residual of the
/// defining relation ends at the floating-point floor.
pub fn solve_bn(p: f64, slow: &SlowVar, n: u64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::invalid(format!("index p = {p} outside (1, 2]")));
    }
    slow.validate()?;
    let ln_n = (n as f64).ln();
    let h = |ln_x: f64| ln_n + slow.eval(ln_x.exp()).ln() - p * ln_x;
    let (mut lo, mut hi) = (0.0_f64, 30.0 * std::f64::consts::LN_10);
    let (h_lo, h_hi) = (h(lo), h(hi));
    if h_lo == 0.0 {
        return Ok(1.0);
    }
    if !(h_lo > 0.0 && h_hi < 0.0) {
        return Err(Error::NoBracket);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with the smaller residual
    let x = if h(lo).abs() <= h(hi).abs() { lo } else { hi };
    Ok(x.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn residual(p: f64, slow: &SlowVar, n: u64, x: f64) -> f64 {
        (n as f64 * slow.eval(x) / x.powf(p) - 1.0).abs()
    }

    #[test]
    fn eval_examples() {
        assert_relative_eq!(RenormSeq::power(0.5).eval(4), 2.0, epsilon = 1e-15);
        assert_relative_eq!(RenormSeq::power(2.0 / 3.0).eval(8), 4.0, epsilon = 1e-14);
        let e = std::f64::consts::E;
        let seq = RenormSeq::new(0.5, SlowVar::log()).unwrap();
        assert_relative_eq!(seq.eval_at(e * e), 2.0 * e, epsilon = 1e-14);
    }

    #[test]
    fn solve_constant_slow_part() {
        let x = solve_bn(1.5, &SlowVar::one(), 1000).unwrap();
        assert_relative_eq!(x, 100.0, max_relative = 1e-12);
        let x = solve_bn(2.0, &SlowVar::one(), 10_000).unwrap();
        assert_relative_eq!(x, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn solve_log_slow_part_against_plain_bisection() {
        // independent fixed-point iteration x = (n ln x)^(1/p)
        let n = 1_000_000u64;
        let mut oracle = 10.0f64;
        for _ in 0..200 {
            oracle = (n as f64 * oracle.ln()).powf(1.0 / 1.5);
        }
        let x = solve_bn(1.5, &SlowVar::log(), n).unwrap();
        assert_relative_eq!(x, oracle, max_relative = 1e-12);
        assert!(residual(1.5, &SlowVar::log(), n, x) <= 1e-10);
    }

    #[test]
    fn no_bracket_for_pathological_table() {
        // L so large that n L(x) > x^p on the whole bracket
        let slow = SlowVar::Constant { value: 1e60 };
        assert!(matches!(solve_bn(1.5, &slow, 10), Err(Error::NoBracket)));
    }

    #[test]
    fn slowly_varying_ratios() {
        // (ln(lambda x) / ln x)^e - 1 is about e ln(lambda) / ln x, so the 1%
        // band is reached only once ln x exceeds 100 |e| ln(lambda).
        for slow in [SlowVar::one(), SlowVar::log(), SlowVar::LogPower { exponent: -0.5 }] {
            for lambda in [2.0f64, 10.0] {
                for x in [1e6f64, 1e12, 1e100, 1e300] {
                    let r = slow.eval(lambda * x) / slow.eval(x);
                    let e = match slow {
                        SlowVar::LogPower { exponent } => exponent,
                        _ => 0.0,
                    };
                    let oracle = (1.0 + lambda.ln() / x.ln()).powf(e);
                    assert!((r - oracle).abs() <= 1e-12, "{slow:?} x={x} lambda={lambda}");
                    if e.abs() * lambda.ln() / x.ln() <= 0.0099 {
                        assert!((r - 1.0).abs() <= 0.01, "{slow:?} x={x} lambda={lambda} r={r}");
                    }
                }
                assert!((slow.eval(lambda * 1e300) / slow.eval(1e300) - 1.0).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn table_interpolation_is_positive_and_hits_nodes() {
        let slow = SlowVar::TableInterpolated {
            grid: vec![1.0, 10.0, 100.0],
            values: vec![1.0, 2.0, 3.0],
        };
        slow.validate().unwrap();
        assert_relative_eq!(slow.eval(10.0), 2.0, epsilon = 1e-12);
        assert_eq!(slow.eval(0.5), 1.0);
        assert_eq!(slow.eval(1e9), 3.0);
        assert!(slow.eval(31.6) > 2.0 && slow.eval(31.6) < 3.0);
    }

    #[test]
    fn monotone_from_reports_start_of_increase() {
        // x^0.1 * (ln x)^-2 decreases until ln x = 20
        let seq = RenormSeq::new(0.1, SlowVar::LogPower { exponent: -2.0 }).unwrap();
        let n0 = seq.monotone_from(1e9, 20);
        assert!(n0 > 1.0);
        assert_eq!(RenormSeq::sqrt().monotone_from(1e9, 20), 1.0);
    }

    #[test]
    fn serde_shape() {
        let seq = RenormSeq::new(0.5, SlowVar::log()).unwrap();
        let json = serde_json::to_string(&seq).unwrap();
        assert_eq!(json, r#"{"d":0.5,"L":{"kind":"LogPower","params":{"exponent":1.0}}}"#);
        let back: RenormSeq = serde_json::from_str(&json).unwrap();
        assert_eq!(back, seq);
    }

    proptest! {
        #[test]
        fn solve_bn_residual(p in 1.05f64..2.0, exp in -2.0f64..2.0, log_n in 0.0f64..18.0) {
            let n = 10f64.powf(log_n).round().max(1.0) as u64;
            let slow = SlowVar::LogPower { exponent: exp };
            let x = solve_bn(p, &slow, n).unwrap();
            prop_assert!(residual(p, &slow, n, x) <= 1e-10);
        }

        #[test]
        fn eval_monotone_on_log_grid(d in 0.2f64..2.0, exp in 0.0f64..3.0) {
            let seq = RenormSeq::new(d, SlowVar::LogPower { exponent: exp }).unwrap();
            let mut prev = 0.0;
            for i in 0..=90 {
                let x = 10f64.powf(i as f64 / 10.0);
                let b = seq.eval_at(x);
                prop_assert!(b >= prev);
                prev = b;
            }
        }
    }
}

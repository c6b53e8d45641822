use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renorm::{solve_bn, SlowVar};

/// Domain-of-attraction regime of an observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// square integrable
    I,
    /// `P(|f| > x) ~ x^-2 l(x)` with unbounded `L`
    II,
    /// regularly varying tails of index `p` in `(1, 2)`
    III,
}

/// A candidate tail description used to pick the normalizing sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailClass {
    pub condition: Condition,
    pub p: f64,
    pub c1: f64,
    pub c2: f64,
    pub slow_part: SlowVar,
}

impl TailClass {
    pub fn square_integrable() -> Self {
        TailClass {
            condition: Condition::I,
            p: 2.0,
            c1: 0.0,
            c2: 0.0,
            slow_part: SlowVar::one(),
        }
    }

    pub fn new(condition: Condition, p: f64, c1: f64, c2: f64, slow_part: SlowVar) -> Result<Self> {
        let class = TailClass {
            condition,
            p,
            c1,
            c2,
            slow_part,
        };
        class.validate()?;
        Ok(class)
    }

    pub fn validate(&self) -> Result<()> {
        self.slow_part.validate()?;
        match self.condition {
            Condition::I => {
                if self.p != 2.0 || self.slow_part != SlowVar::one() {
                    return Err(Error::invalid("condition I forces p = 2 and L = 1"));
                }
            }
            Condition::II => {
                if self.p != 2.0 {
                    return Err(Error::invalid("condition II forces p = 2"));
                }
            }
            Condition::III => {
                if !(self.p > 1.0 && self.p < 2.0) {
                    return Err(Error::invalid("condition III needs p in (1, 2)"));
                }
                if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1 + self.c2 > 0.0) {
                    return Err(Error::DegenerateTails);
                }
            }
        }
        Ok(())
    }

    /// Normalizing constant `B_n`: `sqrt(n)` in condition I, otherwise the
    /// solution of `n L(B_n) = B_n^p`.
    pub fn bn(&self, n: u64) -> Result<f64> {
        match self.condition {
            Condition::I => Ok((n as f64).sqrt()),
            _ => solve_bn(self.p, &self.slow_part, n),
        }
    }
}

/// Output of [`classify_tail`]. Purely descriptive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailDiagnostics {
    pub reported_condition: Condition,
    /// Hill estimate of the upper-tail index, `None` if the tail is empty.
    pub upper_index: Option<f64>,
    pub lower_index: Option<f64>,
    /// Number of order statistics used per tail.
    pub tail_size: usize,
    /// Exceedance counts above `threshold` and below `-threshold`.
    pub upper_count: usize,
    pub lower_count: usize,
    pub threshold: f64,
    /// `c1 / (c1 + c2)` estimated from the exceedance counts.
    pub upper_share: f64,
    /// `(n, n P(|f| > B_n), n E[|f|; |f| > B_n] / B_n, n E[f^2; |f| <= B_n] / B_n^2)`.
    pub truncated_moments: Vec<(u64, f64, f64, f64)>,
}

/// Empirical tail diagnostics of a sample against a candidate class.
///
/// Tail indices come from Hill estimators on the `k = n/100` largest
/// observations of each sign; the upper share compares how many observations
/// exceed the common threshold `|x|_(n-k)` on either side. The truncated
/// moments are evaluated with the candidate's `B_n` on a decade grid of `n`;
/// all three stay bounded in `n` when the candidate is right.
pub fn classify_tail(samples: &[f64], candidate: &TailClass) -> Result<TailDiagnostics> {
    if samples.len() < 10_000 {
        return Err(Error::invalid("tail classification needs at least 1e4 samples"));
    }
    candidate.validate()?;
    let n = samples.len();
    let k = (n / 100).max(50);

    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_unstable_by(|a, b| a.total_cmp(b));
    let threshold = abs[n - k - 1];
    let upper_count = samples.iter().filter(|&&x| x > threshold).count();
    let lower_count = samples.iter().filter(|&&x| x < -threshold).count();
    let upper_share = if upper_count + lower_count == 0 {
        0.5
    } else {
        upper_count as f64 / (upper_count + lower_count) as f64
    };

    let mut pos: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();
    let mut neg: Vec<f64> = samples.iter().filter(|&&x| x < 0.0).map(|x| -x).collect();
    let upper_index = hill(&mut pos, k);
    let lower_index = hill(&mut neg, k);

    let index = match (upper_index, lower_index) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => f64::INFINITY,
    };
    let reported_condition = if index >= 2.5 {
        Condition::I
    } else if index >= 1.9 {
        Condition::II
    } else {
        Condition::III
    };

    let mut truncated_moments = Vec::new();
    let mut m = 10u64;
    while m <= 1_000_000_000 {
        let b = candidate.bn(m)?;
        let (mut over, mut over_abs, mut under_sq) = (0.0, 0.0, 0.0);
        for &x in samples {
            let a = x.abs();
            if a > b {
                over += 1.0;
                over_abs += a;
            } else {
                under_sq += x * x;
            }
        }
        let nf = n as f64;
        let mf = m as f64;
        truncated_moments.push((
            m,
            mf * over / nf,
            mf * over_abs / (nf * b),
            mf * under_sq / (nf * b * b),
        ));
        m *= 10;
    }

    Ok(TailDiagnostics {
        reported_condition,
        upper_index,
        lower_index,
        tail_size: k,
        upper_count,
        lower_count,
        threshold,
        upper_share,
        truncated_moments,
    })
}

// Hill estimator of the tail index from the k largest values.
fn hill(values: &mut [f64], k: usize) -> Option<f64> {
    if values.len() <= k + 1 {
        return None;
    }
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    let base = values[k];
    if base <= 0.0 {
        return None;
    }
    let mean_log: f64 = values[..k].iter().map(|v| (v / base).ln()).sum::<f64>() / k as f64;
    if mean_log <= 0.0 {
        return Some(f64::INFINITY);
    }
    Some(1.0 / mean_log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use rand::Rng;

    fn pareto_sample(n: usize, p: f64, seed: u64) -> Vec<f64> {
        let mut rng = replica_rng(seed, 0);
        (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / p)).collect()
    }

    fn stable_class() -> TailClass {
        TailClass::new(Condition::III, 1.5, 1.0, 0.0, SlowVar::one()).unwrap()
    }

    #[test]
    fn pareto_tail_index() {
        let xs = pareto_sample(200_000, 1.5, 3);
        let d = classify_tail(&xs, &stable_class()).unwrap();
        let p = d.upper_index.unwrap();
        assert!((p - 1.5).abs() <= 0.1, "{p}");
        assert_eq!(d.lower_index, None);
        assert_eq!(d.lower_count, 0);
        assert_eq!(d.reported_condition, Condition::III);
        // exact Pareto: n P(|f| > n^(2/3)) = 1
        for &(_, r1, r2, r3) in &d.truncated_moments[..4] {
            assert!(r1 < 2.0 && r2 < 6.0 && r3 < 6.0, "{r1} {r2} {r3}");
        }
    }

    #[test]
    fn bounded_samples_are_condition_one() {
        let mut rng = replica_rng(4, 0);
        let xs: Vec<f64> = (0..50_000).map(|_| rng.random::<f64>() - 0.5).collect();
        let d = classify_tail(&xs, &TailClass::square_integrable()).unwrap();
        assert_eq!(d.reported_condition, Condition::I);
    }

    #[test]
    fn symmetrized_pareto_balanced_tails() {
        let mut rng = replica_rng(8, 1);
        let xs: Vec<f64> = pareto_sample(400_000, 1.5, 8)
            .into_iter()
            .map(|x| if rng.random::<bool>() { x } else { -x })
            .collect();
        let class = TailClass::new(Condition::III, 1.5, 0.5, 0.5, SlowVar::one()).unwrap();
        let d = classify_tail(&xs, &class).unwrap();
        let ratio = d.upper_count as f64 / d.lower_count as f64;
        assert!((ratio - 1.0).abs() <= 0.1, "{ratio}");
    }

    #[test]
    fn condition_one_rejects_slow_part() {
        assert!(TailClass::new(Condition::I, 2.0, 0.0, 0.0, SlowVar::log()).is_err());
        assert!(TailClass::new(Condition::III, 1.5, 0.0, 0.0, SlowVar::one()).is_err());
    }
}

//! Target limit laws: Gaussian and stable laws, their characteristic
//! functions, distribution functions and samplers, plus Kolmogorov–Smirnov
//! distances and empirical tail classification.

mod ks;
pub mod quad;
mod tails;

pub use ks::{
    ks_distance, ks_distance_with, ks_sample, ks_two_sample, ks_weighted_two_sample, WeightedAtom,
};
pub use tails::{classify_tail, Condition, TailClass, TailDiagnostics};

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute accuracy of the stable distribution function.
pub const CDF_TOLERANCE: f64 = 1e-6;

/// A limit law `W`.
///
/// Stable laws use the characteristic function
/// `E exp(itW) = exp(-c |t|^p (1 - i beta sgn(t) tan(p pi / 2)))` with
/// `p` in `(1, 2)`, `c > 0`, `|beta| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum TargetLaw {
    /// `N(0, sigma2)`; `sigma2 = 0` behaves exactly like `Dirac0`.
    Gaussian { sigma2: f64 },
    Stable { p: f64, c: f64, beta: f64 },
    Dirac0,
}

/// Anything with a distribution function usable in KS statistics.
pub trait Cdf {
    /// `F(x) = P(W <= x)`.
    fn cdf(&self, x: f64) -> f64;
    /// `F(x-) = P(W < x)`; equal to `cdf` for continuous laws.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

impl TargetLaw {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::invalid("Gaussian variance must be nonnegative"));
        }
        Ok(TargetLaw::Gaussian { sigma2 })
    }

    pub fn stable(p: f64, c: f64, beta: f64) -> Result<Self> {
        let law = TargetLaw::Stable { p, c, beta };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetLaw::Gaussian { sigma2 } => {
                if !(sigma2.is_finite() && sigma2 >= 0.0) {
                    return Err(Error::invalid("Gaussian variance must be nonnegative"));
                }
            }
            TargetLaw::Stable { p, c, beta } => {
                if !(p > 1.0 && p < 2.0) {
                    return Err(Error::invalid(format!("stable index p = {p} outside (1, 2)")));
                }
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::invalid("stable scale c must be positive"));
                }
                if !(-1.0..=1.0).contains(&beta) {
                    return Err(Error::invalid("stable skewness must lie in [-1, 1]"));
                }
            }
            TargetLaw::Dirac0 => {}
        }
        Ok(())
    }

    fn is_degenerate(&self) -> bool {
        matches!(self, TargetLaw::Dirac0 | TargetLaw::Gaussian { sigma2: 0.0 })
    }

    /// `E exp(itW)`.
    pub fn char_fn(&self, t: f64) -> Complex64 {
        match *self {
            TargetLaw::Dirac0 => Complex64::new(1.0, 0.0),
            TargetLaw::Gaussian { sigma2 } => Complex64::new((-0.5 * sigma2 * t * t).exp(), 0.0),
            TargetLaw::Stable { p, c, beta } => {
                if t == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                let a = c * t.abs().powf(p);
                let skew = beta * t.signum() * (p * FRAC_PI_2).tan();
                // exp(-a (1 - i skew)) = exp(-a) exp(i a skew)
                Complex64::from_polar((-a).exp(), a * skew)
            }
        }
    }

    /// Distribution function. Stable laws use Zolotarev's integral
    /// representation with adaptive quadrature, well inside `CDF_TOLERANCE`.
    pub fn try_cdf(&self, x: f64) -> Result<f64> {
        match *self {
            TargetLaw::Dirac0 | TargetLaw::Gaussian { sigma2: 0.0 } => {
                Ok(if x >= 0.0 { 1.0 } else { 0.0 })
            }
            TargetLaw::Gaussian { sigma2 } => Ok(normal_cdf(x / sigma2.sqrt())),
            TargetLaw::Stable { p, c, beta } => stable_cdf(p, c, beta, x),
        }
    }

    /// Draws one variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TargetLaw::Dirac0 => 0.0,
            TargetLaw::Gaussian { sigma2 } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma2.sqrt() * z
            }
            TargetLaw::Stable { p, c, beta } => {
                // scale gamma with gamma^p = c
                c.powf(1.0 / p) * cms_standard(p, beta, rng)
            }
        }
    }

    /// Tabulates `F` on `[lo, hi]` with `points` nodes for fast repeated
    /// evaluation; outside the table the exact routine is used.
    pub fn table(&self, lo: f64, hi: f64, points: usize) -> Result<CdfTable> {
        CdfTable::new(*self, lo, hi, points)
    }

    /// Table over +-40 scale units, interpolation error below 1e-5.
    pub fn fast_cdf(&self) -> Result<CdfTable> {
        let scale = match *self {
            TargetLaw::Stable { p, c, .. } => c.powf(1.0 / p),
            TargetLaw::Gaussian { sigma2 } if sigma2 > 0.0 => sigma2.sqrt(),
            _ => 1.0,
        };
        self.table(-40.0 * scale, 40.0 * scale, 8001)
    }
}

impl Cdf for TargetLaw {
    fn cdf(&self, x: f64) -> f64 {
        self.try_cdf(x)
            .unwrap_or_else(|e| panic!("cdf evaluation failed for {self:?} at {x}: {e}"))
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.cdf(x)
        }
    }
}

/// Stable law from tail constants: `c = (c1 + c2) Gamma(1 - p) cos(p pi / 2)`
/// and `beta = (c1 - c2) / (c1 + c2)`.
pub fn stable_from_tails(p: f64, c1: f64, c2: f64) -> Result<TargetLaw> {
    if !(c1 >= 0.0 && c2 >= 0.0) {
        return Err(Error::invalid("tail constants must be nonnegative"));
    }
    if c1 + c2 <= 0.0 {
        return Err(Error::DegenerateTails);
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::invalid(format!("stable index p = {p} outside (1, 2)")));
    }
    // Gamma(1 - p) < 0 and cos(p pi / 2) < 0 on (1, 2)
    let c = (c1 + c2) * statrs::function::gamma::gamma(1.0 - p) * (p * FRAC_PI_2).cos();
    let beta = (c1 - c2) / (c1 + c2);
    TargetLaw::stable(p, c, beta)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Chambers–Mallows–Stuck variate with characteristic function
/// `exp(-|t|^p (1 - i beta sgn(t) tan(p pi / 2)))`, `p != 1`.
fn cms_standard<R: Rng + ?Sized>(p: f64, beta: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let tan_term = beta * (p * FRAC_PI_2).tan();
    let shift = tan_term.atan() / p;
    let scale = (1.0 + tan_term * tan_term).powf(1.0 / (2.0 * p));
    let arg = p * (v + shift);
    scale * arg.sin() / v.cos().powf(1.0 / p) * ((v - arg).cos() / w).powf((1.0 - p) / p)
}

fn stable_cdf(p: f64, c: f64, beta: f64, x: f64) -> Result<f64> {
    let z = x / c.powf(1.0 / p);
    if z == 0.0 {
        return Ok(0.5 - theta0(p, beta) / PI);
    }
    let f = if z > 0.0 {
        1.0 - upper_tail_integral(p, beta, z)? / PI
    } else {
        upper_tail_integral(p, -beta, -z)? / PI
    };
    Ok(f.clamp(0.0, 1.0))
}

fn theta0(p: f64, beta: f64) -> f64 {
    (beta * (p * FRAC_PI_2).tan()).atan() / p
}

// Zolotarev's integral form for p > 1 and z > 0:
// P(Z > z) = (1/pi) int_{-theta0}^{pi/2} exp(-z^(p/(p-1)) V(theta)) d theta.
// The integrand is positive and increases from 0 to 1 in theta, so the
// quadrature error is relative to the tail itself and the result is monotone
// in z up to rounding.
fn upper_tail_integral(p: f64, beta: f64, z: f64) -> Result<f64> {
    let t0 = theta0(p, beta);
    let a = p / (p - 1.0);
    let log_scale = a * z.ln();
    let log_c = (p * t0).cos().ln() / (p - 1.0);
    let log_v = |theta: f64| {
        let cos_t = theta.cos();
        log_c + a * (cos_t.ln() - (p * (t0 + theta)).sin().ln())
            + (p * t0 + (p - 1.0) * theta).cos().ln()
            - cos_t.ln()
    };
    let integrand = |theta: f64| {
        let e = log_scale + log_v(theta);
        if e.is_nan() {
            // only at the endpoints: V blows up at -theta0 and vanishes at pi/2
            return if theta > 0.0 { 1.0 } else { 0.0 };
        }
        (-e.exp()).exp()
    };
    let (lo, hi) = (-t0, FRAC_PI_2);
    // locate the transition z^a V(theta) = 1 and split there
    let (mut l, mut h) = (lo, hi);
    for _ in 0..80 {
        let mid = 0.5 * (l + h);
        if log_scale + log_v(mid) > 0.0 {
            l = mid;
        } else {
            h = mid;
        }
    }
    let split = 0.5 * (l + h);
    let tol = 1e-13;
    let left = quad::integrate(integrand, lo, split, tol, 4)?;
    let right = quad::integrate(integrand, split, hi, tol, 4)?;
    Ok(left + right)
}

/// Distribution function tabulated on a uniform grid, linearly interpolated,
/// with monotonicity enforced and exact fallback off the grid.
#[derive(Debug, Clone)]
pub struct CdfTable {
    law: TargetLaw,
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl CdfTable {
    pub fn new(law: TargetLaw, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(hi > lo) || points < 2 {
            return Err(Error::invalid("cdf table needs lo < hi and at least two points"));
        }
        let step = (hi - lo) / (points - 1) as f64;
        let mut values = Vec::with_capacity(points);
        let mut running = 0.0f64;
        for i in 0..points {
            let v = law.try_cdf(lo + step * i as f64)?;
            running = running.max(v);
            values.push(running);
        }
        Ok(CdfTable {
            law,
            lo,
            step,
            values,
        })
    }

    pub fn law(&self) -> TargetLaw {
        self.law
    }
}

impl Cdf for CdfTable {
    fn cdf(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos < 0.0 || pos >= (self.values.len() - 1) as f64 || self.law.is_degenerate() {
            return self.law.cdf(x);
        }
        let i = pos as usize;
        let w = pos - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    fn cdf_left(&self, x: f64) -> f64 {
        if self.law.is_degenerate() {
            self.law.cdf_left(x)
        } else {
            self.cdf(x)
        }
    }
}

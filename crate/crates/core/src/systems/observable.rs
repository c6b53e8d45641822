use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Alphabet, Point, System};
use crate::error::{Error, Result};

/// Real observable `f = kind - offset` on one of the systems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observable {
    #[serde(flatten)]
    pub kind: ObservableKind,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ObservableKind {
    Constant { value: f64 },
    /// One value per partition cell. Cells past the end reuse the last value.
    LocallyConstant { values: Vec<f64> },
    /// `sum_j a_j cos(2 pi k_j x)` of the scalar coordinate.
    FourierSum { terms: Vec<(u32, f64)> },
    /// Two-sided Pareto variable read off the first 64 symbols:
    /// `P(f > x) = c1 x^-p`, `P(f < -x) = c2 x^-p` for `x >= (c1 + c2)^(1/p)`.
    HeavyTail { p: f64, c1: f64, c2: f64 },
    /// Piecewise constant on the uniform grid of `values.len()` cells.
    GridFunction { values: Vec<f64> },
    /// Regular function of the coordinate.
    Holder(HolderFn),
}

/// A function of the coordinate with a known regularity constant.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "form")]
pub enum HolderFn {
    /// `scale * x^exponent`.
    Power { exponent: f64, scale: f64 },
    /// Arbitrary closure with a caller-certified Lipschitz constant. Not
    /// expressible in config files.
    #[serde(skip)]
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz: f64,
        mean: Option<f64>,
    },
}

impl fmt::Debug for HolderFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HolderFn::Power { exponent, scale } => {
                write!(f, "Power {{ exponent: {exponent}, scale: {scale} }}")
            }
            HolderFn::Custom { lipschitz, .. } => write!(f, "Custom {{ lipschitz: {lipschitz} }}"),
        }
    }
}

impl HolderFn {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match self {
            HolderFn::Power { exponent, scale } => scale * x.powf(*exponent),
            HolderFn::Custom { f, .. } => f(x),
        }
    }
}

impl From<ObservableKind> for Observable {
    fn from(kind: ObservableKind) -> Self {
        Observable { kind, offset: 0.0 }
    }
}

impl Observable {
    pub fn constant(value: f64) -> Self {
        ObservableKind::Constant { value }.into()
    }

    pub fn cosine(k: u32) -> Self {
        ObservableKind::FourierSum {
            terms: vec![(k, 1.0)],
        }
        .into()
    }

    pub fn fourier(terms: Vec<(u32, f64)>) -> Self {
        ObservableKind::FourierSum { terms }.into()
    }

    pub fn heavy_tail(p: f64, c1: f64, c2: f64) -> Self {
        ObservableKind::HeavyTail { p, c1, c2 }.into()
    }

    pub fn locally_constant(values: Vec<f64>) -> Self {
        ObservableKind::LocallyConstant { values }.into()
    }

    /// `f(x) = x`.
    pub fn identity() -> Self {
        ObservableKind::Holder(HolderFn::Power {
            exponent: 1.0,
            scale: 1.0,
        })
        .into()
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Self {
        ObservableKind::Holder(HolderFn::Custom {
            f: Arc::new(f),
            lipschitz,
            mean: None,
        })
        .into()
    }

    /// Subtract a further constant.
    pub fn shifted(mut self, by: f64) -> Self {
        self.offset += by;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ObservableKind::LocallyConstant { values } | ObservableKind::GridFunction { values } => {
                if values.is_empty() {
                    return Err(Error::invalid("observable needs at least one value"));
                }
            }
            ObservableKind::FourierSum { terms } => {
                if terms.iter().any(|&(k, _)| k == 0) {
                    return Err(Error::invalid("Fourier frequencies must be positive"));
                }
            }
            ObservableKind::HeavyTail { p, c1, c2 } => {
                if !(*p > 0.0 && *p <= 2.0) {
                    return Err(Error::invalid("heavy-tail index must lie in (0, 2]"));
                }
                if !(*c1 >= 0.0 && *c2 >= 0.0 && c1 + c2 > 0.0) {
                    return Err(Error::DegenerateTails);
                }
            }
            ObservableKind::Holder(HolderFn::Power { exponent, .. }) => {
                if !(*exponent > 0.0) {
                    return Err(Error::invalid("power exponent must be positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `f(x)`.
    #[inline]
    pub fn eval(&self, system: &System, point: &Point) -> f64 {
        self.eval_kind(system, point) - self.offset
    }

    #[inline]
    fn eval_kind(&self, system: &System, point: &Point) -> f64 {
        match &self.kind {
            ObservableKind::Constant { value } => *value,
            ObservableKind::LocallyConstant { values } => {
                let a = system.cell_of(point);
                values.get(a).copied().unwrap_or(values[values.len() - 1])
            }
            ObservableKind::FourierSum { terms } => {
                let x = system.coordinate(point);
                terms
                    .iter()
                    .map(|&(k, a)| a * (std::f64::consts::TAU * k as f64 * x).cos())
                    .sum()
            }
            ObservableKind::HeavyTail { p, c1, c2 } => {
                let u = match point {
                    Point::Bits(b) => ((b.window() >> 11) as f64 + 0.5) * 2f64.powi(-53),
                    Point::Words(w) => w.open_uniform(),
                    Point::Real(x) => x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON),
                };
                pareto_quantile(*p, *c1, *c2, u)
            }
            ObservableKind::GridFunction { values } => {
                let x = system.coordinate(point);
                let i = ((x * values.len() as f64) as usize).min(values.len() - 1);
                values[i]
            }
            ObservableKind::Holder(h) => h.eval(system.coordinate(point)),
        }
    }

    /// `int f dm`, when available in closed form for this system.
    ///
    /// Symmetric heavy tails count as centered even when `p <= 1`.
    pub fn exact_mean(&self, system: &System) -> Option<f64> {
        let lebesgue = !matches!(system, System::Lsv { .. });
        let raw = match &self.kind {
            ObservableKind::Constant { value } => Some(*value),
            ObservableKind::LocallyConstant { values } => match system {
                System::Doubling => Some(0.5 * (values[0] + values.get(1).unwrap_or(&values[0]))),
                System::BernoulliShift { alphabet, .. } => Some(cell_average(alphabet, values)),
                System::Lsv { .. } => None,
            },
            ObservableKind::FourierSum { .. } if lebesgue => Some(0.0),
            ObservableKind::GridFunction { values } if lebesgue => {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
            ObservableKind::HeavyTail { p, c1, c2 } if lebesgue => {
                if c1 == c2 {
                    Some(0.0)
                } else if *p > 1.0 {
                    let s = (c1 + c2).powf(1.0 / p);
                    Some(s * p / (p - 1.0) * (c1 - c2) / (c1 + c2))
                } else {
                    None
                }
            }
            ObservableKind::Holder(HolderFn::Power { exponent, scale }) if lebesgue => {
                Some(scale / (exponent + 1.0))
            }
            ObservableKind::Holder(HolderFn::Custom { mean, .. }) => *mean,
            _ => None,
        };
        raw.map(|m| m - self.offset)
    }

    /// Exactly centered copy, or an error when no closed-form mean exists.
    pub fn centered(&self, system: &System) -> Result<Observable> {
        let m = self.exact_mean(system).ok_or_else(|| {
            Error::invalid(format!(
                "no closed-form mean on {}; center numerically",
                system.name()
            ))
        })?;
        Ok(self.clone().shifted(m))
    }

    /// Upper bound on `sum_a m(a) Df(a)`, with `Df(a)` the Lipschitz constant
    /// on cell `a` for the symbolic metric (the coordinate metric on the LSV
    /// map, where a Hölder constant is reported for powers below 1).
    pub fn regularity_bound(&self, system: &System) -> Option<f64> {
        let tau = system.tau();
        match &self.kind {
            ObservableKind::Constant { .. } | ObservableKind::LocallyConstant { .. } => Some(0.0),
            // constant on the cylinders its uniform variate is read from
            ObservableKind::HeavyTail { .. } => match system {
                System::Lsv { .. } => None,
                _ => Some(0.0),
            },
            ObservableKind::FourierSum { terms } => {
                let lip: f64 = terms
                    .iter()
                    .map(|&(k, a)| a.abs() * std::f64::consts::TAU * k as f64)
                    .sum();
                Some(coordinate_lipschitz_to_symbolic(system, lip))
            }
            ObservableKind::GridFunction { values } => {
                let (lo, hi) = values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                let depth = (values.len() as f64).log2().ceil();
                Some((hi - lo) * tau.powf(1.0 - depth))
            }
            ObservableKind::Holder(HolderFn::Power { exponent, scale }) => {
                let lip = scale.abs() * exponent.max(1.0);
                Some(coordinate_lipschitz_to_symbolic(system, lip))
            }
            ObservableKind::Holder(HolderFn::Custom { lipschitz, .. }) => {
                Some(coordinate_lipschitz_to_symbolic(system, *lipschitz))
            }
        }
    }

    /// `sup |f|`, if finite and cheaply known.
    pub fn sup_norm(&self) -> Option<f64> {
        let raw = match &self.kind {
            ObservableKind::Constant { value } => value.abs(),
            ObservableKind::LocallyConstant { values } | ObservableKind::GridFunction { values } => {
                values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
            }
            ObservableKind::FourierSum { terms } => terms.iter().map(|(_, a)| a.abs()).sum(),
            ObservableKind::Holder(HolderFn::Power { scale, .. }) => scale.abs(),
            _ => return None,
        };
        Some(raw + self.offset.abs())
    }
}

// Coordinate functions are constant on head-word cylinders of a shift, which
// refine the symbol partition; on interval maps |x - y| <= 2^-s(x, y).
fn coordinate_lipschitz_to_symbolic(system: &System, lip: f64) -> f64 {
    match system {
        System::BernoulliShift { .. } => 0.0,
        System::Doubling | System::Lsv { .. } => lip,
    }
}

fn cell_average(alphabet: &Alphabet, values: &[f64]) -> f64 {
    let last = values[values.len() - 1];
    let head: f64 = values
        .iter()
        .enumerate()
        .map(|(a, v)| alphabet.prob(a) * v)
        .sum();
    let head_mass: f64 = (0..values.len()).map(|a| alphabet.prob(a)).sum();
    head + (1.0 - head_mass).max(0.0) * last
}

/// Quantile of the two-sided Pareto law with `P(X > x) = c1 x^-p` and
/// `P(X < -x) = c2 x^-p` beyond the scale `(c1 + c2)^(1/p)`.
pub fn pareto_quantile(p: f64, c1: f64, c2: f64, u: f64) -> f64 {
    let total = c1 + c2;
    let s = total.powf(1.0 / p);
    let w2 = c2 / total;
    if u < w2 {
        -s * (u / w2).powf(-1.0 / p)
    } else {
        s * ((1.0 - u) / (1.0 - w2)).powf(-1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    #[test]
    fn fourier_examples() {
        let sys = System::doubling();
        let f = Observable::cosine(1);
        let p = Point::doubling_at(0.0, replica_rng(0, 0));
        assert_eq!(f.eval(&sys, &p), 1.0);
        let g = Observable::fourier(vec![(1, 1.0), (2, 1.0)]);
        let q = Point::doubling_at(0.25, replica_rng(0, 1));
        assert!((g.eval(&sys, &q) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn heavy_tail_slope() {
        let sys = System::doubling();
        let f = Observable::heavy_tail(1.5, 1.0, 0.0);
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|i| f.eval(&sys, &sys.sample_invariant(replica_rng(11, i))))
            .collect();
        xs.sort_unstable_by(|a, b| b.total_cmp(a));
        assert!(xs[n as usize - 1] >= 1.0);
        // slope of log P(f > x) between x = 10 and x = 1000
        let tail = |x: f64| xs.iter().take_while(|&&v| v > x).count() as f64 / n as f64;
        let slope = (tail(1000.0).ln() - tail(10.0).ln()) / (1000f64.ln() - 10f64.ln());
        assert!((slope + 1.5).abs() <= 0.05 * 1.5, "{slope}");
    }

    #[test]
    fn quantile_tails_exact() {
        let (p, c1, c2) = (1.3, 0.7, 0.4);
        let s = 1.1f64.powf(1.0 / p);
        for &x in &[s, 2.0 * s, 10.0 * s] {
            // invert by bisection on u and compare with c1 x^-p
            let (mut lo, mut hi) = (c2 / 1.1, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if pareto_quantile(p, c1, c2, mid) > x {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!(((1.0 - lo) - c1 * x.powf(-p)).abs() < 1e-12);
        }
    }

    #[test]
    fn centered_means_vanish() {
        let n = 1_000_000u64;
        let cases: Vec<(System, Observable)> = vec![
            (System::doubling(), Observable::heavy_tail(1.5, 1.0, 0.0)),
            (System::doubling(), Observable::fourier(vec![(1, 1.0), (3, -0.5)])),
            (System::doubling(), Observable::identity()),
            (
                System::bernoulli(
                    Alphabet::Finite {
                        probs: vec![0.25, 0.75],
                    },
                    0.5,
                )
                .unwrap(),
                Observable::locally_constant(vec![3.0, -1.0]),
            ),
            (
                System::bernoulli(Alphabet::Geometric { q: 0.5 }, 0.5).unwrap(),
                Observable::locally_constant(vec![0.0, 1.0, 2.0, 3.0]),
            ),
        ];
        for (sys, f) in cases {
            let g = f.centered(&sys).unwrap();
            assert!(g.exact_mean(&sys).unwrap().abs() <= 1e-10);
            let xs: Vec<f64> = (0..n)
                .map(|i| g.eval(&sys, &sys.sample_invariant(replica_rng(12, i))))
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!(mean.abs() <= 4.0 * sd / 1e3, "{f:?}: {mean} vs sd {sd}");
        }
    }

    #[test]
    fn lsv_has_no_closed_form_mean() {
        let sys = System::lsv(0.3).unwrap();
        assert!(Observable::identity().centered(&sys).is_err());
    }

    #[test]
    fn regularity_bounds_finite() {
        let sys = System::doubling();
        for f in [
            Observable::cosine(3),
            Observable::heavy_tail(1.5, 1.0, 1.0),
            Observable::identity(),
            Observable::locally_constant(vec![1.0, -1.0]),
        ] {
            assert!(f.regularity_bound(&sys).unwrap().is_finite());
        }
    }

    #[test]
    fn config_shape() {
        let f: Observable =
            serde_json::from_str(r#"{"kind":"HeavyTail","p":1.5,"c1":1.0,"c2":0.0}"#).unwrap();
        assert!(matches!(f.kind, ObservableKind::HeavyTail { .. }));
        let g: Observable =
            serde_json::from_str(r#"{"kind":"FourierSum","terms":[[1,1.0]],"offset":0.0}"#)
                .unwrap();
        assert_eq!(g.sup_norm(), Some(1.0));
    }
}

//! Logarithmically weighted empirical measures along a single orbit,
//! `(1/H_N) sum_{k <= N} (1/k) delta_{S_k f / B_k}`, together with weighted
//! variants, log-averaged characteristic functions and the rescaling check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{ks_distance_with, Cdf, WeightedAtom};
use crate::renorm::RenormSeq;
use crate::stats::KahanSum;

/// Up to this many steps every atom is stored.
pub const EXACT_ATOM_LIMIT: u64 = 1_000_000;
/// Default histogram half-width, in target-scale units.
pub const DEFAULT_CLIP: f64 = 20.0;
/// Default number of histogram bins.
pub const DEFAULT_BINS: usize = 8000;

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// `(S_k / B_k, 1/k)` for every `k`.
    ExactAtoms(Vec<WeightedAtom>),
    /// Raw `1/k` masses on a uniform grid over `[-clip, clip]`, plus the
    /// mass that fell below and above it.
    Histogram {
        clip: f64,
        masses: Vec<f64>,
        below: f64,
        above: f64,
    },
}

/// One orbit's log-averaged empirical measure. Weights are stored raw and
/// normalized by `H_N` on output, so extending a measure from `N` to `N'`
/// gives exactly the measure built at `N'`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogAvgMeasure {
    repr: Representation,
    n: u64,
    harmonic: KahanSum,
    clip: f64,
    bins: usize,
    exact_limit: u64,
}

impl LogAvgMeasure {
    pub fn new(clip: f64) -> Self {
        Self::with_limits(clip, DEFAULT_BINS, EXACT_ATOM_LIMIT)
    }

    pub fn with_limits(clip: f64, bins: usize, exact_limit: u64) -> Self {
        LogAvgMeasure {
            repr: Representation::ExactAtoms(Vec::new()),
            n: 0,
            harmonic: KahanSum::new(),
            clip,
            bins: bins.max(1),
            exact_limit,
        }
    }

    /// Adds the atom for the next index `k = N + 1` with raw weight `1/k`.
    pub fn push(&mut self, value: f64) {
        self.n += 1;
        let w = 1.0 / self.n as f64;
        self.harmonic.add(w);
        if self.n > self.exact_limit {
            if let Representation::ExactAtoms(atoms) = &mut self.repr {
                let atoms = std::mem::take(atoms);
                self.repr = Representation::Histogram {
                    clip: self.clip,
                    masses: vec![0.0; self.bins],
                    below: 0.0,
                    above: 0.0,
                };
                for a in atoms {
                    self.bin(a.value, a.weight);
                }
            }
        }
        match &mut self.repr {
            Representation::ExactAtoms(atoms) => atoms.push(WeightedAtom { value, weight: w }),
            Representation::Histogram { .. } => self.bin(value, w),
        }
    }

    fn bin(&mut self, value: f64, w: f64) {
        if let Representation::Histogram {
            clip,
            masses,
            below,
            above,
        } = &mut self.repr
        {
            if value < -*clip {
                *below += w;
            } else if value >= *clip {
                *above += w;
            } else {
                let len = masses.len();
                let i = ((value + *clip) / (2.0 * *clip) * len as f64) as usize;
                masses[i.min(len - 1)] += w;
            }
        }
    }

    pub fn extend<I: IntoIterator<Item = f64>>(&mut self, values: I) {
        for v in values {
            self.push(v);
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `H_N`.
    pub fn normalizer(&self) -> f64 {
        self.harmonic.value()
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    /// Normalized atoms. A histogram yields its bin midpoints, with the
    /// clipped masses placed at `-clip` and `+clip`.
    pub fn atoms(&self) -> Vec<WeightedAtom> {
        let h = self.normalizer();
        match &self.repr {
            Representation::ExactAtoms(atoms) => atoms
                .iter()
                .map(|a| WeightedAtom {
                    value: a.value,
                    weight: a.weight / h,
                })
                .collect(),
            Representation::Histogram {
                clip,
                masses,
                below,
                above,
            } => {
                let width = 2.0 * clip / masses.len() as f64;
                let mut out = Vec::with_capacity(masses.len() + 2);
                if *below > 0.0 {
                    out.push(WeightedAtom {
                        value: -clip,
                        weight: below / h,
                    });
                }
                out.extend(masses.iter().enumerate().filter(|(_, &m)| m > 0.0).map(
                    |(i, &m)| WeightedAtom {
                        value: -clip + (i as f64 + 0.5) * width,
                        weight: m / h,
                    },
                ));
                if *above > 0.0 {
                    out.push(WeightedAtom {
                        value: *clip,
                        weight: above / h,
                    });
                }
                out
            }
        }
    }

    /// Total normalized weight; 1 up to rounding.
    pub fn total_weight(&self) -> f64 {
        let mut s = KahanSum::new();
        self.atoms().iter().for_each(|a| s.add(a.weight));
        s.value()
    }

    /// Normalized mass outside `[-clip, clip]`.
    pub fn clipped_mass(&self) -> f64 {
        let h = self.normalizer();
        match &self.repr {
            Representation::ExactAtoms(atoms) => {
                let mut s = KahanSum::new();
                atoms
                    .iter()
                    .filter(|a| a.value.abs() > self.clip)
                    .for_each(|a| s.add(a.weight));
                s.value() / h
            }
            Representation::Histogram { below, above, .. } => (below + above) / h,
        }
    }

    /// Mean and variance of the normalized measure.
    pub fn moments(&self) -> (f64, f64) {
        let atoms = self.atoms();
        let mut m = KahanSum::new();
        atoms.iter().for_each(|a| m.add(a.weight * a.value));
        let mean = m.value();
        let mut v = KahanSum::new();
        atoms
            .iter()
            .for_each(|a| v.add(a.weight * (a.value - mean) * (a.value - mean)));
        (mean, v.value())
    }

    /// KS distance to a target distribution function.
    pub fn ks_to<C: Cdf + ?Sized>(&self, cdf: &C) -> Result<f64> {
        ks_distance_with(&self.atoms(), cdf)
    }
}

/// Builds the measure from `S_1, ..., S_N` with atoms `S_k / B(k)`.
pub fn build_log_measure<I: IntoIterator<Item = f64>>(
    trajectory: I,
    seq: &RenormSeq,
    n: u64,
    clip: f64,
) -> Result<LogAvgMeasure> {
    if n == 0 {
        return Err(Error::invalid("a log-average measure needs N >= 1"));
    }
    let mut m = LogAvgMeasure::new(clip);
    let mut it = trajectory.into_iter();
    for k in 1..=n {
        let s = it
            .next()
            .ok_or_else(|| Error::invalid(format!("trajectory ended before k = {k}")))?;
        m.push(s / seq.eval(k));
    }
    Ok(m)
}

/// Bounded Lipschitz test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TestFn {
    /// `max(0, 1 - |x - center| / half_width)`.
    Tent { center: f64, half_width: f64 },
    /// 1 left of `center - width/2`, 0 right of `center + width/2`, linear between.
    SmoothStep { center: f64, width: f64 },
    Constant { value: f64 },
}

impl TestFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFn::Tent { center, half_width } => (1.0 - (x - center).abs() / half_width).max(0.0),
            TestFn::SmoothStep { center, width } => (0.5 - (x - center) / width).clamp(0.0, 1.0),
            TestFn::Constant { value } => value,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            TestFn::Tent { half_width, .. } => 1.0 / half_width,
            TestFn::SmoothStep { width, .. } => 1.0 / width,
            TestFn::Constant { .. } => 0.0,
        }
    }

    /// Closed support, `None` when unbounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            TestFn::Tent { center, half_width } => Some((center - half_width, center + half_width)),
            _ => None,
        }
    }
}

/// The 17 tents with half-width 1/2 centered at `-4, -3.5, ..., 4`.
pub fn tent_suite() -> Vec<TestFn> {
    (0..17)
        .map(|i| TestFn::Tent {
            center: -4.0 + 0.5 * i as f64,
            half_width: 0.5,
        })
        .collect()
}

/// Smoothed indicators of `(-inf, c]` for `c = -3, ..., 3`.
pub fn step_suite() -> Vec<TestFn> {
    (-3..=3)
        .map(|c| TestFn::SmoothStep {
            center: c as f64,
            width: 0.5,
        })
        .collect()
}

/// Streaming accumulator of
/// `nu_{N, phi, g} = (1/log N) sum_{k <= N} phi(T^k x) g(x_k) / k`
/// for several test functions at once, alongside the `phi = 1` version.
#[derive(Debug, Clone)]
pub struct WeightedLogAverages {
    tests: Vec<TestFn>,
    weighted: Vec<KahanSum>,
    plain: Vec<KahanSum>,
    n: u64,
}

impl WeightedLogAverages {
    pub fn new(tests: Vec<TestFn>) -> Self {
        let m = tests.len();
        WeightedLogAverages {
            tests,
            weighted: vec![KahanSum::new(); m],
            plain: vec![KahanSum::new(); m],
            n: 0,
        }
    }

    /// Next index `k`: `x_k = S_k / B_k` and `phi_k = phi(T^k x)`.
    #[inline]
    pub fn push(&mut self, x_k: f64, phi_k: f64) {
        self.n += 1;
        let w = 1.0 / self.n as f64;
        for (j, g) in self.tests.iter().enumerate() {
            let gx = g.eval(x_k);
            if gx != 0.0 {
                self.weighted[j].add(w * phi_k * gx);
                self.plain[j].add(w * gx);
            }
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn tests(&self) -> &[TestFn] {
        &self.tests
    }

    /// `(nu_{N, phi, g}, nu_{N, 1, g})` per test function.
    pub fn values(&self) -> Result<Vec<(f64, f64)>> {
        if self.n < 2 {
            return Err(Error::invalid("log normalization needs N >= 2"));
        }
        let l = (self.n as f64).ln();
        Ok(self
            .weighted
            .iter()
            .zip(&self.plain)
            .map(|(a, b)| (a.value() / l, b.value() / l))
            .collect())
    }

    /// `max_g |nu_{N, phi, g} - nu_{N, 1, g}|`.
    pub fn max_gap(&self) -> Result<f64> {
        Ok(self
            .values()?
            .iter()
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// `nu_{N, phi, g}` from `S_1..S_N` and `phi(T^1 x)..phi(T^N x)`.
pub fn weighted_log_average<S, P>(
    trajectory: S,
    phi_values: P,
    g: &TestFn,
    seq: &RenormSeq,
    n: u64,
) -> Result<f64>
where
    S: IntoIterator<Item = f64>,
    P: IntoIterator<Item = f64>,
{
    let mut acc = WeightedLogAverages::new(vec![*g]);
    let mut s = trajectory.into_iter();
    let mut p = phi_values.into_iter();
    for k in 1..=n {
        let (sk, pk) = match (s.next(), p.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::invalid(format!("inputs ended before k = {k}"))),
        };
        acc.push(sk / seq.eval(k), pk);
    }
    Ok(acc.values()?[0].0)
}

/// `(1/H_N) sum_k (1/k) exp(i t S_k / B_k)` for each `t`.
pub fn log_avg_charfn<I: IntoIterator<Item = f64>>(
    trajectory: I,
    seq: &RenormSeq,
    n: u64,
    t_grid: &[f64],
) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    let mut re = vec![KahanSum::new(); t_grid.len()];
    let mut im = vec![KahanSum::new(); t_grid.len()];
    let mut h = KahanSum::new();
    let mut it = trajectory.into_iter();
    for k in 1..=n {
        let s = it
            .next()
            .ok_or_else(|| Error::invalid(format!("trajectory ended before k = {k}")))?;
        let x = s / seq.eval(k);
        let w = 1.0 / k as f64;
        h.add(w);
        for (j, &t) in t_grid.iter().enumerate() {
            let (sin, cos) = (t * x).sin_cos();
            re[j].add(w * cos);
            im[j].add(w * sin);
        }
    }
    let h = h.value();
    Ok(re
        .iter()
        .zip(&im)
        .map(|(a, b)| Complex64::new(a.value() / h, b.value() / h))
        .collect())
}

/// Rescaling factors `rho_k` applied to the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum RhoRule {
    One,
    /// `rho_k = 1 + k^(-1/2)`.
    InverseSqrt,
}

impl RhoRule {
    #[inline]
    pub fn rho(&self, k: u64) -> f64 {
        match self {
            RhoRule::One => 1.0,
            RhoRule::InverseSqrt => 1.0 + 1.0 / (k as f64).sqrt(),
        }
    }
}

/// `H_N`-normalized averages of `g(x_k)` and `g(rho_k x_k)`.
pub fn rescale_invariance_check<I: IntoIterator<Item = f64>>(
    trajectory: I,
    seq: &RenormSeq,
    n: u64,
    rho: RhoRule,
    g: &TestFn,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    let (mut a, mut b, mut h) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    let mut it = trajectory.into_iter();
    for k in 1..=n {
        let s = it
            .next()
            .ok_or_else(|| Error::invalid(format!("trajectory ended before k = {k}")))?;
        let x = s / seq.eval(k);
        let w = 1.0 / k as f64;
        h.add(w);
        a.add(w * g.eval(x));
        b.add(w * g.eval(rho.rho(k) * x));
    }
    Ok((a.value() / h.value(), b.value() / h.value()))
}

/// Deterministic bound `Lip(g) R (1/H_N) sum_k |1 - rho_k| / k` on the
/// rescaling gap, `R` being the largest `|x|` in the support of `g` widened
/// by the largest factor `rho_1`.
pub fn rescale_bound(g: &TestFn, rho: RhoRule, n: u64) -> Option<f64> {
    let (lo, hi) = g.support()?;
    let radius = lo.abs().max(hi.abs());
    let (mut s, mut h) = (KahanSum::new(), KahanSum::new());
    for k in 1..=n {
        let w = 1.0 / k as f64;
        h.add(w);
        s.add(w * (rho.rho(k) - 1.0).abs());
    }
    Some(g.lipschitz() * radius * s.value() / h.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::TargetLaw;
    use crate::orbits::{run_orbit, CheckpointGrid};
    use crate::rng::replica_rng;
    use crate::stats::harmonic;
    use crate::systems::{Observable, System};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn doubling_trajectory(n: u64, seed: u64) -> Vec<f64> {
        let grid = CheckpointGrid::explicit(vec![n]).unwrap();
        run_orbit(
            &System::doubling(),
            &Observable::cosine(1),
            n,
            replica_rng(seed, 0),
            &grid,
            true,
        )
        .unwrap()
        .trajectory
        .unwrap()
    }

    #[test]
    fn zero_observable_gives_dirac() {
        let m = build_log_measure(vec![0.0; 1000], &RenormSeq::sqrt(), 1000, DEFAULT_CLIP).unwrap();
        assert_eq!(m.ks_to(&TargetLaw::Dirac0).unwrap(), 0.0);
        assert!((m.total_weight() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn two_term_example() {
        let seq = RenormSeq::sqrt();
        let (a, b) = (0.3, -1.1);
        let m = build_log_measure(vec![a, b * 2f64.sqrt()], &seq, 2, DEFAULT_CLIP).unwrap();
        assert_eq!(m.normalizer(), 1.5);
        let atoms = m.atoms();
        assert_relative_eq!(atoms[0].value, a);
        assert_relative_eq!(atoms[0].weight, 1.0 / 1.5);
        assert_relative_eq!(atoms[1].value, b, epsilon = 1e-15);
        assert_relative_eq!(atoms[1].weight, 0.5 / 1.5);
    }

    #[test]
    fn extension_equals_direct_build() {
        let traj = doubling_trajectory(20_000, 1);
        let seq = RenormSeq::sqrt();
        let direct = build_log_measure(traj.iter().copied(), &seq, 20_000, 20.0).unwrap();
        let mut ext = build_log_measure(traj.iter().copied(), &seq, 5_000, 20.0).unwrap();
        ext.extend((5_001..=20_000u64).map(|k| traj[k as usize - 1] / seq.eval(k)));
        assert_eq!(direct, ext);
        // histogram regime, small limit to keep the test fast
        let mut a = LogAvgMeasure::with_limits(20.0, 400, 100);
        let mut b = LogAvgMeasure::with_limits(20.0, 400, 100);
        let xs: Vec<f64> = (1..=1000u64).map(|k| traj[k as usize - 1] / seq.eval(k)).collect();
        a.extend(xs.iter().copied());
        b.extend(xs[..50].iter().copied());
        b.extend(xs[50..].iter().copied());
        assert_eq!(a, b);
        assert!(matches!(a.representation(), Representation::Histogram { .. }));
        assert!((a.total_weight() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn doubling_asclt_single_orbit() {
        let n = 1_000_000;
        let traj = doubling_trajectory(n, 2);
        let m = build_log_measure(traj, &RenormSeq::sqrt(), n, DEFAULT_CLIP).unwrap();
        let d = m.ks_to(&TargetLaw::gaussian(0.5).unwrap()).unwrap();
        assert!(d <= 0.2, "{d}");
        assert!(m.clipped_mass() <= 0.01);
        let (mean, var) = m.moments();
        assert!(mean.is_finite() && var.is_finite());
    }

    #[test]
    fn harmonic_normalization_example() {
        let n = 100_000u64;
        let v = weighted_log_average(
            vec![0.0; n as usize],
            vec![1.0; n as usize],
            &TestFn::Constant { value: 1.0 },
            &RenormSeq::sqrt(),
            n,
        )
        .unwrap();
        assert_relative_eq!(v, harmonic(n) / (n as f64).ln(), epsilon = 1e-12);
        let gamma = 0.577_215_664_901_532_9;
        assert!((v - (1.0 + gamma / (n as f64).ln())).abs() < 1e-4);
        let zero = weighted_log_average(
            vec![0.0; 100],
            vec![0.0; 100],
            &TestFn::Constant { value: 1.0 },
            &RenormSeq::sqrt(),
            100,
        )
        .unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn charfn_examples() {
        let traj = doubling_trajectory(1_000_000, 3);
        let seq = RenormSeq::sqrt();
        let v = log_avg_charfn(traj.iter().copied(), &seq, 1_000_000, &[0.0, 1.0]).unwrap();
        assert_eq!(v[0], Complex64::new(1.0, 0.0));
        assert!((v[1] - Complex64::new((-0.25f64).exp(), 0.0)).norm() <= 0.15, "{}", v[1]);
        let z = log_avg_charfn(vec![0.0; 10], &seq, 10, &[3.0, -2.0]).unwrap();
        assert!(z.iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn rescale_trivial_cases() {
        let g = TestFn::Tent {
            center: 0.0,
            half_width: 0.5,
        };
        let traj = doubling_trajectory(10_000, 4);
        let (a, b) =
            rescale_invariance_check(traj.iter().copied(), &RenormSeq::sqrt(), 10_000, RhoRule::One, &g)
                .unwrap();
        assert_eq!(a, b);
        let (a, b) = rescale_invariance_check(
            vec![0.0; 500],
            &RenormSeq::sqrt(),
            500,
            RhoRule::InverseSqrt,
            &g,
        )
        .unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-14);
        assert_relative_eq!(b, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn suite_shape() {
        let s = tent_suite();
        assert_eq!(s.len(), 17);
        assert_eq!(s[0].support(), Some((-4.5, -3.5)));
        assert_eq!(s[16].support(), Some((3.5, 4.5)));
        assert_eq!(s[8].eval(0.0), 1.0);
        assert_eq!(s[8].eval(0.25), 0.5);
        assert_eq!(step_suite()[2].eval(-1.0), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn normalized_total_is_one(xs in proptest::collection::vec(-50.0f64..50.0, 1..3000), limit in 1u64..4000) {
            let mut m = LogAvgMeasure::with_limits(20.0, 100, limit);
            m.extend(xs.iter().copied());
            prop_assert!((m.total_weight() - 1.0).abs() <= 1e-12);
            let below_clip = xs.iter().enumerate().filter(|(_, x)| x.abs() > 20.0)
                .map(|(k, _)| 1.0 / (k + 1) as f64).sum::<f64>() / m.normalizer();
            if m.n() <= limit {
                prop_assert!((m.clipped_mass() - below_clip).abs() <= 1e-12);
            }
        }
    }
}

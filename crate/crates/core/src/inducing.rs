//! First-return maps `T_Y y = T^phi(y) y` on unions of cylinders, induced
//! observables `f_Y = sum_{k < phi} f∘T^k`, Kac checks and the experiments
//! comparing induced and direct limit laws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asmeasure::{LogAvgMeasure, DEFAULT_CLIP};
use crate::error::{Error, Result};
use crate::laws::Cdf;
use crate::orbits::{run_orbit_from, CheckpointGrid, OrbitStats, ProfileRow};
use crate::renorm::RenormSeq;
use crate::rng::{derive_seed, replica_rng, LabRng};
use crate::stats::{batch_means, block_bootstrap_stderr, mean, KahanSum};
use crate::systems::{Alphabet, Observable, Point, System};

/// Default guard on a single return time.
pub const DEFAULT_RETURN_CAP: u64 = 100_000_000;

/// A union of depth-`depth` cylinders, given by their itinerary codes.
/// Depth 0 with code 0 is the whole space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnSet {
    pub depth: u32,
    pub codes: Vec<u64>,
}

impl ReturnSet {
    pub fn whole() -> Self {
        ReturnSet {
            depth: 0,
            codes: vec![0],
        }
    }

    pub fn cylinders(depth: u32, mut codes: Vec<u64>) -> Result<Self> {
        codes.sort_unstable();
        codes.dedup();
        if codes.is_empty() {
            return Err(Error::invalid("return set needs at least one cylinder"));
        }
        Ok(ReturnSet { depth, codes })
    }

    pub fn is_whole(&self, system: &System) -> bool {
        match system.cell_count() {
            Some(k) => self.codes.len() as f64 == (k as f64).powi(self.depth as i32),
            None => self.depth == 0,
        }
    }

    #[inline]
    pub fn contains(&self, system: &System, point: &Point) -> Result<bool> {
        if self.depth == 0 {
            return Ok(true);
        }
        let code = system.itinerary(point, self.depth)?;
        Ok(self.codes.binary_search(&code).is_ok())
    }

    /// `m(Y)` in closed form, when the invariant measure of cylinders is known.
    pub fn exact_measure(&self, system: &System) -> Option<f64> {
        if self.is_whole(system) {
            return Some(1.0);
        }
        match system {
            System::Doubling => Some(self.codes.len() as f64 / 2f64.powi(self.depth as i32)),
            System::BernoulliShift {
                alphabet: alphabet @ Alphabet::Finite { probs },
                ..
            } => {
                let k = probs.len() as u64;
                Some(
                    self.codes
                        .iter()
                        .map(|&c| {
                            let mut code = c;
                            let mut m = 1.0;
                            for _ in 0..self.depth {
                                m *= alphabet.prob((code % k) as usize);
                                code /= k;
                            }
                            m
                        })
                        .sum(),
                )
            }
            _ => None,
        }
    }
}

/// A base system with a return set and its measure.
#[derive(Debug, Clone)]
pub struct InducedSystem {
    pub base: System,
    pub y: ReturnSet,
    /// `m(Y)`.
    pub measure: f64,
    /// Standard error of `measure`; 0 when exact.
    pub measure_stderr: f64,
    pub cap: u64,
}

impl InducedSystem {
    /// Uses the closed-form `m(Y)`; fails when none is available.
    pub fn new(base: System, y: ReturnSet) -> Result<Self> {
        let measure = y.exact_measure(&base).ok_or_else(|| {
            Error::UnsupportedSystem(format!(
                "no closed-form m(Y) on {}; use with_estimated_measure",
                base.name()
            ))
        })?;
        Self::checked(base, y, measure, 0.0)
    }

    /// Estimates `m(Y)` as the visit frequency along one orbit of `steps`
    /// steps, with a batch-means standard error.
    pub fn with_estimated_measure(base: System, y: ReturnSet, steps: u64, seed: u64) -> Result<Self> {
        let mut p = base.sample_invariant(replica_rng(seed, 0));
        let mut visits = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            visits.push(if y.contains(&base, &p)? { 1.0 } else { 0.0 });
            base.step(&mut p);
        }
        let bm = batch_means(&visits, (steps as usize / 100).max(1))?;
        Self::checked(base, y, bm.mean, bm.mean_stderr)
    }

    fn checked(base: System, y: ReturnSet, measure: f64, stderr: f64) -> Result<Self> {
        if !(measure > 0.0 && measure <= 1.0) {
            return Err(Error::invalid(format!("return set has measure {measure}")));
        }
        Ok(InducedSystem {
            base,
            y,
            measure,
            measure_stderr: stderr,
            cap: DEFAULT_RETURN_CAP,
        })
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    /// Point distributed according to `m_Y = m(Y)^-1 m|_Y`, by rejection.
    /// The first attempt uses `rng` itself, so on the whole space this is
    /// exactly `sample_invariant(rng)`.
    pub fn sample_in_y(&self, rng: LabRng, seed: u64, index: u64) -> Result<Point> {
        let p = self.base.sample_invariant(rng);
        if self.y.contains(&self.base, &p)? {
            return Ok(p);
        }
        for attempt in 1..1_000_000u64 {
            let p = self
                .base
                .sample_invariant(replica_rng(derive_seed(seed, attempt), index));
            if self.y.contains(&self.base, &p)? {
                return Ok(p);
            }
        }
        Err(Error::invalid("rejection sampling of Y failed; m(Y) too small"))
    }
}

/// One excursion from `Y` back to `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excursion {
    /// Return time `phi(y)`.
    pub phi: u64,
    /// `f_Y(y)`.
    pub f_y: f64,
    /// `max_{1 <= k <= phi} |S_k f(y)|`.
    pub max: f64,
}

/// Advances `y` (which must lie in `Y`) to `T_Y y`.
pub fn induce_step(ind: &InducedSystem, observable: &Observable, y: &mut Point) -> Result<Excursion> {
    let sys = &ind.base;
    if !ind.y.contains(sys, y)? {
        return Err(Error::invalid("induce_step needs a starting point in Y"));
    }
    let mut s = 0.0;
    let mut max = 0.0f64;
    let mut phi = 0u64;
    loop {
        s += observable.eval(sys, y);
        max = max.max(s.abs());
        sys.step(y);
        phi += 1;
        if ind.y.contains(sys, y)? {
            return Ok(Excursion { phi, f_y: s, max });
        }
        if phi >= ind.cap {
            return Err(Error::CapExceeded(ind.cap));
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KacRecord {
    pub mean_phi: f64,
    pub m_y: f64,
    pub product: f64,
    /// Block-bootstrap standard error of `product`, including the error of
    /// an estimated `m(Y)`.
    pub stderr: f64,
    pub n_returns: usize,
    /// `counts[k - 1]` returns with `phi = k`, for `k <= counts.len()`.
    pub counts: Vec<u64>,
}

/// Mean return time along one induced orbit of `n_returns` returns.
pub fn kac_check(ind: &InducedSystem, n_returns: usize, seed: u64) -> Result<KacRecord> {
    if n_returns < 1000 {
        return Err(Error::invalid("Kac check needs at least 1e3 returns"));
    }
    let zero = Observable::constant(0.0);
    let mut y = ind.sample_in_y(replica_rng(seed, 0), seed, 0)?;
    let mut phis = Vec::with_capacity(n_returns);
    let mut counts = vec![0u64; 64];
    for _ in 0..n_returns {
        let e = induce_step(ind, &zero, &mut y)?;
        if e.phi as usize <= counts.len() {
            counts[e.phi as usize - 1] += 1;
        }
        phis.push(e.phi as f64);
    }
    let mean_phi = mean(&phis)?;
    let block = (n_returns / 1000).max(1);
    let mut rng = replica_rng(derive_seed(seed, 1), 0);
    let se_phi = block_bootstrap_stderr(&phis, block, 200, &mut rng)?;
    let product = mean_phi * ind.measure;
    let rel = ((se_phi / mean_phi).powi(2) + (ind.measure_stderr / ind.measure).powi(2)).sqrt();
    Ok(KacRecord {
        mean_phi,
        m_y: ind.measure,
        product,
        stderr: product * rel,
        n_returns,
        counts,
    })
}

/// `(n, c, n m{M >= c B(n)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub n: u64,
    pub c: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct LiftResult {
    /// `S^Y_{floor(n m(Y))} f_Y / B(n)` per replica.
    pub induced: Vec<f64>,
    /// `S_n f / B(n)` per replica.
    pub direct: Vec<f64>,
    /// Tight-maxima profile of the induced sums with scaling `B(k / m(Y))`.
    pub induced_profile: Vec<ProfileRow>,
    /// Excursion-maximum condition on the `(n, c)` grid.
    pub condition: Vec<ConditionRow>,
}

/// Paired replica samples of induced and direct normalized sums.
#[allow(clippy::too_many_arguments)]
pub fn lift_experiment(
    ind: &InducedSystem,
    observable: &Observable,
    seq: &RenormSeq,
    n: u64,
    replicas: usize,
    seed: u64,
    c_grid: &[f64],
    n_grid: &[u64],
) -> Result<LiftResult> {
    let steps = ((n as f64 * ind.measure).floor() as u64).max(1);
    let b = seq.eval(n);
    let grid = CheckpointGrid::geometric(steps);
    let sys = &ind.base;
    type Replica = (f64, f64, OrbitStats, Vec<f64>);
    let runs: Result<Vec<Replica>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut y = ind.sample_in_y(replica_rng(seed, i), seed, i)?;
            let mut stats = OrbitStats::new();
            let mut maxima = Vec::with_capacity(steps as usize);
            for _ in 0..steps {
                let e = induce_step(ind, observable, &mut y)?;
                stats.push(e.f_y, &grid);
                maxima.push(e.max);
            }
            let mut x = sys.sample_invariant(replica_rng(seed, i));
            let direct = run_orbit_from(sys, observable, &mut x, n, &grid, |_, _, _| {});
            Ok((stats.sum() / b, direct.sum() / b, stats, maxima))
        })
        .collect();
    let runs = runs?;
    let stats: Vec<OrbitStats> = runs.iter().map(|r| r.2.clone()).collect();
    let m = ind.measure;
    let induced_profile =
        crate::orbits::tight_maxima_profile_with(&stats, |k| seq.eval_at(k as f64 / m), c_grid)?;
    let mut all_max: Vec<f64> = runs.iter().flat_map(|r| r.3.iter().copied()).collect();
    all_max.sort_unstable_by(|a, b| a.total_cmp(b));
    let total = all_max.len() as f64;
    let mut condition = Vec::new();
    for &c in c_grid {
        for &nn in n_grid {
            let thr = c * seq.eval(nn);
            let above = all_max.len() - all_max.partition_point(|&v| v < thr);
            condition.push(ConditionRow {
                n: nn,
                c,
                value: nn as f64 * m * above as f64 / total,
            });
        }
    }
    Ok(LiftResult {
        induced: runs.iter().map(|r| r.0).collect(),
        direct: runs.iter().map(|r| r.1).collect(),
        induced_profile,
        condition,
    })
}

/// Per-seed KS distances of the log-average measures on `Y` (induced sums,
/// scaling `B(k / m(Y))`, `N` returns) and on the whole space (`N` steps).
pub fn asclt_lift_experiment<C: Cdf + Sync + ?Sized>(
    ind: &InducedSystem,
    observable: &Observable,
    seq: &RenormSeq,
    target: &C,
    n: u64,
    seeds: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n < 100_000 {
        return Err(Error::invalid("ASCLT lift needs N >= 1e5"));
    }
    let m = ind.measure;
    let sys = &ind.base;
    (0..seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut y = ind.sample_in_y(replica_rng(seed, i), seed, i)?;
            let mut induced = LogAvgMeasure::new(DEFAULT_CLIP);
            let mut s = KahanSum::new();
            for k in 1..=n {
                s.add(induce_step(ind, observable, &mut y)?.f_y);
                induced.push(s.value() / seq.eval_at(k as f64 / m));
            }
            let mut direct = LogAvgMeasure::new(DEFAULT_CLIP);
            let mut x = sys.sample_invariant(replica_rng(seed, i));
            let grid = CheckpointGrid::explicit(vec![])?;
            run_orbit_from(sys, observable, &mut x, n, &grid, |k, sk, _| {
                direct.push(sk / seq.eval(k));
            });
            Ok((induced.ks_to(target)?, direct.ks_to(target)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{ks_sample, TargetLaw};
    use crate::orbits::run_orbit;

    fn doubling_half() -> InducedSystem {
        InducedSystem::new(System::doubling(), ReturnSet::cylinders(1, vec![1]).unwrap()).unwrap()
    }

    #[test]
    fn whole_space_is_trivial() {
        let ind = InducedSystem::new(System::doubling(), ReturnSet::whole()).unwrap();
        let f = Observable::cosine(1);
        let mut y = ind.sample_in_y(replica_rng(1, 0), 1, 0).unwrap();
        for _ in 0..100 {
            let before = f.eval(&ind.base, &y);
            let e = induce_step(&ind, &f, &mut y).unwrap();
            assert_eq!(e.phi, 1);
            assert_eq!(e.f_y, before);
            assert_eq!(e.max, before.abs());
        }
        let k = kac_check(&ind, 1000, 2).unwrap();
        assert_eq!(k.product, 1.0);
    }

    #[test]
    fn return_law_is_geometric() {
        let ind = doubling_half();
        let k = kac_check(&ind, 1_000_000, 3).unwrap();
        for j in 1..=10 {
            let p = k.counts[j - 1] as f64 / 1e6;
            let exact = 0.5f64.powi(j as i32);
            assert!((p - exact).abs() <= 0.01);
            let se = (exact * (1.0 - exact) / 1e6).sqrt();
            assert!((p - exact).abs() <= 4.5 * se, "k={j} {p}");
        }
        assert!((k.product - 1.0).abs() <= 3.0 * k.stderr, "{k:?}");
        assert!((k.mean_phi - 2.0).abs() <= 0.01 * 2.0);
    }

    #[test]
    fn kac_quarter_cell() {
        let ind =
            InducedSystem::new(System::doubling(), ReturnSet::cylinders(2, vec![0]).unwrap())
                .unwrap();
        assert_eq!(ind.measure, 0.25);
        let k = kac_check(&ind, 200_000, 4).unwrap();
        assert!((k.mean_phi - 4.0).abs() <= 0.02 * 4.0);
        assert!((k.product - 1.0).abs() <= 3.0 * k.stderr, "{k:?}");
    }

    #[test]
    fn lsv_return_tail_slope() {
        let alpha = 0.3;
        let sys = System::lsv(alpha).unwrap();
        let ind = InducedSystem::with_estimated_measure(
            sys,
            ReturnSet::cylinders(1, vec![1]).unwrap(),
            1_000_000,
            5,
        )
        .unwrap();
        let zero = Observable::constant(0.0);
        let mut y = ind.sample_in_y(replica_rng(6, 0), 6, 0).unwrap();
        let returns = 4_000_000;
        let mut phis: Vec<u64> = (0..returns)
            .map(|_| induce_step(&ind, &zero, &mut y).unwrap().phi)
            .collect();
        phis.sort_unstable();
        let tail = |n: u64| (phis.len() - phis.partition_point(|&p| p <= n)) as f64 / returns as f64;
        // tails beyond n ~ 100 are too thin to resolve at this sample size
        let ns = [10u64, 20, 40, 80];
        let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let yv: Vec<f64> = ns.iter().map(|&n| tail(n).ln()).collect();
        let (slope, _) = crate::stats::ols(&x, &yv).unwrap();
        assert!((slope + 1.0 / alpha).abs() <= 0.1 / alpha, "{slope}");
    }

    #[test]
    fn telescoping_and_return_times() {
        let ind = doubling_half();
        let f = Observable::fourier(vec![(1, 1.0), (2, 0.5)]);
        let mut y = ind.sample_in_y(replica_rng(7, 0), 7, 0).unwrap();
        let mut direct_point = y.clone();
        let mut fy_sum = 0.0;
        let mut t = 0u64;
        let mut abs_sum = 0.0;
        for _ in 0..2000 {
            let start = y.clone();
            let e = induce_step(&ind, &f, &mut y).unwrap();
            fy_sum += e.f_y;
            t += e.phi;
            // M is bounded by the excursion sum of |f|
            let mut p = start;
            let mut excursion_abs = 0.0;
            for _ in 0..e.phi {
                excursion_abs += f.eval(&ind.base, &p).abs();
                ind.base.step(&mut p);
            }
            assert!(e.max <= excursion_abs);
            abs_sum += excursion_abs;
        }
        let grid = CheckpointGrid::explicit(vec![t]).unwrap();
        let stats = run_orbit_from(&ind.base, &f, &mut direct_point, t, &grid, |_, _, _| {});
        assert!((stats.sum() - fy_sum).abs() <= 1e-9 * t as f64);
        assert!(abs_sum > 0.0);
        // the base orbit is back in Y exactly at the summed return time
        assert!(ind.y.contains(&ind.base, &direct_point).unwrap());
    }

    #[test]
    fn cap_exceeded_is_an_error() {
        let ind = doubling_half().with_cap(3);
        let zero = Observable::constant(0.0);
        let mut y = Point::doubling_bits(&[1, 0, 0, 0, 0, 1], replica_rng(8, 0));
        assert!(matches!(induce_step(&ind, &zero, &mut y), Err(Error::CapExceeded(3))));
    }

    #[test]
    fn lift_whole_space_coincides() {
        let ind = InducedSystem::new(System::doubling(), ReturnSet::whole()).unwrap();
        let r = lift_experiment(
            &ind,
            &Observable::cosine(1),
            &RenormSeq::sqrt(),
            256,
            20,
            9,
            &[1.0],
            &[10, 100],
        )
        .unwrap();
        assert_eq!(r.induced, r.direct);
        let seeds = asclt_lift_experiment(
            &ind,
            &Observable::cosine(1),
            &RenormSeq::sqrt(),
            &TargetLaw::gaussian(0.5).unwrap(),
            100_000,
            2,
            10,
        )
        .unwrap();
        for (a, b) in seeds {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lift_doubling_half_cell() {
        let ind = doubling_half();
        let n = 1 << 14;
        let r = lift_experiment(
            &ind,
            &Observable::cosine(1),
            &RenormSeq::sqrt(),
            n,
            4000,
            11,
            &[2.0, 4.0],
            &[100, 1000, 10_000],
        )
        .unwrap();
        let law = TargetLaw::gaussian(0.5).unwrap();
        let (mut a, mut b) = (r.induced.clone(), r.direct.clone());
        // 4000 replicas: KS noise around 0.014
        assert!(ks_sample(&mut a, &law).unwrap() <= 0.03);
        assert!(ks_sample(&mut b, &law).unwrap() <= 0.03);
        let sup = r
            .condition
            .iter()
            .filter(|c| c.c == 4.0)
            .fold(0.0f64, |m, c| m.max(c.value));
        assert!(sup < 0.05, "{sup}");
        let _ = run_orbit;
    }
}

//! Gordin's decomposition and reverse martingale differences.
//!
//! With `g = sum_{n>=1} L^n f` the function `h = f + g - g∘T` satisfies
//! `Lh = Lf + (g - Lf) - g = 0`, so `f = h - g + g∘T` and `h∘T^n` is a
//! reverse martingale difference for the filtration `T^-n B`. Writing the
//! coboundary the other way round (`f = g' - g'∘T + h`) only flips the sign
//! of `g`; this module always uses the `h = f + g - g∘T` form.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asmeasure::{LogAvgMeasure, DEFAULT_CLIP};
use crate::error::{Error, Result};
use crate::laws::{ks_weighted_two_sample, TargetLaw};
use crate::renorm::RenormSeq;
use crate::rng::replica_rng;
use crate::spectral::{cell_averages, UlamOperator};
use crate::stats::{mean, KahanSum};
use crate::systems::{Observable, ObservableKind, System};

/// Neumann-sum truncation target for grid decompositions.
pub const GRID_RESIDUAL: f64 = 1e-8;
const MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum Representation {
    /// Finite cosine sums on the doubling map, where `L cos(2 pi k x)` is
    /// `cos(pi k x)` for even `k` and 0 for odd `k`.
    FourierExact,
    /// Cell averages on an Ulam grid of the given size.
    UlamGrid { grid: usize },
}

/// A function in one of the two representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionRep {
    /// `(k, a_k)` with `f = sum a_k cos(2 pi k x)`, `k >= 1`, sorted by `k`.
    Fourier(Vec<(u32, f64)>),
    /// Values on the uniform grid.
    Grid(Vec<f64>),
}

impl FunctionRep {
    pub fn observable(&self) -> Observable {
        match self {
            FunctionRep::Fourier(terms) => Observable::fourier(terms.clone()),
            FunctionRep::Grid(values) => ObservableKind::GridFunction {
                values: values.clone(),
            }
            .into(),
        }
    }

    pub fn sup_bound(&self) -> f64 {
        match self {
            FunctionRep::Fourier(t) => t.iter().fold(0.0, |s, (_, a)| s + a.abs()),
            FunctionRep::Grid(v) => v.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionRep::Fourier(t) => t
                .iter()
                .map(|&(k, a)| a * (std::f64::consts::TAU * k as f64 * x).cos())
                .sum(),
            FunctionRep::Grid(v) => v[((x * v.len() as f64) as usize).min(v.len() - 1)],
        }
    }

    /// Coefficients, if Fourier.
    pub fn coefficients(&self) -> Option<&[(u32, f64)]> {
        match self {
            FunctionRep::Fourier(t) => Some(t),
            FunctionRep::Grid(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GordinDecomposition {
    pub system: System,
    /// The observable that was decomposed.
    pub observable: Observable,
    /// `f` in the chosen representation (cell averages on a grid).
    pub f: FunctionRep,
    pub g: FunctionRep,
    pub h: FunctionRep,
    /// Number of Neumann terms summed.
    pub k_truncation: usize,
    /// Bound on `||sum_{n > K} L^n f||_inf`.
    pub residual_norm: f64,
    op: Option<UlamOperator>,
}

type Coeffs = BTreeMap<u32, f64>;

fn transfer(c: &Coeffs) -> Coeffs {
    c.iter()
        .filter(|(k, _)| *k % 2 == 0)
        .map(|(k, a)| (k / 2, *a))
        .collect()
}

fn compose_t(c: &Coeffs) -> Coeffs {
    c.iter().map(|(k, a)| (2 * k, *a)).collect()
}

fn add_into(acc: &mut Coeffs, c: &Coeffs, sign: f64) {
    for (k, a) in c {
        *acc.entry(*k).or_insert(0.0) += sign * a;
    }
}

fn to_rep(c: Coeffs) -> FunctionRep {
    FunctionRep::Fourier(c.into_iter().filter(|(_, a)| *a != 0.0).collect())
}

/// Builds `g = sum_{1 <= n <= K} L^n f` and `h = f + g - g∘T`.
pub fn gordin_decompose(
    system: &System,
    observable: &Observable,
    k_max: usize,
    representation: Representation,
) -> Result<GordinDecomposition> {
    match representation {
        Representation::FourierExact => fourier_decompose(system, observable),
        Representation::UlamGrid { grid } => grid_decompose(system, observable, k_max, grid),
    }
}

fn fourier_decompose(system: &System, observable: &Observable) -> Result<GordinDecomposition> {
    let terms = match (&system, &observable.kind) {
        (System::Doubling, ObservableKind::FourierSum { terms }) => terms,
        (System::Doubling, ObservableKind::Constant { value }) if *value == observable.offset => {
            &Vec::new()
        }
        _ => {
            return Err(Error::UnsupportedSystem(
                "exact Fourier decomposition needs a cosine sum on the doubling map".into(),
            ))
        }
    };
    let constant: f64 = terms.iter().filter(|t| t.0 == 0).map(|t| t.1).sum();
    if (constant - observable.offset).abs() > 1e-15 {
        return Err(Error::invalid("Gordin decomposition needs a centered observable"));
    }
    let mut f = Coeffs::new();
    for &(k, a) in terms.iter().filter(|t| t.0 > 0) {
        *f.entry(k).or_insert(0.0) += a;
    }
    let mut g = Coeffs::new();
    let mut power = transfer(&f);
    let mut k = 0;
    // each application halves the frequencies, so this terminates
    while !power.is_empty() {
        add_into(&mut g, &power, 1.0);
        power = transfer(&power);
        k += 1;
    }
    let mut h = f.clone();
    add_into(&mut h, &g, 1.0);
    add_into(&mut h, &compose_t(&g), -1.0);
    Ok(GordinDecomposition {
        system: system.clone(),
        observable: observable.clone(),
        f: to_rep(f),
        g: to_rep(g),
        h: to_rep(h),
        k_truncation: k,
        residual_norm: 0.0,
        op: None,
    })
}

fn grid_decompose(
    system: &System,
    observable: &Observable,
    k_max: usize,
    grid: usize,
) -> Result<GordinDecomposition> {
    if matches!(system, System::BernoulliShift { .. }) {
        return Err(Error::UnsupportedSystem(
            "grid decompositions are defined for interval maps".into(),
        ));
    }
    let op = UlamOperator::build(system, observable, 0.0, grid)?;
    let mu = op.masses().to_vec();
    let raw = cell_averages(&op, observable);
    let m: f64 = raw.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let f: Vec<f64> = raw.iter().map(|v| v - m).collect();
    let scale = f.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let mut g = vec![0.0; f.len()];
    let mut power = op.apply_real(&f);
    let mut prev = sup(&f);
    let mut k = 0;
    let mut residual = f64::INFINITY;
    let limit = k_max.clamp(1, MAX_TERMS);
    while k < limit {
        let norm = sup(&power);
        g.iter_mut().zip(&power).for_each(|(a, b)| *a += b);
        k += 1;
        let next = op.apply_real(&power);
        let next_norm = sup(&next);
        let rho = if norm > 0.0 { next_norm / norm } else { 0.0 };
        if next_norm == 0.0 || (rho < 1.0 && next_norm / (1.0 - rho) <= GRID_RESIDUAL * scale) {
            residual = if next_norm == 0.0 { 0.0 } else { next_norm / (1.0 - rho) };
            break;
        }
        if k >= 50 && norm >= prev {
            return Err(Error::NoDecay(k));
        }
        if k % 50 == 0 {
            prev = norm;
        }
        power = next;
    }
    if !residual.is_finite() {
        return Err(Error::NoDecay(k));
    }
    let g_t = op.compose_real(&g);
    let h: Vec<f64> = (0..f.len()).map(|i| f[i] + g[i] - g_t[i]).collect();
    Ok(GordinDecomposition {
        system: system.clone(),
        observable: observable.clone(),
        f: FunctionRep::Grid(f),
        g: FunctionRep::Grid(g),
        h: FunctionRep::Grid(h),
        k_truncation: k,
        residual_norm: residual,
        op: Some(op),
    })
}

impl GordinDecomposition {
    /// `sup |Lh|` in the representation (0 exactly for Fourier sums). On a
    /// grid `g∘T` is replaced by its cell projection, which commutes with the
    /// transfer operator only on the doubling map; elsewhere this carries a
    /// discretization error that shrinks with the grid.
    pub fn transfer_of_h_sup(&self) -> f64 {
        match (&self.h, &self.op) {
            (FunctionRep::Fourier(t), _) => {
                let c: Coeffs = t.iter().copied().collect();
                to_rep(transfer(&c)).sup_bound()
            }
            (FunctionRep::Grid(v), Some(op)) => FunctionRep::Grid(op.apply_real(v)).sup_bound(),
            (FunctionRep::Grid(_), None) => f64::NAN,
        }
    }

    /// `int |Lh| dm` on a grid; the sup-norm counterpart is dominated by the
    /// cells next to an indifferent fixed point.
    pub fn transfer_of_h_l1(&self) -> f64 {
        match (&self.h, &self.op) {
            (FunctionRep::Grid(v), Some(op)) => op
                .apply_real(v)
                .iter()
                .zip(op.masses())
                .map(|(a, m)| a.abs() * m)
                .sum(),
            _ => self.transfer_of_h_sup(),
        }
    }

    /// `sup |L f + L g - g|`, the Neumann truncation defect. Because
    /// `L(g∘T) = g` holds for every `g`, this is `sup |Lh|` computed with the
    /// exact composition instead of its grid projection.
    pub fn neumann_defect(&self) -> f64 {
        match (&self.f, &self.g, &self.op) {
            (FunctionRep::Grid(f), FunctionRep::Grid(g), Some(op)) => {
                let s: Vec<f64> = f.iter().zip(g).map(|(a, b)| a + b).collect();
                op.apply_real(&s)
                    .iter()
                    .zip(g)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            }
            _ => self.transfer_of_h_sup(),
        }
    }

    /// `E h^2`.
    pub fn h_second_moment(&self) -> f64 {
        match (&self.h, &self.op) {
            (FunctionRep::Fourier(t), _) => {
                let mut s = KahanSum::new();
                t.iter().for_each(|(_, a)| s.add(0.5 * a * a));
                s.value()
            }
            (FunctionRep::Grid(v), Some(op)) => {
                v.iter().zip(op.masses()).map(|(h, m)| h * h * m).sum()
            }
            (FunctionRep::Grid(_), None) => f64::NAN,
        }
    }

    /// Sup of `|f - (h - g + g∘T)|`. Fourier: over `samples` invariant
    /// points. Grid: over the cells, with `g∘T` the discrete Koopman image.
    pub fn identity_residual(&self, samples: usize, seed: u64) -> f64 {
        match &self.op {
            Some(op) => {
                let (FunctionRep::Grid(f), FunctionRep::Grid(g), FunctionRep::Grid(h)) =
                    (&self.f, &self.g, &self.h)
                else {
                    return f64::NAN;
                };
                let gt = op.compose_real(g);
                (0..f.len())
                    .map(|i| (f[i] - (h[i] - g[i] + gt[i])).abs())
                    .fold(0.0, f64::max)
            }
            None => {
                let (f, g, h) = (self.f.observable(), self.g.observable(), self.h.observable());
                let sys = &self.system;
                (0..samples as u64)
                    .into_par_iter()
                    .map(|i| {
                        let mut p = sys.sample_invariant(replica_rng(seed, i));
                        let (fx, gx, hx) = (f.eval(sys, &p), g.eval(sys, &p), h.eval(sys, &p));
                        sys.step(&mut p);
                        (fx - (hx - gx + g.eval(sys, &p))).abs()
                    })
                    .reduce(|| 0.0, f64::max)
            }
        }
    }

    /// Writes `(x, g(x), h(x))` at `points` cell midpoints.
    pub fn to_csv<W: std::io::Write>(&self, writer: W, points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "g", "h"])?;
        for i in 0..points {
            let x = (i as f64 + 0.5) / points as f64;
            w.serialize((x, self.g.eval(x), self.h.eval(x)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Conditional-mean cell test at one resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalRow {
    pub resolution: usize,
    pub cell: usize,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReverseMdDiagnostics {
    /// `sup |Lh|`.
    pub transfer_sup: f64,
    /// `E^(h(x) | cell of Tx)` for resolutions 2, 4, 8.
    pub conditional: Vec<ConditionalRow>,
    /// Every conditional mean within 3 standard errors of 0.
    pub conditional_pass: bool,
    /// Sample variance of `S_n h / sqrt(n)`.
    pub variance: f64,
    pub variance_stderr: f64,
    /// `E h^2`.
    pub second_moment: f64,
}

/// Checks `Lh = 0` in three ways.
pub fn verify_reverse_md(
    dec: &GordinDecomposition,
    replicas: usize,
    n: u64,
    seed: u64,
) -> Result<ReverseMdDiagnostics> {
    if replicas < 2 || n == 0 {
        return Err(Error::invalid("need at least two replicas and n >= 1"));
    }
    let sys = &dec.system;
    let h = dec.h.observable();
    // (h(x), coordinate of Tx, S_n h / sqrt n)
    let runs: Vec<(f64, f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut p = sys.sample_invariant(replica_rng(seed, i));
            let h0 = h.eval(sys, &p);
            let mut s = KahanSum::new();
            s.add(h0);
            sys.step(&mut p);
            let y = sys.coordinate(&p);
            for _ in 1..n {
                s.add(h.eval(sys, &p));
                sys.step(&mut p);
            }
            (h0, y, s.value() / (n as f64).sqrt())
        })
        .collect();
    let mut conditional = Vec::new();
    for r in [2usize, 4, 8] {
        let mut cells = vec![Vec::new(); r];
        for &(h0, y, _) in &runs {
            cells[((y * r as f64) as usize).min(r - 1)].push(h0);
        }
        for (cell, v) in cells.into_iter().enumerate() {
            let count = v.len();
            let (m, se) = if count >= 2 {
                let m = mean(&v)?;
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (count - 1) as f64;
                (m, (var / count as f64).sqrt())
            } else {
                (0.0, 0.0)
            };
            conditional.push(ConditionalRow {
                resolution: r,
                cell,
                mean: m,
                stderr: se,
                count,
            });
        }
    }
    let conditional_pass = conditional
        .iter()
        .all(|c| c.mean.abs() <= 3.0 * c.stderr || c.mean.abs() <= 1e-12);
    let sums: Vec<f64> = runs.iter().map(|r| r.2).collect();
    let m = mean(&sums)?;
    let rn = sums.len() as f64;
    let var = sums.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (rn - 1.0);
    let m4 = sums.iter().map(|x| (x - m).powi(4)).sum::<f64>() / rn;
    Ok(ReverseMdDiagnostics {
        transfer_sup: dec.transfer_of_h_sup(),
        conditional,
        conditional_pass,
        variance: var,
        variance_stderr: ((m4 - var * var).max(0.0) / rn).sqrt(),
        second_moment: dec.h_second_moment(),
    })
}

/// Source of the differences `Z_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "generator")]
pub enum MdGenerator {
    /// Independent draws from `law`.
    Iid { law: TargetLaw },
    /// `Z_j = h(T^(j-1) x)` with `x` invariant and `Lh = 0`.
    Dynamical { system: System, h: Observable },
}

/// A reverse martingale difference stream with `B_k = sqrt(k)`, weights
/// `b_k = 1/k` and constant limiting variance `zeta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReverseMdStream {
    #[serde(flatten)]
    pub generator: MdGenerator,
    pub zeta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReverseMdSeed {
    pub seed_index: u64,
    /// KS of the log-average measure against `N(0, zeta)`.
    pub ks: f64,
    /// `(k, max_{j<=k} Z_j^2 / B_k^2)` at decade checkpoints.
    pub max_ratio: Vec<(u64, f64)>,
    /// `(k, sum_{j<=k} Z_j^2 / B_k^2)` at the same checkpoints.
    pub quadratic_variation: Vec<(u64, f64)>,
}

impl ReverseMdSeed {
    /// `Z_n / B_n -> 0`: the max ratio at the last checkpoint is below the
    /// first one (or identically 0).
    pub fn negligible_trend(&self) -> bool {
        match (self.max_ratio.first(), self.max_ratio.last()) {
            (Some(a), Some(b)) => b.1 < a.1 || (a.1 == 0.0 && b.1 == 0.0),
            _ => false,
        }
    }

    /// Final quadratic variation within `rel` of `zeta`.
    pub fn variation_matches(&self, zeta: f64, rel: f64) -> bool {
        match self.quadratic_variation.last() {
            Some(&(_, q)) if zeta > 0.0 => (q / zeta - 1.0).abs() <= rel,
            Some(&(_, q)) => q == 0.0,
            None => false,
        }
    }
}

fn decade_checkpoints(n: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(100u64), |k| k.checked_mul(10))
        .take_while(|&k| k < n)
        .collect();
    out.push(n);
    out
}

/// Per-seed KS of `(1/H_N) sum (1/k) delta_{sum_{j<=k} Z_j / sqrt(k)}`
/// against `N(0, zeta)`.
pub fn reverse_md_asclt(
    stream: &ReverseMdStream,
    n: u64,
    seeds: usize,
    seed: u64,
) -> Result<Vec<ReverseMdSeed>> {
    if !(stream.zeta >= 0.0) {
        return Err(Error::invalid("zeta must be nonnegative"));
    }
    if let MdGenerator::Iid { law } = &stream.generator {
        law.validate()?;
    }
    let target = TargetLaw::Gaussian { sigma2: stream.zeta };
    let checkpoints = decade_checkpoints(n);
    (0..seeds as u64)
        .into_par_iter()
        .map(|i| {
            let rng = replica_rng(seed, i);
            let mut next: Box<dyn FnMut() -> f64> = match &stream.generator {
                MdGenerator::Iid { law } => {
                    let mut rng = rng;
                    let law = *law;
                    Box::new(move || law.sample(&mut rng))
                }
                MdGenerator::Dynamical { system, h } => {
                    let mut p = system.sample_invariant(rng);
                    Box::new(move || {
                        let v = h.eval(system, &p);
                        system.step(&mut p);
                        v
                    })
                }
            };
            let mut measure = LogAvgMeasure::new(DEFAULT_CLIP);
            let mut s = KahanSum::new();
            let mut qv = KahanSum::new();
            let mut max_sq = 0.0f64;
            let mut max_ratio = Vec::new();
            let mut quadratic_variation = Vec::new();
            let mut cp = checkpoints.iter().peekable();
            for k in 1..=n {
                let z = next();
                s.add(z);
                qv.add(z * z);
                max_sq = max_sq.max(z * z);
                measure.push(s.value() / (k as f64).sqrt());
                if cp.peek() == Some(&&k) {
                    cp.next();
                    max_ratio.push((k, max_sq / k as f64));
                    quadratic_variation.push((k, qv.value() / k as f64));
                }
            }
            Ok(ReverseMdSeed {
                seed_index: i,
                ks: measure.ks_to(&target)?,
                max_ratio,
                quadratic_variation,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoboundaryRow {
    pub seed_index: u64,
    /// KS of the `S_k f / B_k` measure against `N(0, E h^2)`.
    pub ks_f: f64,
    /// Same for `S_k h / B_k`.
    pub ks_h: f64,
    /// `|ks_f - ks_h|`.
    pub ks_difference: f64,
    /// Sup distance between the two log-average measures. Shifted atoms at
    /// small `k` keep this of order `1 / log N`.
    pub ks_between: f64,
    /// `|S_1 f - S_1 h| / B_1`.
    pub gap_first: f64,
    /// `|S_N f - S_N h| / B_N`.
    pub gap_last: f64,
}

/// Runs `f` and `h` along the same orbit and compares their log-average
/// measures; `S_k f - S_k h = g∘T^k - g` is a bounded coboundary.
pub fn coboundary_correction_check(
    dec: &GordinDecomposition,
    seq: &RenormSeq,
    n: u64,
    seeds: usize,
    seed: u64,
) -> Result<Vec<CoboundaryRow>> {
    let sys = &dec.system;
    let f = &dec.observable;
    let h = dec.h.observable();
    let target = TargetLaw::Gaussian {
        sigma2: dec.h_second_moment(),
    };
    (0..seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut p = sys.sample_invariant(replica_rng(seed, i));
            let (mut mf, mut mh) = (LogAvgMeasure::new(DEFAULT_CLIP), LogAvgMeasure::new(DEFAULT_CLIP));
            let (mut sf, mut sh) = (KahanSum::new(), KahanSum::new());
            let (mut first, mut last) = (0.0, 0.0);
            for k in 1..=n {
                sf.add(f.eval(sys, &p));
                sh.add(h.eval(sys, &p));
                sys.step(&mut p);
                let b = seq.eval(k);
                mf.push(sf.value() / b);
                mh.push(sh.value() / b);
                let gap = (sf.value() - sh.value()).abs() / b;
                if k == 1 {
                    first = gap;
                }
                last = gap;
            }
            let (ks_f, ks_h) = (mf.ks_to(&target)?, mh.ks_to(&target)?);
            Ok(CoboundaryRow {
                seed_index: i,
                ks_f,
                ks_h,
                ks_difference: (ks_f - ks_h).abs(),
                ks_between: ks_weighted_two_sample(&mf.atoms(), &mh.atoms())?,
                gap_first: first,
                gap_last: last,
            })
        })
        .collect()
}

/// `sup_{k<=n} b_k B_k / (B_k - B_{k-1})` with `b_k = 1/k` and `B_0 = 0`.
pub fn weight_condition_sup(seq: &RenormSeq, n: u64) -> f64 {
    let mut prev = 0.0;
    let mut sup = 0.0f64;
    for k in 1..=n {
        let b = seq.eval(k);
        sup = sup.max(b / (k as f64 * (b - prev)));
        prev = b;
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{replica_orbits, tight_maxima_profile, CheckpointGrid};
    use crate::spectral::{green_kubo_sigma2, GreenKuboMethod};

    fn two_cosines() -> Observable {
        Observable::fourier(vec![(1, 1.0), (2, 1.0)])
    }

    #[test]
    fn fourier_examples() {
        let d = System::doubling();
        let one = gordin_decompose(&d, &Observable::cosine(1), 0, Representation::FourierExact).unwrap();
        assert_eq!(one.g, FunctionRep::Fourier(vec![]));
        assert_eq!(one.h, FunctionRep::Fourier(vec![(1, 1.0)]));
        let two = gordin_decompose(&d, &two_cosines(), 0, Representation::FourierExact).unwrap();
        assert_eq!(two.g, FunctionRep::Fourier(vec![(1, 1.0)]));
        assert_eq!(two.h, FunctionRep::Fourier(vec![(1, 2.0)]));
        assert_eq!(two.h_second_moment(), 2.0);
        assert_eq!(two.transfer_of_h_sup(), 0.0);
        assert!(two.identity_residual(100_000, 1) <= 1e-12);
        let zero =
            gordin_decompose(&d, &Observable::constant(0.0), 0, Representation::FourierExact).unwrap();
        assert_eq!(zero.g, FunctionRep::Fourier(vec![]));
        assert_eq!(zero.h, FunctionRep::Fourier(vec![]));
    }

    #[test]
    fn deeper_frequencies_telescope() {
        // L cos(8 pi x) = cos(4 pi x), L^2 = cos(2 pi x), L^3 = 0
        let f = Observable::cosine(4);
        let dec = gordin_decompose(&System::doubling(), &f, 0, Representation::FourierExact).unwrap();
        assert_eq!(dec.g, FunctionRep::Fourier(vec![(1, 1.0), (2, 1.0)]));
        assert_eq!(dec.k_truncation, 2);
        assert_eq!(dec.transfer_of_h_sup(), 0.0);
        assert!(dec.identity_residual(10_000, 2) <= 1e-12);
    }

    #[test]
    fn uncentered_and_unsupported_inputs() {
        let d = System::doubling();
        let f = Observable::fourier(vec![(0, 1.0), (1, 1.0)]);
        assert!(gordin_decompose(&d, &f, 0, Representation::FourierExact).is_err());
        assert!(gordin_decompose(&d, &f.clone().shifted(1.0), 0, Representation::FourierExact).is_ok());
        let lsv = System::lsv(0.3).unwrap();
        assert!(matches!(
            gordin_decompose(&lsv, &Observable::cosine(1), 0, Representation::FourierExact),
            Err(Error::UnsupportedSystem(_))
        ));
    }

    #[test]
    fn grid_matches_fourier_on_doubling() {
        let dec = gordin_decompose(
            &System::doubling(),
            &two_cosines(),
            100,
            Representation::UlamGrid { grid: 4096 },
        )
        .unwrap();
        assert!(dec.transfer_of_h_sup() <= 1e-10, "{}", dec.transfer_of_h_sup());
        assert!(dec.identity_residual(0, 0) <= 1e-12);
        assert!(dec.residual_norm <= 1e-12);
        let FunctionRep::Grid(h) = &dec.h else { panic!() };
        let max_err = h
            .iter()
            .enumerate()
            .map(|(i, v)| (v - 2.0 * (std::f64::consts::TAU * (i as f64 + 0.5) / 4096.0).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-2);
        assert!((dec.h_second_moment() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn grid_on_lsv_annihilates() {
        let lsv = System::lsv(0.3).unwrap();
        let build = |grid| {
            gordin_decompose(&lsv, &Observable::identity(), 10_000, Representation::UlamGrid { grid })
                .unwrap()
        };
        let (coarse, fine) = (build(1024), build(4096));
        for dec in [&coarse, &fine] {
            assert!(dec.residual_norm <= GRID_RESIDUAL);
            assert!(dec.neumann_defect() <= 1e-6, "{}", dec.neumann_defect());
            assert!(dec.identity_residual(0, 0) <= 1e-9);
        }
        // projection error of g∘T decreases under refinement
        assert!(fine.transfer_of_h_l1() < coarse.transfer_of_h_l1());
    }

    #[test]
    fn second_moment_matches_green_kubo() {
        let dec =
            gordin_decompose(&System::doubling(), &two_cosines(), 0, Representation::FourierExact).unwrap();
        let gk = green_kubo_sigma2(
            &System::doubling(),
            &two_cosines(),
            20,
            GreenKuboMethod::UlamPowers { grid: 4096 },
        )
        .unwrap();
        assert!((dec.h_second_moment() - gk.sigma2).abs() <= 3.0 * gk.stderr.max(1e-6));
    }

    #[test]
    fn reverse_md_diagnostics() {
        let dec =
            gordin_decompose(&System::doubling(), &two_cosines(), 0, Representation::FourierExact).unwrap();
        let d = verify_reverse_md(&dec, 10_000, 1 << 14, 3).unwrap();
        assert_eq!(d.transfer_sup, 0.0);
        assert!(d.conditional_pass, "{:?}", d.conditional);
        assert_eq!(d.conditional.len(), 14);
        assert!((d.variance - 2.0).abs() <= 0.06, "{}", d.variance);
        assert!((d.variance - 2.0).abs() <= 3.0 * d.variance_stderr);
        let zero = gordin_decompose(&System::doubling(), &Observable::constant(0.0), 0, Representation::FourierExact)
            .unwrap();
        let z = verify_reverse_md(&zero, 100, 10, 4).unwrap();
        assert_eq!(z.variance, 0.0);
        assert!(z.conditional.iter().all(|c| c.mean == 0.0));
    }

    #[test]
    fn original_f_fails_the_conditional_test() {
        // f itself is not a reverse martingale difference
        let dec =
            gordin_decompose(&System::doubling(), &two_cosines(), 0, Representation::FourierExact).unwrap();
        let mut raw = dec.clone();
        raw.h = dec.f.clone();
        let d = verify_reverse_md(&raw, 20_000, 1, 5).unwrap();
        assert!(!d.conditional_pass);
    }

    #[test]
    fn zero_stream_is_dirac() {
        let s = ReverseMdStream {
            generator: MdGenerator::Iid { law: TargetLaw::Dirac0 },
            zeta: 0.0,
        };
        let r = reverse_md_asclt(&s, 1000, 2, 1).unwrap();
        assert!(r.iter().all(|x| x.ks == 0.0 && x.variation_matches(0.0, 0.05)));
    }

    #[test]
    fn iid_stream_diagnostics() {
        let s = ReverseMdStream {
            generator: MdGenerator::Iid {
                law: TargetLaw::gaussian(1.0).unwrap(),
            },
            zeta: 1.0,
        };
        let r = reverse_md_asclt(&s, 100_000, 4, 2).unwrap();
        for x in &r {
            assert!(x.negligible_trend());
            assert!(x.variation_matches(1.0, 0.05));
            assert_eq!(x.max_ratio.len(), 4);
        }
    }

    #[test]
    fn coboundary_shrinks() {
        let dec =
            gordin_decompose(&System::doubling(), &two_cosines(), 0, Representation::FourierExact).unwrap();
        let rows = coboundary_correction_check(&dec, &RenormSeq::sqrt(), 100_000, 3, 6).unwrap();
        for r in rows {
            assert!(r.gap_first <= 2.0 * dec.g.sup_bound());
            assert!(r.gap_last <= 2.0 / (100_000f64).sqrt() + 1e-9);
            assert!(r.ks_difference <= 0.05, "{r:?}");
            assert!(r.ks_between < 0.2, "{r:?}");
        }
        let zero = gordin_decompose(&System::doubling(), &Observable::cosine(1), 0, Representation::FourierExact)
            .unwrap();
        for r in coboundary_correction_check(&zero, &RenormSeq::sqrt(), 10_000, 2, 7).unwrap() {
            assert_eq!(r.ks_between, 0.0);
            assert_eq!(r.ks_f, r.ks_h);
        }
    }

    #[test]
    fn weight_condition_is_bounded() {
        let s = weight_condition_sup(&RenormSeq::sqrt(), 1_000_000);
        assert!(s <= 2.0 && s >= 1.9, "{s}");
    }

    #[test]
    fn h_has_tight_maxima() {
        let dec =
            gordin_decompose(&System::doubling(), &two_cosines(), 0, Representation::FourierExact).unwrap();
        let n = 10_000;
        let grid = CheckpointGrid::explicit(vec![100, 1000, 10_000]).unwrap();
        let reps = replica_orbits(&System::doubling(), &dec.h.observable(), n, 500, 8, &grid).unwrap();
        let rows = tight_maxima_profile(&reps, &RenormSeq::sqrt(), &[10.0]).unwrap();
        assert!(rows.iter().all(|r| r.prob <= 0.02), "{rows:?}");
    }

    #[test]
    fn csv_export() {
        let dec =
            gordin_decompose(&System::doubling(), &two_cosines(), 0, Representation::FourierExact).unwrap();
        let mut buf = Vec::new();
        dec.to_csv(&mut buf, 8).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("x,g,h"));
    }
}

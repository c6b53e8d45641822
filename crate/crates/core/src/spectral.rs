//! Ulam discretization of the transfer operator `L` (normalized so that
//! `L1 = 1` with respect to the invariant measure) and of its perturbations
//! `L_t u = L(e^{itf} u)`.
//!
//! Cells are `G` equal intervals for interval maps and depth-`d` cylinders
//! for finite Bernoulli shifts. Entry `(j, i)` is
//! `m(C_i ∩ T^-1 C_j) / m(C_j) * e^{i t f(mid_i)}`, so the matrix acts on
//! piecewise-constant functions. The phase is taken at the cell midpoint.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::TargetLaw;
use crate::renorm::RenormSeq;
use crate::rng::replica_rng;
use crate::stats::{mean, variance};
use crate::systems::{Alphabet, LsvMap, Observable, Point, System};

/// Smallest admissible grid.
pub const MIN_GRID: usize = 64;
/// Largest admissible grid.
pub const MAX_GRID: usize = 1 << 16;
/// Gap ratio above which no spectral gap is declared.
pub const NO_GAP_RATIO: f64 = 0.999;
/// Iteration at which the gap ratio is judged.
pub const GAP_CHECK_ITERATIONS: usize = 1_000;
const MAX_ITERATIONS: usize = 100_000;
const CONVERGED: f64 = 1e-14;

#[derive(Debug)]
struct UlamBase {
    system: System,
    /// `rows[j]` lists `(i, m(C_i ∩ T^-1 C_j) / m(C_j))`.
    rows: Vec<Vec<(u32, f64)>>,
    masses: Vec<f64>,
    f_mid: Vec<f64>,
    grid: usize,
}

/// Sparse Ulam matrix of `L_t`.
#[derive(Debug, Clone)]
pub struct UlamOperator {
    base: Arc<UlamBase>,
    t: f64,
    phase: Vec<Complex64>,
}

impl UlamOperator {
    /// Builds the matrix for `system` at resolution `grid`. Interval maps
    /// need a power of two `>= 64`; shifts use the shallowest cylinder depth
    /// with at least `max(grid, 64)` cylinders.
    pub fn build(system: &System, observable: &Observable, t: f64, grid: usize) -> Result<Self> {
        system.validate()?;
        observable.validate()?;
        let base = match system {
            System::Doubling => doubling_base(system, observable, grid)?,
            System::Lsv { alpha } => lsv_base(system, LsvMap::new(*alpha)?, observable, grid)?,
            System::BernoulliShift { alphabet, .. } => {
                bernoulli_base(system, alphabet, observable, grid)?
            }
        };
        Ok(UlamOperator::from_base(Arc::new(base), t))
    }

    fn from_base(base: Arc<UlamBase>, t: f64) -> Self {
        let phase = base
            .f_mid
            .iter()
            .map(|&f| Complex64::from_polar(1.0, t * f))
            .collect();
        UlamOperator { base, t, phase }
    }

    /// Same discretization at another `t`; the transition structure is shared.
    pub fn at(&self, t: f64) -> Self {
        UlamOperator::from_base(Arc::clone(&self.base), t)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Number of cells.
    pub fn size(&self) -> usize {
        self.base.grid
    }

    pub fn system(&self) -> &System {
        &self.base.system
    }

    /// Invariant mass of each cell (the functional `l_0`).
    pub fn masses(&self) -> &[f64] {
        &self.base.masses
    }

    /// `f` at the representative point of each cell.
    pub fn f_mid(&self) -> &[f64] {
        &self.base.f_mid
    }

    /// Nonzero entries of row `j`.
    pub fn row(&self, j: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.base.rows[j]
            .iter()
            .map(|&(i, w)| (i as usize, self.phase[i as usize] * w))
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.base
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&(i, w)| self.phase[i as usize] * v[i as usize] * w)
                    .sum()
            })
            .collect()
    }

    /// The `t = 0` operator on real vectors.
    pub fn apply_real(&self, v: &[f64]) -> Vec<f64> {
        self.base
            .rows
            .iter()
            .map(|row| row.iter().map(|&(i, w)| w * v[i as usize]).sum())
            .collect()
    }

    /// Discrete Koopman operator `u -> u∘T` at `t = 0`: the adjoint of
    /// [`UlamOperator::apply_real`] in `L^2(m)`.
    pub fn compose_real(&self, v: &[f64]) -> Vec<f64> {
        let mu = &self.base.masses;
        let mut out = vec![0.0; v.len()];
        for (j, row) in self.base.rows.iter().enumerate() {
            for &(i, w) in row {
                out[i as usize] += w * mu[j] / mu[i as usize] * v[j];
            }
        }
        out
    }

    /// `max_j |(M 1)_j - 1|` at `t = 0`.
    pub fn constant_defect(&self) -> f64 {
        self.base
            .rows
            .iter()
            .map(|row| (row.iter().map(|&(_, w)| w).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute row sum, an upper bound for the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        self.base
            .rows
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `int u dm` for a piecewise-constant `u`.
    pub fn integrate(&self, u: &[Complex64]) -> Complex64 {
        u.iter().zip(&self.base.masses).map(|(a, &m)| a * m).sum()
    }
}

fn check_power_of_two(grid: usize) -> Result<()> {
    if grid < MIN_GRID || grid > MAX_GRID || !grid.is_power_of_two() {
        return Err(Error::invalid(format!(
            "Ulam grid must be a power of two in [{MIN_GRID}, {MAX_GRID}], got {grid}"
        )));
    }
    Ok(())
}

fn doubling_base(system: &System, observable: &Observable, grid: usize) -> Result<UlamBase> {
    check_power_of_two(grid)?;
    // T^-1 C_j is half of C_(j/2) and half of C_(j/2 + G/2)
    let rows = (0..grid)
        .map(|j| {
            let i = (j / 2) as u32;
            vec![(i, 0.5), (i + (grid / 2) as u32, 0.5)]
        })
        .collect();
    let f_mid = (0..grid)
        .map(|i| eval_at(system, observable, (i as f64 + 0.5) / grid as f64))
        .collect();
    Ok(UlamBase {
        system: system.clone(),
        rows,
        masses: vec![1.0 / grid as f64; grid],
        f_mid,
        grid,
    })
}

fn lsv_base(system: &System, map: LsvMap, observable: &Observable, grid: usize) -> Result<UlamBase> {
    check_power_of_two(grid)?;
    let g = grid as f64;
    // Lebesgue transition probabilities P_ij, stored by target
    let mut by_target: Vec<Vec<(u32, f64)>> = vec![Vec::new(); grid];
    let left = |x: f64| x * (1.0 + (2.0 * x).powf(map.alpha));
    for i in 0..grid {
        let (a, b) = (i as f64 / g, (i + 1) as f64 / g);
        let (ya, yb) = if b <= 0.5 {
            (left(a), left(b))
        } else {
            (2.0 * a - 1.0, 2.0 * b - 1.0)
        };
        let inv = |y: f64| {
            if b <= 0.5 {
                map.left_inverse(y)
            } else {
                map.right_inverse(y)
            }
        };
        let j0 = (ya * g).floor() as usize;
        let j1 = ((yb * g).ceil() as usize).min(grid);
        let mut out: Vec<(usize, f64)> = (j0..j1)
            .filter_map(|j| {
                let lo = ya.max(j as f64 / g);
                let hi = yb.min((j + 1) as f64 / g);
                let len = (inv(hi) - inv(lo)) * g;
                (len > 0.0).then_some((j, len))
            })
            .collect();
        let total: f64 = out.iter().map(|p| p.1).sum();
        for (j, p) in out.iter_mut() {
            by_target[*j].push((i as u32, *p / total));
        }
    }
    let masses = stationary(&by_target, grid)?;
    let rows = by_target
        .into_iter()
        .enumerate()
        .map(|(j, row)| {
            row.into_iter()
                .map(|(i, p)| (i, masses[i as usize] * p / masses[j]))
                .collect()
        })
        .collect();
    let f_mid = (0..grid)
        .map(|i| eval_at(system, observable, (i as f64 + 0.5) / g))
        .collect();
    Ok(UlamBase {
        system: system.clone(),
        rows,
        masses,
        f_mid,
        grid,
    })
}

/// Stationary distribution `mu P = mu` of the Ulam chain.
fn stationary(by_target: &[Vec<(u32, f64)>], grid: usize) -> Result<Vec<f64>> {
    let mut mu = vec![1.0 / grid as f64; grid];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<f64> = by_target
            .iter()
            .map(|row| row.iter().map(|&(i, p)| mu[i as usize] * p).sum())
            .collect();
        let total: f64 = next.iter().sum();
        let defect = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a / total / b - 1.0).abs())
            .fold(0.0, f64::max);
        mu = next.into_iter().map(|x| x / total).collect();
        if defect < 1e-13 {
            return Ok(mu);
        }
    }
    Err(Error::NoGap(1.0))
}

fn bernoulli_base(
    system: &System,
    alphabet: &Alphabet,
    observable: &Observable,
    grid: usize,
) -> Result<UlamBase> {
    let Alphabet::Finite { probs } = alphabet else {
        return Err(Error::UnsupportedSystem(
            "Ulam matrices need a finite alphabet".into(),
        ));
    };
    let k = probs.len();
    let want = grid.max(MIN_GRID);
    let mut depth = 1u32;
    while k.pow(depth) < want {
        depth += 1;
    }
    let cells = k.pow(depth);
    if cells > MAX_GRID {
        return Err(Error::invalid(format!("{cells} cylinders exceed the grid limit")));
    }
    let top = cells / k;
    // cylinder code: a_1 most significant; T drops a_1 and appends b
    let symbols = |code: usize| -> Vec<usize> {
        let mut out = vec![0; depth as usize];
        let mut c = code;
        for s in out.iter_mut().rev() {
            *s = c % k;
            c /= k;
        }
        out
    };
    let masses: Vec<f64> = (0..cells)
        .map(|c| symbols(c).iter().map(|&a| probs[a]).product())
        .collect();
    let rows = (0..cells)
        .map(|j| {
            let tail = j / k;
            (0..k)
                .map(|a1| ((a1 * top + tail) as u32, probs[a1]))
                .collect()
        })
        .collect();
    let f_mid = (0..cells)
        .map(|c| {
            let p = Point::shift_symbols(alphabet, &symbols(c), replica_rng(0, c as u64));
            observable.eval(system, &p)
        })
        .collect();
    Ok(UlamBase {
        system: system.clone(),
        rows,
        masses,
        f_mid,
        grid: cells,
    })
}

fn eval_at(system: &System, observable: &Observable, x: f64) -> f64 {
    let p = match system {
        System::Doubling => Point::doubling_at(x, replica_rng(0, 0)),
        _ => Point::Real(x),
    };
    observable.eval(system, &p)
}

/// Result of the power iteration.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub lambda: Complex64,
    /// Estimate of `|l2 / l1|` from the residual contraction rate.
    pub gap: f64,
    pub iterations: usize,
    /// Eigenvector normalized by `int v dm = 1`.
    pub vector: Vec<Complex64>,
}

/// Leading eigenvalue by power iteration, normalized through `int v dm`.
pub fn leading_eigenvalue(op: &UlamOperator) -> Result<Eigen> {
    let n = op.size();
    // generic start so the contraction rate is observable
    let mut v: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(1.0 + 0.25 * (TAU * j as f64 * 0.618_033_988_749_895).cos(), 0.0))
        .collect();
    let l = op.integrate(&v);
    v.iter_mut().for_each(|x| *x /= l);
    let mut residuals: Vec<f64> = Vec::new();
    for it in 1..=MAX_ITERATIONS {
        let w = op.apply(&v);
        let mut lambda = op.integrate(&w);
        if lambda.norm() < 1e-300 {
            return Err(Error::NoGap(1.0));
        }
        let w: Vec<Complex64> = w.into_iter().map(|x| x / lambda).collect();
        let scale = w.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1e-300);
        let r = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale;
        residuals.push(r);
        v = w;
        if r <= CONVERGED {
            if op.t() == 0.0 {
                // L1 = 1 by construction of the weights
                lambda = Complex64::new(1.0, 0.0);
            }
            return Ok(Eigen {
                lambda,
                gap: contraction_rate(&residuals),
                iterations: it,
                vector: v,
            });
        }
        if it == GAP_CHECK_ITERATIONS {
            let rate = contraction_rate(&residuals);
            if rate > NO_GAP_RATIO {
                return Err(Error::NoGap(rate));
            }
        }
    }
    Err(Error::NoGap(contraction_rate(&residuals)))
}

/// Average contraction of the last (up to 20) residual ratios, or the
/// overall rate when the run was shorter.
fn contraction_rate(residuals: &[f64]) -> f64 {
    let k = residuals.len();
    if k < 2 || residuals[0] == 0.0 {
        return 0.0;
    }
    let last = residuals[k - 1];
    let span = (k - 1).min(20);
    let first = residuals[k - 1 - span];
    if last <= CONVERGED || first == 0.0 {
        return (last.max(0.0) / residuals[0]).powf(1.0 / (k - 1) as f64);
    }
    (last / first).powf(1.0 / span as f64)
}

/// `lambda(t)` on a sorted grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenCurve {
    pub t: Vec<f64>,
    pub lambda: Vec<Complex64>,
    pub gap: Vec<f64>,
}

impl EigenCurve {
    /// Power iteration at each grid point, parallel over `t`.
    pub fn compute(system: &System, observable: &Observable, ts: &[f64], grid: usize) -> Result<Self> {
        let mut ts = ts.to_vec();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        if ts.is_empty() {
            return Err(Error::EmptyInput);
        }
        let op = UlamOperator::build(system, observable, 0.0, grid)?;
        let eig: Result<Vec<Eigen>> = ts
            .par_iter()
            .map(|&t| leading_eigenvalue(&op.at(t)))
            .collect();
        let eig = eig?;
        Ok(EigenCurve {
            lambda: eig.iter().map(|e| e.lambda).collect(),
            gap: eig.iter().map(|e| e.gap).collect(),
            t: ts,
        })
    }

    /// `lambda(t)`: the stored value on grid points, four-point Lagrange
    /// interpolation in between.
    pub fn lambda_at(&self, t: f64) -> Result<Complex64> {
        let (lo, hi) = (self.t[0], self.t[self.t.len() - 1]);
        if !(t >= lo && t <= hi) {
            return Err(Error::ExtrapolationOutOfRange { value: t, lo, hi });
        }
        let pos = self.t.partition_point(|&s| s < t);
        if pos < self.t.len() && self.t[pos] == t {
            return Ok(self.lambda[pos]);
        }
        let m = self.t.len().min(4);
        let start = pos.saturating_sub(m / 2).min(self.t.len() - m);
        let idx = start..start + m;
        let mut out = Complex64::new(0.0, 0.0);
        for i in idx.clone() {
            let mut w = 1.0;
            for j in idx.clone() {
                if j != i {
                    w *= (t - self.t[j]) / (self.t[i] - self.t[j]);
                }
            }
            out += self.lambda[i] * w;
        }
        Ok(out)
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "re_lambda", "im_lambda", "gap"])?;
        for i in 0..self.t.len() {
            w.serialize((self.t[i], self.lambda[i].re, self.lambda[i].im, self.gap[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest `t` on `(0, t_max]` (scanned in `steps` steps) such that every
/// grid point up to it shows gap `<= 0.95`.
pub fn epsilon0(
    system: &System,
    observable: &Observable,
    grid: usize,
    t_max: f64,
    steps: usize,
) -> Result<f64> {
    let op = UlamOperator::build(system, observable, 0.0, grid)?;
    let mut best = 0.0;
    for k in 1..=steps.max(1) {
        let t = t_max * k as f64 / steps.max(1) as f64;
        match leading_eigenvalue(&op.at(t)) {
            Ok(e) if e.gap <= 0.95 => best = t,
            _ => break,
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub t: f64,
    pub n: u64,
    pub re_power: f64,
    pub im_power: f64,
    /// `|lambda(t / B_n)^n - E e^{itW}|`.
    pub error: f64,
}

/// Table of `|lambda(t/B_n)^n - E e^{itW}|` over `t` and `n`.
pub fn eigenvalue_convergence_check(
    curve: &EigenCurve,
    seq: &RenormSeq,
    law: &TargetLaw,
    ts: &[f64],
    n_grid: &[u64],
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::with_capacity(ts.len() * n_grid.len());
    for &t in ts {
        let target = law.char_fn(t);
        for &n in n_grid {
            let l = curve.lambda_at(t / seq.eval(n))?;
            let pow = if l.norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                (l.ln() * n as f64).exp()
            };
            rows.push(ConvergenceRow {
                t,
                n,
                re_power: pow.re,
                im_power: pow.im,
                error: (pow - target).norm(),
            });
        }
    }
    Ok(rows)
}

/// How correlations are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum GreenKuboMethod {
    /// `int L^k f * f dm` on the Ulam grid. The standard error is the change
    /// when the grid is halved.
    UlamPowers { grid: usize },
    /// Time-averaged correlations along independent orbits of length
    /// `orbit_len`.
    MonteCarlo {
        replicas: usize,
        orbit_len: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenKubo {
    pub sigma2: f64,
    pub stderr: f64,
    /// Bound on `2 sum_{k > K} |C_k|` from the measured geometric decay.
    pub tail_bound: f64,
    /// `C_0, ..., C_K`.
    pub correlations: Vec<f64>,
}

/// `sigma^2 = int f^2 dm + 2 sum_{k=1}^K int f f∘T^k dm`.
pub fn green_kubo_sigma2(
    system: &System,
    observable: &Observable,
    k_terms: usize,
    method: GreenKuboMethod,
) -> Result<GreenKubo> {
    match method {
        GreenKuboMethod::UlamPowers { grid } => {
            let fine = ulam_correlations(system, observable, k_terms, grid)?;
            let coarse = ulam_correlations(system, observable, k_terms, grid / 2)
                .or_else(|_| ulam_correlations(system, observable, k_terms, grid * 2))?;
            let sigma2 = gk_sum(&fine);
            Ok(GreenKubo {
                sigma2,
                stderr: (sigma2 - gk_sum(&coarse)).abs(),
                tail_bound: tail_bound(&fine, 1e-14 * fine[0].abs())?,
                correlations: fine,
            })
        }
        GreenKuboMethod::MonteCarlo {
            replicas,
            orbit_len,
            seed,
        } => {
            if replicas < 2 || orbit_len < 1 {
                return Err(Error::invalid("Monte Carlo Green-Kubo needs replicas >= 2"));
            }
            let len = orbit_len + k_terms;
            let paths: Vec<Vec<f64>> = (0..replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let mut p = system.sample_invariant(replica_rng(seed, r));
                    (0..len)
                        .map(|_| {
                            let v = observable.eval(system, &p);
                            system.step(&mut p);
                            v
                        })
                        .collect()
                })
                .collect();
            let centre = match observable.exact_mean(system) {
                Some(m) => m,
                None => mean(&paths.iter().flatten().copied().collect::<Vec<_>>())?,
            };
            let per: Vec<Vec<f64>> = paths
                .par_iter()
                .map(|path| {
                    let c: Vec<f64> = path.iter().map(|v| v - centre).collect();
                    (0..=k_terms)
                        .map(|k| {
                            (0..orbit_len).map(|j| c[j] * c[j + k]).sum::<f64>() / orbit_len as f64
                        })
                        .collect()
                })
                .collect();
            let estimates: Vec<f64> = per.iter().map(|c| gk_sum(c)).collect();
            let correlations: Vec<f64> = (0..=k_terms)
                .map(|k| per.iter().map(|c| c[k]).sum::<f64>() / replicas as f64)
                .collect();
            let spread: Vec<f64> = (0..=k_terms)
                .map(|k| {
                    let col: Vec<f64> = per.iter().map(|c| c[k]).collect();
                    (variance(&col).unwrap_or(0.0) / replicas as f64).sqrt()
                })
                .collect();
            let noise = 3.0 * spread.iter().copied().fold(0.0, f64::max);
            Ok(GreenKubo {
                sigma2: mean(&estimates)?,
                stderr: (variance(&estimates)? / replicas as f64).sqrt(),
                tail_bound: tail_bound(&correlations, noise)?,
                correlations,
            })
        }
    }
}

fn gk_sum(c: &[f64]) -> f64 {
    c[0] + 2.0 * c[1..].iter().sum::<f64>()
}

fn ulam_correlations(
    system: &System,
    observable: &Observable,
    k_terms: usize,
    grid: usize,
) -> Result<Vec<f64>> {
    let op = UlamOperator::build(system, observable, 0.0, grid)?;
    let f = cell_averages(&op, observable);
    let mu = op.masses();
    let m: f64 = f.iter().zip(mu).map(|(a, b)| a * b).sum();
    let f: Vec<f64> = f.iter().map(|v| v - m).collect();
    let mut lk = f.clone();
    let mut out = Vec::with_capacity(k_terms + 1);
    for k in 0..=k_terms {
        if k > 0 {
            lk = op.apply_real(&lk);
        }
        out.push(lk.iter().zip(&f).zip(mu).map(|((a, b), w)| a * b * w).sum());
    }
    Ok(out)
}

/// Four-point Gauss–Legendre cell averages on interval maps, the
/// representative value on cylinders.
pub(crate) fn cell_averages(op: &UlamOperator, observable: &Observable) -> Vec<f64> {
    const NODES: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let sys = op.system();
    if matches!(sys, System::BernoulliShift { .. }) {
        return op.f_mid().to_vec();
    }
    let g = op.size() as f64;
    (0..op.size())
        .map(|i| {
            let c = (i as f64 + 0.5) / g;
            NODES
                .iter()
                .map(|&(x, w)| 0.5 * w * eval_at(sys, observable, c + 0.5 * x / g))
                .sum()
        })
        .collect()
}

/// `2 sum_{k > K} |C_k|` assuming the geometric decay seen between the first
/// and second half of the correlations; 0 when the late correlations are
/// below `noise`.
fn tail_bound(c: &[f64], noise: f64) -> Result<f64> {
    let k = c.len() - 1;
    if k < 2 {
        return Ok(0.0);
    }
    let half = k / 2;
    let early = c[1..=half].iter().map(|x| x.abs()).fold(0.0, f64::max);
    let (late_at, late) = c
        .iter()
        .enumerate()
        .skip(half + 1)
        .map(|(i, x)| (i, x.abs()))
        .fold((k, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if late <= noise.max(1e-300) {
        return Ok(0.0);
    }
    if late >= early {
        return Err(Error::NonSummable(k));
    }
    let rho = (late / early).powf(1.0 / (k - half) as f64);
    // envelope late * rho^(j - late_at) summed over j > k
    Ok(2.0 * late * rho.powi((k + 1 - late_at) as i32) / (1.0 - rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharfnResidual {
    pub t: f64,
    pub n: u64,
    pub re_empirical: f64,
    pub im_empirical: f64,
    pub re_power: f64,
    pub im_power: f64,
    /// `|E^ e^{itS_n f} - lambda(t)^n|`.
    pub residual: f64,
    /// Monte Carlo standard error of the empirical modulus.
    pub stderr: f64,
}

/// Monte Carlo `E e^{itS_n f}` over `replicas` invariant starts against
/// `lambda(t)^n` from `op` (rebuilt at `t` if needed).
pub fn charfn_vs_eigen(
    system: &System,
    observable: &Observable,
    t: f64,
    n: u64,
    replicas: usize,
    seed: u64,
    op: &UlamOperator,
) -> Result<CharfnResidual> {
    if replicas < 10_000 {
        return Err(Error::invalid("characteristic-function check needs >= 1e4 replicas"));
    }
    let op = if op.t() == t { op.clone() } else { op.at(t) };
    let lambda = leading_eigenvalue(&op)?.lambda;
    let pow = lambda.powu(n as u32);
    let z: Vec<Complex64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut p = system.sample_invariant(replica_rng(seed, r));
            let mut s = 0.0;
            for _ in 0..n {
                s += observable.eval(system, &p);
                system.step(&mut p);
            }
            Complex64::from_polar(1.0, t * s)
        })
        .collect();
    let re: Vec<f64> = z.iter().map(|c| c.re).collect();
    let im: Vec<f64> = z.iter().map(|c| c.im).collect();
    let emp = Complex64::new(mean(&re)?, mean(&im)?);
    let stderr = ((variance(&re)? + variance(&im)?) / replicas as f64).sqrt();
    Ok(CharfnResidual {
        t,
        n,
        re_empirical: emp.re,
        im_empirical: emp.im,
        re_power: pow.re,
        im_power: pow.im,
        residual: (emp - pow).norm(),
        stderr,
    })
}

/// [`charfn_vs_eigen`] over a grid of `t`, showing the small-`t` plateau.
#[allow(clippy::too_many_arguments)]
pub fn charfn_residual_profile(
    system: &System,
    observable: &Observable,
    ts: &[f64],
    n: u64,
    replicas: usize,
    seed: u64,
    grid: usize,
) -> Result<Vec<CharfnResidual>> {
    let op = UlamOperator::build(system, observable, 0.0, grid)?;
    ts.iter()
        .map(|&t| charfn_vs_eigen(system, observable, t, n, replicas, seed, &op))
        .collect()
}

//! Streaming Birkhoff sums `S_k f = f + f∘T + ... + f∘T^(k-1)`, running
//! maxima, replica ensembles and random-index sums.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renorm::RenormSeq;
use crate::rng::{replica_rng, LabRng};
use crate::stats::KahanSum;
use crate::systems::{Observable, Point, System};

/// Increasing list of step counts at which orbit statistics are recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointGrid(Vec<u64>);

impl CheckpointGrid {
    /// `round(2^(j/4))` for `j = 0, 1, ...` up to `n_max`, deduplicated,
    /// always ending at `n_max`.
    pub fn geometric(n_max: u64) -> Self {
        let mut pts = Vec::new();
        let mut j = 0i32;
        loop {
            let k = 2f64.powf(j as f64 / 4.0).round() as u64;
            if k > n_max {
                break;
            }
            if pts.last() != Some(&k) {
                pts.push(k);
            }
            j += 1;
        }
        if pts.last() != Some(&n_max) {
            pts.push(n_max);
        }
        CheckpointGrid(pts)
    }

    /// Arbitrary positive checkpoints; sorted and deduplicated.
    pub fn explicit(mut points: Vec<u64>) -> Result<Self> {
        points.sort_unstable();
        points.dedup();
        if points.first() == Some(&0) {
            return Err(Error::invalid("checkpoints must be positive"));
        }
        Ok(CheckpointGrid(points))
    }

    pub fn points(&self) -> &[u64] {
        &self.0
    }

    pub fn last(&self) -> Option<u64> {
        self.0.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: u64,
    pub sum: f64,
    pub running_max: f64,
}

/// Running state of one Birkhoff sum.
#[derive(Debug, Clone, Default)]
pub struct OrbitStats {
    birkhoff: KahanSum,
    running_max: f64,
    step_count: u64,
    next_checkpoint: usize,
    checkpoints: Vec<Checkpoint>,
}

impl OrbitStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add the next summand; records a checkpoint if `k` is on the grid.
    #[inline]
    pub fn push(&mut self, x: f64, grid: &CheckpointGrid) {
        self.birkhoff.add(x);
        self.step_count += 1;
        let s = self.birkhoff.value();
        if s.abs() > self.running_max {
            self.running_max = s.abs();
        }
        if let Some(&k) = grid.0.get(self.next_checkpoint) {
            if k == self.step_count {
                self.checkpoints.push(Checkpoint {
                    k,
                    sum: s,
                    running_max: self.running_max,
                });
                self.next_checkpoint += 1;
            }
        }
    }

    /// Current `S_k f`.
    #[inline]
    pub fn sum(&self) -> f64 {
        self.birkhoff.value()
    }

    /// `max_{1 <= j <= k} |S_j f|`.
    pub fn running_max(&self) -> f64 {
        self.running_max
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn at(&self, k: u64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.k == k)
    }
}

/// Result of [`run_orbit`].
#[derive(Debug, Clone)]
pub struct Orbit {
    pub stats: OrbitStats,
    /// `S_1 f, ..., S_n f` when requested.
    pub trajectory: Option<Vec<f64>>,
}

/// Runs `n_steps` of the orbit of an invariant sample drawn with `rng`.
pub fn run_orbit(
    system: &System,
    observable: &Observable,
    n_steps: u64,
    rng: LabRng,
    grid: &CheckpointGrid,
    keep_trajectory: bool,
) -> Result<Orbit> {
    if n_steps == 0 {
        return Err(Error::invalid("an orbit needs at least one step"));
    }
    let mut point = system.sample_invariant(rng);
    let mut trajectory = keep_trajectory.then(|| Vec::with_capacity(n_steps as usize));
    let stats = run_orbit_from(system, observable, &mut point, n_steps, grid, |_, s, _| {
        if let Some(t) = trajectory.as_mut() {
            t.push(s);
        }
    });
    Ok(Orbit { stats, trajectory })
}

/// Advances `point` by `n_steps`, calling `sink(k, S_k f, T^k x)` after
/// every step. This is the streaming entry point for consumers that cannot
/// afford to store trajectories.
#[inline]
pub fn run_orbit_from<F: FnMut(u64, f64, &Point)>(
    system: &System,
    observable: &Observable,
    point: &mut Point,
    n_steps: u64,
    grid: &CheckpointGrid,
    mut sink: F,
) -> OrbitStats {
    let mut stats = OrbitStats::new();
    for k in 1..=n_steps {
        stats.push(observable.eval(system, point), grid);
        system.step(point);
        sink(k, stats.sum(), point);
    }
    stats
}

/// Birkhoff-style accumulation of an arbitrary summand stream, calling
/// `sink(k, S_k)` after each term.
pub fn accumulate<I, F>(summands: I, grid: &CheckpointGrid, mut sink: F) -> OrbitStats
where
    I: IntoIterator<Item = f64>,
    F: FnMut(u64, f64),
{
    let mut stats = OrbitStats::new();
    for x in summands {
        stats.push(x, grid);
        sink(stats.step_count(), stats.sum());
    }
    stats
}

/// Independent orbits of length `n`, replica `i` seeded by `(seed, i)`.
pub fn replica_orbits(
    system: &System,
    observable: &Observable,
    n: u64,
    replicas: usize,
    seed: u64,
    grid: &CheckpointGrid,
) -> Result<Vec<OrbitStats>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            run_orbit(system, observable, n, replica_rng(seed, i), grid, false).map(|o| o.stats)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub n: u64,
    pub c: f64,
    pub prob: f64,
}

/// Fraction of replicas with `max_{k <= n} |S_k| > c B(n)` for each
/// checkpoint `n` and each `c`.
pub fn tight_maxima_profile(
    replicas: &[OrbitStats],
    seq: &RenormSeq,
    c_grid: &[f64],
) -> Result<Vec<ProfileRow>> {
    tight_maxima_profile_with(replicas, |n| seq.eval(n), c_grid)
}

/// Same profile with an arbitrary scaling `n -> B(n)`.
pub fn tight_maxima_profile_with<B: Fn(u64) -> f64>(
    replicas: &[OrbitStats],
    scale: B,
    c_grid: &[f64],
) -> Result<Vec<ProfileRow>> {
    let first = replicas.first().ok_or(Error::EmptyInput)?;
    let ks: Vec<u64> = first.checkpoints.iter().map(|c| c.k).collect();
    for r in replicas {
        if r.checkpoints.len() != ks.len() || r.checkpoints.iter().zip(&ks).any(|(c, &k)| c.k != k)
        {
            return Err(Error::GridMismatch);
        }
    }
    let mut c_sorted = c_grid.to_vec();
    c_sorted.sort_by(|a, b| a.total_cmp(b));
    let total = replicas.len() as f64;
    let mut rows = Vec::with_capacity(ks.len() * c_sorted.len());
    for (idx, &n) in ks.iter().enumerate() {
        let b = scale(n);
        for &c in &c_sorted {
            let hits = replicas
                .iter()
                .filter(|r| r.checkpoints[idx].running_max > c * b)
                .count();
            rows.push(ProfileRow {
                n,
                c,
                prob: hits as f64 / total,
            });
        }
    }
    Ok(rows)
}

/// How the summation length `t_n` is chosen per replica.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum IndexRule {
    Exact,
    /// `t_n = n + floor(sqrt(n) u(x))` with `u` a bounded observable of the
    /// initial point.
    Perturbed { u: Observable },
}

#[derive(Debug, Clone)]
pub struct RandomIndexSample {
    /// `S_{t_n} f / B(n)` per replica.
    pub values: Vec<f64>,
    /// `t_n / n` per replica.
    pub index_ratios: Vec<f64>,
}

/// Replica sample of `S_{t_n} f / B(n)`.
pub fn random_index_sums(
    system: &System,
    observable: &Observable,
    rule: &IndexRule,
    n: u64,
    replicas: usize,
    seq: &RenormSeq,
    seed: u64,
) -> Result<RandomIndexSample> {
    if let IndexRule::Perturbed { u } = rule {
        if u.sup_norm().is_none() {
            return Err(Error::invalid("index perturbation must be a bounded observable"));
        }
    }
    let b = seq.eval(n);
    let grid = CheckpointGrid(Vec::new());
    let pairs: Result<Vec<(f64, f64)>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut point = system.sample_invariant(replica_rng(seed, i));
            let t = match rule {
                IndexRule::Exact => n as i64,
                IndexRule::Perturbed { u } => {
                    n as i64 + ((n as f64).sqrt() * u.eval(system, &point)).floor() as i64
                }
            };
            if t < 1 {
                return Err(Error::invalid(format!("index rule produced t_n = {t}")));
            }
            let stats = run_orbit_from(system, observable, &mut point, t as u64, &grid, |_, _, _| {});
            Ok((stats.sum() / b, t as f64 / n as f64))
        })
        .collect();
    let (values, index_ratios) = pairs?.into_iter().unzip();
    Ok(RandomIndexSample {
        values,
        index_ratios,
    })
}

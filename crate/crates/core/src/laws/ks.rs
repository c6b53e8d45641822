use serde::{Deserialize, Serialize};

use super::{Cdf, TargetLaw};
use crate::error::{Error, Result};
use crate::stats::KahanSum;

/// A point mass `weight * delta_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtom {
    pub value: f64,
    pub weight: f64,
}

/// Sup-distance between the distribution function of a weighted atom list
/// and `law`. Weights must sum to 1 within 1e-12.
pub fn ks_distance(atoms: &[WeightedAtom], law: &TargetLaw) -> Result<f64> {
    if atoms.len() > 2_000 && matches!(law, TargetLaw::Stable { .. }) {
        let table = law.fast_cdf()?;
        ks_distance_with(atoms, &table)
    } else {
        ks_distance_with(atoms, law)
    }
}

/// As [`ks_distance`], against any distribution function.
///
/// The supremum is taken over both one-sided limits at every atom position,
/// which is where a step function and a monotone `F` can be farthest apart.
pub fn ks_distance_with<C: Cdf + ?Sized>(atoms: &[WeightedAtom], cdf: &C) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted: Vec<WeightedAtom> = atoms.to_vec();
    sorted.sort_unstable_by(|a, b| a.value.total_cmp(&b.value));
    // Same order as the walk below, so the final cumulative ratio is exactly 1.
    let mut sum = KahanSum::new();
    sorted.iter().for_each(|a| sum.add(a.weight));
    let total = sum.value();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("atom weights sum to {total}, not 1")));
    }
    Ok(sup_gap(sorted.iter().map(|a| (a.value, a.weight)), total, cdf))
}

/// One-sample KS statistic of equally weighted observations. Sorts `xs`.
pub fn ks_sample<C: Cdf + ?Sized>(xs: &mut [f64], cdf: &C) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    Ok(sup_gap(xs.iter().map(|&x| (x, 1.0)), xs.len() as f64, cdf))
}

// Walks atoms in increasing order, merging ties. Cumulative mass is a
// compensated sum divided by `total`, so the last step lands on exactly 1.
fn sup_gap<C: Cdf + ?Sized>(atoms: impl Iterator<Item = (f64, f64)>, total: f64, cdf: &C) -> f64 {
    let mut atoms = atoms.peekable();
    let mut cum = KahanSum::new();
    let mut below = 0.0f64;
    let mut sup = 0.0f64;
    while let Some((value, weight)) = atoms.next() {
        cum.add(weight);
        while let Some(&(next, w)) = atoms.peek() {
            if next != value {
                break;
            }
            cum.add(w);
            atoms.next();
        }
        sup = sup.max((below - cdf.cdf_left(value)).abs());
        below = (cum.value() / total).min(1.0);
        sup = sup.max((below - cdf.cdf(value)).abs());
    }
    sup
}

/// Two-sample KS statistic. Sorts both inputs.
pub fn ks_two_sample(xs: &mut [f64], ys: &mut [f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    ys.sort_unstable_by(|a, b| a.total_cmp(b));
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / nx - j as f64 / ny).abs());
    }
    Ok(sup)
}

/// Sup-distance between the distribution functions of two weighted atom
/// lists, each normalized by its own total weight.
pub fn ks_weighted_two_sample(a: &[WeightedAtom], b: &[WeightedAtom]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sorted = |v: &[WeightedAtom]| {
        let mut v = v.to_vec();
        v.sort_unstable_by(|x, y| x.value.total_cmp(&y.value));
        let total: f64 = v.iter().map(|x| x.weight).sum();
        (v, total)
    };
    let ((a, ta), (b, tb)) = (sorted(a), sorted(b));
    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb) = (KahanSum::new(), KahanSum::new());
    let mut sup = 0.0f64;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.value.min(y.value),
            (Some(x), None) => x.value,
            (None, Some(y)) => y.value,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].value <= v {
            fa.add(a[i].weight);
            i += 1;
        }
        while j < b.len() && b[j].value <= v {
            fb.add(b[j].weight);
            j += 1;
        }
        sup = sup.max((fa.value() / ta - fb.value() / tb).abs());
    }
    Ok(sup)
}

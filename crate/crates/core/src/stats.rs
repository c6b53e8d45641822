//! Small statistical helpers shared by the experiment modules.

use rand::Rng;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut s = KahanSum::new();
    xs.iter().for_each(|&x| s.add(x));
    Ok(s.value() / xs.len() as f64)
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let m = mean(xs)?;
    let mut s = KahanSum::new();
    xs.iter().for_each(|&x| s.add((x - m) * (x - m)));
    Ok(s.value() / (xs.len() - 1) as f64)
}

/// Standard error of the sample mean.
pub fn std_err(xs: &[f64]) -> Result<f64> {
    Ok((variance(xs)? / xs.len() as f64).sqrt())
}

/// Linear-interpolated quantile, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    Ok(v[i] + (pos - i as f64) * (v[j] - v[i]))
}

pub fn median(xs: &[f64]) -> Result<f64> {
    quantile(xs, 0.5)
}

/// Batch-means estimate for a stationary series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    /// Standard error of `mean`.
    pub mean_stderr: f64,
    /// Asymptotic variance `lim Var(S_n) / n`.
    pub sigma2: f64,
    /// Standard error of `sigma2` (chi-square approximation).
    pub sigma2_stderr: f64,
    pub batches: usize,
}

/// Split `series` into consecutive batches of `batch` values and use the
/// spread of the batch means.
pub fn batch_means(series: &[f64], batch: usize) -> Result<BatchMeans> {
    if batch == 0 {
        return Err(Error::invalid("batch length must be positive"));
    }
    let b = series.len() / batch;
    if b < 2 {
        return Err(Error::invalid("batch means need at least two batches"));
    }
    let means: Vec<f64> = series
        .chunks_exact(batch)
        .map(|c| c.iter().sum::<f64>() / batch as f64)
        .collect();
    Ok(batch_means_from(&means, batch))
}

/// Same estimate from precomputed batch means.
pub fn batch_means_from(means: &[f64], batch: usize) -> BatchMeans {
    let b = means.len();
    let m = means.iter().sum::<f64>() / b as f64;
    let v = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1) as f64;
    let sigma2 = v * batch as f64;
    BatchMeans {
        mean: m,
        mean_stderr: (v / b as f64).sqrt(),
        sigma2,
        sigma2_stderr: sigma2 * (2.0 / (b - 1) as f64).sqrt(),
        batches: b,
    }
}

/// Non-overlapping block bootstrap standard error of the mean of `xs`.
/// `block = 1` is the ordinary bootstrap.
pub fn block_bootstrap_stderr<R: Rng + ?Sized>(
    xs: &[f64],
    block: usize,
    resamples: usize,
    rng: &mut R,
) -> Result<f64> {
    let block = block.max(1);
    let nb = xs.len() / block;
    if nb < 2 || resamples < 2 {
        return Err(Error::invalid("bootstrap needs at least two blocks and resamples"));
    }
    let block_means: Vec<f64> = xs
        .chunks_exact(block)
        .map(|c| c.iter().sum::<f64>() / block as f64)
        .collect();
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..nb {
                s += block_means[rng.random_range(0..nb)];
            }
            s / nb as f64
        })
        .collect();
    Ok(variance(&stats)?.sqrt())
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("regression needs two or more paired points"));
    }
    let mx = mean(x)?;
    let my = mean(y)?;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// `H_n = sum_{k <= n} 1/k`, summed from the small terms up.
pub fn harmonic(n: u64) -> f64 {
    if n > 10_000_000 {
        // Euler–Maclaurin with error below 1e-28
        let x = n as f64;
        return x.ln() + 0.577_215_664_901_532_9 + 0.5 / x - 1.0 / (12.0 * x * x);
    }
    let mut s = KahanSum::new();
    for k in (1..=n).rev() {
        s.add(1.0 / k as f64);
    }
    s.value()
}

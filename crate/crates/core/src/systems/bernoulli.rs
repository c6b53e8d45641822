use std::collections::VecDeque;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::LabRng;

/// Symbol distribution of a one-sided Bernoulli shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Alphabet {
    /// Finite probability vector.
    Finite { probs: Vec<f64> },
    /// `p_a = (1 - q) q^a`, `a = 0, 1, 2, ...`, sampled exactly by inversion.
    Geometric { q: f64 },
}

impl Alphabet {
    pub fn validate(&self) -> Result<()> {
        match self {
            Alphabet::Finite { probs } => {
                if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) {
                    return Err(Error::invalid("symbol probabilities must be nonnegative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("symbol probabilities sum to {total}")));
                }
            }
            Alphabet::Geometric { q } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(Error::invalid("geometric ratio must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Number of symbols, `None` for the countable family.
    pub fn size(&self) -> Option<usize> {
        match self {
            Alphabet::Finite { probs } => Some(probs.len()),
            Alphabet::Geometric { .. } => None,
        }
    }

    pub fn prob(&self, a: usize) -> f64 {
        match self {
            Alphabet::Finite { probs } => probs.get(a).copied().unwrap_or(0.0),
            Alphabet::Geometric { q } => (1.0 - q) * q.powi(a as i32),
        }
    }

    /// Inverse-CDF symbol of a uniform variate `u` in `[0, 1)`.
    pub fn symbol(&self, u: f64) -> usize {
        match self {
            Alphabet::Finite { probs } => {
                let mut acc = 0.0;
                for (a, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return a;
                    }
                }
                probs.len() - 1
            }
            // P(a >= k) = q^k
            Alphabet::Geometric { q } => ((1.0 - u).ln() / q.ln()).floor() as usize,
        }
    }
}

/// A point of a Bernoulli shift: an i.i.d. sequence of 64-bit words, each
/// coding one uniform variate and, through the alphabet's inverse CDF, one
/// symbol. The shift drops the head word.
#[derive(Debug, Clone)]
pub struct WordStream {
    head: u64,
    queue: VecDeque<u64>,
    rng: LabRng,
}

impl WordStream {
    pub fn random(mut rng: LabRng) -> Self {
        WordStream {
            head: rng.next_u64(),
            queue: VecDeque::new(),
            rng,
        }
    }

    /// Stream starting with the given words, then random.
    pub fn from_words(words: &[u64], mut rng: LabRng) -> Self {
        let mut queue: VecDeque<u64> = words.iter().copied().collect();
        let head = queue.pop_front().unwrap_or_else(|| rng.next_u64());
        WordStream { head, queue, rng }
    }

    #[inline]
    pub fn step(&mut self) {
        self.head = match self.queue.pop_front() {
            Some(w) => w,
            None => self.rng.next_u64(),
        };
    }

    /// Uniform variate carried by the head word, in `[0, 1)`.
    #[inline]
    pub fn uniform(&self) -> f64 {
        (self.head >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Same variate, centered in its 53-bit cell so it is never 0 or 1.
    #[inline]
    pub fn open_uniform(&self) -> f64 {
        ((self.head >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn head(&self) -> u64 {
        self.head
    }
}

/// Word whose uniform variate falls in the middle of symbol `a`'s interval.
pub fn word_for_symbol(alphabet: &Alphabet, a: usize) -> u64 {
    let lo: f64 = (0..a).map(|b| alphabet.prob(b)).sum();
    let mid = lo + 0.5 * alphabet.prob(a);
    (mid * 2f64.powi(64)) as u64
}

//! Concrete measure-preserving systems, their partitions, and observables.
//!
//! Three systems are provided:
//!
//! - the doubling map, kept as a binary expansion and shifted (never doubled
//!   in floating point);
//! - one-sided Bernoulli shifts over finite or geometric alphabets, kept as
//!   streams of 64-bit words;
//! - the LSV intermittent map, iterated in `f64`.
//!
//! Every [`Point`] owns the generator that extends its stream, so an orbit is
//! a pure function of its seed and workers never share state.

mod bernoulli;
mod doubling;
mod lsv;
mod observable;

pub use bernoulli::{word_for_symbol, Alphabet, WordStream};
pub use doubling::BitStream;
pub use lsv::{LsvMap, LSV_BURN_IN};
pub use observable::{HolderFn, Observable, ObservableKind};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::LabRng;

/// Separation times beyond this are reported as "never separated".
pub const SEPARATION_CAP: u32 = 64;

/// A dynamical system descriptor. Immutable and cheap to share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum System {
    /// `x -> 2x mod 1` with Lebesgue measure; two-cell partition at 1/2.
    Doubling,
    /// Full one-sided shift with product measure, partition by first symbol.
    BernoulliShift {
        alphabet: Alphabet,
        #[serde(default = "default_tau")]
        tau: f64,
    },
    /// LSV map; partition `{[0, 1/2), [1/2, 1]}`.
    Lsv { alpha: f64 },
}

fn default_tau() -> f64 {
    0.5
}

/// A point of one of the systems.
#[derive(Debug, Clone)]
pub enum Point {
    Bits(BitStream),
    Words(WordStream),
    Real(f64),
}

impl System {
    pub fn doubling() -> Self {
        System::Doubling
    }

    pub fn bernoulli(alphabet: Alphabet, tau: f64) -> Result<Self> {
        let s = System::BernoulliShift { alphabet, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn lsv(alpha: f64) -> Result<Self> {
        LsvMap::new(alpha)?;
        Ok(System::Lsv { alpha })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            System::Doubling => Ok(()),
            System::BernoulliShift { alphabet, tau } => {
                if !(*tau > 0.0 && *tau < 1.0) {
                    return Err(Error::invalid("tau must lie in (0, 1)"));
                }
                alphabet.validate()
            }
            System::Lsv { alpha } => LsvMap::new(*alpha).map(|_| ()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::Doubling => "doubling",
            System::BernoulliShift { .. } => "bernoulli",
            System::Lsv { .. } => "lsv",
        }
    }

    /// Metric parameter of the symbolic metric `tau^s(x, y)`.
    pub fn tau(&self) -> f64 {
        match self {
            System::BernoulliShift { tau, .. } => *tau,
            _ => 0.5,
        }
    }

    /// Number of partition cells, `None` when countable.
    pub fn cell_count(&self) -> Option<usize> {
        match self {
            System::Doubling | System::Lsv { .. } => Some(2),
            System::BernoulliShift { alphabet, .. } => alphabet.size(),
        }
    }

    /// Draw a point distributed according to the invariant measure. The
    /// generator moves into the point and extends its stream later.
    pub fn sample_invariant(&self, mut rng: LabRng) -> Point {
        match self {
            System::Doubling => Point::Bits(BitStream::random(rng)),
            System::BernoulliShift { .. } => Point::Words(WordStream::random(rng)),
            System::Lsv { alpha } => {
                let map = LsvMap { alpha: *alpha };
                let mut x: f64 = rng.random();
                for _ in 0..LSV_BURN_IN {
                    x = map.apply(x);
                }
                Point::Real(x)
            }
        }
    }

    /// Lebesgue-distributed point, the natural reference measure. Same as
    /// [`System::sample_invariant`] except for the LSV map, where no
    /// burn-in is applied.
    pub fn sample_reference(&self, mut rng: LabRng) -> Point {
        match self {
            System::Lsv { .. } => Point::Real(rng.random()),
            _ => self.sample_invariant(rng),
        }
    }

    /// Apply `T` once, in place.
    #[inline]
    pub fn step(&self, point: &mut Point) {
        match (self, point) {
            (System::Doubling, Point::Bits(b)) => b.step(),
            (System::BernoulliShift { .. }, Point::Words(w)) => w.step(),
            (System::Lsv { alpha }, Point::Real(x)) => {
                *x = LsvMap { alpha: *alpha }.apply(*x);
            }
            _ => panic!("point does not belong to system {}", self.name()),
        }
    }

    /// Scalar projection of a point: `x` in `[0, 1)` for interval maps, the
    /// uniform variate of the head word for shifts.
    #[inline]
    pub fn coordinate(&self, point: &Point) -> f64 {
        match point {
            Point::Bits(b) => b.coordinate(),
            Point::Words(w) => w.uniform(),
            Point::Real(x) => *x,
        }
    }

    /// Index of the partition atom containing the point.
    #[inline]
    pub fn cell_of(&self, point: &Point) -> usize {
        match (self, point) {
            (System::Doubling, Point::Bits(b)) => b.first_bit(),
            (System::BernoulliShift { alphabet, .. }, Point::Words(w)) => {
                alphabet.symbol(w.uniform())
            }
            (System::Lsv { .. }, Point::Real(x)) => usize::from(*x >= 0.5),
            _ => panic!("point does not belong to system {}", self.name()),
        }
    }

    /// First iterate at which the cells of `x` and `y` differ, or `None`
    /// if they agree for [`SEPARATION_CAP`] steps.
    pub fn separation_time(&self, x: &Point, y: &Point) -> Option<u32> {
        if let (Point::Bits(a), Point::Bits(b)) = (x, y) {
            let diff = a.window() ^ b.window();
            return (diff != 0).then(|| diff.leading_zeros());
        }
        let (mut x, mut y) = (x.clone(), y.clone());
        for s in 0..SEPARATION_CAP {
            if self.cell_of(&x) != self.cell_of(&y) {
                return Some(s);
            }
            self.step(&mut x);
            self.step(&mut y);
        }
        None
    }

    /// `tau^s(x, y)`, with 0 when the points are not separated within the cap.
    pub fn gm_metric(&self, x: &Point, y: &Point) -> f64 {
        match self.separation_time(x, y) {
            Some(s) => self.tau().powi(s as i32),
            None => 0.0,
        }
    }

    /// Code of the cylinder of depth `depth` containing the point: the cells
    /// of `x, Tx, ..., T^(depth-1) x` read in base `cell_count()`.
    pub fn itinerary(&self, point: &Point, depth: u32) -> Result<u64> {
        if let Point::Bits(b) = point {
            if depth > 64 {
                return Err(Error::invalid("itinerary depth above 64"));
            }
            return Ok(b.prefix(depth));
        }
        let k = self.cell_count().ok_or_else(|| {
            Error::UnsupportedSystem("itineraries need a finite partition".into())
        })? as u64;
        if (k as f64).powi(depth as i32) >= u64::MAX as f64 {
            return Err(Error::invalid("itinerary code overflows"));
        }
        let mut p = point.clone();
        let mut code = 0u64;
        for _ in 0..depth {
            code = code * k + self.cell_of(&p) as u64;
            self.step(&mut p);
        }
        Ok(code)
    }

    /// Invariant measure of each cell, when known in closed form.
    pub fn cell_masses(&self) -> Option<Vec<f64>> {
        match self {
            System::Doubling => Some(vec![0.5, 0.5]),
            System::BernoulliShift {
                alphabet: Alphabet::Finite { probs },
                ..
            } => Some(probs.clone()),
            _ => None,
        }
    }
}

impl Point {
    /// Doubling-map point with the binary digits of `x`.
    pub fn doubling_at(x: f64, rng: LabRng) -> Point {
        Point::Bits(BitStream::from_coordinate(x, rng))
    }

    /// Doubling-map point with prescribed leading digits.
    pub fn doubling_bits(bits: &[u8], rng: LabRng) -> Point {
        Point::Bits(BitStream::from_bits(bits, rng))
    }

    /// Shift point whose first symbols are `symbols`.
    pub fn shift_symbols(alphabet: &Alphabet, symbols: &[usize], rng: LabRng) -> Point {
        let words: Vec<u64> = symbols.iter().map(|&a| word_for_symbol(alphabet, a)).collect();
        Point::Words(WordStream::from_words(&words, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{ks_sample, Cdf};
    use crate::rng::replica_rng;
    use proptest::prelude::*;

    struct Uniform01;
    impl Cdf for Uniform01 {
        fn cdf(&self, x: f64) -> f64 {
            x.clamp(0.0, 1.0)
        }
    }

    fn geometric() -> System {
        System::bernoulli(Alphabet::Geometric { q: 0.5 }, 0.5).unwrap()
    }

    #[test]
    fn doubling_start_is_uniform() {
        let sys = System::doubling();
        let mut xs: Vec<f64> = (0..100_000)
            .map(|i| sys.coordinate(&sys.sample_invariant(replica_rng(1, i))))
            .collect();
        let d = ks_sample(&mut xs, &Uniform01).unwrap();
        assert!(d <= 0.006, "{d}");
    }

    #[test]
    fn geometric_first_symbol() {
        let sys = geometric();
        let n = 200_000;
        let zeros = (0..n)
            .filter(|&i| sys.cell_of(&sys.sample_invariant(replica_rng(2, i))) == 0)
            .count();
        let frac = zeros as f64 / n as f64;
        // exact p_0 = 1/2; 5 standard errors
        assert!((frac - 0.5).abs() < 5.0 * (0.25 / n as f64).sqrt(), "{frac}");
    }

    #[test]
    fn lsv_sample_mean_stable_across_seeds() {
        // each invariant draw is followed by a short orbit to cut the cost of
        // burn-in per averaged value
        let sys = System::lsv(0.3).unwrap();
        let means: Vec<f64> = (0..10)
            .map(|seed| {
                let (draws, tail) = (500, 200);
                let mut acc = 0.0;
                for i in 0..draws {
                    let mut p = sys.sample_invariant(replica_rng(seed, i));
                    for _ in 0..tail {
                        acc += sys.coordinate(&p);
                        sys.step(&mut p);
                    }
                }
                acc / (draws * tail) as f64
            })
            .collect();
        let avg = means.iter().sum::<f64>() / 10.0;
        for m in &means {
            assert!((m - avg).abs() / avg < 0.01, "{m} vs {avg}");
        }
    }

    #[test]
    fn doubling_step_is_shift() {
        let sys = System::doubling();
        let bits = [1u8, 0, 1, 1, 0, 0, 1];
        let mut p = Point::doubling_bits(&bits, replica_rng(3, 0));
        for (i, &b) in bits.iter().enumerate() {
            assert_eq!(sys.cell_of(&p), b as usize, "digit {i}");
            sys.step(&mut p);
        }
    }

    #[test]
    fn doubling_survives_long_orbits() {
        let sys = System::doubling();
        let mut p = sys.sample_invariant(replica_rng(9, 0));
        let mut ones = 0usize;
        let n = 100_000;
        for _ in 0..n {
            sys.step(&mut p);
            ones += sys.cell_of(&p);
        }
        assert!(sys.coordinate(&p) > 0.0);
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn lsv_branches() {
        let sys = System::lsv(0.3).unwrap();
        let mut p = Point::Real(0.75);
        sys.step(&mut p);
        assert_eq!(sys.coordinate(&p), 0.5);
        let sys = System::lsv(0.5).unwrap();
        let mut p = Point::Real(0.25);
        sys.step(&mut p);
        let expected = 0.25 * (1.0 + 2f64.sqrt() * 0.5);
        assert!((sys.coordinate(&p) - expected).abs() < 1e-15);
        assert!((expected - 0.426_776_695_296_636_9).abs() < 1e-15);
    }

    #[test]
    fn lsv_left_limit_and_monotone() {
        let map = LsvMap::new(0.4).unwrap();
        let below = 0.5 - 1e-15;
        assert!((map.apply(below) - 1.0).abs() < 1e-12);
        let mut prev = -1.0;
        for i in 0..5000 {
            let x = i as f64 / 10_000.0;
            let y = map.apply(x);
            assert!(y > prev);
            prev = y;
        }
        let mut prev = -1.0;
        for i in 5000..=10_000 {
            let y = map.apply(i as f64 / 10_000.0);
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn lsv_left_inverse_roundtrip() {
        let map = LsvMap::new(0.7).unwrap();
        for i in 1..100 {
            let y = i as f64 / 100.0;
            let x = map.left_inverse(y);
            assert!((map.apply(x) - y).abs() < 1e-14, "{y}");
            assert!(x < 0.5);
        }
    }

    #[test]
    fn metric_examples() {
        let sys = System::doubling();
        let x = Point::doubling_at(0.25, replica_rng(4, 0));
        let y = Point::doubling_at(0.75, replica_rng(4, 1));
        assert_eq!(sys.gm_metric(&x, &y), 1.0);
        assert_eq!(sys.gm_metric(&x, &x.clone()), 0.0);

        let alpha = Alphabet::Finite {
            probs: vec![0.2, 0.3, 0.5],
        };
        let sys = System::bernoulli(alpha.clone(), 0.6).unwrap();
        let x = Point::shift_symbols(&alpha, &[2, 0, 1, 1], replica_rng(5, 0));
        let y = Point::shift_symbols(&alpha, &[2, 0, 1, 0], replica_rng(5, 1));
        assert!((sys.gm_metric(&x, &y) - 0.6f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn metric_expands_by_inverse_tau() {
        let alpha = Alphabet::Finite {
            probs: vec![0.5, 0.5],
        };
        let sys = System::bernoulli(alpha.clone(), 0.25).unwrap();
        for depth in 1..10 {
            let mut a = vec![1usize; depth];
            let mut b = a.clone();
            a.push(0);
            b.push(1);
            let mut x = Point::shift_symbols(&alpha, &a, replica_rng(6, 0));
            let mut y = Point::shift_symbols(&alpha, &b, replica_rng(6, 1));
            let before = sys.gm_metric(&x, &y);
            sys.step(&mut x);
            sys.step(&mut y);
            assert_eq!(sys.gm_metric(&x, &y), before / 0.25);
        }
    }

    #[test]
    fn invariance_of_measure() {
        for sys in [
            System::doubling(),
            geometric(),
            System::lsv(0.3).unwrap(),
        ] {
            let n = 20_000;
            let mut before = Vec::with_capacity(n);
            let mut after = Vec::with_capacity(n);
            for i in 0..n as u64 {
                let mut p = sys.sample_invariant(replica_rng(7, i));
                before.push(sys.coordinate(&p));
                let mut q = sys.sample_invariant(replica_rng(8, i));
                sys.step(&mut q);
                after.push(sys.coordinate(&q));
                sys.step(&mut p);
            }
            let d = crate::laws::ks_two_sample(&mut before, &mut after).unwrap();
            assert!(d <= 0.02, "{}: {d}", sys.name());
        }
    }

    #[test]
    fn itinerary_codes() {
        let sys = System::doubling();
        let p = Point::doubling_bits(&[1, 0, 1], replica_rng(1, 1));
        assert_eq!(sys.itinerary(&p, 3).unwrap(), 0b101);
        let alpha = Alphabet::Finite {
            probs: vec![0.2, 0.3, 0.5],
        };
        let sys = System::bernoulli(alpha.clone(), 0.5).unwrap();
        let p = Point::shift_symbols(&alpha, &[2, 1], replica_rng(1, 2));
        assert_eq!(sys.itinerary(&p, 2).unwrap(), 7);
        assert!(geometric().itinerary(&geometric().sample_invariant(replica_rng(0, 0)), 2).is_err());
    }

    #[test]
    fn serde_roundtrip() {
        let sys = System::bernoulli(Alphabet::Geometric { q: 0.3 }, 0.5).unwrap();
        let s = serde_json::to_string(&sys).unwrap();
        let back: System = serde_json::from_str(&s).unwrap();
        assert_eq!(sys, back);
    }

    proptest! {
        #[test]
        fn doubling_metric_expansion(bits in proptest::collection::vec(0u8..2, 2..40), seed in 0u64..1000) {
            let sys = System::doubling();
            let mut other = bits.clone();
            let last = other.len() - 1;
            other[last] ^= 1;
            let mut x = Point::doubling_bits(&bits, replica_rng(seed, 0));
            let mut y = Point::doubling_bits(&other, replica_rng(seed, 1));
            let d0 = sys.gm_metric(&x, &y);
            prop_assert_eq!(d0, 0.5f64.powi(last as i32));
            sys.step(&mut x);
            sys.step(&mut y);
            prop_assert_eq!(sys.gm_metric(&x, &y), d0 / 0.5);
        }

        #[test]
        fn geometric_symbol_inverse_cdf(u in 0.0f64..1.0, q in 0.05f64..0.95) {
            let a = Alphabet::Geometric { q };
            let s = a.symbol(u);
            // P(symbol >= s) = q^s must straddle 1 - u
            prop_assert!(q.powi(s as i32) >= 1.0 - u - 1e-12);
            prop_assert!(q.powi(s as i32 + 1) <= 1.0 - u + 1e-12);
        }
    }
}

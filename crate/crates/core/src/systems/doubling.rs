use rand::RngCore;

use crate::rng::LabRng;

/// A point of the doubling map `x -> 2x mod 1`, held as its binary expansion.
///
/// `window` holds the next 64 digits (most significant first), `reserve` the
/// following `reserve_len` digits, and the generator extends the stream on
/// demand. Shifting the stream is the map itself, so orbits never lose
/// precision the way repeated float doubling does (which collapses to 0
/// after about 53 steps).
#[derive(Debug, Clone)]
pub struct BitStream {
    window: u64,
    reserve: u64,
    reserve_len: u32,
    rng: LabRng,
}

impl BitStream {
    /// Fair-coin expansion: Lebesgue-distributed point.
    pub fn random(mut rng: LabRng) -> Self {
        let window = rng.next_u64();
        let reserve = rng.next_u64();
        BitStream {
            window,
            reserve,
            reserve_len: 64,
            rng,
        }
    }

    /// Point whose first 64 digits are those of `x` in `[0, 1)`; later digits
    /// are fair coin flips.
    pub fn from_coordinate(x: f64, mut rng: LabRng) -> Self {
        let x = x.clamp(0.0, 1.0 - f64::EPSILON / 2.0);
        let window = (x * 2f64.powi(64)) as u64;
        let reserve = rng.next_u64();
        BitStream {
            window,
            reserve,
            reserve_len: 64,
            rng,
        }
    }

    /// Point with prescribed leading digits (each 0 or 1).
    pub fn from_bits(bits: &[u8], mut rng: LabRng) -> Self {
        assert!(bits.len() <= 64, "at most 64 prescribed digits");
        let mut window = rng.next_u64();
        for (i, &b) in bits.iter().enumerate() {
            let mask = 1u64 << (63 - i);
            if b != 0 {
                window |= mask;
            } else {
                window &= !mask;
            }
        }
        let reserve = rng.next_u64();
        BitStream {
            window,
            reserve,
            reserve_len: 64,
            rng,
        }
    }

    #[inline]
    pub fn step(&mut self) {
        self.window = (self.window << 1) | (self.reserve >> 63);
        self.reserve <<= 1;
        self.reserve_len -= 1;
        if self.reserve_len == 0 {
            self.reserve = self.rng.next_u64();
            self.reserve_len = 64;
        }
    }

    /// `x` rounded down to 53 bits, always in `[0, 1)`.
    #[inline]
    pub fn coordinate(&self) -> f64 {
        (self.window >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// The first `depth <= 64` digits as an integer.
    #[inline]
    pub fn prefix(&self, depth: u32) -> u64 {
        if depth == 0 {
            0
        } else {
            self.window >> (64 - depth)
        }
    }

    #[inline]
    pub fn first_bit(&self) -> usize {
        (self.window >> 63) as usize
    }

    pub fn window(&self) -> u64 {
        self.window
    }
}

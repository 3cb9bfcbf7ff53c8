//! Portable pseudo-random numbers for the scene simulator.
//!
//! Everything here uses only integer operations and IEEE-754 `+ - * /`, so streams are
//! bit-identical on every platform and easy to reproduce in another language:
//!
//! * Seeding: `state = splitmix64(seed + 0x9E3779B97F4A7C15 * (stream + 1))` (wrapping),
//!   replaced by `0x9E3779B97F4A7C15` if it is zero. `splitmix64(z)`:
//!   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9; z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!   z ^ (z >> 31)`.
//! * Update (xorshift64*): `x ^= x >> 12; x ^= x << 25; x ^= x >> 27;`
//!   output `x * 0x2545F4914F6CDD1D` (wrapping).
//! * Uniform `[0, 1)`: `(output >> 11) * 2^-53`.
//! * Integer in `[0, n)`: high 64 bits of the 128-bit product `output * n`.
//! * Standard normal (approximate): sum of 12 uniforms minus 6.
//! * Poisson(lambda): Knuth's product-of-uniforms method against `exp(-lambda)`, where the
//!   exponential is [`portable_exp_neg`].

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn from_stream(seed: u64, stream: u64) -> Self {
        let s = splitmix64(seed.wrapping_add(GOLDEN.wrapping_mul(stream.wrapping_add(1))));
        XorShift64Star {
            state: if s == 0 { GOLDEN } else { s },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn normal(&mut self) -> f64 {
        let mut s = 0.0;
        for _ in 0..12 {
            s += self.uniform();
        }
        s - 6.0
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        let limit = portable_exp_neg(lambda);
        let mut k = 0;
        let mut p = self.uniform();
        while p > limit {
            k += 1;
            p *= self.uniform();
        }
        k
    }
}

/// `exp(-x)` for `x >= 0` using only basic arithmetic: halve `x` until it is below 1/16,
/// sum 20 Taylor terms, then square back up.
pub fn portable_exp_neg(x: f64) -> f64 {
    assert!(x >= 0.0 && x.is_finite(), "portable_exp_neg needs a finite x >= 0");
    let mut y = x;
    let mut halvings = 0;
    while y > 0.0625 {
        y *= 0.5;
        halvings += 1;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=20 {
        term *= -y / f64::from(n);
        sum += term;
    }
    for _ in 0..halvings {
        sum *= sum;
    }
    sum
}

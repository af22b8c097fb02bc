//! Seeded PRNG: xoshiro256++ with splitmix64 seeding.
//!
//! The algorithm is fixed so that a seed identifies one stream on every
//! platform. All stochastic operations in the crate draw from an explicit
//! `Rng`; nothing reads ambient entropy.

/// xoshiro256++ generator (256-bit state) seeded via splitmix64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1): the top 53 bits scaled by 2^-53 (exact arithmetic).
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) via 128-bit multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn usize_below(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Standard normal via Box–Muller (consumes two uniforms).
    pub fn normal_f64(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.usize_below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Derive an independent stream, e.g. one per sweep grid point.
    pub fn fork(&mut self, tag: u64) -> Rng {
        let base = self.next_u64();
        Rng::seed_from(base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from an independent implementation of xoshiro256++ seeded with
    // splitmix64(0).
    const GOLDEN_SEED0: [u64; 16] = [
        0x53175d61490b23df,
        0x61da6f3dc380d507,
        0x5c0fdf91ec9a7bfc,
        0x02eebf8c3bbe5e1a,
        0x7eca04ebaf4a5eea,
        0x0543c37757f08d9a,
        0xdb7490c75ab5026e,
        0xd87343e6464bc959,
        0x4b7da0a02389f0ff,
        0x1300fc58c0424c16,
        0x5084843206c19968,
        0x10ea073de9aa4dfc,
        0x1aae554343960cc1,
        0x1804139f10fae720,
        0x10d790e7b8ac10fa,
        0x667d2bffdd1496f7,
    ];

    #[test]
    fn seed0_stream_matches_golden_vector() {
        let mut rng = Rng::seed_from(0);
        for (i, &want) in GOLDEN_SEED0.iter().enumerate() {
            assert_eq!(rng.next_u64(), want, "mismatch at draw {i}");
        }
    }

    #[test]
    fn seed7_spot_check() {
        let mut rng = Rng::seed_from(7);
        assert_eq!(rng.next_u64(), 0x0e2c1a002aae913d);
        assert_eq!(rng.next_u64(), 0x2c0fc8ddfa4e9e14);
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let mut a = Rng::seed_from(42);
        let mut b = Rng::seed_from(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.normal_f64(), b.normal_f64());
    }

    #[test]
    fn uniform_from_top_bits_is_exact() {
        let mut rng = Rng::seed_from(0);
        assert_eq!(rng.uniform_f64(), 0.3245752680314067);
        assert_eq!(rng.uniform_f64(), 0.38223929651167343);
        assert_eq!(rng.uniform_f64(), 0.3596172076473553);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Rng::seed_from(3);
        for _ in 0..1000 {
            assert!(rng.below(7) < 7);
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = Rng::seed_from(5);
        let mut xs: Vec<u32> = (0..50).collect();
        rng.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, (0..50).collect::<Vec<_>>());
    }
}

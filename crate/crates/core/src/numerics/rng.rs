//! Deterministic seeded random generator (xoshiro256++ with splitmix64
//! seeding). Identical seeds give identical streams within this crate; no
//! cross-language bit compatibility is promised.

/// Single-owner random generator. Sweeps create one per (seed, task) rather
/// than sharing instances across threads.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
    spare_normal: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let state = [
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
        ];
        Self { state, spare_normal: None }
    }

    /// Independent stream for a named sub-task of `seed` (graph generation vs
    /// model init, per-repetition workers, ...).
    pub fn for_task(seed: u64, task: u64) -> Self {
        let mut s = seed ^ task.wrapping_mul(0xd1342543de82ef95);
        let mixed = splitmix64(&mut s);
        Self::new(mixed)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[a, b)`.
    #[inline]
    pub fn uniform(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.next_f64()
    }

    pub fn uniform_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }

    /// Standard normal via the Box-Muller transform (pairs are cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Number of failures before reaching the next success of a Bernoulli(p)
    /// process; used to jump over non-edges when sampling sparse blocks.
    #[inline]
    pub fn geometric_skip(&mut self, p: f64) -> usize {
        debug_assert!(p > 0.0 && p < 1.0);
        let u = 1.0 - self.next_f64(); // (0, 1]
        // ln_1p keeps the denominator nonzero for p below f64 epsilon.
        let skip = (u.ln() / (-p).ln_1p()).floor();
        if skip.is_nan() || skip < 0.0 {
            0
        } else if skip >= usize::MAX as f64 {
            usize::MAX
        } else {
            skip as usize
        }
    }
}

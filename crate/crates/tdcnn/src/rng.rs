/// Deterministic xorshift64* generator.
///
/// Every seeded weight or fixture in the engine comes from this generator so
/// that identical seeds give bit-identical tensors on every platform. The
/// update is Marsaglia's xorshift (12/25/27) followed by the odd-constant
/// multiply; a zero seed is remapped to a fixed nonzero state.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

const ZERO_SEED_STATE: u64 = 0x9E37_79B9_7F4A_7C15;
const MULTIPLIER: u64 = 0x2545_F491_4F6C_DD1D;

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = if seed == 0 { ZERO_SEED_STATE } else { seed };
        XorShift64Star { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.state;
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        self.state = s;
        s.wrapping_mul(MULTIPLIER)
    }

    /// Uniform value in [-1, 1). Uses the top 24 bits of the raw output so
    /// the mapping is exact in f32, hence platform-independent.
    pub fn next_unit(&mut self) -> f32 {
        let u24 = (self.next_u64() >> 40) as f32;
        2.0 * (u24 / 16_777_216.0) - 1.0
    }

    /// Uniform integer in [0, n). n must be nonzero. Uses rejection-free
    /// modulo reduction; the tiny bias is irrelevant for fixture generation.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }
}

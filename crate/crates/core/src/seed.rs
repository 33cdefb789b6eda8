//! Hierarchical seed derivation.
//!
//! Every random quantity in an experiment is drawn from a generator whose seed
//! is derived from the master seed and a stream tag, so samples can be built in
//! any order (or in parallel) and still come out identical.

use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rng = ChaCha8Rng;

/// Stream tags for the top-level split of the master seed.
pub mod stream {
    pub const GAIN_MODEL: u64 = 0x6761_696e;
    pub const CALIBRATION: u64 = 0x6361_6c69;
    pub const SAMPLE: u64 = 0x7361_6d70;
    pub const SPLIT: u64 = 0x7370_6c74;
    pub const INIT: u64 = 0x696e_6974;
    pub const SHUFFLE: u64 = 0x7368_7566;
    pub const PATHS: u64 = 0x7061_7468;
    pub const NOISE: u64 = 0x6e6f_6973;
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of child `index` in stream `tag` of `parent`.
pub fn derive(parent: u64, tag: u64, index: u64) -> u64 {
    let a = mix(parent.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let b = mix(a ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    mix(b ^ index.wrapping_add(0x632b_e59b_d9b4_e019))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_normal(rng: &mut Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

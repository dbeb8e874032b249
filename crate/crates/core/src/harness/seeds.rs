//! Stable per-run seed derivation, independent of execution order.

pub(crate) const DRIVE_STREAM: u64 = 0x4452_4956;
pub(crate) const NOISE_STREAM: u64 = 0x4e4f_4953;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ salt)
}

/// Seed for run `run` of sweep cell `cell`.
pub fn run_seed(master: u64, cell: u64, run: u64) -> u64 {
    mix_seed(mix_seed(master, cell), run)
}

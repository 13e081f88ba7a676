// SPDX-License-Identifier: Apache-2.0

use num_complex::Complex64;

use crate::linalg::{re, CMat};

/// Small deterministic generator for test fixtures.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03)
    }

    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

pub fn random_matrix(rng: &mut Lcg, d: usize) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        Complex64::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
    })
}

pub fn random_hermitian(rng: &mut Lcg, d: usize) -> CMat {
    let m = random_matrix(rng, d);
    (&m + m.adjoint()) * re(0.5)
}

//! Counter-based normal draws.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path)`; within the
//! stream, step `s` starts at a fixed word offset, so a draw is a pure
//! function of `(seed, path, step, slot)` and never depends on which worker
//! produced it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS_PER_U64: u128 = 2;

#[derive(Debug, Clone)]
pub struct PathStream {
    rng: ChaCha8Rng,
    draws_per_step: u32,
    spare: Option<f64>,
    /// Step whose first draw is the next output, when known.
    cursor: Option<u64>,
}

impl PathStream {
    /// Stream for one path. Each step reserves room for `draws_per_step`
    /// standard normals.
    pub fn new(seed: u64, path: u64, draws_per_step: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self {
            rng,
            draws_per_step: draws_per_step.max(1),
            spare: None,
            cursor: Some(0),
        }
    }

    /// Jump to the first draw of `step`. Sequential access skips the seek,
    /// which would otherwise refill the block buffer.
    pub fn at_step(&mut self, step: u64) {
        if self.cursor == Some(step) {
            return;
        }
        self.rng.set_word_pos(u128::from(step) * self.words_per_step());
        self.spare = None;
        self.cursor = Some(step);
    }

    fn words_per_step(&self) -> u128 {
        // Box–Muller consumes two uniforms per pair of normals.
        let pairs = u128::from(self.draws_per_step).div_ceil(2);
        pairs * 2 * WORDS_PER_U64
    }

    /// Uniform on (0, 1].
    pub fn uniform(&mut self) -> f64 {
        self.cursor = None;
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            self.cursor = None;
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// The `n` normals reserved for `step`.
    pub fn step_normals<const N: usize>(&mut self, step: u64) -> [f64; N] {
        assert!(N as u32 <= self.draws_per_step);
        self.at_step(step);
        let out = std::array::from_fn(|_| self.normal());
        // Skip whatever the step reserved but did not use.
        let used = 2 * WORDS_PER_U64 * (N as u128).div_ceil(2);
        if used == self.words_per_step() {
            self.spare = None;
            self.cursor = Some(step + 1);
        } else {
            self.cursor = None;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::CompensatedSum;

    #[test]
    fn draws_are_keyed_not_sequential() {
        let mut a = PathStream::new(7, 3, 2);
        let first: [f64; 2] = a.step_normals(5);
        let _: [f64; 2] = a.step_normals(0);
        let again: [f64; 2] = a.step_normals(5);
        assert_eq!(first, again);
        let mut b = PathStream::new(7, 3, 2);
        assert_eq!(b.step_normals::<2>(5), first);
        let mut other_path = PathStream::new(7, 4, 2);
        assert_ne!(other_path.step_normals::<2>(5), first);
        let mut other_seed = PathStream::new(8, 3, 2);
        assert_ne!(other_seed.step_normals::<2>(5), first);
    }

    #[test]
    fn steps_do_not_overlap() {
        let mut s = PathStream::new(1, 0, 3);
        let a: [f64; 3] = s.step_normals(0);
        let b: [f64; 3] = s.step_normals(1);
        assert!(a.iter().all(|x| !b.contains(x)));
    }

    #[test]
    fn sequential_and_random_access_agree() {
        let mut seq = PathStream::new(5, 9, 2);
        let forward: Vec<[f64; 2]> = (0..40).map(|k| seq.step_normals(k)).collect();
        let mut jump = PathStream::new(5, 9, 2);
        for k in (0..40).rev() {
            assert_eq!(jump.step_normals::<2>(k), forward[k as usize]);
        }
        let mut partial = PathStream::new(5, 9, 2);
        assert_eq!(partial.step_normals::<1>(3)[0], forward[3][0]);
        assert_eq!(partial.step_normals::<2>(4), forward[4]);
    }

    #[test]
    fn normal_moments() {
        let n = 200_000;
        let mut s = PathStream::new(42, 0, 1);
        let mut m1 = CompensatedSum::new();
        let mut m2 = CompensatedSum::new();
        let mut m4 = CompensatedSum::new();
        for _ in 0..n {
            let z = s.normal();
            m1.add(z);
            m2.add(z * z);
            m4.add(z.powi(4));
        }
        let nf = n as f64;
        assert!((m1.value() / nf).abs() < 4.0 / nf.sqrt());
        assert!((m2.value() / nf - 1.0).abs() < 4.0 * 2f64.sqrt() / nf.sqrt());
        assert!((m4.value() / nf - 3.0).abs() < 4.0 * 96f64.sqrt() / nf.sqrt());
    }

    #[test]
    fn uniform_range() {
        let mut s = PathStream::new(0, 0, 1);
        assert!((0..10_000).map(|_| s.uniform()).all(|u| u > 0.0 && u <= 1.0));
    }
}

//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha::ChaCha8Rng`)
//! seeded with `seed_from_u64(seed)` and switched to a numbered stream with
//! `set_stream`. ChaCha8 is a counter-based generator with a fixed, portable
//! output sequence, so fixtures reproduce bit-for-bit across platforms.
//! Gaussian draws use `rand_distr::StandardNormal`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dictionary::SignedPermutation;

pub type SeededRng = ChaCha8Rng;

/// Stream ids used across the crate. Distinct purposes never share a stream.
pub mod streams {
    pub const GLOBAL_DICTIONARY: u64 = 1;
    pub const LOCAL_DICTIONARY: u64 = 0x100;
    pub const CODES: u64 = 0x200;
    pub const PERTURB: u64 = 0x300;
    pub const WARM_START: u64 = 0x400;
    pub const BETA_CANDIDATES: u64 = 0x500;
    pub const SPLIT: u64 = 0x600;
    /// Per-client seeds derived from a run seed (`+ client`).
    pub const CLIENT_SEEDS: u64 = 0x1_0000;
}

pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A seed for client `client` derived from the run seed.
pub fn client_seed(seed: u64, client: usize) -> u64 {
    stream(seed, streams::CLIENT_SEEDS + client as u64).random()
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Draws fill the column-major storage in order.
    let values: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_vec(rows, cols, values)
}

pub fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

pub fn signed_permutation<R: Rng>(rng: &mut R, r: usize) -> SignedPermutation {
    let mut perm: Vec<usize> = (0..r).collect();
    perm.shuffle(rng);
    let signs = (0..r)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    SignedPermutation::new(perm, signs).expect("shuffle yields a bijection")
}

/// Extends `basis` (orthonormal columns, possibly zero of them) to `total`
/// orthonormal columns in `dim` dimensions using Gaussian draws and
/// two passes of modified Gram-Schmidt. Existing columns are copied unchanged.
pub fn extend_orthonormal<R: Rng>(
    rng: &mut R,
    basis: &DMatrix<f64>,
    dim: usize,
    total: usize,
) -> DMatrix<f64> {
    assert!(
        total <= dim,
        "cannot fit {total} orthonormal columns in R^{dim}"
    );
    let mut out = DMatrix::zeros(dim, total);
    let keep = basis.ncols().min(total);
    for j in 0..keep {
        out.set_column(j, &basis.column(j));
    }
    let mut j = keep;
    while j < total {
        let mut v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        for _ in 0..2 {
            for k in 0..j {
                let q = out.column(k);
                let proj = q.dot(&v);
                v.axpy(-proj, &q, 1.0);
            }
        }
        let norm = v.norm();
        if norm < 1e-8 {
            continue;
        }
        out.set_column(j, &(v / norm));
        j += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = gaussian_matrix(&mut stream(7, 1), 3, 3);
        let b = gaussian_matrix(&mut stream(7, 1), 3, 3);
        let c = gaussian_matrix(&mut stream(7, 2), 3, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn extension_is_orthonormal() {
        let mut rng = stream(3, 9);
        let q = extend_orthonormal(&mut rng, &DMatrix::zeros(5, 0), 5, 5);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(5, 5)).norm() < 1e-12);
    }
}

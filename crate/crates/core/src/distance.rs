//! Signed-permutation-invariant distances between dictionaries, plus the
//! incoherence and identifiability diagnostics built on them.
//!
//! Conventions: a [`SignedPermutation`] `pi` acts on the right, so column `k`
//! of `D pi` is `signs[k] * D[:, perm[k]]`. `dist_12(D1, D2)` minimises
//! `max_k || (D1 pi - D2)[:, k] ||_2` over all signed permutations.

use nalgebra::DMatrix;

use crate::assignment::bottleneck_assignment;
use crate::dictionary::{Dictionary, SignedPermutation};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// `min(||a - b||, ||a + b||)`.
pub fn vector_d2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::mismatch("vector_d2", a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "vector_d2",
        });
    }
    Ok(signed_gap(a, b).0)
}

/// The distance `min_s ||s a - b||` together with the minimising sign.
/// Ties go to `+1`. Inputs are assumed finite and of equal length.
pub(crate) fn signed_gap(a: &[f64], b: &[f64]) -> (f64, i8) {
    let mut minus = 0.0;
    let mut plus = 0.0;
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    if minus <= plus {
        (minus.sqrt(), 1)
    } else {
        (plus.sqrt(), -1)
    }
}

fn check_same_dim(context: &'static str, a: &Dictionary, b: &Dictionary) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::mismatch(context, a.dim(), b.dim()));
    }
    Ok(())
}

/// Pairwise `vector_d2` costs: entry `(k, j)` compares `target[:, k]` with `source[:, j]`.
fn cost_matrix(source: &Dictionary, target: &Dictionary) -> DMatrix<f64> {
    DMatrix::from_fn(target.atoms(), source.atoms(), |k, j| {
        signed_gap(source.atom_slice(j), target.atom_slice(k)).0
    })
}

/// Result of aligning the columns of a source dictionary to a target.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Largest per-column distance after alignment.
    pub value: f64,
    /// Source column matched to each target column.
    pub indices: Vec<usize>,
    /// Sign applied to each matched source column.
    pub signs: Vec<i8>,
}

/// Matches every column of `target` to a distinct column of `source` so that the
/// worst column distance (up to sign) is minimal. `source` may have more columns
/// than `target`; the unmatched ones are ignored.
pub fn align_columns(source: &Dictionary, target: &Dictionary) -> Result<Alignment> {
    check_same_dim("column alignment", source, target)?;
    if source.atoms() < target.atoms() {
        return Err(Error::mismatch(
            "column alignment",
            format!(">= {} source columns", target.atoms()),
            source.atoms(),
        ));
    }
    let cost = cost_matrix(source, target);
    let solved = bottleneck_assignment(&cost);
    let signs = solved
        .columns
        .iter()
        .enumerate()
        .map(|(k, &j)| signed_gap(source.atom_slice(j), target.atom_slice(k)).1)
        .collect();
    Ok(Alignment {
        value: solved.value,
        indices: solved.columns,
        signs,
    })
}

/// The signed-permutation-invariant l_{1,2} distance and a minimising permutation.
///
/// Among minimisers the lexicographically smallest index sequence is returned,
/// with each sign resolved toward `+1` on ties.
pub fn dist_12(d1: &Dictionary, d2: &Dictionary) -> Result<(f64, SignedPermutation)> {
    check_same_dim("dist_12", d1, d2)?;
    if d1.atoms() != d2.atoms() {
        return Err(Error::mismatch("dist_12", d1.atoms(), d2.atoms()));
    }
    let a = align_columns(d1, d2)?;
    let pi = SignedPermutation::new(a.indices, a.signs)?;
    Ok((a.value, pi))
}

/// Per-column residual norms `||(D1 pi - D2)[:, j]||_2`.
pub fn dist_2_columns(
    d1: &Dictionary,
    d2: &Dictionary,
    pi: &SignedPermutation,
) -> Result<Vec<f64>> {
    check_same_dim("dist_2_columns", d1, d2)?;
    if d1.atoms() != d2.atoms() {
        return Err(Error::mismatch("dist_2_columns", d1.atoms(), d2.atoms()));
    }
    let permuted = d1.apply(pi)?;
    Ok((0..d2.atoms())
        .map(|j| (permuted.atom(j) - d2.atom(j)).norm())
        .collect())
}

/// Largest number of columns accepted by [`dist_2_spectral`].
pub const SPECTRAL_MAX_ATOMS: usize = 8;

/// The spectral-norm variant `min_pi ||D1 pi - D2||_2`, by exhaustive enumeration.
///
/// Cost grows as `2^r r!`, so only `r <= 8` is accepted. Nothing in the
/// algorithms needs it at matrix level; it exists for diagnostics.
pub fn dist_2_spectral(d1: &Dictionary, d2: &Dictionary) -> Result<(f64, SignedPermutation)> {
    check_same_dim("dist_2_spectral", d1, d2)?;
    let r = d1.atoms();
    if r != d2.atoms() {
        return Err(Error::mismatch("dist_2_spectral", r, d2.atoms()));
    }
    if r > SPECTRAL_MAX_ATOMS {
        return Err(Error::Unsupported(format!(
            "spectral dictionary distance is exhaustive and limited to {SPECTRAL_MAX_ATOMS} atoms, got {r}"
        )));
    }
    let mut best: Option<(f64, SignedPermutation)> = None;
    for_each_signed_permutation(r, |pi| {
        let diff = d1.apply(pi).expect("sizes checked").into_matrix() - d2.matrix();
        let value = diff.singular_values().max();
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, pi.clone()));
        }
    });
    Ok(best.expect("at least one permutation"))
}

/// Visits every signed permutation of `r` columns: permutations in
/// lexicographic order, and for each, sign patterns from all `+1` upward.
pub(crate) fn for_each_signed_permutation(r: usize, mut f: impl FnMut(&SignedPermutation)) {
    fn rec(prefix: &mut Vec<usize>, r: usize, f: &mut dyn FnMut(&[usize])) {
        if prefix.len() == r {
            f(prefix);
            return;
        }
        for c in 0..r {
            if !prefix.contains(&c) {
                prefix.push(c);
                rec(prefix, r, f);
                prefix.pop();
            }
        }
    }
    rec(&mut Vec::with_capacity(r), r, &mut |perm| {
        for mask in 0u32..(1 << r) {
            let signs = (0..r)
                .map(|k| if mask >> k & 1 == 1 { -1 } else { 1 })
                .collect();
            let pi = SignedPermutation::new(perm.to_vec(), signs).expect("valid by construction");
            f(&pi);
        }
    });
}

/// Empirical incoherence `sqrt(d) * max_{j != k} |<D_j, D_k>|`.
///
/// Fewer than two atoms have no pairs; the result is then 0.
pub fn incoherence(dict: &Dictionary) -> Result<f64> {
    if !dict.is_unit_norm() {
        return Err(Error::InvalidConfig(
            "incoherence is defined for unit-norm dictionaries".into(),
        ));
    }
    let r = dict.atoms();
    if r < 2 {
        log::debug!("incoherence of a dictionary with {r} atom(s) is 0 by convention");
        return Ok(0.0);
    }
    let gram = dict.matrix().transpose() * dict.matrix();
    let mut worst: f64 = 0.0;
    for j in 0..r {
        for k in 0..r {
            if j != k {
                worst = worst.max(gram[(j, k)].abs());
            }
        }
    }
    Ok((dict.dim() as f64).sqrt() * worst)
}

/// Surrogate for the identifiability constant of a set of local dictionaries.
///
/// Evaluates `max_i min_j vector_d2(L_i[:, j], v)` at every local atom `v`
/// plus `random_candidates` uniform unit vectors drawn from `seed`, and returns
/// the smallest value. Because the exact quantity is an infimum over the whole
/// sphere, this is an upper bound on it over the sampled candidates only.
pub fn estimate_beta(locals: &[Dictionary], random_candidates: usize, seed: u64) -> Result<f64> {
    let first = locals.first().ok_or_else(|| {
        Error::InvalidConfig("identifiability needs at least one local dictionary".into())
    })?;
    let dim = first.dim();
    for (i, l) in locals.iter().enumerate() {
        if l.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "local dictionary of client {i} is empty; identifiability is undefined"
            )));
        }
        if l.dim() != dim {
            return Err(Error::mismatch("estimate_beta", dim, l.dim()));
        }
    }

    let score = |v: &[f64]| -> f64 {
        locals
            .iter()
            .map(|l| {
                (0..l.atoms())
                    .map(|j| signed_gap(l.atom_slice(j), v).0)
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };

    let mut best = f64::INFINITY;
    for l in locals {
        for j in 0..l.atoms() {
            best = best.min(score(l.atom_slice(j)));
        }
    }
    let mut rng = rng::stream(seed, streams::BETA_CANDIDATES);
    for _ in 0..random_candidates {
        let v = rng::unit_vector(&mut rng, dim);
        best = best.min(score(v.as_slice()));
    }
    Ok(best)
}

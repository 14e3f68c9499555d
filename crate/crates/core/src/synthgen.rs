//! Ground-truth generation for the noiseless model `Y_i = [D_g D_l,i] X_i`.
//!
//! Dictionaries are orthonormal: a shared random orthonormal block is extended
//! per client with random orthonormal local atoms. Codes are Gaussian-Bernoulli
//! (standard normal times Bernoulli(p)) with every nonzero of magnitude below
//! the truncation level `c` replaced by `c * sign`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dictionary::{Dictionary, SignedPermutation, SparseCode};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_clients: usize,
    pub dim: usize,
    pub atoms_per_client: usize,
    pub global_atoms: usize,
    pub samples_per_client: usize,
    /// Per-client sample counts that replace `samples_per_client`.
    pub sample_overrides: BTreeMap<usize, usize>,
    pub bernoulli_p: f64,
    pub truncation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_clients: 10,
            dim: 6,
            atoms_per_client: 6,
            global_atoms: 3,
            samples_per_client: 200,
            sample_overrides: BTreeMap::new(),
            bernoulli_p: 0.2,
            truncation: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.num_clients == 0 {
            return fail("num_clients must be at least 1".into());
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if self.global_atoms > self.atoms_per_client {
            return fail(format!(
                "global_atoms ({}) exceeds atoms_per_client ({})",
                self.global_atoms, self.atoms_per_client
            ));
        }
        if self.atoms_per_client == 0 {
            return fail("atoms_per_client must be at least 1".into());
        }
        if (0..self.num_clients).any(|i| self.samples(i) == 0) {
            return fail("every client needs at least one sample".into());
        }
        if !(self.bernoulli_p > 0.0 && self.bernoulli_p <= 1.0) {
            return fail(format!(
                "bernoulli_p = {} must lie in (0, 1]",
                self.bernoulli_p
            ));
        }
        if !(self.truncation >= 0.0 && self.truncation.is_finite()) {
            return fail(format!("truncation = {} must be >= 0", self.truncation));
        }
        if let Some(&i) = self
            .sample_overrides
            .keys()
            .find(|&&i| i >= self.num_clients)
        {
            return fail(format!(
                "sample override for client {i} but only {} clients",
                self.num_clients
            ));
        }
        Ok(())
    }

    pub fn samples(&self, client: usize) -> usize {
        self.sample_overrides
            .get(&client)
            .copied()
            .unwrap_or(self.samples_per_client)
    }

    pub fn local_atoms(&self) -> usize {
        self.atoms_per_client - self.global_atoms
    }
}

/// Generated dictionaries, codes and data for every client.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub global: Dictionary,
    pub locals: Vec<Dictionary>,
    pub codes: Vec<SparseCode>,
    pub data: Vec<DMatrix<f64>>,
}

impl GroundTruth {
    pub fn num_clients(&self) -> usize {
        self.locals.len()
    }

    /// `[D_g D_l,i]`.
    pub fn client_dictionary(&self, client: usize) -> Dictionary {
        self.global
            .hconcat(&self.locals[client])
            .expect("generated blocks share a dimension")
    }
}

/// Shared global block and per-client local blocks, each client's concatenation
/// having orthonormal columns.
pub fn generate_dictionaries(cfg: &SynthConfig) -> Result<(Dictionary, Vec<Dictionary>)> {
    cfg.validate()?;
    if cfg.atoms_per_client > cfg.dim {
        return Err(Error::InvalidConfig(format!(
            "orthogonal construction needs atoms_per_client ({}) <= dim ({})",
            cfg.atoms_per_client, cfg.dim
        )));
    }
    let mut g_rng = rng::stream(cfg.seed, streams::GLOBAL_DICTIONARY);
    let global = rng::extend_orthonormal(
        &mut g_rng,
        &DMatrix::zeros(cfg.dim, 0),
        cfg.dim,
        cfg.global_atoms,
    );

    let locals = (0..cfg.num_clients)
        .map(|i| {
            let mut l_rng = rng::stream(cfg.seed, streams::LOCAL_DICTIONARY + i as u64);
            let full = rng::extend_orthonormal(&mut l_rng, &global, cfg.dim, cfg.atoms_per_client);
            let local = full
                .columns(cfg.global_atoms, cfg.local_atoms())
                .into_owned();
            Dictionary::with_any_width(local)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dictionary::with_any_width(global)?, locals))
}

/// An `r x n` Gaussian-Bernoulli code truncated away from zero, drawn from `rng`.
pub fn generate_codes<R: Rng>(
    cfg: &SynthConfig,
    r: usize,
    n: usize,
    rng: &mut R,
) -> Result<SparseCode> {
    cfg.validate()?;
    let c = cfg.truncation;
    let mut values = Vec::with_capacity(r * n);
    for _ in 0..r * n {
        // Both draws happen unconditionally so the stream layout is fixed.
        let keep = rng.random::<f64>() < cfg.bernoulli_p;
        let z: f64 = rng.sample(StandardNormal);
        let x = if keep { z } else { 0.0 };
        let x = if x != 0.0 && x.abs() < c {
            c * x.signum()
        } else {
            x
        };
        values.push(x);
    }
    SparseCode::new(DMatrix::from_vec(r, n, values))
}

/// Dictionaries, codes and data for every client of `cfg`.
pub fn generate(cfg: &SynthConfig) -> Result<GroundTruth> {
    let (global, locals) = generate_dictionaries(cfg)?;
    let mut codes = Vec::with_capacity(cfg.num_clients);
    let mut data = Vec::with_capacity(cfg.num_clients);
    for (i, local) in locals.iter().enumerate() {
        let mut c_rng = rng::stream(cfg.seed, streams::CODES + i as u64);
        let code = generate_codes(cfg, cfg.atoms_per_client, cfg.samples(i), &mut c_rng)?;
        let dict = global.hconcat(local)?;
        data.push(dict.matrix() * code.matrix());
        codes.push(code);
    }
    Ok(GroundTruth {
        global,
        locals,
        codes,
        data,
    })
}

/// A copy of `dict` whose columns are each moved by at most `eps` (Euclidean),
/// then shuffled by a random signed permutation.
///
/// Every column `a` is rotated toward a random tangent direction `t` by an
/// angle chosen so that `||a' - a||` is uniform in `[0, eps)`. Returns the new
/// dictionary and the applied signed permutation.
pub fn perturb_dictionary(
    dict: &Dictionary,
    eps: f64,
    seed: u64,
) -> Result<(Dictionary, SignedPermutation)> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidConfig(format!("eps = {eps} must be >= 0")));
    }
    let mut rng = rng::stream(seed, streams::PERTURB);
    let mut m = dict.matrix().clone();
    for j in 0..dict.atoms() {
        let a = dict.atom(j).into_owned();
        let gap = eps.min(2.0) * rng.random::<f64>();
        let mut t = rng::unit_vector(&mut rng, dict.dim());
        if eps == 0.0 {
            continue;
        }
        t.axpy(-a.dot(&t), &a, 1.0);
        let norm = t.norm();
        if norm < 1e-12 {
            continue;
        }
        t /= norm;
        // ||cos(th) a + sin(th) t - a|| = 2 sin(th / 2)
        let theta = 2.0 * (gap / 2.0).asin();
        let moved = a.norm() * (a.normalize() * theta.cos() + t * theta.sin());
        m.set_column(j, &moved);
    }
    let pi = rng::signed_permutation(&mut rng, dict.atoms());
    let moved = Dictionary::new(m)?.apply(&pi)?;
    Ok((moved, pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{dist_12, incoherence};

    #[test]
    fn default_config_matches_reference_setup() {
        let cfg = SynthConfig::default();
        let gt = generate(&cfg).unwrap();
        assert_eq!(gt.num_clients(), 10);
        for i in 0..10 {
            let d = gt.client_dictionary(i);
            assert_eq!(d.matrix().shape(), (6, 6));
            let gram = d.matrix().transpose() * d.matrix();
            assert!((gram - DMatrix::identity(6, 6)).norm() < 1e-12);
            assert!(incoherence(&d).unwrap() < 1e-12);
            assert_eq!(gt.data[i].shape(), (6, 200));
        }
    }

    #[test]
    fn exact_factorization_and_truncation() {
        let gt = generate(&SynthConfig::default()).unwrap();
        for i in 0..gt.num_clients() {
            let recon = gt.client_dictionary(i).matrix() * gt.codes[i].matrix();
            assert!((&gt.data[i] - recon).norm() <= 1e-12);
            assert!(gt.codes[i]
                .matrix()
                .iter()
                .all(|x| *x == 0.0 || x.abs() >= 0.3));
        }
    }

    #[test]
    fn homogeneous_case_has_empty_locals() {
        let cfg = SynthConfig {
            global_atoms: 6,
            ..SynthConfig::default()
        };
        let (g, locals) = generate_dictionaries(&cfg).unwrap();
        assert_eq!(g.atoms(), 6);
        assert!(locals.iter().all(Dictionary::is_empty));
    }

    #[test]
    fn rejects_overcomplete_orthogonal() {
        let cfg = SynthConfig {
            atoms_per_client: 7,
            ..SynthConfig::default()
        };
        assert!(generate_dictionaries(&cfg).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            seed: 99,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 100,
            ..cfg.clone()
        };
        assert_ne!(
            generate(&other).unwrap().global,
            generate(&cfg).unwrap().global
        );
    }

    #[test]
    fn dense_untruncated_codes() {
        let cfg = SynthConfig {
            bernoulli_p: 1.0,
            truncation: 0.0,
            ..SynthConfig::default()
        };
        let code = generate_codes(&cfg, 4, 50, &mut rng::stream(1, 1)).unwrap();
        assert_eq!(code.sparsity(), 1.0);
    }

    #[test]
    fn perturbation_stays_within_eps() {
        let gt = generate(&SynthConfig::default()).unwrap();
        let d = gt.client_dictionary(0);
        for seed in 0..20 {
            let (p, _) = perturb_dictionary(&d, 0.05, seed).unwrap();
            assert!(p.is_unit_norm());
            assert!(dist_12(&p, &d).unwrap().0 <= 0.05);
        }
        let (same, _) = perturb_dictionary(&d, 0.0, 3).unwrap();
        assert_eq!(dist_12(&same, &d).unwrap().0, 0.0);
    }

    #[test]
    fn perturbation_permutation_is_recovered() {
        let gt = generate(&SynthConfig::default()).unwrap();
        let d = gt.client_dictionary(2);
        // Orthonormal atoms are sqrt(2) apart, so eps = 0.05 is far below half of that.
        let (p, applied) = perturb_dictionary(&d, 0.05, 8).unwrap();
        let (_, found) = dist_12(&p, &d).unwrap();
        assert_eq!(found.perm(), applied.inverse().perm());
        assert_eq!(found.signs(), applied.inverse().signs());
    }
}

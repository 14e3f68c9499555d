//! Per-client dictionary-learning iterations.
//!
//! Both solvers alternate a thresholded analysis code `X = HT_zeta(D^T Y)` with
//! a dictionary update:
//!
//! * orthogonal: `D+ = Polar(Y X^T)`;
//! * general: `D+ = D - 2 eta (D X - Y) X^T`, optionally followed by column
//!   renormalisation.
//!
//! A single iteration is what the federated loop calls once per round; the
//! warm start runs many of them with a shrinking threshold.

use nalgebra::{DMatrix, SVD};

use crate::dictionary::{Dictionary, PartitionedDictionary, SparseCode};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Smallest singular value accepted by [`polar`].
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlKind {
    Orthogonal,
    General,
}

/// Step size of the general solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `eta = 1 / (2 ||X||_2^2)` recomputed from the current code at every
    /// step, the inverse Lipschitz constant of the squared loss in `D`.
    Auto,
}

/// One dictionary-learning iteration `D -> D+` with its settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlAlgorithm {
    pub kind: DlKind,
    pub threshold: f64,
    pub step_size: StepSize,
    pub renormalize: bool,
}

impl DlAlgorithm {
    pub fn orthogonal(threshold: f64) -> Self {
        Self {
            kind: DlKind::Orthogonal,
            threshold,
            step_size: StepSize::Auto,
            renormalize: true,
        }
    }

    pub fn general(threshold: f64, step_size: StepSize) -> Self {
        Self {
            kind: DlKind::General,
            threshold,
            step_size,
            renormalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold = {} must be >= 0",
                self.threshold
            )));
        }
        if let (DlKind::General, StepSize::Fixed(eta)) = (self.kind, self.step_size) {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidConfig(format!("step size {eta} must be > 0")));
            }
        }
        Ok(())
    }

    /// One iteration at this algorithm's threshold.
    pub fn step(&self, y: &DMatrix<f64>, dict: &Dictionary) -> Result<(Dictionary, SparseCode)> {
        self.step_at(y, dict, self.threshold)
    }

    /// One iteration at an explicit threshold.
    pub fn step_at(
        &self,
        y: &DMatrix<f64>,
        dict: &Dictionary,
        threshold: f64,
    ) -> Result<(Dictionary, SparseCode)> {
        match self.kind {
            DlKind::Orthogonal => step_orthogonal(y, dict, threshold),
            DlKind::General => step_general(y, dict, threshold, self.step_size, self.renormalize),
        }
    }
}

/// Entrywise hard thresholding: entries with `|a| >= zeta` are kept, the rest zeroed.
pub fn hard_threshold(a: &DMatrix<f64>, zeta: f64) -> DMatrix<f64> {
    a.map(|v| if v.abs() >= zeta { v } else { 0.0 })
}

/// `U V^T` from the thin SVD of `a`: the closest matrix with orthonormal columns.
pub fn polar(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = a.shape();
    if cols > rows {
        return Err(Error::RankDeficient {
            singular_value: 0.0,
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "polar" });
    }
    let svd = SVD::new(a.clone(), true, true);
    let smallest = svd.singular_values.min();
    if !(smallest > RANK_TOL) {
        return Err(Error::RankDeficient {
            singular_value: smallest,
        });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    Ok(u * v_t)
}

fn check_shapes(y: &DMatrix<f64>, dict: &Dictionary) -> Result<()> {
    if y.nrows() != dict.dim() {
        return Err(Error::mismatch(
            "data rows vs dictionary dim",
            dict.dim(),
            y.nrows(),
        ));
    }
    Ok(())
}

fn analysis_code(y: &DMatrix<f64>, dict: &Dictionary, zeta: f64) -> DMatrix<f64> {
    hard_threshold(&(dict.matrix().transpose() * y), zeta)
}

/// `X = HT(D^T Y)`, `D+ = Polar(Y X^T)`.
pub fn step_orthogonal(
    y: &DMatrix<f64>,
    dict: &Dictionary,
    zeta: f64,
) -> Result<(Dictionary, SparseCode)> {
    check_shapes(y, dict)?;
    let x = analysis_code(y, dict, zeta);
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::EmptyCode { zeta });
    }
    let updated = polar(&(y * x.transpose()))?;
    Ok((Dictionary::new(updated)?, SparseCode::new(x)?))
}

/// `X = HT(D^T Y)`, `D+ = D - 2 eta (D X - Y) X^T`, then optional renormalisation.
///
/// A column that collapses to zero under renormalisation keeps its previous value.
pub fn step_general(
    y: &DMatrix<f64>,
    dict: &Dictionary,
    zeta: f64,
    step_size: StepSize,
    renormalize: bool,
) -> Result<(Dictionary, SparseCode)> {
    check_shapes(y, dict)?;
    let x = analysis_code(y, dict, zeta);
    let eta = match step_size {
        StepSize::Fixed(eta) => eta,
        StepSize::Auto => {
            let top = x.singular_values().max();
            if top == 0.0 {
                return Err(Error::EmptyCode { zeta });
            }
            0.5 / (top * top)
        }
    };
    let d = dict.matrix();
    let residual = d * &x - y;
    let mut updated = d - (residual * x.transpose()) * (2.0 * eta);
    if updated.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { eta });
    }
    if renormalize {
        for j in 0..updated.ncols() {
            let norm = updated.column(j).norm();
            if norm > 1e-12 {
                updated.column_mut(j).unscale_mut(norm);
            } else {
                updated.set_column(j, &d.column(j));
            }
        }
    }
    Ok((Dictionary::new(updated)?, SparseCode::new(x)?))
}

/// Thresholded analysis code `HT(D^T Y)` and the residual `||Y - D X||_F`.
pub fn sparse_code(y: &DMatrix<f64>, dict: &Dictionary, zeta: f64) -> Result<(SparseCode, f64)> {
    check_shapes(y, dict)?;
    let x = analysis_code(y, dict, zeta);
    let residual = (y - dict.matrix() * &x).norm();
    Ok((SparseCode::new(x)?, residual))
}

/// Shrinking-threshold schedule for the initial dictionary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmStartConfig {
    pub initial_threshold: f64,
    pub shrink: f64,
    pub final_threshold: f64,
    pub iterations_per_level: usize,
    pub seed: u64,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        Self {
            initial_threshold: 0.5,
            shrink: 0.9,
            final_threshold: 0.15,
            iterations_per_level: 10,
            seed: 0,
        }
    }
}

impl WarmStartConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_threshold > 0.0) || !(self.initial_threshold >= self.final_threshold) {
            return Err(Error::InvalidConfig(format!(
                "warm start needs 0 < final threshold ({}) <= initial threshold ({})",
                self.final_threshold, self.initial_threshold
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shrink factor {} must lie in (0, 1)",
                self.shrink
            )));
        }
        Ok(())
    }

    /// The same schedule seeded for client `client`.
    pub fn for_client(&self, client: usize) -> Self {
        Self {
            seed: rng::client_seed(self.seed, client),
            ..*self
        }
    }

    /// Thresholds `max(final, shrink^k * initial)` for `k = 0, 1, ...` up to the first that reaches `final`.
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let zeta = (self.shrink.powi(k) * self.initial_threshold).max(self.final_threshold);
            out.push(zeta);
            if zeta <= self.final_threshold {
                return out;
            }
            k += 1;
        }
    }
}

/// A random `d x r` dictionary suited to `kind`: orthonormal columns for the
/// orthogonal solver, normalised Gaussian columns otherwise.
pub fn random_dictionary(dim: usize, atoms: usize, kind: DlKind, seed: u64) -> Result<Dictionary> {
    let mut rng = rng::stream(seed, streams::WARM_START);
    match kind {
        DlKind::Orthogonal => {
            if atoms > dim {
                return Err(Error::InvalidConfig(format!(
                    "orthogonal dictionary with {atoms} atoms cannot live in R^{dim}"
                )));
            }
            Dictionary::new(rng::extend_orthonormal(
                &mut rng,
                &DMatrix::zeros(dim, 0),
                dim,
                atoms,
            ))
        }
        DlKind::General => Dictionary::normalized(rng::gaussian_matrix(&mut rng, dim, atoms)),
    }
}

/// Initial dictionary from a random start and a shrinking threshold.
///
/// A degenerate iteration (empty code or rank-deficient polar factor) ends its
/// level early and the dictionary is kept as it was.
pub fn warm_start(
    y: &DMatrix<f64>,
    cfg: &WarmStartConfig,
    alg: &DlAlgorithm,
    atoms: usize,
) -> Result<Dictionary> {
    cfg.validate()?;
    alg.validate()?;
    let mut dict = random_dictionary(y.nrows(), atoms, alg.kind, cfg.seed)?;
    for zeta in cfg.levels() {
        for _ in 0..cfg.iterations_per_level {
            match alg.step_at(y, &dict, zeta) {
                Ok((next, _)) => dict = next,
                Err(e) if e.is_degenerate_step() => {
                    log::debug!("warm start: {e}; moving on from threshold {zeta}");
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(dict)
}

/// Refines the local block against the residual left by the global block.
///
/// Codes come from the thresholded analysis step on `[D_g D_l]`; the local
/// block is then iterated `t_refine` times on `Y - D_g X_g`.
pub fn refine_local(
    y: &DMatrix<f64>,
    part: &PartitionedDictionary,
    alg: &DlAlgorithm,
    t_refine: usize,
) -> Result<Dictionary> {
    if part.local.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot refine an empty local dictionary".into(),
        ));
    }
    if t_refine == 0 {
        return Ok(part.local.clone());
    }
    let full = part.full();
    let (code, _) = sparse_code(y, &full, alg.threshold)?;
    let rg = part.global_width();
    let x_global = code.matrix().rows(0, rg);
    let residual = y - part.global.matrix() * x_global;
    let mut local = part.local.clone();
    for _ in 0..t_refine {
        local = alg.step(&residual, &local)?.0;
    }
    Ok(local)
}

/// Least-squares fit of `e[t+1] = rho * e[t] + psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rho: f64,
    pub psi: f64,
}

impl RateFit {
    pub fn is_contracting(&self) -> bool {
        self.rho < 1.0
    }

    /// Fixed point `psi / (1 - rho)` of the fitted recursion, when contracting.
    pub fn floor(&self) -> Option<f64> {
        self.is_contracting().then(|| self.psi / (1.0 - self.rho))
    }
}

pub fn estimate_rate(errors: &[f64]) -> Result<RateFit> {
    if errors.len() < 3 {
        return Err(Error::TooFewPoints(errors.len()));
    }
    if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::InvalidConfig(
            "error values must be finite and nonnegative".into(),
        ));
    }
    let xs = &errors[..errors.len() - 1];
    let ys = &errors[1..];
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let var_x: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let cov: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    // Constant inputs leave rho unidentified; report the constant as the floor.
    if var_x <= (1e-14 * scale).powi(2) * m {
        return Ok(RateFit {
            rho: 0.0,
            psi: mean_y,
        });
    }
    let rho = cov / var_x;
    let psi = mean_y - rho * mean_x;
    if rho >= 1.0 {
        log::warn!("fitted rate {rho} does not contract");
    }
    Ok(RateFit { rho, psi })
}

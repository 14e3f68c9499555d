//! Dictionaries, their global/local partition, signed permutations and sparse codes.

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};

/// Tolerance used for the unit-norm column check.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// A `d x r` matrix whose columns are atoms.
///
/// The unit-norm flag is computed on construction: it is set exactly when
/// every column has Euclidean norm within [`UNIT_NORM_TOL`] of one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    data: DMatrix<f64>,
    unit_norm: bool,
}

impl Dictionary {
    /// Wraps a matrix with at least one row and one column and finite entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::mismatch(
                "dictionary",
                "at least 1x1",
                format!("{}x{}", data.nrows(), data.ncols()),
            ));
        }
        Self::with_any_width(data)
    }

    /// Like [`Dictionary::new`] but allows zero columns (an empty partition block).
    pub fn with_any_width(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::mismatch("dictionary", "d >= 1", "d = 0"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dictionary",
            });
        }
        let unit_norm = data
            .column_iter()
            .all(|c| (c.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(Self { data, unit_norm })
    }

    /// Requires every column to be unit norm.
    pub fn unit(data: DMatrix<f64>) -> Result<Self> {
        let dict = Self::new(data)?;
        if !dict.unit_norm {
            let (column, norm) = dict
                .data
                .column_iter()
                .map(|c| c.norm())
                .enumerate()
                .find(|(_, n)| (n - 1.0).abs() > UNIT_NORM_TOL)
                .expect("flag unset implies an offending column");
            return Err(Error::NotUnitNorm { column, norm });
        }
        Ok(dict)
    }

    /// Scales every column to unit norm. Zero columns are rejected.
    pub fn normalized(mut data: DMatrix<f64>) -> Result<Self> {
        for (j, mut col) in data.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::NotUnitNorm { column: j, norm });
            }
            col /= norm;
        }
        Self::with_any_width(data)
    }

    /// A `d x 0` dictionary.
    pub fn empty(dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, 0),
            unit_norm: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn atom(&self, j: usize) -> DVectorView<'_, f64> {
        self.data.column(j)
    }

    pub fn atom_slice(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[j * d..(j + 1) * d]
    }

    /// Columns at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dictionary {
        let data = self.data.select_columns(indices);
        let unit_norm = self.unit_norm || data.ncols() == 0;
        let unit_norm = unit_norm
            || data
                .column_iter()
                .all(|c| (c.norm() - 1.0).abs() <= UNIT_NORM_TOL);
        Dictionary { data, unit_norm }
    }

    /// `[self other]`.
    pub fn hconcat(&self, other: &Dictionary) -> Result<Dictionary> {
        if self.dim() != other.dim() {
            return Err(Error::mismatch("concatenation", self.dim(), other.dim()));
        }
        let mut data = DMatrix::zeros(self.dim(), self.atoms() + other.atoms());
        data.columns_mut(0, self.atoms()).copy_from(&self.data);
        data.columns_mut(self.atoms(), other.atoms())
            .copy_from(&other.data);
        Ok(Dictionary {
            data,
            unit_norm: self.unit_norm && other.unit_norm,
        })
    }

    /// `D Π`: column `k` of the result is `signs[k] * D[:, perm[k]]`.
    pub fn apply(&self, pi: &SignedPermutation) -> Result<Dictionary> {
        if pi.len() != self.atoms() {
            return Err(Error::mismatch(
                "signed permutation",
                self.atoms(),
                pi.len(),
            ));
        }
        let mut data = DMatrix::zeros(self.dim(), self.atoms());
        for k in 0..self.atoms() {
            let s = f64::from(pi.signs[k]);
            data.set_column(k, &(self.data.column(pi.perm[k]) * s));
        }
        Ok(Dictionary {
            data,
            unit_norm: self.unit_norm,
        })
    }
}

/// A dictionary split into a global block followed by a local block.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDictionary {
    pub global: Dictionary,
    pub local: Dictionary,
}

impl PartitionedDictionary {
    pub fn new(global: Dictionary, local: Dictionary) -> Result<Self> {
        if global.dim() != local.dim() {
            return Err(Error::mismatch("partition", global.dim(), local.dim()));
        }
        Ok(Self { global, local })
    }

    /// Splits `full` into its first `global_width` columns and the rest.
    pub fn split(full: &Dictionary, global_width: usize) -> Result<Self> {
        if global_width > full.atoms() {
            return Err(Error::TooManyGlobalAtoms {
                requested: global_width,
                available: full.atoms(),
            });
        }
        let global: Vec<usize> = (0..global_width).collect();
        let local: Vec<usize> = (global_width..full.atoms()).collect();
        Ok(Self {
            global: full.select(&global),
            local: full.select(&local),
        })
    }

    pub fn dim(&self) -> usize {
        self.global.dim()
    }

    pub fn global_width(&self) -> usize {
        self.global.atoms()
    }

    pub fn local_width(&self) -> usize {
        self.local.atoms()
    }

    /// `[global local]`.
    pub fn full(&self) -> Dictionary {
        self.global
            .hconcat(&self.local)
            .expect("partition blocks share a dimension")
    }
}

/// A permutation of column indices with a sign per output column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPermutation {
    perm: Vec<usize>,
    signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn new(perm: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        if perm.len() != signs.len() {
            return Err(Error::InvalidPermutation(format!(
                "{} indices but {} signs",
                perm.len(),
                signs.len()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidPermutation(format!(
                    "{perm:?} is not a bijection on 0..{}",
                    perm.len()
                )));
            }
            seen[p] = true;
        }
        if let Some(s) = signs.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::InvalidPermutation(format!("sign {s} is not +-1")));
        }
        Ok(Self { perm, signs })
    }

    pub fn identity(r: usize) -> Self {
        Self {
            perm: (0..r).collect(),
            signs: vec![1; r],
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn inverse(&self) -> Self {
        let r = self.len();
        let mut perm = vec![0; r];
        let mut signs = vec![1; r];
        for k in 0..r {
            perm[self.perm[k]] = k;
            signs[self.perm[k]] = self.signs[k];
        }
        Self { perm, signs }
    }

    /// Dense `r x r` matrix form with `P[perm[k], k] = signs[k]`.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let r = self.len();
        let mut m = DMatrix::zeros(r, r);
        for k in 0..r {
            m[(self.perm[k], k)] = f64::from(self.signs[k]);
        }
        m
    }
}

/// An `r x n` coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    data: DMatrix<f64>,
}

impl SparseCode {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "sparse code",
            });
        }
        Ok(Self { data })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn nonzeros(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Fraction of nonzero entries.
    pub fn sparsity(&self) -> f64 {
        let total = self.data.len();
        if total == 0 {
            return 0.0;
        }
        self.nonzeros() as f64 / total as f64
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dictionary {
        Dictionary::normalized(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 2.0, 0.0, 0.5, -1.0, 3.0, 0.0, 1.0, 1.0],
        ))
        .unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(Dictionary::new(DMatrix::from_element(2, 2, f64::NAN)).is_err());
        assert!(Dictionary::new(DMatrix::zeros(2, 0)).is_err());
        assert!(Dictionary::with_any_width(DMatrix::zeros(2, 0)).is_ok());
    }

    #[test]
    fn unit_flag_tracks_columns() {
        assert!(sample().is_unit_norm());
        let d = Dictionary::new(DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(!d.is_unit_norm());
        assert!(matches!(
            Dictionary::unit(DMatrix::from_element(2, 2, 1.0)),
            Err(Error::NotUnitNorm { column: 0, .. })
        ));
    }

    #[test]
    fn permutation_inverse_round_trip() {
        let d = sample();
        let pi = SignedPermutation::new(vec![2, 0, 1], vec![-1, 1, -1]).unwrap();
        let back = d.apply(&pi).unwrap().apply(&pi.inverse()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn apply_matches_matrix_product() {
        let d = sample();
        let pi = SignedPermutation::new(vec![1, 2, 0], vec![1, -1, -1]).unwrap();
        let via_matrix = d.matrix() * pi.to_matrix();
        assert_eq!(d.apply(&pi).unwrap().matrix(), &via_matrix);
    }

    #[test]
    fn rejects_invalid_permutations() {
        assert!(SignedPermutation::new(vec![0, 0], vec![1, 1]).is_err());
        assert!(SignedPermutation::new(vec![0, 2], vec![1, 1]).is_err());
        assert!(SignedPermutation::new(vec![0, 1], vec![1, 0]).is_err());
        assert!(SignedPermutation::new(vec![0], vec![1, 1]).is_err());
    }

    #[test]
    fn partition_split_and_full() {
        let d = sample();
        let part = PartitionedDictionary::split(&d, 1).unwrap();
        assert_eq!(part.global_width(), 1);
        assert_eq!(part.local_width(), 2);
        assert_eq!(part.full(), d);
        let all_local = PartitionedDictionary::split(&d, 0).unwrap();
        assert!(all_local.global.is_empty());
        assert!(PartitionedDictionary::split(&d, 4).is_err());
    }

    #[test]
    fn sparsity_counts_nonzeros() {
        let x = SparseCode::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(x.sparsity(), 0.25);
        assert!(SparseCode::new(DMatrix::from_element(1, 1, f64::INFINITY)).is_err());
    }
}

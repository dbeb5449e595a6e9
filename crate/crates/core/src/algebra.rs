//! Coupling-matrix hypotheses and the parameter-space geometry of the system:
//! the functionals `Λ_J`, the masses `m_i`, the critical hypersurface Γ₁, the
//! point `Q` and the Leray–Schauder degree formula.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

/// Entries at or below this are treated as zero for irreducibility.
pub const POSITIVE_ENTRY: f64 = 1e-14;
/// Symmetry tolerance on `|a_ij - a_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Matrices with a larger 2-norm condition number count as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest `n` for which all proper subsets are enumerated.
pub const MAX_SUBSET_N: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("matrix is singular (condition number {0:e})")]
    Singular(f64),
    #[error("rho must have {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rho component {0} is not strictly positive")]
    NonPositiveRho(usize),
    #[error("index subset must be nonempty and within 1..=n")]
    BadSubset,
    #[error("Q has a nonpositive component {0}")]
    QNotPositive(usize),
    #[error("Q fails proper-subset positivity (Λ_J = {value} for J = {subset:?})")]
    QNotInGamma1 { subset: Vec<usize>, value: f64 },
    #[error("subset enumeration supports n <= {MAX_SUBSET_N}, got {0}")]
    TooLarge(usize),
    #[error("tolerance must be positive")]
    BadTolerance,
}

/// The n×n coupling matrix `A = (a_ij)` together with its inverse when it
/// exists.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    entries: DMatrix<f64>,
    inverse: Option<DMatrix<f64>>,
    condition: f64,
}

impl CouplingMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AlgebraError> {
        let n = rows.len();
        if n == 0 {
            return Err(AlgebraError::Empty);
        }
        for r in rows {
            if r.len() != n {
                return Err(AlgebraError::NotSquare { rows: n, cols: r.len() });
            }
        }
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(AlgebraError::NonFinite(i, j));
                }
            }
        }
        let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self::from_matrix(entries))
    }

    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        let sv = entries.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let inverse = if condition < MAX_CONDITION {
            entries.clone().try_inverse()
        } else {
            None
        };
        Self { entries, inverse, condition }
    }

    /// Scalar case `A = [a]`.
    pub fn scalar(a: f64) -> Self {
        Self::from_matrix(DMatrix::from_element(1, 1, a))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn inverse(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `A·x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `Σ_ij a_ij x_i x_j`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Relabel indices: `A'_{ij} = A_{perm[i], perm[j]}`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| self.get(perm[i], perm[j])))
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= SYMMETRY_TOL))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.entries.iter().all(|&v| v >= 0.0)
    }

    /// Connectivity of the graph with an edge `(i, j)` whenever `a_ij` or
    /// `a_ji` is positive, by breadth-first search from index 0.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && (self.get(i, j) > POSITIVE_ENTRY || self.get(j, i) > POSITIVE_ENTRY) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse.is_some()
    }
}

/// Total-mass parameters `ρ = (ρ_1, …, ρ_n)`, all strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoVector(Vec<f64>);

impl RhoVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AlgebraError> {
        for (i, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(AlgebraError::NonPositiveRho(i));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct H1Report {
    pub symmetric: bool,
    pub nonnegative: bool,
    pub irreducible: bool,
    pub invertible: bool,
}

impl H1Report {
    pub fn holds(&self) -> bool {
        self.symmetric && self.nonnegative && self.irreducible && self.invertible
    }
}

/// The three sign clauses of (H2) on the inverse matrix `(a^{ij})`:
/// `a^{ii} ≤ 0`, `a^{ij} ≥ 0` for `i ≠ j`, `Σ_j a^{ij} ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct H2Report {
    pub diagonal_nonpositive: bool,
    pub off_diagonal_nonnegative: bool,
    pub row_sums_nonnegative: bool,
}

impl H2Report {
    pub fn holds(&self) -> bool {
        self.diagonal_nonpositive && self.off_diagonal_nonnegative && self.row_sums_nonnegative
    }
}

pub fn check_h1(a: &CouplingMatrix) -> H1Report {
    H1Report {
        symmetric: a.is_symmetric(),
        nonnegative: a.is_nonnegative(),
        irreducible: a.is_irreducible(),
        invertible: a.is_invertible(),
    }
}

pub fn check_h2(a: &CouplingMatrix) -> Result<H2Report, AlgebraError> {
    let inv = a.inverse().ok_or(AlgebraError::Singular(a.condition_number()))?;
    let n = a.n();
    Ok(H2Report {
        diagonal_nonpositive: (0..n).all(|i| inv[(i, i)] <= 0.0),
        off_diagonal_nonnegative: (0..n)
            .all(|i| (0..n).all(|j| i == j || inv[(i, j)] >= 0.0)),
        row_sums_nonnegative: (0..n).all(|i| (0..n).map(|j| inv[(i, j)]).sum::<f64>() >= 0.0),
    })
}

fn check_dims(a: &CouplingMatrix, rho: &RhoVector) -> Result<(), AlgebraError> {
    if rho.len() != a.n() {
        return Err(AlgebraError::DimensionMismatch { expected: a.n(), got: rho.len() });
    }
    Ok(())
}

/// `Λ_J(ρ) = 8π Σ_{i∈J} ρ_i − Σ_{i,j∈J} a_ij ρ_i ρ_j` for a zero-based subset.
pub fn lambda_j(a: &CouplingMatrix, rho: &RhoVector, subset: &[usize]) -> Result<f64, AlgebraError> {
    check_dims(a, rho)?;
    if subset.is_empty() || subset.iter().any(|&i| i >= a.n()) {
        return Err(AlgebraError::BadSubset);
    }
    let r = rho.values();
    let linear: f64 = subset.iter().map(|&i| r[i]).sum();
    let mut quad = 0.0;
    for &i in subset {
        for &j in subset {
            quad += a.get(i, j) * r[i] * r[j];
        }
    }
    Ok(8.0 * PI * linear - quad)
}

/// `Λ_I(ρ)` over the full index set.
pub fn lambda_i(a: &CouplingMatrix, rho: &RhoVector) -> Result<f64, AlgebraError> {
    let all: Vec<usize> = (0..a.n()).collect();
    lambda_j(a, rho, &all)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Masses {
    pub m: Vec<f64>,
    pub min: f64,
}

/// `m_i = (1/2π) Σ_j a_ij ρ_j` and `m = min_i m_i`.
pub fn masses(a: &CouplingMatrix, rho: &RhoVector) -> Result<Masses, AlgebraError> {
    check_dims(a, rho)?;
    let m: Vec<f64> = a.apply(rho.values()).into_iter().map(|v| v / (2.0 * PI)).collect();
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Masses { m, min })
}

/// All proper nonempty subsets of `0..n`, as sorted index lists, ordered by
/// their bitmask.
pub fn proper_subsets(n: usize) -> Result<Vec<Vec<usize>>, AlgebraError> {
    if n > MAX_SUBSET_N {
        return Err(AlgebraError::TooLarge(n));
    }
    let full = (1u32 << n) - 1;
    Ok((1..full)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect())
}

/// `Q = 8π A⁻¹(1,…,1)`, the point of Γ₁ where every mass equals 4.
pub fn find_q(a: &CouplingMatrix) -> Result<RhoVector, AlgebraError> {
    let inv = a.inverse().ok_or(AlgebraError::Singular(a.condition_number()))?;
    let n = a.n();
    let q: Vec<f64> = (0..n)
        .map(|i| 8.0 * PI * (0..n).map(|j| inv[(i, j)]).sum::<f64>())
        .collect();
    if let Some(i) = q.iter().position(|&v| !(v > 0.0)) {
        return Err(AlgebraError::QNotPositive(i));
    }
    let rho = RhoVector(q);
    for subset in proper_subsets(n)? {
        let value = lambda_j(a, &rho, &subset)?;
        if !(value > 0.0) {
            return Err(AlgebraError::QNotInGamma1 { subset, value });
        }
    }
    Ok(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gamma1Report {
    pub lambda_i: f64,
    /// Keyed by the one-based subset, e.g. `"{1,3}"`.
    pub lambda_subsets: BTreeMap<String, f64>,
    pub masses: Vec<f64>,
    pub is_member: bool,
    /// `(Σ_j a_ij ρ_j − 4π)_i`.
    pub normal: Vec<f64>,
    pub tolerance: f64,
}

/// Default membership tolerance, relative to `8π Σ ρ_i`.
pub const GAMMA1_REL_TOL: f64 = 1e-8;

pub fn default_gamma1_tolerance(rho: &RhoVector) -> f64 {
    GAMMA1_REL_TOL * 8.0 * PI * rho.values().iter().sum::<f64>()
}

pub fn subset_label(subset: &[usize]) -> String {
    let inner: Vec<String> = subset.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

pub fn gamma1_report(a: &CouplingMatrix, rho: &RhoVector, tol: f64) -> Result<Gamma1Report, AlgebraError> {
    if !(tol > 0.0) {
        return Err(AlgebraError::BadTolerance);
    }
    check_dims(a, rho)?;
    let subsets = proper_subsets(a.n())?;
    let li = lambda_i(a, rho)?;
    let mut lambda_subsets = BTreeMap::new();
    let mut all_positive = true;
    for s in &subsets {
        let v = lambda_j(a, rho, s)?;
        all_positive &= v > 0.0;
        lambda_subsets.insert(subset_label(s), v);
    }
    let normal: Vec<f64> = a.apply(rho.values()).into_iter().map(|v| v - 4.0 * PI).collect();
    Ok(Gamma1Report {
        lambda_i: li,
        lambda_subsets,
        masses: masses(a, rho)?.m,
        is_member: li.abs() <= tol && all_positive,
        normal,
        tolerance: tol,
    })
}

/// Leray–Schauder degree `(1/N!) Π_{k=1..N} (k − χ)` for a surface of Euler
/// characteristic `chi`.
pub fn degree_formula(chi: i64, big_n: u32) -> f64 {
    let mut d = 1.0;
    for k in 1..=big_n {
        d *= (k as i64 - chi) as f64 / k as f64;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a_half() -> CouplingMatrix {
        CouplingMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap()
    }

    #[test]
    fn h1_examples() {
        assert!(check_h1(&a_half()).holds());
        let id = CouplingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = check_h1(&id);
        assert!(!r.irreducible && r.symmetric && r.invertible && r.nonnegative);
        let b = CouplingMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(check_h1(&b).holds());
        let sing = CouplingMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(!check_h1(&sing).invertible);
    }

    #[test]
    fn non_square_rejected() {
        let e = CouplingMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5]]).unwrap_err();
        assert!(matches!(e, AlgebraError::NotSquare { .. }));
        assert!(CouplingMatrix::from_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn h2_examples() {
        let r = check_h2(&a_half()).unwrap();
        assert!(!r.diagonal_nonpositive);
        let inv = a_half().inverse().unwrap().clone();
        assert!((inv[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);

        let swap = CouplingMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(check_h2(&swap).unwrap().holds());

        let r = check_h2(&CouplingMatrix::scalar(1.0)).unwrap();
        assert!(!r.diagonal_nonpositive);

        let sing = CouplingMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(check_h2(&sing), Err(AlgebraError::Singular(_))));
    }

    #[test]
    fn lambda_examples() {
        let rho = RhoVector::new(vec![8.0 * PI]).unwrap();
        assert!(lambda_j(&CouplingMatrix::scalar(1.0), &rho, &[0]).unwrap().abs() < 1e-9);

        let q = RhoVector::new(vec![16.0 * PI / 3.0; 2]).unwrap();
        assert!(lambda_i(&a_half(), &q).unwrap().abs() < 1e-10);
        let l1 = lambda_j(&a_half(), &q, &[0]).unwrap();
        assert!((l1 - 128.0 * PI * PI / 9.0).abs() < 1e-10);
        assert_eq!(lambda_j(&a_half(), &q, &[]), Err(AlgebraError::BadSubset));
    }

    #[test]
    fn mass_examples() {
        let m = masses(&CouplingMatrix::scalar(1.0), &RhoVector::new(vec![8.0 * PI]).unwrap()).unwrap();
        assert!((m.min - 4.0).abs() < 1e-14);
        let q = RhoVector::new(vec![16.0 * PI / 3.0; 2]).unwrap();
        let m = masses(&a_half(), &q).unwrap();
        assert!(m.m.iter().all(|v| (v - 4.0).abs() < 1e-14));
        let rho = RhoVector::new(vec![2.0 * PI, 3.0 * PI + PI * 21f64.sqrt()]).unwrap();
        let m = masses(&a_half(), &rho).unwrap();
        assert!((m.m[0] - (1.0 + (3.0 + 21f64.sqrt()) / 4.0)).abs() < 1e-14);
        assert!((m.m[0] - 2.896).abs() < 1e-3 && (m.m[1] - 4.291).abs() < 1e-3);
        assert_eq!(m.min, m.m[0]);
    }

    #[test]
    fn q_examples() {
        let q = find_q(&CouplingMatrix::scalar(1.0)).unwrap();
        assert!((q.values()[0] - 8.0 * PI).abs() < 1e-12);
        let q = find_q(&a_half()).unwrap();
        assert!(q.values().iter().all(|v| (v - 16.0 * PI / 3.0).abs() < 1e-12));
        let b = CouplingMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let q = find_q(&b).unwrap();
        assert!(q.values().iter().all(|v| (v - 8.0 * PI / 3.0).abs() < 1e-12));
        let l1 = lambda_j(&b, &q, &[0]).unwrap();
        assert!((l1 - 128.0 * PI * PI / 9.0).abs() < 1e-10);
    }

    #[test]
    fn q_failures() {
        // A⁻¹1 has a negative entry
        let a = CouplingMatrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 10.0]]).unwrap();
        assert!(matches!(find_q(&a), Err(AlgebraError::QNotPositive(_))));
    }

    #[test]
    fn gamma1_examples() {
        let r = gamma1_report(
            &CouplingMatrix::scalar(1.0),
            &RhoVector::new(vec![8.0 * PI]).unwrap(),
            1e-8,
        )
        .unwrap();
        assert!(r.is_member);
        assert!(r.lambda_subsets.is_empty());
        assert!((r.normal[0] - 4.0 * PI).abs() < 1e-12);

        let rho = RhoVector::new(vec![2.0 * PI, 3.0 * PI + PI * 21f64.sqrt()]).unwrap();
        let r = gamma1_report(&a_half(), &rho, default_gamma1_tolerance(&rho)).unwrap();
        assert!(r.is_member);
        assert!(r.lambda_subsets.values().all(|v| *v > 0.0));
        assert!(r.normal.iter().all(|v| *v > 0.0));

        let rho = RhoVector::new(vec![8.0 * PI; 2]).unwrap();
        let r = gamma1_report(&a_half(), &rho, 1e-8).unwrap();
        assert!(!r.is_member);
        assert!((r.lambda_i + 64.0 * PI * PI).abs() < 1e-9);

        let big = CouplingMatrix::from_matrix(DMatrix::from_element(13, 13, 1.0));
        let rho = RhoVector::new(vec![1.0; 13]).unwrap();
        assert_eq!(gamma1_report(&big, &rho, 1e-8), Err(AlgebraError::TooLarge(13)));
        assert_eq!(
            gamma1_report(&a_half(), &RhoVector::new(vec![1.0, 1.0]).unwrap(), 0.0),
            Err(AlgebraError::BadTolerance)
        );
    }

    #[test]
    fn degree_examples() {
        assert_eq!(degree_formula(2, 1), -1.0);
        assert_eq!(degree_formula(0, 1), 1.0);
        assert_eq!(degree_formula(2, 2), 0.0);
        assert_eq!(degree_formula(-2, 2), 6.0);
    }

    #[test]
    fn rho_must_be_positive() {
        assert_eq!(RhoVector::new(vec![1.0, 0.0]), Err(AlgebraError::NonPositiveRho(1)));
    }
}

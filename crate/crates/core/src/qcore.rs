//! Dense complex linear algebra and canonical states for up to four qubits.
//!
//! Basis ordering is big-endian throughout: in a tensor product the left
//! factor is the most significant subsystem, and qubit 0 is the leftmost one.
//! The global network ordering is `A ⊗ B1 ⊗ B2 ⊗ C`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Tolerance for Hermiticity, unit trace and positivity checks.
pub const STATE_TOL: f64 = 1e-10;

/// Largest supported register.
pub const MAX_QUBITS: usize = 4;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square complex matrix whose dimension is a power of two.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix{}", self.0)
    }
}

impl ComplexMatrix {
    pub fn new(inner: DMatrix<C64>) -> Result<Self> {
        let (r, c) = inner.shape();
        if r != c {
            return Err(Error::Dimension(format!("{r}x{c} matrix is not square")));
        }
        if !r.is_power_of_two() {
            return Err(Error::Dimension(format!("dimension {r} is not a power of two")));
        }
        Ok(Self(inner))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(dim.is_power_of_two(), "dimension {dim} is not a power of two");
        Self(DMatrix::from_fn(dim, dim, f))
    }

    /// Builds a matrix from row-major real entries.
    pub fn from_real_rows(dim: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), dim * dim);
        Self::from_fn(dim, |i, j| C64::new(rows[i * dim + j], 0.0))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| ZERO)
    }

    /// Outer product `|psi><psi|`.
    pub fn projector(psi: &[C64]) -> Self {
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &ComplexMatrix) -> C64 {
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    /// Kronecker product; `self` becomes the most significant factor.
    pub fn tensor(&self, other: &ComplexMatrix) -> ComplexMatrix {
        Self(self.0.kronecker(&other.0))
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &ComplexMatrix, tol: f64) -> bool {
        self.dim() == other.dim() && self.max_abs_diff(other) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (i..n).all(|j| (self.0[(i, j)] - self.0[(j, i)].conj()).norm() <= tol))
    }

    /// Eigenvalues in ascending order. The matrix is symmetrized first, so
    /// callers should check Hermiticity separately when it matters.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()[0]
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.0.clone().svd(false, false).rank(tol)
    }

    /// Partial transpose of the second factor of a bipartite operator whose
    /// first factor has dimension `left_dim`.
    pub fn partial_transpose(&self, left_dim: usize) -> ComplexMatrix {
        let n = self.dim();
        assert!(n.is_multiple_of(left_dim));
        let right = n / left_dim;
        Self::from_fn(n, |r, c| {
            let (i, k) = (r / right, r % right);
            let (j, l) = (c / right, c % right);
            self.0[(i * right + l, j * right + k)]
        })
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

/// Partial trace of an arbitrary operator on `n` qubits, keeping the listed
/// qubits. Works on unnormalized operators.
pub fn partial_trace_matrix(m: &ComplexMatrix, keep: &[usize]) -> Result<ComplexMatrix> {
    let n = m.num_qubits();
    if let Some(&index) = keep.iter().find(|&&k| k >= n) {
        return Err(Error::SubsystemOutOfRange { index, qubits: n });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() {
        return Err(Error::InvalidParameter("partial trace must keep at least one qubit".into()));
    }
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();

    // Scatter `value`'s bits (most significant first) onto the listed qubits.
    let place = |value: usize, qubits: &[usize]| -> usize {
        qubits.iter().enumerate().fold(0, |acc, (pos, &q)| {
            let bit = (value >> (qubits.len() - 1 - pos)) & 1;
            acc | (bit << (n - 1 - q))
        })
    };

    let env_dim = 1 << traced.len();
    let inner = m.inner();
    Ok(ComplexMatrix::from_fn(1 << kept.len(), |i, j| {
        let (bi, bj) = (place(i, &kept), place(j, &kept));
        (0..env_dim)
            .map(|t| {
                let bt = place(t, &traced);
                inner[(bi | bt, bj | bt)]
            })
            .sum()
    }))
}

/// Kronecker product of two square matrices.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.tensor(b)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 1) => C64::new(0.0, -1.0),
        (1, 0) => C64::new(0.0, 1.0),
        _ => ZERO,
    })
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(2, &[1.0, 0.0, 0.0, -1.0])
}

/// `n · (σx, σy, σz)` for a real 3-vector `n`.
pub fn pauli_dot(axis: [f64; 3]) -> ComplexMatrix {
    let [x, y, z] = axis;
    ComplexMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 0) => C64::new(z, 0.0),
        (1, 1) => C64::new(-z, 0.0),
        (0, 1) => C64::new(x, -y),
        _ => C64::new(x, y),
    })
}

/// Unit-trace positive-semidefinite operator on one to four qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity within [`STATE_TOL`].
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let qubits = matrix.num_qubits();
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(Error::Dimension(format!(
                "density matrices act on 1..={MAX_QUBITS} qubits, got dimension {}",
                matrix.dim()
            )));
        }
        if !matrix.is_hermitian(STATE_TOL) {
            return Err(Error::InvalidState("not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = matrix.min_eigenvalue();
        if min < -STATE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix })
    }

    /// Projector onto a (not necessarily normalized) pure state vector.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let unit: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(ComplexMatrix::projector(&unit))
    }

    pub fn maximally_mixed(qubits: usize) -> Self {
        let dim = 1 << qubits;
        Self { matrix: ComplexMatrix::identity(dim).scale(1.0 / dim as f64) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn num_qubits(&self) -> usize {
        self.matrix.num_qubits()
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        Self::new(self.matrix.tensor(&other.matrix))
    }

    /// Expectation value `Tr(ρ O)`.
    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        self.matrix.trace_product(op)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix.hermitian_eigenvalues()
    }

    /// Reduced state on the qubits listed in `keep` (in ascending order of
    /// qubit index, whatever the order given).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        Self::new(partial_trace_matrix(&self.matrix, keep)?)
    }

    /// Partial transpose of the second qubit of a two-qubit state.
    pub fn partial_transpose(&self) -> Result<ComplexMatrix> {
        if self.num_qubits() != 2 {
            return Err(Error::Dimension(format!(
                "partial transpose is defined here for two qubits, got {}",
                self.num_qubits()
            )));
        }
        Ok(self.matrix.partial_transpose(2))
    }

    /// Minimum eigenvalue of the partial transpose; non-negative (within
    /// tolerance) iff the two-qubit state is separable.
    pub fn ppt_min_eigenvalue(&self) -> Result<f64> {
        Ok(self.partial_transpose()?.min_eigenvalue())
    }

    pub fn is_ppt(&self) -> Result<bool> {
        Ok(self.ppt_min_eigenvalue()? >= -STATE_TOL)
    }
}

/// The four canonical two-qubit Bell states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [BellState::PhiPlus, BellState::PhiMinus, BellState::PsiPlus, BellState::PsiMinus];

    pub fn vector(self) -> [C64; 4] {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        match self {
            BellState::PhiPlus => [h, ZERO, ZERO, h],
            BellState::PhiMinus => [h, ZERO, ZERO, -h],
            BellState::PsiPlus => [ZERO, h, h, ZERO],
            BellState::PsiMinus => [ZERO, h, -h, ZERO],
        }
    }

    pub fn projector(self) -> ComplexMatrix {
        ComplexMatrix::projector(&self.vector())
    }

    pub fn name(self) -> &'static str {
        match self {
            BellState::PhiPlus => "phi+",
            BellState::PhiMinus => "phi-",
            BellState::PsiPlus => "psi+",
            BellState::PsiMinus => "psi-",
        }
    }
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BellState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BellState::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

pub fn bell_state(kind: BellState) -> DensityMatrix {
    DensityMatrix { matrix: kind.projector() }
}

/// `v |ψ><ψ| + (1 - v) 𝟙/4` for the Bell state `kind`.
pub fn werner(kind: BellState, v: f64) -> Result<DensityMatrix> {
    check_visibility(v)?;
    let noise = ComplexMatrix::identity(4).scale((1.0 - v) / 4.0);
    Ok(DensityMatrix { matrix: &kind.projector().scale(v) + &noise })
}

pub(crate) fn check_visibility(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Visibility(v))
    }
}

/// Two-outcome qubit measurement. Outcome `a` corresponds to eigenvalue
/// `(-1)^a`; `effects[0]` projects onto the +1 eigenspace.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryObservable {
    axis: Option<[f64; 3]>,
    effects: [ComplexMatrix; 2],
}

impl BinaryObservable {
    /// The trivial observable `𝟙`: outcome 0 with certainty.
    pub fn trivial() -> Self {
        Self { axis: None, effects: [ComplexMatrix::identity(2), ComplexMatrix::zeros(2)] }
    }

    /// Bloch axis, or `None` for the trivial observable.
    pub fn axis(&self) -> Option<[f64; 3]> {
        self.axis
    }

    pub fn effect(&self, outcome: usize) -> &ComplexMatrix {
        &self.effects[outcome]
    }

    pub fn effects(&self) -> &[ComplexMatrix; 2] {
        &self.effects
    }

    /// `effect₀ − effect₁`.
    pub fn operator(&self) -> ComplexMatrix {
        &self.effects[0] - &self.effects[1]
    }
}

/// Projective measurement of `axis · σ` with effects `(𝟙 ± axis·σ)/2`.
pub fn bloch_observable(axis: [f64; 3]) -> Result<BinaryObservable> {
    let norm = axis.iter().map(|c| c * c).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > STATE_TOL {
        return Err(Error::NonUnitAxis(norm));
    }
    let half_id = ComplexMatrix::identity(2).scale(0.5);
    let half_n = pauli_dot(axis).scale(0.5);
    Ok(BinaryObservable { axis: Some(axis), effects: [&half_id + &half_n, &half_id - &half_n] })
}

//! Dense complex linear algebra for operators and superoperators.
//!
//! A map S on d×d matrices is stored as the d²×d² matrix acting on
//! column-stacked vectorizations, so that
//!
//!   stack(S[ρ]) = S.mat · stack(ρ),    vec(AρB) = (Bᵀ ⊗ A) vec(ρ),
//!
//! and composition of maps is the product of their representations. The Choi
//! matrix uses the unnormalized reference Σ_ij |i⟩⟨j| ⊗ |i⟩⟨j|: it is PSD iff
//! the map is completely positive. All matrix functions of Hermitian operators
//! (square root, pseudo-inverse square root, exponential) go through a single
//! eigendecomposition backend; general superoperator exponentials use scaling
//! and squaring.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Tolerance for Hermiticity checks on constructed operators.
pub const HERM_TOL: f64 = 1e-12;
/// Tolerance below which negative eigenvalues are treated as rounding noise.
pub const PSD_TOL: f64 = 1e-12;
/// Default tolerance on the min Choi eigenvalue for CP verification.
pub const CP_TOL: f64 = 1e-10;

/// Column-stack a d×d matrix into a d²-vector.
pub fn stack(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`stack`].
pub fn unstack(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// Largest entrywise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise modulus of the difference.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Deviation from Hermiticity, ‖M − M†‖_max.
pub fn herm_defect(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

fn trace(m: &CMat) -> C64 {
    let mut t = C64::new(0.0, 0.0);
    for i in 0..m.nrows() {
        t += m[(i, i)];
    }
    t
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is symmetrized as (M + M†)/2 first; callers that care about the
/// Hermiticity defect should check it separately via [`herm_defect`].
pub fn herm_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let h = (m + m.adjoint()).scale(0.5);
    let se = h.symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm requires a square matrix");
    // max column sum as the scaling norm
    let norm = (0..n)
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m.scale(1.0 / 2f64.powi(s as i32));
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=60 {
        term = (&term * &scaled).scale(1.0 / k as f64);
        result += &term;
        if max_abs(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// A d×d Hermitian operator (waiting-time and survival operators, rates,
/// Hamiltonians).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMat,
}

impl HermitianOperator {
    pub fn new(mat: CMat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}×{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let defect = herm_defect(&mat);
        if defect > HERM_TOL {
            return Err(Error::NotHermitian { defect });
        }
        // store the exactly Hermitian part
        let h = (&mat + mat.adjoint()).scale(0.5);
        Ok(Self { mat: h })
    }

    /// Force-hermitize and report the defect that was discarded.
    pub fn hermitized(mat: &CMat) -> (Self, f64) {
        let defect = herm_defect(mat);
        let h = (mat + mat.adjoint()).scale(0.5);
        (Self { mat: h }, defect)
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: CMat::identity(d, d) }
    }

    pub fn zero(d: usize) -> Self {
        Self { mat: CMat::zeros(d, d) }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = CMat::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        Self { mat: m }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn eigen(&self) -> (Vec<f64>, CMat) {
        herm_eigen(&self.mat)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigen().0.last().unwrap()
    }

    /// Apply a real function to the spectrum.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigen();
        let d = self.dim();
        let mut diag = CMat::zeros(d, d);
        for (i, &v) in vals.iter().enumerate() {
            diag[(i, i)] = C64::new(f(v), 0.0);
        }
        let m = &vecs * diag * vecs.adjoint();
        Self { mat: (&m + m.adjoint()).scale(0.5) }
    }

    /// Hermitian square root. Eigenvalues in [−psd_tol, 0) are clipped to 0;
    /// anything more negative signals an invalid (non-PSD) operator.
    pub fn sqrt(&self, psd_tol: f64) -> Result<Self> {
        let min_eig = self.min_eigenvalue();
        if min_eig < -psd_tol {
            return Err(Error::NotPositive { min_eig });
        }
        Ok(self.map_eigenvalues(|v| if v > 0.0 { v.sqrt() } else { 0.0 }))
    }

    /// Pseudo-inverse square root: inverts √· on eigenvalues > eps, zeroes the
    /// rest. Same PSD clipping rule as [`sqrt`](Self::sqrt).
    pub fn pinv_sqrt(&self, eps: f64) -> Result<Self> {
        let min_eig = self.min_eigenvalue();
        if min_eig < -PSD_TOL {
            return Err(Error::NotPositive { min_eig });
        }
        Ok(self.map_eigenvalues(|v| if v > eps { 1.0 / v.sqrt() } else { 0.0 }))
    }

    /// e^{factor · A} through the Hermitian eigendecomposition.
    pub fn scaled_exp(&self, factor: f64) -> Self {
        self.map_eigenvalues(|v| (factor * v).exp())
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }
}

/// A density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        let defect = herm_defect(&mat);
        if defect > HERM_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let tr = trace(&mat);
        if (tr - C64::new(1.0, 0.0)).norm() > HERM_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let (vals, _) = herm_eigen(&mat);
        if vals[0] < -PSD_TOL {
            return Err(Error::NotPositive { min_eig: vals[0] });
        }
        Ok(Self { mat })
    }

    /// Pure basis state |k⟩⟨k|.
    pub fn pure_basis(d: usize, k: usize) -> Self {
        let mut m = CMat::zeros(d, d);
        m[(k, k)] = C64::new(1.0, 0.0);
        Self { mat: m }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self { mat: CMat::identity(d, d).scale(1.0 / d as f64) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }
}

/// A linear map on d×d matrices in its d²×d² column-stacking representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    mat: CMat,
}

impl Superoperator {
    pub fn from_matrix(mat: CMat) -> Result<Self> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "superoperator matrix must be square, got {}×{}",
                n,
                mat.ncols()
            )));
        }
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n {
            return Err(Error::DimensionMismatch(format!(
                "superoperator side {n} is not a perfect square"
            )));
        }
        Ok(Self { dim: d, mat })
    }

    pub fn identity(d: usize) -> Self {
        Self { dim: d, mat: CMat::identity(d * d, d * d) }
    }

    pub fn zero(d: usize) -> Self {
        Self { dim: d, mat: CMat::zeros(d * d, d * d) }
    }

    /// Kraus representation ρ ↦ Σ_k A_k ρ A_k†; CP by construction.
    pub fn from_kraus(kraus: &[CMat]) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty Kraus list".into()))?;
        let d = first.nrows();
        if d < 2 || first.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "Kraus operators must be square with d ≥ 2, got {}×{}",
                first.nrows(),
                first.ncols()
            )));
        }
        let mut mat = CMat::zeros(d * d, d * d);
        for (k, a) in kraus.iter().enumerate() {
            if a.nrows() != d || a.ncols() != d {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator {k} is {}×{}, expected {d}×{d}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            let conj = a.map(|z| z.conj());
            mat += conj.kronecker(a);
        }
        Ok(Self { dim: d, mat })
    }

    /// Unitary (or general single-Kraus) conjugation ρ ↦ AρA†.
    pub fn conjugation(a: &CMat) -> Self {
        let conj = a.map(|z| z.conj());
        Self { dim: a.nrows(), mat: conj.kronecker(a) }
    }

    /// Sandwich by a Hermitian operator, ρ ↦ aρa.
    pub fn sandwich(a: &HermitianOperator) -> Self {
        Self::conjugation(a.mat())
    }

    /// ρ ↦ aρ.
    pub fn left_mult(a: &CMat) -> Self {
        let d = a.nrows();
        Self { dim: d, mat: CMat::identity(d, d).kronecker(a) }
    }

    /// ρ ↦ ρa.
    pub fn right_mult(a: &CMat) -> Self {
        let d = a.nrows();
        Self { dim: d, mat: a.transpose().kronecker(&CMat::identity(d, d)) }
    }

    /// ρ ↦ ½(aρ + ρa).
    pub fn half_anticommutator(a: &CMat) -> Self {
        let mut s = Self::left_mult(a);
        s.mat += Self::right_mult(a).mat;
        s.mat.scale_mut(0.5);
        s
    }

    /// ρ ↦ −i[h, ρ].
    pub fn commutator_neg_i(h: &CMat) -> Self {
        let i = C64::new(0.0, 1.0);
        let mut s = Self::left_mult(h);
        s.mat -= Self::right_mult(h).mat;
        s.mat *= -i;
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        unstack(&(&self.mat * stack(rho)), self.dim)
    }

    /// self ∘ other (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        Self { dim: self.dim, mat: &self.mat * &other.mat }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self { dim: self.dim, mat: self.mat.scale(factor) }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { dim: self.dim, mat: &self.mat + &other.mat }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { dim: self.dim, mat: &self.mat - &other.mat }
    }

    /// Hilbert–Schmidt adjoint; in this representation just the conjugate
    /// transpose of the matrix.
    pub fn dual(&self) -> Self {
        Self { dim: self.dim, mat: self.mat.adjoint() }
    }

    /// dual(S)[𝕀], the operator whose pairing with ρ gives Tr(S[ρ]).
    pub fn dual_identity(&self) -> CMat {
        let id = CMat::identity(self.dim, self.dim);
        unstack(&(self.mat.adjoint() * stack(&id)), self.dim)
    }

    /// Choi matrix C = (S ⊗ id)[Σ_ij |i⟩⟨j| ⊗ |i⟩⟨j|].
    ///
    /// In the column-stacking representation this is the index reshuffle
    /// C[a·d+c, b·d+e] = S[b·d+a, e·d+c].
    pub fn choi(&self) -> CMat {
        let d = self.dim;
        let mut c = CMat::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                for cc in 0..d {
                    for e in 0..d {
                        c[(a * d + cc, b * d + e)] = self.mat[(b * d + a, e * d + cc)];
                    }
                }
            }
        }
        c
    }

    pub fn choi_min_eigenvalue(&self) -> f64 {
        herm_eigen(&self.choi()).0[0]
    }

    /// Complete positivity test: flag is true iff the min Choi eigenvalue is
    /// ≥ −tol; the eigenvalue is always reported.
    pub fn is_cp(&self, tol: f64) -> (bool, f64) {
        let min = self.choi_min_eigenvalue();
        (min >= -tol, min)
    }

    /// ‖dual(S)[𝕀] − 𝕀‖_max.
    pub fn trace_defect(&self) -> f64 {
        let id = CMat::identity(self.dim, self.dim);
        max_abs_diff(&self.dual_identity(), &id)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.trace_defect() <= tol
    }

    /// True iff 𝕀 − dual(S)[𝕀] ≥ −tol.
    pub fn is_trace_nonincreasing(&self, tol: f64) -> bool {
        let id = CMat::identity(self.dim, self.dim);
        let deficit = id - self.dual_identity();
        herm_eigen(&deficit).0[0] >= -tol
    }

    /// Trace-norm-to-trace-norm induced norm, valid for CP maps only:
    /// the max eigenvalue of dual(S)[𝕀]. Refuses non-CP input, where the
    /// shortcut formula does not hold.
    pub fn cp_induced_trace_norm(&self) -> Result<f64> {
        let (cp, min_choi) = self.is_cp(CP_TOL);
        if !cp {
            return Err(Error::NotCompletelyPositive { min_choi });
        }
        Ok(self.dual_identity_max_eigenvalue())
    }

    /// Max eigenvalue of dual(S)[𝕀] without the CP guard; used internally
    /// for series-term magnitudes where terms are CP by construction.
    pub fn dual_identity_max_eigenvalue(&self) -> f64 {
        *herm_eigen(&self.dual_identity()).0.last().unwrap()
    }

    pub fn norm_max(&self) -> f64 {
        max_abs(&self.mat)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }

    /// e^{S} of the superoperator matrix (semigroup propagators).
    pub fn exp(&self) -> Self {
        Self { dim: self.dim, mat: expm(&self.mat) }
    }

    pub fn try_inverse(&self) -> Result<Self> {
        self.mat
            .clone()
            .lu()
            .try_inverse()
            .map(|mat| Self { dim: self.dim, mat })
            .ok_or_else(|| Error::Singular("superoperator matrix is not invertible".into()))
    }
}

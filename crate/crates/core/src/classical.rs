//! Classical semi-Markov processes and the commutative embedding.
//!
//! A semi-Markov matrix q_ij(t) ≥ 0 gives per-state waiting densities
//! f_j = Σ_i q_ij and survivals g_j = 1 − ∫₀ᵗ f_j. The stochastic propagator
//! is the series T = n + n∗q + n∗q∗q + … with n = diag(g_j), and the
//! probability vector obeys the memory-kernel master equation
//!
//!   dp_i/dt = ∫₀ᵗ Σ_j [w_ij(τ) p_j(t−τ) − w_ji(τ) p_i(t−τ)] dτ,
//!
//! where w̃_ij = q̃_ij/g̃_j. The time-domain w is recovered per entry by the
//! same δ-split deconvolution used for the quantum rate map: w_ij carries a
//! δ(t) coefficient q_ij(0) plus a regular part from a second-kind Volterra
//! march. Embedding q into the quantum machinery via
//! Q_t[ρ] = Σ q_ij(t)|i⟩⟨j|ρ|j⟩⟨i| reproduces T(t) on the diagonal.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::semimarkov::{SemiMarkovMap, SEMIMARKOV_TOL};
use crate::superop::{CMat, Superoperator};
use crate::timeseries::{SuperoperatorFamily, TimeGrid};

pub type RMat = DMatrix<f64>;

/// A sampled classical semi-Markov matrix: q_ij(t) ≥ 0 with column integrals
/// bounded by 1.
#[derive(Debug, Clone)]
pub struct SemiMarkovMatrix {
    grid: TimeGrid,
    q: Vec<RMat>,
}

impl SemiMarkovMatrix {
    pub fn new(grid: TimeGrid, q: Vec<RMat>) -> Result<Self> {
        if q.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} points",
                q.len(),
                grid.len()
            )));
        }
        let n = q[0].nrows();
        for (k, m) in q.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch("semi-Markov samples of mixed size".into()));
            }
            if let Some(bad) = m.iter().find(|&&x| x < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "q has negative entry {bad} at t = {:.6}",
                    grid.time(k)
                )));
            }
        }
        let mm = Self { grid, q };
        // column integrability at the horizon (integrals are monotone in t)
        let (_, g) = mm.waiting_and_survival();
        for (j, gj) in g.iter().enumerate() {
            let last = *gj.last().unwrap();
            if last < -1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "column {j} integrates to {} > 1",
                    1.0 - last
                )));
            }
        }
        Ok(mm)
    }

    pub fn from_fn(grid: TimeGrid, n: usize, f: impl Fn(f64) -> RMat) -> Result<Self> {
        let q: Vec<RMat> = grid.times().map(f).collect();
        if q.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch("sample size mismatch".into()));
        }
        Self::new(grid, q)
    }

    /// Markov choice q_ij = π_ij γ_j e^{−γ_j t}.
    pub fn markov(pi: &RMat, gamma: &[f64], grid: TimeGrid) -> Result<Self> {
        let n = gamma.len();
        if pi.nrows() != n || pi.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "π is {}×{} for {} rates",
                pi.nrows(),
                pi.ncols(),
                n
            )));
        }
        for j in 0..n {
            let col: f64 = (0..n).map(|i| pi[(i, j)]).sum();
            if (col - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("π column {j} sums to {col}")));
            }
            if !(gamma[j] > 0.0) {
                return Err(Error::InvalidParameter(format!("rate γ_{j} must be positive")));
            }
        }
        Self::from_fn(grid, n, |t| {
            RMat::from_fn(n, n, |i, j| pi[(i, j)] * gamma[j] * (-gamma[j] * t).exp())
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> usize {
        self.q[0].nrows()
    }

    pub fn get(&self, k: usize) -> &RMat {
        &self.q[k]
    }

    /// Per-state waiting densities f_j(t_k) and survivals g_j(t_k)
    /// (trapezoidal accumulation), indexed [state][grid point].
    pub fn waiting_and_survival(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.states();
        let m = self.grid.len();
        let dt = self.grid.dt();
        let mut f = vec![vec![0.0; m]; n];
        for k in 0..m {
            for j in 0..n {
                f[j][k] = (0..n).map(|i| self.q[k][(i, j)]).sum();
            }
        }
        let mut g = vec![vec![1.0; m]; n];
        for j in 0..n {
            let mut acc = 0.0;
            for k in 1..m {
                acc += 0.5 * dt * (f[j][k - 1] + f[j][k]);
                g[j][k] = 1.0 - acc;
            }
        }
        (f, g)
    }
}

/// Classical waiting densities and survivals with their invariants checked.
pub fn classical_waiting_and_survival(
    q: &SemiMarkovMatrix,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (f, g) = q.waiting_and_survival();
    for (j, gj) in g.iter().enumerate() {
        for (k, &x) in gj.iter().enumerate() {
            if x < -1e-9 || x > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "survival g_{j}({:.4}) = {x} outside [0, 1]",
                    q.grid().time(k)
                )));
            }
        }
        if gj.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            return Err(Error::InvalidParameter(format!("survival g_{j} is not nonincreasing")));
        }
    }
    Ok((f, g))
}

#[derive(Debug, Clone)]
pub struct StochasticMatrixFamily {
    pub grid: TimeGrid,
    pub mats: Vec<RMat>,
    /// Largest deviation of any column sum from 1 across the grid.
    pub max_column_defect: f64,
    /// Most negative entry encountered (0 if none).
    pub min_entry: f64,
}

impl StochasticMatrixFamily {
    pub fn get(&self, k: usize) -> &RMat {
        &self.mats[k]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max)
    }
}

fn real_convolve(grid: &TimeGrid, a: &[RMat], b: &[RMat]) -> Vec<RMat> {
    let n = a[0].nrows();
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.len());
    out.push(RMat::zeros(n, n));
    for k in 1..grid.len() {
        let mut acc = RMat::zeros(n, n);
        for j in 0..=k {
            let w = if j == 0 || j == k { 0.5 * dt } else { dt };
            acc.gemm(w, &a[j], &b[k - j], 1.0);
        }
        out.push(acc);
    }
    out
}

fn max_column_sum(m: &RMat) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// The stochastic propagator T = n + n∗q + n∗q∗q + … with n = diag(g_j).
pub fn stochastic_propagator(
    q: &SemiMarkovMatrix,
    tail_tol: f64,
    n_max: usize,
) -> Result<StochasticMatrixFamily> {
    let grid = *q.grid();
    let n = q.states();
    let (_, g) = classical_waiting_and_survival(q)?;
    let n_fam: Vec<RMat> = (0..grid.len())
        .map(|k| RMat::from_fn(n, n, |i, j| if i == j { g[j][k] } else { 0.0 }))
        .collect();
    let q_fam: Vec<RMat> = (0..grid.len()).map(|k| q.get(k).clone()).collect();

    let mut total = n_fam.clone();
    let mut term = n_fam;
    let mut magnitude = f64::INFINITY;
    let mut converged = false;
    for _ in 1..n_max {
        term = real_convolve(&grid, &term, &q_fam);
        for (tot, t) in total.iter_mut().zip(&term) {
            *tot += t;
        }
        magnitude = term.iter().map(max_column_sum).fold(0.0, f64::max);
        if magnitude < tail_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SeriesDiverged { n_max, last_magnitude: magnitude });
    }

    let mut max_column_defect: f64 = 0.0;
    let mut min_entry: f64 = 0.0;
    for m in &total {
        for j in 0..n {
            let col: f64 = (0..n).map(|i| m[(i, j)]).sum();
            max_column_defect = max_column_defect.max((col - 1.0).abs());
        }
        min_entry = min_entry.min(m.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let dt = grid.dt();
    if max_column_defect > 10.0 * dt * dt {
        return Err(Error::NotTracePreserving { defect: max_column_defect });
    }
    if min_entry < -1e-9 {
        return Err(Error::NotPositive { min_eig: min_entry });
    }
    Ok(StochasticMatrixFamily { grid, mats: total, max_column_defect, min_entry })
}

/// Laplace-domain rates w̃_ij(s) = q̃_ij(s)/g̃_j(s) by trapezoidal transforms.
pub fn classical_kernel_laplace(q: &SemiMarkovMatrix, s: f64) -> Result<RMat> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("Laplace abscissa must be positive, got {s}")));
    }
    let grid = q.grid();
    let n = q.states();
    let dt = grid.dt();
    let m = grid.steps();
    let (_, g) = classical_waiting_and_survival(q)?;
    let mut q_tilde = RMat::zeros(n, n);
    let mut g_tilde = vec![0.0; n];
    for k in 0..=m {
        let w = if k == 0 || k == m { 0.5 * dt } else { dt };
        let e = (-s * grid.time(k)).exp();
        q_tilde += q.get(k).scale(w * e);
        for j in 0..n {
            g_tilde[j] += w * e * g[j][k];
        }
    }
    for (j, &gt) in g_tilde.iter().enumerate() {
        if gt <= 1e-14 {
            return Err(Error::Singular(format!("g̃_{j}({s}) vanishes")));
        }
    }
    Ok(RMat::from_fn(n, n, |i, j| q_tilde[(i, j)] / g_tilde[j]))
}

#[derive(Debug, Clone)]
pub struct ClassicalMasterReport {
    /// max over states, basis starts and grid points of |dp/dt − gain + loss|.
    pub max_residual: f64,
    /// Reference magnitude max |dp/dt|.
    pub scale: f64,
    /// Per-state transient defect 1 − Σ_i ∫₀ᵀ q_ij dτ (mass never spent).
    pub defect_mass: Vec<f64>,
}

/// Check the classical memory-kernel master equation against a propagator.
///
/// w(t) is reconstructed per entry by the δ-split deconvolution of
/// q_ij = w_ij ∗ g_j: the δ coefficient is q_ij(0), and the regular part
/// solves w_r = d(q_ij − q_ij(0)g_j)/dt − w_r ∗ dg_j/dt, marched with
/// trapezoidal quadrature.
pub fn verify_classical_master_equation(
    t_fam: &StochasticMatrixFamily,
    q: &SemiMarkovMatrix,
) -> Result<ClassicalMasterReport> {
    t_fam.grid.check_same(q.grid())?;
    let grid = *q.grid();
    let n = q.states();
    let m = grid.steps();
    let dt = grid.dt();
    let (f, g) = classical_waiting_and_survival(q)?;

    // scalar second-order differentiation on the grid
    let diff = |vals: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; vals.len()];
        out[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * dt);
        for k in 1..vals.len() - 1 {
            out[k] = (vals[k + 1] - vals[k - 1]) / (2.0 * dt);
        }
        let last = vals.len() - 1;
        out[last] = (3.0 * vals[last] - 4.0 * vals[last - 1] + vals[last - 2]) / (2.0 * dt);
        out
    };

    // per-entry deconvolution: w_ij = w_sing δ + w_reg with w_sing = q_ij(0)
    let mut w_sing = RMat::zeros(n, n);
    let mut w_reg = vec![RMat::zeros(n, n); m + 1];
    for j in 0..n {
        let gdot = diff(&g[j]);
        for i in 0..n {
            let q0 = q.get(0)[(i, j)];
            w_sing[(i, j)] = q0;
            let r: Vec<f64> = (0..=m).map(|k| q.get(k)[(i, j)] - q0 * g[j][k]).collect();
            let rdot = diff(&r);
            let mut w = vec![0.0; m + 1];
            w[0] = rdot[0];
            for k in 1..=m {
                let mut conv = 0.5 * dt * w[0] * gdot[k];
                for l in 1..k {
                    conv += dt * w[l] * gdot[k - l];
                }
                w[k] = (rdot[k] - conv) / (1.0 + 0.5 * dt * gdot[0]);
            }
            for k in 0..=m {
                w_reg[k][(i, j)] = w[k];
            }
        }
    }

    // residual of dp_i/dt = Σ_j [w_ij∗p_j − w_ji∗p_i] over basis starts
    let mut max_residual: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for b in 0..n {
        let p: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..=m).map(|k| t_fam.get(k)[(i, b)]).collect())
            .collect();
        let pdot: Vec<Vec<f64>> = p.iter().map(|pi| diff(pi)).collect();
        for k in 0..=m {
            for i in 0..n {
                let mut rhs = 0.0;
                for j in 0..n {
                    rhs += w_sing[(i, j)] * p[j][k] - w_sing[(j, i)] * p[i][k];
                    // trapezoidal convolution of the regular part; empty at k = 0
                    let mut conv = 0.0;
                    if k > 0 {
                        for l in 0..=k {
                            let w = if l == 0 || l == k { 0.5 * dt } else { dt };
                            conv += w
                                * (w_reg[l][(i, j)] * p[j][k - l]
                                    - w_reg[l][(j, i)] * p[i][k - l]);
                        }
                    }
                    rhs += conv;
                }
                max_residual = max_residual.max((pdot[i][k] - rhs).abs());
                scale = scale.max(pdot[i][k].abs());
            }
        }
    }

    let defect_mass: Vec<f64> = (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for k in 1..=m {
                acc += 0.5 * dt * (f[j][k - 1] + f[j][k]);
            }
            1.0 - acc
        })
        .collect();
    Ok(ClassicalMasterReport { max_residual, scale, defect_mass })
}

/// Embed a classical semi-Markov matrix as the commutative quantum map
/// Q_t[ρ] = Σ_ij q_ij(t) |i⟩⟨j| ρ |j⟩⟨i|.
pub fn embed_commutative(q: &SemiMarkovMatrix) -> Result<SemiMarkovMap> {
    let grid = *q.grid();
    let n = q.states();
    let fam = SuperoperatorFamily::new(
        grid,
        (0..grid.len())
            .map(|k| {
                let mut mat = CMat::zeros(n * n, n * n);
                for i in 0..n {
                    for j in 0..n {
                        // kron(E_ij, E_ij) has its single entry at (i·n+i, j·n+j)
                        mat[(i * n + i, j * n + j)] = Complex64::new(q.get(k)[(i, j)], 0.0);
                    }
                }
                Superoperator::from_matrix(mat).expect("square by construction")
            })
            .collect(),
    )?;
    SemiMarkovMap::validate(fam, SEMIMARKOV_TOL)
}

#[derive(Debug, Clone)]
pub struct DiagonalExtraction {
    pub family: StochasticMatrixFamily,
    /// Largest magnitude found off the diagonal (or imaginary on it) when the
    /// map is applied to diagonal inputs; stochasticity of the extraction is
    /// only meaningful when this is small.
    pub max_offdiagonal_leakage: f64,
}

/// Read T_ij(t) = ⟨i|Λ_t[|j⟩⟨j|]|i⟩ from a quantum map family.
pub fn extract_diagonal(lambda: &SuperoperatorFamily) -> DiagonalExtraction {
    let grid = *lambda.grid();
    let d = lambda.dim();
    let mut leakage: f64 = 0.0;
    let mut mats = Vec::with_capacity(grid.len());
    for s in lambda.vals() {
        let mut t = RMat::zeros(d, d);
        for j in 0..d {
            let mut basis = CMat::zeros(d, d);
            basis[(j, j)] = Complex64::new(1.0, 0.0);
            let out = s.apply(&basis);
            for a in 0..d {
                for b in 0..d {
                    if a == b {
                        t[(a, j)] = out[(a, a)].re;
                        leakage = leakage.max(out[(a, a)].im.abs());
                    } else {
                        leakage = leakage.max(out[(a, b)].norm());
                    }
                }
            }
        }
        mats.push(t);
    }
    let mut max_column_defect: f64 = 0.0;
    let mut min_entry: f64 = 0.0;
    for m in &mats {
        for j in 0..d {
            let col: f64 = (0..d).map(|i| m[(i, j)]).sum();
            max_column_defect = max_column_defect.max((col - 1.0).abs());
        }
        min_entry = min_entry.min(m.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    DiagonalExtraction {
        family: StochasticMatrixFamily { grid, mats, max_column_defect, min_entry },
        max_offdiagonal_leakage: leakage,
    }
}

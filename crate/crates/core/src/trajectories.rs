//! Trajectory unraveling of semi-Markov evolutions.
//!
//! The n-jump POVM densities
//!
//!   Pⁿ(t; t_n,…,t₁) = Q†_{t₁} Q†_{t₂−t₁} ⋯ Q†_{t_n−t_{n−1}}[𝐠_{t−t_n}],
//!   P⁰(t) = 𝐠_t,
//!
//! integrate to the identity over ordered jump times, and
//! pⁿ = Tr(ρ₀ Pⁿ) equals the trace of the unnormalized trajectory state
//! N_{t−t_n} Q_{t_n−t_{n−1}} ⋯ Q_{t₁}[ρ₀] — the convention is fixed so these
//! two routes agree and the identity is verified in the tests rather than
//! assumed.
//!
//! Sampling walks the renewal structure directly: given the current
//! post-jump state σ, the next jump delay has density Tr(𝐟_τ σ), drawn by
//! inverting the piecewise-linear cumulative Tr(∫₀^τ 𝐟 σ) on the grid; a jump
//! updates σ ↦ Q_τ[σ]/Tr(Q_τ[σ]). Realization weights are kept in log space.
//! Per-trajectory randomness comes from one counter-based stream per
//! trajectory index, so results are reproducible for a given seed regardless
//! of batching.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::semimarkov::{LegitimatePair, SemiMarkovMap};
use crate::superop::{max_abs, CMat, DensityMatrix, HermitianOperator};
use crate::timeseries::TimeGrid;

fn trace_re(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

fn pair_product(a: &CMat, b: &CMat) -> f64 {
    // Tr(a·b) for Hermitian a, b
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Pⁿ(t; times) by nearest-grid-node lookup of Q† and 𝐠.
pub fn povm_density(map: &SemiMarkovMap, t: f64, times: &[f64]) -> Result<HermitianOperator> {
    let grid = map.grid();
    if t < 0.0 || t > grid.horizon() + 1e-12 {
        return Err(Error::InvalidParameter(format!("t = {t} outside the grid horizon")));
    }
    let mut previous = 0.0;
    for &tk in times {
        if tk <= previous || tk > t + 1e-12 {
            return Err(Error::InvalidParameter(
                "jump times must be strictly increasing within (0, t]".into(),
            ));
        }
        previous = tk;
    }
    let last = times.last().copied().unwrap_or(0.0);
    let mut x = map.survival_operator().get(grid.nearest_index(t - last)).mat().clone();
    for i in (0..times.len()).rev() {
        let delta = if i == 0 { times[0] } else { times[i] - times[i - 1] };
        let q_dual = map.family().get(grid.nearest_index(delta)).dual();
        x = q_dual.apply(&x);
    }
    Ok(HermitianOperator::hermitized(&x).0)
}

/// pⁿ(t; times) = Tr(ρ₀ Pⁿ(t; times)).
pub fn jump_probability_density(
    pair: &LegitimatePair,
    rho0: &DensityMatrix,
    t: f64,
    times: &[f64],
) -> Result<f64> {
    let p = povm_density(pair.map(), t, times)?;
    Ok(pair_product(p.mat(), rho0.mat()))
}

#[derive(Debug, Clone)]
pub struct PovmReport {
    /// ‖Σ_{n≤n_max} ∫ Pⁿ − 𝕀‖_max at the requested time.
    pub defect: f64,
    /// Max eigenvalue of each integrated n-jump operator, n = 0..=n_max.
    pub masses: Vec<f64>,
    /// Geometric extrapolation of the discarded n > n_max mass (infinite if
    /// the masses are not yet decaying).
    pub tail_estimate: f64,
}

/// Σ_{n=0}^{n_max} of the nested trapezoidal integrals of Pⁿ at time t,
/// computed through the recursion Mₙ(t) = ∫₀ᵗ Q†_τ[Mₙ₋₁(t−τ)] dτ, M₀ = 𝐠.
pub fn check_povm_normalization(map: &SemiMarkovMap, t: f64, n_max: usize) -> Result<PovmReport> {
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let grid = *map.grid();
    let d = map.dim();
    let dt = grid.dt();
    let idx = grid.nearest_index(t);
    let duals: Vec<crate::superop::Superoperator> =
        map.family().vals().iter().map(|q| q.dual()).collect();

    let mut level: Vec<CMat> =
        map.survival_operator().vals().iter().map(|g| g.mat().clone()).collect();
    let mut sum: Vec<CMat> = level.clone();
    let mut masses = Vec::with_capacity(n_max + 1);
    masses.push(*crate::superop::herm_eigen(&level[idx]).0.last().unwrap());
    for _ in 0..n_max {
        let mut next: Vec<CMat> = Vec::with_capacity(grid.len());
        next.push(CMat::zeros(d, d));
        for k in 1..=idx.max(1).min(grid.steps()) {
            let mut acc = CMat::zeros(d, d);
            for j in 0..=k {
                let w = if j == 0 || j == k { 0.5 * dt } else { dt };
                acc += duals[j].apply(&level[k - j]).scale(w);
            }
            next.push(acc);
        }
        // levels beyond the requested index are never read
        while next.len() < grid.len() {
            next.push(CMat::zeros(d, d));
        }
        for (s, n) in sum.iter_mut().zip(&next) {
            *s += n;
        }
        masses.push(*crate::superop::herm_eigen(&next[idx]).0.last().unwrap());
        level = next;
    }
    let defect = max_abs(&(&sum[idx] - CMat::identity(d, d)));
    let tail_estimate = {
        let last = masses[n_max];
        let prev = masses[n_max - 1];
        if last < prev && prev > 0.0 {
            let r = last / prev;
            last * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    };
    Ok(PovmReport { defect, masses, tail_estimate })
}

/// One sampled realization: ordered jump times, the conditional state at the
/// horizon, and the realization's probability density in log space.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub jump_times: Vec<f64>,
    /// Normalized conditional state right after each jump.
    pub post_jump_states: Vec<CMat>,
    pub final_state: CMat,
    pub log_weight: f64,
    /// Number of numerically negative densities clipped to zero.
    pub clipped: usize,
}

struct Sampler<'a> {
    pair: &'a LegitimatePair,
    horizon: f64,
    /// cumulative trapezoid of the waiting-time operator per grid node
    cumulative_f: Vec<CMat>,
}

impl<'a> Sampler<'a> {
    fn new(pair: &'a LegitimatePair, horizon: f64) -> Result<Self> {
        let grid = pair.grid();
        if horizon > grid.horizon() + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "sampling horizon {horizon} exceeds the grid horizon {}",
                grid.horizon()
            )));
        }
        let cumulative = pair.map().waiting_time_operator().cumulative_integral();
        Ok(Self {
            pair,
            horizon,
            cumulative_f: cumulative.vals().iter().map(|h| h.mat().clone()).collect(),
        })
    }

    /// Invert u = c(τ) = Tr(∫₀^τ 𝐟 σ) by monotone linear interpolation;
    /// `remaining` caps the delay. Returns None when the draw survives.
    fn draw_delay(&self, sigma: &CMat, remaining: f64, u: f64) -> Option<f64> {
        let grid = self.pair.grid();
        let dt = grid.dt();
        let kmax = (remaining / dt).floor() as usize;
        let kmax = kmax.min(grid.steps());
        let c_at = |k: usize| pair_product(&self.cumulative_f[k], sigma);
        // survival probability at the cap
        let frac = (remaining / dt - kmax as f64).clamp(0.0, 1.0);
        let c_cap = if kmax < grid.steps() {
            c_at(kmax) * (1.0 - frac) + c_at(kmax + 1) * frac
        } else {
            c_at(kmax)
        };
        if u >= c_cap {
            return None;
        }
        // binary search for the cell with c(k) <= u < c(k+1)
        let (mut lo, mut hi) = (0usize, kmax.min(grid.steps() - 1) + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if c_at(mid) <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c0 = c_at(lo);
        let c1 = c_at(lo + 1);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        Some((lo as f64 + w) * dt)
    }

    fn sample(&self, rho0: &CMat, rng: &mut ChaCha12Rng) -> Trajectory {
        let grid = self.pair.grid();
        let f_fam = self.pair.map().waiting_time_operator();
        let mut sigma = rho0.clone();
        let mut elapsed = 0.0;
        let mut jump_times = Vec::new();
        let mut post_jump_states = Vec::new();
        let mut log_weight = 0.0;
        let mut clipped = 0;
        loop {
            let u: f64 = rng.random();
            match self.draw_delay(&sigma, self.horizon - elapsed, u) {
                None => break,
                Some(delay) => {
                    elapsed += delay;
                    jump_times.push(elapsed);
                    // interpolated waiting density value for the weight
                    let x = (delay / grid.dt()).min(grid.steps() as f64);
                    let k = (x.floor() as usize).min(grid.steps() - 1);
                    let frac = x - k as f64;
                    let density = pair_product(f_fam.get(k).mat(), &sigma) * (1.0 - frac)
                        + pair_product(f_fam.get(k + 1).mat(), &sigma) * frac;
                    if density > 0.0 {
                        log_weight += density.ln();
                    } else {
                        clipped += 1;
                    }
                    let jumped = self.pair.q_family().interpolate(delay).apply(&sigma);
                    let tr = trace_re(&jumped);
                    if tr > 0.0 {
                        sigma = jumped.scale(1.0 / tr);
                    } else {
                        clipped += 1;
                    }
                    post_jump_states.push(sigma.clone());
                }
            }
        }
        let last = jump_times.last().copied().unwrap_or(0.0);
        let survived = self.pair.n_family().interpolate(self.horizon - last).apply(&sigma);
        let tr = trace_re(&survived);
        let final_state = if tr > 0.0 {
            log_weight += tr.ln();
            survived.scale(1.0 / tr)
        } else {
            clipped += 1;
            sigma
        };
        Trajectory { jump_times, post_jump_states, final_state, log_weight, clipped }
    }
}

/// Sample one jump trajectory on [0, horizon]; deterministic for a given seed.
pub fn sample_trajectory(
    pair: &LegitimatePair,
    rho0: &DensityMatrix,
    horizon: f64,
    seed: u64,
) -> Result<Trajectory> {
    let sampler = Sampler::new(pair, horizon)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok(sampler.sample(rho0.mat(), &mut rng))
}

/// Sample the trajectory of one counter-based stream, exactly the realization
/// `ensemble_average` uses for `stream` = trajectory index + 1.
pub fn sample_trajectory_stream(
    pair: &LegitimatePair,
    rho0: &DensityMatrix,
    horizon: f64,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    let sampler = Sampler::new(pair, horizon)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(sampler.sample(rho0.mat(), &mut rng))
}

/// Mean conditional state per grid point with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub grid: TimeGrid,
    pub mean: Vec<CMat>,
    pub stderr_re: Vec<nalgebra::DMatrix<f64>>,
    pub stderr_im: Vec<nalgebra::DMatrix<f64>>,
    pub samples: usize,
    pub clipped: usize,
}

/// Monte Carlo reconstruction of the dynamical map on ρ₀: averages the
/// conditional state at every grid point over `samples` trajectories, one
/// counter-based RNG stream per trajectory.
pub fn ensemble_average(
    pair: &LegitimatePair,
    rho0: &DensityMatrix,
    samples: usize,
    seed: u64,
) -> Result<EnsembleEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let grid = *pair.grid();
    let d = pair.dim();
    let sampler = Sampler::new(pair, grid.horizon())?;
    let m = grid.len();
    let mut mean = vec![CMat::zeros(d, d); m];
    let mut m2_re = vec![nalgebra::DMatrix::<f64>::zeros(d, d); m];
    let mut m2_im = vec![nalgebra::DMatrix::<f64>::zeros(d, d); m];
    let mut clipped = 0usize;

    for sample_idx in 0..samples {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(sample_idx as u64 + 1);
        let mut sigma = rho0.mat().clone();
        let mut last_jump = 0.0;
        let mut next = 0usize; // next jump index to absorb
        let trajectory = sampler.sample(rho0.mat(), &mut rng);
        clipped += trajectory.clipped;
        // replay: advance through grid points, absorbing jumps as they pass
        let mut rng2 = ChaCha12Rng::seed_from_u64(seed);
        rng2.set_stream(sample_idx as u64 + 1);
        let _ = &mut rng2; // the replay uses the recorded jump times instead
        let count = sample_idx as f64 + 1.0;
        for k in 0..m {
            let t = grid.time(k);
            while next < trajectory.jump_times.len() && trajectory.jump_times[next] <= t {
                let delay = trajectory.jump_times[next] - last_jump;
                let jumped = pair.q_family().interpolate(delay).apply(&sigma);
                let tr = trace_re(&jumped);
                if tr > 0.0 {
                    sigma = jumped.scale(1.0 / tr);
                }
                last_jump = trajectory.jump_times[next];
                next += 1;
            }
            let evolved = pair.n_family().interpolate(t - last_jump).apply(&sigma);
            let tr = trace_re(&evolved);
            let state = if tr > 0.0 { evolved.scale(1.0 / tr) } else { sigma.clone() };
            // Welford update per entry
            for i in 0..d {
                for j in 0..d {
                    let x = state[(i, j)];
                    let delta = x - mean[k][(i, j)];
                    mean[k][(i, j)] += delta.scale(1.0 / count);
                    let delta2 = x - mean[k][(i, j)];
                    m2_re[k][(i, j)] += delta.re * delta2.re;
                    m2_im[k][(i, j)] += delta.im * delta2.im;
                }
            }
        }
    }

    let denom = samples as f64 * (samples as f64 - 1.0).max(1.0);
    let stderr_re = m2_re.into_iter().map(|m2| m2.map(|v| (v / denom).sqrt())).collect();
    let stderr_im = m2_im.into_iter().map(|m2| m2.map(|v| (v / denom).sqrt())).collect();
    Ok(EnsembleEstimate { grid, mean, stderr_re, stderr_im, samples, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::presets;
    use crate::models::{sigma_x, WaitingDensity};
    use crate::semimarkov::{
        collision_pair_from_samples, gauge_transform, LegitimatePair, SemiMarkovMap,
        SEMIMARKOV_TOL,
    };
    use crate::superop::{max_abs_diff, Superoperator};
    use crate::timeseries::{BuildOrder, SuperoperatorFamily};
    use approx::assert_abs_diff_eq;

    fn scalar_collision_pair(grid: TimeGrid, gamma: f64) -> LegitimatePair {
        let density = WaitingDensity::exponential(gamma);
        let f: Vec<f64> = grid.times().map(|t| density.density(t)).collect();
        let g: Vec<f64> = grid.times().map(|t| density.survival(t)).collect();
        let gauge = SuperoperatorFamily::identity(grid, 2);
        let chan = SuperoperatorFamily::constant(grid, Superoperator::conjugation(&sigma_x()));
        collision_pair_from_samples(&f, &g, &gauge, &chan).unwrap()
    }

    #[test]
    fn zero_jump_povm_density_is_the_survival_operator() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let pair = scalar_collision_pair(grid, 0.25);
        for t in [0.0, 1.0, 3.5] {
            let p = povm_density(pair.map(), t, &[]).unwrap();
            let k = grid.nearest_index(t);
            assert_eq!(p.max_abs_diff(pair.map().survival_operator().get(k)), 0.0);
        }
    }

    #[test]
    fn collision_povm_density_is_the_scalar_product() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let gamma = 0.3;
        let pair = scalar_collision_pair(grid, gamma);
        let density = WaitingDensity::exponential(gamma);
        let t = 3.0;
        let times = [0.5, 1.25, 2.5];
        let p = povm_density(pair.map(), t, &times).unwrap();
        // nearest-node scalar oracle
        let node = |x: f64| grid.time(grid.nearest_index(x));
        let expected = density.density(node(0.5))
            * density.density(node(1.25 - 0.5))
            * density.density(node(2.5 - 1.25))
            * density.survival(node(t - 2.5));
        assert_abs_diff_eq!(p.mat()[(0, 0)].re, expected, epsilon = 1e-12);
        assert!(p.mat()[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn single_jump_at_the_endpoint_reduces_to_the_waiting_density() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let gamma = 0.3;
        let pair = scalar_collision_pair(grid, gamma);
        let t = 2.0;
        let p = povm_density(pair.map(), t, &[t]).unwrap();
        let expected = gamma * (-gamma * grid.time(grid.nearest_index(t))).exp();
        assert_abs_diff_eq!(p.mat()[(0, 0)].re, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(p.mat()[(1, 1)].re, expected, epsilon = 1e-12);
    }

    #[test]
    fn povm_density_rejects_unordered_times() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let pair = scalar_collision_pair(grid, 0.25);
        assert!(povm_density(pair.map(), 2.0, &[1.0, 0.5]).is_err());
        assert!(povm_density(pair.map(), 2.0, &[1.0, 3.0]).is_err());
    }

    #[test]
    fn povm_trace_equals_the_unnormalized_trajectory_trace() {
        // the composition-order convention: Tr(ρ₀ Pⁿ) = Tr(N Q … Q[ρ₀])
        let grid = TimeGrid::from_horizon(0.01, 5.0).unwrap();
        let map = presets::gellmann_default(grid).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let rho0 = DensityMatrix::pure_basis(3, 2);
        let t = 4.0;
        let times = [0.7, 1.9, 3.1];
        let via_povm = jump_probability_density(&pair, &rho0, t, &times).unwrap();
        // nearest-node trajectory route
        let node = |x: f64| grid.nearest_index(x);
        let mut state = pair.q_family().get(node(0.7)).apply(rho0.mat());
        state = pair.q_family().get(node(1.9 - 0.7)).apply(&state);
        state = pair.q_family().get(node(3.1 - 1.9)).apply(&state);
        let root = pair
            .map()
            .survival_operator()
            .get(node(t - 3.1))
            .sqrt(crate::superop::PSD_TOL)
            .unwrap();
        let survived = Superoperator::sandwich(&root).apply(&state);
        let expected: f64 = (0..3).map(|i| survived[(i, i)].re).sum();
        assert_abs_diff_eq!(via_povm, expected, epsilon = 1e-13);
    }

    #[test]
    fn povm_normalization_defect_is_bounded_by_tail_plus_quadrature() {
        let dt = 0.01;
        let grid = TimeGrid::from_horizon(dt, 4.0).unwrap();
        let gamma = 0.25;
        let pair = scalar_collision_pair(grid, gamma);
        // short time, one jump: tail ≤ (γt)²/2
        let t = 0.4; // γt = 0.1
        let report = check_povm_normalization(pair.map(), t, 1).unwrap();
        let tail = (gamma * t) * (gamma * t) / 2.0;
        assert!(
            report.defect <= tail + 10.0 * dt * dt,
            "defect {} vs tail {} + quadrature",
            report.defect,
            tail
        );
        // more jumps shrink the defect towards pure quadrature error
        let report = check_povm_normalization(pair.map(), 1.0, 6).unwrap();
        assert!(report.defect <= 1e-6 + 10.0 * dt * dt);
        assert!(report.tail_estimate.is_finite());
        assert!(report.masses.len() == 7);
    }

    #[test]
    fn povm_normalization_of_zero_map_is_exact() {
        let grid = TimeGrid::from_horizon(0.01, 2.0).unwrap();
        let q = SuperoperatorFamily::zero(grid, 2);
        let map = SemiMarkovMap::validate(q, SEMIMARKOV_TOL).unwrap();
        let report = check_povm_normalization(&map, 1.5, 3).unwrap();
        assert!(report.defect < 1e-15);
    }

    #[test]
    fn markov_povm_normalization_with_many_jumps() {
        let dt = 0.01;
        let grid = TimeGrid::from_horizon(dt, 2.0).unwrap();
        let (pair, _) = presets::markov_default(grid).unwrap();
        let report = check_povm_normalization(pair.map(), 1.0, 12).unwrap();
        assert!(
            report.defect <= 1e-6 + 10.0 * dt * dt,
            "defect {} too large",
            report.defect
        );
    }

    #[test]
    fn zero_map_trajectories_never_jump() {
        let grid = TimeGrid::from_horizon(0.01, 3.0).unwrap();
        let q = SuperoperatorFamily::zero(grid, 2);
        let map = SemiMarkovMap::validate(q, SEMIMARKOV_TOL).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        for seed in 0..20 {
            let tr = sample_trajectory(&pair, &rho0, 3.0, seed).unwrap();
            assert!(tr.jump_times.is_empty());
            assert!(max_abs_diff(&tr.final_state, rho0.mat()) < 1e-14);
        }
    }

    #[test]
    fn markov_jump_counts_follow_poisson_statistics() {
        let grid = TimeGrid::from_horizon(0.01, 5.0).unwrap();
        let (pair, _) = presets::markov_default(grid).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        let sampler = Sampler::new(&pair, 5.0).unwrap();
        let n = 20_000usize;
        let lambda = crate::models::presets::markov_rate() * 5.0;
        let mut total = 0usize;
        for i in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            rng.set_stream(i as u64 + 1);
            total += sampler.sample(rho0.mat(), &mut rng).jump_times.len();
        }
        let mean = total as f64 / n as f64;
        let sigma = (lambda / n as f64).sqrt();
        assert!(
            (mean - lambda).abs() < 3.0 * sigma,
            "mean {mean} vs Poisson mean {lambda} (3σ = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn first_jump_delays_match_the_renewal_distribution() {
        // Kolmogorov-Smirnov against the analytic first-jump law of the
        // embedded symmetric classical model, significance 0.01
        let grid = TimeGrid::from_horizon(0.01, 5.0).unwrap();
        let gamma = 0.4;
        let pi = crate::classical::RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let q = crate::classical::SemiMarkovMatrix::markov(&pi, &[gamma, gamma], grid).unwrap();
        let map = crate::classical::embed_commutative(&q).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        let sampler = Sampler::new(&pair, 5.0).unwrap();
        let n = 20_000usize;
        let mut delays = Vec::new();
        for i in 0..n {
            let mut rng = ChaCha12Rng::seed_from_u64(11);
            rng.set_stream(i as u64 + 1);
            if let Some(&first) = sampler.sample(rho0.mat(), &mut rng).jump_times.first() {
                delays.push(first);
            }
        }
        delays.sort_by(f64::total_cmp);
        // conditional law of the first jump given it happens before T
        let t_max = 5.0;
        let norm = 1.0 - (-gamma * t_max).exp();
        let cdf = |t: f64| (1.0 - (-gamma * t).exp()) / norm;
        let m = delays.len() as f64;
        let mut d_stat = 0.0f64;
        for (i, &t) in delays.iter().enumerate() {
            let f = cdf(t);
            d_stat = d_stat.max((f - i as f64 / m).abs());
            d_stat = d_stat.max(((i + 1) as f64 / m - f).abs());
        }
        let threshold = 1.628 / m.sqrt();
        assert!(d_stat < threshold, "KS statistic {d_stat} vs threshold {threshold}");
    }

    #[test]
    fn ensemble_of_the_zero_map_has_zero_variance() {
        let grid = TimeGrid::from_horizon(0.05, 2.0).unwrap();
        let q = SuperoperatorFamily::zero(grid, 2);
        let map = SemiMarkovMap::validate(q, SEMIMARKOV_TOL).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        let est = ensemble_average(&pair, &rho0, 50, 3).unwrap();
        for k in 0..grid.len() {
            assert!(max_abs_diff(&est.mean[k], rho0.mat()) < 1e-14);
            assert!(est.stderr_re[k].abs().max() < 1e-14);
        }
    }

    #[test]
    fn ensemble_average_reconstructs_the_deterministic_map() {
        let grid = TimeGrid::from_horizon(0.05, 3.0).unwrap();
        let map = presets::pauli_default(grid).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let (lambda, _) = pair.build(BuildOrder::Left, 1e-10, 64).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        let est = ensemble_average(&pair, &rho0, 20_000, 42).unwrap();
        for k in 0..grid.len() {
            let exact = lambda.get(k).apply(rho0.mat());
            for i in 0..2 {
                for j in 0..2 {
                    let se_re = est.stderr_re[k][(i, j)].max(1e-9);
                    let se_im = est.stderr_im[k][(i, j)].max(1e-9);
                    let dre = (est.mean[k][(i, j)].re - exact[(i, j)].re).abs();
                    let dim = (est.mean[k][(i, j)].im - exact[(i, j)].im).abs();
                    assert!(
                        dre < 5.0 * se_re + 5e-4,
                        "entry ({i},{j}) at k={k}: |Δre| = {dre}, se = {se_re}"
                    );
                    assert!(
                        dim < 5.0 * se_im + 5e-4,
                        "entry ({i},{j}) at k={k}: |Δim| = {dim}, se = {se_im}"
                    );
                }
            }
        }
    }

    #[test]
    fn jump_statistics_are_invariant_under_a_pure_n_gauge() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let pair = scalar_collision_pair(grid, 0.3);
        // nontrivial dynamical-map gauge on N only (𝓕 = id)
        let gauge = presets::collision_gauge(grid).unwrap();
        let ids = SuperoperatorFamily::identity(grid, 2);
        let gauged = gauge_transform(&pair, &gauge, &ids).unwrap();
        let rho0 = DensityMatrix::maximally_mixed(2);
        for seed in [1u64, 2, 3, 4, 5] {
            let a = sample_trajectory(&pair, &rho0, 4.0, seed).unwrap();
            let b = sample_trajectory(&gauged, &rho0, 4.0, seed).unwrap();
            assert_eq!(a.jump_times, b.jump_times, "seed {seed}");
        }
    }

    #[test]
    fn collision_jump_density_is_state_independent() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let pair = scalar_collision_pair(grid, 0.3);
        let a = DensityMatrix::pure_basis(2, 0);
        let b = DensityMatrix::maximally_mixed(2);
        let times = [0.8, 2.1];
        let pa = jump_probability_density(&pair, &a, 3.5, &times).unwrap();
        let pb = jump_probability_density(&pair, &b, 3.5, &times).unwrap();
        assert_abs_diff_eq!(pa, pb, epsilon = 1e-12);
    }

    #[test]
    fn gellmann_jump_density_depends_on_the_state() {
        let grid = TimeGrid::from_horizon(0.01, 5.0).unwrap();
        let map = presets::gellmann_default(grid).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let a = DensityMatrix::pure_basis(3, 2);
        let b = DensityMatrix::maximally_mixed(3);
        let times = [1.0];
        let pa = jump_probability_density(&pair, &a, 3.0, &times).unwrap();
        let pb = jump_probability_density(&pair, &b, 3.0, &times).unwrap();
        assert!((pa - pb).abs() > 1e-4, "densities {pa} vs {pb} should differ");
    }

    #[test]
    fn trajectories_reproduce_for_equal_seeds_and_differ_across_streams() {
        let grid = TimeGrid::from_horizon(0.01, 4.0).unwrap();
        let (pair, _) = presets::markov_default(grid).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        let a = sample_trajectory(&pair, &rho0, 4.0, 9).unwrap();
        let b = sample_trajectory(&pair, &rho0, 4.0, 9).unwrap();
        assert_eq!(a.jump_times, b.jump_times);
        assert_abs_diff_eq!(a.log_weight, b.log_weight);
        let est1 = ensemble_average(&pair, &rho0, 64, 5).unwrap();
        let est2 = ensemble_average(&pair, &rho0, 64, 5).unwrap();
        assert!(max_abs_diff(est1.mean.last().unwrap(), est2.mean.last().unwrap()) == 0.0);
    }

    #[test]
    fn survival_mass_plus_jump_mass_is_unity() {
        // Tr(𝐠_T σ) + ∫₀ᵀ Tr(𝐟_τ σ) dτ = 1 for several states
        let grid = TimeGrid::from_horizon(0.01, 5.0).unwrap();
        let map = presets::gellmann_default(grid).unwrap();
        let pair = LegitimatePair::canonical(map).unwrap();
        let cumulative = pair.map().waiting_time_operator().cumulative_integral();
        let last = grid.steps();
        for state in [
            DensityMatrix::pure_basis(3, 0),
            DensityMatrix::pure_basis(3, 2),
            DensityMatrix::maximally_mixed(3),
        ] {
            let survive = pair_product(pair.map().survival_operator().get(last).mat(), state.mat());
            let jump = pair_product(cumulative.get(last).mat(), state.mat());
            assert_abs_diff_eq!(survive + jump, 1.0, epsilon = 10.0 * 0.01 * 0.01);
        }
    }

    #[test]
    fn ensemble_mean_error_shrinks_with_sample_count() {
        let grid = TimeGrid::from_horizon(0.05, 2.0).unwrap();
        let (pair, generator) = presets::markov_default(grid).unwrap();
        let rho0 = DensityMatrix::pure_basis(2, 0);
        let exact_at_end = {
            let step = generator.scale(grid.horizon()).exp();
            step.apply(rho0.mat())
        };
        let err = |n: usize| {
            let est = ensemble_average(&pair, &rho0, n, 17).unwrap();
            max_abs_diff(est.mean.last().unwrap(), &exact_at_end)
        };
        let coarse = err(500);
        let fine = err(8000);
        assert!(
            fine < coarse,
            "error should shrink with samples: {coarse} -> {fine}"
        );
    }
}

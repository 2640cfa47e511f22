//! Scenario-driven front end: parse a declarative config file, run the
//! requested tasks, emit CSV data files and a structured report.
//!
//! The config is a plain `key = value` text file. `#` starts a comment,
//! blank lines are skipped, and unknown keys are hard errors with their line
//! number — silent misconfiguration is the failure mode this format is
//! guarding against. Outputs are byte-identical for identical (config, seed)
//! pairs.
//!
//! ```text
//! model   = pauli            # pauli|weyl|gellmann|collision|markov|hamiltonian-markov
//! dt      = 0.01
//! horizon = 5.0
//! tasks   = validate, propagate, kernel
//! seed    = 42               # optional (default 0)
//! out     = results          # optional output directory (default .)
//! order   = left             # optional series order: left|right
//! # model parameters (presets used when omitted)
//! p  = 0.1, 0.4, 0.3, 0.2    # weights for pauli/weyl/gellmann
//! f0 = exp 0.2               # waiting densities: `exp RATE` or `mix w:r, w:r`
//! f1 = mix 0.6:0.15, 0.4:0.3
//! dim = 3                    # weyl dimension
//! gamma = 0.25               # markov rate
//! # task parameters
//! samples   = 100000         # trajectories
//! rho0      = pure 0         # `pure K` or `mixed`
//! povm_t    = 1.0
//! povm_nmax = 3
//! s_values  = 0.5, 1, 2      # kernel task Laplace abscissas
//! classical = symmetric-markov   # or two-state-mixture
//! classical_gamma = 0.25
//! probe = lidar-shabani      # or barnett-stenholm
//! probe_memory = pulse       # or exp
//! probe_memory_rates  = 0.67, 2.0
//! probe_damping_rates = 0.5, 2.0
//! probe_omega = 2.0          # σ_z coefficient of the probe generator
//! ```
//!
//! Emitted files: `lambda.csv` (time + row-major re/im superoperator entries,
//! 1 + 2d⁴ columns), `cp_scan.csv` (memory_rate, damping_rate, min Choi
//! eigenvalue), `trajectories.csv` (trajectory, jump index, time, post-jump
//! state entries), and `report.txt`. Exit codes: 0 success, 1 a validation
//! task failed hard, 2 usage or parse errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::classical::{
    classical_kernel_laplace, embed_commutative, extract_diagonal, stochastic_propagator,
    verify_classical_master_equation, RMat, SemiMarkovMatrix,
};
use crate::error::{Error, Result};
use crate::models::{
    gellmann_semimarkov, pauli_semimarkov, presets, probe_kernel, sigma_z, weyl_semimarkov,
    ProbeKind, WaitingDensity,
};
use crate::semimarkov::{
    kernel_from_rate_map, kernel_laplace, rate_map_w, GKSLGenerator, KernelOrder, LegitimatePair,
    Provenance, SURVIVAL_EPS,
};
use crate::superop::{CMat, DensityMatrix, HermitianOperator, Superoperator};
use crate::timeseries::{
    propagate_with_kernel, verify_master_equation, BuildOrder, SuperoperatorFamily, TimeGrid,
};
use crate::trajectories::{check_povm_normalization, ensemble_average, sample_trajectory_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Pauli,
    Weyl,
    Gellmann,
    Collision,
    Markov,
    HamiltonianMarkov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Validate,
    Propagate,
    Kernel,
    ClassicalCompare,
    Trajectories,
    PovmCheck,
    ProbeScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalKind {
    SymmetricMarkov,
    TwoStateMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryKind {
    Exponential,
    Pulse,
}

#[derive(Debug, Clone)]
pub enum Rho0Kind {
    Pure(usize),
    MaximallyMixed,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelKind,
    pub dt: f64,
    pub horizon: f64,
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub order: BuildOrder,
    pub tail_tol: f64,
    pub n_max: usize,
    pub tol_cp: f64,
    pub tol_tp: f64,
    pub weights: Option<Vec<f64>>,
    pub densities: BTreeMap<usize, WaitingDensity>,
    pub dim: usize,
    pub gamma: f64,
    pub samples: usize,
    pub rho0: Rho0Kind,
    pub povm_t: f64,
    pub povm_nmax: usize,
    pub s_values: Vec<f64>,
    pub classical: ClassicalKind,
    pub classical_gamma: f64,
    pub probe: ProbeKind,
    pub probe_memory: MemoryKind,
    pub probe_memory_rates: Vec<f64>,
    pub probe_damping_rates: Vec<f64>,
    pub probe_omega: f64,
    pub quiet: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            model: ModelKind::Pauli,
            dt: 0.01,
            horizon: 5.0,
            tasks: vec![],
            seed: 0,
            out_dir: PathBuf::from("."),
            order: BuildOrder::Left,
            tail_tol: 1e-10,
            n_max: 64,
            tol_cp: 1e-6,
            tol_tp: 1e-6,
            weights: None,
            densities: BTreeMap::new(),
            dim: 3,
            gamma: presets::markov_rate(),
            samples: 10_000,
            rho0: Rho0Kind::Pure(0),
            povm_t: 1.0,
            povm_nmax: 3,
            s_values: vec![0.5, 1.0, 2.0],
            classical: ClassicalKind::SymmetricMarkov,
            classical_gamma: 0.25,
            probe: ProbeKind::LidarShabani,
            probe_memory: MemoryKind::Pulse,
            probe_memory_rates: vec![2.0, 2.0 / 3.0],
            probe_damping_rates: vec![0.5, 2.0],
            probe_omega: 2.0,
            quiet: false,
        }
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64> {
    value.trim().parse().map_err(|_| config_err(line, format!("{key}: expected a number, got `{value}`")))
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize> {
    value.trim().parse().map_err(|_| config_err(line, format!("{key}: expected an integer, got `{value}`")))
}

fn parse_f64_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|x| parse_f64(line, key, x)).collect()
}

fn parse_density(line: usize, value: &str) -> Result<WaitingDensity> {
    let value = value.trim();
    if let Some(rest) = value.strip_prefix("exp") {
        return Ok(WaitingDensity::exponential(parse_f64(line, "density", rest)?));
    }
    if let Some(rest) = value.strip_prefix("mix") {
        let mut components = Vec::new();
        for part in rest.split(',') {
            let mut it = part.trim().split(':');
            let (w, r) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
            if it.next().is_some() {
                return Err(config_err(line, format!("malformed mixture component `{part}`")));
            }
            components.push((parse_f64(line, "mixture weight", w)?, parse_f64(line, "mixture rate", r)?));
        }
        return Ok(WaitingDensity::mixture(components));
    }
    Err(config_err(line, format!("unknown density `{value}` (use `exp RATE` or `mix w:r, ...`)")))
}

impl Scenario {
    pub fn parse_str(content: &str) -> Result<Self> {
        let mut scenario = Scenario::default();
        let mut saw_model = false;
        for (idx, raw) in content.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(line_no, format!("expected `key = value`, got `{line}`")));
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "model" => {
                    scenario.model = match value {
                        "pauli" => ModelKind::Pauli,
                        "weyl" => ModelKind::Weyl,
                        "gellmann" => ModelKind::Gellmann,
                        "collision" => ModelKind::Collision,
                        "markov" => ModelKind::Markov,
                        "hamiltonian-markov" => ModelKind::HamiltonianMarkov,
                        other => return Err(config_err(line_no, format!("unknown model `{other}`"))),
                    };
                    saw_model = true;
                }
                "dt" => scenario.dt = parse_f64(line_no, key, value)?,
                "horizon" => scenario.horizon = parse_f64(line_no, key, value)?,
                "tasks" => {
                    scenario.tasks = value
                        .split(',')
                        .map(|t| match t.trim() {
                            "validate" => Ok(Task::Validate),
                            "propagate" => Ok(Task::Propagate),
                            "kernel" => Ok(Task::Kernel),
                            "classical-compare" => Ok(Task::ClassicalCompare),
                            "trajectories" => Ok(Task::Trajectories),
                            "povm-check" => Ok(Task::PovmCheck),
                            "probe-scan" => Ok(Task::ProbeScan),
                            other => Err(config_err(line_no, format!("unknown task `{other}`"))),
                        })
                        .collect::<Result<Vec<_>>>()?;
                }
                "seed" => scenario.seed = parse_usize(line_no, key, value)? as u64,
                "out" => scenario.out_dir = PathBuf::from(value),
                "order" => {
                    scenario.order = match value {
                        "left" => BuildOrder::Left,
                        "right" => BuildOrder::Right,
                        other => return Err(config_err(line_no, format!("unknown order `{other}`"))),
                    }
                }
                "tail_tol" => scenario.tail_tol = parse_f64(line_no, key, value)?,
                "n_max" => scenario.n_max = parse_usize(line_no, key, value)?,
                "tol_cp" => scenario.tol_cp = parse_f64(line_no, key, value)?,
                "tol_tp" => scenario.tol_tp = parse_f64(line_no, key, value)?,
                "p" => scenario.weights = Some(parse_f64_list(line_no, key, value)?),
                "dim" => scenario.dim = parse_usize(line_no, key, value)?,
                "gamma" => scenario.gamma = parse_f64(line_no, key, value)?,
                "samples" => scenario.samples = parse_usize(line_no, key, value)?,
                "rho0" => {
                    scenario.rho0 = if value == "mixed" {
                        Rho0Kind::MaximallyMixed
                    } else if let Some(rest) = value.strip_prefix("pure") {
                        Rho0Kind::Pure(parse_usize(line_no, key, rest)?)
                    } else {
                        return Err(config_err(line_no, format!("unknown rho0 `{value}`")));
                    };
                }
                "povm_t" => scenario.povm_t = parse_f64(line_no, key, value)?,
                "povm_nmax" => scenario.povm_nmax = parse_usize(line_no, key, value)?,
                "s_values" => scenario.s_values = parse_f64_list(line_no, key, value)?,
                "classical" => {
                    scenario.classical = match value {
                        "symmetric-markov" => ClassicalKind::SymmetricMarkov,
                        "two-state-mixture" => ClassicalKind::TwoStateMixture,
                        other => {
                            return Err(config_err(line_no, format!("unknown classical model `{other}`")))
                        }
                    }
                }
                "classical_gamma" => scenario.classical_gamma = parse_f64(line_no, key, value)?,
                "probe" => {
                    scenario.probe = match value {
                        "lidar-shabani" => ProbeKind::LidarShabani,
                        "barnett-stenholm" => ProbeKind::BarnettStenholm,
                        other => return Err(config_err(line_no, format!("unknown probe `{other}`"))),
                    }
                }
                "probe_memory" => {
                    scenario.probe_memory = match value {
                        "exp" => MemoryKind::Exponential,
                        "pulse" => MemoryKind::Pulse,
                        other => return Err(config_err(line_no, format!("unknown memory kind `{other}`"))),
                    }
                }
                "probe_memory_rates" => scenario.probe_memory_rates = parse_f64_list(line_no, key, value)?,
                "probe_damping_rates" => scenario.probe_damping_rates = parse_f64_list(line_no, key, value)?,
                "probe_omega" => scenario.probe_omega = parse_f64(line_no, key, value)?,
                _ if key.starts_with('f') && key[1..].parse::<usize>().is_ok() => {
                    let alpha: usize = key[1..].parse().unwrap();
                    scenario.densities.insert(alpha, parse_density(line_no, value)?);
                }
                other => return Err(config_err(line_no, format!("unknown key `{other}`"))),
            }
        }
        if !saw_model {
            return Err(config_err(0, "missing `model` key"));
        }
        if scenario.tasks.is_empty() {
            return Err(config_err(0, "at least one task is required"));
        }
        if !(scenario.dt > 0.0) {
            return Err(config_err(0, "dt must be positive"));
        }
        Ok(scenario)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        Self::parse_str(&content)
    }

    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_horizon(self.dt, self.horizon)
    }

    fn density_or(&self, alpha: usize, fallback: &WaitingDensity) -> WaitingDensity {
        self.densities.get(&alpha).cloned().unwrap_or_else(|| fallback.clone())
    }

    /// Build the configured pair and, for Markov kinds, its generator.
    pub fn build_pair(&self) -> Result<(LegitimatePair, Option<Superoperator>)> {
        let grid = self.grid()?;
        match self.model {
            ModelKind::Pauli => {
                let defaults = presets::pauli_densities();
                let weights = match &self.weights {
                    Some(w) if w.len() == 4 => [w[0], w[1], w[2], w[3]],
                    Some(w) => {
                        return Err(Error::InvalidParameter(format!(
                            "pauli model needs 4 weights, got {}",
                            w.len()
                        )))
                    }
                    None => presets::pauli_probabilities(),
                };
                let densities: [WaitingDensity; 4] =
                    std::array::from_fn(|a| self.density_or(a, &defaults[a]));
                let map = pauli_semimarkov(&weights, &densities, grid)?;
                Ok((LegitimatePair::canonical(map)?, None))
            }
            ModelKind::Weyl => {
                let d = self.dim;
                let n = d * d;
                let weights = match &self.weights {
                    Some(w) if w.len() == n => w.clone(),
                    Some(w) => {
                        return Err(Error::InvalidParameter(format!(
                            "weyl model in dimension {d} needs {n} weights, got {}",
                            w.len()
                        )))
                    }
                    None => {
                        let mut w = vec![0.8 / (n - 1) as f64; n];
                        w[0] = 0.2;
                        w
                    }
                };
                let base = WaitingDensity::exponential(0.2);
                let densities: Vec<WaitingDensity> =
                    (0..n).map(|a| self.density_or(a, &base)).collect();
                let map = weyl_semimarkov(d, &weights, &densities, grid)?;
                Ok((LegitimatePair::canonical(map)?, None))
            }
            ModelKind::Gellmann => {
                let defaults = presets::gellmann_densities();
                let weights = match &self.weights {
                    Some(w) if w.len() == 9 => {
                        let mut arr = [0.0; 9];
                        arr.copy_from_slice(w);
                        arr
                    }
                    Some(w) => {
                        return Err(Error::InvalidParameter(format!(
                            "gellmann model needs 9 weights, got {}",
                            w.len()
                        )))
                    }
                    None => presets::gellmann_probabilities(),
                };
                let densities: [WaitingDensity; 9] =
                    std::array::from_fn(|a| self.density_or(a, &defaults[a]));
                let map = gellmann_semimarkov(&weights, &densities, grid)?;
                Ok((LegitimatePair::canonical(map)?, None))
            }
            ModelKind::Collision => {
                let density = self.density_or(
                    0,
                    &WaitingDensity::mixture(vec![(0.5, 0.15), (0.5, 0.3)]),
                );
                density.validate()?;
                let f: Vec<f64> = grid.times().map(|t| density.density(t)).collect();
                let g: Vec<f64> = grid.times().map(|t| density.survival(t)).collect();
                let gauge = presets::collision_gauge(grid)?;
                let channels = SuperoperatorFamily::constant(grid, presets::collision_channel());
                let pair = crate::semimarkov::collision_pair_from_samples(&f, &g, &gauge, &channels)?;
                Ok((pair, None))
            }
            ModelKind::Markov => {
                let gamma = HermitianOperator::from_real_diag(&[self.gamma; 2]);
                let (pair, generator) =
                    crate::semimarkov::markov_pair(&presets::markov_channel(), &gamma, grid)?;
                Ok((pair, Some(generator)))
            }
            ModelKind::HamiltonianMarkov => {
                let gamma = HermitianOperator::from_real_diag(&[self.gamma; 2]);
                let h = HermitianOperator::new(sigma_z().scale(0.4)).expect("Hermitian");
                let phi = Superoperator::conjugation(&sigma_z())
                    .scale(0.6)
                    .add(&Superoperator::identity(2).scale(0.4));
                let (pair, generator) =
                    crate::semimarkov::hamiltonian_markov_pair(&phi, &gamma, &h, grid)?;
                Ok((pair, Some(generator)))
            }
        }
    }

    fn rho0(&self, d: usize) -> Result<DensityMatrix> {
        match &self.rho0 {
            Rho0Kind::Pure(k) => {
                if *k >= d {
                    return Err(Error::InvalidParameter(format!(
                        "rho0 = pure {k} out of range for dimension {d}"
                    )));
                }
                Ok(DensityMatrix::pure_basis(d, *k))
            }
            Rho0Kind::MaximallyMixed => Ok(DensityMatrix::maximally_mixed(d)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStatus {
    Ok,
    Warning,
    Failure,
}

impl std::fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskStatus::Ok => write!(f, "ok"),
            TaskStatus::Warning => write!(f, "warning"),
            TaskStatus::Failure => write!(f, "FAILURE"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskReport {
    pub task: String,
    pub status: TaskStatus,
    pub lines: Vec<String>,
}

#[derive(Debug)]
pub struct RunReport {
    pub tasks: Vec<TaskReport>,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.tasks.iter().any(|t| t.status == TaskStatus::Failure)
    }

    /// Deterministic rendering; identical (config, seed) runs produce
    /// identical bytes. This is what goes into report.txt.
    pub fn render_stable(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            let _ = writeln!(out, "[{}] {}", t.status, t.task);
            for l in &t.lines {
                let _ = writeln!(out, "    {l}");
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = self.render_stable();
        let _ = writeln!(out, "wall-clock: {:.3} s", self.wall_seconds);
        out
    }
}

fn fmt_e(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_lambda_csv(path: &Path, lambda: &SuperoperatorFamily) -> Result<()> {
    let d2 = lambda.dim() * lambda.dim();
    let mut out = String::from("time");
    for i in 0..d2 {
        for j in 0..d2 {
            let _ = write!(out, ",re_{i}_{j},im_{i}_{j}");
        }
    }
    out.push('\n');
    for (k, t) in lambda.grid().times().enumerate() {
        let _ = write!(out, "{}", fmt_e(t));
        let m = lambda.get(k).mat();
        for i in 0..d2 {
            for j in 0..d2 {
                let _ = write!(out, ",{},{}", fmt_e(m[(i, j)].re), fmt_e(m[(i, j)].im));
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn provenance_note(p: Provenance) -> &'static str {
    match p {
        Provenance::Canonical => "canonical semi-Markov pair: N determined by Q",
        Provenance::Gauged => "gauged pair: waiting-time and survival operators unchanged",
        Provenance::Collision => "collision pair: scalar waiting density, gauge on N",
        Provenance::Markov => "Markov pair: the GKSL semigroup limit applies",
    }
}

/// Execute every task of a parsed scenario. Pure library users can call the
/// individual modules directly; this is the orchestration the `qsm` binary
/// uses.
pub fn run(scenario: &Scenario) -> Result<RunReport> {
    let start = Instant::now();
    std::fs::create_dir_all(&scenario.out_dir)?;
    let grid = scenario.grid()?;
    let mut tasks = Vec::new();
    // Λ is shared by several tasks; build lazily and cache
    type Built = (
        LegitimatePair,
        Option<Superoperator>,
        SuperoperatorFamily,
        crate::timeseries::BuildDiagnostics,
    );
    let mut cached: Option<Built> = None;

    let mut ensure_built = |scenario: &Scenario| -> Result<Built> {
        if let Some(c) = &cached {
            return Ok(c.clone());
        }
        let (pair, generator) = scenario.build_pair()?;
        let (lambda, diag) = pair.build(scenario.order, scenario.tail_tol, scenario.n_max)?;
        cached = Some((pair, generator, lambda, diag));
        Ok(cached.clone().unwrap())
    };

    for task in &scenario.tasks {
        match task {
            Task::Validate => {
                let mut lines = Vec::new();
                let status = match scenario.build_pair() {
                    Ok((pair, _)) => {
                        lines.push(format!("provenance: {} ({})", pair.provenance(), provenance_note(pair.provenance())));
                        lines.push(format!("Q min Choi eigenvalue over grid: {}", fmt_e(pair.map().min_choi())));
                        lines.push(format!("integrated excess (≤ 0 up to tol): {}", fmt_e(pair.map().integrated_excess())));
                        lines.push(format!("normalization defect: {}", fmt_e(pair.normalization_defect())));
                        let bound = 10.0 * scenario.dt * scenario.dt;
                        if pair.normalization_defect() > bound {
                            lines.push(format!("normalization defect exceeds 10·dt² = {}", fmt_e(bound)));
                            TaskStatus::Failure
                        } else {
                            TaskStatus::Ok
                        }
                    }
                    Err(e) => {
                        lines.push(format!("validation failed: {e}"));
                        TaskStatus::Failure
                    }
                };
                tasks.push(TaskReport { task: "validate".into(), status, lines });
            }
            Task::Propagate => {
                let mut lines = Vec::new();
                let mut status = TaskStatus::Ok;
                match ensure_built(scenario) {
                    Ok((pair, generator, lambda, diag)) => {
                        lines.push(format!("series terms: {}", diag.terms_used));
                        lines.push(format!("last term magnitude: {}", fmt_e(diag.last_term_magnitude)));
                        lines.push(format!("min Choi eigenvalue over grid: {}", fmt_e(diag.min_choi_eigenvalue)));
                        lines.push(format!("max trace defect over grid: {}", fmt_e(diag.max_trace_defect)));
                        for w in &diag.warnings {
                            lines.push(format!("warning: {w}"));
                            status = TaskStatus::Warning;
                        }
                        // discretization-scale violations warn; anything beyond
                        // an O(dt²) allowance is a physics-scale failure
                        let discretization = grid.dt() * grid.dt();
                        let cp_violation = (-diag.min_choi_eigenvalue).max(0.0);
                        for (what, value, tol) in [
                            ("CP", cp_violation, scenario.tol_cp),
                            ("trace preservation", diag.max_trace_defect, scenario.tol_tp),
                        ] {
                            if value > tol.max(discretization) {
                                lines.push(format!("{what} violated at physics scale ({})", fmt_e(value)));
                                status = TaskStatus::Failure;
                            } else if value > tol {
                                lines.push(format!(
                                    "{what} defect {} exceeds the tolerance but is discretization-scale (≤ dt²)",
                                    fmt_e(value)
                                ));
                                if status == TaskStatus::Ok {
                                    status = TaskStatus::Warning;
                                }
                            }
                        }
                        if let Some(generator) = generator {
                            // semigroup oracle comparison for Markov kinds
                            let step = generator.scale(grid.dt()).exp();
                            let mut exact = Superoperator::identity(pair.dim());
                            let mut worst = 0.0f64;
                            for k in 0..grid.len() {
                                worst = worst.max(lambda.get(k).max_abs_diff(&exact));
                                exact = step.compose(&exact);
                            }
                            lines.push(format!("max deviation from exp(t·generator): {}", fmt_e(worst)));
                            if worst > 5.0 * grid.dt() * grid.dt() {
                                status = TaskStatus::Failure;
                            }
                        }
                        let path = scenario.out_dir.join("lambda.csv");
                        write_lambda_csv(&path, &lambda)?;
                        lines.push("wrote lambda.csv".into());
                    }
                    Err(e) => {
                        lines.push(format!("build failed: {e}"));
                        status = TaskStatus::Failure;
                    }
                }
                tasks.push(TaskReport { task: "propagate".into(), status, lines });
            }
            Task::Kernel => {
                let mut lines = Vec::new();
                let mut status = TaskStatus::Ok;
                match ensure_built(scenario) {
                    Ok((pair, _, lambda, _)) => {
                        let w = rate_map_w(pair.map(), SURVIVAL_EPS)?;
                        for warning in &w.diagnostics.warnings {
                            lines.push(format!("warning: {warning}"));
                            status = TaskStatus::Warning;
                        }
                        lines.push(format!("rate map regular-part magnitude: {}", fmt_e(w.diagnostics.max_regular_norm)));
                        let kernel = kernel_from_rate_map(&w)?;
                        let report = propagate_with_kernel(&kernel)?;
                        let gap = report.family.max_abs_diff(&lambda);
                        lines.push(format!("kernel propagation vs series map: {}", fmt_e(gap)));
                        let residual = verify_master_equation(&lambda, &kernel)?;
                        lines.push(format!(
                            "master equation residual: {} (scale {})",
                            fmt_e(residual.max_residual),
                            fmt_e(residual.scale)
                        ));
                        for &s in &scenario.s_values {
                            let left = kernel_laplace(&pair, s, KernelOrder::Left)?;
                            let right = kernel_laplace(&pair, s, KernelOrder::Right)?;
                            lines.push(format!(
                                "s = {s}: left/right kernel gap {}, cond(N~) {:.3e}",
                                fmt_e(left.kernel.max_abs_diff(&right.kernel)),
                                left.n_condition
                            ));
                            // the series contracts where ‖Q~_s‖₁ < 1; sampled and
                            // reported, not claimed as a proof of convergence
                            let q_l = crate::timeseries::laplace_eval(pair.q_family(), s)?;
                            match q_l.value.cp_induced_trace_norm() {
                                Ok(norm) => lines.push(format!(
                                    "s = {s}: contraction norm ‖Q~‖₁ = {} (tail bound {})",
                                    fmt_e(norm),
                                    fmt_e(q_l.tail_bound)
                                )),
                                Err(_) => lines.push(format!(
                                    "s = {s}: Q~ not CP within tolerance; contraction norm unavailable"
                                )),
                            }
                        }
                        let bound = 5.0 * grid.dt() * grid.dt();
                        if gap > bound {
                            lines.push(format!("kernel/series gap exceeds 5·dt² = {}", fmt_e(bound)));
                            status = TaskStatus::Failure;
                        }
                    }
                    Err(e) => {
                        lines.push(format!("build failed: {e}"));
                        status = TaskStatus::Failure;
                    }
                }
                tasks.push(TaskReport { task: "kernel".into(), status, lines });
            }
            Task::ClassicalCompare => {
                let mut lines = Vec::new();
                let mut status = TaskStatus::Ok;
                let result: Result<()> = (|| {
                    let q = match scenario.classical {
                        ClassicalKind::SymmetricMarkov => {
                            let pi = RMat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
                            SemiMarkovMatrix::markov(
                                &pi,
                                &[scenario.classical_gamma, scenario.classical_gamma],
                                grid,
                            )?
                        }
                        ClassicalKind::TwoStateMixture => {
                            let f = |t: f64| {
                                0.5 * 0.15 * (-0.15 * t).exp() + 0.5 * 0.3 * (-0.3 * t).exp()
                            };
                            SemiMarkovMatrix::from_fn(grid, 2, |t| {
                                RMat::from_row_slice(
                                    2,
                                    2,
                                    &[0.3 * f(t), 0.7 * f(t), 0.7 * f(t), 0.3 * f(t)],
                                )
                            })?
                        }
                    };
                    let classical = stochastic_propagator(&q, scenario.tail_tol, scenario.n_max)?;
                    lines.push(format!("classical column defect: {}", fmt_e(classical.max_column_defect)));
                    let map = embed_commutative(&q)?;
                    let pair = LegitimatePair::canonical(map)?;
                    let (lambda, _) = pair.build(scenario.order, scenario.tail_tol, scenario.n_max)?;
                    let extraction = extract_diagonal(&lambda);
                    lines.push(format!(
                        "off-diagonal leakage of the embedded map: {}",
                        fmt_e(extraction.max_offdiagonal_leakage)
                    ));
                    let gap = extraction.family.max_abs_diff(&classical);
                    lines.push(format!("quantum diagonal vs classical propagator: {}", fmt_e(gap)));
                    if gap > 1e-8 {
                        status = TaskStatus::Failure;
                    }
                    if let ClassicalKind::SymmetricMarkov = scenario.classical {
                        let mut worst = 0.0f64;
                        for (k, t) in grid.times().enumerate() {
                            let p1 = 0.5 * (1.0 + (-2.0 * scenario.classical_gamma * t).exp());
                            worst = worst.max((classical.get(k)[(0, 0)] - p1).abs());
                        }
                        lines.push(format!("closed-form oracle deviation: {}", fmt_e(worst)));
                        if worst > 5.0 * grid.dt() * grid.dt() {
                            status = TaskStatus::Failure;
                        }
                    }
                    let residual = verify_classical_master_equation(&classical, &q)?;
                    lines.push(format!(
                        "classical master equation residual: {} (scale {})",
                        fmt_e(residual.max_residual),
                        fmt_e(residual.scale)
                    ));
                    for &s in &scenario.s_values {
                        let w = classical_kernel_laplace(&q, s)?;
                        lines.push(format!("w~({s}) max entry: {}", fmt_e(w.abs().max())));
                    }
                    Ok(())
                })();
                if let Err(e) = result {
                    lines.push(format!("classical comparison failed: {e}"));
                    status = TaskStatus::Failure;
                }
                tasks.push(TaskReport { task: "classical-compare".into(), status, lines });
            }
            Task::Trajectories => {
                let mut lines = Vec::new();
                let mut status = TaskStatus::Ok;
                match ensure_built(scenario) {
                    Ok((pair, _, lambda, _)) => {
                        let rho0 = scenario.rho0(pair.dim())?;
                        let est = ensemble_average(&pair, &rho0, scenario.samples, scenario.seed)?;
                        let mut worst_sigma = 0.0f64;
                        // rule-of-three floor: when no jump has fired within
                        // the sample the empirical variance is zero even
                        // though the map has already moved by O(rate·t)
                        let se_floor = 3.0 / est.samples as f64;
                        for k in 0..grid.len() {
                            let exact = lambda.get(k).apply(rho0.mat());
                            for i in 0..pair.dim() {
                                for j in 0..pair.dim() {
                                    let se_re = est.stderr_re[k][(i, j)].max(se_floor);
                                    let se_im = est.stderr_im[k][(i, j)].max(se_floor);
                                    worst_sigma = worst_sigma
                                        .max((est.mean[k][(i, j)].re - exact[(i, j)].re).abs() / se_re)
                                        .max((est.mean[k][(i, j)].im - exact[(i, j)].im).abs() / se_im);
                                }
                            }
                        }
                        lines.push(format!("samples: {}", est.samples));
                        lines.push(format!("clipped negative densities: {}", est.clipped));
                        lines.push(format!("worst |mean − Λρ₀| in standard errors: {:.3}", worst_sigma));
                        if worst_sigma > 6.0 {
                            status = TaskStatus::Failure;
                        }
                        // per-trajectory event log (first 1000 streams)
                        let logged = scenario.samples.min(1000);
                        let mut csv = String::from("trajectory,jump_index,time");
                        let d = pair.dim();
                        for i in 0..d {
                            for j in 0..d {
                                let _ = write!(csv, ",re_{i}_{j},im_{i}_{j}");
                            }
                        }
                        csv.push('\n');
                        for idx in 0..logged {
                            let tr = sample_trajectory_stream(
                                &pair,
                                &rho0,
                                grid.horizon(),
                                scenario.seed,
                                idx as u64 + 1,
                            )?;
                            for (jk, (&t, state)) in
                                tr.jump_times.iter().zip(tr.post_jump_states.iter()).enumerate()
                            {
                                let _ = write!(csv, "{idx},{jk},{}", fmt_e(t));
                                for i in 0..d {
                                    for j in 0..d {
                                        let _ = write!(
                                            csv,
                                            ",{},{}",
                                            fmt_e(state[(i, j)].re),
                                            fmt_e(state[(i, j)].im)
                                        );
                                    }
                                }
                                csv.push('\n');
                            }
                        }
                        let path = scenario.out_dir.join("trajectories.csv");
                        std::fs::write(&path, csv)?;
                        lines.push(format!("wrote trajectories.csv (first {logged} trajectories)"));
                    }
                    Err(e) => {
                        lines.push(format!("build failed: {e}"));
                        status = TaskStatus::Failure;
                    }
                }
                tasks.push(TaskReport { task: "trajectories".into(), status, lines });
            }
            Task::PovmCheck => {
                let mut lines = Vec::new();
                let mut status = TaskStatus::Ok;
                match scenario.build_pair() {
                    Ok((pair, _)) => {
                        let report =
                            check_povm_normalization(pair.map(), scenario.povm_t, scenario.povm_nmax)?;
                        lines.push(format!("t = {}, n_max = {}", scenario.povm_t, scenario.povm_nmax));
                        lines.push(format!("defect ‖Σ∫Pⁿ − 𝕀‖: {}", fmt_e(report.defect)));
                        for (n, m) in report.masses.iter().enumerate() {
                            lines.push(format!("integrated mass of the {n}-jump term: {}", fmt_e(*m)));
                        }
                        lines.push(format!("n-truncation tail estimate: {}", fmt_e(report.tail_estimate)));
                        if report.tail_estimate.is_finite()
                            && report.defect > report.tail_estimate + 100.0 * grid.dt() * grid.dt()
                        {
                            status = TaskStatus::Warning;
                        }
                    }
                    Err(e) => {
                        lines.push(format!("build failed: {e}"));
                        status = TaskStatus::Failure;
                    }
                }
                tasks.push(TaskReport { task: "povm-check".into(), status, lines });
            }
            Task::ProbeScan => {
                let mut lines = Vec::new();
                let mut csv = String::from("memory_rate,damping_rate,min_choi_eigenvalue\n");
                let mut scan_min = f64::INFINITY;
                for &memory_rate in &scenario.probe_memory_rates {
                    for &damping in &scenario.probe_damping_rates {
                        let gen = GKSLGenerator {
                            h_eff: HermitianOperator::new(sigma_z().scale(scenario.probe_omega))
                                .expect("Hermitian"),
                            noise_ops: vec![CMat::from_row_slice(
                                2,
                                2,
                                &[
                                    num_complex::Complex64::new(0.0, 0.0),
                                    num_complex::Complex64::new(1.0, 0.0),
                                    num_complex::Complex64::new(0.0, 0.0),
                                    num_complex::Complex64::new(0.0, 0.0),
                                ],
                            )],
                            rates: vec![damping],
                        };
                        let memory = match scenario.probe_memory {
                            MemoryKind::Exponential => WaitingDensity::exponential(memory_rate),
                            MemoryKind::Pulse => {
                                let delay = 1.0 / memory_rate;
                                let width = (0.1f64).min(grid.horizon() - delay).max(grid.dt());
                                let vals: Vec<f64> = grid
                                    .times()
                                    .map(|t| {
                                        if t >= delay && t < delay + width { 0.98 / width } else { 0.0 }
                                    })
                                    .collect();
                                WaitingDensity::tabulated(grid, vals)?
                            }
                        };
                        let kernel = probe_kernel(scenario.probe, &memory, &gen, grid)?;
                        let report = propagate_with_kernel(&kernel)?;
                        let min_choi = report
                            .family
                            .vals()
                            .iter()
                            .map(|s| s.choi_min_eigenvalue())
                            .fold(f64::INFINITY, f64::min);
                        scan_min = scan_min.min(min_choi);
                        let _ = writeln!(csv, "{},{},{}", fmt_e(memory_rate), fmt_e(damping), fmt_e(min_choi));
                    }
                }
                let path = scenario.out_dir.join("cp_scan.csv");
                std::fs::write(&path, csv)?;
                lines.push(format!("scan minimum of the min Choi eigenvalue: {}", fmt_e(scan_min)));
                lines.push("wrote cp_scan.csv".into());
                tasks.push(TaskReport { task: "probe-scan".into(), status: TaskStatus::Ok, lines });
            }
        }
    }

    let report = RunReport { tasks, wall_seconds: start.elapsed().as_secs_f64() };
    let path = scenario.out_dir.join("report.txt");
    std::fs::write(&path, report.render_stable())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_config() {
        let s = Scenario::parse_str(
            "# comment\nmodel = pauli\ntasks = validate\ndt = 0.02\nhorizon = 2.0\n",
        )
        .unwrap();
        assert_eq!(s.model, ModelKind::Pauli);
        assert_eq!(s.tasks, vec![Task::Validate]);
        assert_eq!(s.dt, 0.02);
    }

    #[test]
    fn unknown_key_is_a_hard_error_with_the_line_number() {
        let err = Scenario::parse_str("model = pauli\ntasks = validate\nbogus = 1\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unknown_model_and_task_are_rejected() {
        assert!(Scenario::parse_str("model = banana\ntasks = validate\n").is_err());
        assert!(Scenario::parse_str("model = pauli\ntasks = dance\n").is_err());
        assert!(Scenario::parse_str("tasks = validate\n").is_err());
        assert!(Scenario::parse_str("model = pauli\n").is_err());
    }

    #[test]
    fn density_syntax_round_trips() {
        let s = Scenario::parse_str(
            "model = pauli\ntasks = validate\nf1 = exp 0.3\nf2 = mix 0.6:0.15, 0.4:0.3\n",
        )
        .unwrap();
        assert!(matches!(s.densities.get(&1), Some(WaitingDensity::Exponential { .. })));
        assert!(matches!(s.densities.get(&2), Some(WaitingDensity::Mixture { .. })));
        assert!(Scenario::parse_str("model = pauli\ntasks = validate\nf1 = wat 3\n").is_err());
    }
}

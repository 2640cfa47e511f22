//! Quantum semi-Markov evolution from legitimate pairs.
//!
//! This library builds completely positive, trace-preserving dynamical maps
//! Λ_t out of legitimate pairs {N_t, Q_t} of completely positive families,
//! certifies them (Choi positivity, trace preservation), assembles and checks
//! the associated memory-kernel master equation, reduces the construction to
//! classical semi-Markov processes and Markovian semigroups, and unravels the
//! dynamics into jump trajectories through POVM densities.
//!
//! The fastest way in is the `examples/` directory — one runnable example per
//! capability:
//!
//! ```text
//! cargo run --release --example validate_pauli        # build + certify a qubit model
//! cargo run --release --example markov_limit          # semigroup limit vs exp(tL)
//! cargo run --release --example memory_kernel         # rate map, kernel, Volterra re-propagation
//! cargo run --release --example classical_embedding   # classical <-> quantum diagram
//! cargo run --release --example gauge_recognition     # gauge round-trip recognition
//! cargo run --release --example trajectories_mc       # Monte Carlo unraveling
//! cargo run --release --example povm_normalization    # POVM density bookkeeping
//! cargo run --release --example cp_violation_probe    # Barnett-Stenholm / Lidar-Shabani scans
//! cargo run --release --example weyl_gellmann         # qutrit models, left/right kernel gap
//! ```
//!
//! A thin scenario-driven binary `qsm` drives the same machinery from a
//! config file: `qsm run scenario.cfg`.
//!
//! Module map:
//!
//! - [`superop`] — operators, superoperators, Choi matrices, CP/TP tests.
//! - [`timeseries`] — sampled families on a uniform grid: convolution, the
//!   series construction of Λ_t, Laplace evaluation, a Volterra solver.
//! - [`semimarkov`] — semi-Markov maps, waiting-time/survival operators,
//!   canonical pairs, rate maps, kernels, gauges, Markov limits.
//! - [`classical`] — classical semi-Markov matrices and the commutative
//!   embedding into the quantum machinery.
//! - [`trajectories`] — POVM densities, jump sampling, ensemble averages.
//! - [`models`] — built-in constructions: Pauli/Weyl/Gell-Mann maps, GKSL
//!   generators, probe kernels.
//! - [`scenario`] — the config-file front end used by the `qsm` binary.

pub mod classical;
pub mod error;
pub mod models;
pub mod scenario;
pub mod semimarkov;
pub mod superop;
pub mod timeseries;
pub mod trajectories;

pub use error::{Error, Result};
pub use superop::{C64, CMat, CVec, DensityMatrix, HermitianOperator, Superoperator};
pub use timeseries::{MemoryKernel, OperatorFamily, SuperoperatorFamily, TimeGrid};

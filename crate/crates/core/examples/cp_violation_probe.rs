//! Phenomenological kernels are not automatically physical: scan the
//! Barnett–Stenholm kernel k(t)𝓛 and the Lidar–Shabani kernel k(t)𝓛e^{𝓛t}
//! for complete-positivity violations.
//!
//! With an exponential memory the Lidar–Shabani map is a convex mixture of
//! semigroup maps and stays CP for every generator; a delayed pulse memory
//! plus a Hamiltonian part in the generator breaks it badly.

use num_complex::Complex64;
use quantum_semimarkov::models::{probe_kernel, sigma_z, ProbeKind, WaitingDensity};
use quantum_semimarkov::semimarkov::GKSLGenerator;
use quantum_semimarkov::superop::{CMat, HermitianOperator};
use quantum_semimarkov::timeseries::{propagate_with_kernel, TimeGrid};

fn lowering() -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    )
}

fn min_choi(kernel: &quantum_semimarkov::MemoryKernel) -> f64 {
    let report = propagate_with_kernel(kernel).unwrap();
    report.family.vals().iter().map(|s| s.choi_min_eigenvalue()).fold(f64::INFINITY, f64::min)
}

fn main() -> quantum_semimarkov::Result<()> {
    let grid = TimeGrid::from_horizon(0.01, 5.0)?;

    println!("Barnett–Stenholm, amplitude damping, exponential memory:");
    for (memory, damping) in [(0.5, 1.0), (1.0, 1.0), (2.0, 1.0)] {
        let gen = GKSLGenerator {
            h_eff: HermitianOperator::zero(2),
            noise_ops: vec![lowering()],
            rates: vec![damping],
        };
        let k = WaitingDensity::exponential(memory);
        let kernel = probe_kernel(ProbeKind::BarnettStenholm, &k, &gen, grid)?;
        println!("  memory {memory}, damping {damping}: min Choi = {:+.4e}", min_choi(&kernel));
    }

    println!("Lidar–Shabani, amplitude damping + H = 2σ_z:");
    for memory_kind in ["exp", "pulse"] {
        for (memory, damping) in [(2.0, 0.5), (2.0, 2.0)] {
            let gen = GKSLGenerator {
                h_eff: HermitianOperator::new(sigma_z().scale(2.0)).unwrap(),
                noise_ops: vec![lowering()],
                rates: vec![damping],
            };
            let k = if memory_kind == "exp" {
                WaitingDensity::exponential(memory)
            } else {
                let delay = 1.0 / memory;
                let width = 0.1;
                let vals: Vec<f64> = grid
                    .times()
                    .map(|t| if t >= delay && t < delay + width { 0.98 / width } else { 0.0 })
                    .collect();
                WaitingDensity::tabulated(grid, vals)?
            };
            let kernel = probe_kernel(ProbeKind::LidarShabani, &k, &gen, grid)?;
            println!(
                "  {memory_kind} memory {memory}, damping {damping}: min Choi = {:+.4e}",
                min_choi(&kernel)
            );
        }
    }
    Ok(())
}

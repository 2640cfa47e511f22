//! Build the default qubit Pauli model, validate it as a semi-Markov map,
//! accumulate its dynamical map, and certify CP/TP over the grid.

use quantum_semimarkov::models::presets;
use quantum_semimarkov::semimarkov::LegitimatePair;
use quantum_semimarkov::timeseries::{BuildOrder, TimeGrid};

fn main() -> quantum_semimarkov::Result<()> {
    let grid = TimeGrid::from_horizon(0.01, 5.0)?;
    let map = presets::pauli_default(grid)?;
    println!("validated semi-Markov map on [0, {}] with dt = {}", grid.horizon(), grid.dt());
    println!("  min Choi eigenvalue of Q over the grid: {:.3e}", map.min_choi());
    println!("  integrated excess (≤ 0 means mass is left): {:.3e}", map.integrated_excess());

    let pair = LegitimatePair::canonical(map)?;
    println!("  provenance: {}", pair.provenance());
    println!("  normalization defect: {:.3e}", pair.normalization_defect());

    let (lambda, diag) = pair.build(BuildOrder::Left, 1e-10, 64)?;
    println!("series construction of the dynamical map:");
    println!("  terms used: {}", diag.terms_used);
    println!("  last term magnitude: {:.3e}", diag.last_term_magnitude);
    println!("  min Choi eigenvalue of Λ over the grid: {:.3e}", diag.min_choi_eigenvalue);
    println!("  max trace defect of Λ over the grid: {:.3e}", diag.max_trace_defect);
    println!("  Λ at the horizon acts on |0⟩⟨0| as:");
    let rho = quantum_semimarkov::DensityMatrix::pure_basis(2, 0);
    let out = lambda.get(grid.steps()).apply(rho.mat());
    for i in 0..2 {
        println!(
            "    [{:+.6} {:+.6}i, {:+.6} {:+.6}i]",
            out[(i, 0)].re,
            out[(i, 0)].im,
            out[(i, 1)].re,
            out[(i, 1)].im
        );
    }
    Ok(())
}

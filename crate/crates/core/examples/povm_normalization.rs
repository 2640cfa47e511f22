//! POVM bookkeeping: the n-jump densities integrate to the identity; watch
//! the defect fall as more jump orders are included.

use quantum_semimarkov::models::presets;
use quantum_semimarkov::superop::DensityMatrix;
use quantum_semimarkov::timeseries::TimeGrid;
use quantum_semimarkov::trajectories::{check_povm_normalization, jump_probability_density};

fn main() -> quantum_semimarkov::Result<()> {
    let grid = TimeGrid::from_horizon(0.01, 4.0)?;
    let (pair, _) = presets::markov_default(grid)?;

    println!("Σₙ ∫ Pⁿ = 𝕀 at t = 2.0, truncated at n_max:");
    for n_max in 1..=4 {
        let report = check_povm_normalization(pair.map(), 2.0, n_max)?;
        println!(
            "  n_max = {n_max}: defect {:.3e}, tail estimate {:.3e}",
            report.defect, report.tail_estimate
        );
    }

    let rho0 = DensityMatrix::pure_basis(2, 0);
    let p0 = jump_probability_density(&pair, &rho0, 2.0, &[])?;
    let p1 = jump_probability_density(&pair, &rho0, 2.0, &[0.7])?;
    let p2 = jump_probability_density(&pair, &rho0, 2.0, &[0.7, 1.5])?;
    println!("density of no jump by t = 2:        {p0:.6}");
    println!("density of one jump at 0.7:         {p1:.6}");
    println!("density of jumps at 0.7 and 1.5:    {p2:.6}");
    Ok(())
}

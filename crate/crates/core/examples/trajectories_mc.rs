//! Monte Carlo unraveling: sample jump trajectories, rebuild the dynamical
//! map from the ensemble, and check the jump-count statistics.

use quantum_semimarkov::models::presets;
use quantum_semimarkov::superop::DensityMatrix;
use quantum_semimarkov::timeseries::{BuildOrder, TimeGrid};
use quantum_semimarkov::trajectories::{ensemble_average, sample_trajectory_stream};

fn main() -> quantum_semimarkov::Result<()> {
    let grid = TimeGrid::from_horizon(0.01, 5.0)?;
    let (pair, _) = presets::markov_default(grid)?;
    let rho0 = DensityMatrix::pure_basis(2, 0);

    let one = sample_trajectory_stream(&pair, &rho0, 5.0, 42, 1)?;
    println!("one realization (seed 42, stream 1):");
    println!("  jumps at {:?}", one.jump_times);
    println!("  log weight {:.4}", one.log_weight);

    let samples = 20_000;
    let est = ensemble_average(&pair, &rho0, samples, 42)?;
    let (lambda, _) = pair.build(BuildOrder::Left, 1e-10, 64)?;
    let mut worst_sigma = 0.0f64;
    let se_floor = 3.0 / samples as f64;
    for k in 0..grid.len() {
        let exact = lambda.get(k).apply(rho0.mat());
        for i in 0..2 {
            for j in 0..2 {
                let d_re = (est.mean[k][(i, j)].re - exact[(i, j)].re).abs();
                let d_im = (est.mean[k][(i, j)].im - exact[(i, j)].im).abs();
                worst_sigma = worst_sigma
                    .max(d_re / est.stderr_re[k][(i, j)].max(se_floor))
                    .max(d_im / est.stderr_im[k][(i, j)].max(se_floor));
            }
        }
    }
    println!("{samples} trajectories vs the deterministic map:");
    println!("  worst entrywise deviation in standard errors: {worst_sigma:.2}");

    let lambda_poisson = presets::markov_rate() * grid.horizon();
    let mut total = 0usize;
    for i in 0..samples {
        total += sample_trajectory_stream(&pair, &rho0, 5.0, 42, i as u64 + 1)?.jump_times.len();
    }
    let mean = total as f64 / samples as f64;
    println!(
        "jump-count mean: {mean:.4} vs Poisson(γT) = {lambda_poisson:.4} (3σ = {:.4})",
        3.0 * (lambda_poisson / samples as f64).sqrt()
    );
    Ok(())
}

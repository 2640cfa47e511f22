//! Gauge freedom: transform a pair with {𝓖, 𝓕}, watch the waiting-time and
//! survival operators stay put, and recognize the gauge back from the pair.

use quantum_semimarkov::models::presets;
use quantum_semimarkov::semimarkov::{
    gauge_transform, recognize_generalized_semi_markov, waiting_time_operator, SEMIMARKOV_TOL,
    SURVIVAL_EPS,
};
use quantum_semimarkov::timeseries::{SuperoperatorFamily, TimeGrid};

fn main() -> quantum_semimarkov::Result<()> {
    let grid = TimeGrid::from_horizon(0.01, 4.0)?;
    let pair = presets::collision_default(grid)?;
    println!("collision pair, provenance: {}", pair.provenance());

    // recognizing the pair reconstructs its gauge 𝓖_t = N_t ∘ 𝐠_t^{-1/2}·𝐠_t^{-1/2}
    let report = recognize_generalized_semi_markov(&pair, 1e-8, SURVIVAL_EPS)?;
    println!("recognized as generalized semi-Markov: {}", report.is_generalized_semi_markov);
    println!("  worst CPTP defect of the reconstructed gauge: {:.3e}", report.max_cptp_defect);
    let original = presets::collision_gauge(grid)?;
    println!(
        "  reconstructed gauge vs the built-in one: {:.3e}",
        report.gauge.max_abs_diff(&original)
    );

    // an extra channel gauge on Q leaves the waiting-time operator untouched
    let f_before = pair.map().waiting_time_operator().clone();
    let ids = SuperoperatorFamily::identity(grid, 2);
    let channels = SuperoperatorFamily::constant(grid, presets::collision_channel());
    let gauged = gauge_transform(&pair, &ids, &channels)?;
    let f_after = waiting_time_operator(gauged.q_family(), SEMIMARKOV_TOL)?;
    println!(
        "waiting-time operator drift under a channel gauge 𝓕: {:.3e}",
        f_after.max_abs_diff(&f_before)
    );
    Ok(())
}

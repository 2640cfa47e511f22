//! Qutrit constructions: Weyl and Gell-Mann semi-Markov models, the scalar vs
//! non-scalar survival operator, and the left/right kernel gap that witnesses
//! noncommutativity.

use quantum_semimarkov::models::{gellmann_matrices, presets, weyl_matrices};
use quantum_semimarkov::semimarkov::{kernel_laplace, KernelOrder, LegitimatePair};
use quantum_semimarkov::timeseries::{BuildOrder, TimeGrid};

fn main() -> quantum_semimarkov::Result<()> {
    let u = weyl_matrices(3);
    println!("Weyl matrices for d = 3: {} unitaries, U₀ = 𝕀", u.len());
    let l = gellmann_matrices();
    println!("Gell-Mann set: λ₀ = 𝕀 plus {} traceless Hermitian matrices", l.len() - 1);

    let grid = TimeGrid::from_horizon(0.01, 5.0)?;

    let weyl = presets::weyl3_default(grid)?;
    let weyl_pair = LegitimatePair::canonical(weyl)?;
    let (left, _) = weyl_pair.build(BuildOrder::Left, 1e-10, 64)?;
    let (right, _) = weyl_pair.build(BuildOrder::Right, 1e-10, 64)?;
    println!("Weyl model (scalar survival):");
    println!("  left-order vs right-order map: {:.3e}", left.max_abs_diff(&right));

    let gm = presets::gellmann_default(grid)?;
    let g_last = gm.survival_operator().get(grid.steps());
    let (vals, _) = g_last.eigen();
    println!("Gell-Mann model (non-scalar survival):");
    println!("  survival spectrum at the horizon: {:?}", vals);
    let gm_pair = LegitimatePair::canonical(gm)?;
    for s in [1.0] {
        let kl = kernel_laplace(&gm_pair, s, KernelOrder::Left)?;
        let kr = kernel_laplace(&gm_pair, s, KernelOrder::Right)?;
        println!(
            "  left/right kernel gap at s = {s}: {:.3e} (> 1e-6 ⇒ genuinely noncommutative)",
            kl.kernel.max_abs_diff(&kr.kernel)
        );
    }
    Ok(())
}

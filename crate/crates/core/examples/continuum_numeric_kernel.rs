// Numeric continuum kernels from a fine ensemble, compared against the
// closed form of the built-in example.

use continuum_backstep::continuum::{example_kernel, solve_continuum_kernels};
use continuum_backstep::params::example_params_continuum;

pub fn run() -> continuum_backstep::Result<()> {
    let pc = example_params_continuum();
    let exact = example_kernel();
    for n_y in [8, 16, 32] {
        let numeric = solve_continuum_kernels(&pc, n_y, 65)?;
        let mut worst: f64 = 0.0;
        for &y in &[0.25, 0.5, 0.75] {
            for &xi in &[0.0, 0.5, 1.0] {
                worst = worst.max((numeric.k(1.0, xi, y) - exact.k(1.0, xi, y)).abs());
            }
        }
        let kbar_gap = (numeric.kbar(1.0, 0.3) - exact.kbar(1.0, 0.3)).abs();
        println!(
            "n_y={n_y:>2} {:?}: max |k - k_exact| at x=1 {worst:.3}, |kbar gap| {kbar_gap:.3}",
            numeric.provenance()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

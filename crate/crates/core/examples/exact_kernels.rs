// Solve the n+1 kernel equations for the built-in example and check the
// solution by substituting it back.

use continuum_backstep::kernels::{kernel_residual, solve_exact_kernels};
use continuum_backstep::params::example_params_n;

pub fn run() -> continuum_backstep::Result<()> {
    let n = 4;
    let pn = example_params_n(n)?;
    let kn = solve_exact_kernels(&pn, 129)?;
    for c in 0..=n {
        let gains = kn.row_x1(c);
        let name = if c < n {
            format!("k^{}", c + 1)
        } else {
            "k^v".to_string()
        };
        println!(
            "{name:>4}(1, xi): xi=0 {:>9.3}  xi=0.5 {:>9.3}  xi=1 {:>9.3}",
            gains[0], gains[64], gains[128]
        );
    }
    let r = kernel_residual(&kn, &pn)?;
    println!(
        "residual: channels {:.2e}, v {:.2e}, diagonal {:.1e}, boundary {:.1e}",
        r.channel_max, r.v_max, r.diagonal_defect, r.boundary_defect
    );
    // A single channel with these coefficients needs no feedback at all.
    println!(
        "n=1 max |k| = {}",
        solve_exact_kernels(&example_params_n(1)?, 129)?.max_abs()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

// The continuum kernel of the built-in example is known in closed form.
// Substituting it into the continuum kernel equations leaves only
// finite-difference error, which shrinks as the grid is refined.

use continuum_backstep::continuum::{continuum_residual, example_kbar, example_kernel};
use continuum_backstep::params::example_params_continuum;

pub fn run() -> continuum_backstep::Result<()> {
    let kc = example_kernel();
    println!("kbar = {:.15}", example_kbar());
    println!("k(1, 0.5, 0.25) = {:.6}", kc.k(1.0, 0.5, 0.25));
    println!(
        "k(x, xi, 1) = {} (the last channel never enters the feedback)",
        kc.k(0.7, 0.2, 1.0)
    );

    let pc = example_params_continuum();
    let mut previous: Option<f64> = None;
    for m in [17, 33, 65] {
        let r = continuum_residual(&kc, &pc, m, 65)?;
        let order = previous
            .map(|p| format!("{:.2}", (p / r.k_max).log2()))
            .unwrap_or_default();
        println!("m={m:>3}  max residual {:.3e}  order {order}", r.k_max);
        previous = Some(r.k_max);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

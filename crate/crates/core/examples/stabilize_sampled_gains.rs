// Close the loop with gains sampled from the continuum kernel. One channel
// is destabilized; two or more are stabilized, faster as n grows.

use continuum_backstep::analysis::{decay_fit, traverse_time};
use continuum_backstep::continuum::{example_kernel, sample_kernel};
use continuum_backstep::ensemble::{Grid1D, StateN, TriGrid};
use continuum_backstep::params::example_params_n;
use continuum_backstep::simulate::{simulate, Controller, SimConfig};

pub fn run() -> continuum_backstep::Result<()> {
    let g = Grid1D::new(128)?;
    let kc = example_kernel();
    for n in [1, 2, 4, 6] {
        let pn = example_params_n(n)?;
        let gains = sample_kernel(&kc, n, &TriGrid::from_grid(g.clone()))?;
        let ic = StateN::from_fn(n, &g, |i, _| pn.q()[i - 1], |_| 1.0);
        let tr = simulate(
            &pn,
            &Controller::gain(gains),
            &ic,
            &g,
            &SimConfig::new(10.0).with_stride(20),
        )?;
        let e = tr.norms();
        let rate = decay_fit(&tr, traverse_time(&pn))
            .map(|f| format!("{:.2}", f.c))
            .unwrap_or_else(|_| "-".into());
        println!(
            "n={n}: |s(10)|/|s(0)| = {:.2e}, fitted decay rate {rate}",
            e[e.len() - 1] / e[0]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

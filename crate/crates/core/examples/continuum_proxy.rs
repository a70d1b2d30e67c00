// Compare an n-channel solution with the cell means of finer ensembles that
// sample the same continuum coefficients.

use continuum_backstep::analysis::compare_solutions;
use continuum_backstep::ensemble::{lift, project, Grid1D, StateN};
use continuum_backstep::params::{example_params_continuum, example_params_n};
use continuum_backstep::simulate::{simulate, simulate_continuum, Controller, SimConfig};

pub fn run() -> continuum_backstep::Result<()> {
    let b = [1.0, -2.0, 0.5];
    let f = lift(&b)?;
    println!("lift/project round trip: {:?}", project(|y| f.eval(y), 3, 4)?);

    let n = 4;
    let g = Grid1D::new(128)?;
    let pc = example_params_continuum();
    let pn = example_params_n(n)?;
    let u0 = |_x: f64, y: f64| (pc.q)(y);
    let v0 = |_x: f64| 1.0;
    let ic = StateN::from_fn(n, &g, |i, x| u0(x, i as f64 / n as f64), v0);
    let cfg = SimConfig::new(2.0).with_stride(20);
    let tr_n = simulate(&pn, &Controller::zero(), &ic, &g, &cfg)?;
    for n_y in [4, 8, 16, 32] {
        let tr_c = simulate_continuum(&pc, n_y, &Controller::zero(), u0, v0, &g, &cfg)?;
        let e = compare_solutions(&tr_n, &tr_c, n)?;
        println!("n_y={n_y:>2}: e(0) = {:.3e}, max e = {:.3e}", e.values[0], e.max());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

// Evaluate the Lyapunov functional along a closed loop with exact gains,
// and check that the transformed state vanishes at the actuated boundary.

use continuum_backstep::analysis::{backstepping_beta, lyapunov_bounds, lyapunov_v, traverse_time, LyapunovConfig};
use continuum_backstep::ensemble::{Grid1D, StateN};
use continuum_backstep::kernels::solve_exact_kernels;
use continuum_backstep::params::example_params_n;
use continuum_backstep::simulate::{simulate, Controller, SimConfig};

pub fn run() -> continuum_backstep::Result<()> {
    let n = 4;
    let g = Grid1D::new(128)?;
    let pn = example_params_n(n)?;
    // Solve on a 4x finer triangle, keep the nodes of the simulation grid.
    let kn = solve_exact_kernels(&pn, 4 * 127 + 1)?.restrict(&g)?;
    let ic = StateN::from_fn(n, &g, |i, _| pn.q()[i - 1], |_| 1.0);
    let tr = simulate(
        &pn,
        &Controller::gain(kn.clone()),
        &ic,
        &g,
        &SimConfig::new(8.0).with_stride(40),
    )?;
    let cfg = LyapunovConfig::default_for(&pn, &g);
    let (lo, hi) = lyapunov_bounds(&pn, &cfg, &g);
    println!(
        "p = {:.4}, delta1 = {:.4}, weights in [{lo:.3}, {hi:.3}]",
        cfg.p, cfg.delta1
    );
    println!("traverse time {}", traverse_time(&pn));
    for (t, s) in tr.times.iter().zip(&tr.states).step_by(6) {
        let beta = backstepping_beta(s, &kn, &g)?;
        let v = lyapunov_v(s.u_flat(), &beta, &pn, &cfg, &g)?;
        println!("t={t:>5.2}  V={v:.3e}  beta(1)={:+.1e}", beta[beta.len() - 1]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

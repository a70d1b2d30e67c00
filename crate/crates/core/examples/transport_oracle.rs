// Pure transport with a spatially varying speed: the upwind simulation
// against the exact characteristics solution.

use std::sync::Arc;

use continuum_backstep::ensemble::{Grid1D, StateN};
use continuum_backstep::field::Field1;
use continuum_backstep::params::ParamsN;
use continuum_backstep::simulate::{simulate, transport_oracle, Controller, Direction, SimConfig};

pub fn run() -> continuum_backstep::Result<()> {
    let q = 0.5;
    let pn = ParamsN::new(
        vec![Field1::Func(Arc::new(|x| 1.0 + 0.5 * x))],
        Field1::Constant(1.0),
        vec![Field1::Constant(0.0)],
        vec![Field1::Constant(0.0)],
        vec![Field1::Constant(0.0)],
        vec![q],
    )?;
    let control = |t: f64| -(2.0 * t).cos();
    let v0 = |x: f64| (std::f64::consts::PI * x).cos();
    let u0 = |x: f64| q * v0(x);
    let t = 0.5;
    for m in [64, 128, 256] {
        let g = Grid1D::new(m)?;
        let ic = StateN::from_fn(1, &g, |_, x| u0(x), v0);
        let tr = simulate(&pn, &Controller::open_loop(control), &ic, &g, &SimConfig::new(t))?;
        let s = &tr.states[tr.len() - 1];
        let v_at_zero = |s: f64| transport_oracle(pn.mu(), control, v0, Direction::Left, s, 0.0);
        let mut worst: f64 = 0.0;
        for (j, &x) in g.points().iter().enumerate() {
            let u = transport_oracle(pn.lambda(0), |s| q * v_at_zero(s), u0, Direction::Right, t, x);
            let v = transport_oracle(pn.mu(), control, v0, Direction::Left, t, x);
            worst = worst.max((s.u(0)[j] - u).abs()).max((s.v()[j] - v).abs());
        }
        println!("m={m:>3}: max pointwise error at t={t}: {worst:.3e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

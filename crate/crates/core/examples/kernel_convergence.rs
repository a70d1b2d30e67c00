// Gap between exact and sampled gains as the number of channels grows,
// with the time each takes to compute.

use std::time::Instant;

use continuum_backstep::continuum::{example_kernel, kernel_delta, sample_kernel};
use continuum_backstep::ensemble::TriGrid;
use continuum_backstep::kernels::solve_exact_kernels;
use continuum_backstep::params::example_params_n;

pub fn run() -> continuum_backstep::Result<()> {
    let m = 129;
    let tri = TriGrid::new(m)?;
    let kc = example_kernel();
    println!(
        "{:>3} {:>12} {:>12} {:>10} {:>10}",
        "n", "gap", "gap (v)", "exact ms", "sampled ms"
    );
    for n in [2, 4, 8, 16] {
        let pn = example_params_n(n)?;
        let t0 = Instant::now();
        let exact = solve_exact_kernels(&pn, m)?;
        let t_exact = t0.elapsed();
        let t1 = Instant::now();
        let approx = sample_kernel(&kc, n, &tri)?;
        let t_sampled = t1.elapsed();
        let d = kernel_delta(&exact, &approx)?;
        println!(
            "{n:>3} {:>12.4} {:>12.4} {:>10.2} {:>10.2}",
            d.aggregate,
            d.per_channel[n],
            t_exact.as_secs_f64() * 1e3,
            t_sampled.as_secs_f64() * 1e3
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

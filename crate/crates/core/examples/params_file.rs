// Write a parameter set to JSON, load it back, and build smooth continuum
// coefficients that interpolate its channels.

use continuum_backstep::ensemble::Grid1D;
use continuum_backstep::kernels::solve_exact_kernels;
use continuum_backstep::params::{example_params_n, interpolate_params, load_params, sample_params};

pub fn run() -> continuum_backstep::Result<()> {
    let dir = std::env::temp_dir().join(format!("continuum-backstep-params-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("params.json");

    let original = example_params_n(3)?;
    let grid = Grid1D::new(33)?;
    std::fs::write(&path, serde_json::to_string_pretty(&original.to_file(&grid))?)?;
    let loaded = load_params(path.to_str().unwrap_or_default(), None)?;
    println!(
        "loaded n={} hash {} (original {})",
        loaded.n(),
        loaded.content_hash(),
        original.content_hash()
    );

    let pc = interpolate_params(&loaded, 0.0)?;
    let resampled = sample_params(&pc, 3)?;
    let x = 0.4;
    for i in 0..3 {
        println!(
            "theta_{}({x}) file {:.6} interpolated {:.6}",
            i + 1,
            loaded.theta(i).eval(x),
            resampled.theta(i).eval(x)
        );
    }
    println!("max |k| = {:.3}", solve_exact_kernels(&loaded, 65)?.max_abs());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> continuum_backstep::Result<()> {
    run()
}

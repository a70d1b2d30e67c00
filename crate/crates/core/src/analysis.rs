//! Lyapunov functional, backstepping target state, decay fits and
//! trajectory comparisons.

use serde::{Deserialize, Serialize};

use crate::continuum::ContinuumKernel;
use crate::ensemble::{trapezoid, Grid1D, StateN};
use crate::error::{mismatch, Error, Result};
use crate::params::{ContinuumParams, ParamsN};
use crate::simulate::{travel_time, Trajectory};

/// Norm samples at or below this fraction of the initial norm count as zero.
pub const ZERO_NORM_FRACTION: f64 = 1e-12;

/// `β(x) = v(x) − ∫_0^x (1/n) Σ k^i(x,ξ) u^i(ξ) + k^{n+1}(x,ξ) v(ξ) dξ`,
/// one trapezoid per row of the kernel grid.
pub fn backstepping_beta(s: &StateN, kn: &crate::kernels::KernelsN, g: &Grid1D) -> Result<Vec<f64>> {
    if kn.m() != g.m() || s.m() != g.m() || kn.n() != s.n() {
        return Err(mismatch(
            "backstepping_beta",
            format!("kernels (n={}, m={})", kn.n(), kn.m()),
            format!("state (n={}, m={}) on grid m={}", s.n(), s.m(), g.m()),
        ));
    }
    let (n, m) = (s.n(), s.m());
    let inv_n = 1.0 / n as f64;
    let v = s.v();
    Ok((0..m)
        .map(|a| {
            let integrand: Vec<f64> = (0..=a)
                .map(|b| {
                    let uu: f64 = (0..n).map(|i| kn.at(i, a, b) * s.u(i)[b]).sum();
                    inv_n * uu + kn.at(n, a, b) * v[b]
                })
                .collect();
            v[a] - trapezoid(&integrand, g.h())
        })
        .collect())
}

/// Weights of `V = ∫ p e^{−δ₁x} (1/n) Σ α_i²/λ_i dx + ∫ (1+x)/μ β² dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub p: f64,
    pub delta1: f64,
}

/// Grid sup-norms used to pick default Lyapunov weights.
fn sup_bounds(pn: &ParamsN, g: &Grid1D) -> (f64, f64, f64) {
    let t = pn.tabulate(g);
    let inv_lambda = t.lambda.iter().fold(0.0_f64, |a, l| a.max(1.0 / l));
    let sigma = t.sigma.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
    let w = t.w.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
    (inv_lambda, sigma, w)
}

impl LyapunovConfig {
    pub fn new(p: f64, delta1: f64) -> Result<Self> {
        if !(p > 0.0 && delta1 > 0.0) || !p.is_finite() || !delta1.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Lyapunov weights must be positive and finite, got p={p}, delta1={delta1}"
            )));
        }
        Ok(Self { p, delta1 })
    }

    /// `δ₁ = 1 + M_λ M_σ + M_λ M_W` and
    /// `p = ½ min(1/((1/n) Σ q_i²), 1/(M_λ M_W))`, with grid sup-norms
    /// `M_λ = max 1/λ`, `M_σ = max |σ|`, `M_W = max |W|`.
    pub fn default_for(pn: &ParamsN, g: &Grid1D) -> Self {
        let (ml, ms, mw) = sup_bounds(pn, g);
        let delta1 = 1.0 + ml * ms + ml * mw;
        let q_term = pn.q().iter().map(|q| q * q).sum::<f64>() / pn.n() as f64;
        let mut p = f64::INFINITY;
        if q_term > 0.0 {
            p = p.min(1.0 / q_term);
        }
        if ml * mw > 0.0 {
            p = p.min(1.0 / (ml * mw));
        }
        if !p.is_finite() {
            p = 2.0;
        }
        Self { p: 0.5 * p, delta1 }
    }
}

/// `V` of `(α, β)`; `alpha` is row-major `n × m`.
pub fn lyapunov_v(alpha: &[f64], beta: &[f64], pn: &ParamsN, cfg: &LyapunovConfig, g: &Grid1D) -> Result<f64> {
    let (n, m) = (pn.n(), g.m());
    if alpha.len() != n * m || beta.len() != m {
        return Err(mismatch(
            "lyapunov_v",
            format!("alpha len {}, beta len {}", alpha.len(), beta.len()),
            format!("n*m = {}, m = {m}", n * m),
        ));
    }
    let t = pn.tabulate(g);
    let inv_n = 1.0 / n as f64;
    let integrand: Vec<f64> = (0..m)
        .map(|j| {
            let x = g.x(j);
            let a: f64 = (0..n).map(|i| alpha[i * m + j].powi(2) / t.lambda_at(i, j)).sum();
            cfg.p * (-cfg.delta1 * x).exp() * inv_n * a + (1.0 + x) / t.mu[j] * beta[j].powi(2)
        })
        .collect();
    Ok(g.trapezoid(&integrand))
}

/// `V` along a state, with `α = u` and `β` from [`backstepping_beta`].
pub fn lyapunov_of_state(
    s: &StateN,
    kn: &crate::kernels::KernelsN,
    pn: &ParamsN,
    cfg: &LyapunovConfig,
    g: &Grid1D,
) -> Result<f64> {
    let beta = backstepping_beta(s, kn, g)?;
    lyapunov_v(s.u_flat(), &beta, pn, cfg, g)
}

/// `(m_V, M_V)` with `m_V ‖(α,β)‖²_E ≤ V ≤ M_V ‖(α,β)‖²_E` on `g`: the extreme
/// values of the pointwise weights.
pub fn lyapunov_bounds(pn: &ParamsN, cfg: &LyapunovConfig, g: &Grid1D) -> (f64, f64) {
    let t = pn.tabulate(g);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for j in 0..g.m() {
        let x = g.x(j);
        for i in 0..pn.n() {
            let w = cfg.p * (-cfg.delta1 * x).exp() / t.lambda_at(i, j);
            lo = lo.min(w);
            hi = hi.max(w);
        }
        let w = (1.0 + x) / t.mu[j];
        lo = lo.min(w);
        hi = hi.max(w);
    }
    (lo, hi)
}

/// Longest time for a boundary signal to cross both ways:
/// `max_i ∫ dξ/λ_i + ∫ dξ/μ`.
pub fn traverse_time(pn: &ParamsN) -> f64 {
    let right = (0..pn.n())
        .map(|i| travel_time(pn.lambda(i), 0.0, 1.0))
        .fold(0.0_f64, f64::max);
    right + travel_time(pn.mu(), 0.0, 1.0)
}

/// Least-squares fit `‖s(t)‖_E ≈ M ‖s(0)‖_E e^{−ct}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    #[serde(rename = "M")]
    pub m: f64,
    pub c: f64,
    pub window: (f64, f64),
    /// RMS residual of the log-linear fit.
    pub rms: f64,
}

pub const MIN_FIT_SAMPLES: usize = 4;

/// Fits `log ‖s‖_E` against `t` on samples with `t ≥ t_start`.
pub fn decay_fit(tr: &Trajectory, t_start: f64) -> Result<DecayFit> {
    decay_fit_norms(&tr.times, &tr.norms(), t_start)
}

pub fn decay_fit_norms(times: &[f64], norms: &[f64], t_start: f64) -> Result<DecayFit> {
    if times.len() != norms.len() || times.is_empty() {
        return Err(mismatch(
            "decay_fit",
            format!("{} times", times.len()),
            format!("{} norms", norms.len()),
        ));
    }
    let initial = norms[0];
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(t, _)| **t >= t_start)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            got: pts.len(),
            need: MIN_FIT_SAMPLES,
        });
    }
    if let Some(&(t, _)) = pts
        .iter()
        .find(|(_, v)| !(*v > ZERO_NORM_FRACTION * initial) || !(*v > 0.0))
    {
        return Err(Error::NonPositiveNorm { t });
    }
    let k = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_l = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1.ln() - mean_l)).sum();
    let slope = sxy / sxx;
    let intercept = mean_l - slope * mean_t;
    let rms = (pts
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(DecayFit {
        m: intercept.exp() / initial,
        c: -slope,
        window: (pts[0].0, pts[pts.len() - 1].0),
        rms,
    })
}

fn check_same_times(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::TimeGridMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    for (j, (ta, tb)) in a.iter().zip(b).enumerate() {
        if (ta - tb).abs() > 1e-12 * ta.abs().max(1.0) {
            return Err(Error::TimeGridMismatch(format!("sample {j}: t = {ta} vs {tb}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDistance {
    pub sup: f64,
    pub l2: f64,
}

/// `sup_t |U_a − U_b|` and `(∫ |U_a − U_b|² dt)^{1/2}` (trapezoid in `t`).
pub fn compare_controls(a: &Trajectory, b: &Trajectory) -> Result<ControlDistance> {
    check_same_times(&a.times, &b.times)?;
    let d: Vec<f64> = a.controls.iter().zip(&b.controls).map(|(x, y)| x - y).collect();
    let sup = d.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut sq = 0.0;
    for j in 1..d.len() {
        sq += 0.5 * (a.times[j] - a.times[j - 1]) * (d[j].powi(2) + d[j - 1].powi(2));
    }
    Ok(ControlDistance { sup, l2: sq.sqrt() })
}

/// `e(t)` between an `n`-channel trajectory and the cell means of a
/// continuum-proxy trajectory with `n_y = r·n` channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ErrorCurve {
    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, &v| a.max(v))
    }
}

/// Cell means of the `n_y` proxy channels over the `n` coarse cells.
pub fn cell_mean_state(s: &StateN, n: usize) -> Result<StateN> {
    let n_y = s.n();
    if n == 0 || !n_y.is_multiple_of(n) {
        return Err(Error::InvalidArgument(format!(
            "continuum proxy resolution n_y={n_y} is not a multiple of n={n}"
        )));
    }
    let r = n_y / n;
    let m = s.m();
    let mut u = vec![0.0; n * m];
    for i in 0..n {
        for l in 0..r {
            for (acc, val) in u[i * m..(i + 1) * m].iter_mut().zip(s.u(i * r + l)) {
                *acc += val;
            }
        }
        u[i * m..(i + 1) * m].iter_mut().for_each(|z| *z /= r as f64);
    }
    StateN::from_parts(n, u, s.v().to_vec())
}

pub fn compare_solutions(tr_n: &Trajectory, tr_c: &Trajectory, n: usize) -> Result<ErrorCurve> {
    if tr_n.meta.n != n {
        return Err(mismatch(
            "compare_solutions",
            format!("trajectory n={}", tr_n.meta.n),
            format!("n={n}"),
        ));
    }
    if tr_n.meta.m != tr_c.meta.m {
        return Err(mismatch("compare_solutions grid", tr_n.meta.m, tr_c.meta.m));
    }
    check_same_times(&tr_n.times, &tr_c.times)?;
    let g = tr_n.grid();
    let values = tr_n
        .states
        .iter()
        .zip(&tr_c.states)
        .map(|(s, sc)| s.sub(&cell_mean_state(sc, n)?)?.norm_e(&g))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorCurve {
        times: tr_n.times.clone(),
        values,
    })
}

/// Grid sup-norm estimates of the constants that bound the continuum data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    /// `max_x sup_{y,η} |σ|`.
    pub sigma_sup: f64,
    /// `max_x sup_y |W|`.
    pub w_sup: f64,
    /// `max 1/λ`.
    pub inv_lambda_sup: f64,
    /// `max λ`.
    pub lambda_sup: f64,
    /// `max(max |k|, max |k̄|)` over the triangle.
    pub kernel_sup: f64,
    /// Constants that depend on target-system and inverse kernels, which are
    /// not computed.
    pub unavailable: Vec<String>,
}

pub fn continuum_constants(pc: &ContinuumParams, kc: &ContinuumKernel, gx: &Grid1D, gy: &Grid1D) -> ConstantsReport {
    let mut r = ConstantsReport {
        sigma_sup: 0.0,
        w_sup: 0.0,
        inv_lambda_sup: 0.0,
        lambda_sup: 0.0,
        kernel_sup: 0.0,
        unavailable: vec!["M_kappa".into(), "M_c".into(), "M_l".into()],
    };
    for (a, &x) in gx.points().iter().enumerate() {
        for &y in gy.points() {
            let l = (pc.lambda)(x, y);
            r.lambda_sup = r.lambda_sup.max(l);
            r.inv_lambda_sup = r.inv_lambda_sup.max(1.0 / l);
            r.w_sup = r.w_sup.max((pc.w)(x, y).abs());
            for &eta in gy.points() {
                r.sigma_sup = r.sigma_sup.max((pc.sigma)(x, y, eta).abs());
            }
        }
        for &xi in &gx.points()[..=a] {
            r.kernel_sup = r.kernel_sup.max(kc.kbar(x, xi).abs());
            for &y in gy.points() {
                r.kernel_sup = r.kernel_sup.max(kc.k(x, xi, y).abs());
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuum::{example_kbar, example_kernel, sample_kernel};
    use crate::ensemble::TriGrid;
    use crate::field::Field1;
    use crate::kernels::{solve_exact_kernels, KernelsN};
    use crate::params::{example_params_continuum, example_params_n};
    use crate::simulate::{simulate, Controller, SimConfig, TrajectoryMeta};

    fn synthetic(times: Vec<f64>, controls: Vec<f64>) -> Trajectory {
        let m = 5;
        Trajectory {
            states: times.iter().map(|_| StateN::zeros(1, m)).collect(),
            times,
            controls,
            meta: TrajectoryMeta {
                n: 1,
                m,
                dt: 0.1,
                controller: "test".into(),
                params_hash: String::new(),
                continuum_proxy: false,
                blow_up: None,
            },
        }
    }

    #[test]
    fn beta_trivial_cases() {
        let g = Grid1D::new(17).unwrap();
        let tri = TriGrid::from_grid(g.clone());
        let s = StateN::from_fn(2, &g, |i, x| i as f64 * x, |x| x.cos());
        assert_eq!(
            backstepping_beta(&s, &KernelsN::zeros(2, tri.clone()), &g).unwrap(),
            s.v()
        );
        let kt = sample_kernel(&example_kernel(), 2, &tri).unwrap();
        assert!(backstepping_beta(&StateN::zeros(2, 17), &kt, &g)
            .unwrap()
            .iter()
            .all(|&b| b == 0.0));
    }

    #[test]
    fn lyapunov_values() {
        let p = example_params_n(2).unwrap();
        let g = Grid1D::new(101).unwrap();
        let cfg = LyapunovConfig::new(1.0, 1.0).unwrap();
        let zero = vec![0.0; 2 * 101];
        assert_eq!(lyapunov_v(&zero, &vec![0.0; 101], &p, &cfg, &g).unwrap(), 0.0);
        let v = lyapunov_v(&zero, &vec![1.0; 101], &p, &cfg, &g).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
        assert!(LyapunovConfig::new(0.0, 1.0).is_err());
    }

    #[test]
    fn lyapunov_sandwich_and_quadratic() {
        let p = example_params_n(3).unwrap();
        let g = Grid1D::new(65).unwrap();
        let cfg = LyapunovConfig::default_for(&p, &g);
        let (lo, hi) = lyapunov_bounds(&p, &cfg, &g);
        let s = StateN::from_fn(3, &g, |i, x| (i as f64 * 3.0 * x).sin() + 0.2, |x| x * x - 0.4);
        let v = lyapunov_v(s.u_flat(), s.v(), &p, &cfg, &g).unwrap();
        let e2 = s.norm_e(&g).unwrap().powi(2);
        assert!(lo * e2 <= v && v <= hi * e2);
        let s2 = s.scaled(-3.0);
        let v2 = lyapunov_v(s2.u_flat(), s2.v(), &p, &cfg, &g).unwrap();
        assert!((v2 - 9.0 * v).abs() <= 1e-12 * v2);
    }

    #[test]
    fn default_config_for_example() {
        let p = example_params_n(4).unwrap();
        let g = Grid1D::new(257).unwrap();
        let cfg = LyapunovConfig::default_for(&p, &g);
        assert!(cfg.delta1 > 1.0 && cfg.p > 0.0);
        // q = (0, −1, 0, 1): (1/n)Σq² = 1/2, so p ≤ 1.
        assert!(cfg.p <= 1.0);
    }

    #[test]
    fn fit_exact_exponential() {
        let times: Vec<f64> = (0..50).map(|j| j as f64 * 0.1).collect();
        let norms: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let fit = decay_fit_norms(&times, &norms, 0.0).unwrap();
        assert!((fit.c - 2.0).abs() < 1e-6);
        assert!((fit.m - 1.0).abs() < 1e-9);
        assert!(fit.rms < 1e-9);
        assert!(matches!(
            decay_fit_norms(&times, &norms, 4.75),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn fit_rejects_extinct_transport() {
        let p = ParamsN::new(
            vec![Field1::Constant(1.0)],
            Field1::Constant(1.0),
            vec![Field1::Constant(0.0)],
            vec![Field1::Constant(0.0)],
            vec![Field1::Constant(0.0)],
            vec![0.0],
        )
        .unwrap();
        let g = Grid1D::new(64).unwrap();
        let ic = StateN::from_fn(1, &g, |_, x| x.sin(), |x| 1.0 - x);
        let tr = simulate(&p, &Controller::zero(), &ic, &g, &SimConfig::new(8.0).with_stride(20)).unwrap();
        let t0 = traverse_time(&p);
        assert!((t0 - 2.0).abs() < 1e-9);
        assert!(matches!(decay_fit(&tr, t0), Err(Error::NonPositiveNorm { .. })));
    }

    #[test]
    fn closed_loop_decay_rate_positive() {
        let n = 6;
        let p = example_params_n(n).unwrap();
        let g = Grid1D::new(128).unwrap();
        let kt = sample_kernel(&example_kernel(), n, &TriGrid::from_grid(g.clone())).unwrap();
        let ic = StateN::from_fn(n, &g, |i, _| p.q()[i - 1], |_| 1.0);
        let tr = simulate(
            &p,
            &Controller::gain(kt),
            &ic,
            &g,
            &SimConfig::new(10.0).with_stride(10),
        )
        .unwrap();
        assert!(decay_fit(&tr, traverse_time(&p)).unwrap().c > 0.0);
    }

    #[test]
    fn exact_gains_annihilate_beta_at_one() {
        let n = 3;
        let p = example_params_n(n).unwrap();
        let g = Grid1D::new(65).unwrap();
        let kn = solve_exact_kernels(&p, 65).unwrap();
        let ic = StateN::from_fn(n, &g, |i, _| p.q()[i - 1], |_| 1.0);
        let tr = simulate(
            &p,
            &Controller::gain(kn.clone()),
            &ic,
            &g,
            &SimConfig::new(1.0).with_stride(8),
        )
        .unwrap();
        for s in &tr.states {
            let beta = backstepping_beta(s, &kn, &g).unwrap();
            assert!(beta[64].abs() <= 1e-10 * s.norm_e(&g).unwrap().max(1.0));
        }
    }

    #[test]
    fn control_comparison() {
        let a = synthetic(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]);
        assert_eq!(compare_controls(&a, &a).unwrap(), ControlDistance { sup: 0.0, l2: 0.0 });
        let b = synthetic(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 3.0]);
        let d = compare_controls(&a, &b).unwrap();
        assert_eq!(d.sup, 1.0);
        assert!((d.l2 - 1.0).abs() < 1e-15);
        let c = synthetic(vec![0.0, 1.5, 2.0], vec![1.0, 2.0, 3.0]);
        assert!(matches!(compare_controls(&a, &c), Err(Error::TimeGridMismatch(_))));
    }

    #[test]
    fn solution_comparison_identities() {
        let pc = example_params_continuum();
        let g = Grid1D::new(33).unwrap();
        let cfg = SimConfig::new(0.5).with_stride(4);
        let u0 = |x: f64, y: f64| (x + y).sin();
        let tr4 = crate::simulate::simulate_continuum(&pc, 4, &Controller::zero(), u0, |x| x, &g, &cfg).unwrap();
        let e = compare_solutions(&tr4, &tr4, 4).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        let tr6 = crate::simulate::simulate_continuum(&pc, 6, &Controller::zero(), u0, |x| x, &g, &cfg).unwrap();
        assert!(compare_solutions(&tr4, &tr6, 4).is_err());
    }

    #[test]
    fn cell_means() {
        let s = StateN::from_parts(4, vec![1.0, 3.0, 5.0, 7.0], vec![0.5]).unwrap();
        let c = cell_mean_state(&s, 2).unwrap();
        assert_eq!(c.u_flat(), &[2.0, 6.0]);
        assert_eq!(c.v(), &[0.5]);
    }

    #[test]
    fn example_constants() {
        let pc = example_params_continuum();
        let gx = Grid1D::new(65).unwrap();
        let gy = Grid1D::new(33).unwrap();
        let r = continuum_constants(&pc, &example_kernel(), &gx, &gy);
        assert_eq!(r.inv_lambda_sup, 1.0);
        assert_eq!(r.lambda_sup, 1.0);
        assert!((r.w_sup - std::f64::consts::E).abs() < 1e-12);
        assert!(r.kernel_sup >= example_kbar());
        assert_eq!(r.unavailable.len(), 3);
    }
}

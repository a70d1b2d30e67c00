use proptest::prelude::*;

use continuum_backstep::analysis::{compare_solutions, decay_fit_norms, lyapunov_v, LyapunovConfig};
use continuum_backstep::continuum::{example_kernel, kernel_delta, sample_kernel};
use continuum_backstep::ensemble::{cell_index, lift, project, Grid1D, StateN, TriGrid};
use continuum_backstep::field::Field1;
use continuum_backstep::kernels::KernelsN;
use continuum_backstep::params::{example_params_n, ParamsFile};
use continuum_backstep::simulate::{simulate, transport_oracle, Controller, Direction, SimConfig};

fn values(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3_f64, 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_inverts_lift(b in values(40), q in 2usize..9) {
        let f = lift(&b).unwrap();
        prop_assert_eq!(project(|y| f.eval(y), b.len(), q).unwrap(), b);
    }

    #[test]
    fn lift_preserves_the_e_norm(b in values(20), v in -10.0..10.0_f64) {
        let n = b.len();
        let g = Grid1D::new(17).unwrap();
        let s = StateN::from_fn(n, &g, |i, _| b[i - 1], |_| v);
        let lifted = lift(&b).unwrap().l2_norm_squared() + v * v;
        let e = s.norm_e(&g).unwrap().powi(2);
        prop_assert!((e - lifted).abs() <= 1e-12 * lifted.max(1.0));
    }

    #[test]
    fn cell_index_matches_right_closed_cells(n in 1usize..200, y in 0.0..=1.0_f64) {
        let i = cell_index(y, n);
        prop_assert!(i < n);
        if y > 0.0 {
            prop_assert!(y > i as f64 / n as f64 - 1e-12);
            prop_assert!(y <= (i + 1) as f64 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn lyapunov_functional_is_quadratic(c in -50.0..50.0_f64, seed in 0u64..1000) {
        let n = 3;
        let g = Grid1D::new(33).unwrap();
        let p = example_params_n(n).unwrap();
        let cfg = LyapunovConfig::default_for(&p, &g);
        let phase = seed as f64 * 0.37;
        let alpha: Vec<f64> = (0..n * 33).map(|k| (k as f64 * 0.11 + phase).sin()).collect();
        let beta: Vec<f64> = (0..33).map(|k| (k as f64 * 0.07 - phase).cos()).collect();
        let v = lyapunov_v(&alpha, &beta, &p, &cfg, &g).unwrap();
        let sa: Vec<f64> = alpha.iter().map(|a| c * a).collect();
        let sb: Vec<f64> = beta.iter().map(|b| c * b).collect();
        let vc = lyapunov_v(&sa, &sb, &p, &cfg, &g).unwrap();
        prop_assert!(v > 0.0);
        prop_assert!((vc - c * c * v).abs() <= 1e-12 * (c * c * v).max(f64::MIN_POSITIVE));
    }

    #[test]
    fn kernel_delta_is_symmetric(shift in -5.0..5.0_f64, n in 1usize..6) {
        let tri = TriGrid::new(17).unwrap();
        let a = sample_kernel(&example_kernel(), n, &tri).unwrap();
        let b = KernelsN::from_fn(n, tri, |c, x, xi| a.eval(c, x, xi) + shift * x * (1.0 - xi));
        let ab = kernel_delta(&a, &b).unwrap();
        let ba = kernel_delta(&b, &a).unwrap();
        prop_assert_eq!(ab.aggregate, ba.aggregate);
        prop_assert_eq!(kernel_delta(&a, &a).unwrap().aggregate, 0.0);
    }

    #[test]
    fn constant_speed_oracle_is_a_shift(c in 0.2..3.0_f64, t in 0.0..2.0_f64, x in 0.0..=1.0_f64) {
        let speed = Field1::Constant(c);
        let ic = |z: f64| (3.0 * z).sin();
        let inflow = |s: f64| 1.0 + s * s;
        let right = transport_oracle(&speed, inflow, ic, Direction::Right, t, x);
        let expected = if x - c * t >= 0.0 { ic(x - c * t) } else { inflow(t - x / c) };
        prop_assert!((right - expected).abs() < 1e-6);
        let left = transport_oracle(&speed, inflow, ic, Direction::Left, t, x);
        let expected = if x + c * t <= 1.0 { ic(x + c * t) } else { inflow(t - (1.0 - x) / c) };
        prop_assert!((left - expected).abs() < 1e-6);
    }

    #[test]
    fn decay_fit_recovers_synthetic_rates(c in 0.05..5.0_f64, m in 0.1..10.0_f64) {
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let norms: Vec<f64> = times.iter().map(|t| if *t == 0.0 { 1.0 } else { m * (-c * t).exp() }).collect();
        let fit = decay_fit_norms(&times, &norms, 0.5).unwrap();
        prop_assert!((fit.c - c).abs() < 1e-9);
        prop_assert!((fit.m - m).abs() < 1e-8 * m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn closed_loop_is_linear(scale in -20.0..20.0_f64) {
        let n = 2;
        let g = Grid1D::new(33).unwrap();
        let p = example_params_n(n).unwrap();
        let ctrl = Controller::gain(sample_kernel(&example_kernel(), n, &TriGrid::from_grid(g.clone())).unwrap());
        let ic = StateN::from_fn(n, &g, |i, x| p.q()[i - 1] * (1.0 + x), |x| (2.0 * x).cos());
        let cfg = SimConfig::new(1.0);
        let a = simulate(&p, &ctrl, &ic, &g, &cfg).unwrap();
        let b = simulate(&p, &ctrl, &ic.scaled(scale), &g, &cfg).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            let gap = sb.sub(&sa.scaled(scale)).unwrap().norm_e(&g).unwrap();
            prop_assert!(gap <= 1e-10 * (1.0 + sb.norm_e(&g).unwrap()));
        }
    }

    #[test]
    fn solution_comparison_is_symmetric(shift in -1.0..1.0_f64) {
        let n = 3;
        let g = Grid1D::new(33).unwrap();
        let p = example_params_n(n).unwrap();
        let cfg = SimConfig::new(0.5);
        let a = simulate(&p, &Controller::zero(), &StateN::from_fn(n, &g, |i, _| i as f64, |_| 1.0), &g, &cfg).unwrap();
        let b = simulate(&p, &Controller::zero(), &StateN::from_fn(n, &g, |i, x| i as f64 + shift * x, |_| 1.0), &g, &cfg).unwrap();
        let ab = compare_solutions(&a, &b, n).unwrap();
        let ba = compare_solutions(&b, &a, n).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn parameter_files_round_trip(n in 1usize..6) {
        let p = example_params_n(n).unwrap();
        let g = Grid1D::new(65).unwrap();
        let file = p.to_file(&g);
        let text = serde_json::to_string(&file).unwrap();
        let back: ParamsFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &file);
        let again = back.into_params().unwrap();
        prop_assert_eq!(again.to_file(&g), file);
    }
}

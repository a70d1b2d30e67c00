//! Continuum kernels `k(x, ξ, y)`, `k̄(x, ξ)`: the closed form of the worked
//! example, numeric kernels for general coefficients, and their sampling into
//! gains for a finite channel count.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{cell_index, trapezoid, Grid1D, TriGrid};
use crate::error::{Error, Result};
use crate::field::{Func2, Func3};
use crate::kernels::{solve_exact_kernels_with, KernelsN, SolveOptions};
use crate::params::{sample_params, ContinuumParams};

pub const DEFAULT_ENSEMBLE_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    Numeric { n_y: usize, m: usize },
}

#[derive(Clone)]
enum Repr {
    Closed {
        k: Func3,
        kbar: Func2,
    },
    /// Exact kernels of the `n_y`-channel sampled system, read as step
    /// functions of `y`.
    Numeric(Arc<KernelsN>),
}

#[derive(Clone)]
pub struct ContinuumKernel {
    repr: Repr,
    provenance: Provenance,
}

impl std::fmt::Debug for ContinuumKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContinuumKernel")
            .field("provenance", &self.provenance)
            .finish()
    }
}

impl ContinuumKernel {
    /// Kernel given by formulas.
    pub fn closed_form(
        k: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        kbar: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            repr: Repr::Closed {
                k: Arc::new(k),
                kbar: Arc::new(kbar),
            },
            provenance: Provenance::ClosedForm,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn k(&self, x: f64, xi: f64, y: f64) -> f64 {
        match &self.repr {
            Repr::Closed { k, .. } => k(x, xi, y),
            Repr::Numeric(kn) => kn.eval(cell_index(y, kn.n()), x, xi),
        }
    }

    pub fn kbar(&self, x: f64, xi: f64) -> f64 {
        match &self.repr {
            Repr::Closed { kbar, .. } => kbar(x, xi),
            Repr::Numeric(kn) => kn.eval(kn.n(), x, xi),
        }
    }

    /// The underlying fine-ensemble kernels of a numeric kernel.
    pub fn numeric_kernels(&self) -> Option<&KernelsN> {
        match &self.repr {
            Repr::Numeric(kn) => Some(kn),
            Repr::Closed { .. } => None,
        }
    }
}

/// The constant `k̄ = 35/(2π²)` of the example kernel.
pub fn example_kbar() -> f64 {
    35.0 / (2.0 * PI * PI)
}

/// Closed-form kernel of the built-in example:
/// `k = 35 y(y−1) e^{2ξk̄}` and constant `k̄`.
pub fn example_kernel() -> ContinuumKernel {
    let kbar = example_kbar();
    ContinuumKernel::closed_form(
        move |_, xi, y| 35.0 * y * (y - 1.0) * (2.0 * xi * kbar).exp(),
        move |_, _| kbar,
    )
}

/// Finite-difference substitution of a continuum kernel into its equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumResidual {
    pub k_max: f64,
    pub k_l2: f64,
    pub kbar_max: f64,
    pub kbar_l2: f64,
    /// Max over `x` and `y` of the diagonal condition defect.
    pub diagonal_defect: f64,
    /// Max over `x` of the `ξ = 0` coupling defect.
    pub boundary_defect: f64,
    /// `max |k|` and `|k̄|` over the sampled points.
    pub magnitude: f64,
}

/// Residuals on interior nodes of an `m`-point triangle, with `n_y` ensemble
/// nodes for the `y`-integrals (trapezoid).
pub fn continuum_residual(
    kc: &ContinuumKernel,
    pc: &ContinuumParams,
    m: usize,
    n_y: usize,
) -> Result<ContinuumResidual> {
    if m < 4 || n_y < 2 {
        return Err(Error::InvalidArgument(format!(
            "continuum residual needs m >= 4 and n_y >= 2, got m={m}, n_y={n_y}"
        )));
    }
    let gx = Grid1D::new(m)?;
    let gy = Grid1D::new(n_y)?;
    let (xs, ys) = (gx.points(), gy.points());
    let h = gx.h();
    let hy = gy.h();
    let mu: Vec<f64> = xs.iter().map(|&x| pc.mu.eval(x)).collect();
    let dmu: Vec<f64> = xs.iter().map(|&x| pc.mu.derivative(x)).collect();

    // Packed triangle: node (a, b) has index a(a+1)/2 + b; k is y-fastest.
    let node = |a: usize, b: usize| a * (a + 1) / 2 + b;
    let nodes = node(m - 1, m - 1) + 1;
    let k: Vec<f64> = (0..nodes * n_y)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = unpack(idx / n_y);
            kc.k(xs[a], xs[b], ys[idx % n_y])
        })
        .collect();
    let kb: Vec<f64> = (0..nodes)
        .map(|idx| {
            let (a, b) = unpack(idx);
            kc.kbar(xs[a], xs[b])
        })
        .collect();
    let kat = |a: usize, b: usize, l: usize| k[node(a, b) * n_y + l];
    let kbat = |a: usize, b: usize| kb[node(a, b)];

    struct RowAcc {
        k_max: f64,
        k_sq: f64,
        kbar_max: f64,
        kbar_sq: f64,
    }
    let rows: Vec<RowAcc> = (1..m - 2)
        .into_par_iter()
        .map(|b| {
            // Every row sample shares the coefficients at ξ_b.
            let xi = xs[b];
            let sigma: Vec<f64> = (0..n_y * n_y)
                .map(|idx| (pc.sigma)(xi, ys[idx % n_y], ys[idx / n_y]))
                .collect();
            let lam: Vec<f64> = ys.iter().map(|&y| (pc.lambda)(xi, y)).collect();
            let dlam: Vec<f64> = ys.iter().map(|&y| pc.lambda_dx(xi, y)).collect();
            let theta: Vec<f64> = ys.iter().map(|&y| (pc.theta)(xi, y)).collect();
            let w: Vec<f64> = ys.iter().map(|&y| (pc.w)(xi, y)).collect();
            let mut acc = RowAcc {
                k_max: 0.0,
                k_sq: 0.0,
                kbar_max: 0.0,
                kbar_sq: 0.0,
            };
            let mut eta_vals = vec![0.0; n_y];
            for a in (b + 1)..m - 1 {
                for (l, slot) in eta_vals.iter_mut().enumerate() {
                    *slot = kat(a, b, l);
                }
                for l in 0..n_y {
                    let kx = (kat(a + 1, b, l) - kat(a - 1, b, l)) / (2.0 * h);
                    let kxi = (kat(a, b + 1, l) - kat(a, b - 1, l)) / (2.0 * h);
                    let srow = &sigma[l * n_y..(l + 1) * n_y];
                    let integrand: Vec<f64> = srow.iter().zip(&eta_vals).map(|(s, kv)| s * kv).collect();
                    let integral = trapezoid(&integrand, hy);
                    let r = mu[a] * kx - lam[l] * kxi - theta[l] * kbat(a, b) - dlam[l] * kat(a, b, l) - integral;
                    acc.k_max = acc.k_max.max(r.abs());
                    let wy = if l == 0 || l == n_y - 1 { 0.5 * hy } else { hy };
                    acc.k_sq += r * r * wy;
                }
                let kx = (kbat(a + 1, b) - kbat(a - 1, b)) / (2.0 * h);
                let kxi = (kbat(a, b + 1) - kbat(a, b - 1)) / (2.0 * h);
                let integrand: Vec<f64> = w.iter().zip(&eta_vals).map(|(w, kv)| w * kv).collect();
                let r = mu[a] * kx + mu[b] * kxi + dmu[b] * kbat(a, b) - trapezoid(&integrand, hy);
                acc.kbar_max = acc.kbar_max.max(r.abs());
                acc.kbar_sq += r * r;
            }
            acc
        })
        .collect();

    let mut res = ContinuumResidual {
        k_max: 0.0,
        k_l2: 0.0,
        kbar_max: 0.0,
        kbar_l2: 0.0,
        diagonal_defect: 0.0,
        boundary_defect: 0.0,
        magnitude: k.iter().chain(kb.iter()).fold(0.0_f64, |acc, v| acc.max(v.abs())),
    };
    let (mut ksq, mut kbsq) = (0.0, 0.0);
    for r in rows {
        res.k_max = res.k_max.max(r.k_max);
        res.kbar_max = res.kbar_max.max(r.kbar_max);
        ksq += r.k_sq;
        kbsq += r.kbar_sq;
    }
    res.k_l2 = (ksq * h * h).sqrt();
    res.kbar_l2 = (kbsq * h * h).sqrt();

    let q_lam: Vec<f64> = ys.iter().map(|&y| (pc.q)(y) * (pc.lambda)(0.0, y)).collect();
    for a in 0..m {
        for (l, &y) in ys.iter().enumerate() {
            let target = -(pc.theta)(xs[a], y) / ((pc.lambda)(xs[a], y) + mu[a]);
            res.diagonal_defect = res.diagonal_defect.max((kat(a, a, l) - target).abs());
        }
        let integrand: Vec<f64> = (0..n_y).map(|l| q_lam[l] * kat(a, 0, l)).collect();
        let d = (mu[0] * kbat(a, 0) - trapezoid(&integrand, hy)).abs();
        res.boundary_defect = res.boundary_defect.max(d);
    }
    Ok(res)
}

/// Inverse of the packed triangle index `a(a+1)/2 + b`.
fn unpack(idx: usize) -> (usize, usize) {
    let mut a = (((8 * idx + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    while (a + 1) * (a + 2) / 2 <= idx {
        a += 1;
    }
    while a * (a + 1) / 2 > idx {
        a -= 1;
    }
    (a, idx - a * (a + 1) / 2)
}

/// Numeric continuum kernel: the exact kernels of the `n_y`-channel sampled
/// system, extended to all `y` as step functions.
pub fn solve_continuum_kernels(pc: &ContinuumParams, n_y: usize, m: usize) -> Result<ContinuumKernel> {
    solve_continuum_kernels_with(pc, n_y, m, SolveOptions::default())
}

pub fn solve_continuum_kernels_with(
    pc: &ContinuumParams,
    n_y: usize,
    m: usize,
    opts: SolveOptions,
) -> Result<ContinuumKernel> {
    if n_y < 2 {
        return Err(Error::InvalidArgument(format!(
            "continuum kernels need n_y >= 2, got {n_y}"
        )));
    }
    let pn = sample_params(pc, n_y)?;
    let kn = solve_exact_kernels_with(&pn, m, opts)?;
    Ok(ContinuumKernel {
        repr: Repr::Numeric(Arc::new(kn)),
        provenance: Provenance::Numeric { n_y, m },
    })
}

/// Gains for `n` channels: `k̃^i(x, ξ) = k(x, ξ, i/n)` and `k̃^{n+1} = k̄`.
pub fn sample_kernel(kc: &ContinuumKernel, n: usize, tri: &TriGrid) -> Result<KernelsN> {
    if n == 0 {
        return Err(Error::Empty("sample_kernel needs n >= 1"));
    }
    let nf = n as f64;
    Ok(KernelsN::from_fn(n, tri.clone(), |c, x, xi| {
        if c < n {
            kc.k(x, xi, (c + 1) as f64 / nf)
        } else {
            kc.kbar(x, xi)
        }
    }))
}

/// Gap `Δk^i(1, ξ) = k̃^i(1, ξ) − k^i(1, ξ)` between approximate and exact gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    /// `sup_ξ |Δk^i(1, ξ)|` for `i = 1..=n+1`.
    pub per_channel: Vec<f64>,
    /// `max_ξ max_{i ≤ n+1} |Δk^i(1, ξ)|`.
    pub aggregate: f64,
    /// As `aggregate` with the `v` channel left out.
    pub aggregate_without_v: f64,
    /// `max_ξ ((1/n) Σ_{i≤n} Δk^i(1,ξ)² + Δk^{n+1}(1,ξ)²)^{1/2}`.
    pub e_style: f64,
}

pub fn kernel_delta(exact: &KernelsN, approx: &KernelsN) -> Result<DeltaReport> {
    exact.check_compatible(approx, "kernel_delta")?;
    let n = exact.n();
    let per_channel: Vec<f64> = (0..=n)
        .map(|c| {
            exact
                .row_x1(c)
                .iter()
                .zip(approx.row_x1(c))
                .fold(0.0_f64, |acc, (e, a)| acc.max((a - e).abs()))
        })
        .collect();
    let aggregate_without_v = per_channel[..n].iter().fold(0.0_f64, |a, &b| a.max(b));
    let aggregate = aggregate_without_v.max(per_channel[n]);
    let mut e_style = 0.0_f64;
    for b in 0..exact.m() {
        let d = |c: usize| approx.row_x1(c)[b] - exact.row_x1(c)[b];
        let s: f64 = (0..n).map(|c| d(c).powi(2)).sum::<f64>() / n as f64 + d(n).powi(2);
        e_style = e_style.max(s.sqrt());
    }
    Ok(DeltaReport {
        per_channel,
        aggregate,
        aggregate_without_v,
        e_style,
    })
}

//! Backstepping kernels of the `n+1` system on the triangle `0 ≤ ξ ≤ x ≤ 1`.
//!
//! The solver marches in `x`. On each new row, channels `i ≤ n` are carried
//! along characteristics of slope `dξ/dx = −λ_i(ξ)/μ(x)` (entering from the
//! diagonal) and channel `n+1` along `dξ/dx = μ(ξ)/μ(x)` (entering from
//! `ξ = 0`). Feet off the grid are found by linear interpolation and source
//! terms are advanced with one explicit Euler step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Grid1D, TriGrid};
use crate::error::{mismatch, Error, Result};
use crate::params::{ParamTable, ParamsN};

pub const DEFAULT_KERNEL_POINTS: usize = 257;

/// Kernels `k^1..k^{n+1}` tabulated on a [`TriGrid`]. Channel `c` is stored
/// row-major as `k[c][a*m + b] = k^{c+1}(x_a, ξ_b)`; entries with `b > a` are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelsN {
    n: usize,
    tri: TriGrid,
    k: Vec<Vec<f64>>,
}

impl KernelsN {
    pub fn zeros(n: usize, tri: TriGrid) -> Self {
        let mm = tri.m() * tri.m();
        Self {
            n,
            tri,
            k: vec![vec![0.0; mm]; n + 1],
        }
    }

    /// Tabulates `f(channel, x, ξ)` (channel 0-based, `n` is the `v` kernel).
    pub fn from_fn(n: usize, tri: TriGrid, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(n, tri);
        let m = out.tri.m();
        let xs = out.tri.grid().points().to_vec();
        for (c, table) in out.k.iter_mut().enumerate() {
            for a in 0..m {
                for b in 0..=a {
                    table[a * m + b] = f(c, xs[a], xs[b]);
                }
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.tri.m()
    }

    pub fn tri(&self) -> &TriGrid {
        &self.tri
    }

    pub fn grid(&self) -> &Grid1D {
        self.tri.grid()
    }

    /// Full `m×m` table of channel `c` (0-based).
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.k[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.k[c]
    }

    pub fn at(&self, c: usize, a: usize, b: usize) -> f64 {
        self.k[c][a * self.m() + b]
    }

    /// Row `x_a` of channel `c`, nodes `ξ_0..=ξ_a`.
    pub fn row(&self, c: usize, a: usize) -> &[f64] {
        let m = self.m();
        &self.k[c][a * m..a * m + a + 1]
    }

    /// The gains `k^{c+1}(1, ·)`.
    pub fn row_x1(&self, c: usize) -> &[f64] {
        self.row(c, self.m() - 1)
    }

    /// Largest absolute entry over all channels.
    pub fn max_abs(&self) -> f64 {
        self.k.iter().flatten().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_channel(&self, c: usize) -> f64 {
        self.k[c].iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Piecewise-linear evaluation inside the triangle; points above the
    /// diagonal are reflected onto it.
    pub fn eval(&self, c: usize, x: f64, xi: f64) -> f64 {
        let m = self.m();
        let h = self.tri.h();
        let x = x.clamp(0.0, 1.0);
        let xi = xi.clamp(0.0, x);
        let sx = x / h;
        let sxi = xi / h;
        let a0 = (sx.floor() as usize).min(m - 2);
        let b0 = (sxi.floor() as usize).min(a0);
        let tx = sx - a0 as f64;
        let txi = (sxi - b0 as f64).max(0.0);
        let k = |a: usize, b: usize| self.k[c][a * m + b];
        if b0 < a0 {
            let lo = k(a0, b0) * (1.0 - txi) + k(a0, b0 + 1) * txi;
            let hi = k(a0 + 1, b0) * (1.0 - txi) + k(a0 + 1, b0 + 1) * txi;
            lo * (1.0 - tx) + hi * tx
        } else {
            // Lower-right half cell with corners (a0,a0), (a0+1,a0), (a0+1,a0+1).
            let txi = txi.min(tx);
            k(a0, a0) * (1.0 - tx) + k(a0 + 1, a0) * (tx - txi) + k(a0 + 1, a0 + 1) * txi
        }
    }

    /// Injects the table onto a coarser grid whose spacing is an integer
    /// multiple of this one.
    pub fn restrict(&self, coarse: &Grid1D) -> Result<KernelsN> {
        let (mf, mc) = (self.m(), coarse.m());
        if mc > mf || (mf - 1) % (mc - 1) != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot restrict a {mf}-point kernel grid to {mc} points"
            )));
        }
        let r = (mf - 1) / (mc - 1);
        let mut out = KernelsN::zeros(self.n, TriGrid::from_grid(coarse.clone()));
        for c in 0..=self.n {
            for a in 0..mc {
                for b in 0..=a {
                    out.k[c][a * mc + b] = self.k[c][a * r * mf + b * r];
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn check_compatible(&self, other: &KernelsN, context: &'static str) -> Result<()> {
        if self.n != other.n || self.m() != other.m() {
            return Err(mismatch(
                context,
                format!("(n={}, m={})", self.n, self.m()),
                format!("(n={}, m={})", other.n, other.m()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Update the channels of each row on the rayon pool.
    pub parallel: bool,
}

/// Linear interpolation of `row[0..len]` (spacing `h`) at `s ∈ [0, (len-1)h]`.
fn interp_row(row: &[f64], h: f64, s: f64) -> f64 {
    let last = row.len() - 1;
    if last == 0 {
        return row[0];
    }
    let p = (s / h).max(0.0);
    let j = (p.floor() as usize).min(last - 1);
    let t = (p - j as f64).min(1.0);
    row[j] * (1.0 - t) + row[j + 1] * t
}

pub fn solve_exact_kernels(pn: &ParamsN, m: usize) -> Result<KernelsN> {
    solve_exact_kernels_with(pn, m, SolveOptions::default())
}

pub fn solve_exact_kernels_with(pn: &ParamsN, m: usize, opts: SolveOptions) -> Result<KernelsN> {
    if m < 3 {
        return Err(Error::InvalidArgument(format!("kernel grid needs m >= 3, got {m}")));
    }
    let tri = TriGrid::new(m)?;
    pn.validate(tri.grid())?;
    let table = pn.tabulate(tri.grid());
    let mut out = KernelsN::zeros(pn.n(), tri);
    March::new(&table, m, opts).run(&mut out)?;
    Ok(out)
}

struct March<'a> {
    t: &'a ParamTable,
    n: usize,
    m: usize,
    h: f64,
    opts: SolveOptions,
    /// `−θ_i/(λ_i+μ)` on the diagonal nodes, channel-major.
    diag: Vec<f64>,
    /// `q_j λ_j(0) / (n μ(0))`.
    bc_weights: Vec<f64>,
}

impl<'a> March<'a> {
    fn new(t: &'a ParamTable, m: usize, opts: SolveOptions) -> Self {
        let n = t.n;
        let mut diag = Vec::with_capacity(n * m);
        for i in 0..n {
            for a in 0..m {
                diag.push(-t.theta_at(i, a) / (t.lambda_at(i, a) + t.mu[a]));
            }
        }
        let bc_weights = (0..n)
            .map(|j| t.q[j] * t.lambda_at(j, 0) / (n as f64 * t.mu[0]))
            .collect();
        Self {
            t,
            n,
            m,
            h: 1.0 / (m - 1) as f64,
            opts,
            diag,
            bc_weights,
        }
    }

    fn boundary_value(&self, k0: impl Fn(usize) -> f64) -> f64 {
        self.bc_weights.iter().enumerate().map(|(j, w)| w * k0(j)).sum()
    }

    fn run(&self, out: &mut KernelsN) -> Result<()> {
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            out.k[i][0] = self.diag[i * m];
        }
        out.k[n][0] = self.boundary_value(|j| out.k[j][0]);

        let mut prev: Vec<Vec<f64>> = (0..=n).map(|c| vec![out.k[c][0]]).collect();
        for a in 1..m {
            let advance = |c: usize| self.advance_channel(c, &prev, a - 1);
            let advanced: Vec<Vec<f64>> = if self.opts.parallel {
                (0..=n).into_par_iter().map(advance).collect()
            } else {
                (0..=n).map(advance).collect()
            };
            let update = |i: usize| self.channel_row(i, a, &advanced[i]);
            let mut rows: Vec<Vec<f64>> = if self.opts.parallel {
                (0..n).into_par_iter().map(update).collect()
            } else {
                (0..n).map(update).collect()
            };
            let boundary = self.boundary_value(|j| rows[j][0]);
            let boundary_prev = self.boundary_value(|j| prev[j][0]);
            rows.push(self.v_channel_row(a, &advanced[n], boundary, boundary_prev));

            let defect = (rows[n][0] - boundary).abs();
            if rows.iter().flatten().any(|v| !v.is_finite()) || !(defect <= 1e-12 * (1.0 + boundary.abs())) {
                return Err(Error::KernelNonConvergence {
                    row: a,
                    x: a as f64 * self.h,
                    iterations: 1,
                    defect,
                });
            }
            for (c, row) in rows.iter().enumerate() {
                out.k[c][a * m..a * m + a + 1].copy_from_slice(row);
            }
            prev = rows;
        }
        Ok(())
    }

    /// `k + h·RHS/μ(x_a)` for channel `c` on every node of row `a`. Feet of
    /// characteristics on that row are interpolated in these values.
    fn advance_channel(&self, c: usize, prev: &[Vec<f64>], a: usize) -> Vec<f64> {
        let (n, m, t) = (self.n, self.m, self.t);
        let scale = self.h / t.mu[a];
        let inv_n = 1.0 / n as f64;
        (0..=a)
            .map(|b| {
                let rhs = if c < n {
                    let mut coupling = 0.0;
                    for (j, row) in prev[..n].iter().enumerate() {
                        coupling += t.sigma_at(j, c, b) * row[b];
                    }
                    t.dlambda[c * m + b] * prev[c][b] + inv_n * coupling + t.theta_at(c, b) * prev[n][b]
                } else {
                    let mut coupling = 0.0;
                    for (j, row) in prev[..n].iter().enumerate() {
                        coupling += t.w_at(j, b) * row[b];
                    }
                    -t.dmu[b] * prev[n][b] + inv_n * coupling
                };
                prev[c][b] + scale * rhs
            })
            .collect()
    }

    /// Source rate `RHS/μ` of channel `c` at node `(a, a)` of the previous row,
    /// recovered from the advanced values.
    fn diagonal_rate(&self, advanced: &[f64], c_prev: f64) -> f64 {
        (advanced[advanced.len() - 1] - c_prev) / self.h
    }

    fn channel_row(&self, i: usize, a: usize, advanced: &[f64]) -> Vec<f64> {
        let (m, h, t) = (self.m, self.h, self.t);
        let x_a = a as f64 * h;
        let x_prev = x_a - h;
        let mu_a = t.mu[a];
        let diag_prev = self.diag[i * m + a - 1];
        let diag_now = self.diag[i * m + a];
        let rate = self.diagonal_rate(advanced, diag_prev);
        let mut row = vec![0.0; a + 1];
        for (b, slot) in row.iter_mut().enumerate().take(a) {
            let xi = b as f64 * h;
            let r = t.lambda_at(i, b) / mu_a;
            let foot = xi + h * r;
            *slot = if foot <= x_prev {
                interp_row(advanced, h, foot)
            } else {
                let s = (x_a - xi) / (1.0 + r);
                let w = (x_a - s - x_prev) / h;
                let bc = diag_prev * (1.0 - w) + diag_now * w;
                bc + s * rate
            };
        }
        row[a] = diag_now;
        row
    }

    fn v_channel_row(&self, a: usize, advanced: &[f64], boundary: f64, boundary_prev: f64) -> Vec<f64> {
        let (h, t) = (self.h, self.t);
        let x_a = a as f64 * h;
        let x_prev = x_a - h;
        let mu_a = t.mu[a];
        let rate0 = (advanced[0] - boundary_prev) / h;
        let mut row = vec![0.0; a + 1];
        row[0] = boundary;
        for (b, slot) in row.iter_mut().enumerate().skip(1) {
            let xi = b as f64 * h;
            let r = t.mu[b] / mu_a;
            let foot = (xi - h * r).min(x_prev);
            *slot = if foot >= 0.0 {
                interp_row(advanced, h, foot)
            } else {
                let s = xi / r;
                let w = (x_a - s - x_prev) / h;
                boundary_prev * (1.0 - w) + boundary * w + s * rate0
            };
        }
        row
    }
}

/// Finite-difference substitution of the solved kernels into their equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResidual {
    /// Rightward-channel equations, max over channels and interior nodes.
    pub channel_max: f64,
    /// Discrete `L²(T)` norm of the rightward-channel residual (worst channel).
    pub channel_l2: f64,
    pub v_max: f64,
    pub v_l2: f64,
    /// Max over rows of the `ξ = 0` boundary coupling defect.
    pub boundary_defect: f64,
    /// Max over diagonal nodes of the diagonal boundary-condition defect.
    pub diagonal_defect: f64,
}

pub fn kernel_residual(kn: &KernelsN, pn: &ParamsN) -> Result<KernelResidual> {
    if kn.n() != pn.n() {
        return Err(mismatch(
            "kernel_residual",
            format!("kernels n={}", kn.n()),
            format!("params n={}", pn.n()),
        ));
    }
    let (n, m) = (kn.n(), kn.m());
    let h = kn.tri().h();
    let t = pn.tabulate(kn.grid());
    let inv_n = 1.0 / n as f64;
    let k = |c: usize, a: usize, b: usize| kn.at(c, a, b);
    let mut res = KernelResidual {
        channel_max: 0.0,
        channel_l2: 0.0,
        v_max: 0.0,
        v_l2: 0.0,
        boundary_defect: 0.0,
        diagonal_defect: 0.0,
    };
    let mut channel_sq = vec![0.0; n];
    let mut v_sq = 0.0;
    for a in 2..m.saturating_sub(1) {
        for b in 1..a {
            for (i, sq) in channel_sq.iter_mut().enumerate() {
                let kx = (k(i, a + 1, b) - k(i, a - 1, b)) / (2.0 * h);
                let kxi = (k(i, a, b + 1) - k(i, a, b - 1)) / (2.0 * h);
                let coupling: f64 = (0..n).map(|j| t.sigma_at(j, i, b) * k(j, a, b)).sum();
                let r = t.mu[a] * kx
                    - t.lambda_at(i, b) * kxi
                    - t.dlambda[i * m + b] * k(i, a, b)
                    - inv_n * coupling
                    - t.theta_at(i, b) * k(n, a, b);
                res.channel_max = res.channel_max.max(r.abs());
                *sq += r * r;
            }
            let kx = (k(n, a + 1, b) - k(n, a - 1, b)) / (2.0 * h);
            let kxi = (k(n, a, b + 1) - k(n, a, b - 1)) / (2.0 * h);
            let coupling: f64 = (0..n).map(|j| t.w_at(j, b) * k(j, a, b)).sum();
            let r = t.mu[a] * kx + t.mu[b] * kxi + t.dmu[b] * k(n, a, b) - inv_n * coupling;
            res.v_max = res.v_max.max(r.abs());
            v_sq += r * r;
        }
    }
    res.channel_l2 = channel_sq.iter().fold(0.0_f64, |acc, s| acc.max((s * h * h).sqrt()));
    res.v_l2 = (v_sq * h * h).sqrt();
    for a in 0..m {
        let sum: f64 = (0..n).map(|j| t.q[j] * t.lambda_at(j, 0) * k(j, a, 0)).sum();
        let d = (t.mu[0] * k(n, a, 0) - inv_n * sum).abs();
        res.boundary_defect = res.boundary_defect.max(d);
        for i in 0..n {
            let d = (k(i, a, a) + t.theta_at(i, a) / (t.lambda_at(i, a) + t.mu[a])).abs();
            res.diagonal_defect = res.diagonal_defect.max(d);
        }
    }
    Ok(res)
}

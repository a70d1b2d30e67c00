//! Method-of-lines simulation of the `n+1` plant, plus the exact
//! characteristics solution of pure transport.
//!
//! Space: first-order upwind on a uniform grid, with the boundary rows
//! `u^i(0) = q_i v(0)` and `v(1) = U` imposed algebraically at every stage.
//! Time: classical RK4 with a fixed step.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{Grid1D, StateN};
use crate::error::{mismatch, Error, Result};
use crate::field::{Field1, Func1};
use crate::kernels::KernelsN;
use crate::params::{sample_params, ContinuumParams, ParamTable, ParamsN};

pub const DEFAULT_SIM_POINTS: usize = 256;
pub const CFL: f64 = 0.5;
pub const BLOW_UP_NORM: f64 = 1e12;

/// Boundary input at `x = 1`.
#[derive(Clone)]
pub enum Controller {
    OpenLoop(Func1),
    /// State feedback through the `x = 1` row of the kernels.
    Gain(Arc<KernelsN>),
}

impl std::fmt::Debug for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Controller::OpenLoop(_) => write!(f, "OpenLoop(..)"),
            Controller::Gain(k) => write!(f, "Gain(n={}, m={})", k.n(), k.m()),
        }
    }
}

impl Controller {
    pub fn open_loop(u: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Controller::OpenLoop(Arc::new(u))
    }

    pub fn zero() -> Self {
        Self::open_loop(|_| 0.0)
    }

    pub fn gain(kn: KernelsN) -> Self {
        Controller::Gain(Arc::new(kn))
    }

    fn default_tag(&self) -> &'static str {
        match self {
            Controller::OpenLoop(_) => "open-loop",
            Controller::Gain(_) => "gain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_end: f64,
    /// Time step; `None` selects `CFL·h/max speed`.
    pub dt: Option<f64>,
    /// Keep every `save_stride`-th step (the final step is always kept).
    pub save_stride: usize,
    /// Evaluate channel updates on the rayon pool.
    pub parallel: bool,
    /// Controller label recorded in the trajectory metadata.
    pub tag: Option<String>,
}

impl SimConfig {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            dt: None,
            save_stride: 1,
            parallel: false,
            tag: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.save_stride = stride;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub n: usize,
    pub m: usize,
    pub dt: f64,
    pub controller: String,
    pub params_hash: String,
    pub continuum_proxy: bool,
    /// Time at which the norm exceeded the blow-up threshold, if it did.
    pub blow_up: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateN>,
    pub controls: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D::new(self.meta.m).expect("trajectory grid has m >= 2")
    }

    pub fn norms(&self) -> Vec<f64> {
        let g = self.grid();
        self.states
            .iter()
            .map(|s| s.norm_e(&g).expect("states share the grid"))
            .collect()
    }

    /// Saved sample closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (j, &tj) in self.times.iter().enumerate() {
            if (tj - t).abs() < (self.times[best] - t).abs() {
                best = j;
            }
        }
        best
    }
}

fn check_grid(s: &StateN, g: &Grid1D, context: &'static str) -> Result<()> {
    if s.m() != g.m() {
        return Err(mismatch(
            context,
            format!("state m={}", s.m()),
            format!("grid m={}", g.m()),
        ));
    }
    Ok(())
}

/// Time derivative of the semi-discrete system. The stencils read the inflow
/// values `q_i v(0)` and `boundary_v1` in place of the boundary nodes, whose
/// own derivatives are zero.
pub fn rhs(pn: &ParamsN, s: &StateN, g: &Grid1D, boundary_v1: f64) -> Result<StateN> {
    if pn.n() != s.n() {
        return Err(mismatch(
            "rhs",
            format!("params n={}", pn.n()),
            format!("state n={}", s.n()),
        ));
    }
    check_grid(s, g, "rhs")?;
    let t = pn.tabulate(g);
    let mut out = StateN::zeros(s.n(), s.m());
    rhs_into(&t, s, g.h(), boundary_v1, false, &mut out);
    Ok(out)
}

fn rhs_into(t: &ParamTable, s: &StateN, h: f64, boundary_v1: f64, parallel: bool, out: &mut StateN) {
    let (n, m) = (s.n(), s.m());
    let inv_n = 1.0 / n as f64;
    let v = s.v();
    let u = s.u_flat();
    let channel = |i: usize, du: &mut [f64]| {
        let ui = &u[i * m..(i + 1) * m];
        du[0] = 0.0;
        let mut left = t.q[i] * v[0];
        for j in 1..m {
            let mut coupling = 0.0;
            for k in 0..n {
                coupling += t.sigma_at(i, k, j) * u[k * m + j];
            }
            du[j] = -t.lambda_at(i, j) * (ui[j] - left) / h + inv_n * coupling + t.w_at(i, j) * v[j];
            left = ui[j];
        }
    };
    if parallel {
        out.u_flat_mut()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, du)| channel(i, du));
    } else {
        for (i, du) in out.u_flat_mut().chunks_mut(m).enumerate() {
            channel(i, du);
        }
    }
    let dv = out.v_mut();
    for j in 0..m - 1 {
        let right = if j + 1 == m - 1 { boundary_v1 } else { v[j + 1] };
        let mut coupling = 0.0;
        for k in 0..n {
            coupling += t.theta_at(k, j) * u[k * m + j];
        }
        dv[j] = t.mu[j] * (right - v[j]) / h + inv_n * coupling;
    }
    dv[m - 1] = 0.0;
}

/// `U = ∫ (1/n) Σ k^i(1,ξ) u^i(ξ) + k^{n+1}(1,ξ) v(ξ) dξ` (trapezoid on `g`).
pub fn feedback(kn: &KernelsN, s: &StateN, g: &Grid1D) -> Result<f64> {
    let (rest, last_weight) = feedback_parts(kn, s, g)?;
    Ok(rest + last_weight * s.v()[s.m() - 1])
}

/// Feedback split as `I + w·v(1)`: the trapezoid weight of the `v(1)` node
/// is returned separately so the closed loop can solve `U = I + w·U`.
fn feedback_parts(kn: &KernelsN, s: &StateN, g: &Grid1D) -> Result<(f64, f64)> {
    check_grid(s, g, "feedback")?;
    if kn.m() != g.m() || kn.n() != s.n() {
        return Err(mismatch(
            "feedback kernels",
            format!("(n={}, m={})", kn.n(), kn.m()),
            format!("state (n={}, m={})", s.n(), g.m()),
        ));
    }
    let (n, m) = (s.n(), s.m());
    let h = g.h();
    let inv_n = 1.0 / n as f64;
    let weight = |j: usize| if j == 0 || j == m - 1 { 0.5 * h } else { h };
    let mut acc = 0.0;
    for i in 0..n {
        let row = kn.row_x1(i);
        let ui = s.u(i);
        let mut part = 0.0;
        for j in 0..m {
            part += weight(j) * row[j] * ui[j];
        }
        acc += inv_n * part;
    }
    let row = kn.row_x1(n);
    let v = s.v();
    for j in 0..m - 1 {
        acc += weight(j) * row[j] * v[j];
    }
    Ok((acc, weight(m - 1) * row[m - 1]))
}

struct Plant<'a> {
    table: ParamTable,
    ctrl: &'a Controller,
    g: &'a Grid1D,
    parallel: bool,
}

impl Plant<'_> {
    /// Imposes `u^i(0) = q_i v(0)`, then resolves and imposes `v(1) = U`.
    fn close(&self, s: &mut StateN, t: f64) -> Result<f64> {
        let m = s.m();
        let v0 = s.v()[0];
        for i in 0..s.n() {
            s.u_mut(i)[0] = self.table.q[i] * v0;
        }
        let u = match self.ctrl {
            Controller::OpenLoop(f) => f(t),
            Controller::Gain(kn) => {
                let (rest, w) = feedback_parts(kn, s, self.g)?;
                rest / (1.0 - w)
            }
        };
        s.v_mut()[m - 1] = u;
        Ok(u)
    }

    fn derivative(&self, s: &StateN, t: f64, out: &mut StateN) -> Result<()> {
        let mut closed = s.clone();
        let u = self.close(&mut closed, t)?;
        rhs_into(&self.table, &closed, self.g.h(), u, self.parallel, out);
        Ok(())
    }
}

fn axpy(y: &StateN, a: f64, x: &StateN) -> StateN {
    let mut out = y.clone();
    for (o, xv) in out.u_flat_mut().iter_mut().zip(x.u_flat()) {
        *o += a * xv;
    }
    for (o, xv) in out.v_mut().iter_mut().zip(x.v()) {
        *o += a * xv;
    }
    out
}

/// Largest stable step `CFL·h/max speed` for `pn` on `g`.
pub fn cfl_limit(pn: &ParamsN, g: &Grid1D) -> f64 {
    CFL * g.h() / pn.tabulate(g).max_speed()
}

/// Integrates the closed (or open) loop from `ic` up to `cfg.t_end`.
///
/// A norm above [`BLOW_UP_NORM`] (or a non-finite state) stops the run; the
/// partial trajectory is returned with `meta.blow_up` set.
pub fn simulate(pn: &ParamsN, ctrl: &Controller, ic: &StateN, g: &Grid1D, cfg: &SimConfig) -> Result<Trajectory> {
    if pn.n() != ic.n() {
        return Err(mismatch(
            "simulate",
            format!("params n={}", pn.n()),
            format!("initial state n={}", ic.n()),
        ));
    }
    check_grid(ic, g, "simulate")?;
    if !(cfg.t_end > 0.0) || !cfg.t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "t_end must be positive, got {}",
            cfg.t_end
        )));
    }
    if cfg.save_stride == 0 {
        return Err(Error::InvalidArgument("save_stride must be at least 1".into()));
    }
    if let Controller::Gain(kn) = ctrl {
        if kn.m() != g.m() || kn.n() != pn.n() {
            return Err(mismatch(
                "simulate gain kernels",
                format!("(n={}, m={})", kn.n(), kn.m()),
                format!("plant (n={}, m={})", pn.n(), g.m()),
            ));
        }
    }
    pn.validate(g)?;
    let table = pn.tabulate(g);
    let limit = CFL * g.h() / table.max_speed();
    let requested = cfg.dt.unwrap_or(limit);
    if !(requested > 0.0) || requested > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt: requested, limit });
    }
    let steps = ((cfg.t_end / requested) - 1e-9).ceil().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;

    let plant = Plant {
        table,
        ctrl,
        g,
        parallel: cfg.parallel,
    };
    let mut state = ic.clone();
    let u0 = plant.close(&mut state, 0.0)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
        controls: vec![u0],
        meta: TrajectoryMeta {
            n: pn.n(),
            m: g.m(),
            dt,
            controller: cfg.tag.clone().unwrap_or_else(|| ctrl.default_tag().to_string()),
            params_hash: pn.content_hash(),
            continuum_proxy: false,
            blow_up: None,
        },
    };
    let (n, m) = (pn.n(), g.m());
    let mut k1 = StateN::zeros(n, m);
    let mut k2 = StateN::zeros(n, m);
    let mut k3 = StateN::zeros(n, m);
    let mut k4 = StateN::zeros(n, m);
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * dt;
        plant.derivative(&state, t0, &mut k1)?;
        plant.derivative(&axpy(&state, 0.5 * dt, &k1), t0 + 0.5 * dt, &mut k2)?;
        plant.derivative(&axpy(&state, 0.5 * dt, &k2), t0 + 0.5 * dt, &mut k3)?;
        plant.derivative(&axpy(&state, dt, &k3), t0 + dt, &mut k4)?;
        let mut next = state.clone();
        let update = |o: &mut f64, a: f64, b: f64, c: f64, d: f64| *o += dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        for (j, o) in next.u_flat_mut().iter_mut().enumerate() {
            update(o, k1.u_flat()[j], k2.u_flat()[j], k3.u_flat()[j], k4.u_flat()[j]);
        }
        for (j, o) in next.v_mut().iter_mut().enumerate() {
            update(o, k1.v()[j], k2.v()[j], k3.v()[j], k4.v()[j]);
        }
        let t = step as f64 * dt;
        let u = plant.close(&mut next, t)?;
        state = next;
        let norm = state.norm_e(g)?;
        let blown = !state.is_finite() || !(norm <= BLOW_UP_NORM);
        if blown || step % cfg.save_stride == 0 || step == steps {
            if state.is_finite() {
                traj.times.push(t);
                traj.states.push(state.clone());
                traj.controls.push(u);
            }
            if blown {
                traj.meta.blow_up = Some(t);
                break;
            }
        }
    }
    Ok(traj)
}

/// Runs [`simulate`] on the `n_y`-channel sampling of continuum coefficients,
/// with initial channels `u_0^i(x) = u0(x, i/n_y)`.
pub fn simulate_continuum(
    pc: &ContinuumParams,
    n_y: usize,
    ctrl: &Controller,
    u0: impl Fn(f64, f64) -> f64,
    v0: impl Fn(f64) -> f64,
    g: &Grid1D,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let pn = sample_params(pc, n_y)?;
    let ic = StateN::from_fn(n_y, g, |i, x| u0(x, i as f64 / n_y as f64), v0);
    let mut tr = simulate(&pn, ctrl, &ic, g, cfg)?;
    tr.meta.continuum_proxy = true;
    Ok(tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `w_t + c(x) w_x = 0`, inflow at `x = 0`.
    Right,
    /// `w_t − c(x) w_x = 0`, inflow at `x = 1`.
    Left,
}

const TRAVEL_TOL: f64 = 1e-10;

/// `∫_a^b dξ / c(ξ)` by trapezoid refinement until successive values agree
/// to `1e-10`.
pub fn travel_time(speed: &Field1, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let f = |x: f64| 1.0 / speed.eval(x);
    let mut panels = 1usize;
    let mut estimate = 0.5 * (b - a) * (f(a) + f(b));
    loop {
        let h = (b - a) / panels as f64;
        let midpoints: f64 = (0..panels).map(|k| f(a + (k as f64 + 0.5) * h)).sum();
        let refined = 0.5 * estimate + 0.5 * h * midpoints;
        panels *= 2;
        if (refined - estimate).abs() <= TRAVEL_TOL || panels > 1 << 22 {
            return refined;
        }
        estimate = refined;
    }
}

/// Point `x' ≥ x` (or `≤` for negative `tau`) with `∫_x^{x'} dξ/c = tau`,
/// by bisection.
fn travel_target(speed: &Field1, x: f64, tau: f64) -> f64 {
    let (mut lo, mut hi) = if tau >= 0.0 { (x, 1.0) } else { (0.0, x) };
    let phi = |z: f64| {
        if tau >= 0.0 {
            travel_time(speed, x, z)
        } else {
            -travel_time(speed, z, x)
        }
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact solution of pure transport with positive speed `c(x)` by
/// characteristics: the transported initial value while the characteristic
/// through `(t, x)` starts inside the domain, the delayed inflow otherwise.
pub fn transport_oracle(
    speed: &Field1,
    inflow: impl Fn(f64) -> f64,
    ic: impl Fn(f64) -> f64,
    direction: Direction,
    t: f64,
    x: f64,
) -> f64 {
    if t == 0.0 {
        return ic(x);
    }
    match direction {
        Direction::Right => {
            let delay = travel_time(speed, 0.0, x);
            if t <= delay {
                ic(travel_target(speed, x, -t))
            } else {
                inflow(t - delay)
            }
        }
        Direction::Left => {
            let delay = travel_time(speed, x, 1.0);
            if t <= delay {
                ic(travel_target(speed, x, t))
            } else {
                inflow(t - delay)
            }
        }
    }
}

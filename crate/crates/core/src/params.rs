//! Parameter data of the `n+1` system and of its continuum counterpart.
//!
//! Discrete channel `i` (1-based) sits at ensemble coordinate `y = i/n`. The
//! built-in worked example is available under [`BUILTIN_EXAMPLE`].

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{cell_index, Grid1D};
use crate::error::{mismatch, Error, Result};
use crate::field::{central_difference, Field1, FieldSpec, Func1, Func2, Func3};

/// Name of the built-in example parameter family.
pub const BUILTIN_EXAMPLE: &str = "builtin";

/// Largest channel count accepted by [`interpolate_params`].
pub const MAX_INTERPOLATION_CHANNELS: usize = 12;

/// Grid used for positivity checks when no working grid is supplied.
pub const CHECK_GRID_POINTS: usize = 257;

/// Coefficients of the `n+1` system: speeds `λ_i`, `μ`, in-domain couplings
/// `σ_{i,j}`, `W_i`, `θ_i` and boundary reflections `q_i`. All coupling sums
/// carry the factor `1/n`.
#[derive(Debug, Clone)]
pub struct ParamsN {
    n: usize,
    lambda: Vec<Field1>,
    mu: Field1,
    /// Row-major `σ_{i,j}`.
    sigma: Vec<Field1>,
    w: Vec<Field1>,
    theta: Vec<Field1>,
    q: Vec<f64>,
}

impl ParamsN {
    pub fn new(
        lambda: Vec<Field1>,
        mu: Field1,
        sigma: Vec<Field1>,
        w: Vec<Field1>,
        theta: Vec<Field1>,
        q: Vec<f64>,
    ) -> Result<Self> {
        let n = lambda.len();
        if n == 0 {
            return Err(Error::Empty("system needs n >= 1 channels"));
        }
        if sigma.len() != n * n {
            return Err(mismatch("ParamsN sigma", sigma.len(), format!("n^2 = {}", n * n)));
        }
        for (name, len) in [("w", w.len()), ("theta", theta.len()), ("q", q.len())] {
            if len != n {
                return Err(mismatch(
                    "ParamsN",
                    format!("{name} has {len} entries"),
                    format!("n = {n}"),
                ));
            }
        }
        Ok(Self {
            n,
            lambda,
            mu,
            sigma,
            w,
            theta,
            q,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based channel accessors.
    pub fn lambda(&self, i: usize) -> &Field1 {
        &self.lambda[i]
    }

    pub fn mu(&self) -> &Field1 {
        &self.mu
    }

    pub fn sigma(&self, i: usize, j: usize) -> &Field1 {
        &self.sigma[i * self.n + j]
    }

    pub fn w(&self, i: usize) -> &Field1 {
        &self.w[i]
    }

    pub fn theta(&self, i: usize) -> &Field1 {
        &self.theta[i]
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Checks positive speeds and finite coefficients at every node of `grid`.
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        for &x in grid.points() {
            let mu = self.mu.eval(x);
            if !mu.is_finite() {
                return Err(Error::NonFinite { field: "mu".into(), x });
            }
            if mu <= 0.0 {
                return Err(Error::NonPositiveSpeed {
                    field: "mu".into(),
                    x,
                    value: mu,
                });
            }
            for i in 0..self.n {
                let l = self.lambda[i].eval(x);
                if !l.is_finite() {
                    return Err(Error::NonFinite {
                        field: format!("lambda_{}", i + 1),
                        x,
                    });
                }
                if l <= 0.0 {
                    return Err(Error::NonPositiveSpeed {
                        field: format!("lambda_{}", i + 1),
                        x,
                        value: l,
                    });
                }
                for (name, f) in [("w", &self.w[i]), ("theta", &self.theta[i])] {
                    if !f.eval(x).is_finite() {
                        return Err(Error::NonFinite {
                            field: format!("{name}_{}", i + 1),
                            x,
                        });
                    }
                }
            }
            if let Some(k) = self.sigma.iter().position(|s| !s.eval(x).is_finite()) {
                return Err(Error::NonFinite {
                    field: format!("sigma_{},{}", k / self.n + 1, k % self.n + 1),
                    x,
                });
            }
        }
        if let Some(i) = self.q.iter().position(|q| !q.is_finite()) {
            return Err(Error::NonFinite {
                field: format!("q_{}", i + 1),
                x: 0.0,
            });
        }
        Ok(())
    }

    /// Evaluates every coefficient on the nodes of `grid`.
    pub fn tabulate(&self, grid: &Grid1D) -> ParamTable {
        let n = self.n;
        let xs = grid.points();
        let m = xs.len();
        let per_channel = |fields: &[Field1], deriv: bool| -> Vec<f64> {
            let mut out = Vec::with_capacity(fields.len() * m);
            for f in fields {
                out.extend(xs.iter().map(|&x| if deriv { f.derivative(x) } else { f.eval(x) }));
            }
            out
        };
        ParamTable {
            n,
            m,
            lambda: per_channel(&self.lambda, false),
            dlambda: per_channel(&self.lambda, true),
            mu: xs.iter().map(|&x| self.mu.eval(x)).collect(),
            dmu: xs.iter().map(|&x| self.mu.derivative(x)).collect(),
            sigma: per_channel(&self.sigma, false),
            w: per_channel(&self.w, false),
            theta: per_channel(&self.theta, false),
            q: self.q.clone(),
        }
    }

    /// Short content hash of the coefficients sampled on a fixed 33-point grid.
    pub fn content_hash(&self) -> String {
        let grid = Grid1D::new(33).expect("static grid");
        let t = self.tabulate(&grid);
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        for block in [&t.lambda, &t.mu, &t.sigma, &t.w, &t.theta, &t.q] {
            for v in block.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// JSON file representation; closures are tabulated on `grid`.
    pub fn to_file(&self, grid: &Grid1D) -> ParamsFile {
        let tab = |f: &Field1| FieldSpec::tabulate(f, grid.points());
        ParamsFile {
            n: self.n,
            mu: tab(&self.mu),
            lambda: self.lambda.iter().map(tab).collect(),
            sigma: (0..self.n)
                .map(|i| (0..self.n).map(|j| tab(self.sigma(i, j))).collect())
                .collect(),
            w: self.w.iter().map(tab).collect(),
            theta: self.theta.iter().map(tab).collect(),
            q: self.q.clone(),
        }
    }
}

/// Coefficients sampled on a grid. Channel-major layouts: `lambda[i*m + j]`,
/// `sigma[(i*n + k)*m + j]` holds `σ_{i,k}(x_j)`.
#[derive(Debug, Clone)]
pub struct ParamTable {
    pub n: usize,
    pub m: usize,
    pub lambda: Vec<f64>,
    pub dlambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub dmu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub q: Vec<f64>,
}

impl ParamTable {
    pub fn lambda_at(&self, i: usize, j: usize) -> f64 {
        self.lambda[i * self.m + j]
    }

    pub fn sigma_at(&self, i: usize, k: usize, j: usize) -> f64 {
        self.sigma[(i * self.n + k) * self.m + j]
    }

    pub fn w_at(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.m + j]
    }

    pub fn theta_at(&self, i: usize, j: usize) -> f64 {
        self.theta[i * self.m + j]
    }

    pub fn max_speed(&self) -> f64 {
        self.lambda
            .iter()
            .chain(self.mu.iter())
            .fold(0.0_f64, |acc, &s| acc.max(s.abs()))
    }
}

/// On-disk parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub n: usize,
    pub mu: FieldSpec,
    pub lambda: Vec<FieldSpec>,
    pub sigma: Vec<Vec<FieldSpec>>,
    pub w: Vec<FieldSpec>,
    pub theta: Vec<FieldSpec>,
    pub q: Vec<f64>,
}

impl ParamsFile {
    pub fn into_params(self) -> Result<ParamsN> {
        let n = self.n;
        if self.lambda.len() != n || self.sigma.len() != n || self.sigma.iter().any(|r| r.len() != n) {
            return Err(mismatch(
                "parameter file",
                format!("lambda {} / sigma rows {}", self.lambda.len(), self.sigma.len()),
                format!("n = {n}"),
            ));
        }
        let conv = |v: Vec<FieldSpec>| v.into_iter().map(FieldSpec::into_field).collect::<Result<Vec<_>>>();
        let params = ParamsN::new(
            conv(self.lambda)?,
            self.mu.into_field()?,
            conv(self.sigma.into_iter().flatten().collect())?,
            conv(self.w)?,
            conv(self.theta)?,
            self.q,
        )?;
        params.validate(&Grid1D::new(CHECK_GRID_POINTS)?)?;
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Continuum coefficients `λ(x,y)`, `μ(x)`, `σ(x,y,η)`, `W(x,y)`, `θ(x,y)`, `q(y)`.
#[derive(Clone)]
pub struct ContinuumParams {
    pub lambda: Func2,
    pub mu: Field1,
    pub sigma: Func3,
    pub w: Func2,
    pub theta: Func2,
    pub q: Func1,
}

impl std::fmt::Debug for ContinuumParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContinuumParams")
            .field("mu", &self.mu)
            .finish_non_exhaustive()
    }
}

impl ContinuumParams {
    /// `∂λ/∂x` at `(x, y)`.
    pub fn lambda_dx(&self, x: f64, y: f64) -> f64 {
        central_difference(|s| (self.lambda)(s, y), x)
    }

    /// Positivity of `λ` and `μ` on `gx × gy`.
    pub fn validate(&self, gx: &Grid1D, gy: &Grid1D) -> Result<()> {
        for &x in gx.points() {
            let mu = self.mu.eval(x);
            if !(mu > 0.0) {
                return Err(Error::NonPositiveSpeed {
                    field: "mu".into(),
                    x,
                    value: mu,
                });
            }
            for &y in gy.points() {
                let l = (self.lambda)(x, y);
                if !(l > 0.0) {
                    return Err(Error::NonPositiveSpeed {
                        field: format!("lambda(., y={y})"),
                        x,
                        value: l,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Step-function lift of a [`ParamsN`]: piecewise constant in `y` (and `η`)
/// on the cells `((i-1)/n, i/n]`.
#[derive(Debug, Clone)]
pub struct StepParams {
    source: ParamsN,
}

impl StepParams {
    pub fn n(&self) -> usize {
        self.source.n
    }

    pub fn source(&self) -> &ParamsN {
        &self.source
    }

    pub fn lambda(&self, x: f64, y: f64) -> f64 {
        self.source.lambda[cell_index(y, self.n())].eval(x)
    }

    pub fn sigma(&self, x: f64, y: f64, eta: f64) -> f64 {
        let n = self.n();
        self.source.sigma(cell_index(y, n), cell_index(eta, n)).eval(x)
    }

    pub fn w(&self, x: f64, y: f64) -> f64 {
        self.source.w[cell_index(y, self.n())].eval(x)
    }

    pub fn theta(&self, x: f64, y: f64) -> f64 {
        self.source.theta[cell_index(y, self.n())].eval(x)
    }

    pub fn q(&self, y: f64) -> f64 {
        self.source.q[cell_index(y, self.n())]
    }

    pub fn mu(&self, x: f64) -> f64 {
        self.source.mu.eval(x)
    }

    /// The same data viewed as (discontinuous) continuum coefficients.
    pub fn to_continuum(&self) -> ContinuumParams {
        let s1 = Arc::new(self.clone());
        let (s2, s3, s4, s5) = (s1.clone(), s1.clone(), s1.clone(), s1.clone());
        ContinuumParams {
            lambda: Arc::new(move |x, y| s1.lambda(x, y)),
            mu: self.source.mu.clone(),
            sigma: Arc::new(move |x, y, e| s2.sigma(x, y, e)),
            w: Arc::new(move |x, y| s3.w(x, y)),
            theta: Arc::new(move |x, y| s4.theta(x, y)),
            q: Arc::new(move |y| s5.q(y)),
        }
    }
}

fn channel_y(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

/// Discrete parameters `λ_i(x) = λ(x, i/n)`, `σ_{i,j}(x) = σ(x, i/n, j/n)` etc.
pub fn sample_params(pc: &ContinuumParams, n: usize) -> Result<ParamsN> {
    if n == 0 {
        return Err(Error::Empty("sample_params needs n >= 1"));
    }
    let at_y = |f: &Func2, y: f64| {
        let f = f.clone();
        Field1::func(move |x| f(x, y))
    };
    let lambda = (1..=n).map(|i| at_y(&pc.lambda, channel_y(i, n))).collect();
    let w = (1..=n).map(|i| at_y(&pc.w, channel_y(i, n))).collect();
    let theta = (1..=n).map(|i| at_y(&pc.theta, channel_y(i, n))).collect();
    let mut sigma = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            let (f, y, eta) = (pc.sigma.clone(), channel_y(i, n), channel_y(j, n));
            sigma.push(Field1::func(move |x| f(x, y, eta)));
        }
    }
    let q = (1..=n).map(|i| (pc.q)(channel_y(i, n))).collect();
    let params = ParamsN::new(lambda, pc.mu.clone(), sigma, w, theta, q)?;
    params.validate(&Grid1D::new(CHECK_GRID_POINTS)?)?;
    Ok(params)
}

pub fn lift_params(pn: &ParamsN) -> StepParams {
    StepParams { source: pn.clone() }
}

// Example family. The discrete and continuum versions share these helpers so
// that sampling the continuum family reproduces the discrete one bit for bit.

fn example_sigma(x: f64, y: f64, eta: f64) -> f64 {
    x.powi(3) * (x + 1.0) * (y - 0.5) * (eta - 0.5)
}

fn example_w(x: f64, y: f64) -> f64 {
    x * (x + 1.0) * x.exp() * (y - 0.5)
}

fn example_theta(x: f64, y: f64) -> f64 {
    -70.0 * (x * 35.0 / (PI * PI)).exp() * y * (y - 1.0)
}

fn example_q(y: f64) -> f64 {
    (2.0 * PI * y).cos()
}

/// The worked example with `n` rightward channels: unit speeds, separable
/// couplings vanishing at `y = 1/2`, and `q_i = cos(2π i/n)`.
pub fn example_params_n(n: usize) -> Result<ParamsN> {
    if n == 0 {
        return Err(Error::Empty("example_params_n needs n >= 1"));
    }
    let ys: Vec<f64> = (1..=n).map(|i| channel_y(i, n)).collect();
    let mut sigma = Vec::with_capacity(n * n);
    for &y in &ys {
        for &eta in &ys {
            sigma.push(Field1::func(move |x| example_sigma(x, y, eta)));
        }
    }
    ParamsN::new(
        vec![Field1::Constant(1.0); n],
        Field1::Constant(1.0),
        sigma,
        ys.iter().map(|&y| Field1::func(move |x| example_w(x, y))).collect(),
        ys.iter().map(|&y| Field1::func(move |x| example_theta(x, y))).collect(),
        ys.iter().map(|&y| example_q(y)).collect(),
    )
}

/// Continuum version of [`example_params_n`].
pub fn example_params_continuum() -> ContinuumParams {
    ContinuumParams {
        lambda: Arc::new(|_, _| 1.0),
        mu: Field1::Constant(1.0),
        sigma: Arc::new(example_sigma),
        w: Arc::new(example_w),
        theta: Arc::new(example_theta),
        q: Arc::new(example_q),
    }
}

/// Lagrange-type basis `p_i(y) = Π_{k≠i} (k/n − y)/(k/n − i/n) + b sin(nπy)`.
fn interpolation_basis(i: usize, n: usize, b: f64, y: f64) -> f64 {
    let yi = channel_y(i, n);
    let prod: f64 = (1..=n)
        .filter(|&k| k != i)
        .map(|k| {
            let yk = channel_y(k, n);
            (yk - y) / (yk - yi)
        })
        .product();
    prod + b * (n as f64 * PI * y).sin()
}

/// Builds smooth continuum coefficients that agree with `pn` at every
/// `y = i/n`, using the polynomial-plus-sine basis with sine weight `b`.
pub fn interpolate_params(pn: &ParamsN, b: f64) -> Result<ContinuumParams> {
    let n = pn.n;
    if n > MAX_INTERPOLATION_CHANNELS {
        return Err(Error::TooManyChannels {
            n,
            max: MAX_INTERPOLATION_CHANNELS,
        });
    }
    let basis = Arc::new(move |y: f64| -> Vec<f64> { (1..=n).map(|i| interpolation_basis(i, n, b, y)).collect() });
    let combine = |fields: Vec<Field1>| -> Func2 {
        let basis = basis.clone();
        Arc::new(move |x, y| basis(y).iter().zip(&fields).map(|(p, f)| p * f.eval(x)).sum())
    };
    let sigma_fields = pn.sigma.clone();
    let sigma_basis = basis.clone();
    let q_vals = pn.q.clone();
    let q_basis = basis.clone();
    Ok(ContinuumParams {
        lambda: combine(pn.lambda.clone()),
        mu: pn.mu.clone(),
        sigma: Arc::new(move |x, y, eta| {
            let py = sigma_basis(y);
            let pe = sigma_basis(eta);
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += sigma_fields[i * n + j].eval(x) * py[i] * pe[j];
                }
            }
            acc
        }),
        w: combine(pn.w.clone()),
        theta: combine(pn.theta.clone()),
        q: Arc::new(move |y| q_basis(y).iter().zip(&q_vals).map(|(p, q)| p * q).sum()),
    })
}

/// Distances between continuum coefficients and a step-function lift:
/// `max_x ‖·(x, ·)‖_{L²}` per field and `‖q − qⁿ‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrorReport {
    pub lambda: f64,
    pub sigma: f64,
    pub theta: f64,
    pub w: f64,
    pub q: f64,
}

const ERR_SUB_1D: usize = 16;
const ERR_SUB_2D: usize = 4;

/// Midpoint nodes within each step cell, so cell boundaries are never sampled.
fn cell_nodes(n: usize, sub: usize) -> Vec<f64> {
    let width = 1.0 / (n * sub) as f64;
    (0..n * sub).map(|k| (k as f64 + 0.5) * width).collect()
}

pub fn param_error(pc: &ContinuumParams, sp: &StepParams, g: &Grid1D) -> ParamErrorReport {
    let ys = cell_nodes(sp.n(), ERR_SUB_1D);
    let ys2 = cell_nodes(sp.n(), ERR_SUB_2D);
    let l2_1d =
        |d: &dyn Fn(f64) -> f64| -> f64 { (ys.iter().map(|&y| d(y).powi(2)).sum::<f64>() / ys.len() as f64).sqrt() };
    let mut report = ParamErrorReport {
        lambda: 0.0,
        sigma: 0.0,
        theta: 0.0,
        w: 0.0,
        q: 0.0,
    };
    for &x in g.points() {
        report.lambda = report.lambda.max(l2_1d(&|y| (pc.lambda)(x, y) - sp.lambda(x, y)));
        report.theta = report.theta.max(l2_1d(&|y| (pc.theta)(x, y) - sp.theta(x, y)));
        report.w = report.w.max(l2_1d(&|y| (pc.w)(x, y) - sp.w(x, y)));
        let mut acc = 0.0;
        for &y in &ys2 {
            for &eta in &ys2 {
                acc += ((pc.sigma)(x, y, eta) - sp.sigma(x, y, eta)).powi(2);
            }
        }
        report.sigma = report.sigma.max((acc / (ys2.len() * ys2.len()) as f64).sqrt());
    }
    report.q = l2_1d(&|y| (pc.q)(y) - sp.q(y));
    report
}

/// Resolves a parameter source: the built-in example name or a JSON file path.
pub fn load_params(source: &str, n: Option<usize>) -> Result<ParamsN> {
    if source == BUILTIN_EXAMPLE {
        let n = n.ok_or_else(|| Error::InvalidArgument("the built-in example needs --n".into()))?;
        return example_params_n(n);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Error::UnknownParams(source.to_string()));
    }
    let params = ParamsFile::load(path)?.into_params()?;
    if let Some(n) = n {
        if n != params.n() {
            return Err(mismatch(
                "parameter file channel count",
                params.n(),
                format!("requested n = {n}"),
            ));
        }
    }
    Ok(params)
}

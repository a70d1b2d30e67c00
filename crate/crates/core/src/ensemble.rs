//! Grids, state containers and the weighted inner products of the discrete
//! state space `E` and its continuum counterpart `E_c`.
//!
//! The step-function lift maps a channel vector `b ∈ R^n` to the function of
//! the ensemble variable `y` that equals `b_i` on the cell `((i-1)/n, i/n]`.
//! Its adjoint [`project`] takes cell means. With the `1/n` weighting of the
//! discrete norm the lift is an isometry and `project ∘ lift` is the identity.

use crate::error::{mismatch, Error, Result};

/// Uniform closed grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    points: Vec<f64>,
    h: f64,
}

impl Grid1D {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {m}")));
        }
        let denom = (m - 1) as f64;
        let points = (0..m).map(|j| j as f64 / denom).collect();
        Ok(Self { points, h: 1.0 / denom })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn x(&self, j: usize) -> f64 {
        self.points[j]
    }

    /// Composite trapezoid of nodal values over the whole grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        trapezoid(values, self.h)
    }

    /// Linear interpolation of nodal values at `x`, clamped to `[0, 1]`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let m = self.m();
        let s = (x.clamp(0.0, 1.0)) / self.h;
        let a = (s.floor() as usize).min(m - 2);
        let t = s - a as f64;
        values[a] * (1.0 - t) + values[a + 1] * t
    }
}

/// Composite trapezoid with spacing `h`. Zero for fewer than two samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        len => {
            let interior: f64 = values[1..len - 1].iter().sum();
            h * (0.5 * (values[0] + values[len - 1]) + interior)
        }
    }
}

/// Triangular domain `0 <= xi <= x <= 1` on a tensor grid. Node `(a, b)` is
/// `(x_a, xi_b)` and exists iff `b <= a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriGrid {
    grid: Grid1D,
}

impl TriGrid {
    pub fn new(m: usize) -> Result<Self> {
        Ok(Self { grid: Grid1D::new(m)? })
    }

    pub fn from_grid(grid: Grid1D) -> Self {
        Self { grid }
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        let m = self.m();
        m * (m + 1) / 2
    }

    /// All `(a, b)` index pairs with `b <= a`, row by row.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> {
        let m = self.m();
        (0..m).flat_map(|a| (0..=a).map(move |b| (a, b)))
    }
}

/// Discrete plant state: `n` rightward channels `u^i` and one leftward `v`,
/// all tabulated on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateN {
    n: usize,
    m: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl StateN {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            u: vec![0.0; n * m],
            v: vec![0.0; m],
        }
    }

    /// Builds a state from a row-major `n × m` array and a length-`m` vector.
    pub fn from_parts(n: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("state needs at least one u-channel"));
        }
        let m = v.len();
        if u.len() != n * m {
            return Err(mismatch(
                "StateN::from_parts",
                format!("u len {}", u.len()),
                format!("n*m = {}", n * m),
            ));
        }
        Ok(Self { n, m, u, v })
    }

    /// Tabulates `u^i(x) = u0(i, x)` (1-based channel) and `v(x) = v0(x)`.
    pub fn from_fn(n: usize, grid: &Grid1D, u0: impl Fn(usize, f64) -> f64, v0: impl Fn(f64) -> f64) -> Self {
        let m = grid.m();
        let mut u = Vec::with_capacity(n * m);
        for i in 1..=n {
            u.extend(grid.points().iter().map(|&x| u0(i, x)));
        }
        let v = grid.points().iter().map(|&x| v0(x)).collect();
        Self { n, m, u, v }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Channel `i` (0-based).
    pub fn u(&self, i: usize) -> &[f64] {
        &self.u[i * self.m..(i + 1) * self.m]
    }

    pub fn u_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.u[i * self.m..(i + 1) * self.m]
    }

    pub fn u_flat(&self) -> &[f64] {
        &self.u
    }

    pub fn u_flat_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|z| z.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.u.iter_mut().chain(out.v.iter_mut()).for_each(|z| *z *= c);
        out
    }

    /// `self - other`, requiring equal shapes.
    pub fn sub(&self, other: &StateN) -> Result<StateN> {
        self.check_same_shape(other, "StateN::sub")?;
        let u = self.u.iter().zip(&other.u).map(|(a, b)| a - b).collect();
        let v = self.v.iter().zip(&other.v).map(|(a, b)| a - b).collect();
        Ok(StateN {
            n: self.n,
            m: self.m,
            u,
            v,
        })
    }

    pub(crate) fn check_same_shape(&self, other: &StateN, context: &'static str) -> Result<()> {
        if self.n != other.n || self.m != other.m {
            return Err(mismatch(
                context,
                format!("(n={}, m={})", self.n, self.m),
                format!("(n={}, m={})", other.n, other.m),
            ));
        }
        Ok(())
    }

    /// E-norm on `grid`.
    pub fn norm_e(&self, grid: &Grid1D) -> Result<f64> {
        Ok(inner_product_e(self, self, grid)?.max(0.0).sqrt())
    }
}

/// `<a, b>_E = ∫ (1/n) Σ u_a^i u_b^i + v_a v_b dx`, trapezoid on `grid`.
pub fn inner_product_e(a: &StateN, b: &StateN, grid: &Grid1D) -> Result<f64> {
    a.check_same_shape(b, "inner_product_e")?;
    if a.m != grid.m() {
        return Err(mismatch(
            "inner_product_e grid",
            format!("state m={}", a.m),
            format!("grid m={}", grid.m()),
        ));
    }
    let m = a.m;
    let inv_n = 1.0 / a.n as f64;
    let integrand: Vec<f64> = (0..m)
        .map(|j| {
            let uu: f64 = (0..a.n).map(|i| a.u[i * m + j] * b.u[i * m + j]).sum();
            inv_n * uu + a.v[j] * b.v[j]
        })
        .collect();
    Ok(grid.trapezoid(&integrand))
}

/// Piecewise-constant function of `y` on the cells `((i-1)/n, i/n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    values: Vec<f64>,
}

impl StepFunction {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.values[cell_index(y, self.values.len())]
    }

    /// Exact `L^2(0,1)` norm squared: `(1/n) Σ b_i^2`.
    pub fn l2_norm_squared(&self) -> f64 {
        self.values.iter().map(|b| b * b).sum::<f64>() / self.values.len() as f64
    }
}

/// 0-based index of the right-closed cell containing `y`; `y <= 0` maps to the
/// first cell.
pub fn cell_index(y: f64, n: usize) -> usize {
    let c = (y * n as f64).ceil();
    if c <= 1.0 {
        0
    } else {
        (c as usize - 1).min(n - 1)
    }
}

/// The lift `F_n`: channel vector to step function.
pub fn lift(b: &[f64]) -> Result<StepFunction> {
    if b.is_empty() {
        return Err(Error::Empty("lift needs at least one value"));
    }
    Ok(StepFunction { values: b.to_vec() })
}

/// The adjoint `F_n^*`: cell means `n ∫_{(i-1)/n}^{i/n} g`.
///
/// Each cell is integrated with a composite midpoint rule on `q` sub-intervals,
/// so cell end points are never sampled. The mean is accumulated as offsets
/// from the first sample, which recovers a cell-constant `g` bit for bit.
pub fn project(g: impl Fn(f64) -> f64, n: usize, q: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Empty("project needs n >= 1"));
    }
    if q < 2 {
        return Err(Error::InvalidArgument(format!(
            "project needs q >= 2 sub-points, got {q}"
        )));
    }
    let width = 1.0 / n as f64;
    let sub = width / q as f64;
    Ok((0..n)
        .map(|i| {
            let left = i as f64 * width;
            let first = g(left + 0.5 * sub);
            let offset: f64 = (1..q).map(|s| g(left + (s as f64 + 0.5) * sub) - first).sum();
            first + offset / q as f64
        })
        .collect())
}

/// A continuum state `(u(x, y), v(x))` tabulated on `gx × gy` and `gx`.
#[derive(Debug, Clone)]
pub struct ContinuumTable {
    pub gx: Grid1D,
    pub gy: Grid1D,
    /// Row-major over `x` then `y`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ContinuumTable {
    pub fn from_fn(gx: &Grid1D, gy: &Grid1D, u: impl Fn(f64, f64) -> f64, v: impl Fn(f64) -> f64) -> Self {
        let mut table = Vec::with_capacity(gx.m() * gy.m());
        for &x in gx.points() {
            table.extend(gy.points().iter().map(|&y| u(x, y)));
        }
        Self {
            gx: gx.clone(),
            gy: gy.clone(),
            u: table,
            v: gx.points().iter().map(|&x| v(x)).collect(),
        }
    }
}

/// `<a, b>_{E_c}`: double trapezoid for the `u` term plus trapezoid for `v`.
pub fn inner_product_ec(a: &ContinuumTable, b: &ContinuumTable) -> Result<f64> {
    if a.gx != b.gx || a.gy != b.gy {
        return Err(mismatch(
            "inner_product_ec grids",
            format!("({}, {})", a.gx.m(), a.gy.m()),
            format!("({}, {})", b.gx.m(), b.gy.m()),
        ));
    }
    let (mx, my) = (a.gx.m(), a.gy.m());
    for t in [a, b] {
        if t.u.len() != mx * my || t.v.len() != mx {
            return Err(mismatch(
                "inner_product_ec table",
                format!("u {} / v {}", t.u.len(), t.v.len()),
                format!("u {} / v {}", mx * my, mx),
            ));
        }
    }
    let integrand: Vec<f64> = (0..mx)
        .map(|j| {
            let row: Vec<f64> = (0..my).map(|k| a.u[j * my + k] * b.u[j * my + k]).collect();
            a.gy.trapezoid(&row) + a.v[j] * b.v[j]
        })
        .collect();
    Ok(a.gx.trapezoid(&integrand))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_exact() {
        let g = Grid1D::new(257).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(256), 1.0);
        assert!((g.h() * 256.0 - 1.0).abs() < 1e-12);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        assert!(Grid1D::new(1).is_err());
    }

    #[test]
    fn tri_grid_contains_diagonal() {
        let t = TriGrid::new(5).unwrap();
        let nodes: Vec<_> = t.nodes().collect();
        assert_eq!(nodes.len(), t.node_count());
        assert!(nodes.iter().all(|&(a, b)| b <= a));
        for a in 0..5 {
            assert!(nodes.contains(&(a, a)));
        }
    }

    #[test]
    fn e_product_constant_v() {
        let g = Grid1D::new(3).unwrap();
        for n in [1, 3, 7] {
            let s = StateN::from_fn(n, &g, |_, _| 0.0, |_| 1.0);
            assert!((inner_product_e(&s, &s, &g).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn e_product_unit_channels() {
        let g = Grid1D::new(9).unwrap();
        let s = StateN::from_fn(4, &g, |_, _| 1.0, |_| 0.0);
        assert!((inner_product_e(&s, &s, &g).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn e_product_linear_v() {
        let g = Grid1D::new(257).unwrap();
        let s = StateN::from_fn(2, &g, |_, _| 0.0, |x| x);
        let val = inner_product_e(&s, &s, &g).unwrap();
        assert!((val - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn e_product_shape_mismatch() {
        let g = Grid1D::new(5).unwrap();
        let a = StateN::zeros(2, 5);
        let b = StateN::zeros(3, 5);
        let err = inner_product_e(&a, &b, &g).unwrap_err().to_string();
        assert!(err.contains("n=2") && err.contains("n=3"), "{err}");
        let c = StateN::zeros(2, 6);
        assert!(inner_product_e(&c, &c, &g).is_err());
    }

    #[test]
    fn lift_cells_are_right_closed() {
        let s = lift(&[1.0, 0.0]).unwrap();
        assert_eq!(s.eval(0.25), 1.0);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(0.75), 0.0);
        assert_eq!(s.eval(0.0), 1.0);
        assert_eq!(s.eval(1.0), 0.0);
        assert!(lift(&[]).is_err());
    }

    #[test]
    fn lift_norm() {
        let s = lift(&[3.0, 4.0]).unwrap();
        assert!((s.l2_norm_squared().sqrt() - 12.5f64.sqrt()).abs() < 1e-15);
        let c = lift(&[2.5; 6]).unwrap();
        assert!((0..=20).all(|k| c.eval(k as f64 / 20.0) == 2.5));
    }

    #[test]
    fn project_constant_and_linear() {
        assert_eq!(project(|_| 1.5, 4, 3).unwrap(), vec![1.5; 4]);
        let p = project(|y| y, 2, 64).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-10 && (p[1] - 0.75).abs() < 1e-10);
        assert!(project(|y| y, 0, 4).is_err());
    }

    #[test]
    fn ec_products() {
        let g = Grid1D::new(201).unwrap();
        let a = ContinuumTable::from_fn(&g, &g, |_, _| 0.0, |_| 1.0);
        assert!((inner_product_ec(&a, &a).unwrap() - 1.0).abs() < 1e-14);
        let b = ContinuumTable::from_fn(&g, &g, |_, _| 1.0, |_| 0.0);
        assert!((inner_product_ec(&b, &b).unwrap() - 1.0).abs() < 1e-14);
        let c = ContinuumTable::from_fn(&g, &g, |x, y| x * y, |_| 0.0);
        assert!((inner_product_ec(&c, &c).unwrap() - 1.0 / 9.0).abs() < 1e-4);
        let other = ContinuumTable::from_fn(&Grid1D::new(11).unwrap(), &g, |_, _| 0.0, |_| 0.0);
        assert!(inner_product_ec(&a, &other).is_err());
    }
}

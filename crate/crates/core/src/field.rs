//! Evaluable scalar fields on `[0, 1]` and on products of unit intervals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Func1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Func2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Func3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

const FD_STEP: f64 = 1e-6;

/// Samples `(x_k, values_k)` with linear interpolation, constant beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1 {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl Table1 {
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let t = Self { x, values };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::Empty("tabulated field has no samples"));
        }
        if self.x.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "tabulated field has {} abscissae but {} values",
                self.x.len(),
                self.values.len()
            )));
        }
        if !self.x.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "tabulated field abscissae must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let len = self.x.len();
        if len < 2 || x <= self.x[0] || x >= self.x[len - 1] {
            return None;
        }
        Some(self.x.partition_point(|&p| p <= x) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let len = self.x.len();
        match self.segment(x) {
            Some(k) => {
                let t = (x - self.x[k]) / (self.x[k + 1] - self.x[k]);
                self.values[k] * (1.0 - t) + self.values[k + 1] * t
            }
            None if x <= self.x[0] => self.values[0],
            None => self.values[len - 1],
        }
    }

    fn slope(&self, k: usize) -> f64 {
        (self.values[k + 1] - self.values[k]) / (self.x[k + 1] - self.x[k])
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let len = self.x.len();
        if len < 2 {
            return 0.0;
        }
        match self.segment(x) {
            Some(k) if x == self.x[k] && k > 0 => 0.5 * (self.slope(k - 1) + self.slope(k)),
            Some(k) => self.slope(k),
            None if x <= self.x[0] => self.slope(0),
            None => self.slope(len - 2),
        }
    }
}

/// Scalar field of one variable.
#[derive(Clone)]
pub enum Field1 {
    Constant(f64),
    Tabulated(Table1),
    Func(Func1),
}

impl fmt::Debug for Field1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field1::Constant(c) => write!(f, "Constant({c})"),
            Field1::Tabulated(t) => write!(f, "Tabulated({} samples)", t.x.len()),
            Field1::Func(_) => write!(f, "Func(..)"),
        }
    }
}

impl Field1 {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Field1::Func(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Field1::Constant(c) => *c,
            Field1::Tabulated(t) => t.eval(x),
            Field1::Func(f) => f(x),
        }
    }

    /// First derivative; central differences for closures (one-sided at the
    /// ends of `[0, 1]`).
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Field1::Constant(_) => 0.0,
            Field1::Tabulated(t) => t.derivative(x),
            Field1::Func(f) => central_difference(|s| f(s), x),
        }
    }
}

pub(crate) fn central_difference(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let lo = (x - FD_STEP).max(0.0);
    let hi = (x + FD_STEP).min(1.0);
    (f(hi) - f(lo)) / (hi - lo)
}

/// JSON form of a scalar field: a bare number or `{"x": [...], "values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Tabulated(Table1),
}

impl FieldSpec {
    pub fn into_field(self) -> Result<Field1> {
        match self {
            FieldSpec::Constant(c) => Ok(Field1::Constant(c)),
            FieldSpec::Tabulated(t) => {
                t.validate()?;
                Ok(Field1::Tabulated(t))
            }
        }
    }

    /// Samples an arbitrary field on `grid_points` as a table.
    pub fn tabulate(field: &Field1, grid_points: &[f64]) -> Self {
        match field {
            Field1::Constant(c) => FieldSpec::Constant(*c),
            Field1::Tabulated(t) => FieldSpec::Tabulated(t.clone()),
            Field1::Func(_) => FieldSpec::Tabulated(Table1 {
                x: grid_points.to_vec(),
                values: grid_points.iter().map(|&x| field.eval(x)).collect(),
            }),
        }
    }
}

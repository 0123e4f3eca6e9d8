//! Deterministic test functions on `[0,1]^d`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// `prod_i (1 + 10 (x_i - 1/4)^2)^-1`
    ProductPeak,
    /// `(1 + mean(x))^(-d-1)`
    CornerPeak,
    Rosenbrock,
    /// Two-dimensional.
    Franke,
    /// Eight-dimensional, unit cube mapped onto the physical input ranges.
    Borehole,
    /// Always returns the given value.
    Constant(f64),
}

/// `(lo, hi)` for `rw, r, Tu, Hu, Tl, Hl, L, Kw`.
const BOREHOLE_RANGES: [(f64, f64); 8] = [
    (0.05, 0.15),
    (100.0, 50000.0),
    (63070.0, 115600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12045.0),
];

impl TestFunction {
    pub const BUILTIN: [TestFunction; 5] = [
        TestFunction::ProductPeak,
        TestFunction::CornerPeak,
        TestFunction::Rosenbrock,
        TestFunction::Franke,
        TestFunction::Borehole,
    ];

    /// Accepts the names printed by `Display`, plus `constant:<value>`.
    pub fn from_name(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "product_peak" => TestFunction::ProductPeak,
            "corner_peak" => TestFunction::CornerPeak,
            "rosenbrock" => TestFunction::Rosenbrock,
            "franke" => TestFunction::Franke,
            "borehole" => TestFunction::Borehole,
            _ => match key.strip_prefix("constant:") {
                Some(v) => TestFunction::Constant(
                    v.trim().parse().map_err(|_| Error::UnknownFunction(name.to_string()))?,
                ),
                None => return Err(Error::UnknownFunction(name.to_string())),
            },
        })
    }

    /// Required input dimension, or `None` if any `d >= 1` works.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            TestFunction::Franke => Some(2),
            TestFunction::Borehole => Some(8),
            _ => None,
        }
    }

    pub fn check_dim(self, d: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(k) if k != d => Err(Error::Shape(format!("{self} takes {k} inputs, got {d}"))),
            _ if d == 0 => Err(Error::Shape("dimension must be at least 1".into())),
            _ => Ok(()),
        }
    }

    /// Evaluates at `x`; the caller is responsible for the dimension.
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestFunction::ProductPeak => x.iter().map(|&v| 1.0 / (1.0 + 10.0 * (v - 0.25).powi(2))).product(),
            TestFunction::CornerPeak => {
                let d = x.len() as f64;
                (1.0 + x.iter().sum::<f64>() / d).powf(-d - 1.0)
            }
            TestFunction::Rosenbrock => {
                let a: f64 = x.iter().map(|&v| (v - 1.0).powi(2)).sum();
                let b: f64 = x
                    .windows(2)
                    .map(|w| ((w[1] - 0.5) - 2.0 * (w[0] - 0.5).powi(2)).powi(2))
                    .sum();
                4.0 * a + 400.0 * b
            }
            TestFunction::Franke => {
                let (u, v) = (9.0 * x[0], 9.0 * x[1]);
                0.75 * (-(u - 2.0).powi(2) / 4.0 - (v - 2.0).powi(2) / 4.0).exp()
                    + 0.75 * (-(u + 1.0).powi(2) / 49.0 - (v + 1.0) / 10.0).exp()
                    + 0.5 * (-(u - 7.0).powi(2) / 4.0 - (v - 3.0).powi(2) / 4.0).exp()
                    - 0.2 * (-(u - 4.0).powi(2) - (v - 7.0).powi(2)).exp()
            }
            TestFunction::Borehole => {
                let p: Vec<f64> = x
                    .iter()
                    .zip(BOREHOLE_RANGES)
                    .map(|(&t, (lo, hi))| lo + t * (hi - lo))
                    .collect();
                let (rw, r, tu, hu, tl, hl, l, kw) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]);
                let lr = (r / rw).ln();
                2.0 * PI * tu * (hu - hl) / (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl))
            }
            TestFunction::Constant(c) => c,
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::ProductPeak => f.write_str("product_peak"),
            TestFunction::CornerPeak => f.write_str("corner_peak"),
            TestFunction::Rosenbrock => f.write_str("rosenbrock"),
            TestFunction::Franke => f.write_str("franke"),
            TestFunction::Borehole => f.write_str("borehole"),
            TestFunction::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

/// Looks `name` up and evaluates it at `x`.
pub fn eval_test_function(name: &str, x: &[f64]) -> Result<f64> {
    let f = TestFunction::from_name(name)?;
    f.check_dim(x.len())?;
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Shape("inputs must lie in [0,1]".into()));
    }
    Ok(f.eval(x))
}

//! Separable Matérn covariances and mean basis functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kron_linalg::{Cholesky, SquareMatrix};

/// Half-integer Matérn smoothness `nu = p + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
    SevenHalves,
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            x if x == 0.5 => Ok(Smoothness::Half),
            x if x == 1.5 => Ok(Smoothness::ThreeHalves),
            x if x == 2.5 => Ok(Smoothness::FiveHalves),
            x if x == 3.5 => Ok(Smoothness::SevenHalves),
            _ => Err(Error::UnsupportedSmoothness(nu)),
        }
    }

    pub fn nu(self) -> f64 {
        self.order() as f64 + 0.5
    }

    fn order(self) -> usize {
        match self {
            Smoothness::Half => 0,
            Smoothness::ThreeHalves => 1,
            Smoothness::FiveHalves => 2,
            Smoothness::SevenHalves => 3,
        }
    }

    /// Polynomial coefficients `c_k` such that the correlation at scaled
    /// distance `s = sqrt(2 nu) h` is `exp(-s) * sum_k c_k s^k`.
    fn coefficients(self) -> &'static [f64] {
        match self {
            Smoothness::Half => &[1.0],
            Smoothness::ThreeHalves => &[1.0, 1.0],
            Smoothness::FiveHalves => &[1.0, 1.0, 1.0 / 3.0],
            Smoothness::SevenHalves => &[1.0, 1.0, 0.4, 1.0 / 15.0],
        }
    }
}

/// One-dimensional Matérn covariance `variance * (R(|x - y| / phi) + nugget [x = y])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matern {
    pub smoothness: Smoothness,
    pub phi: f64,
    pub variance: f64,
    /// Added to the correlation at coincident inputs; 0 unless requested.
    #[serde(default)]
    pub nugget: f64,
}

impl Matern {
    /// Unit-variance (correlation) kernel.
    pub fn new(smoothness: Smoothness, phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::InvalidDesign(format!("lengthscale must be positive, got {phi}")));
        }
        Ok(Matern {
            smoothness,
            phi,
            variance: 1.0,
            nugget: 0.0,
        })
    }

    /// Diagonal nugget for badly conditioned component matrices. It is part of
    /// the kernel, so design points are still reproduced, but the prediction
    /// surface jumps there.
    pub fn with_nugget(mut self, nugget: f64) -> Result<Self> {
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(Error::InvalidDesign(format!("nugget must be nonnegative, got {nugget}")));
        }
        self.nugget = nugget;
        Ok(self)
    }

    pub fn with_variance(mut self, variance: f64) -> Self {
        self.variance = variance;
        self
    }

    pub fn correlation(&self, x: f64, y: f64) -> f64 {
        let s = (2.0 * self.smoothness.nu()).sqrt() * (x - y).abs() / self.phi;
        let poly = self
            .smoothness
            .coefficients()
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * s + c);
        let r = poly * (-s).exp();
        if x == y {
            r + self.nugget
        } else {
            r
        }
    }

    pub fn cov(&self, x: f64, y: f64) -> f64 {
        self.variance * self.correlation(x, y)
    }
}

/// Matérn correlation for `nu` in `{1/2, 3/2, 5/2, 7/2}` at inputs `x`, `y`.
pub fn matern_eval(nu: f64, phi: f64, x: f64, y: f64) -> Result<f64> {
    Ok(Matern::new(Smoothness::from_nu(nu)?, phi)?.correlation(x, y))
}

/// Covariance matrix of a one-dimensional kernel on `pts`; fails unless the
/// matrix admits a Cholesky factorization.
pub fn kernel_matrix(kernel: &Matern, pts: &[f64]) -> Result<SquareMatrix> {
    let n = pts.len();
    let mut m = SquareMatrix::zeros(n);
    for a in 0..n {
        for b in 0..=a {
            let v = kernel.cov(pts[a], pts[b]);
            m.set(a, b, v);
            m.set(b, a, v);
        }
    }
    Cholesky::new(&m)?;
    Ok(m)
}

/// Everything about a shared-lengthscale correlation except `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelShape {
    pub smoothness: Smoothness,
    pub nugget: f64,
}

impl KernelShape {
    pub fn new(smoothness: Smoothness, nugget: f64) -> Self {
        KernelShape { smoothness, nugget }
    }

    /// Unit-variance kernel in `d` dimensions with lengthscale `phi`.
    pub fn correlation_kernel(self, d: usize, phi: f64) -> Result<SeparableKernel> {
        SeparableKernel::isotropic(d, self.smoothness, phi, 1.0)?.with_nugget(self.nugget)
    }
}

impl From<Smoothness> for KernelShape {
    fn from(smoothness: Smoothness) -> Self {
        KernelShape::new(smoothness, 0.0)
    }
}

/// Product covariance `sigma2 * prod_i R_i(x_i, x'_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableKernel {
    components: Vec<Matern>,
    sigma2: f64,
}

impl SeparableKernel {
    /// Component variances are ignored; the overall scale is `sigma2`.
    pub fn new(components: Vec<Matern>, sigma2: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDesign("kernel needs at least one dimension".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidDesign(format!("sigma2 must be positive, got {sigma2}")));
        }
        let components = components.into_iter().map(|c| c.with_variance(1.0)).collect();
        Ok(SeparableKernel { components, sigma2 })
    }

    /// Same smoothness and lengthscale in every dimension.
    pub fn isotropic(d: usize, smoothness: Smoothness, phi: f64, sigma2: f64) -> Result<Self> {
        Self::new(vec![Matern::new(smoothness, phi)?; d], sigma2)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Unit-variance factor `R_i`.
    pub fn component(&self, i: usize) -> &Matern {
        &self.components[i]
    }

    pub fn components(&self) -> &[Matern] {
        &self.components
    }

    pub fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(a.iter().zip(b))
            .map(|(k, (&x, &y))| k.correlation(x, y))
            .product()
    }

    pub fn cov(&self, a: &[f64], b: &[f64]) -> f64 {
        self.sigma2 * self.correlation(a, b)
    }

    /// The same kernel with unit variance.
    pub fn as_correlation(&self) -> SeparableKernel {
        SeparableKernel {
            components: self.components.clone(),
            sigma2: 1.0,
        }
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<SeparableKernel> {
        Self::new(self.components.clone(), sigma2)
    }

    /// The same nugget on every component.
    pub fn with_nugget(&self, nugget: f64) -> Result<SeparableKernel> {
        let components = self
            .components
            .iter()
            .map(|c| c.with_nugget(nugget))
            .collect::<Result<Vec<_>>>()?;
        Self::new(components, self.sigma2)
    }

    /// Nugget of the first component; components share one unless built by hand.
    pub fn nugget(&self) -> f64 {
        self.components[0].nugget
    }
}

/// Basis functions `f_1, ..., f_p` for the regression mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MeanBasis {
    /// `p = 1`, `f_1 = 1`.
    #[default]
    Constant,
    /// `p = d + 1`, `f = (1, x_1, ..., x_d)`.
    Linear,
}

impl MeanBasis {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "constant" => Some(MeanBasis::Constant),
            "linear" => Some(MeanBasis::Linear),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeanBasis::Constant => "constant",
            MeanBasis::Linear => "linear",
        }
    }

    pub fn len(self, d: usize) -> usize {
        match self {
            MeanBasis::Constant => 1,
            MeanBasis::Linear => d + 1,
        }
    }

    pub fn eval(self, x: &[f64]) -> Vec<f64> {
        match self {
            MeanBasis::Constant => vec![1.0],
            MeanBasis::Linear => std::iter::once(1.0).chain(x.iter().copied()).collect(),
        }
    }

    /// Row-major `N x p` basis matrix `F`.
    pub fn design_matrix(self, points: &[Vec<f64>]) -> Vec<f64> {
        points.iter().flat_map(|x| self.eval(x)).collect()
    }

    /// `f(x)^T beta`.
    pub fn mean(self, x: &[f64], beta: &[f64]) -> f64 {
        self.eval(x).iter().zip(beta).map(|(f, b)| f * b).sum()
    }
}

//! Isotropic Matérn covariance for half-integer smoothness.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub nu: f64,
    pub kappa: f64,
    pub sigma2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Order {
    Half,
    ThreeHalves,
    FiveHalves,
    SevenHalves,
}

fn order_of(nu: f64) -> Option<Order> {
    [
        (0.5, Order::Half),
        (1.5, Order::ThreeHalves),
        (2.5, Order::FiveHalves),
        (3.5, Order::SevenHalves),
    ]
    .into_iter()
    .find(|(v, _)| (nu - v).abs() < 1e-12)
    .map(|(_, o)| o)
}

impl MaternParams {
    pub fn new(nu: f64, kappa: f64, sigma2: f64) -> Result<Self> {
        let p = MaternParams { nu, kappa, sigma2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if order_of(self.nu).is_none() {
            return Err(Error::UnsupportedNu(self.nu));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Validation plus the `nu > 2` requirement of boundary kernels.
    pub fn validate_boundary(&self) -> Result<()> {
        self.validate()?;
        if self.nu <= 2.0 {
            return Err(Error::NuTooSmall(self.nu));
        }
        Ok(())
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        MaternParams { sigma2, ..*self }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        MaternParams { kappa, ..*self }
    }

    fn order(&self) -> Order {
        order_of(self.nu).expect("validated smoothness")
    }

    /// `(p(a), p'(a), p''(a))` for the polynomial factor of `p(a)·e^{-a}`.
    fn poly(&self, a: f64) -> (f64, f64, f64) {
        match self.order() {
            Order::Half => (1.0, 0.0, 0.0),
            Order::ThreeHalves => (1.0 + a, 1.0, 0.0),
            Order::FiveHalves => (1.0 + a + a * a / 3.0, 1.0 + 2.0 * a / 3.0, 2.0 / 3.0),
            Order::SevenHalves => (
                1.0 + a + 0.4 * a * a + a * a * a / 15.0,
                1.0 + 0.8 * a + a * a / 5.0,
                0.8 + 0.4 * a,
            ),
        }
    }

    /// Covariance at distance `r ≥ 0`.
    pub fn eval_r(&self, r: f64) -> f64 {
        let a = self.kappa * r;
        self.sigma2 * self.poly(a).0 * (-a).exp()
    }

    /// `(k, dk/dh, d²k/dh²)` of the stationary kernel as a function of the signed lag.
    pub fn lag_derivatives(&self, h: f64) -> Result<(f64, f64, f64)> {
        if matches!(self.order(), Order::Half | Order::ThreeHalves) {
            return Err(Error::InvalidParameter(format!(
                "second lag derivative needs nu >= 2.5 (got {})",
                self.nu
            )));
        }
        Ok(self.lag_derivatives_unchecked(h))
    }

    pub(crate) fn lag_derivatives_unchecked(&self, h: f64) -> (f64, f64, f64) {
        let a = self.kappa * h.abs();
        let e = (-a).exp();
        let (p, dp, ddp) = self.poly(a);
        let k = self.sigma2 * p * e;
        let dk = self.sigma2 * self.kappa * h.signum() * (dp - p) * e;
        let dk = if h == 0.0 { 0.0 } else { dk };
        let ddk = self.sigma2 * self.kappa * self.kappa * (ddp - 2.0 * dp + p) * e;
        (k, dk, ddk)
    }

    /// Unnormalized spectral density `(κ² + ‖ω‖²)^{-(ν + d/2)}`.
    pub fn spectral_density(&self, omega: &[f64]) -> f64 {
        let w2: f64 = omega.iter().map(|w| w * w).sum();
        let alpha = self.nu + omega.len() as f64 / 2.0;
        (self.kappa * self.kappa + w2).powf(-alpha)
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn matern_eval(params: &MaternParams, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "points have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    params.validate()?;
    Ok(params.eval_r(distance(x, y)))
}

pub(crate) fn eval_points(params: &MaternParams, x: &[f64], y: &[f64]) -> f64 {
    params.eval_r(distance(x, y))
}

pub fn matern_cross_matrix<P: AsRef<[f64]>, R: AsRef<[f64]>>(
    params: &MaternParams,
    xs: &[P],
    ys: &[R],
) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
        eval_points(params, xs[i].as_ref(), ys[j].as_ref())
    })
}

pub fn matern_gram<P: AsRef<[f64]>>(params: &MaternParams, xs: &[P]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.sigma2;
        for j in 0..i {
            let v = eval_points(params, xs[i].as_ref(), xs[j].as_ref());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

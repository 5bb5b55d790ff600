//! Closed-form boundary Matérn kernels on `[0, 1]` and their tensor products.
//!
//! A boundary kernel removes from the free Matérn field `f` its harmonic
//! extension of boundary data: `f_B(x) = f(x) − Σ_e α_e(x)·B_e f`, where
//! `B_e f = a_e f(e) + b_e f'(e)` and each `α_e` solves `(κ² − ∂²)α = 0`
//! with `p_e α(e') + q_e α'(e') = δ_{ee'}`.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;
use crate::matern::MaternParams;
use crate::rng::SimRng;

const POLE_TOL: f64 = 1e-8;

/// Endpoint condition for a 1-D boundary kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Boundary1d {
    /// `f(0) = f(1) = 0`.
    Dirichlet,
    /// `f + c·f' = 0` at both endpoints, with `f'` the derivative along `x`.
    Robin { c: f64 },
    /// `f'(0) = f'(1) = 0`.
    Neumann,
    /// Kernel targeted by the reflected-path Robin estimator with constant
    /// coefficient `c`: boundary data `f(e)`, harmonic extension under
    /// `c·u − ∂_n u = 0` with `∂_n` the inward normal derivative.
    ReflectedPath { c: f64 },
}

impl Boundary1d {
    /// `((a, b), (p, q))` per endpoint: data functional and harmonic operator.
    fn endpoint_rows(&self) -> [((f64, f64), (f64, f64)); 2] {
        match *self {
            Boundary1d::Dirichlet => [((1.0, 0.0), (1.0, 0.0)); 2],
            Boundary1d::Robin { c } => [((1.0, c), (1.0, c)); 2],
            Boundary1d::Neumann => [((0.0, 1.0), (0.0, 1.0)); 2],
            Boundary1d::ReflectedPath { c } => [((1.0, 0.0), (c, -1.0)), ((1.0, 0.0), (c, 1.0))],
        }
    }

    /// Operator row `(α, β)` of `α·g + β·g' = 0` at each endpoint.
    pub(crate) fn operator_rows(&self) -> [(f64, f64); 2] {
        let r = self.endpoint_rows();
        [r[0].1, r[1].1]
    }
}

/// Precomputed harmonic extension for one boundary type and base kernel.
#[derive(Clone, Debug)]
pub struct Kernel1d {
    base: MaternParams,
    data: [(f64, f64); 2],
    /// Coefficients `(A, B)` of `α_e(x) = A e^{κx} + B e^{−κx}` for `e = 0, 1`.
    harmonic: [(f64, f64); 2],
    /// `Cov(B_e, B_e')`.
    s: [[f64; 2]; 2],
}

impl Kernel1d {
    pub fn new(base: MaternParams, boundary: Boundary1d) -> Result<Self> {
        base.validate_boundary()?;
        if let Boundary1d::Robin { c } | Boundary1d::ReflectedPath { c } = boundary {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!("Robin coefficient must be >= 0, got {c}")));
            }
        }
        if let Boundary1d::Robin { c } = boundary {
            let ck = c * base.kappa;
            if (1.0 - ck).abs() <= POLE_TOL || (1.0 + ck).abs() <= POLE_TOL {
                return Err(Error::RobinPole { c, kappa: base.kappa });
            }
        }
        let rows = boundary.endpoint_rows();
        let kappa = base.kappa;
        let ends = [0.0, 1.0];
        let m = Matrix2::from_fn(|r, col| {
            let (p, q) = rows[r].1;
            let e = ends[r];
            if col == 0 {
                (p + q * kappa) * (kappa * e).exp()
            } else {
                (p - q * kappa) * (-kappa * e).exp()
            }
        });
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Factorization("singular endpoint system".into()))?;
        let harmonic = [(inv[(0, 0)], inv[(1, 0)]), (inv[(0, 1)], inv[(1, 1)])];
        let data = [rows[0].0, rows[1].0];
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let (ai, bi) = data[i];
                let (aj, bj) = data[j];
                let (k, dk, ddk) = base.lag_derivatives_unchecked(ends[i] - ends[j]);
                // Cov(a f(e) + b f'(e), a' f(e') + b' f'(e')) for k(e − e').
                s[i][j] = ai * aj * k - ai * bj * dk + bi * aj * dk - bi * bj * ddk;
            }
        }
        Ok(Kernel1d {
            base,
            data,
            harmonic,
            s,
        })
    }

    fn alpha(&self, x: f64) -> [f64; 2] {
        let kx = self.base.kappa * x;
        let (ep, em) = (kx.exp(), (-kx).exp());
        [
            self.harmonic[0].0 * ep + self.harmonic[0].1 * em,
            self.harmonic[1].0 * ep + self.harmonic[1].1 * em,
        ]
    }

    /// `Cov(B_e, f(x))` for both endpoints.
    fn cross(&self, x: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (e, o) in out.iter_mut().enumerate() {
            let (k, dk, _) = self.base.lag_derivatives_unchecked(e as f64 - x);
            *o = self.data[e].0 * k + self.data[e].1 * dk;
        }
        out
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (ax, ay) = (self.alpha(x), self.alpha(y));
        let (cx, cy) = (self.cross(x), self.cross(y));
        let mut v = self.base.eval_r((x - y).abs());
        for e in 0..2 {
            v -= ax[e] * cy[e] + ay[e] * cx[e];
            for e2 in 0..2 {
                v += ax[e] * self.s[e][e2] * ay[e2];
            }
        }
        v
    }
}

/// The closed-form kernel under `f + c·f' = 0` at both endpoints (`c = 0` is Dirichlet).
pub fn bdry_matern_1d(base: &MaternParams, c: f64, x: f64, y: f64) -> Result<f64> {
    base.validate_boundary()?;
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("Robin coefficient must be >= 0, got {c}")));
    }
    let k = base.kappa;
    if (1.0 - c * k).abs() <= POLE_TOL || (1.0 + c * k).abs() <= POLE_TOL {
        return Err(Error::RobinPole { c, kappa: k });
    }
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(Error::OutsideUnitCube(vec![x, y]));
    }
    let d = |h: f64| base.lag_derivatives_unchecked(h);
    let k1 = |h: f64| {
        let (v, dv, _) = d(h);
        v - c * dv
    };
    let k2 = |h: f64| {
        let (v, _, ddv) = d(h);
        v - c * c * ddv
    };
    let (sh, ch) = (k.sinh(), k.cosh());
    let (m, p) = (1.0 - c * k, 1.0 + c * k);
    let hp = |x: f64, y: f64| {
        0.5 / sh
            * (k1(x - 1.0) * ((k * y).exp() / p - (-k * y).exp() / m)
                + k1(x) * ((k * (1.0 - y)).exp() / m - (-k * (1.0 - y)).exp() / p))
    };
    let s = 1.0 - x - y;
    let hh = ((ch * k2(0.0) - k2(1.0)) * ((k * s).exp() / (2.0 * m * m) + (-k * s).exp() / (2.0 * p * p))
        + (ch * k2(1.0) - k2(0.0)) * (k * (x - y)).cosh() / (m * p))
        / (sh * sh);
    Ok(base.eval_r((x - y).abs()) - hp(x, y) - hp(y, x) + hh)
}

/// Parameters of the product kernel `σ²·∏_l k_l(x_l, y_l)` with unit-variance factors.
#[derive(Clone, Debug)]
pub struct TensorParams {
    pub base: MaternParams,
    pub boundaries: Vec<Boundary1d>,
}

#[derive(Clone, Debug)]
pub struct TensorKernel {
    sigma2: f64,
    factors: Vec<Kernel1d>,
}

impl TensorKernel {
    pub fn new(params: &TensorParams) -> Result<Self> {
        if params.boundaries.is_empty() {
            return Err(Error::InvalidParameter("tensor kernel needs d >= 1".into()));
        }
        let unit = params.base.with_sigma2(1.0);
        let factors = params
            .boundaries
            .iter()
            .map(|b| Kernel1d::new(unit, *b))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorKernel {
            sigma2: params.base.sigma2,
            factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        TensorKernel {
            sigma2,
            factors: self.factors.clone(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut v = self.sigma2;
        for (l, f) in self.factors.iter().enumerate() {
            v *= f.eval(x[l], y[l]);
            if v == 0.0 {
                break;
            }
        }
        v
    }
}

pub fn tensor_kernel_eval(params: &TensorParams, x: &[f64], y: &[f64]) -> Result<f64> {
    let d = params.boundaries.len();
    if x.len() != d || y.len() != d {
        return Err(Error::InvalidParameter(format!(
            "tensor kernel of dimension {d} evaluated at points of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    for v in x.iter().chain(y) {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::OutsideUnitCube(x.to_vec()));
        }
    }
    Ok(TensorKernel::new(params)?.eval(x, y))
}

/// Draws a zero-mean path of the 1-D boundary kernel on `grid`.
///
/// Nodes with prior variance below `1e-12·σ²` are pinned to zero; the rest are
/// drawn through a Cholesky factor with jitter escalating from `1e-10·σ²` to `1e-6·σ²`.
pub fn sample_path_1d(
    base: &MaternParams,
    boundary: Boundary1d,
    grid: &[f64],
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if grid.len() > 2000 {
        return Err(Error::InvalidParameter("path grids are limited to 2000 nodes".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    let kern = Kernel1d::new(*base, boundary)?;
    let live: Vec<usize> = (0..grid.len())
        .filter(|&i| kern.eval(grid[i], grid[i]) > 1e-12 * base.sigma2)
        .collect();
    let n = live.len();
    let mut out = vec![0.0; grid.len()];
    if n == 0 {
        return Ok(out);
    }
    let gram = DMatrix::from_fn(n, n, |i, j| kern.eval(grid[live[i]], grid[live[j]]));
    let (chol, _) = cholesky_with_jitter(&gram, 1e-10 * base.sigma2, 1e-6 * base.sigma2)?;
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let f = chol.l() * z;
    for (i, &g) in live.iter().enumerate() {
        out[g] = f[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn base(kappa: f64) -> MaternParams {
        MaternParams::new(2.5, kappa, 1.0).unwrap()
    }

    #[test]
    fn dirichlet_trace_vanishes() {
        for kappa in [1.0, 5.0] {
            for i in 0..=20 {
                let y = i as f64 / 20.0;
                assert!(bdry_matern_1d(&base(kappa), 0.0, 0.0, y).unwrap().abs() < 1e-12);
                assert!(bdry_matern_1d(&base(kappa), 0.0, 1.0, y).unwrap().abs() < 1e-12);
                let k = Kernel1d::new(base(kappa), Boundary1d::Dirichlet).unwrap();
                assert!(k.eval(0.0, y).abs() < 1e-12 && k.eval(1.0, y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_agrees_with_harmonic_engine() {
        for nu in [2.5, 3.5] {
            for (kappa, c) in [(1.0, 0.0), (1.0, 10.0), (5.0, 0.0), (5.0, 10.0), (3.0, 0.05)] {
                let p = MaternParams::new(nu, kappa, 1.7).unwrap();
                let k = Kernel1d::new(p, Boundary1d::Robin { c }).unwrap();
                for i in 0..=10 {
                    for j in 0..=10 {
                        let (x, y) = (i as f64 / 10.0, j as f64 / 10.0);
                        let a = bdry_matern_1d(&p, c, x, y).unwrap();
                        let b = k.eval(x, y);
                        assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{nu} {kappa} {c} {x} {y}: {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn frozen_values() {
        // Independent evaluation of the closed form in double precision.
        let v = bdry_matern_1d(&base(1.0), 0.0, 0.5, 0.5).unwrap();
        assert!((v - 0.027_465_809_072_723).abs() < 1e-12, "{v}");
        let v = bdry_matern_1d(&base(1.0), 10.0, 0.3, 0.7).unwrap();
        assert!((v - 1.998_275_775_491_008).abs() < 1e-10, "{v}");
        let k = Kernel1d::new(base(1.0), Boundary1d::ReflectedPath { c: 10.0 }).unwrap();
        assert!((k.eval(0.3, 0.7) - 0.818).abs() < 1e-3);
        assert!((k.eval(0.3, 0.3) - 0.840).abs() < 1e-3);
    }

    #[test]
    fn robin_trace_identity() {
        for (kappa, c) in [(1.0, 10.0), (5.0, 0.5), (2.0, 3.0)] {
            let p = base(kappa);
            for i in 2..=8 {
                let y = i as f64 / 10.0;
                let s = 1e-5;
                for (e, sign) in [(0.0, 1.0), (1.0, -1.0)] {
                    let f = |x: f64| bdry_matern_1d(&p, c, x, y).unwrap();
                    // One-sided second-order difference at the endpoint.
                    let d = sign * (-3.0 * f(e) + 4.0 * f(e + sign * s) - f(e + 2.0 * sign * s)) / (2.0 * s);
                    assert!((f(e) + c * d).abs() < 1e-4 * kappa, "kappa {kappa} c {c} y {y} e {e}");
                }
            }
        }
    }

    #[test]
    fn neumann_derivative_vanishes() {
        let k = Kernel1d::new(base(5.0), Boundary1d::Neumann).unwrap();
        let s = 1e-5;
        for i in 1..10 {
            let y = i as f64 / 10.0;
            let d0 = (-3.0 * k.eval(0.0, y) + 4.0 * k.eval(s, y) - k.eval(2.0 * s, y)) / (2.0 * s);
            let d1 = (3.0 * k.eval(1.0, y) - 4.0 * k.eval(1.0 - s, y) + k.eval(1.0 - 2.0 * s, y)) / (2.0 * s);
            assert!(d0.abs() < 1e-4 && d1.abs() < 1e-4);
        }
        // Neumann is the large-c limit of the Robin family.
        let big = Kernel1d::new(base(5.0), Boundary1d::Robin { c: 1e7 }).unwrap();
        assert!((big.eval(0.2, 0.9) - k.eval(0.2, 0.9)).abs() < 1e-5);
    }

    #[test]
    fn robin_reduces_to_dirichlet() {
        let p = base(2.0);
        let mut worst: f64 = 0.0;
        for i in 0..=20 {
            for j in 0..=20 {
                let (x, y) = (i as f64 / 20.0, j as f64 / 20.0);
                let a = bdry_matern_1d(&p, 1e-6, x, y).unwrap();
                let b = bdry_matern_1d(&p, 0.0, x, y).unwrap();
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-4);
    }

    #[test]
    fn pole_and_small_nu_rejected() {
        assert!(matches!(bdry_matern_1d(&base(2.0), 0.5, 0.1, 0.2), Err(Error::RobinPole { .. })));
        let p = MaternParams::new(1.5, 1.0, 1.0).unwrap();
        assert!(matches!(bdry_matern_1d(&p, 0.0, 0.1, 0.2), Err(Error::NuTooSmall(_))));
    }

    #[test]
    fn reflected_path_kernel_tends_to_matern_for_large_c() {
        let k = Kernel1d::new(base(1.0), Boundary1d::ReflectedPath { c: 1e8 }).unwrap();
        assert!((k.eval(0.2, 0.6) - base(1.0).eval_r(0.4)).abs() < 1e-6);
    }

    #[test]
    fn tensor_examples() {
        let p = TensorParams {
            base: base(2.0),
            boundaries: vec![Boundary1d::Dirichlet; 30],
        };
        let mut x = vec![0.4; 30];
        x[0] = 0.0;
        assert_eq!(tensor_kernel_eval(&p, &x, &[0.5; 30]).unwrap(), 0.0);

        let p2 = TensorParams {
            base: MaternParams::new(2.5, 2.0, 1.5).unwrap(),
            boundaries: vec![Boundary1d::Dirichlet, Boundary1d::Robin { c: 3.0 }],
        };
        let v = tensor_kernel_eval(&p2, &[0.2, 0.7], &[0.6, 0.1]).unwrap();
        let u = base(2.0);
        let a = bdry_matern_1d(&u, 0.0, 0.2, 0.6).unwrap();
        let b = bdry_matern_1d(&u, 3.0, 0.7, 0.1).unwrap();
        assert!((v - 1.5 * a * b).abs() < 1e-12);
    }

    #[test]
    fn tensor_gram_is_psd() {
        use rand::Rng;
        let mut rng = seeded(12);
        let p = TensorParams {
            base: base(3.0),
            boundaries: vec![Boundary1d::Dirichlet; 3],
        };
        let tk = TensorKernel::new(&p).unwrap();
        let pts: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let g = DMatrix::from_fn(25, 25, |i, j| tk.eval(&pts[i], &pts[j]));
        assert!(crate::linalg::min_eigenvalue(&g) > -1e-10 * g.trace());
    }

    #[test]
    fn sampled_paths() {
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let p = MaternParams::new(2.5, 5.0, 2.0).unwrap();
        let f = sample_path_1d(&p, Boundary1d::Dirichlet, &grid, &mut seeded(1)).unwrap();
        let sd = p.sigma2.sqrt();
        assert!(f[0].abs() <= 1e-6 * sd && f[200].abs() <= 1e-6 * sd);
        let g = sample_path_1d(&p, Boundary1d::Dirichlet, &grid, &mut seeded(1)).unwrap();
        assert_eq!(f, g);

        let n = sample_path_1d(&p, Boundary1d::Neumann, &grid, &mut seeded(2)).unwrap();
        let h = grid[1];
        let slopes: Vec<f64> = n.windows(2).map(|w| ((w[1] - w[0]) / h).abs()).collect();
        let mut sorted = slopes[1..].to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let typical = sorted[sorted.len() / 2];
        assert!(slopes[0] <= 3.0 * typical, "{} vs {}", slopes[0], typical);
    }

    proptest! {
        #[test]
        fn symmetric(x in 0.0f64..=1.0, y in 0.0f64..=1.0, c in 0.0f64..20.0, kappa in 0.5f64..8.0) {
            prop_assume!((1.0 - c * kappa).abs() > 1e-3);
            let p = base(kappa);
            let a = bdry_matern_1d(&p, c, x, y).unwrap();
            let b = bdry_matern_1d(&p, c, y, x).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

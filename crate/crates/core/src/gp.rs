//! Gaussian-process regression over plain, FEM and tensor kernels, with
//! marginal likelihood and a deterministic maximum-likelihood search.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::FemKernel;
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::matern::{eval_points, MaternParams};
use crate::tensor_kernel::TensorKernel;
use crate::Point;

/// Nugget used when none is given, relative to the kernel variance.
pub const DEFAULT_NUGGET_REL: f64 = 1e-8;
const MIN_SEPARATION: f64 = 1e-8;

#[derive(Clone, Debug)]
pub enum KernelHandle {
    Matern(MaternParams),
    /// `σ²·∏_l k(|x_l − y_l|)` with unit-variance 1-D Matérn factors.
    ProductMatern(MaternParams),
    Fem(Arc<FemKernel>),
    Tensor(TensorKernel),
}

impl KernelHandle {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(match self {
            KernelHandle::Matern(p) => eval_points(p, x, y),
            KernelHandle::ProductMatern(p) => {
                let unit = p.with_sigma2(1.0);
                x.iter().zip(y).fold(p.sigma2, |acc, (a, b)| acc * unit.eval_r((a - b).abs()))
            }
            KernelHandle::Fem(f) => f.eval(x, y)?,
            KernelHandle::Tensor(t) => t.eval(x, y),
        })
    }

    /// Scale of `k(x,x)`: σ² or the FEM variance multiplier.
    pub fn variance(&self) -> f64 {
        match self {
            KernelHandle::Matern(p) | KernelHandle::ProductMatern(p) => p.sigma2,
            KernelHandle::Fem(f) => f.variance_scale(),
            KernelHandle::Tensor(t) => t.sigma2(),
        }
    }

    pub fn with_variance(&self, v: f64) -> Self {
        match self {
            KernelHandle::Matern(p) => KernelHandle::Matern(p.with_sigma2(v)),
            KernelHandle::ProductMatern(p) => KernelHandle::ProductMatern(p.with_sigma2(v)),
            KernelHandle::Fem(f) => KernelHandle::Fem(Arc::new(f.with_variance_scale(v))),
            KernelHandle::Tensor(t) => KernelHandle::Tensor(t.with_sigma2(v)),
        }
    }

    pub fn cross<P: AsRef<[f64]>, R: AsRef<[f64]>>(&self, xs: &[P], ys: &[R]) -> Result<DMatrix<f64>> {
        if let KernelHandle::Fem(f) = self {
            return crate::fem::fem_cross_matrix(f, xs, ys);
        }
        let mut m = DMatrix::zeros(xs.len(), ys.len());
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                m[(i, j)] = self.eval(x.as_ref(), y.as_ref())?;
            }
        }
        Ok(m)
    }

    pub fn gram<P: AsRef<[f64]>>(&self, xs: &[P]) -> Result<DMatrix<f64>> {
        let mut g = match self {
            KernelHandle::Fem(f) => crate::fem::fem_gram(f, xs)?,
            _ => self.cross(xs, xs)?,
        };
        symmetrize(&mut g);
        Ok(g)
    }
}

pub type MeanFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MeanSpec {
    Zero,
    /// Known constant, or `None` to estimate it by generalized least squares.
    Constant(Option<f64>),
    User(MeanFn),
}

impl fmt::Debug for MeanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanSpec::Zero => write!(f, "Zero"),
            MeanSpec::Constant(c) => write!(f, "Constant({c:?})"),
            MeanSpec::User(_) => write!(f, "User(..)"),
        }
    }
}

#[derive(Clone)]
enum FittedMean {
    Zero,
    Constant(f64),
    User(MeanFn),
}

impl FittedMean {
    fn at(&self, x: &[f64]) -> f64 {
        match self {
            FittedMean::Zero => 0.0,
            FittedMean::Constant(c) => *c,
            FittedMean::User(f) => f(x),
        }
    }
}

#[derive(Clone)]
pub struct GPModel {
    kernel: KernelHandle,
    mean: FittedMean,
    nugget: f64,
    x: Vec<Point>,
    y: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl fmt::Debug for GPModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GPModel")
            .field("kernel", &self.kernel)
            .field("mean", &self.mean_constant())
            .field("nugget", &self.nugget)
            .field("n", &self.x.len())
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Number of variances raised from below zero.
    pub clamped: usize,
}

/// Structured summary of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSummary {
    pub n: usize,
    pub variance: f64,
    pub nugget: f64,
    pub mean_constant: Option<f64>,
    pub log_likelihood: f64,
    pub min_pivot: f64,
}

fn check_distinct(x: &[Point]) -> Result<()> {
    for i in 0..x.len() {
        for j in 0..i {
            let d2: f64 = x[i].iter().zip(x[j].iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() <= MIN_SEPARATION {
                return Err(Error::DuplicatePoints(j, i));
            }
        }
    }
    Ok(())
}

fn factor(mut k: DMatrix<f64>, nugget: f64) -> Result<Cholesky<f64, Dyn>> {
    for i in 0..k.nrows() {
        k[(i, i)] += nugget;
    }
    let probe = k.clone();
    Cholesky::new(k).ok_or_else(|| {
        Error::Factorization(format!(
            "Gram matrix plus nugget {nugget:e} is not positive definite (min eigenvalue {:e}); raise the nugget",
            min_eigenvalue(&probe)
        ))
    })
}

pub fn fit(kernel: KernelHandle, mean: MeanSpec, x: Vec<Point>, y: Vec<f64>, nugget: f64) -> Result<GPModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidParameter(format!("{} points but {} responses", x.len(), y.len())));
    }
    if !(nugget >= 0.0) {
        return Err(Error::InvalidParameter(format!("nugget must be >= 0, got {nugget}")));
    }
    check_distinct(&x)?;
    let chol = factor(kernel.gram(&x)?, nugget)?;
    let mean = match mean {
        MeanSpec::Zero => FittedMean::Zero,
        MeanSpec::Constant(Some(c)) => FittedMean::Constant(c),
        MeanSpec::Constant(None) => {
            let ones = DVector::from_element(x.len(), 1.0);
            let kinv1 = chol.solve(&ones);
            FittedMean::Constant(kinv1.dot(&DVector::from_column_slice(&y)) / kinv1.sum())
        }
        MeanSpec::User(f) => FittedMean::User(f),
    };
    let resid = DVector::from_iterator(y.len(), x.iter().zip(&y).map(|(p, v)| v - mean.at(p)));
    let alpha = chol.solve(&resid);
    Ok(GPModel {
        kernel,
        mean,
        nugget,
        x,
        y,
        chol,
        alpha,
    })
}

impl GPModel {
    pub fn kernel(&self) -> &KernelHandle {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn mean_constant(&self) -> Option<f64> {
        match self.mean {
            FittedMean::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn predict<P: AsRef<[f64]>>(&self, xnew: &[P]) -> Result<Prediction> {
        let kx = self.kernel.cross(xnew, &self.x)?;
        let mut mean = Vec::with_capacity(xnew.len());
        let mut variance = Vec::with_capacity(xnew.len());
        let mut clamped = 0;
        for (i, p) in xnew.iter().enumerate() {
            let row = kx.row(i).transpose();
            mean.push(self.mean.at(p.as_ref()) + row.dot(&self.alpha));
            let v = self.kernel.eval(p.as_ref(), p.as_ref())? - row.dot(&self.chol.solve(&row));
            if v < 0.0 {
                clamped += 1;
                variance.push(0.0);
            } else {
                variance.push(v);
            }
        }
        Ok(Prediction {
            mean,
            variance,
            clamped,
        })
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.x.len() as f64;
        let resid = DVector::from_iterator(self.y.len(), self.x.iter().zip(&self.y).map(|(p, v)| v - self.mean.at(p)));
        let logdet: f64 = self.chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        -0.5 * resid.dot(&self.alpha) - 0.5 * logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    pub fn summary(&self) -> ModelSummary {
        let diag = self.chol.l_dirty().diagonal();
        ModelSummary {
            n: self.n(),
            variance: self.kernel.variance(),
            nugget: self.nugget,
            mean_constant: self.mean_constant(),
            log_likelihood: self.log_marginal_likelihood(),
            min_pivot: diag.iter().fold(f64::INFINITY, |a, b| a.min(b * b)),
        }
    }
}

/// Log-grid plus refinement settings for the inverse length-scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleSearch {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub grid: usize,
    pub max_evals: usize,
    /// Nugget relative to σ², so that the profiled σ² is exact.
    pub nugget_rel: f64,
}

impl Default for MleSearch {
    fn default() -> Self {
        MleSearch {
            kappa_lo: 0.1,
            kappa_hi: 100.0,
            grid: 20,
            max_evals: 200,
            nugget_rel: DEFAULT_NUGGET_REL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleResult {
    pub kappa: f64,
    pub sigma2: f64,
    pub log_likelihood: f64,
    pub evals: usize,
    /// Best objective after each evaluation; nonincreasing.
    pub trace: Vec<f64>,
    pub model: GPModel,
}

/// `σ̂² = rᵀK₀⁻¹r / n` for the unit-variance Gram `K₀`; returns `(σ̂², profile log-likelihood)`.
///
/// When the mean reproduces the data exactly, σ̂² is floored at `1e-12` times
/// the mean square of `y` (or `1e-12` for all-zero data).
pub fn profile_sigma2(unit: &KernelHandle, mean: &MeanSpec, x: &[Point], y: &[f64], nugget_rel: f64) -> Result<(f64, f64)> {
    let m = fit(unit.clone(), mean.clone(), x.to_vec(), y.to_vec(), nugget_rel)?;
    let n = y.len() as f64;
    let resid = DVector::from_iterator(y.len(), x.iter().zip(y).map(|(p, v)| v - m.mean.at(p)));
    let scale = y.iter().map(|v| v * v).sum::<f64>() / n;
    let floor = 1e-12 * if scale > 0.0 { scale } else { 1.0 };
    let sigma2 = (resid.dot(&m.alpha) / n).max(floor);
    let logdet: f64 = m.chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let ll = -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() - 0.5 * logdet - 0.5 * n;
    Ok((sigma2, ll))
}

/// Relative nuggets tried when the nugget is chosen by likelihood.
pub const NUGGET_GRID: [f64; 7] = [1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1];

/// Best `(nugget_rel, σ̂², log-likelihood)` of a fixed unit kernel over `nuggets`.
pub fn profile_nugget(
    unit: &KernelHandle,
    mean: &MeanSpec,
    x: &[Point],
    y: &[f64],
    nuggets: &[f64],
) -> Result<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &nr in nuggets {
        match profile_sigma2(unit, mean, x, y, nr) {
            Ok((s2, ll)) if ll.is_finite() && best.is_none_or(|b| ll > b.2) => best = Some((nr, s2, ll)),
            Ok(_) => {}
            Err(e) => log::debug!("nugget {nr:e}: {e}"),
        }
    }
    best.ok_or(Error::MleFailed)
}

/// Fits the unit kernel with σ² and the nugget chosen by likelihood.
pub fn fit_profiled(unit: &KernelHandle, mean: &MeanSpec, x: &[Point], y: &[f64], nuggets: &[f64]) -> Result<GPModel> {
    let (nr, s2, _) = profile_nugget(unit, mean, x, y, nuggets)?;
    fit(unit.with_variance(s2), mean.clone(), x.to_vec(), y.to_vec(), nr * s2)
}

/// [`mle_fit`] repeated over relative nuggets, keeping the most likely.
pub fn mle_fit_nuggets(
    family: &dyn Fn(f64) -> Result<KernelHandle>,
    mean: &MeanSpec,
    x: &[Point],
    y: &[f64],
    search: &MleSearch,
    nuggets: &[f64],
) -> Result<MleResult> {
    let mut best: Option<MleResult> = None;
    for &nr in nuggets {
        let s = MleSearch {
            nugget_rel: nr,
            ..*search
        };
        match mle_fit(family, mean, x, y, &s) {
            Ok(r) if best.as_ref().is_none_or(|b| r.log_likelihood > b.log_likelihood) => best = Some(r),
            Ok(_) => {}
            Err(e) => log::debug!("nugget {nr:e}: {e}"),
        }
    }
    best.ok_or(Error::MleFailed)
}

/// Maximizes the profile likelihood over `κ`; `family(κ)` returns the unit-variance kernel.
pub fn mle_fit(
    family: &dyn Fn(f64) -> Result<KernelHandle>,
    mean: &MeanSpec,
    x: &[Point],
    y: &[f64],
    search: &MleSearch,
) -> Result<MleResult> {
    if !(search.kappa_lo > 0.0 && search.kappa_hi > search.kappa_lo && search.kappa_hi.is_finite()) {
        return Err(Error::InvalidParameter("kappa bounds must satisfy 0 < lo < hi < inf".into()));
    }
    let (llo, lhi) = (search.kappa_lo.ln(), search.kappa_hi.ln());
    let mut trace = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    let objective = |lk: f64, best: &mut Option<(f64, f64, f64)>, trace: &mut Vec<f64>| {
        let lk = lk.clamp(llo, lhi);
        let val = family(lk.exp()).and_then(|k| profile_sigma2(&k, mean, x, y, search.nugget_rel));
        match val {
            Ok((s2, ll)) if ll.is_finite() && s2 > 0.0 => {
                if best.is_none_or(|b| -ll < -b.2) {
                    *best = Some((lk, s2, ll));
                }
            }
            Ok(_) => {}
            Err(e) => log::debug!("kappa {:.4}: {e}", lk.exp()),
        }
        trace.push(best.map_or(f64::INFINITY, |b| -b.2));
    };
    let g = search.grid.max(2);
    let step0 = (lhi - llo) / (g - 1) as f64;
    for i in 0..g {
        objective(llo + step0 * i as f64, &mut best, &mut trace);
    }
    let mut step = step0 / 2.0;
    while trace.len() + 2 <= search.max_evals && step > 1e-6 {
        let centre = best.ok_or(Error::MleFailed)?;
        objective(centre.0 - step, &mut best, &mut trace);
        objective(centre.0 + step, &mut best, &mut trace);
        if best.map(|b| b.0) == Some(centre.0) {
            step /= 2.0;
        }
    }
    let (lk, sigma2, log_likelihood) = best.ok_or(Error::MleFailed)?;
    let kappa = lk.exp();
    let kernel = family(kappa)?.with_variance(sigma2);
    let model = fit(kernel, mean.clone(), x.to_vec(), y.to_vec(), search.nugget_rel * sigma2)?;
    Ok(MleResult {
        kappa,
        sigma2,
        log_likelihood,
        evals: trace.len(),
        trace,
        model,
    })
}

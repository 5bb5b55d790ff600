//! Coupled Monte-Carlo estimates of boundary Matérn kernel matrices.
//!
//! Every inducing point gets exactly one boundary simulation, which is reused
//! in every matrix entry of its row and column. Each estimate is then a Gram
//! matrix of signed measures `δ_u − (boundary mass)` under the Matérn kernel,
//! so it is symmetric positive semidefinite by construction.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::brownian::{
    local_time_profile, simulate_hitting, simulate_reflected_with_local_time, HittingSample, SimConfig,
};
use crate::domain::{Domain, Point, TOL_GEOM};
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::matern::{eval_points, MaternParams};
use crate::rng::{child, SimRng};

const MIN_SEPARATION: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundaryType {
    Dirichlet,
    /// `c·f − ∂_n f = 0` with constant `c ≥ 0` (inward normal derivative).
    Robin { c: f64 },
}

/// Boundary mass of one inducing point: `(location, weight)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMass {
    pub atoms: Vec<(Point, f64)>,
}

#[derive(Clone, Debug)]
pub enum PointSample {
    Hitting(HittingSample),
    Reflected(BoundaryMass),
}

#[derive(Clone, Debug)]
pub struct CoupledSampleSet {
    pub points: Vec<Point>,
    pub samples: Vec<PointSample>,
    pub boundary_type: BoundaryType,
    pub kappa: f64,
}

impl CoupledSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Boundary mass of point `i`: the exit point weighted by `e^{-κ²τ}` for
    /// Dirichlet samples, the pooled contact events for Robin samples.
    fn mass(&self, i: usize, kappa: f64) -> Vec<(&[f64], f64)> {
        match &self.samples[i] {
            PointSample::Hitting(h) => vec![(
                &h.exit_location.location[..],
                (-kappa * kappa * h.exit_time).exp(),
            )],
            PointSample::Reflected(m) => m.atoms.iter().map(|(p, w)| (&p[..], *w)).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoupledKernelMatrix {
    pub matrix: DMatrix<f64>,
    pub params: MaternParams,
}

impl CoupledKernelMatrix {
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }
}

fn check_points(domain: &Domain, points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::BadInducingPoints("at least one point is required".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if !domain.contains(p)? || domain.distance_to_boundary(p)? <= TOL_GEOM {
            return Err(Error::BadInducingPoints(format!("point {i} is not strictly interior")));
        }
    }
    for i in 0..points.len() {
        for j in 0..i {
            let d2: f64 = points[i].iter().zip(points[j].iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() <= MIN_SEPARATION {
                return Err(Error::BadInducingPoints(format!("points {j} and {i} coincide")));
            }
        }
    }
    Ok(())
}

/// Simulates one boundary functional per point. Robin contact events are
/// pooled within `config.boundary_layer` before storage.
pub fn build_coupled_samples(
    domain: &Domain,
    points: &[Point],
    boundary_type: BoundaryType,
    kappa: f64,
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<CoupledSampleSet> {
    check_points(domain, points)?;
    config.validate(domain)?;
    let root: u64 = rng.random();
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut prng = child(root, i as u64);
            match boundary_type {
                BoundaryType::Dirichlet => Ok(PointSample::Hitting(simulate_hitting(domain, p, config, &mut prng)?)),
                BoundaryType::Robin { c } => {
                    if !(c >= 0.0) {
                        return Err(Error::InvalidParameter(format!("Robin coefficient must be >= 0, got {c}")));
                    }
                    let coef = move |_: &[f64]| c;
                    let f = simulate_reflected_with_local_time(domain, p, kappa, &coef, config, &mut prng)?;
                    Ok(PointSample::Reflected(BoundaryMass {
                        atoms: f.pooled(domain, config.boundary_layer),
                    }))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoupledSampleSet {
        points: points.to_vec(),
        samples,
        boundary_type,
        kappa,
    })
}

fn assemble(samples: &CoupledSampleSet, params: &MaternParams) -> Result<CoupledKernelMatrix> {
    params.validate_boundary()?;
    let m = samples.len();
    let masses: Vec<Vec<(&[f64], f64)>> = (0..m).map(|i| samples.mass(i, params.kappa)).collect();
    // Correction vectors c_i(u_j) = Σ_a k(a, u_j)·w_a.
    let cross = DMatrix::from_fn(m, m, |i, j| {
        masses[i]
            .iter()
            .map(|(a, w)| eval_points(params, a, &samples.points[j]) * w)
            .sum::<f64>()
    });
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let mut bb = 0.0;
            for (a, wa) in &masses[i] {
                for (b, wb) in &masses[j] {
                    bb += eval_points(params, a, b) * wa * wb;
                }
            }
            let v = eval_points(params, &samples.points[i], &samples.points[j]) - cross[(j, i)] - cross[(i, j)] + bb;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(CoupledKernelMatrix {
        matrix: k,
        params: *params,
    })
}

/// `K_ij = k(u_i,u_j) − k(u_i,W_j)e^{-κ²τ_j} − k(W_i,u_j)e^{-κ²τ_i} + k(W_i,W_j)e^{-κ²(τ_i+τ_j)}`.
pub fn coupled_matrix_dirichlet(samples: &CoupledSampleSet, params: &MaternParams) -> Result<CoupledKernelMatrix> {
    if samples.boundary_type != BoundaryType::Dirichlet {
        return Err(Error::InvalidParameter("Dirichlet assembly needs hitting samples".into()));
    }
    assemble(samples, params)
}

/// Event-sum analogue of the Dirichlet formula over pooled contact events.
pub fn coupled_matrix_robin(samples: &CoupledSampleSet, params: &MaternParams) -> Result<CoupledKernelMatrix> {
    if samples.boundary_type == BoundaryType::Dirichlet {
        return Err(Error::InvalidParameter("Robin assembly needs reflected samples".into()));
    }
    assemble(samples, params)
}

/// Either assembly, chosen by the sample set's boundary type.
pub fn coupled_matrix(samples: &CoupledSampleSet, params: &MaternParams) -> Result<CoupledKernelMatrix> {
    assemble(samples, params)
}

/// Average of independent coupled estimates on the same points (still PSD).
pub fn average_coupled(mats: &[CoupledKernelMatrix]) -> Result<CoupledKernelMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to average".into()))?;
    let mut sum = first.matrix.clone();
    for m in &mats[1..] {
        sum += &m.matrix;
    }
    Ok(CoupledKernelMatrix {
        matrix: sum / mats.len() as f64,
        params: first.params,
    })
}

/// One draw of the uncoupled four-term estimator with independent paths from `x` and `y`.
pub fn naive_entry_dirichlet(
    domain: &Domain,
    params: &MaternParams,
    x: &[f64],
    y: &[f64],
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<f64> {
    params.validate_boundary()?;
    let hx = simulate_hitting(domain, x, config, rng)?;
    let hy = simulate_hitting(domain, y, config, rng)?;
    let k2 = params.kappa * params.kappa;
    let (wx, wy) = ((-k2 * hx.exit_time).exp(), (-k2 * hy.exit_time).exp());
    let (bx, by) = (&hx.exit_location.location, &hy.exit_location.location);
    Ok(eval_points(params, x, y) - eval_points(params, x, by) * wy - eval_points(params, bx, y) * wx
        + eval_points(params, bx, by) * wx * wy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobinDiagnostic {
    pub t: Vec<f64>,
    /// Estimated `sup_x E[L_t]`.
    pub estimate: Vec<f64>,
    /// `(1 − e^{-1})·κ·√t`.
    pub bound: Vec<f64>,
    pub satisfied: Vec<bool>,
    /// `bound − estimate`.
    pub margin: Vec<f64>,
}

impl RobinDiagnostic {
    pub fn any_satisfied(&self) -> bool {
        self.satisfied.iter().any(|s| *s)
    }
}

pub const DIAGNOSTIC_PATHS: usize = 200;

/// Compares the local-time estimate with `(1 − e^{-1})κ√t` on each `t`, using
/// one set of paths for the whole grid.
pub fn robin_condition_diagnostic(
    domain: &Domain,
    kappa: f64,
    t_grid: &[f64],
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<RobinDiagnostic> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("t_grid must be nonempty".into()));
    }
    if t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidParameter("t_grid entries must be positive".into()));
    }
    let estimate = local_time_profile(domain, t_grid, DIAGNOSTIC_PATHS, config, rng);
    let c = 1.0 - (-1.0f64).exp();
    let bound: Vec<f64> = t_grid.iter().map(|t| c * kappa * t.sqrt()).collect();
    let margin: Vec<f64> = bound.iter().zip(&estimate).map(|(b, e)| b - e).collect();
    Ok(RobinDiagnostic {
        t: t_grid.to_vec(),
        satisfied: margin.iter().map(|m| *m > 0.0).collect(),
        estimate,
        bound,
        margin,
    })
}

/// The positive-definiteness gate: the condition checked at `t = 1/κ²`.
pub fn robin_gate(domain: &Domain, kappa: f64, config: &SimConfig, rng: &mut SimRng) -> Result<RobinDiagnostic> {
    robin_condition_diagnostic(domain, kappa, &[1.0 / (kappa * kappa)], config, rng)
}

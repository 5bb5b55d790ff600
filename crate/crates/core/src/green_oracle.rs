//! Finite-difference Green's function of `κ² − ∂²` on `[0, 1]` and the
//! double-quadrature boundary kernel `∫∫ G(x,s) k_{ν−2}(s,u) G(u,y) ds du`.
//!
//! Used as an independent brute-force check of the closed-form kernels.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{solve_tridiagonal, symmetrize};
use crate::matern::{matern_gram, MaternParams};
use crate::tensor_kernel::Boundary1d;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D {
    pub nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 201 {
            return Err(Error::InvalidParameter(format!("oracle grids need at least 201 nodes, got {n}")));
        }
        let h = 1.0 / (n - 1) as f64;
        Ok(Grid1D {
            nodes: (0..n).map(|i| i as f64 * h).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.nodes.len() - 1) as f64
    }
}

/// Tridiagonal system `T g = R φ` for `(κ² − ∂²) g = φ` with boundary rows
/// `α g + β g' = 0`; the third entry of each one-sided boundary stencil is
/// eliminated with the adjacent interior row.
struct System {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    /// Extra right-hand-side couplings `R[0,1]` and `R[N−1,N−2]`.
    r_first: f64,
    r_last: f64,
}

fn system(kappa: f64, boundary: Boundary1d, n: usize) -> Result<System> {
    if let Boundary1d::ReflectedPath { .. } = boundary {
        return Err(Error::InvalidParameter(
            "the finite-difference oracle covers Dirichlet, Robin and Neumann rows".into(),
        ));
    }
    let h = 1.0 / (n - 1) as f64;
    let h2 = h * h;
    let mut lower = vec![-1.0 / h2; n];
    let mut diag = vec![kappa * kappa + 2.0 / h2; n];
    let mut upper = vec![-1.0 / h2; n];
    let [(a0, b0), (a1, b1)] = boundary.operator_rows();
    let kh2 = kappa * kappa * h2;
    diag[0] = a0 - b0 / h;
    upper[0] = b0 / (2.0 * h) * (2.0 - kh2);
    lower[0] = 0.0;
    diag[n - 1] = a1 + b1 / h;
    lower[n - 1] = b1 / (2.0 * h) * (kh2 - 2.0);
    upper[n - 1] = 0.0;
    Ok(System {
        lower,
        diag,
        upper,
        r_first: -b0 * h / 2.0,
        r_last: b1 * h / 2.0,
    })
}

/// `A = T⁻¹R`, so that `A φ ≈ ∫ G(·, s) φ(s) ds` on the grid.
fn solution_operator(kappa: f64, boundary: Boundary1d, n: usize) -> Result<DMatrix<f64>> {
    let sys = system(kappa, boundary, n)?;
    let mut a = DMatrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    for j in 1..n - 1 {
        rhs.iter_mut().for_each(|v| *v = 0.0);
        rhs[j] = 1.0;
        if j == 1 {
            rhs[0] = sys.r_first;
        }
        if j == n - 2 {
            rhs[n - 1] = sys.r_last;
        }
        let col = solve_tridiagonal(&sys.lower, &sys.diag, &sys.upper, &rhs)?;
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("singular boundary-value system".into()));
        }
        a.column_mut(j).copy_from_slice(&col);
    }
    Ok(a)
}

/// Discrete Green's function `G ≈ (T⁻¹R)/h`, symmetrized.
pub fn green_function_1d(kappa: f64, boundary: Boundary1d, grid: &Grid1D) -> Result<DMatrix<f64>> {
    let mut g = solution_operator(kappa, boundary, grid.len())? / grid.spacing();
    symmetrize(&mut g);
    Ok(g)
}

/// Variance of the order-`ν − 2` base field whose doubly smoothed version has variance `σ²`.
fn base_variance(params: &MaternParams) -> Result<f64> {
    let ratio = if (params.nu - 2.5).abs() < 1e-12 {
        8.0 / 3.0
    } else if (params.nu - 3.5).abs() < 1e-12 {
        8.0 / 5.0
    } else {
        return Err(Error::UnsupportedNu(params.nu));
    };
    Ok(params.sigma2 * params.kappa.powi(4) * ratio)
}

fn base_gram(params: &MaternParams, grid: &Grid1D) -> Result<DMatrix<f64>> {
    params.validate()?;
    let base = MaternParams::new(params.nu - 2.0, params.kappa, base_variance(params)?)?;
    let pts: Vec<[f64; 1]> = grid.nodes.iter().map(|&x| [x]).collect();
    Ok(matern_gram(&base, &pts))
}

/// Numeric boundary kernel on the full grid.
pub fn bdry_kernel_1d_numeric(
    params: &MaternParams,
    boundary: Boundary1d,
    grid: &Grid1D,
) -> Result<DMatrix<f64>> {
    let idx: Vec<usize> = (0..grid.len()).collect();
    bdry_kernel_1d_numeric_at(params, boundary, grid, &idx)
}

/// Numeric boundary kernel restricted to the grid nodes `idx`.
pub fn bdry_kernel_1d_numeric_at(
    params: &MaternParams,
    boundary: Boundary1d,
    grid: &Grid1D,
    idx: &[usize],
) -> Result<DMatrix<f64>> {
    let k = base_gram(params, grid)?;
    let a = solution_operator(params.kappa, boundary, grid.len())?;
    let rows = a.select_rows(idx);
    let mut out = &rows * k * rows.transpose();
    symmetrize(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_kernel::bdry_matern_1d;

    #[test]
    fn small_grids_rejected() {
        assert!(Grid1D::new(200).is_err());
    }

    #[test]
    fn dirichlet_green_vanishes_at_endpoints() {
        let grid = Grid1D::new(201).unwrap();
        let g = green_function_1d(2.0, Boundary1d::Dirichlet, &grid).unwrap();
        assert!(g.row(0).amax() == 0.0 && g.row(200).amax() == 0.0);
        assert!(g.column(0).amax() == 0.0 && g.column(200).amax() == 0.0);
    }

    #[test]
    fn green_inverts_the_operator() {
        let grid = Grid1D::new(2001).unwrap();
        let kappa = 2.0;
        let g = green_function_1d(kappa, Boundary1d::Dirichlet, &grid).unwrap();
        let h = grid.spacing();
        let phi = nalgebra::DVector::from_iterator(grid.len(), grid.nodes.iter().map(|x| (std::f64::consts::PI * x).sin()));
        let u = &g * &phi * h;
        let pi2 = std::f64::consts::PI.powi(2);
        let mut worst: f64 = 0.0;
        for i in 1..grid.len() - 1 {
            let lu = kappa * kappa * u[i] - (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (h * h);
            worst = worst.max((lu - phi[i]).abs());
            assert!((u[i] - phi[i] / (kappa * kappa + pi2)).abs() < 1e-5);
        }
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn large_kappa_matches_whole_line_green() {
        let grid = Grid1D::new(1001).unwrap();
        let kappa = 50.0;
        let g = green_function_1d(kappa, Boundary1d::Dirichlet, &grid).unwrap();
        for off in [20, 40, 60] {
            let x = (off as f64) * grid.spacing();
            let exact = (-kappa * x).exp() / (2.0 * kappa);
            let v = g[(500, 500 + off)];
            assert!((v - exact).abs() < 0.1 * exact, "offset {off}: {v} vs {exact}");
        }
    }

    #[test]
    fn numeric_kernel_properties() {
        let grid = Grid1D::new(201).unwrap();
        let p = MaternParams::new(2.5, 3.0, 1.0).unwrap();
        let k = bdry_kernel_1d_numeric(&p, Boundary1d::Dirichlet, &grid).unwrap();
        let max = k.amax();
        assert!(k.row(0).amax() <= 1e-8 * max && k.row(200).amax() <= 1e-8 * max);
        assert!(crate::linalg::min_eigenvalue(&k) > -1e-10 * k.trace());
        assert!(matches!(
            bdry_kernel_1d_numeric(&MaternParams::new(1.5, 1.0, 1.0).unwrap(), Boundary1d::Dirichlet, &grid),
            Err(Error::UnsupportedNu(_))
        ));
    }

    #[test]
    fn self_convergence_at_midpoint() {
        let p = MaternParams::new(2.5, 1.0, 1.0).unwrap();
        let coarse = bdry_kernel_1d_numeric_at(&p, Boundary1d::Dirichlet, &Grid1D::new(1001).unwrap(), &[500]).unwrap();
        let fine = bdry_kernel_1d_numeric_at(&p, Boundary1d::Dirichlet, &Grid1D::new(2001).unwrap(), &[1000]).unwrap();
        assert!((coarse[(0, 0)] - fine[(0, 0)]).abs() <= 1e-3);
    }

    #[test]
    fn oracle_matches_closed_form_for_both_smoothness_orders() {
        let grid = Grid1D::new(1001).unwrap();
        let idx: Vec<usize> = (0..=10).map(|i| i * 100).collect();
        for nu in [2.5, 3.5] {
            for (kappa, c) in [(1.0, 0.0), (2.0, 4.0)] {
                let p = MaternParams::new(nu, kappa, 1.0).unwrap();
                let b = if c == 0.0 { Boundary1d::Dirichlet } else { Boundary1d::Robin { c } };
                let num = bdry_kernel_1d_numeric_at(&p, b, &grid, &idx).unwrap();
                for (a, &i) in idx.iter().enumerate() {
                    for (bb, &j) in idx.iter().enumerate() {
                        let exact = bdry_matern_1d(&p, c, grid.nodes[i], grid.nodes[j]).unwrap();
                        assert!((num[(a, bb)] - exact).abs() < 1e-3, "nu {nu} kappa {kappa} c {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn neumann_oracle_matches_harmonic_engine() {
        let grid = Grid1D::new(1001).unwrap();
        let idx = [0, 250, 500, 1000];
        let p = MaternParams::new(2.5, 5.0, 1.0).unwrap();
        let num = bdry_kernel_1d_numeric_at(&p, Boundary1d::Neumann, &grid, &idx).unwrap();
        let k = crate::tensor_kernel::Kernel1d::new(p, Boundary1d::Neumann).unwrap();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let exact = k.eval(grid.nodes[i], grid.nodes[j]);
                assert!((num[(a, b)] - exact).abs() < 1e-3);
            }
        }
    }
}

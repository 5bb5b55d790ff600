//! Finite-element regression of an estimated kernel matrix onto a tensor
//! cardinal B-spline basis, giving a kernel that can be evaluated anywhere.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bdry_kernel::{build_coupled_samples, coupled_matrix, BoundaryType, CoupledKernelMatrix};
use crate::brownian::SimConfig;
use crate::domain::{Domain, DomainError, DomainSpec, Point, TOL_GEOM};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::matern::MaternParams;
use crate::rng::SimRng;

const MAGIC: &[u8; 4] = b"BDMF";
const FORMAT_VERSION: u32 = 1;
const RIDGE: f64 = 1e-10;
/// Relative column mass below which a basis function is left out of the fit.
pub const DEFAULT_PRUNE: f64 = 1e-2;
/// Largest value `recommended_m` returns.
pub const M_CAP: usize = 1 << 24;

/// Cardinal B-spline of order `s`: the `(s+1)`-fold convolution of `1_{[0,1)}`.
pub fn bspline_1d(s: usize, x: f64) -> f64 {
    if !(0.0..(s + 1) as f64).contains(&x) {
        return 0.0;
    }
    // Cox-de Boor on integer knots, evaluated bottom-up on the s+1 unit cells.
    let cell = x.floor() as usize;
    let mut n = vec![0.0; s + 1];
    n[cell] = 1.0;
    for k in 1..=s {
        for i in 0..=(s - k) {
            let t = x - i as f64;
            n[i] = (t * n[i] + (k as f64 + 1.0 - t) * n[i + 1]) / k as f64;
        }
    }
    n[0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub s: usize,
    pub zeta: u32,
    pub d: usize,
}

impl BSplineBasis {
    pub fn new(s: usize, zeta: u32, d: usize) -> Result<Self> {
        if s == 0 || d == 0 {
            return Err(Error::InvalidParameter("B-spline order and dimension must be positive".into()));
        }
        if zeta > 20 {
            return Err(Error::InvalidParameter(format!("degree {zeta} is too large")));
        }
        let b = BSplineBasis { s, zeta, d };
        if (b.per_dim() as f64).powi(d as i32) > u32::MAX as f64 {
            return Err(Error::InvalidParameter("basis size overflows".into()));
        }
        Ok(b)
    }

    /// Smallest order exceeding `ν + d/2 + 1/2`.
    pub fn default_order(nu: f64, d: usize) -> usize {
        (nu + d as f64 / 2.0 + 0.5).floor() as usize + 1
    }

    /// Index count per dimension, `2^ζ + s + 1`.
    pub fn per_dim(&self) -> usize {
        (1usize << self.zeta) + self.s + 1
    }

    pub fn q(&self) -> usize {
        self.per_dim().pow(self.d as u32)
    }

    /// Nonzero bound `(2s)^d` for a single basis vector.
    pub fn nonzero_bound(&self) -> usize {
        (2 * self.s).pow(self.d as u32)
    }

    /// Nonzero 1-D factors at unit coordinate `x`: `(slot, value)` with slot = j + s.
    fn factors_1d(&self, x: f64) -> Vec<(usize, f64)> {
        let scale = (1u64 << self.zeta) as f64;
        let t = x * scale;
        let s = self.s as i64;
        let top = (1i64 << self.zeta).min(t.floor() as i64);
        ((top - s).max(-s)..=top)
            .filter_map(|j| {
                let v = bspline_1d(self.s, t - j as f64);
                (v != 0.0).then_some(((j + s) as usize, v))
            })
            .collect()
    }

    /// Sparse `Φ(x)` for `x ∈ [0,1]^d`, as `(flat index, value)` sorted by index.
    pub fn basis_vector(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.d {
            return Err(DomainError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            }
            .into());
        }
        if x.iter().any(|v| !(-TOL_GEOM..=1.0 + TOL_GEOM).contains(v)) {
            return Err(Error::OutsideUnitCube(x.to_vec()));
        }
        let per = self.per_dim();
        let mut out = vec![(0usize, 1.0)];
        // Dimension 0 is the most significant digit of the flat index.
        for &xl in x {
            let f = self.factors_1d(xl.clamp(0.0, 1.0));
            out = out
                .iter()
                .flat_map(|&(i, a)| f.iter().map(move |&(k, b)| (i * per + k, a * b)))
                .collect();
        }
        Ok(out)
    }

    fn multi_index(&self, mut q: usize) -> Vec<usize> {
        let per = self.per_dim();
        let mut idx = vec![0; self.d];
        for l in (0..self.d).rev() {
            idx[l] = q % per;
            q /= per;
        }
        idx
    }

    /// Whether the supports of basis functions `a` and `b` overlap.
    pub fn supports_overlap(&self, a: usize, b: usize) -> bool {
        self.multi_index(a)
            .iter()
            .zip(self.multi_index(b))
            .all(|(i, j)| i.abs_diff(j) <= self.s)
    }
}

/// `ζ = ⌊log₂ m / (2ν + 2d)⌋`.
pub fn choose_degree(m: usize, nu: f64, d: usize) -> u32 {
    ((m.max(1) as f64).log2() / (2.0 * nu + 2.0 * d as f64)).floor() as u32
}

/// `⌈n^{(2ν+d)/d}⌉`, capped at [`M_CAP`].
pub fn recommended_m(n: usize, nu: f64, d: usize) -> usize {
    let v = (n as f64).powf((2.0 * nu + d as f64) / d as f64);
    // Round before the ceiling so exact integer powers are not bumped up.
    let r = (v * (1.0 - 1e-12)).ceil();
    if r > M_CAP as f64 {
        log::warn!("recommended inducing count {v:.3e} capped at {M_CAP}");
        return M_CAP;
    }
    r as usize
}

/// Affine map of a box onto `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rescale {
    pub fn from_domain(domain: &Domain) -> Self {
        let (lo, hi) = domain.bounding_box();
        Rescale {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.lo.len() {
            return Err(DomainError::DimensionMismatch {
                expected: self.lo.len(),
                got: x.len(),
            }
            .into());
        }
        let u: Vec<f64> = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| (v - a) / (b - a))
            .collect();
        if u.iter().any(|v| !(-TOL_GEOM..=1.0 + TOL_GEOM).contains(v)) {
            return Err(DomainError::Outside(x.to_vec()).into());
        }
        Ok(u.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }
}

/// Symmetric sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&(c as u32)) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    fn from_triples(n: usize, triples: &[(u32, u32, f64)]) -> Self {
        let mut row_ptr = vec![0; n + 1];
        for &(r, _, _) in triples {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr {
            row_ptr,
            cols: triples.iter().map(|t| t.1).collect(),
            vals: triples.iter().map(|t| t.2).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FemKernel {
    basis: BSplineBasis,
    coeffs: Csr,
    rescale: Rescale,
    domain: Option<DomainSpec>,
    variance_scale: f64,
}

/// Evaluation result with the number of coefficients read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountedEval {
    pub value: f64,
    pub touches: usize,
}

/// [`fit_fem_kernel_with`] at the default pruning level.
pub fn fit_fem_kernel(
    basis: BSplineBasis,
    domain: &Domain,
    points: &[Point],
    khat: &CoupledKernelMatrix,
) -> Result<FemKernel> {
    fit_fem_kernel_with(basis, domain, points, khat, DEFAULT_PRUNE)
}

/// `M = Φ⁺ K̂ Φ⁺ᵀ` with the ridge pseudo-inverse `Φ⁺ = (ΦᵀΦ + λI)⁻¹Φᵀ`,
/// `λ = 10⁻¹⁰·tr(ΦᵀΦ)`, symmetrized.
///
/// Basis functions whose squared mass over the inducing points is below
/// `prune` times the largest one are left out of the fit.
pub fn fit_fem_kernel_with(
    basis: BSplineBasis,
    domain: &Domain,
    points: &[Point],
    khat: &CoupledKernelMatrix,
    prune: f64,
) -> Result<FemKernel> {
    let m = points.len();
    if m == 0 || khat.matrix.nrows() != m || khat.matrix.ncols() != m {
        return Err(Error::InvalidParameter(format!(
            "kernel matrix is {}x{} for {m} points",
            khat.matrix.nrows(),
            khat.matrix.ncols()
        )));
    }
    if domain.dim() != basis.d {
        return Err(DomainError::DimensionMismatch {
            expected: basis.d,
            got: domain.dim(),
        }
        .into());
    }
    let rescale = Rescale::from_domain(domain);
    let q = basis.q();
    let mut phi = DMatrix::zeros(m, q);
    for (i, p) in points.iter().enumerate() {
        for (j, v) in basis.basis_vector(&rescale.to_unit(p)?)? {
            phi[(i, j)] = v;
        }
    }
    if prune > 0.0 {
        let mass: Vec<f64> = (0..q).map(|j| phi.column(j).norm_squared()).collect();
        let max = mass.iter().cloned().fold(0.0, f64::max);
        for j in 0..q {
            if mass[j] < prune * max {
                phi.column_mut(j).fill(0.0);
            }
        }
    }
    let mut gram = phi.transpose() * &phi;
    let lambda = RIDGE * gram.trace();
    for i in 0..q {
        gram[(i, i)] += lambda;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Factorization("basis matrix collapsed beyond the ridge; add inducing points".into()))?;
    let pinv = chol.solve(&phi.transpose());
    let mut full = &pinv * &khat.matrix * pinv.transpose();
    symmetrize(&mut full);
    let mut triples = Vec::new();
    for r in 0..q {
        for c in 0..q {
            if full[(r, c)] != 0.0 {
                triples.push((r as u32, c as u32, full[(r, c)]));
            }
        }
    }
    Ok(FemKernel {
        basis,
        coeffs: Csr::from_triples(q, &triples),
        rescale,
        domain: domain.spec().cloned(),
        variance_scale: 1.0,
    })
}

impl FemKernel {
    pub fn basis(&self) -> BSplineBasis {
        self.basis
    }

    pub fn rescale(&self) -> &Rescale {
        &self.rescale
    }

    pub fn domain_spec(&self) -> Option<&DomainSpec> {
        self.domain.as_ref()
    }

    pub fn q(&self) -> usize {
        self.basis.q()
    }

    pub fn stored_entries(&self) -> usize {
        self.coeffs.vals.len()
    }

    pub fn variance_scale(&self) -> f64 {
        self.variance_scale
    }

    /// Same kernel with the variance multiplier set to `scale`.
    pub fn with_variance_scale(&self, scale: f64) -> Self {
        FemKernel {
            variance_scale: scale,
            ..self.clone()
        }
    }

    /// Copy keeping only coefficients of basis pairs with overlapping supports.
    /// The full projection is dense, so this can cost definiteness.
    pub fn truncated_to_overlap(&self) -> Self {
        let q = self.q();
        let mut triples = Vec::new();
        for r in 0..q {
            for k in self.coeffs.row_ptr[r]..self.coeffs.row_ptr[r + 1] {
                let c = self.coeffs.cols[k];
                if self.basis.supports_overlap(r, c as usize) {
                    triples.push((r as u32, c, self.coeffs.vals[k]));
                }
            }
        }
        FemKernel {
            coeffs: Csr::from_triples(q, &triples),
            ..self.clone()
        }
    }

    /// Sparse `Φ(x)` of a point in domain coordinates.
    pub fn features(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        self.basis.basis_vector(&self.rescale.to_unit(x)?)
    }

    fn contract(&self, fx: &[(usize, f64)], fy: &[(usize, f64)]) -> CountedEval {
        let mut value = 0.0;
        for &(i, a) in fx {
            for &(j, b) in fy {
                value += a * b * self.coeffs.get(i, j);
            }
        }
        CountedEval {
            value: value * self.variance_scale,
            touches: fx.len() * fy.len(),
        }
    }

    pub fn eval_counted(&self, x: &[f64], y: &[f64]) -> Result<CountedEval> {
        Ok(self.contract(&self.features(x)?, &self.features(y)?))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.eval_counted(x, y)?.value)
    }

    /// Dense `Q×Q` coefficient matrix, including the variance scale.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let q = self.q();
        let mut m = DMatrix::zeros(q, q);
        for r in 0..q {
            for k in self.coeffs.row_ptr[r]..self.coeffs.row_ptr[r + 1] {
                m[(r, self.coeffs.cols[k] as usize)] = self.coeffs.vals[k] * self.variance_scale;
            }
        }
        m
    }

    /// Binary layout, little endian:
    /// `"BDMF"`, version u32, s u32, ζ u32, d u32, domain JSON (u64 length + bytes),
    /// `lo`/`hi` (d f64 each), variance scale f64, entry count u64, then
    /// `(row u32, col u32, value f64)` sorted by `(row, col)`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let spec = self.domain.as_ref().ok_or(DomainError::NotSerializable)?;
        let json = serde_json::to_vec(spec).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        for v in [FORMAT_VERSION, self.basis.s as u32, self.basis.zeta, self.basis.d as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for v in self.rescale.lo.iter().chain(&self.rescale.hi) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.variance_scale.to_le_bytes())?;
        w.write_all(&(self.coeffs.vals.len() as u64).to_le_bytes())?;
        for r in 0..self.q() {
            for k in self.coeffs.row_ptr[r]..self.coeffs.row_ptr[r + 1] {
                w.write_all(&(r as u32).to_le_bytes())?;
                w.write_all(&self.coeffs.cols[k].to_le_bytes())?;
                w.write_all(&self.coeffs.vals[k].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        if read_u32(r)? != FORMAT_VERSION {
            return Err(Error::Format("unsupported version".into()));
        }
        let basis = BSplineBasis::new(read_u32(r)? as usize, read_u32(r)?, read_u32(r)? as usize)
            .map_err(|e| Error::Format(e.to_string()))?;
        let len = read_u64(r)? as usize;
        if len > 1 << 20 {
            return Err(Error::Format("domain descriptor too long".into()));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let spec: DomainSpec = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        let lo = (0..basis.d).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let hi = (0..basis.d).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let variance_scale = read_f64(r)?;
        let q = basis.q();
        let nnz = read_u64(r)? as usize;
        if nnz > q * q {
            return Err(Error::Format("entry count exceeds Q²".into()));
        }
        let mut triples = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let (row, col, val) = (read_u32(r)?, read_u32(r)?, read_f64(r)?);
            if row as usize >= q || col as usize >= q {
                return Err(Error::Format("coefficient index out of range".into()));
            }
            if let Some(&(pr, pc, _)) = triples.last() {
                if (pr, pc) >= (row, col) {
                    return Err(Error::Format("coefficients not sorted".into()));
                }
            }
            triples.push((row, col, val));
        }
        Ok(FemKernel {
            basis,
            coeffs: Csr::from_triples(q, &triples),
            rescale: Rescale { lo, hi },
            domain: Some(spec),
            variance_scale,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn eval_fem_kernel(femk: &FemKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    femk.eval(x, y)
}

pub fn fem_cross_matrix<P: AsRef<[f64]>, R: AsRef<[f64]>>(femk: &FemKernel, xs: &[P], ys: &[R]) -> Result<DMatrix<f64>> {
    let fx = xs.iter().map(|x| femk.features(x.as_ref())).collect::<Result<Vec<_>>>()?;
    let fy = ys.iter().map(|y| femk.features(y.as_ref())).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| femk.contract(&fx[i], &fy[j]).value))
}

/// Gram matrix; requires `Q > |X|`.
pub fn fem_gram<P: AsRef<[f64]>>(femk: &FemKernel, xs: &[P]) -> Result<DMatrix<f64>> {
    if femk.q() <= xs.len() {
        log::warn!("Q = {} does not exceed n = {}", femk.q(), xs.len());
        return Err(Error::TooFewElements {
            q: femk.q(),
            n: xs.len(),
        });
    }
    let mut g = fem_cross_matrix(femk, xs, xs)?;
    symmetrize(&mut g);
    Ok(g)
}

/// Settings of the full pipeline: inducing points, coupled estimate, projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemBuildSpec {
    pub params: MaternParams,
    pub boundary: BoundaryType,
    /// Inducing count; ignored when `points` is given.
    pub m: usize,
    pub order: Option<usize>,
    pub zeta: Option<u32>,
    pub points: Option<Vec<Point>>,
    /// Dirichlet only: boundary points added to the fit with zero kernel rows,
    /// which is what the coupled estimator returns for a path started on the boundary.
    #[serde(default)]
    pub boundary_anchors: usize,
    #[serde(default)]
    pub prune: Option<f64>,
}

/// Samples inducing points, estimates the coupled matrix and projects it.
pub fn build_fem_kernel(
    domain: &Domain,
    spec: &FemBuildSpec,
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<FemKernel> {
    let d = domain.dim();
    let points = match &spec.points {
        Some(p) => p.clone(),
        None => domain.sample_uniform(spec.m, rng)?,
    };
    let s = spec.order.unwrap_or_else(|| BSplineBasis::default_order(spec.params.nu, d));
    let zeta = spec.zeta.unwrap_or_else(|| choose_degree(points.len(), spec.params.nu, d));
    let basis = BSplineBasis::new(s, zeta, d)?;
    let samples = build_coupled_samples(domain, &points, spec.boundary, spec.params.kappa, config, rng)?;
    let mut khat = coupled_matrix(&samples, &spec.params)?;
    let mut points = points;
    if spec.boundary_anchors > 0 {
        if spec.boundary != BoundaryType::Dirichlet {
            return Err(Error::InvalidParameter("boundary anchors need a Dirichlet boundary".into()));
        }
        let m = points.len();
        points.extend(domain.boundary_points(spec.boundary_anchors).into_iter().map(|b| b.location));
        let mut padded = DMatrix::zeros(points.len(), points.len());
        padded.view_mut((0, 0), (m, m)).copy_from(&khat.matrix);
        khat.matrix = padded;
    }
    fit_fem_kernel_with(basis, domain, &points, &khat, spec.prune.unwrap_or(DEFAULT_PRUNE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn spline_values() {
        assert_eq!(bspline_1d(0, 0.5), 1.0);
        assert_eq!(bspline_1d(1, 0.5), 0.5);
        assert_eq!(bspline_1d(1, 1.0), 1.0);
        assert!((bspline_1d(2, 1.5) - 0.75).abs() < 1e-15);
        assert_eq!(bspline_1d(3, -0.1), 0.0);
        assert_eq!(bspline_1d(3, 4.0), 0.0);
    }

    #[test]
    fn spline_matches_numeric_convolution() {
        // N_s = N_{s-1} * N_0 on a fine grid.
        let h = 1e-4;
        let grid: Vec<f64> = (0..40_000).map(|i| i as f64 * h).collect();
        for s in 1..=4 {
            for x in [0.3, 1.7, 2.2, 3.9] {
                let conv: f64 = grid
                    .iter()
                    .filter(|t| **t < 1.0)
                    .map(|t| bspline_1d(s - 1, x - t - h / 2.0) * h)
                    .sum();
                assert!((conv - bspline_1d(s, x)).abs() < 1e-4, "s {s} x {x}");
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..=1.0, y in 0.0f64..=1.0, s in 1usize..6, zeta in 0u32..4) {
            let b = BSplineBasis::new(s, zeta, 2).unwrap();
            let v = b.basis_vector(&[x, y]).unwrap();
            let sum: f64 = v.iter().map(|e| e.1).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(v.len() <= b.nonzero_bound());
            prop_assert!(v.iter().all(|e| e.1 > 0.0 && e.0 < b.q()));
        }

        #[test]
        fn spline_nonnegative_with_compact_support(x in -2.0f64..9.0, s in 0usize..7) {
            let v = bspline_1d(s, x);
            prop_assert!(v >= 0.0);
            if x < 0.0 || x >= (s + 1) as f64 { prop_assert_eq!(v, 0.0); }
        }

        #[test]
        fn degree_is_monotone(m in 2usize..100_000) {
            prop_assert!(choose_degree(m, 2.5, 2) <= choose_degree(m + 1, 2.5, 2));
        }
    }

    #[test]
    fn nonzero_counts_and_supports() {
        let b = BSplineBasis::new(3, 0, 1).unwrap();
        assert!(b.basis_vector(&[0.5]).unwrap().len() <= 6);
        let b2 = BSplineBasis::new(3, 2, 2).unwrap();
        let x = [0.3, 0.8];
        for (q, _) in b2.basis_vector(&x).unwrap() {
            let idx = b2.multi_index(q);
            for l in 0..2 {
                let j = idx[l] as f64 - 3.0;
                let lo = j / 4.0;
                let hi = lo + 4.0 / 4.0;
                assert!(lo <= x[l] && x[l] <= hi);
            }
        }
        assert!(matches!(b2.basis_vector(&[1.5, 0.0]), Err(Error::OutsideUnitCube(_))));
    }

    #[test]
    fn degree_and_inducing_rules() {
        assert_eq!(choose_degree(1024, 2.5, 1), 1);
        assert_eq!(choose_degree(2, 2.5, 1), 0);
        assert_eq!(recommended_m(10, 2.5, 2), 3163);
        assert_eq!(recommended_m(1, 2.5, 2), 1);
        assert_eq!(recommended_m(4, 2.5, 1), 4096);
        assert_eq!(recommended_m(1000, 3.5, 1), M_CAP);
        assert_eq!(BSplineBasis::default_order(2.5, 2), 5);
        assert_eq!(BSplineBasis::default_order(2.5, 1), 4);
    }

    fn pts_1d(n: usize) -> Vec<Point> {
        (0..n).map(|i| Point(vec![(i as f64 + 0.5) / n as f64])).collect()
    }

    fn identity_fit(domain: &Domain, basis: BSplineBasis, points: &[Point], k: DMatrix<f64>) -> FemKernel {
        let khat = CoupledKernelMatrix {
            matrix: k,
            params: MaternParams::new(2.5, 1.0, 1.0).unwrap(),
        };
        fit_fem_kernel_with(basis, domain, points, &khat, 0.0).unwrap()
    }

    #[test]
    fn square_fit_reproduces_matrix() {
        let iv = Domain::interval01();
        let basis = BSplineBasis::new(1, 2, 1).unwrap();
        // Hat functions: knots at (j+1)/4, j = -1..=3; a dead function at j = 4.
        let pts: Vec<Point> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&x| Point(vec![x])).collect();
        let q = basis.q();
        assert_eq!(q, 6);
        let params = MaternParams::new(2.5, 2.0, 1.0).unwrap();
        let k = crate::matern::matern_gram(&params, &pts);
        let fem = identity_fit(&iv, basis, &pts, k.clone());
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert!((fem.eval(&pts[i], &pts[j]).unwrap() - k[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fitted_kernel_is_symmetric_sparse_and_counted() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        let mut rng = seeded(7);
        let pts = disk.sample_uniform(80, &mut rng).unwrap();
        let params = MaternParams::new(2.5, 5.0, 1.0).unwrap();
        let basis = BSplineBasis::new(5, 1, 2).unwrap();
        let fem = identity_fit(&disk, basis, &pts, crate::matern::matern_gram(&params, &pts));
        let dense = fem.coefficient_matrix();
        assert!(fem.truncated_to_overlap().stored_entries() <= (2 * basis.s + 1).pow(2) * basis.q());
        let wide = BSplineBasis::new(2, 3, 1).unwrap();
        let small = identity_fit(&Domain::interval01(), wide, &pts_1d(40), crate::matern::matern_gram(&params, &pts_1d(40)));
        assert!(small.truncated_to_overlap().stored_entries() < small.stored_entries());
        for _ in 0..100 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let a = fem.eval_counted(&x, &y).unwrap();
            assert!(a.touches <= basis.nonzero_bound().pow(2));
            assert!((a.value - fem.eval(&y, &x).unwrap()).abs() <= 1e-12 * a.value.abs().max(1.0));
            let fx = fem.features(&x).unwrap();
            let fy = fem.features(&y).unwrap();
            let mut vx = nalgebra::DVector::zeros(basis.q());
            let mut vy = nalgebra::DVector::zeros(basis.q());
            fx.iter().for_each(|(i, v)| vx[*i] = *v);
            fy.iter().for_each(|(i, v)| vy[*i] = *v);
            let magnitude: f64 = fx
                .iter()
                .flat_map(|(i, u)| fy.iter().map(|(j, v)| (u * v * dense[(*i, *j)]).abs()).collect::<Vec<_>>())
                .sum();
            assert!((vx.dot(&(&dense * vy)) - a.value).abs() <= 1e-12 * magnitude.max(1.0));
        }
        assert!(fem.eval(&[2.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn gram_properties() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        let mut rng = seeded(3);
        let pts = disk.sample_uniform(100, &mut rng).unwrap();
        let params = MaternParams::new(2.5, 5.0, 1.0).unwrap();
        let fem = identity_fit(&disk, BSplineBasis::new(5, 1, 2).unwrap(), &pts, crate::matern::matern_gram(&params, &pts));
        let one = fem_gram(&fem, &pts[..1]).unwrap();
        assert!(one[(0, 0)] > 0.0);
        let xs = disk.sample_uniform(20, &mut rng).unwrap();
        let g = fem_gram(&fem, &xs).unwrap();
        assert!(min_eigenvalue(&g) > -1e-10 * g.trace());
        assert!((fem_cross_matrix(&fem, &xs, &xs).unwrap() - &g).amax() < 1e-12);
        assert!(matches!(fem_gram(&fem, &pts[..64]), Err(Error::TooFewElements { q: 64, n: 64 })));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        let spec = FemBuildSpec {
            params: MaternParams::new(2.5, 5.0, 1.0).unwrap(),
            boundary: BoundaryType::Dirichlet,
            m: 60,
            order: None,
            zeta: Some(1),
            points: None,
            boundary_anchors: 0,
            prune: None,
        };
        let fem = build_fem_kernel(&disk, &spec, &SimConfig::for_domain(&disk), &mut seeded(1))
            .unwrap()
            .with_variance_scale(0.7);
        let mut buf = Vec::new();
        fem.write_to(&mut buf).unwrap();
        let back = FemKernel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, fem);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
        buf[0] = b'X';
        assert!(matches!(FemKernel::read_from(&mut buf.as_slice()), Err(Error::Format(_))));
        assert!(FemKernel::read_from(&mut &again[..again.len() - 3]).is_err());
    }

    #[test]
    fn dirichlet_fit_is_small_on_the_boundary() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        let mut spec = FemBuildSpec {
            params: MaternParams::new(2.5, 5.0, 1.0).unwrap(),
            boundary: BoundaryType::Dirichlet,
            m: 600,
            order: None,
            zeta: Some(2),
            points: None,
            boundary_anchors: 200,
            prune: None,
        };
        let cfg = SimConfig::for_domain(&disk);
        let mut rng = seeded(5);
        let fem = build_fem_kernel(&disk, &spec, &cfg, &mut rng).unwrap();
        let inner = disk.sample_uniform(300, &mut rng).unwrap();
        let peak = inner.iter().map(|x| fem.eval(x, x).unwrap()).fold(0.0, f64::max);
        let bdry: Vec<Point> = inner.iter().take(50).map(|x| disk.project_to_boundary(x).unwrap().location).collect();
        let worst = bdry
            .iter()
            .flat_map(|b| inner.iter().map(|x| fem.eval(b, x).unwrap().abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        assert!(worst < 0.05 * peak, "{}", worst / peak);

        spec.boundary = BoundaryType::Robin { c: 20.0 };
        spec.m = 20;
        assert!(build_fem_kernel(&disk, &spec, &cfg, &mut rng).is_err());
    }
}

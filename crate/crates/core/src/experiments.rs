//! Comparison experiments: boundary-aware kernels against plain Matérn models
//! on 2-D irregular domains and on 30-D tensor test functions.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bdry_kernel::BoundaryType;
use crate::brownian::SimConfig;
use crate::domain::{Domain, DomainSpec, Point};
use crate::error::{Error, Result};
use crate::fem::{build_fem_kernel, FemBuildSpec, FemKernel};
use crate::gp::{fit_profiled, mle_fit_nuggets, KernelHandle, MeanFn, MeanSpec, MleSearch, NUGGET_GRID};
use crate::matern::MaternParams;
use crate::rng::{child, SimRng};
use crate::tensor_kernel::{Boundary1d, TensorKernel, TensorParams};

pub const SPARSE_GRID_CAP: usize = 5000;
pub const TENSOR_DIM: usize = 30;

/// Number of new 1-D nodes at level `k ≥ 1` of the nested dyadic family.
fn new_nodes(k: usize) -> usize {
    match k {
        1 => 1,
        2 => 2,
        _ => 1 << (k - 2),
    }
}

fn new_node_values(k: usize) -> Vec<f64> {
    match k {
        1 => vec![0.5],
        2 => vec![0.0, 1.0],
        _ => {
            let h = 1.0 / (1u64 << (k - 1)) as f64;
            (0..new_nodes(k)).map(|i| (2 * i + 1) as f64 * h).collect()
        }
    }
}

/// Node count of the level-`level` sparse grid in `d` dimensions, saturating.
pub fn sparse_grid_size(d: usize, level: usize) -> usize {
    if level == 0 {
        return 0;
    }
    let budget = level - 1;
    // counts[b] = nodes using total excess level exactly b in the dimensions so far.
    let mut counts = vec![0usize; budget + 1];
    counts[0] = 1;
    for _ in 0..d {
        let mut next = vec![0usize; budget + 1];
        for (b, &c) in counts.iter().enumerate() {
            for j in 0..=(budget - b) {
                next[b + j] = next[b + j].saturating_add(c.saturating_mul(new_nodes(j + 1)));
            }
        }
        counts = next;
    }
    counts.iter().fold(0usize, |a, b| a.saturating_add(*b))
}

/// Smolyak grid on `[0,1]^d` from nested dyadic closed rules with the
/// midpoint as the level-1 rule.
pub fn sparse_grid(d: usize, level: usize) -> Result<Vec<Point>> {
    if d == 0 || level == 0 {
        return Err(Error::InvalidParameter("sparse grids need d >= 1 and level >= 1".into()));
    }
    let nodes = sparse_grid_size(d, level);
    if nodes > SPARSE_GRID_CAP {
        return Err(Error::GridTooLarge {
            nodes,
            cap: SPARSE_GRID_CAP,
        });
    }
    let mut out = Vec::with_capacity(nodes);
    let mut prefix = Vec::with_capacity(d);
    grid_rec(d, level - 1, &mut prefix, &mut out);
    Ok(out)
}

fn grid_rec(d: usize, budget: usize, prefix: &mut Vec<f64>, out: &mut Vec<Point>) {
    if prefix.len() == d {
        out.push(Point(prefix.clone()));
        return;
    }
    for j in 0..=budget {
        for v in new_node_values(j + 1) {
            prefix.push(v);
            grid_rec(d, budget - j, prefix, out);
            prefix.pop();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Griewank,
    Prodsine,
}

impl TestFunction {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "griewank" => Ok(TestFunction::Griewank),
            "prodsine" => Ok(TestFunction::Prodsine),
            _ => Err(Error::Config(format!("unknown test function {name:?}"))),
        }
    }

    /// Native box `[lo, hi]` per coordinate.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TestFunction::Griewank => (-5.0, 5.0),
            TestFunction::Prodsine => (-1.0, 1.0),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Griewank => {
                let s: f64 = x.iter().map(|v| v * v / 4000.0).sum();
                let p: f64 = x.iter().enumerate().map(|(j, v)| (v / ((j + 1) as f64).sqrt()).cos()).product();
                s - p + 1.0
            }
            TestFunction::Prodsine => x.iter().map(|v| 1.0 + (std::f64::consts::FRAC_PI_2 * v).sin()).product(),
        }
    }

    pub fn to_native(&self, u: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        u.iter().map(|v| lo + (hi - lo) * v).collect()
    }

    pub fn eval_unit(&self, u: &[f64]) -> f64 {
        self.eval(&self.to_native(u))
    }
}

/// Evaluates a named test function at a 30-dimensional native point.
pub fn test_function(name: &str, x: &[f64]) -> Result<f64> {
    let f = TestFunction::from_name(name)?;
    if x.len() != TENSOR_DIM {
        return Err(Error::InvalidParameter(format!("{name} expects {TENSOR_DIM} inputs, got {}", x.len())));
    }
    Ok(f.eval(x))
}

/// Mean on `[0,1]^d` matching `f` on every face: inverse-square-distance
/// blending of `f` at the `2d` face projections of the point.
pub fn face_blending_mean(f: TestFunction) -> MeanFn {
    Arc::new(move |u: &[f64]| {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut proj = u.to_vec();
        for l in 0..u.len() {
            for side in [0.0, 1.0] {
                let dist = (u[l] - side).abs();
                proj[l] = side;
                if dist == 0.0 {
                    return f.eval_unit(&proj);
                }
                let w = 1.0 / (dist * dist);
                num += w * f.eval_unit(&proj);
                den += w;
            }
            proj[l] = u[l];
        }
        num / den
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub model: String,
    pub n: usize,
    pub log_mse: f64,
    pub test_size: usize,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceRow {
    pub model: String,
    pub x: f64,
    pub truth: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Natural log of the mean squared error.
pub fn log_mse(pred: &[f64], truth: &[f64]) -> f64 {
    let mse = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64;
    mse.ln()
}

fn default_nu() -> f64 {
    2.5
}
fn default_kappa() -> f64 {
    5.0
}
fn default_n() -> usize {
    50
}
fn default_replicates() -> usize {
    20
}
fn default_test_size() -> usize {
    10_000
}
fn default_level() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exp2dSpec {
    pub domain: String,
    /// Defaults to Dirichlet for `t_shape`/`ring` and Robin `c = 20` otherwise.
    #[serde(default)]
    pub boundary: Option<BoundaryType>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Inducing points, degree and Dirichlet boundary anchors of the FEM kernels.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub zeta: Option<u32>,
    #[serde(default)]
    pub anchors: Option<usize>,
}

impl Exp2dSpec {
    pub fn new(domain: &str) -> Self {
        Exp2dSpec {
            domain: domain.into(),
            boundary: None,
            nu: default_nu(),
            kappa: default_kappa(),
            n: default_n(),
            replicates: default_replicates(),
            seed: 0,
            test_size: default_test_size(),
            m: None,
            zeta: None,
            anchors: None,
        }
    }

    pub fn boundary_type(&self) -> BoundaryType {
        self.boundary.unwrap_or(match self.domain.as_str() {
            "t_shape" | "t_shape_figure" | "ring" => BoundaryType::Dirichlet,
            _ => BoundaryType::Robin { c: 20.0 },
        })
    }

    fn fem_spec(&self) -> FemBuildSpec {
        let dirichlet = self.boundary_type() == BoundaryType::Dirichlet;
        let fine = matches!(self.domain.as_str(), "ring" | "holed_rectangle");
        let (m, zeta, anchors) = match (dirichlet, fine) {
            (true, false) => (1500, 3, 400),
            (true, true) => (4000, 4, 1500),
            (false, _) => (300, 2, 0),
        };
        FemBuildSpec {
            params: MaternParams {
                nu: self.nu,
                kappa: self.kappa,
                sigma2: 1.0,
            },
            boundary: self.boundary_type(),
            m: self.m.unwrap_or(m),
            order: None,
            zeta: Some(self.zeta.unwrap_or(zeta)),
            points: None,
            boundary_anchors: if dirichlet { self.anchors.unwrap_or(anchors) } else { 0 },
            prune: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.n == 0 || self.test_size == 0 {
            return Err(Error::Config("replicates, n and test_size must be positive".into()));
        }
        Ok(())
    }
}

/// Draw `f = Φᵀ M^{1/2} z` from a FEM kernel, scaled to unit peak variance over `probe`.
pub struct FemDraw {
    kernel: FemKernel,
    coef: DVector<f64>,
    scale: f64,
}

impl FemDraw {
    pub fn new(kernel: FemKernel, probe: &[Point], rng: &mut SimRng) -> Result<Self> {
        let m = kernel.coefficient_matrix();
        let eig = m.clone().symmetric_eigen();
        let root = &eig.eigenvectors
            * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
            * eig.eigenvectors.transpose();
        let z = DVector::from_fn(m.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let coef = root * z;
        let mut peak: f64 = 0.0;
        for p in probe {
            peak = peak.max(kernel.eval(p, p)?);
        }
        if !(peak > 0.0) {
            return Err(Error::Factorization("ground-truth kernel has no positive variance".into()));
        }
        Ok(FemDraw {
            kernel,
            coef,
            scale: 1.0 / peak.sqrt(),
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.kernel.features(x)?.iter().map(|(i, v)| v * self.coef[*i]).sum::<f64>() * self.scale)
    }
}

/// One replicate: ground truth from an independent FEM kernel, then the
/// boundary-aware FEM model (κ fixed) and a plain Matérn model with
/// maximum-likelihood κ. Both use zero mean, profiled σ² and a nugget chosen
/// by likelihood from [`NUGGET_GRID`].
pub fn run_experiment_2d(spec: &Exp2dSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let dspec =
        DomainSpec::from_name(&spec.domain).ok_or_else(|| Error::Config(format!("unknown domain {:?}", spec.domain)))?;
    let domain = Domain::from_spec(&dspec)?;
    let cfg = SimConfig::for_domain(&domain);
    let fem_spec = spec.fem_spec();
    let mut rows = Vec::new();
    for r in 0..spec.replicates {
        let mut rng = child(spec.seed, r as u64);
        let train = domain.sample_uniform(spec.n, &mut rng)?;
        let test = domain.sample_uniform(spec.test_size, &mut rng)?;
        let truth_kernel = build_fem_kernel(&domain, &fem_spec, &cfg, &mut rng)?;
        let probe: Vec<Point> = train.iter().chain(&test).cloned().collect();
        let truth = FemDraw::new(truth_kernel, &probe, &mut rng)?;
        let y = train.iter().map(|p| truth.eval(p)).collect::<Result<Vec<_>>>()?;
        let yt = test.iter().map(|p| truth.eval(p)).collect::<Result<Vec<_>>>()?;

        let t0 = Instant::now();
        let unit = KernelHandle::Fem(Arc::new(build_fem_kernel(&domain, &fem_spec, &cfg, &mut rng)?));
        let model = fit_profiled(&unit, &MeanSpec::Zero, &train, &y, &NUGGET_GRID)?;
        let pred = model.predict(&test)?;
        rows.push(ResultRow {
            replicate: r,
            model: "bdry_matern".into(),
            n: spec.n,
            log_mse: log_mse(&pred.mean, &yt),
            test_size: spec.test_size,
            wall_time: t0.elapsed().as_secs_f64(),
        });

        let t0 = Instant::now();
        let nu = spec.nu;
        let family = move |k: f64| Ok(KernelHandle::Matern(MaternParams::new(nu, k, 1.0)?));
        let mle = mle_fit_nuggets(&family, &MeanSpec::Zero, &train, &y, &MleSearch::default(), &NUGGET_GRID)?;
        let pred = mle.model.predict(&test)?;
        rows.push(ResultRow {
            replicate: r,
            model: "matern".into(),
            n: spec.n,
            log_mse: log_mse(&pred.mean, &yt),
            test_size: spec.test_size,
            wall_time: t0.elapsed().as_secs_f64(),
        });
        log::info!("exp2d replicate {r}: {:?}", &rows[rows.len() - 2..]);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub function: TestFunction,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_level")]
    pub level: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Points along the `x₁` slice.
    #[serde(default = "default_slice")]
    pub slice_points: usize,
}

fn default_slice() -> usize {
    101
}

impl TensorSpec {
    pub fn new(function: TestFunction) -> Self {
        TensorSpec {
            function,
            nu: default_nu(),
            level: default_level(),
            replicates: default_replicates(),
            seed: 0,
            test_size: default_test_size(),
            slice_points: default_slice(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorOutput {
    pub rows: Vec<ResultRow>,
    pub slice: Vec<SliceRow>,
}

/// Fits both models once on the sparse-grid design; replicates draw fresh test sets.
///
/// Prodsine uses the Neumann tensor kernel with zero mean. Griewank uses the
/// Dirichlet tensor kernel around [`face_blending_mean`]. The benchmark is a
/// product Matérn kernel with a generalized-least-squares constant mean, so it
/// sees no boundary information. Both select the nugget by likelihood.
pub fn run_experiment_tensor(spec: &TensorSpec) -> Result<TensorOutput> {
    if spec.replicates == 0 || spec.test_size == 0 || spec.slice_points < 2 {
        return Err(Error::Config("replicates, test_size must be positive and slice_points >= 2".into()));
    }
    let d = TENSOR_DIM;
    let f = spec.function;
    let x = sparse_grid(d, spec.level)?;
    let y: Vec<f64> = x.iter().map(|p| f.eval_unit(p)).collect();
    let n = x.len();
    let (boundary, mean) = match f {
        TestFunction::Prodsine => (Boundary1d::Neumann, MeanSpec::Zero),
        TestFunction::Griewank => (Boundary1d::Dirichlet, MeanSpec::User(face_blending_mean(f))),
    };
    let nu = spec.nu;

    let t0 = Instant::now();
    let tensor_family = move |k: f64| {
        Ok(KernelHandle::Tensor(TensorKernel::new(&TensorParams {
            base: MaternParams::new(nu, k, 1.0)?,
            boundaries: vec![boundary; d],
        })?))
    };
    let search = MleSearch {
        kappa_lo: 0.05,
        kappa_hi: 20.0,
        ..MleSearch::default()
    };
    let bdry = mle_fit_nuggets(&tensor_family, &mean, &x, &y, &search, &NUGGET_GRID)?;
    let bdry_fit_time = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let product_family = move |k: f64| Ok(KernelHandle::ProductMatern(MaternParams::new(nu, k, 1.0)?));
    let plain = mle_fit_nuggets(&product_family, &MeanSpec::Constant(None), &x, &y, &search, &NUGGET_GRID)?;
    let plain_fit_time = t0.elapsed().as_secs_f64();
    log::info!(
        "tensor fits: bdry kappa {:.4} sigma2 {:.4e}, product kappa {:.4} sigma2 {:.4e}",
        bdry.kappa,
        bdry.sigma2,
        plain.kappa,
        plain.sigma2
    );

    let mut rows = Vec::new();
    for r in 0..spec.replicates {
        let mut rng = child(spec.seed, r as u64);
        let test: Vec<Vec<f64>> = (0..spec.test_size)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let yt: Vec<f64> = test.iter().map(|p| f.eval_unit(p)).collect();
        for (name, model, fit_time) in [
            ("bdry_matern", &bdry.model, bdry_fit_time),
            ("product_matern", &plain.model, plain_fit_time),
        ] {
            let t0 = Instant::now();
            let pred = model.predict(&test)?;
            rows.push(ResultRow {
                replicate: r,
                model: name.into(),
                n,
                log_mse: log_mse(&pred.mean, &yt),
                test_size: spec.test_size,
                wall_time: fit_time + t0.elapsed().as_secs_f64(),
            });
        }
    }

    let xs: Vec<f64> = (0..spec.slice_points).map(|i| i as f64 / (spec.slice_points - 1) as f64).collect();
    let pts: Vec<Vec<f64>> = xs
        .iter()
        .map(|&v| {
            let mut p = vec![0.0; d];
            p[0] = v;
            p
        })
        .collect();
    let mut slice = Vec::new();
    for (name, model) in [("bdry_matern", &bdry.model), ("product_matern", &plain.model)] {
        let pred = model.predict(&pts)?;
        for (i, p) in pts.iter().enumerate() {
            let sd = pred.variance[i].sqrt();
            slice.push(SliceRow {
                model: name.into(),
                x: xs[i],
                truth: f.eval_unit(p),
                mean: pred.mean[i],
                lo: pred.mean[i] - sd,
                hi: pred.mean[i] + sd,
            });
        }
    }
    Ok(TensorOutput { rows, slice })
}

fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("nothing to write".into()));
    }
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Result table without timings, so that reruns are byte-identical.
pub fn write_results_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    write_csv(w, rows)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    replicate: usize,
    model: &'a str,
    wall_time: f64,
}

pub fn write_timing_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let t: Vec<TimingRow> = rows
        .iter()
        .map(|r| TimingRow {
            replicate: r.replicate,
            model: &r.model,
            wall_time: r.wall_time,
        })
        .collect();
    write_csv(w, &t)
}

/// Tidy slice table: one row per model and `x`.
pub fn emit_plot_data<W: Write>(w: W, slice: &[SliceRow]) -> Result<()> {
    write_csv(w, slice)
}

/// Per-model mean of `log_mse` over replicates, sorted by model name.
pub fn mean_log_mse(rows: &[ResultRow]) -> Vec<(String, f64)> {
    let mut acc: std::collections::BTreeMap<&str, (f64, usize)> = Default::default();
    for r in rows {
        let e = acc.entry(&r.model).or_default();
        e.0 += r.log_mse;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k.to_string(), s / c as f64)).collect()
}

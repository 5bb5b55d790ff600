use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use bdrymatern::brownian::SimConfig;
use bdrymatern::experiments::{
    emit_plot_data, run_experiment_2d, run_experiment_tensor, write_results_csv, write_timing_csv, Exp2dSpec,
    TensorSpec,
};
use bdrymatern::fem::{build_fem_kernel, FemBuildSpec, FemKernel};
use bdrymatern::gp::{fit, mle_fit_nuggets, profile_nugget, KernelHandle, MeanSpec, MleSearch, NUGGET_GRID};
use bdrymatern::rng::{child, seeded};
use bdrymatern::tensor_kernel::{sample_path_1d, Boundary1d, TensorKernel, TensorParams};
use bdrymatern::{bdry_kernel, Domain, DomainSpec, Error, MaternParams, Point, Result};

#[derive(Parser)]
#[command(name = "bdrymatern", version, about = "Boundary-constrained Matérn Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw prior paths of a 1-D boundary kernel on a uniform grid.
    SamplePaths(SpecOut),
    /// Build a FEM kernel from Brownian-motion estimates and save it.
    BuildKernel(SpecOut),
    /// Fit a GP to a CSV design and write the fitted model as JSON.
    Fit(SpecOut),
    /// Predict at the points of a CSV file with a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Irregular 2-D domain comparison.
    Exp2d {
        #[command(flatten)]
        io: SpecOut,
        /// Wall times per row, kept out of the result table.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
    /// 30-D tensor comparison on a sparse-grid design.
    ExpTensor {
        #[command(flatten)]
        io: SpecOut,
        #[arg(long)]
        timing: Option<PathBuf>,
        /// Slice of the posterior along the first input.
        #[arg(long)]
        slice: Option<PathBuf>,
    },
    /// Local-time check of the Robin positive-definiteness condition.
    DiagnoseRobin(SpecOut),
}

#[derive(clap::Args)]
struct SpecOut {
    /// TOML or JSON file, chosen by extension.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn read_spec<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn domain_from(spec: &DomainOrName) -> Result<Domain> {
    let spec = match spec {
        DomainOrName::Name(n) => {
            DomainSpec::from_name(n).ok_or_else(|| Error::Config(format!("unknown domain {n:?}")))?
        }
        DomainOrName::Spec(s) => s.clone(),
    };
    Ok(Domain::from_spec(&spec)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DomainOrName {
    Name(String),
    Spec(DomainSpec),
}

fn default_sigma2() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSpec {
    nu: f64,
    kappa: f64,
    #[serde(default = "default_sigma2")]
    sigma2: f64,
    boundary: Boundary1d,
    grid_points: usize,
    paths: usize,
    #[serde(default)]
    seed: u64,
}

fn sample_paths(io: &SpecOut) -> Result<()> {
    let s: PathsSpec = read_spec(&io.spec)?;
    if s.grid_points < 2 || s.paths == 0 {
        return Err(Error::Config("grid_points must be >= 2 and paths >= 1".into()));
    }
    let base = MaternParams::new(s.nu, s.kappa, s.sigma2)?;
    let grid: Vec<f64> = (0..s.grid_points).map(|i| i as f64 / (s.grid_points - 1) as f64).collect();
    let mut w = csv::Writer::from_writer(create(&io.out)?);
    w.write_record(["path", "x", "value"])?;
    for p in 0..s.paths {
        let mut rng = child(s.seed, p as u64);
        let f = sample_path_1d(&base, s.boundary, &grid, &mut rng)?;
        for (x, v) in grid.iter().zip(&f) {
            w.write_record([p.to_string(), x.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildSpec {
    domain: DomainOrName,
    fem: FemBuildSpec,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sim: Option<SimConfig>,
}

fn build_kernel(io: &SpecOut) -> Result<()> {
    let s: BuildSpec = read_spec(&io.spec)?;
    let domain = domain_from(&s.domain)?;
    let config = s.sim.unwrap_or_else(|| SimConfig::for_domain(&domain));
    let kernel = build_fem_kernel(&domain, &s.fem, &config, &mut seeded(s.seed))?;
    kernel.save(&io.out)?;
    log::info!("saved kernel with Q = {} and {} stored entries", kernel.q(), kernel.stored_entries());
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum KernelSpec {
    Matern {
        nu: f64,
        kappa: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
    ProductMatern {
        nu: f64,
        kappa: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
    Tensor {
        nu: f64,
        kappa: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
        boundary: Boundary1d,
        dim: usize,
    },
    Fem {
        path: PathBuf,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
}

impl KernelSpec {
    fn handle(&self) -> Result<KernelHandle> {
        Ok(match self {
            KernelSpec::Matern { nu, kappa, sigma2 } => KernelHandle::Matern(MaternParams::new(*nu, *kappa, *sigma2)?),
            KernelSpec::ProductMatern { nu, kappa, sigma2 } => {
                KernelHandle::ProductMatern(MaternParams::new(*nu, *kappa, *sigma2)?)
            }
            KernelSpec::Tensor {
                nu,
                kappa,
                sigma2,
                boundary,
                dim,
            } => KernelHandle::Tensor(TensorKernel::new(&TensorParams {
                base: MaternParams::new(*nu, *kappa, *sigma2)?,
                boundaries: vec![*boundary; *dim],
            })?),
            KernelSpec::Fem { path, sigma2 } => {
                KernelHandle::Fem(Arc::new(FemKernel::load(path)?.with_variance_scale(*sigma2)))
            }
        })
    }

    fn with(&self, kappa_new: Option<f64>, sigma2_new: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            KernelSpec::Matern { kappa, sigma2, .. }
            | KernelSpec::ProductMatern { kappa, sigma2, .. }
            | KernelSpec::Tensor { kappa, sigma2, .. } => {
                if let Some(k) = kappa_new {
                    *kappa = k;
                }
                *sigma2 = sigma2_new;
            }
            KernelSpec::Fem { sigma2, .. } => *sigma2 = sigma2_new,
        }
        s
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum MeanConfig {
    #[default]
    Zero,
    /// Estimated by generalized least squares when `value` is absent.
    Constant {
        #[serde(default)]
        value: Option<f64>,
    },
}

impl MeanConfig {
    fn spec(&self) -> MeanSpec {
        match self {
            MeanConfig::Zero => MeanSpec::Zero,
            MeanConfig::Constant { value } => MeanSpec::Constant(*value),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitSpec {
    kernel: KernelSpec,
    #[serde(default)]
    mean: MeanConfig,
    /// CSV with input columns followed by a final `y` column.
    data: PathBuf,
    /// Absolute nugget; chosen by likelihood from a fixed grid when absent.
    #[serde(default)]
    nugget: Option<f64>,
    /// Inverse length-scale range searched by maximum likelihood.
    #[serde(default)]
    kappa_range: Option<[f64; 2]>,
}

/// Everything needed to rebuild a fitted model.
#[derive(Serialize, Deserialize)]
struct FittedModel {
    kernel: KernelSpec,
    mean: MeanConfig,
    nugget: f64,
    log_likelihood: f64,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn read_design(path: &Path) -> Result<(Vec<Point>, Vec<f64>)> {
    let rows = read_rows(path)?;
    if rows.iter().any(|r| r.len() < 2) {
        return Err(Error::Config(format!("{}: need at least one input column and y", path.display())));
    }
    let y = rows.iter().map(|r| r[r.len() - 1]).collect();
    let x = rows.into_iter().map(|mut r| {
        r.pop();
        Point(r)
    });
    Ok((x.collect(), y))
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

/// Relative paths inside a spec are taken relative to the spec file.
fn resolve(spec: &Path, p: &Path) -> PathBuf {
    match spec.parent() {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn fit_model(io: &SpecOut) -> Result<()> {
    let mut s: FitSpec = read_spec(&io.spec)?;
    s.data = resolve(&io.spec, &s.data);
    if let KernelSpec::Fem { path, .. } = &mut s.kernel {
        *path = resolve(&io.spec, path);
    }
    let (x, y) = read_design(&s.data)?;
    let mean = s.mean.spec();
    let nuggets: Vec<f64> = NUGGET_GRID.to_vec();
    let (kernel, nugget) = match (&s.kernel, s.kappa_range) {
        (KernelSpec::Fem { .. }, Some(_)) => {
            return Err(Error::Config("kappa_range does not apply to FEM kernels".into()));
        }
        (_, Some([lo, hi])) => {
            let base = s.kernel.clone();
            let family = move |k: f64| base.with(Some(k), 1.0).handle();
            let search = MleSearch {
                kappa_lo: lo,
                kappa_hi: hi,
                ..MleSearch::default()
            };
            let fixed;
            let grid = match s.nugget {
                Some(v) => {
                    fixed = [v];
                    &fixed[..]
                }
                None => &nuggets[..],
            };
            let r = mle_fit_nuggets(&family, &mean, &x, &y, &search, grid)?;
            let nugget = r.model.summary().nugget;
            (s.kernel.with(Some(r.kappa), r.sigma2), nugget)
        }
        (_, None) => match s.nugget {
            Some(v) => (s.kernel.clone(), v),
            None => {
                let unit = s.kernel.with(None, 1.0).handle()?;
                let (rel, s2, _) = profile_nugget(&unit, &mean, &x, &y, &nuggets)?;
                (s.kernel.with(None, s2), rel * s2)
            }
        },
    };
    let model = fit(kernel.handle()?, mean, x.clone(), y.clone(), nugget)?;
    let mean = match (&s.mean, model.mean_constant()) {
        (MeanConfig::Constant { value: None }, Some(c)) => MeanConfig::Constant { value: Some(c) },
        (m, _) => m.clone(),
    };
    let out = FittedModel {
        kernel,
        mean,
        nugget,
        log_likelihood: model.log_marginal_likelihood(),
        x: x.into_iter().map(|p| p.0).collect(),
        y,
    };
    let mut w = create(&io.out)?;
    serde_json::to_writer_pretty(&mut w, &out).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn predict(model: &Path, points: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(model)?;
    let m: FittedModel = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", model.display())))?;
    let x = m.x.into_iter().map(Point).collect();
    let gp = fit(m.kernel.handle()?, m.mean.spec(), x, m.y, m.nugget)?;
    let pts = read_rows(points)?;
    let pred = gp.predict(&pts)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    let d = pts[0].len();
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend(["mean".into(), "variance".into()]);
    w.write_record(&header)?;
    for (i, p) in pts.iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        rec.push(pred.mean[i].to_string());
        rec.push(pred.variance[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RobinSpec {
    domain: DomainOrName,
    kappa: f64,
    /// Defaults to the single time `1/κ²`.
    #[serde(default)]
    t_grid: Option<Vec<f64>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    sim: Option<SimConfig>,
}

fn diagnose_robin(io: &SpecOut) -> Result<()> {
    let s: RobinSpec = read_spec(&io.spec)?;
    let domain = domain_from(&s.domain)?;
    let config = s.sim.unwrap_or_else(|| SimConfig::for_domain(&domain));
    let t = s.t_grid.unwrap_or_else(|| vec![1.0 / (s.kappa * s.kappa)]);
    let diag = bdry_kernel::robin_condition_diagnostic(&domain, s.kappa, &t, &config, &mut seeded(s.seed))?;
    let mut w = csv::Writer::from_writer(create(&io.out)?);
    w.write_record(["t", "estimate", "bound", "satisfied", "margin"])?;
    for i in 0..diag.t.len() {
        w.write_record([
            diag.t[i].to_string(),
            diag.estimate[i].to_string(),
            diag.bound[i].to_string(),
            diag.satisfied[i].to_string(),
            diag.margin[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn exp2d(io: &SpecOut, timing: Option<&Path>) -> Result<()> {
    let spec: Exp2dSpec = read_spec(&io.spec)?;
    let rows = run_experiment_2d(&spec)?;
    write_results_csv(create(&io.out)?, &rows)?;
    if let Some(t) = timing {
        write_timing_csv(create(t)?, &rows)?;
    }
    Ok(())
}

fn exp_tensor(io: &SpecOut, timing: Option<&Path>, slice: Option<&Path>) -> Result<()> {
    let spec: TensorSpec = read_spec(&io.spec)?;
    let out = run_experiment_tensor(&spec)?;
    write_results_csv(create(&io.out)?, &out.rows)?;
    if let Some(t) = timing {
        write_timing_csv(create(t)?, &out.rows)?;
    }
    if let Some(s) = slice {
        emit_plot_data(create(s)?, &out.slice)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SamplePaths(io) => sample_paths(&io),
        Command::BuildKernel(io) => build_kernel(&io),
        Command::Fit(io) => fit_model(&io),
        Command::Predict { model, points, out } => predict(&model, &points, &out),
        Command::Exp2d { io, timing } => exp2d(&io, timing.as_deref()),
        Command::ExpTensor { io, timing, slice } => exp_tensor(&io, timing.as_deref(), slice.as_deref()),
        Command::DiagnoseRobin(io) => diagnose_robin(&io),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.category(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}

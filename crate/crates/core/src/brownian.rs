//! Killed and reflected Brownian motion on a domain.
//!
//! Paths use the generator-Δ time scale: each Euler step adds `√(2·dt)·Z`.
//! With that scale `E[e^{-κ²τ}]`-type functionals solve `(κ² − Δ)v = 0`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryPoint, Domain, DomainError, Point, TOL_GEOM};
use crate::error::{Error, Result};
use crate::rng::{child, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub weight_floor: f64,
    pub max_time: f64,
    /// Width of the band around the boundary; contact events closer than this
    /// are pooled when Robin kernel matrices are assembled.
    pub boundary_layer: f64,
}

impl SimConfig {
    pub fn for_domain(domain: &Domain) -> Self {
        let diam = domain.diameter();
        SimConfig {
            dt: 1e-4 * diam * diam,
            weight_floor: 1e-6,
            max_time: 1e3 * diam * diam,
            boundary_layer: 1e-2 * diam,
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let diam = domain.diameter();
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt <= 1e-2 * diam * diam) {
            return bad(format!("dt = {} must lie in (0, 1e-2 * diam^2]", self.dt));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0) {
            return bad(format!("weight_floor = {} must lie in (0, 1)", self.weight_floor));
        }
        if !(self.max_time > 0.0) {
            return bad("max_time must be positive".into());
        }
        if !(self.boundary_layer >= 0.0) {
            return bad("boundary_layer must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HittingSample {
    pub exit_location: BoundaryPoint,
    pub exit_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactEvent {
    pub location: BoundaryPoint,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReflectedFunctional {
    pub events: Vec<ContactEvent>,
}

impl ReflectedFunctional {
    pub fn total_weight(&self) -> f64 {
        self.events.iter().map(|e| e.weight).sum()
    }

    /// Pools events lying within `radius` of a cluster's first member into a
    /// single point mass at the (boundary-projected) weighted centroid. With
    /// `radius = 0` only coincident locations are pooled, which is lossless.
    pub fn pooled(&self, domain: &Domain, radius: f64) -> Vec<(Point, f64)> {
        struct Cluster {
            anchor: Vec<f64>,
            sum: Vec<f64>,
            weight: f64,
        }
        let mut clusters: Vec<Cluster> = Vec::new();
        for e in &self.events {
            let loc = &e.location.location;
            let found = clusters.iter_mut().find(|c| {
                let d2: f64 = c.anchor.iter().zip(loc.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius
            });
            match found {
                Some(c) => {
                    for (s, v) in c.sum.iter_mut().zip(loc.iter()) {
                        *s += e.weight * v;
                    }
                    c.weight += e.weight;
                }
                None => clusters.push(Cluster {
                    anchor: loc.0.clone(),
                    sum: loc.iter().map(|v| e.weight * v).collect(),
                    weight: e.weight,
                }),
            }
        }
        clusters
            .into_iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                if radius == 0.0 {
                    return (Point(c.anchor), c.weight);
                }
                let centroid: Vec<f64> = c.sum.iter().map(|s| s / c.weight).collect();
                (domain.project_unchecked(&centroid).location, c.weight)
            })
            .collect()
    }
}

fn gaussian_step(x: &[f64], scale: f64, rng: &mut SimRng, out: &mut [f64]) {
    for (o, xi) in out.iter_mut().zip(x) {
        let z: f64 = rng.sample(StandardNormal);
        *o = xi + scale * z;
    }
}

fn interior_start(domain: &Domain, x0: &[f64]) -> Result<f64> {
    if !domain.contains(x0)? {
        return Err(DomainError::Outside(x0.to_vec()).into());
    }
    Ok(domain.distance_to_boundary(x0)?)
}

/// Runs a killed Brownian motion from `x0` until it leaves the domain.
pub fn simulate_hitting(
    domain: &Domain,
    x0: &[f64],
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<HittingSample> {
    let d0 = interior_start(domain, x0)?;
    if d0 <= TOL_GEOM {
        let normal = domain.project_unchecked(x0).inward_normal;
        return Ok(HittingSample {
            exit_location: BoundaryPoint {
                location: Point(x0.to_vec()),
                inward_normal: normal,
            },
            exit_time: 0.0,
        });
    }
    let scale = (2.0 * config.dt).sqrt();
    let mut x = x0.to_vec();
    let mut dist_x = d0;
    let mut y = vec![0.0; x.len()];
    let mut t = 0.0;
    while t < config.max_time {
        gaussian_step(&x, scale, rng, &mut y);
        if !domain.contains_unchecked(&y) {
            // Bisect the step segment for the boundary crossing.
            let (mut lo, mut hi) = (0.0, 1.0);
            let mut z = vec![0.0; x.len()];
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                for k in 0..x.len() {
                    z[k] = x[k] + mid * (y[k] - x[k]);
                }
                if domain.contains_unchecked(&z) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            for k in 0..x.len() {
                z[k] = x[k] + hi * (y[k] - x[k]);
            }
            return Ok(HittingSample {
                exit_location: domain.project_unchecked(&z),
                exit_time: t + hi * config.dt,
            });
        }
        let dist_y = domain.distance_to_boundary(&y).unwrap_or(0.0);
        // Brownian-bridge test for an excursion outside between the two steps.
        let p_cross = (-dist_x * dist_y / config.dt).exp();
        if rng.random::<f64>() < p_cross {
            let near = if dist_x <= dist_y { &x } else { &y };
            return Ok(HittingSample {
                exit_location: domain.project_unchecked(near),
                exit_time: t + 0.5 * config.dt,
            });
        }
        std::mem::swap(&mut x, &mut y);
        dist_x = dist_y;
        t += config.dt;
    }
    Err(Error::MaxTimeExceeded {
        max_time: config.max_time,
    })
}

/// Exact `(E[e^{-κ²τ}; exit at 0], E[e^{-κ²τ}; exit at 1])` on the unit interval.
pub fn dirichlet_exit_weight_1d(x0: f64, kappa: f64) -> (f64, f64) {
    if kappa < 1e-8 {
        return (1.0 - x0, x0);
    }
    let s = kappa.sinh();
    ((kappa * (1.0 - x0)).sinh() / s, (kappa * x0).sinh() / s)
}

/// Reflects `y` back into the domain, returning the contacts `(point, overshoot)`.
fn reflect_into(domain: &Domain, y: &mut [f64], contacts: &mut Vec<(BoundaryPoint, f64)>) {
    contacts.clear();
    for _ in 0..8 {
        if domain.contains_unchecked(y) {
            return;
        }
        let b = domain.project_unchecked(y);
        let eta: f64 = y
            .iter()
            .zip(b.location.iter())
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        for k in 0..y.len() {
            y[k] = b.location[k] + eta * b.inward_normal[k];
        }
        contacts.push((b, eta));
    }
    if !domain.contains_unchecked(y) {
        let b = domain.project_unchecked(y);
        y.copy_from_slice(&b.location);
    }
}

/// Runs a reflected Brownian motion from `x0`, recording boundary contacts
/// weighted by the running discount `e^{-κ²t - ∫c dL}`.
///
/// A reflection with overshoot `η` adds `2η` of local time. Each event weight
/// is the discount integrated exactly over that local-time increment.
pub fn simulate_reflected_with_local_time(
    domain: &Domain,
    x0: &[f64],
    kappa: f64,
    c: &dyn Fn(&[f64]) -> f64,
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<ReflectedFunctional> {
    interior_start(domain, x0)?;
    let scale = (2.0 * config.dt).sqrt();
    let step_discount = (-kappa * kappa * config.dt).exp();
    let mut x = x0.to_vec();
    let mut y = vec![0.0; x.len()];
    let mut contacts = Vec::new();
    let mut discount = 1.0;
    let mut t = 0.0;
    let mut events = Vec::new();
    while discount >= config.weight_floor {
        if t >= config.max_time {
            return Err(Error::MaxTimeExceeded {
                max_time: config.max_time,
            });
        }
        gaussian_step(&x, scale, rng, &mut y);
        t += config.dt;
        discount *= step_discount;
        reflect_into(domain, &mut y, &mut contacts);
        for (b, eta) in contacts.drain(..) {
            let dl = 2.0 * eta;
            let cb = c(&b.location);
            let kill = cb * dl;
            let integrated = if kill > 1e-12 {
                -(-kill).exp_m1() / cb
            } else {
                dl
            };
            let weight = discount * integrated;
            if weight > 0.0 {
                events.push(ContactEvent {
                    location: b,
                    weight,
                });
            }
            discount *= (-kill).exp();
        }
        std::mem::swap(&mut x, &mut y);
    }
    Ok(ReflectedFunctional { events })
}

/// Local time accumulated by a reflected path, read off at each `t_grid` time.
fn local_time_path(
    domain: &Domain,
    x0: &[f64],
    t_grid: &[f64],
    config: &SimConfig,
    rng: &mut SimRng,
) -> Vec<f64> {
    let scale = (2.0 * config.dt).sqrt();
    let t_end = t_grid.iter().cloned().fold(0.0, f64::max);
    let mut x = x0.to_vec();
    let mut y = vec![0.0; x.len()];
    let mut contacts = Vec::new();
    let mut out = vec![0.0; t_grid.len()];
    let mut l = 0.0;
    let mut t = 0.0;
    loop {
        for (o, &tg) in out.iter_mut().zip(t_grid) {
            if t <= tg {
                *o = l;
            }
        }
        if t >= t_end {
            break;
        }
        gaussian_step(&x, scale, rng, &mut y);
        reflect_into(domain, &mut y, &mut contacts);
        l += contacts.iter().map(|(_, eta)| 2.0 * eta).sum::<f64>();
        std::mem::swap(&mut x, &mut y);
        t += config.dt;
    }
    out
}

/// Coarse set of start points: boundary samples plus interior grid nodes.
fn probe_points(domain: &Domain) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let mut pts: Vec<Vec<f64>> = domain
        .boundary_points(8.max(2 * d))
        .into_iter()
        .map(|b| b.location.0)
        .collect();
    let (lo, hi) = domain.bounding_box();
    if d <= 2 {
        let k = 4;
        let axis = |a: usize, i: usize| lo[a] + (hi[a] - lo[a]) * (i as f64 + 0.5) / k as f64;
        if d == 1 {
            pts.extend((0..k).map(|i| vec![axis(0, i)]));
        } else {
            for i in 0..k {
                for j in 0..k {
                    pts.push(vec![axis(0, i), axis(1, j)]);
                }
            }
        }
    } else {
        pts.push(lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect());
    }
    pts.retain(|p| domain.contains_unchecked(p));
    pts
}

/// For each `t` in `t_grid`, the largest (over a coarse grid of start points)
/// empirical mean local time `E[L_t]`. The same paths serve every `t`.
pub fn local_time_profile(
    domain: &Domain,
    t_grid: &[f64],
    n_paths: usize,
    config: &SimConfig,
    rng: &mut SimRng,
) -> Vec<f64> {
    let root: u64 = rng.random();
    let mut best = vec![0.0f64; t_grid.len()];
    for (si, start) in probe_points(domain).iter().enumerate() {
        let mut sums = vec![0.0; t_grid.len()];
        for p in 0..n_paths {
            let mut prng = child(root, (si * n_paths + p) as u64);
            let l = local_time_path(domain, start, t_grid, config, &mut prng);
            for (s, v) in sums.iter_mut().zip(l) {
                *s += v;
            }
        }
        for (b, s) in best.iter_mut().zip(sums) {
            *b = b.max(s / n_paths as f64);
        }
    }
    best
}

/// Estimate of `sup_x E[L_t]` over a coarse grid of start points.
pub fn local_time_expectation_estimate(
    domain: &Domain,
    t_horizon: f64,
    n_paths: usize,
    config: &SimConfig,
    rng: &mut SimRng,
) -> Result<f64> {
    if n_paths < 100 {
        return Err(Error::InvalidParameter("local-time estimates need at least 100 paths".into()));
    }
    Ok(local_time_profile(domain, &[t_horizon], n_paths, config, rng)[0])
}

/// Starts a seeded stream per path so that batches are order-independent.
pub fn hitting_batch(
    domain: &Domain,
    x0: &[f64],
    n_paths: usize,
    config: &SimConfig,
    seed: u64,
) -> Result<Vec<HittingSample>> {
    (0..n_paths)
        .map(|p| simulate_hitting(domain, x0, config, &mut child(seed, p as u64)))
        .collect()
}

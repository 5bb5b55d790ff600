//! Irregular compact domains and the geometric predicates the simulators need.
//!
//! All built-in domains are closed sets. Two-dimensional shapes are described
//! by a membership rule plus a list of smooth boundary pieces (segments and
//! circles); distances and projections are taken over those pieces.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;

/// Boundary membership tolerance.
pub const TOL_GEOM: f64 = 1e-10;

const MIN_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("point has dimension {got}, domain has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point {0:?} lies outside the domain")]
    Outside(Vec<f64>),
    #[error("rejection sampling acceptance rate fell below {MIN_ACCEPTANCE} ({accepted} of {tried})")]
    LowAcceptance { accepted: usize, tried: usize },
    #[error("invalid domain parameters: {0}")]
    InvalidShape(String),
    #[error("user-implicit domains cannot be serialized")]
    NotSerializable,
}

/// A location in a domain (dimensionless coordinates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Point(v.to_vec())
    }
}

/// A point of the boundary together with the unit normal pointing into the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub location: Point,
    pub inward_normal: Vec<f64>,
}

/// Serializable description of a built-in domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval01,
    Hypercube { dim: usize },
    /// `([-1,1]×[0,1]) ∪ ([-0.5,0.5]×[0,1])`, taken literally (a rectangle).
    TShape,
    /// A genuine T: bar `[-1,1]×[0,1]` on top of stem `[-0.5,0.5]×[-1,0]`.
    TShapeFigure,
    Ring { inner: f64, outer: f64 },
    Disk { radius: f64 },
    HoledRectangle {
        x_half_width: f64,
        y_min: f64,
        y_max: f64,
        hole_center: [f64; 2],
        hole_radius: f64,
    },
}

impl DomainSpec {
    pub fn ring() -> Self {
        DomainSpec::Ring {
            inner: 1.0,
            outer: 2.0,
        }
    }

    pub fn disk() -> Self {
        DomainSpec::Disk { radius: 1.0 }
    }

    pub fn holed_rectangle() -> Self {
        DomainSpec::HoledRectangle {
            x_half_width: 1.0,
            y_min: -1.0,
            y_max: 0.5,
            hole_center: [0.5, -0.5],
            hole_radius: 0.25,
        }
    }

    /// Parses the names used on the command line.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "interval01" => DomainSpec::Interval01,
            "t_shape" => DomainSpec::TShape,
            "t_shape_figure" => DomainSpec::TShapeFigure,
            "ring" => DomainSpec::ring(),
            "disk" => DomainSpec::disk(),
            "holed_rectangle" => DomainSpec::holed_rectangle(),
            _ => return None,
        })
    }
}

type SignedDistance = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Domain given by a signed-distance callback: positive inside, zero on the
/// boundary, negative outside.
#[derive(Clone)]
pub struct UserImplicit {
    pub dim: usize,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
    sdf: Arc<SignedDistance>,
}

impl UserImplicit {
    pub fn new(
        bbox_lo: Vec<f64>,
        bbox_hi: Vec<f64>,
        sdf: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        UserImplicit {
            dim: bbox_lo.len(),
            bbox_lo,
            bbox_hi,
            sdf: Arc::new(sdf),
        }
    }
}

impl fmt::Debug for UserImplicit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserImplicit")
            .field("dim", &self.dim)
            .field("bbox_lo", &self.bbox_lo)
            .field("bbox_hi", &self.bbox_hi)
            .finish()
    }
}

#[derive(Clone, Debug)]
enum Piece {
    /// Segment `a→b` traversed with the interior on the left.
    Segment { a: [f64; 2], b: [f64; 2] },
    /// Circle; `interior_inside` is true for a disk boundary, false for a hole.
    Circle {
        center: [f64; 2],
        radius: f64,
        interior_inside: bool,
    },
}

impl Piece {
    fn nearest(&self, x: &[f64]) -> ([f64; 2], [f64; 2], f64) {
        match *self {
            Piece::Segment { a, b } => {
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len2 = dx * dx + dy * dy;
                let t = (((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
                let p = [a[0] + t * dx, a[1] + t * dy];
                let len = len2.sqrt();
                let n = [-dy / len, dx / len];
                (p, n, dist2(x, &p))
            }
            Piece::Circle {
                center,
                radius,
                interior_inside,
            } => {
                let (rx, ry) = (x[0] - center[0], x[1] - center[1]);
                let r = (rx * rx + ry * ry).sqrt();
                let u = if r > 0.0 { [rx / r, ry / r] } else { [-1.0, 0.0] };
                let p = [center[0] + radius * u[0], center[1] + radius * u[1]];
                let n = if interior_inside {
                    [-u[0], -u[1]]
                } else {
                    u
                };
                (p, n, dist2(x, &p))
            }
        }
    }
}

fn dist2(x: &[f64], p: &[f64; 2]) -> f64 {
    ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt()
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (u, v) in a.iter().zip(b) {
        if u < v {
            return true;
        }
        if u > v {
            return false;
        }
    }
    false
}

#[derive(Clone, Debug)]
enum Shape {
    Interval01,
    Hypercube { dim: usize },
    Planar {
        /// Closed rectangles `[x0,x1]×[y0,y1]` whose union (minus holes) is the domain.
        rects: Vec<[f64; 4]>,
        /// Closed disks `(cx, cy, r)` the domain must lie inside.
        within: Vec<[f64; 3]>,
        /// Open disks `(cx, cy, r)` removed from the domain.
        holes: Vec<[f64; 3]>,
        pieces: Vec<Piece>,
    },
    Implicit(UserImplicit),
}

/// A bounded, connected domain.
#[derive(Clone, Debug)]
pub struct Domain {
    spec: Option<DomainSpec>,
    shape: Shape,
    bbox_lo: Vec<f64>,
    bbox_hi: Vec<f64>,
}

fn rect_pieces(x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<Piece> {
    let c = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    (0..4)
        .map(|i| Piece::Segment {
            a: c[i],
            b: c[(i + 1) % 4],
        })
        .collect()
}

impl Domain {
    pub fn from_spec(spec: &DomainSpec) -> Result<Self, DomainError> {
        let bad = |msg: &str| Err(DomainError::InvalidShape(msg.to_string()));
        let (shape, lo, hi) = match *spec {
            DomainSpec::Interval01 => (Shape::Interval01, vec![0.0], vec![1.0]),
            DomainSpec::Hypercube { dim } => {
                if dim == 0 {
                    return bad("hypercube dimension must be positive");
                }
                (Shape::Hypercube { dim }, vec![0.0; dim], vec![1.0; dim])
            }
            DomainSpec::TShape => (
                Shape::Planar {
                    rects: vec![[-1.0, 1.0, 0.0, 1.0], [-0.5, 0.5, 0.0, 1.0]],
                    within: vec![],
                    holes: vec![],
                    pieces: rect_pieces(-1.0, 1.0, 0.0, 1.0),
                },
                vec![-1.0, 0.0],
                vec![1.0, 1.0],
            ),
            DomainSpec::TShapeFigure => {
                let v = [
                    [-0.5, -1.0],
                    [0.5, -1.0],
                    [0.5, 0.0],
                    [1.0, 0.0],
                    [1.0, 1.0],
                    [-1.0, 1.0],
                    [-1.0, 0.0],
                    [-0.5, 0.0],
                ];
                let pieces = (0..v.len())
                    .map(|i| Piece::Segment {
                        a: v[i],
                        b: v[(i + 1) % v.len()],
                    })
                    .collect();
                (
                    Shape::Planar {
                        rects: vec![[-1.0, 1.0, 0.0, 1.0], [-0.5, 0.5, -1.0, 0.0]],
                        within: vec![],
                        holes: vec![],
                        pieces,
                    },
                    vec![-1.0, -1.0],
                    vec![1.0, 1.0],
                )
            }
            DomainSpec::Ring { inner, outer } => {
                if !(inner > 0.0 && outer > inner) {
                    return bad("ring needs 0 < inner < outer");
                }
                (
                    Shape::Planar {
                        rects: vec![[-outer, outer, -outer, outer]],
                        within: vec![[0.0, 0.0, outer]],
                        holes: vec![[0.0, 0.0, inner]],
                        pieces: vec![
                            Piece::Circle {
                                center: [0.0, 0.0],
                                radius: outer,
                                interior_inside: true,
                            },
                            Piece::Circle {
                                center: [0.0, 0.0],
                                radius: inner,
                                interior_inside: false,
                            },
                        ],
                    },
                    vec![-outer, -outer],
                    vec![outer, outer],
                )
            }
            DomainSpec::Disk { radius } => {
                if radius <= 0.0 {
                    return bad("disk radius must be positive");
                }
                (
                    Shape::Planar {
                        rects: vec![[-radius, radius, -radius, radius]],
                        within: vec![[0.0, 0.0, radius]],
                        holes: vec![],
                        pieces: vec![Piece::Circle {
                            center: [0.0, 0.0],
                            radius,
                            interior_inside: true,
                        }],
                    },
                    vec![-radius, -radius],
                    vec![radius, radius],
                )
            }
            DomainSpec::HoledRectangle {
                x_half_width,
                y_min,
                y_max,
                hole_center,
                hole_radius,
            } => {
                let [cx, cy] = hole_center;
                if !(x_half_width > 0.0 && y_max > y_min && hole_radius > 0.0)
                    || cx - hole_radius <= -x_half_width
                    || cx + hole_radius >= x_half_width
                    || cy - hole_radius <= y_min
                    || cy + hole_radius >= y_max
                {
                    return bad("hole must lie strictly inside the rectangle");
                }
                let mut pieces = rect_pieces(-x_half_width, x_half_width, y_min, y_max);
                pieces.push(Piece::Circle {
                    center: hole_center,
                    radius: hole_radius,
                    interior_inside: false,
                });
                (
                    Shape::Planar {
                        rects: vec![[-x_half_width, x_half_width, y_min, y_max]],
                        within: vec![],
                        holes: vec![[cx, cy, hole_radius]],
                        pieces,
                    },
                    vec![-x_half_width, y_min],
                    vec![x_half_width, y_max],
                )
            }
        };
        Ok(Domain {
            spec: Some(spec.clone()),
            shape,
            bbox_lo: lo,
            bbox_hi: hi,
        })
    }

    pub fn interval01() -> Self {
        Self::from_spec(&DomainSpec::Interval01).expect("valid")
    }

    pub fn hypercube(dim: usize) -> Self {
        Self::from_spec(&DomainSpec::Hypercube { dim }).expect("valid")
    }

    pub fn user_implicit(user: UserImplicit) -> Self {
        Domain {
            spec: None,
            bbox_lo: user.bbox_lo.clone(),
            bbox_hi: user.bbox_hi.clone(),
            shape: Shape::Implicit(user),
        }
    }

    pub fn spec(&self) -> Option<&DomainSpec> {
        self.spec.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.bbox_lo.len()
    }

    pub fn bounding_box(&self) -> (&[f64], &[f64]) {
        (&self.bbox_lo, &self.bbox_hi)
    }

    /// Euclidean diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        self.bbox_lo
            .iter()
            .zip(&self.bbox_hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), DomainError> {
        if x.len() != self.dim() {
            return Err(DomainError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Membership in the closed domain.
    pub fn contains(&self, x: &[f64]) -> Result<bool, DomainError> {
        self.check_dim(x)?;
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Interval01 => (-TOL_GEOM..=1.0 + TOL_GEOM).contains(&x[0]),
            Shape::Hypercube { .. } => x.iter().all(|v| (-TOL_GEOM..=1.0 + TOL_GEOM).contains(v)),
            Shape::Planar {
                rects,
                within,
                holes,
                ..
            } => {
                let t = TOL_GEOM;
                let in_rect = rects.iter().any(|r| {
                    x[0] >= r[0] - t && x[0] <= r[1] + t && x[1] >= r[2] - t && x[1] <= r[3] + t
                });
                in_rect
                    && within
                        .iter()
                        .all(|c| (x[0] - c[0]).hypot(x[1] - c[1]) <= c[2] + t)
                    && holes
                        .iter()
                        .all(|c| (x[0] - c[0]).hypot(x[1] - c[1]) >= c[2] - t)
            }
            Shape::Implicit(u) => (u.sdf)(x) >= -TOL_GEOM,
        }
    }

    /// Distance from an interior (or boundary) point to the boundary.
    pub fn distance_to_boundary(&self, x: &[f64]) -> Result<f64, DomainError> {
        if !self.contains(x)? {
            return Err(DomainError::Outside(x.to_vec()));
        }
        Ok(match &self.shape {
            Shape::Interval01 => x[0].min(1.0 - x[0]).max(0.0),
            Shape::Hypercube { .. } => x
                .iter()
                .map(|v| v.min(1.0 - v))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            Shape::Planar { pieces, .. } => pieces
                .iter()
                .map(|p| p.nearest(x).2)
                .fold(f64::INFINITY, f64::min),
            Shape::Implicit(u) => (u.sdf)(x).max(0.0),
        })
    }

    /// Nearest boundary point and its inward normal. Defined for any point
    /// (inside or outside); ties go to the lexicographically smallest location.
    pub fn project_to_boundary(&self, x: &[f64]) -> Result<BoundaryPoint, DomainError> {
        self.check_dim(x)?;
        Ok(self.project_unchecked(x))
    }

    pub(crate) fn project_unchecked(&self, x: &[f64]) -> BoundaryPoint {
        match &self.shape {
            Shape::Interval01 => {
                let left = x[0] <= 1.0 - x[0];
                if left {
                    BoundaryPoint {
                        location: Point(vec![0.0]),
                        inward_normal: vec![1.0],
                    }
                } else {
                    BoundaryPoint {
                        location: Point(vec![1.0]),
                        inward_normal: vec![-1.0],
                    }
                }
            }
            Shape::Hypercube { dim } => project_hypercube(*dim, x),
            Shape::Planar { pieces, .. } => {
                let mut best: Option<([f64; 2], [f64; 2], f64)> = None;
                for piece in pieces {
                    let cand = piece.nearest(x);
                    best = match best {
                        None => Some(cand),
                        Some(b) => {
                            let tie = (cand.2 - b.2).abs() <= 1e-14 * (1.0 + b.2);
                            let better = if tie {
                                lex_less(&cand.0, &b.0)
                                    || (cand.0 == b.0 && lex_less(&cand.1, &b.1))
                            } else {
                                cand.2 < b.2
                            };
                            if better {
                                Some(cand)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
                let (p, n, _) = best.expect("planar domains have boundary pieces");
                BoundaryPoint {
                    location: Point(p.to_vec()),
                    inward_normal: n.to_vec(),
                }
            }
            Shape::Implicit(u) => project_implicit(u, x),
        }
    }

    /// `m` i.i.d. uniform points, by rejection from the bounding box.
    pub fn sample_uniform(&self, m: usize, rng: &mut SimRng) -> Result<Vec<Point>, DomainError> {
        let d = self.dim();
        let mut out = Vec::with_capacity(m);
        let mut tried = 0usize;
        let budget = ((m as f64 / MIN_ACCEPTANCE).ceil() as usize).max(10_000);
        let mut buf = vec![0.0; d];
        while out.len() < m {
            if tried >= budget {
                return Err(DomainError::LowAcceptance {
                    accepted: out.len(),
                    tried,
                });
            }
            tried += 1;
            for (k, v) in buf.iter_mut().enumerate() {
                *v = self.bbox_lo[k] + (self.bbox_hi[k] - self.bbox_lo[k]) * rng.random::<f64>();
            }
            if self.contains_unchecked(&buf) {
                out.push(Point(buf.clone()));
            }
        }
        Ok(out)
    }

    /// `n` boundary points spread along the boundary, deterministic.
    pub fn boundary_points(&self, n: usize) -> Vec<BoundaryPoint> {
        match &self.shape {
            Shape::Interval01 => (0..n)
                .map(|i| self.project_unchecked(&[if i % 2 == 0 { 0.0 } else { 1.0 }]))
                .collect(),
            Shape::Planar { pieces, .. } => {
                let lens: Vec<f64> = pieces
                    .iter()
                    .map(|p| match *p {
                        Piece::Segment { a, b } => dist2(&a, &b),
                        Piece::Circle { radius, .. } => 2.0 * std::f64::consts::PI * radius,
                    })
                    .collect();
                let total: f64 = lens.iter().sum();
                (0..n)
                    .map(|i| {
                        let mut s = (i as f64 + 0.5) / n as f64 * total;
                        let mut k = 0;
                        while k + 1 < pieces.len() && s > lens[k] {
                            s -= lens[k];
                            k += 1;
                        }
                        let t = (s / lens[k]).clamp(0.0, 1.0);
                        let (loc, normal) = match pieces[k] {
                            Piece::Segment { a, b } => {
                                let (p, n, _) = pieces[k].nearest(&[
                                    a[0] + t * (b[0] - a[0]),
                                    a[1] + t * (b[1] - a[1]),
                                ]);
                                (p, n)
                            }
                            Piece::Circle {
                                center,
                                radius,
                                interior_inside,
                            } => {
                                let th = 2.0 * std::f64::consts::PI * t;
                                let u = [th.cos(), th.sin()];
                                let p = [center[0] + radius * u[0], center[1] + radius * u[1]];
                                (p, if interior_inside { [-u[0], -u[1]] } else { u })
                            }
                        };
                        BoundaryPoint {
                            location: Point(loc.to_vec()),
                            inward_normal: normal.to_vec(),
                        }
                    })
                    .collect()
            }
            Shape::Hypercube { dim } => (0..n)
                .map(|i| {
                    let face = i % (2 * dim);
                    let axis = face / 2;
                    let mut x: Vec<f64> = (0..*dim)
                        .map(|k| ((i * (k + 3) + 1) as f64 * 0.618_033_988_75).fract())
                        .collect();
                    x[axis] = if face % 2 == 0 { 0.0 } else { 1.0 };
                    let mut normal = vec![0.0; *dim];
                    normal[axis] = if face % 2 == 0 { 1.0 } else { -1.0 };
                    BoundaryPoint {
                        location: Point(x),
                        inward_normal: normal,
                    }
                })
                .collect(),
            Shape::Implicit(_) => Vec::new(),
        }
    }
}

fn project_hypercube(dim: usize, x: &[f64]) -> BoundaryPoint {
    let inside = x.iter().all(|v| (0.0..=1.0).contains(v));
    if inside {
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for axis in 0..dim {
            for (target, sign) in [(0.0, 1.0), (1.0, -1.0)] {
                let d = (x[axis] - target).abs();
                let mut loc = x.to_vec();
                loc[axis] = target;
                let mut n = vec![0.0; dim];
                n[axis] = sign;
                let better = match &best {
                    None => true,
                    Some((bd, bl, _)) => d < *bd || (d == *bd && lex_less(&loc, bl)),
                };
                if better {
                    best = Some((d, loc, n));
                }
            }
        }
        let (_, loc, n) = best.expect("dim > 0");
        BoundaryPoint {
            location: Point(loc),
            inward_normal: n,
        }
    } else {
        let loc: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let (axis, _) = x
            .iter()
            .enumerate()
            .map(|(k, v)| (k, (v - v.clamp(0.0, 1.0)).abs()))
            .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        let mut n = vec![0.0; dim];
        n[axis] = if x[axis] < 0.0 { 1.0 } else { -1.0 };
        BoundaryPoint {
            location: Point(loc),
            inward_normal: n,
        }
    }
}

fn implicit_gradient(u: &UserImplicit, x: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = xp[k];
            xp[k] = orig + h;
            let fp = (u.sdf)(&xp);
            xp[k] = orig - h;
            let fm = (u.sdf)(&xp);
            xp[k] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn project_implicit(u: &UserImplicit, x: &[f64]) -> BoundaryPoint {
    let mut p = x.to_vec();
    for _ in 0..50 {
        let f = (u.sdf)(&p);
        if f.abs() <= TOL_GEOM {
            break;
        }
        let g = implicit_gradient(u, &p);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 == 0.0 {
            break;
        }
        for (pk, gk) in p.iter_mut().zip(&g) {
            *pk -= f * gk / g2;
        }
    }
    let g = implicit_gradient(u, &p);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    BoundaryPoint {
        location: Point(p),
        inward_normal: g.iter().map(|v| v / norm).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn all_2d() -> Vec<Domain> {
        [
            DomainSpec::TShape,
            DomainSpec::TShapeFigure,
            DomainSpec::ring(),
            DomainSpec::disk(),
            DomainSpec::holed_rectangle(),
        ]
        .iter()
        .map(|s| Domain::from_spec(s).unwrap())
        .collect()
    }

    #[test]
    fn membership_examples() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        assert!(disk.contains(&[0.0, 0.0]).unwrap());
        let ring = Domain::from_spec(&DomainSpec::ring()).unwrap();
        assert!(!ring.contains(&[0.0, 0.0]).unwrap());
        // The literal T union is the rectangle [-1,1]x[0,1].
        let t = Domain::from_spec(&DomainSpec::TShape).unwrap();
        assert!(t.contains(&[0.9, 0.5]).unwrap());
        assert!(!t.contains(&[0.0, -0.5]).unwrap());
        let tf = Domain::from_spec(&DomainSpec::TShapeFigure).unwrap();
        assert!(tf.contains(&[0.9, 0.5]).unwrap());
        assert!(tf.contains(&[0.0, -0.5]).unwrap());
        assert!(!tf.contains(&[0.9, -0.5]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        assert!(matches!(
            disk.contains(&[0.0]),
            Err(DomainError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        assert!((disk.distance_to_boundary(&[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let iv = Domain::interval01();
        assert!((iv.distance_to_boundary(&[0.3]).unwrap() - 0.3).abs() < 1e-15);
        let hr = Domain::from_spec(&DomainSpec::holed_rectangle()).unwrap();
        assert!(matches!(
            hr.distance_to_boundary(&[0.5, -0.5]),
            Err(DomainError::Outside(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        let b = disk.project_to_boundary(&[0.5, 0.0]).unwrap();
        assert_eq!(b.location.0, vec![1.0, 0.0]);
        assert_eq!(b.inward_normal, vec![-1.0, 0.0]);

        let iv = Domain::interval01();
        let b = iv.project_to_boundary(&[0.9]).unwrap();
        assert_eq!(b.location.0, vec![1.0]);
        assert_eq!(b.inward_normal, vec![-1.0]);

        let ring = Domain::from_spec(&DomainSpec::ring()).unwrap();
        let b = ring.project_to_boundary(&[1.4, 0.0]).unwrap();
        assert_eq!(b.location.0, vec![1.0, 0.0]);
        assert_eq!(b.inward_normal, vec![1.0, 0.0]);
    }

    #[test]
    fn projections_land_on_boundary_and_normals_point_inward() {
        let mut rng = seeded(11);
        for dom in all_2d() {
            let pts = dom.sample_uniform(500, &mut rng).unwrap();
            for x in &pts {
                let d = dom.distance_to_boundary(x).unwrap();
                assert!(d >= 0.0);
                let b = dom.project_to_boundary(x).unwrap();
                assert!(dom.distance_to_boundary(&b.location).unwrap() <= TOL_GEOM);
                assert!((dist2(x, &[b.location[0], b.location[1]]) - d).abs() < 1e-12);
            }
            for b in dom.boundary_points(200) {
                let n = &b.inward_normal;
                assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-12);
                // Skip points within 1e-4 of a corner.
                let near_corner = match dom.spec() {
                    Some(DomainSpec::TShape)
                    | Some(DomainSpec::TShapeFigure)
                    | Some(DomainSpec::HoledRectangle { .. }) => {
                        let fr = |v: f64| (v * 2.0 - (v * 2.0).round()).abs() < 2e-4;
                        fr(b.location[0]) && fr(b.location[1])
                    }
                    _ => false,
                };
                if near_corner {
                    continue;
                }
                let eps = 1e-6;
                let inside = [b.location[0] + eps * n[0], b.location[1] + eps * n[1]];
                let outside = [b.location[0] - eps * n[0], b.location[1] - eps * n[1]];
                assert!(dom.contains(&inside).unwrap(), "{:?} {:?}", dom.spec(), b);
                assert!(!dom.contains(&outside).unwrap(), "{:?} {:?}", dom.spec(), b);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible_and_inside() {
        let t = Domain::from_spec(&DomainSpec::TShapeFigure).unwrap();
        let a = t.sample_uniform(10_000, &mut seeded(3)).unwrap();
        let b = t.sample_uniform(10_000, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| t.contains(p).unwrap()));

        let iv = Domain::interval01();
        let one = iv.sample_uniform(1, &mut seeded(0)).unwrap();
        assert!((0.0..=1.0).contains(&one[0][0]));
    }

    #[test]
    fn disk_sample_mean_is_centered() {
        // Per-coordinate variance of the uniform unit disk is 1/4.
        let disk = Domain::from_spec(&DomainSpec::disk()).unwrap();
        let m = 10_000;
        let pts = disk.sample_uniform(m, &mut seeded(5)).unwrap();
        let se = (0.25 / m as f64).sqrt();
        for k in 0..2 {
            let mean = pts.iter().map(|p| p[k]).sum::<f64>() / m as f64;
            assert!(mean.abs() < 3.0 * se, "coordinate {k} mean {mean}");
        }
    }

    #[test]
    fn low_acceptance_is_reported() {
        let thin = UserImplicit::new(vec![0.0, 0.0], vec![1.0, 1.0], |x: &[f64]| {
            1e-7 - ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt()
        });
        let dom = Domain::user_implicit(thin);
        assert!(matches!(
            dom.sample_uniform(10, &mut seeded(0)),
            Err(DomainError::LowAcceptance { .. })
        ));
    }

    #[test]
    fn user_implicit_disk_matches_builtin() {
        let user = UserImplicit::new(vec![-1.0, -1.0], vec![1.0, 1.0], |x: &[f64]| {
            1.0 - x[0].hypot(x[1])
        });
        let dom = Domain::user_implicit(user);
        let b = dom.project_to_boundary(&[0.3, 0.4]).unwrap();
        assert!((b.location[0] - 0.6).abs() < 1e-8 && (b.location[1] - 0.8).abs() < 1e-8);
        assert!((b.inward_normal[0] + 0.6).abs() < 1e-5);
        assert!((dom.distance_to_boundary(&[0.3, 0.4]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = DomainSpec::holed_rectangle();
        let text = toml::to_string(&spec).unwrap();
        let back: DomainSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}

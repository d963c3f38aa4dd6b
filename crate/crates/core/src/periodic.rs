//! Semi-discrete transport on the flat torus `ℝ²/ℤ²`.
//!
//! Potentials are quasi-periodic: `φ(x) = |x|²/2 + u(x)` with `u` periodic,
//! so the unknowns are the values `u_i`. Cells are built against the 3x3
//! block of translated copies and returned unwrapped, as convex polygons in
//! the plane around their site; their union tiles a fundamental domain.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::convexity::{AffinePiece, Facet, PiecewiseAffineConvex, TransportMapPWC};
use crate::error::{Error, Result};
use crate::geom::{self, ConvexPolygon, Density, HalfPlane, Point2, Uniform, EPS_GEOM_REL};
use crate::hull::lower_hull;
use crate::laguerre::{assemble, power_cell, EdgeTag, LaguerreDiagram, Shift, SiteTree, BOUNDARY_BASE};
use crate::laguerre::subtract_mean;
use crate::quadrature::{gauss_legendre_unit, integrate_triangle_apex};
use crate::reference::{RateReport, RateRow};
use crate::solver::{damped_newton_with, DiagramBuilder, SolveSettings, Solution};

/// Copy offsets, row-major; index 4 is the base copy.
pub const SHIFTS: [Shift; 9] = [
    [-1, -1],
    [0, -1],
    [1, -1],
    [-1, 0],
    [0, 0],
    [1, 0],
    [-1, 1],
    [0, 1],
    [1, 1],
];
const BASE: usize = 4;

fn shift_vec(s: Shift) -> Point2 {
    Point2::new(s[0] as f64, s[1] as f64)
}

/// Reduces `p` into `[0, 1)²`.
pub fn wrap(p: Point2) -> Point2 {
    Point2::new(p.x - p.x.floor(), p.y - p.y.floor())
}

/// Shortest representative of `d` modulo `ℤ²`.
pub fn nearest_image(d: Point2) -> Point2 {
    Point2::new(d.x - d.x.round(), d.y - d.y.round())
}

/// Periodic density with unit mass over a fundamental domain.
#[derive(Clone)]
pub struct TorusDensity {
    inner: Arc<dyn Density>,
    scale: f64,
}

impl std::fmt::Debug for TorusDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusDensity").field("scale", &self.scale).finish()
    }
}

impl TorusDensity {
    pub fn uniform() -> Self {
        TorusDensity {
            inner: Arc::new(Uniform(1.0)),
            scale: 1.0,
        }
    }

    /// `inner` is sampled on `[0, 1)²` and normalized.
    pub fn new(inner: Arc<dyn Density>) -> Result<Self> {
        let sq = ConvexPolygon::unit_square();
        let total = match inner.constant() {
            Some(c) => c,
            None => geom::integrate_gauss(&sq, &gauss_legendre_unit(12), |p| inner.eval(p)),
        };
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::BadDensity(format!("torus density integrates to {total}")));
        }
        Ok(TorusDensity {
            inner,
            scale: 1.0 / total,
        })
    }

    pub fn is_uniform(&self) -> bool {
        self.inner.constant().is_some()
    }
}

impl Density for TorusDensity {
    fn eval(&self, p: Point2) -> f64 {
        self.inner.eval(wrap(p)) * self.scale
    }

    fn constant(&self) -> Option<f64> {
        self.inner.constant().map(|c| c * self.scale)
    }
}

/// Sites on the torus with their masses.
#[derive(Debug, Clone)]
pub struct TorusCloud {
    pub points: Vec<Point2>,
    pub masses: Vec<f64>,
    /// Largest diameter of the periodic Voronoi cells.
    pub mesh_norm: f64,
}

impl TorusCloud {
    /// Points must lie in `[0, 1)²`; masses are normalized to sum 1.
    pub fn new(points: Vec<Point2>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoPoints);
        }
        if points.len() != masses.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !p.is_finite() || p.x < 0.0 || p.x >= 1.0 || p.y < 0.0 || p.y >= 1.0)
        {
            return Err(Error::InvalidInput(format!("torus point ({}, {}) is outside [0,1)²", p.x, p.y)));
        }
        if masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("torus masses must be positive".into()));
        }
        let total: f64 = masses.iter().sum();
        let masses = masses.into_iter().map(|m| m / total).collect();
        let vor = periodic_cells(&points, &vec![0.0; points.len()], &TorusDensity::uniform())?;
        let mesh_norm = vor.cells.iter().map(|c| c.diameter()).fold(0.0, f64::max);
        Ok(TorusCloud {
            points,
            masses,
            mesh_norm,
        })
    }

    pub fn uniform(points: Vec<Point2>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    /// Cell-centred `k x k` grid with equal masses.
    pub fn grid(k: usize) -> Result<Self> {
        Self::uniform(grid_points(k)?)
    }

    /// Masses `f_i = ∫_{C_i} source` over the periodic Voronoi cells.
    pub fn discretize(points: Vec<Point2>, source: &TorusDensity) -> Result<Self> {
        let vor = periodic_cells(&points, &vec![0.0; points.len()], &TorusDensity::uniform())?;
        let masses = vor
            .cells
            .par_iter()
            .map(|c| geom::mass_and_centroid(c, source).map(|(m, _)| m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, masses)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn grid_points(k: usize) -> Result<Vec<Point2>> {
    if k == 0 {
        return Err(Error::InvalidInput("grid size must be positive".into()));
    }
    let s = 1.0 / k as f64;
    let mut pts = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            pts.push(Point2::new((i as f64 + 0.5) * s, (j as f64 + 0.5) * s));
        }
    }
    Ok(pts)
}

/// Values `u_i` of the periodic part of a quasi-periodic potential.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiPeriodicPotential {
    pub values: Vec<f64>,
}

impl QuasiPeriodicPotential {
    /// Shifts the values to mean zero.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite potential value".into()));
        }
        subtract_mean(&mut values);
        Ok(QuasiPeriodicPotential { values })
    }

    pub fn zero(n: usize) -> Self {
        QuasiPeriodicPotential { values: vec![0.0; n] }
    }

    /// `φ_i = u_i + |x_i|²/2`.
    pub fn convex_values(&self, points: &[Point2]) -> Vec<f64> {
        points.iter().zip(&self.values).map(|(x, u)| u + 0.5 * x.norm2()).collect()
    }
}

/// All nine copies: positions and `φ` values, copy `s` of site `j` at `s * n + j`.
fn replicate(points: &[Point2], u: &[f64]) -> (Vec<Point2>, Vec<f64>) {
    let n = points.len();
    let mut xs = Vec::with_capacity(9 * n);
    let mut phis = Vec::with_capacity(9 * n);
    for s in SHIFTS {
        let off = shift_vec(s);
        for (x, v) in points.iter().zip(u) {
            let y = *x + off;
            xs.push(y);
            phis.push(v + 0.5 * y.norm2());
        }
    }
    (xs, phis)
}

fn periodic_cells(points: &[Point2], u: &[f64], g: &TorusDensity) -> Result<LaguerreDiagram> {
    let n = points.len();
    if n == 0 {
        return Err(Error::NoPoints);
    }
    if u.len() != n {
        return Err(Error::InvalidInput(format!("{n} sites but {} potential values", u.len())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite potential".into()));
    }
    let (xs, phis) = replicate(points, u);
    let tree = SiteTree::new(&xs, &phis);
    // Equal-weight copies of site i confine its cell to x_i + [-1/2, 1/2]²,
    // so the clip box is never reached.
    let start = ConvexPolygon::rectangle(Point2::new(-1.0, -1.0), Point2::new(2.0, 2.0));
    let eps = EPS_GEOM_REL * 2f64.sqrt();
    let tagged = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = power_cell(&xs, &phis, &tree, BASE * n + i, start.vertices(), eps).map_err(|e| match e {
                Error::CoincidentSites(a, b) => Error::CoincidentSites((a % n).min(b % n), (a % n).max(b % n)),
                e => e,
            })?;
            let mut tags = Vec::with_capacity(c.tags.len());
            for t in c.tags {
                if t >= BOUNDARY_BASE {
                    return Err(Error::InsufficientReplication(i));
                }
                tags.push(EdgeTag::Site {
                    site: t % n,
                    shift: SHIFTS[t / n],
                });
            }
            Ok((c.vertices, tags))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(
        ConvexPolygon::unit_square(),
        points.to_vec(),
        u.to_vec(),
        tagged,
        g,
        2f64.sqrt(),
    )
}

/// Periodic Laguerre diagram: cell `i` holds the points closest to site
/// `i` in the power distance `|y - x_j - s|² + 2 u_j` over all copies.
/// The diagram's `potential` holds the `u` values.
pub fn periodic_diagram(cloud: &TorusCloud, u: &QuasiPeriodicPotential, g: &TorusDensity) -> Result<LaguerreDiagram> {
    periodic_cells(&cloud.points, &u.values, g)
}

/// A torus cloud and target density; unknowns are the `u_i`.
#[derive(Debug, Clone)]
pub struct PeriodicProblem {
    pub cloud: TorusCloud,
    pub density: TorusDensity,
}

impl DiagramBuilder for PeriodicProblem {
    fn sites(&self) -> &[Point2] {
        &self.cloud.points
    }

    fn diagram(&self, u: &[f64]) -> Result<LaguerreDiagram> {
        periodic_cells(&self.cloud.points, u, &self.density)
    }

    /// `-∫ min_j (|y - x_j|²/2 + u_j) g dy`; differs from the planar
    /// conjugate integral by a constant.
    fn conjugate_integral(&self, d: &LaguerreDiagram, u: &[f64]) -> f64 {
        let g = &self.density;
        let c = g.constant();
        -d.cells
            .par_iter()
            .zip(&d.sites)
            .zip(u)
            .zip(&d.masses)
            .map(|(((cell, &x), &ui), &m)| {
                let second = match c {
                    Some(c) => c * geom::integrate(cell, |y| (y - x).norm2()),
                    None => geom::integrate(cell, |y| (y - x).norm2() * g.eval(y)),
                };
                0.5 * second + ui * m
            })
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
    }

    fn initial_guess(&self) -> Vec<f64> {
        vec![0.0; self.cloud.len()]
    }

    fn length_scale_sq(&self) -> f64 {
        1.0
    }
}

/// Solves `m_i(u) = f_i` on the torus by damped Newton. The returned
/// potential holds mean-zero `u` values.
pub fn periodic_solve(cloud: &TorusCloud, g: &TorusDensity, settings: &SolveSettings) -> Result<Solution> {
    let problem = PeriodicProblem {
        cloud: cloud.clone(),
        density: g.clone(),
    };
    damped_newton_with(&problem, &cloud.masses, settings)
}

/// Piecewise-affine quasi-periodic extension of `φ_i = u_i + |x_i|²/2`
/// restricted to `[0, 1]²`, as a piecewise-constant map `x ↦ ∇φ_h(x)`.
/// Facet targets are unwrapped (not reduced mod `ℤ²`).
pub fn torus_transport_map(cloud: &TorusCloud, u: &QuasiPeriodicPotential) -> Result<TransportMapPWC> {
    let n = cloud.len();
    if u.values.len() != n {
        return Err(Error::InvalidInput("potential has the wrong length".into()));
    }
    let (xs, phis) = replicate(&cloud.points, &u.values);
    let u_min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut margin = (3.0 * cloud.mesh_norm).clamp(0.05, 1.0);
    loop {
        let keep: Vec<usize> = (0..xs.len())
            .filter(|&k| {
                let p = xs[k];
                p.x >= -margin && p.x <= 1.0 + margin && p.y >= -margin && p.y <= 1.0 + margin
            })
            .collect();
        let pts: Vec<Point2> = keep.iter().map(|&k| xs[k]).collect();
        let z: Vec<f64> = keep.iter().map(|&k| phis[k]).collect();
        let hull = lower_hull(&pts, &z)?;
        let square = ConvexPolygon::unit_square();
        let mut pieces = Vec::new();
        let mut facets = Vec::new();
        let mut complete = true;
        for f in hull.facets {
            let poly = ConvexPolygon::from_vertices(f.ring.iter().map(|&k| pts[k]).collect());
            let clipped = clip_to_square(&poly);
            if clipped.is_empty() || clipped.area() <= 1e-14 {
                continue;
            }
            // The facet is a facet of the full periodic hull when no dropped
            // copy lies below its plane: in power terms, no dropped copy
            // beats the facet's members at the dual point `gradient`.
            let y = f.gradient;
            let m0 = keep[f.members[0]];
            let level = (y - xs[m0]).norm2() + 2.0 * u.values[m0 % n];
            let reach = [y.x + margin, 1.0 + margin - y.x, y.y + margin, 1.0 + margin - y.y]
                .into_iter()
                .fold(f64::INFINITY, f64::min)
                .max(0.0);
            if margin < 1.0 && reach * reach + 2.0 * u_min < level {
                complete = false;
                break;
            }
            pieces.push(AffinePiece {
                gradient: f.gradient,
                intercept: f.intercept,
            });
            let mut sites: Vec<usize> = f.members.iter().map(|&k| keep[k] % n).collect();
            sites.sort_unstable();
            sites.dedup();
            facets.push(Facet {
                polygon: clipped,
                piece: pieces.len() - 1,
                sites,
            });
        }
        if complete {
            return Ok(TransportMapPWC::from_pwa(PiecewiseAffineConvex {
                pieces,
                domain: square,
                facets,
            }));
        }
        margin = (2.0 * margin).min(1.0);
    }
}

fn clip_to_square(poly: &ConvexPolygon) -> ConvexPolygon {
    let planes = [
        HalfPlane {
            normal: Point2::new(-1.0, 0.0),
            offset: 0.0,
        },
        HalfPlane {
            normal: Point2::new(1.0, 0.0),
            offset: 1.0,
        },
        HalfPlane {
            normal: Point2::new(0.0, -1.0),
            offset: 0.0,
        },
        HalfPlane {
            normal: Point2::new(0.0, 1.0),
            offset: 1.0,
        },
    ];
    planes.iter().fold(poly.clone(), |p, hp| p.clip(hp))
}

/// Torus reference problem: per axis the map `t ↦ t + β sin(2πt)/(2π)`,
/// source density `Π (1 + β cos 2πt_k)`, uniform target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusProblem {
    pub beta: f64,
}

impl TorusProblem {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.abs() < 1.0) {
            return Err(Error::InvalidInput(format!("beta must satisfy |beta| < 1, got {beta}")));
        }
        Ok(TorusProblem { beta })
    }

    pub fn map_1d(&self, t: f64) -> f64 {
        t + self.beta * (2.0 * PI * t).sin() / (2.0 * PI)
    }

    /// Inverse of [`Self::map_1d`] on the whole line.
    pub fn inverse_1d(&self, v: f64) -> f64 {
        let (mut lo, mut hi) = (v - 0.5, v + 0.5);
        let mut t = v;
        for _ in 0..100 {
            let r = self.map_1d(t) - v;
            if r.abs() <= 1e-15 {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let dt = 1.0 + self.beta * (2.0 * PI * t).cos();
            let next = t - r / dt;
            t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        t
    }

    pub fn map(&self, x: Point2) -> Point2 {
        Point2::new(self.map_1d(x.x), self.map_1d(x.y))
    }

    pub fn inverse_map(&self, y: Point2) -> Point2 {
        Point2::new(self.inverse_1d(y.x), self.inverse_1d(y.y))
    }

    /// Periodic part `u` of the exact potential, mean zero.
    pub fn potential_u(&self, x: Point2) -> f64 {
        -self.beta * ((2.0 * PI * x.x).cos() + (2.0 * PI * x.y).cos()) / (4.0 * PI * PI)
    }

    pub fn density(&self, x: Point2) -> f64 {
        (1.0 + self.beta * (2.0 * PI * x.x).cos()) * (1.0 + self.beta * (2.0 * PI * x.y).cos())
    }

    pub fn source(&self) -> Result<TorusDensity> {
        let p = *self;
        TorusDensity::new(Arc::new(move |x: Point2| p.density(x)))
    }

    fn interval_mass(&self, a: f64, b: f64) -> f64 {
        (b - a) + self.beta * ((2.0 * PI * b).sin() - (2.0 * PI * a).sin()) / (2.0 * PI)
    }

    /// `k x k` cell-centred grid with exact source masses of the grid squares.
    pub fn grid_cloud(&self, k: usize) -> Result<TorusCloud> {
        let pts = grid_points(k)?;
        let s = 1.0 / k as f64;
        let axis: Vec<f64> = (0..k).map(|i| self.interval_mass(i as f64 * s, (i + 1) as f64 * s)).collect();
        let mut masses = Vec::with_capacity(k * k);
        for j in 0..k {
            for i in 0..k {
                masses.push(axis[i] * axis[j]);
            }
        }
        TorusCloud::new(pts, masses)
    }
}

fn fan_rule() -> Vec<(f64, f64)> {
    gauss_legendre_unit(4)
}

/// `(∫_{[0,1]²} |∇u_h - ∇u|² dx)^{1/2}`, with the map difference reduced
/// to its nearest image.
pub fn torus_h1_error(map: &TransportMapPWC, problem: &TorusProblem) -> f64 {
    let rule = fan_rule();
    map.facets
        .par_iter()
        .zip(&map.targets)
        .map(|(f, &y)| geom::integrate_gauss(f, &rule, |x| nearest_image(y - problem.map(x)).norm2()))
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Mean-removed `L²` distance between `u_h = φ_h - |x|²/2` and `u`.
pub fn torus_l2_error(map: &TransportMapPWC, problem: &TorusProblem) -> f64 {
    let rule = fan_rule();
    let pwa = map.pwa();
    let per_facet = |g: &(dyn Fn(Point2, f64) -> f64 + Sync)| -> f64 {
        pwa.facets
            .par_iter()
            .map(|f| {
                let piece = pwa.pieces[f.piece];
                geom::integrate_gauss(&f.polygon, &rule, |x| g(x, piece.value(x) - 0.5 * x.norm2()))
            })
            .collect::<Vec<_>>()
            .iter()
            .sum()
    };
    let offset = per_facet(&|x, v| v - problem.potential_u(x));
    per_facet(&|x, v| (v - problem.potential_u(x) - offset).powi(2)).sqrt()
}

/// Root mean square of `u_i - u(x_i)` after removing the mean offset.
pub fn torus_vertex_l2_error(cloud: &TorusCloud, u: &QuasiPeriodicPotential, problem: &TorusProblem) -> f64 {
    let diff: Vec<f64> = cloud
        .points
        .iter()
        .zip(&u.values)
        .map(|(&x, v)| v - problem.potential_u(x))
        .collect();
    let n = diff.len() as f64;
    let mean = diff.iter().sum::<f64>() / n;
    (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `(Σ_i ∫_{cell_i} |x_i - T⁻¹(y)|² g dy)^{1/2}` with nearest images.
pub fn torus_inverse_map_error(diagram: &LaguerreDiagram, g: &TorusDensity, problem: &TorusProblem) -> f64 {
    let rule = gauss_legendre_unit(8);
    diagram
        .cells
        .par_iter()
        .zip(&diagram.sites)
        .map(|(c, &x)| {
            geom::integrate_gauss(c, &rule, |y| nearest_image(x - problem.inverse_map(y)).norm2() * g.eval(y))
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// `Σ_i ∫_{V_i} |x - x_i| f(x) dx` over the periodic Voronoi cells.
pub fn torus_w1_upper_bound(cloud: &TorusCloud, source: &TorusDensity) -> Result<f64> {
    let vor = periodic_cells(&cloud.points, &vec![0.0; cloud.len()], &TorusDensity::uniform())?;
    let rule = gauss_legendre_unit(20);
    Ok(vor
        .cells
        .par_iter()
        .zip(&cloud.points)
        .map(|(c, &x)| {
            c.edges()
                .map(|(a, b)| integrate_triangle_apex(x, a, b, &rule, |p| p.dist(x) * source.eval(p)))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum())
}

/// A solved grid instance of the torus reference problem.
#[derive(Debug, Clone)]
pub struct TorusInstance {
    pub problem: TorusProblem,
    pub cloud: TorusCloud,
    pub density: TorusDensity,
    pub solution: Solution,
    pub map: TransportMapPWC,
}

pub fn solve_torus_instance(problem: &TorusProblem, k: usize, settings: &SolveSettings) -> Result<TorusInstance> {
    solve_torus_instance_on(problem, problem.grid_cloud(k)?, settings)
}

/// Solves the torus problem with the masses carried by `cloud`.
pub fn solve_torus_instance_on(problem: &TorusProblem, cloud: TorusCloud, settings: &SolveSettings) -> Result<TorusInstance> {
    let density = TorusDensity::uniform();
    let solution = periodic_solve(&cloud, &density, settings)?;
    let u = QuasiPeriodicPotential::new(solution.potential.clone())?;
    let map = torus_transport_map(&cloud, &u)?;
    Ok(TorusInstance {
        problem: *problem,
        cloud,
        density,
        solution,
        map,
    })
}

impl TorusInstance {
    pub fn potential(&self) -> QuasiPeriodicPotential {
        QuasiPeriodicPotential {
            values: self.solution.potential.clone(),
        }
    }

    pub fn rate_row(&self) -> Result<RateRow> {
        let p = &self.problem;
        let h1 = torus_h1_error(&self.map, p);
        Ok(RateRow {
            h: self.cloud.mesh_norm,
            n: self.cloud.len(),
            h1_error: h1,
            l2_error: torus_l2_error(&self.map, p),
            map_l2: h1,
            vertex_l2: torus_vertex_l2_error(&self.cloud, &self.potential(), p),
            inverse_map_l2: torus_inverse_map_error(&self.solution.diagram, &self.density, p),
            w1_bound: torus_w1_upper_bound(&self.cloud, &p.source()?)?,
            newton_iters: self.solution.report.iterations,
            residual_inf: self.solution.report.final_residual_inf,
        })
    }
}

/// Torus analogue of [`crate::reference::rate_series`].
pub fn periodic_rate_series(beta: f64, ks: &[usize], settings: &SolveSettings) -> Result<RateReport> {
    let problem = TorusProblem::new(beta)?;
    let rows = ks
        .iter()
        .map(|&k| solve_torus_instance(&problem, k, settings)?.rate_row())
        .collect::<Result<Vec<_>>>()?;
    RateReport::new(rows)
}

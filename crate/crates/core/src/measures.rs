//! Source and target measures, point clouds with their dual cells, and the
//! discrete measures built from them.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, ConvexPolygon, Density, Point2, Uniform};
use crate::laguerre::{build_diagram, PotentialVector};
use crate::quadrature;

/// Density multiplied by a constant.
#[derive(Clone)]
pub struct Scaled {
    inner: Arc<dyn Density>,
    factor: f64,
}

impl Density for Scaled {
    fn eval(&self, p: Point2) -> f64 {
        self.factor * self.inner.eval(p)
    }

    fn constant(&self) -> Option<f64> {
        self.inner.constant().map(|c| c * self.factor)
    }
}

impl std::fmt::Debug for Scaled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scaled").field("factor", &self.factor).finish_non_exhaustive()
    }
}

fn normalized(support: &ConvexPolygon, density: Arc<dyn Density>) -> Result<(Scaled, f64)> {
    if support.is_empty() {
        return Err(Error::DegenerateDomain("empty support polygon".into()));
    }
    let (mass, _) = geom::mass_and_centroid(support, density.as_ref())?;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::BadDensity(format!("total mass {mass}")));
    }
    Ok((
        Scaled {
            inner: density,
            factor: 1.0 / mass,
        },
        mass,
    ))
}

/// Smallest sampled value of `g` on a 65x65 grid over the polygon's box
/// (points inside the polygon only) and at its vertices.
fn sampled_minimum(poly: &ConvexPolygon, g: &dyn Density) -> f64 {
    let (lo, hi) = poly.bbox().expect("nonempty polygon");
    let tol = 1e-12 * poly.diameter();
    let mut min = poly.vertices().iter().map(|&v| g.eval(v)).fold(f64::INFINITY, f64::min);
    for a in 0..=64 {
        for b in 0..=64 {
            let p = Point2::new(
                lo.x + (hi.x - lo.x) * a as f64 / 64.0,
                lo.y + (hi.y - lo.y) * b as f64 / 64.0,
            );
            if poly.contains(p, tol) {
                min = min.min(g.eval(p));
            }
        }
    }
    min
}

/// The target measure: a convex domain `Y` with a density bounded below.
#[derive(Clone, Debug)]
pub struct TargetDomain {
    boundary: ConvexPolygon,
    density: Scaled,
    /// Lower bound of the normalized density on `Y`.
    pub delta: f64,
    /// `∫_Y g` before normalization.
    pub total_mass: f64,
}

impl TargetDomain {
    /// Normalizes `density` to unit mass on `boundary`. The lower bound is
    /// estimated by sampling; use [`TargetDomain::with_lower_bound`] when
    /// it is known.
    pub fn new(boundary: ConvexPolygon, density: Arc<dyn Density>) -> Result<Self> {
        let (density, total_mass) = normalized(&boundary, density)?;
        let delta = sampled_minimum(&boundary, &density);
        if !(delta > 0.0) {
            return Err(Error::BadDensity(format!("target density not positive (min {delta})")));
        }
        Ok(TargetDomain {
            boundary,
            density,
            delta,
            total_mass,
        })
    }

    pub fn uniform(boundary: ConvexPolygon) -> Result<Self> {
        Self::new(boundary, Arc::new(Uniform(1.0)))
    }

    pub fn with_lower_bound(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn boundary(&self) -> &ConvexPolygon {
        &self.boundary
    }

    /// The normalized density.
    pub fn density(&self) -> &dyn Density {
        &self.density
    }

    pub fn is_uniform(&self) -> bool {
        self.density.constant().is_some()
    }
}

/// The source probability measure on a convex support `X`.
#[derive(Clone, Debug)]
pub struct SourceMeasure {
    support: ConvexPolygon,
    density: Scaled,
}

impl SourceMeasure {
    pub fn new(support: ConvexPolygon, density: Arc<dyn Density>) -> Result<Self> {
        let (density, _) = normalized(&support, density)?;
        Ok(SourceMeasure { support, density })
    }

    pub fn uniform(support: ConvexPolygon) -> Result<Self> {
        Self::new(support, Arc::new(Uniform(1.0)))
    }

    pub fn support(&self) -> &ConvexPolygon {
        &self.support
    }

    pub fn density(&self) -> &dyn Density {
        &self.density
    }
}

/// Points in `X` with a partition of `X` into cells, `points[i]` in `cells[i]`.
#[derive(Clone, Debug)]
pub struct SourceCloud {
    pub domain: ConvexPolygon,
    pub points: Vec<Point2>,
    pub cells: Vec<ConvexPolygon>,
    /// Largest cell diameter.
    pub mesh_norm: f64,
    /// Smallest distance between two points.
    pub separation: f64,
}

impl SourceCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cloud whose cells are the Voronoi cells of `points` clipped to `domain`.
    pub fn voronoi(domain: ConvexPolygon, points: Vec<Point2>) -> Result<Self> {
        let target = TargetDomain::uniform(domain.clone())?;
        let phi = PotentialVector::voronoi(&points);
        let d = build_diagram(&points, &phi.values, &target)?;
        let mesh_norm = d.cells.iter().map(|c| c.diameter()).fold(0.0, f64::max);
        // Nearest neighbours are Voronoi neighbours: their midpoint lies on
        // the shared edge.
        let separation = if points.len() < 2 {
            f64::INFINITY
        } else {
            d.edges
                .iter()
                .map(|e| points[e.i].dist(points[e.j]))
                .fold(f64::INFINITY, f64::min)
        };
        Ok(SourceCloud {
            domain,
            points,
            cells: d.cells,
            mesh_norm,
            separation,
        })
    }

    /// Largest distance from a point of `∂X` to the nearest cloud point.
    pub fn boundary_gap(&self) -> f64 {
        let verts = self.domain.vertices();
        let n = verts.len();
        let tol = 1e-9 * self.domain.diameter();
        let on_boundary = |p: Point2| {
            (0..n).any(|k| geom::point_segment_distance(p, verts[k], verts[(k + 1) % n]) <= tol)
        };
        self.cells
            .iter()
            .zip(&self.points)
            .flat_map(|(c, &x)| {
                c.vertices()
                    .iter()
                    .filter(move |&&v| on_boundary(v))
                    .map(move |v| v.dist(x))
            })
            .fold(0.0, f64::max)
    }
}

/// Points with nonnegative masses summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    pub points: Vec<Point2>,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    /// Rescales `masses` to sum to one.
    pub fn new(points: Vec<Point2>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::NoPoints);
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::BadDensity("negative or non-finite mass".into()));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateDiscretization);
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(DiscreteMeasure { points, masses })
    }

    pub fn uniform(points: Vec<Point2>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// `k x k` grid of cell centres on an axis-aligned rectangle.
pub fn grid_cloud(domain: &ConvexPolygon, k: usize) -> Result<SourceCloud> {
    if k == 0 {
        return Err(Error::InvalidInput("grid size k must be at least 1".into()));
    }
    let (lo, hi) = domain
        .bbox()
        .ok_or_else(|| Error::DegenerateDomain("empty domain".into()))?;
    let rect = ConvexPolygon::rectangle(lo, hi);
    if (rect.area() - domain.area()).abs() > 1e-12 * rect.area() {
        return Err(Error::InvalidInput("grid clouds need an axis-aligned rectangle".into()));
    }
    let dx = (hi.x - lo.x) / k as f64;
    let dy = (hi.y - lo.y) / k as f64;
    let mut points = Vec::with_capacity(k * k);
    let mut cells = Vec::with_capacity(k * k);
    for b in 0..k {
        for a in 0..k {
            let c0 = Point2::new(lo.x + a as f64 * dx, lo.y + b as f64 * dy);
            let c1 = Point2::new(
                if a + 1 == k { hi.x } else { lo.x + (a + 1) as f64 * dx },
                if b + 1 == k { hi.y } else { lo.y + (b + 1) as f64 * dy },
            );
            points.push((c0 + c1) * 0.5);
            cells.push(ConvexPolygon::rectangle(c0, c1));
        }
    }
    let mesh_norm = cells.iter().map(|c| c.diameter()).fold(0.0, f64::max);
    Ok(SourceCloud {
        domain: domain.clone(),
        points,
        cells,
        mesh_norm,
        separation: if k == 1 { f64::INFINITY } else { dx.min(dy) },
    })
}

/// `n` uniform points in `domain` by rejection sampling from its bounding box.
pub fn random_points(domain: &ConvexPolygon, n: usize, seed: u64) -> Result<Vec<Point2>> {
    let (lo, hi) = domain
        .bbox()
        .ok_or_else(|| Error::DegenerateDomain("empty domain".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let p = Point2::new(
            lo.x + (hi.x - lo.x) * rng.random::<f64>(),
            lo.y + (hi.y - lo.y) * rng.random::<f64>(),
        );
        if domain.contains(p, 0.0) {
            points.push(p);
        }
    }
    Ok(points)
}

/// `n` random points in `domain` with their clipped Voronoi cells.
pub fn random_cloud(domain: &ConvexPolygon, n: usize, seed: u64) -> Result<SourceCloud> {
    if n == 0 {
        return Err(Error::NoPoints);
    }
    SourceCloud::voronoi(domain.clone(), random_points(domain, n, seed)?)
}

/// `f_i = ∫_{C_i} f dx`, renormalized to sum to one.
pub fn discretize(mu: &SourceMeasure, cloud: &SourceCloud) -> Result<DiscreteMeasure> {
    let masses: Vec<f64> = cloud
        .cells
        .par_iter()
        .map(|c| geom::mass_and_centroid(c, mu.density()).map(|(m, _)| m))
        .collect::<Result<_>>()?;
    let total: f64 = masses.iter().sum();
    let tol = 1e-12 * total.abs().max(1.0);
    if let Some(m) = masses.iter().find(|m| **m < -tol) {
        return Err(Error::BadDensity(format!("negative cell mass {m}")));
    }
    DiscreteMeasure::new(cloud.points.clone(), masses.into_iter().map(|m| m.max(0.0)).collect())
}

/// `f(x_i) area(C_i)`, renormalized.
pub fn discretize_weighted(mu: &SourceMeasure, cloud: &SourceCloud) -> Result<DiscreteMeasure> {
    let masses: Vec<f64> = cloud
        .points
        .iter()
        .zip(&cloud.cells)
        .map(|(&x, c)| mu.density().eval(x) * c.area())
        .collect();
    if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
        return Err(Error::BadDensity("negative or non-finite density at a site".into()));
    }
    if masses.iter().all(|m| *m == 0.0) {
        return Err(Error::DegenerateDiscretization);
    }
    DiscreteMeasure::new(cloud.points.clone(), masses)
}

/// `Σ_i ∫_{C_i} |x - x_i| dμ(x)`, an upper bound for `W₁(μ, μ_h)`.
pub fn w1_upper_bound(mu: &SourceMeasure, cloud: &SourceCloud) -> f64 {
    let rule = quadrature::gauss_legendre_unit(20);
    let g = mu.density();
    cloud
        .cells
        .par_iter()
        .zip(&cloud.points)
        .map(|(c, &x)| {
            c.edges()
                .map(|(a, b)| quadrature::integrate_triangle_apex(x, a, b, &rule, |p| p.dist(x) * g.eval(p)))
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Reads a point cloud CSV with header `x,y` or `x,y,mass`. Lines starting
/// with `#` are skipped.
pub fn read_point_cloud(path: &Path) -> Result<(Vec<Point2>, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ix), Some(iy)) = (col("x"), col("y")) else {
        return Err(Error::InvalidInput(format!("{}: header needs x and y columns", path.display())));
    };
    let im = col("mass");
    let mut points = Vec::new();
    let mut masses = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidInput(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        points.push(Point2::new(num(ix)?, num(iy)?));
        if let Some(im) = im {
            masses.push(num(im)?);
        }
    }
    Ok((points, im.map(|_| masses)))
}

pub fn write_point_cloud(path: &Path, points: &[Point2], masses: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match masses {
        Some(m) => {
            w.write_record(["x", "y", "mass"])?;
            for (p, m) in points.iter().zip(m) {
                w.write_record([p.x.to_string(), p.y.to_string(), m.to_string()])?;
            }
        }
        None => {
            w.write_record(["x", "y"])?;
            for p in points {
                w.write_record([p.x.to_string(), p.y.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

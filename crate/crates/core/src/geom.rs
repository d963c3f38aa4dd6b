//! Planar convex geometry: points, half-planes, convex polygons, hulls,
//! clipping and density integrals over polygons.
//!
//! Nothing here uses exact predicates. Orientation and duplicate tests use a
//! tolerance of [`EPS_GEOM_REL`] times the diameter of the polygon (or domain)
//! involved.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative geometric tolerance (multiplied by a length scale).
pub const EPS_GEOM_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counterclockwise rotation by a right angle.
    #[inline]
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    #[inline]
    fn add_assign(&mut self, o: Point2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn div(self, s: f64) -> Point2 {
        Point2::new(self.x / s, self.y / s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// The closed half-plane `{p : normal . p <= offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Point2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Point2, offset: f64) -> Result<Self> {
        if !(normal.norm2() > 0.0) || !normal.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidInput("half-plane normal must be finite and nonzero".into()));
        }
        Ok(HalfPlane { normal, offset })
    }

    /// The complementary closed half-plane.
    pub fn flipped(&self) -> HalfPlane {
        HalfPlane {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    #[inline]
    pub fn signed_value(&self, p: Point2) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Something that can be integrated over polygons: a density on the plane.
pub trait Density: Send + Sync {
    fn eval(&self, p: Point2) -> f64;

    /// `Some(c)` when the density is the constant `c`; enables exact integrals.
    fn constant(&self) -> Option<f64> {
        None
    }
}

/// Constant density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform(pub f64);

impl Density for Uniform {
    fn eval(&self, _p: Point2) -> f64 {
        self.0
    }

    fn constant(&self) -> Option<f64> {
        Some(self.0)
    }
}

impl<F> Density for F
where
    F: Fn(Point2) -> f64 + Send + Sync,
{
    fn eval(&self, p: Point2) -> f64 {
        self(p)
    }
}

/// Convex polygon with counterclockwise vertices, or the canonical empty polygon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        ConvexPolygon { vertices: Vec::new() }
    }

    /// Builds a polygon from vertices in convex position. Clockwise input is
    /// reversed; near-duplicate consecutive vertices are merged and slivers
    /// collapse to the empty polygon.
    pub fn from_vertices(vertices: Vec<Point2>) -> Self {
        let mut poly = ConvexPolygon { vertices };
        if poly.signed_area() < 0.0 {
            poly.vertices.reverse();
        }
        let eps = EPS_GEOM_REL * bbox_diagonal(&poly.vertices);
        poly.vertices = dedup_ring(std::mem::take(&mut poly.vertices), eps);
        poly.normalized(eps)
    }

    /// Wraps a ring that is already counterclockwise, convex and deduplicated.
    pub(crate) fn from_vertices_unchecked(vertices: Vec<Point2>) -> Self {
        ConvexPolygon { vertices }
    }

    pub fn rectangle(min: Point2, max: Point2) -> Self {
        Self::from_vertices(vec![
            min,
            Point2::new(max.x, min.y),
            max,
            Point2::new(min.x, max.y),
        ])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0))
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn normalized(mut self, eps: f64) -> Self {
        if self.vertices.len() < 3 || self.signed_area() <= eps * eps {
            self.vertices.clear();
        }
        self
    }

    pub fn signed_area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Unweighted centroid; `None` for the empty polygon.
    pub fn centroid(&self) -> Option<Point2> {
        if self.is_empty() {
            return None;
        }
        let o = self.vertices[0];
        let mut acc = Point2::ZERO;
        let mut area2 = 0.0;
        for (a, b) in self.fan() {
            let w = (a - o).cross(b - o);
            acc += (o + a + b) * w;
            area2 += w;
        }
        Some(acc / (3.0 * area2))
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d2: f64 = 0.0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                d2 = d2.max((v[i] - v[j]).norm2());
            }
        }
        d2.sqrt()
    }

    pub fn bbox(&self) -> Option<(Point2, Point2)> {
        bbox(&self.vertices)
    }

    /// Fan triangulation `(v0, v_k, v_{k+1})`, returned as the pairs `(v_k, v_{k+1})`.
    pub fn fan(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (1..n.saturating_sub(1)).map(move |k| (self.vertices[k], self.vertices[k + 1]))
    }

    /// Edges `(v_k, v_{k+1})` in counterclockwise order.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    /// Whether `p` lies in the polygon, allowing `tol` of slack outside each edge.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        !self.is_empty() && self.distance_outside(p) <= tol
    }

    /// Euclidean distance from `p` to the polygon (0 inside).
    pub fn distance_outside(&self, p: Point2) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let mut inside = true;
        for (a, b) in self.edges() {
            if (b - a).cross(p - a) < 0.0 {
                inside = false;
                break;
            }
        }
        if inside {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Intersection with a closed half-plane.
    pub fn clip(&self, hp: &HalfPlane) -> ConvexPolygon {
        if self.is_empty() {
            return ConvexPolygon::empty();
        }
        let eps = EPS_GEOM_REL * bbox_diagonal(&self.vertices);
        let tags = vec![(); self.vertices.len()];
        let (vertices, _) = clip_tagged(&self.vertices, &tags, hp, (), eps);
        ConvexPolygon { vertices }
    }

    /// Checks the stored invariants: CCW, convex within `EPS_GEOM_REL`, no
    /// duplicate consecutive vertices.
    pub fn is_valid(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return true;
        }
        if n < 3 || self.vertices.iter().any(|p| !p.is_finite()) {
            return false;
        }
        let eps = EPS_GEOM_REL * bbox_diagonal(&self.vertices);
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let c = self.vertices[(k + 2) % n];
            if a.dist(b) <= eps {
                return false;
            }
            if (b - a).cross(c - b) < -eps * (a.dist(b) + b.dist(c)) {
                return false;
            }
        }
        self.signed_area() > 0.0
    }

    /// Vertex-for-vertex comparison up to a cyclic shift.
    pub fn approx_eq(&self, other: &ConvexPolygon, tol: f64) -> bool {
        let n = self.len();
        if n != other.len() {
            return false;
        }
        if n == 0 {
            return true;
        }
        let a = &self.vertices;
        let b = &other.vertices;
        (0..n).any(|shift| (0..n).all(|k| a[k].dist(b[(k + shift) % n]) <= tol))
    }
}

/// Convex hull (counterclockwise, collinear points removed). All-collinear
/// input yields the empty polygon.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("non-finite point".into()));
    }
    let idx = convex_hull_indices(points);
    let poly = ConvexPolygon {
        vertices: idx.into_iter().map(|i| points[i]).collect(),
    };
    let eps = EPS_GEOM_REL * bbox_diagonal(points);
    Ok(poly.normalized(eps))
}

/// Monotone-chain hull returning input indices in counterclockwise order.
/// Collinear points are dropped; fewer than 3 indices means degenerate input.
pub(crate) fn convex_hull_indices(points: &[Point2]) -> Vec<usize> {
    let eps = EPS_GEOM_REL * bbox_diagonal(points);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });
    order.dedup_by(|a, b| points[*a].dist(points[*b]) <= eps);
    if order.len() < 3 {
        return order;
    }
    // A turn counts as strictly left only beyond the tolerance band.
    let left = |o: Point2, a: Point2, b: Point2| {
        let c = (a - o).cross(b - o);
        c > eps * (a.dist(o) + b.dist(o))
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for &i in &order {
        while hull.len() >= 2 && !left(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) {
            hull.pop();
        }
        hull.push(i);
    }
    let lower_len = hull.len() + 1;
    for &i in order.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && !left(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i])
        {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// Sutherland-Hodgman step on a convex ring whose edge `k` (from vertex `k`
/// to `k+1`) carries `tags[k]`. The edge created along the clipping line gets
/// `new_tag`. Vertices within `eps` of each other are merged and slivers
/// collapse to empty.
pub(crate) fn clip_tagged<T: Copy>(
    verts: &[Point2],
    tags: &[T],
    hp: &HalfPlane,
    new_tag: T,
    eps: f64,
) -> (Vec<Point2>, Vec<T>) {
    let n = verts.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let scale = hp.normal.norm();
    let tol = eps * scale;
    let s: Vec<f64> = verts.iter().map(|&p| hp.signed_value(p)).collect();
    if s.iter().all(|&v| v <= tol) {
        return (verts.to_vec(), tags.to_vec());
    }
    if s.iter().all(|&v| v > -tol) {
        return (Vec::new(), Vec::new());
    }
    let mut out_v = Vec::with_capacity(n + 1);
    let mut out_t = Vec::with_capacity(n + 1);
    for k in 0..n {
        let j = (k + 1) % n;
        let (a, b) = (verts[k], verts[j]);
        let (sa, sb) = (s[k], s[j]);
        let a_in = sa <= tol;
        let b_in = sb <= tol;
        if a_in {
            out_v.push(a);
            out_t.push(tags[k]);
            if !b_in {
                let t = (sa / (sa - sb)).clamp(0.0, 1.0);
                out_v.push(a + (b - a) * t);
                out_t.push(new_tag);
            }
        } else if b_in {
            let t = (sa / (sa - sb)).clamp(0.0, 1.0);
            out_v.push(a + (b - a) * t);
            out_t.push(tags[k]);
        }
    }
    dedup_tagged(&mut out_v, &mut out_t, eps);
    if out_v.len() < 3 || shoelace(&out_v) <= eps * eps {
        return (Vec::new(), Vec::new());
    }
    (out_v, out_t)
}

/// Drops vertex k whenever it nearly coincides with vertex k+1, together
/// with the (tiny) edge tag it owns.
fn dedup_tagged<T>(v: &mut Vec<Point2>, t: &mut Vec<T>, eps: f64) {
    let mut k = 0;
    while v.len() > 1 && k < v.len() {
        let j = (k + 1) % v.len();
        if v[k].dist(v[j]) <= eps {
            v.remove(k);
            t.remove(k);
        } else {
            k += 1;
        }
    }
}

fn dedup_ring(mut v: Vec<Point2>, eps: f64) -> Vec<Point2> {
    let mut t = vec![(); v.len()];
    dedup_tagged(&mut v, &mut t, eps);
    v
}

pub(crate) fn shoelace(v: &[Point2]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let o = v[0];
    let mut acc = 0.0;
    for k in 1..n - 1 {
        acc += (v[k] - o).cross(v[k + 1] - o);
    }
    0.5 * acc
}

pub(crate) fn bbox(points: &[Point2]) -> Option<(Point2, Point2)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| {
        (
            Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    }))
}

pub(crate) fn bbox_diagonal(points: &[Point2]) -> f64 {
    bbox(points).map_or(0.0, |(lo, hi)| lo.dist(hi))
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm2();
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Polygon area.
pub fn area(poly: &ConvexPolygon) -> f64 {
    poly.area()
}

/// Half-plane clipping.
pub fn clip(poly: &ConvexPolygon, hp: &HalfPlane) -> ConvexPolygon {
    poly.clip(hp)
}

/// `(∫_poly g, g-weighted centroid)`. The centroid is `None` for empty
/// polygons or zero mass.
///
/// Constant densities are integrated exactly; otherwise each fan triangle
/// uses the symmetric degree-4 rule (exact for affine `g`).
pub fn mass_and_centroid(poly: &ConvexPolygon, g: &dyn Density) -> Result<(f64, Option<Point2>)> {
    if poly.is_empty() {
        return Ok((0.0, None));
    }
    if let Some(c) = g.constant() {
        if !c.is_finite() {
            return Err(Error::BadDensity(format!("constant density {c}")));
        }
        let m = c * poly.area();
        return Ok((m, if m != 0.0 { poly.centroid() } else { None }));
    }
    let o = poly.vertices()[0];
    let mut mass = 0.0;
    let mut moment = Point2::ZERO;
    let mut bad = None;
    for (a, b) in poly.fan() {
        quadrature::triangle_deg4(o, a, b, |p, w| {
            let v = g.eval(p);
            if !v.is_finite() {
                bad = Some(p);
            }
            mass += w * v;
            moment += p * (w * v);
        });
    }
    if let Some(p) = bad {
        return Err(Error::BadDensity(format!("non-finite sample at ({}, {})", p.x, p.y)));
    }
    Ok((mass, if mass != 0.0 { Some(moment / mass) } else { None }))
}

/// Degree-4 integral of an arbitrary function over a polygon.
pub fn integrate(poly: &ConvexPolygon, f: impl Fn(Point2) -> f64) -> f64 {
    if poly.is_empty() {
        return 0.0;
    }
    let o = poly.vertices()[0];
    poly.fan()
        .map(|(a, b)| quadrature::integrate_triangle(o, a, b, &f))
        .sum()
}

/// Integral over a polygon with the tensor Gauss rule `rule` (from
/// [`quadrature::gauss_legendre_unit`]) on each fan triangle; `n` points per
/// direction are exact for polynomials of degree `2n - 2`.
pub fn integrate_gauss(poly: &ConvexPolygon, rule: &[(f64, f64)], f: impl Fn(Point2) -> f64) -> f64 {
    if poly.is_empty() {
        return 0.0;
    }
    let o = poly.vertices()[0];
    poly.fan()
        .map(|(a, b)| quadrature::integrate_triangle_apex(o, a, b, rule, &f))
        .sum()
}

/// `∫_a^b g ds`: exact for constant `g`, 3-point Gauss otherwise.
pub fn segment_integral(a: Point2, b: Point2, g: &dyn Density) -> f64 {
    let len = a.dist(b);
    if let Some(c) = g.constant() {
        return c * len;
    }
    const NODES: [(f64, f64); 3] = [
        (0.112_701_665_379_258_3, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.887_298_334_620_741_7, 5.0 / 18.0),
    ];
    len * NODES
        .iter()
        .map(|&(t, w)| w * g.eval(a + (b - a) * t))
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn hull_of_square_keeps_corners_only() {
        let sq = convex_hull(&[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)]).unwrap();
        assert!(sq.approx_eq(&ConvexPolygon::unit_square(), 0.0));
        let with_inner =
            convex_hull(&[p(0., 0.), p(1., 0.), p(0.5, 0.5), p(1., 1.), p(0., 1.)]).unwrap();
        assert!(with_inner.approx_eq(&sq, 0.0));
        let with_edge_point = convex_hull(&[p(0., 0.), p(0.5, 0.), p(1., 0.), p(1., 1.), p(0., 1.)]).unwrap();
        assert_eq!(with_edge_point.len(), 4);
    }

    #[test]
    fn hull_degenerate_and_empty_inputs() {
        assert!(convex_hull(&[p(0., 0.), p(1., 1.)]).unwrap().is_empty());
        assert!(convex_hull(&[p(0., 0.), p(1., 1.), p(2., 2.)]).unwrap().is_empty());
        assert!(matches!(convex_hull(&[]), Err(Error::NoPoints)));
    }

    #[test]
    fn clip_examples() {
        let sq = ConvexPolygon::unit_square();
        let left = sq.clip(&HalfPlane::new(p(1., 0.), 0.25).unwrap());
        assert!((left.area() - 0.25).abs() < 1e-15);
        assert!(left.approx_eq(&ConvexPolygon::rectangle(p(0., 0.), p(0.25, 1.)), 1e-15));
        assert_eq!(sq.clip(&HalfPlane::new(p(1., 0.), 2.0).unwrap()), sq);
        assert!(sq.clip(&HalfPlane::new(p(1., 0.), -1.0).unwrap()).is_empty());
    }

    #[test]
    fn area_examples() {
        assert_eq!(ConvexPolygon::unit_square().area(), 1.0);
        let tri = ConvexPolygon::from_vertices(vec![p(0., 0.), p(1., 0.), p(0., 1.)]);
        assert_eq!(tri.area(), 0.5);
        assert_eq!(ConvexPolygon::empty().area(), 0.0);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let tri = ConvexPolygon::from_vertices(vec![p(0., 0.), p(0., 1.), p(1., 0.)]);
        assert!(tri.signed_area() > 0.0);
        assert!(tri.is_valid());
    }

    #[test]
    fn mass_and_centroid_examples() {
        let sq = ConvexPolygon::unit_square();
        let (m, c) = mass_and_centroid(&sq, &Uniform(1.0)).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(c.unwrap(), p(0.5, 0.5));

        let (m, c) = mass_and_centroid(&sq, &|q: Point2| 2.0 * q.x).unwrap();
        let c = c.unwrap();
        assert!((m - 1.0).abs() < 1e-14);
        assert!((c.x - 2.0 / 3.0).abs() < 1e-14 && (c.y - 0.5).abs() < 1e-14);

        let (m, c) = mass_and_centroid(&ConvexPolygon::empty(), &Uniform(3.0)).unwrap();
        assert_eq!(m, 0.0);
        assert!(c.is_none());

        assert!(matches!(
            mass_and_centroid(&sq, &|_q: Point2| f64::NAN),
            Err(Error::BadDensity(_))
        ));
    }

    #[test]
    fn affine_density_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let sq = ConvexPolygon::unit_square();
        let g = |q: Point2| 2.0 * q.x;
        let (m, c) = mass_and_centroid(&sq, &g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let (mut mm, mut mx, mut my) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let q = p(rng.random(), rng.random());
            let w = g(q);
            mm += w;
            mx += w * q.x;
            my += w * q.y;
        }
        let mm = mm / n as f64;
        assert!((mm - m).abs() < 5e-3);
        let c = c.unwrap();
        assert!((mx / n as f64 / mm - c.x).abs() < 5e-3);
        assert!((my / n as f64 / mm - c.y).abs() < 5e-3);
    }

    #[test]
    fn distance_outside_polygon() {
        let sq = ConvexPolygon::unit_square();
        assert_eq!(sq.distance_outside(p(0.3, 0.4)), 0.0);
        assert!((sq.distance_outside(p(1.5, 0.5)) - 0.5).abs() < 1e-15);
        assert!((sq.distance_outside(p(2.0, 2.0)) - 2f64.sqrt()).abs() < 1e-15);
    }

    fn arb_halfplane() -> impl Strategy<Value = HalfPlane> {
        (0.0..std::f64::consts::TAU, -0.5f64..1.5)
            .prop_map(|(t, off)| HalfPlane::new(p(t.cos(), t.sin()), off).unwrap())
    }

    fn arb_polygon() -> impl Strategy<Value = ConvexPolygon> {
        prop::collection::vec((-1.0f64..2.0, -1.0f64..2.0), 3..12).prop_map(|pts| {
            let pts: Vec<Point2> = pts.into_iter().map(Point2::from).collect();
            convex_hull(&pts).unwrap()
        })
    }

    proptest! {
        #[test]
        fn clip_is_idempotent(poly in arb_polygon(), hp in arb_halfplane()) {
            let once = poly.clip(&hp);
            let twice = once.clip(&hp);
            let eps = EPS_GEOM_REL * 4.0;
            prop_assert!(once.approx_eq(&twice, eps));
        }

        #[test]
        fn complementary_clips_partition_area(poly in arb_polygon(), hp in arb_halfplane()) {
            let a = poly.clip(&hp).area() + poly.clip(&hp.flipped()).area();
            prop_assert!((a - poly.area()).abs() <= 1e-12 * poly.area().max(1e-300));
        }

        #[test]
        fn hull_is_permutation_invariant(
            pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let pts: Vec<Point2> = pts.into_iter().map(Point2::from).collect();
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = convex_hull(&pts).unwrap();
            let b = convex_hull(&shuffled).unwrap();
            prop_assert!(a.approx_eq(&b, 0.0));
            prop_assert!(a.is_valid());
        }

        #[test]
        fn uniform_density_matches_area_and_centroid(poly in arb_polygon()) {
            prop_assume!(!poly.is_empty());
            let (m, c) = mass_and_centroid(&poly, &Uniform(1.0)).unwrap();
            prop_assert!((m - poly.area()).abs() <= 1e-12);
            let (mq, cq) = mass_and_centroid(&poly, &|_q: Point2| 1.0).unwrap();
            prop_assert!((mq - m).abs() <= 1e-12);
            prop_assert!(c.unwrap().dist(cq.unwrap()) <= 1e-12);
        }
    }
}

//! Lower convex hull of lifted planar points `(x_k, z_k)` by gift wrapping.
//!
//! Facets are found one at a time by rotating a supporting plane about a
//! known hull edge. Points within a small tolerance of a facet plane are
//! members of that facet, so coplanar groups come out as one polygonal
//! facet rather than an arbitrary triangulation.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::geom::{self, convex_hull_indices, Point2};
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct HullFacet {
    /// Sorted indices of the points lying on the facet plane.
    pub members: Vec<usize>,
    /// Corners of the projected facet, counterclockwise.
    pub ring: Vec<usize>,
    pub gradient: Point2,
    pub intercept: f64,
}

impl HullFacet {
    pub fn value(&self, x: Point2) -> f64 {
        self.gradient.dot(x) + self.intercept
    }
}

#[derive(Debug, Clone)]
pub struct LowerHull {
    /// Corners of the projected hull, counterclockwise.
    pub boundary: Vec<usize>,
    pub facets: Vec<HullFacet>,
}

struct Wrapper<'a> {
    xy: &'a [Point2],
    z: &'a [f64],
    tol_z: f64,
    tol_n: f64,
}

impl Wrapper<'_> {
    /// Supporting plane through edge `p -> q` that is tight on the left of
    /// the edge; `None` when no point lies strictly to the left.
    fn pivot(&self, p: usize, q: usize) -> Option<(Point2, f64)> {
        let (xp, xq) = (self.xy[p], self.xy[q]);
        let e = xq - xp;
        let len2 = e.norm2();
        let n = e.perp() / len2.sqrt();
        let slope_e = (self.z[q] - self.z[p]) / len2;
        let mut best: Option<(f64, f64)> = None;
        for (c, &xc) in self.xy.iter().enumerate() {
            let off = n.dot(xc - xp);
            if off <= self.tol_n {
                continue;
            }
            let base = self.z[p] + slope_e * e.dot(xc - xp);
            let ratio = (self.z[c] - base) / off;
            // Ties go to the point nearest the edge, which is the most
            // accurate plane.
            match best {
                Some((r, o)) if ratio > r || (ratio == r && off >= o) => {}
                _ => best = Some((ratio, off)),
            }
        }
        let (s, _) = best?;
        let grad = e * slope_e + n * s;
        Some((grad, self.z[p] - grad.dot(xp)))
    }

    /// Members and refined plane of the facet supported by `plane`.
    fn facet(&self, plane: (Point2, f64)) -> Option<HullFacet> {
        let (g, b) = plane;
        let members: Vec<usize> = (0..self.xy.len())
            .filter(|&k| (self.z[k] - g.dot(self.xy[k]) - b).abs() <= self.tol_z)
            .collect();
        if members.len() < 3 {
            return None;
        }
        let pts: Vec<Point2> = members.iter().map(|&k| self.xy[k]).collect();
        let ring_local = convex_hull_indices(&pts);
        if ring_local.len() < 3 {
            return None;
        }
        let ring: Vec<usize> = ring_local.iter().map(|&k| members[k]).collect();
        let (gradient, intercept) = fit_plane(self.xy, self.z, &members).unwrap_or((g, b));
        Some(HullFacet {
            members,
            ring,
            gradient,
            intercept,
        })
    }
}

/// Least-squares plane through the given lifted points.
fn fit_plane(xy: &[Point2], z: &[f64], idx: &[usize]) -> Option<(Point2, f64)> {
    let n = idx.len() as f64;
    let (mut cx, mut cy, mut cz) = (0.0, 0.0, 0.0);
    for &k in idx {
        cx += xy[k].x;
        cy += xy[k].y;
        cz += z[k];
    }
    let (cx, cy, cz) = (cx / n, cy / n, cz / n);
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &k in idx {
        let (dx, dy, dz) = (xy[k].x - cx, xy[k].y - cy, z[k] - cz);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det.abs() > 1e-300) {
        return None;
    }
    let gx = (sxz * syy - syz * sxy) / det;
    let gy = (syz * sxx - sxz * sxy) / det;
    let g = Point2::new(gx, gy);
    Some((g, cz - g.dot(Point2::new(cx, cy))))
}

/// Lower convex hull of `(xy[k], z[k])`. Fails when the points do not span
/// a proper polygon.
pub fn lower_hull(xy: &[Point2], z: &[f64]) -> Result<LowerHull> {
    if xy.len() != z.len() {
        return Err(Error::InvalidInput("lift has the wrong length".into()));
    }
    if xy.is_empty() {
        return Err(Error::NoPoints);
    }
    let boundary = convex_hull_indices(xy);
    if boundary.len() < 3 {
        return Err(Error::DegenerateDomain("points are collinear".into()));
    }
    let diam = geom::bbox_diagonal(xy);
    let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = Wrapper {
        xy,
        z,
        tol_z: tol::HULL_PLANE_REL * ((zmax - zmin) + diam * diam).max(f64::MIN_POSITIVE),
        tol_n: 1e-9 * diam,
    };

    // First edge: from a hull corner along the hull edge, to the point on
    // that edge with the smallest slope (ties to the nearest).
    let a = boundary[0];
    let e = xy[boundary[1]] - xy[a];
    let elen = e.norm();
    let mut b = boundary[1];
    let mut best = (f64::INFINITY, f64::INFINITY);
    for (c, &xc) in xy.iter().enumerate() {
        let d = xc - xy[a];
        let along = d.dot(e) / elen;
        if c == a || along <= w.tol_n || along > elen + w.tol_n || e.cross(d).abs() > w.tol_n * elen {
            continue;
        }
        let slope = (z[c] - z[a]) / along;
        if slope < best.0 - 1e-14 * slope.abs().max(1.0) || (slope <= best.0 + 1e-14 * slope.abs().max(1.0) && along < best.1) {
            best = (slope, along);
            b = c;
        }
    }

    let mut facets: Vec<HullFacet> = Vec::new();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut owned: HashSet<(usize, usize)> = HashSet::new();
    let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
    let mut tried: HashSet<(usize, usize)> = HashSet::new();
    queue.push_back((a, b));
    while let Some((p, q)) = queue.pop_front() {
        if owned.contains(&(p, q)) || !tried.insert((p, q)) {
            continue;
        }
        let Some(plane) = w.pivot(p, q) else { continue };
        let Some(f) = w.facet(plane) else { continue };
        if index.contains_key(&f.members) {
            continue;
        }
        let n = f.ring.len();
        for k in 0..n {
            let (u, v) = (f.ring[k], f.ring[(k + 1) % n]);
            owned.insert((u, v));
            queue.push_back((v, u));
        }
        index.insert(f.members.clone(), facets.len());
        facets.push(f);
        if facets.len() > 8 * xy.len() + 16 {
            return Err(Error::DegenerateDomain("lower hull did not close".into()));
        }
    }
    Ok(LowerHull { boundary, facets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ConvexPolygon;
    use rand::{Rng, SeedableRng};

    fn poly(xy: &[Point2], ring: &[usize]) -> ConvexPolygon {
        ConvexPolygon::from_vertices(ring.iter().map(|&k| xy[k]).collect())
    }

    #[test]
    fn single_triangle() {
        let xy = [Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        let h = lower_hull(&xy, &[1.0, 3.0, -1.0]).unwrap();
        assert_eq!(h.facets.len(), 1);
        let f = &h.facets[0];
        assert!((f.gradient.x - 2.0).abs() < 1e-14 && (f.gradient.y + 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
    }

    #[test]
    fn coplanar_square_is_one_facet() {
        let mut xy = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                xy.push(Point2::new(i as f64, j as f64));
            }
        }
        let z: Vec<f64> = xy.iter().map(|p| 0.5 * p.x - p.y + 2.0).collect();
        let h = lower_hull(&xy, &z).unwrap();
        assert_eq!(h.facets.len(), 1);
        assert_eq!(h.facets[0].members.len(), 25);
        assert_eq!(h.facets[0].ring.len(), 4);
    }

    #[test]
    fn separable_grid_gives_quads() {
        let k = 6;
        let mut xy = Vec::new();
        for i in 0..k {
            for j in 0..k {
                xy.push(Point2::new(i as f64, j as f64));
            }
        }
        let z: Vec<f64> = xy.iter().map(|p| p.x * p.x + 0.3 * p.y.powi(4)).collect();
        let h = lower_hull(&xy, &z).unwrap();
        assert_eq!(h.facets.len(), (k - 1) * (k - 1));
        for f in &h.facets {
            assert_eq!(f.members.len(), 4);
        }
    }

    #[test]
    fn paraboloid_lift_tiles_the_hull() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let xy: Vec<Point2> = (0..300).map(|_| Point2::new(rng.random(), rng.random())).collect();
        let z: Vec<f64> = xy.iter().map(|p| p.norm2() + 0.01 * rng.random::<f64>()).collect();
        let h = lower_hull(&xy, &z).unwrap();
        let area: f64 = h.facets.iter().map(|f| poly(&xy, &f.ring).area()).sum();
        let hull_area = poly(&xy, &h.boundary).area();
        assert!((area - hull_area).abs() < 1e-12, "{area} vs {hull_area}");
        // Every facet plane supports all lifted points.
        for f in &h.facets {
            for (p, zz) in xy.iter().zip(&z) {
                assert!(*zz >= f.value(*p) - 1e-12);
            }
        }
    }

    #[test]
    fn collinear_input_is_degenerate() {
        let xy = [Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), Point2::new(2.0, 2.0)];
        assert!(matches!(lower_hull(&xy, &[0.0; 3]), Err(Error::DegenerateDomain(_))));
    }
}

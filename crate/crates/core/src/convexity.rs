//! Discrete Legendre transforms, the piecewise-affine convex extension of a
//! site potential, the piecewise-constant transport map and Monge-Ampère
//! measures of max-of-affine functions.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{ConvexPolygon, Point2};
use crate::hull::{lower_hull, HullFacet};
use crate::laguerre::{cluster_points, DualVertices, LaguerreDiagram};
use crate::measures::DiscreteMeasure;
use crate::tol;

/// `x ↦ gradient.x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePiece {
    pub gradient: Point2,
    pub intercept: f64,
}

impl AffinePiece {
    pub fn value(&self, x: Point2) -> f64 {
        self.gradient.dot(x) + self.intercept
    }
}

/// A polygon of the extension's domain on which one affine piece is active.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub polygon: ConvexPolygon,
    pub piece: usize,
    /// Sites whose lifted points lie on the facet plane.
    pub sites: Vec<usize>,
}

/// Convex function that is the maximum of finitely many affine pieces on
/// its domain, with the domain partitioned into facets.
#[derive(Debug, Clone)]
pub struct PiecewiseAffineConvex {
    pub pieces: Vec<AffinePiece>,
    pub domain: ConvexPolygon,
    pub facets: Vec<Facet>,
}

impl PiecewiseAffineConvex {
    /// Max over all pieces (valid on the domain).
    pub fn eval(&self, x: Point2) -> f64 {
        self.pieces.iter().map(|p| p.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the facet whose piece attains the max at `x`, lowest index
    /// on ties; `None` outside the domain.
    pub fn facet_at(&self, x: Point2) -> Option<usize> {
        if !self.domain.contains(x, 1e-12 * self.domain.diameter()) {
            return None;
        }
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, f) in self.facets.iter().enumerate() {
            let v = self.pieces[f.piece].value(x);
            if v > best.0 {
                best = (v, k);
            }
        }
        Some(best.1)
    }
}

/// `ψ(y) = max_i (x_i.y - phi_i)`.
pub fn legendre_discrete(sites: &[Point2], phi: &[f64], y: Point2) -> f64 {
    sites
        .iter()
        .zip(phi)
        .map(|(x, p)| x.dot(y) - p)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `sup_{y in Y} x.y`, attained at a vertex.
pub fn support_function(domain: &ConvexPolygon, x: Point2) -> f64 {
    domain
        .vertices()
        .iter()
        .map(|v| v.dot(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn from_hull(xy: &[Point2], facets: Vec<HullFacet>, boundary: &[usize]) -> PiecewiseAffineConvex {
    let domain = ConvexPolygon::from_vertices(boundary.iter().map(|&k| xy[k]).collect());
    let mut pieces = Vec::with_capacity(facets.len());
    let mut out = Vec::with_capacity(facets.len());
    for (k, f) in facets.into_iter().enumerate() {
        pieces.push(AffinePiece {
            gradient: f.gradient,
            intercept: f.intercept,
        });
        out.push(Facet {
            polygon: ConvexPolygon::from_vertices(f.ring.iter().map(|&i| xy[i]).collect()),
            piece: k,
            sites: f.members,
        });
    }
    PiecewiseAffineConvex {
        pieces,
        domain,
        facets: out,
    }
}

/// Convex piecewise-affine function on the convex hull of the sites whose
/// graph is the lower convex hull of the lifted points `(x_i, phi_i)`.
pub fn extend_pwa(sites: &[Point2], phi: &[f64]) -> Result<PiecewiseAffineConvex> {
    if sites.len() != phi.len() {
        return Err(Error::InvalidInput("sites and potential differ in length".into()));
    }
    let h = lower_hull(sites, phi)?;
    Ok(from_hull(sites, h.facets, &h.boundary))
}

/// Piecewise-constant map sending facet `j` to `targets[j]`.
#[derive(Debug, Clone)]
pub struct TransportMapPWC {
    pub facets: Vec<ConvexPolygon>,
    pub targets: Vec<Point2>,
    pwa: PiecewiseAffineConvex,
}

impl TransportMapPWC {
    pub fn from_pwa(pwa: PiecewiseAffineConvex) -> Self {
        TransportMapPWC {
            facets: pwa.facets.iter().map(|f| f.polygon.clone()).collect(),
            targets: pwa.facets.iter().map(|f| pwa.pieces[f.piece].gradient).collect(),
            pwa,
        }
    }

    pub fn pwa(&self) -> &PiecewiseAffineConvex {
        &self.pwa
    }

    /// Image of `x`; only defined on the map's domain.
    pub fn eval(&self, x: Point2) -> Result<Point2> {
        self.pwa
            .facet_at(x)
            .map(|k| self.targets[k])
            .ok_or_else(|| Error::InvalidInput(format!("({}, {}) lies outside the map's domain", x.x, x.y)))
    }

    /// Writes `facet_id,vertex_index,x,y` and `facet_id,target_x,target_y`.
    pub fn write_csv(&self, facets_path: &Path, targets_path: &Path, periodic: bool) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(facets_path)?);
        if periodic {
            writeln!(w, "# period=1")?;
        }
        writeln!(w, "facet_id,vertex_index,x,y")?;
        for (j, f) in self.facets.iter().enumerate() {
            for (k, p) in f.vertices().iter().enumerate() {
                writeln!(w, "{j},{k},{},{}", p.x, p.y)?;
            }
        }
        w.flush()?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(targets_path)?);
        if periodic {
            writeln!(w, "# period=1")?;
        }
        writeln!(w, "facet_id,target_x,target_y")?;
        for (j, t) in self.targets.iter().enumerate() {
            writeln!(w, "{j},{},{}", t.x, t.y)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Piecewise-constant transport map of a solved instance: facet gradients of
/// the convex extension, checked against the target domain and against the
/// dual vertices of `diagram`.
pub fn transport_map(sites: &[Point2], phi: &[f64], diagram: &LaguerreDiagram) -> Result<TransportMapPWC> {
    let pwa = extend_pwa(sites, phi)?;
    let tol_y = tol::GRADIENT_CONTAINMENT;
    for (k, f) in pwa.facets.iter().enumerate() {
        let d = diagram.domain.distance_outside(pwa.pieces[f.piece].gradient);
        if d > tol_y {
            return Err(Error::DualityViolation { facet: k, distance: d });
        }
    }
    let report = verify_facet_vertex_bijection(&pwa, diagram);
    if let Some(&k) = report.unmatched_facets.first() {
        let g = pwa.pieces[pwa.facets[k].piece].gradient;
        let dv = diagram.dual_vertices();
        let distance = dv
            .interior
            .iter()
            .chain(&dv.boundary)
            .map(|v| v.position.dist(g))
            .fold(f64::INFINITY, f64::min);
        return Err(Error::DualityViolation { facet: k, distance });
    }
    Ok(TransportMapPWC::from_pwa(pwa))
}

/// One logical facet-vertex pair. Several facets share a vertex when their
/// sites are cocircular in the power sense (a vertex with more than three
/// cells).
#[derive(Debug, Clone, PartialEq)]
pub struct FacetVertexPair {
    pub facets: Vec<usize>,
    pub vertex: usize,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BijectionReport {
    pub facet_count: usize,
    pub interior_vertex_count: usize,
    pub boundary_vertex_count: usize,
    pub pairs: Vec<FacetVertexPair>,
    /// Pairs whose vertex has more than three cells.
    pub degenerate_pairs: usize,
    pub unmatched_facets: Vec<usize>,
    pub unmatched_vertices: Vec<usize>,
    /// Pairs whose facet sites differ from the vertex's cells.
    pub cell_set_mismatches: Vec<usize>,
}

impl BijectionReport {
    pub fn mismatches(&self) -> usize {
        self.unmatched_facets.len() + self.unmatched_vertices.len() + self.cell_set_mismatches.len()
    }

    pub fn is_bijection(&self) -> bool {
        self.mismatches() == 0
    }
}

/// Pairs facets of the convex extension with interior vertices of the
/// Laguerre diagram: a facet matches the vertex at its gradient, and the
/// facet's sites must be the vertex's cells. Facets meeting at one
/// degenerate vertex are paired with it jointly.
pub fn verify_facet_vertex_bijection(pwa: &PiecewiseAffineConvex, diagram: &LaguerreDiagram) -> BijectionReport {
    let dv: DualVertices = diagram.dual_vertices();
    let scale = diagram.domain.diameter();
    let tau = 10.0 * tol::VERTEX_MERGE_REL * scale;
    let mut report = BijectionReport {
        facet_count: pwa.facets.len(),
        interior_vertex_count: dv.interior.len(),
        boundary_vertex_count: dv.boundary.len(),
        ..Default::default()
    };
    let key = |p: Point2| ((p.x / tau).floor() as i64, (p.y / tau).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, v) in dv.interior.iter().enumerate() {
        grid.entry(key(v.position)).or_default().push(k);
    }
    let mut by_vertex: Vec<Vec<usize>> = vec![Vec::new(); dv.interior.len()];
    for (fi, f) in pwa.facets.iter().enumerate() {
        let g = pwa.pieces[f.piece].gradient;
        let (cx, cy) = key(g);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for &k in grid.get(&(cx + dx, cy + dy)).map(Vec::as_slice).unwrap_or(&[]) {
                    let d = dv.interior[k].position.dist(g);
                    if d <= tau && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, k));
                    }
                }
            }
        }
        match best {
            Some((_, k)) => by_vertex[k].push(fi),
            None => report.unmatched_facets.push(fi),
        }
    }
    for (k, facets) in by_vertex.into_iter().enumerate() {
        if facets.is_empty() {
            report.unmatched_vertices.push(k);
            continue;
        }
        let mut sites: Vec<usize> = facets.iter().flat_map(|&f| pwa.facets[f].sites.iter().copied()).collect();
        sites.sort_unstable();
        sites.dedup();
        let cells = dv.interior[k].cells.clone();
        if sites != cells {
            report.cell_set_mismatches.push(report.pairs.len());
        }
        if cells.len() > 3 {
            report.degenerate_pairs += 1;
        }
        report.pairs.push(FacetVertexPair {
            facets,
            vertex: k,
            cells,
        });
    }
    report
}

/// Affine pieces `x ↦ y_v.x - ψ(y_v)`, one for every vertex
/// `y_v` of the clipped diagram (interior, boundary and domain corners). Their
/// maximum is the Legendre transform of `ψ` restricted to the domain.
pub fn global_lift(diagram: &LaguerreDiagram) -> Vec<AffinePiece> {
    let dv = diagram.dual_vertices();
    dv.interior
        .iter()
        .chain(&dv.boundary)
        .map(|v| AffinePiece {
            gradient: v.position,
            intercept: -diagram.legendre(v.position),
        })
        .collect()
}

/// Monge-Ampère measure of `x ↦ max_k piece_k(x)`: one atom per vertex of
/// the induced complex, with mass equal to the area of the hull of the
/// gradients active there. Masses are not normalized; the total is the area
/// of the hull of all gradients.
pub fn ma_measure_pwa(pieces: &[AffinePiece]) -> DiscreteMeasure {
    let grads: Vec<Point2> = pieces.iter().map(|p| p.gradient).collect();
    let lift: Vec<f64> = pieces.iter().map(|p| -p.intercept).collect();
    // Pieces with (nearly) equal gradients: only the largest intercept matters.
    let scale = crate::geom::bbox_diagonal(&grads).max(f64::MIN_POSITIVE);
    let clusters = cluster_points(&grads, 1e-12 * scale);
    let reps: Vec<usize> = clusters
        .iter()
        .map(|c| {
            *c.iter()
                .min_by(|&&a, &&b| lift[a].total_cmp(&lift[b]))
                .expect("nonempty cluster")
        })
        .collect();
    let xy: Vec<Point2> = reps.iter().map(|&k| grads[k]).collect();
    let z: Vec<f64> = reps.iter().map(|&k| lift[k]).collect();
    let Ok(h) = lower_hull(&xy, &z) else {
        return DiscreteMeasure {
            points: Vec::new(),
            masses: Vec::new(),
        };
    };
    let (points, masses) = h
        .facets
        .iter()
        .map(|f| {
            let area = ConvexPolygon::from_vertices(f.ring.iter().map(|&k| xy[k]).collect()).area();
            (f.gradient, area)
        })
        .unzip();
    DiscreteMeasure { points, masses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laguerre::{build_diagram, PotentialVector};
    use crate::measures::{grid_cloud, random_points, DiscreteMeasure, TargetDomain};
    use crate::solver::{damped_newton, SolveSettings};
    use rand::{Rng, SeedableRng};

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn unit() -> TargetDomain {
        TargetDomain::uniform(ConvexPolygon::unit_square()).unwrap()
    }

    fn solve(sites: &[Point2]) -> (Vec<f64>, LaguerreDiagram) {
        let n = sites.len();
        let f = DiscreteMeasure::uniform(sites.to_vec()).unwrap();
        let (phi, _) = damped_newton(sites, &f.masses, &unit(), &SolveSettings::default()).unwrap();
        let d = build_diagram(sites, &phi.values, &unit()).unwrap();
        assert_eq!(d.len(), n);
        (phi.values, d)
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre_discrete(&[p(0.0, 0.0), p(1.0, 0.0)], &[0.0, 0.0], p(2.0, 5.0)), 2.0);
        let x = p(0.3, -0.2);
        assert!((legendre_discrete(&[x], &[0.7], p(1.5, 2.0)) - (x.dot(p(1.5, 2.0)) - 0.7)).abs() < 1e-15);
    }

    #[test]
    fn support_function_examples() {
        let y = ConvexPolygon::unit_square();
        assert_eq!(support_function(&y, p(1.0, 1.0)), 2.0);
        assert_eq!(support_function(&y, p(-1.0, 0.0)), 0.0);
        assert_eq!(support_function(&y, p(0.0, 0.0)), 0.0);
    }

    #[test]
    fn three_points_single_piece() {
        let x = [p(0.1, 0.1), p(0.9, 0.2), p(0.4, 0.8)];
        let phi = [0.3, -0.1, 0.5];
        let pwa = extend_pwa(&x, &phi).unwrap();
        assert_eq!(pwa.facets.len(), 1);
        for (xi, v) in x.iter().zip(&phi) {
            assert!((pwa.eval(*xi) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_four_points() {
        let x = vec![p(0.25, 0.25), p(0.75, 0.25), p(0.25, 0.75), p(0.75, 0.75)];
        let phi = PotentialVector::voronoi(&x).mean_zero().values;
        let pwa = extend_pwa(&x, &phi).unwrap();
        assert!(matches!(pwa.facets.len(), 1 | 2 | 4));
        for (xi, v) in x.iter().zip(&phi) {
            assert!((pwa.eval(*xi) - v).abs() < 1e-14);
        }
        let d = build_diagram(&x, &phi, &unit()).unwrap();
        let map = transport_map(&x, &phi, &d).unwrap();
        for t in &map.targets {
            assert!(t.dist(p(0.5, 0.5)) < 1e-14);
        }
        let r = verify_facet_vertex_bijection(map.pwa(), &d);
        assert!(r.is_bijection(), "{r:?}");
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.degenerate_pairs, 1);
    }

    #[test]
    fn two_points_are_degenerate() {
        let x = [p(0.25, 0.5), p(0.75, 0.5)];
        let d = build_diagram(&x, &[0.0, 0.0], &unit()).unwrap();
        assert!(matches!(transport_map(&x, &[0.0, 0.0], &d), Err(Error::DegenerateDomain(_))));
    }

    #[test]
    fn three_points_single_facet_single_vertex() {
        let x = vec![p(0.2, 0.2), p(0.8, 0.3), p(0.4, 0.7)];
        let (phi, d) = solve(&x);
        let pwa = extend_pwa(&x, &phi).unwrap();
        let r = verify_facet_vertex_bijection(&pwa, &d);
        assert!(r.is_bijection(), "{r:?}");
        assert_eq!((r.facet_count, r.interior_vertex_count), (1, 1));
    }

    #[test]
    fn double_legendre_on_grid_solution() {
        let cloud = grid_cloud(&ConvexPolygon::unit_square(), 4).unwrap();
        let (phi, d) = solve(&cloud.points);
        let pwa = extend_pwa(&cloud.points, &phi).unwrap();
        let lift = global_lift(&d);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut checked = 0;
        while checked < 100 {
            let x = p(rng.random(), rng.random());
            if !pwa.domain.contains(x, 0.0) {
                continue;
            }
            let twice = lift.iter().map(|a| a.value(x)).fold(f64::NEG_INFINITY, f64::max);
            assert!((twice - pwa.eval(x)).abs() <= 1e-10);
            checked += 1;
        }
        for (xi, v) in cloud.points.iter().zip(&phi) {
            assert!((pwa.eval(*xi) - v).abs() <= 1e-10);
        }
    }

    #[test]
    fn random_solution_duality() {
        let x = random_points(&ConvexPolygon::unit_square(), 50, 3).unwrap();
        let (phi, d) = solve(&x);
        let pwa = extend_pwa(&x, &phi).unwrap();
        let area: f64 = pwa.facets.iter().map(|f| f.polygon.area()).sum();
        assert!((area - pwa.domain.area()).abs() < 1e-12);
        let r = verify_facet_vertex_bijection(&pwa, &d);
        assert!(r.unmatched_vertices.is_empty() && r.cell_set_mismatches.is_empty(), "{r:?}");
        // Facets left over sit along the hull boundary, where the power
        // vertex of a thin triangle can lie outside the target domain.
        assert!(!r.unmatched_facets.is_empty());
        for &k in &r.unmatched_facets {
            let f = &pwa.facets[k];
            assert!(d.domain.distance_outside(pwa.pieces[f.piece].gradient) > 1e-9);
        }
        assert!(matches!(transport_map(&x, &phi, &d), Err(Error::DualityViolation { .. })));
    }

    #[test]
    fn identity_map_stays_within_h() {
        let cloud = grid_cloud(&ConvexPolygon::unit_square(), 8).unwrap();
        let (phi, d) = solve(&cloud.points);
        let map = transport_map(&cloud.points, &phi, &d).unwrap();
        let mut err2 = 0.0;
        for (f, t) in map.facets.iter().zip(&map.targets) {
            let hull = ConvexPolygon::from_vertices(f.vertices().to_vec());
            assert!(hull.contains(*t, 1e-12));
            err2 += crate::geom::integrate(f, |x| (x - *t).norm2());
        }
        assert!(err2.sqrt() <= cloud.mesh_norm);
    }

    #[test]
    fn ma_measure_examples() {
        let square: Vec<AffinePiece> = ConvexPolygon::unit_square()
            .vertices()
            .iter()
            .map(|&v| AffinePiece {
                gradient: v,
                intercept: 0.0,
            })
            .collect();
        let m = ma_measure_pwa(&square);
        assert_eq!(m.points.len(), 1);
        assert!(m.points[0].norm() < 1e-15 && (m.masses[0] - 1.0).abs() < 1e-15);
        let one = ma_measure_pwa(&square[..1]);
        assert!(one.points.is_empty());
    }

    #[test]
    fn ma_measure_recovers_cell_masses() {
        let x = random_points(&ConvexPolygon::unit_square(), 40, 6).unwrap();
        let (_, d) = solve(&x);
        let m = ma_measure_pwa(&global_lift(&d));
        assert_eq!(m.points.len(), x.len());
        for (a, mass) in m.points.iter().zip(&m.masses) {
            let i = (0..x.len()).min_by(|&i, &j| x[i].dist(*a).total_cmp(&x[j].dist(*a))).unwrap();
            assert!(x[i].dist(*a) < 1e-9);
            assert!((mass - d.masses[i]).abs() < 1e-9);
        }
        let total: f64 = m.masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

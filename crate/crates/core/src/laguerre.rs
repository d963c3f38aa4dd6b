//! Laguerre (power) diagrams of a potential vector, clipped to the target
//! domain: cells, masses, adjacency, dual vertices and the mass Jacobian.
//!
//! Cell `i` is `{y : x_i.y - phi_i >= x_j.y - phi_j for all j}`, i.e. the
//! region where the discrete Legendre transform `max_k (x_k.y - phi_k)` is
//! attained by `k = i`. Each cell is obtained by clipping the domain against
//! the bisectors `(x_j - x_i).y <= phi_j - phi_i`. Sites are visited in
//! rings of a bucket grid and the scan stops once no remaining site can cut
//! the cell, so the result equals full pairwise clipping.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, clip_tagged, ConvexPolygon, Density, HalfPlane, Point2, EPS_GEOM_REL};
use crate::linalg::SymmetricSparse;
use crate::measures::TargetDomain;
use crate::tol;

/// Lattice shift of a periodic copy; always zero in the plane.
pub type Shift = [i8; 2];

/// Potential values `phi_i` attached to the sites of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialVector {
    pub values: Vec<f64>,
}

impl PotentialVector {
    pub fn new(values: Vec<f64>) -> Self {
        PotentialVector { values }
    }

    /// `phi_i = |x_i|^2 / 2`, whose Laguerre diagram is the Voronoi diagram.
    pub fn voronoi(points: &[Point2]) -> Self {
        PotentialVector {
            values: points.iter().map(|p| 0.5 * p.norm2()).collect(),
        }
    }

    /// Power-diagram weights `w_i = 2 phi_i - |x_i|^2`.
    pub fn power_weights(&self, points: &[Point2]) -> Vec<f64> {
        self.values
            .iter()
            .zip(points)
            .map(|(phi, x)| 2.0 * phi - x.norm2())
            .collect()
    }

    pub fn mean_zero(mut self) -> Self {
        subtract_mean(&mut self.values);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn subtract_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// What produced a given cell edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeTag {
    /// Edge `k` of the clipping domain.
    Boundary(usize),
    /// Bisector with site `site` translated by `shift`.
    Site { site: usize, shift: Shift },
}

/// Shared edge between two cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramEdge {
    pub i: usize,
    pub j: usize,
    /// Lattice shift of `j` as seen from `i` (periodic diagrams only).
    pub shift: Shift,
    pub a: Point2,
    pub b: Point2,
    pub length: f64,
    /// `∫_edge g ds`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualVertex {
    pub position: Point2,
    /// Sorted indices of the cells meeting at the vertex.
    pub cells: Vec<usize>,
}

/// Vertices of the clipped complex, split by whether they touch the domain
/// boundary. Boundary vertices include the domain corners.
#[derive(Debug, Clone, Default)]
pub struct DualVertices {
    pub interior: Vec<DualVertex>,
    pub boundary: Vec<DualVertex>,
}

#[derive(Debug, Clone)]
pub struct LaguerreDiagram {
    pub domain: ConvexPolygon,
    pub sites: Vec<Point2>,
    pub potential: Vec<f64>,
    pub cells: Vec<ConvexPolygon>,
    pub masses: Vec<f64>,
    /// Density-weighted centroids (`None` for empty cells).
    pub centroids: Vec<Option<Point2>>,
    pub edges: Vec<DiagramEdge>,
    pub(crate) tags: Vec<Vec<EdgeTag>>,
    pub(crate) scale: f64,
}

/// Kd-tree over the sites carrying, per node, the bounding box and the
/// smallest `u = phi - |x|^2/2` below it.
pub(crate) struct SiteTree {
    order: Vec<u32>,
    nodes: Vec<TreeNode>,
}

struct TreeNode {
    lo: Point2,
    hi: Point2,
    u_min: f64,
    /// Leaf range in `order`, or children indices.
    kind: NodeKind,
}

enum NodeKind {
    Leaf(usize, usize),
    Split(usize, usize),
}

const LEAF_SIZE: usize = 8;

impl SiteTree {
    pub(crate) fn new(sites: &[Point2], phi: &[f64]) -> Self {
        let mut order: Vec<u32> = (0..sites.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * sites.len() / LEAF_SIZE + 2);
        if !sites.is_empty() {
            Self::build(sites, phi, &mut order, 0, sites.len(), &mut nodes);
        }
        SiteTree { order, nodes }
    }

    fn build(sites: &[Point2], phi: &[f64], order: &mut [u32], a: usize, b: usize, nodes: &mut Vec<TreeNode>) -> usize {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut u_min = f64::INFINITY;
        for &k in &order[a..b] {
            let p = sites[k as usize];
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
            u_min = u_min.min(phi[k as usize] - 0.5 * p.norm2());
        }
        let id = nodes.len();
        nodes.push(TreeNode {
            lo,
            hi,
            u_min,
            kind: NodeKind::Leaf(a, b),
        });
        if b - a > LEAF_SIZE {
            let m = (a + b) / 2;
            let by_x = hi.x - lo.x >= hi.y - lo.y;
            order[a..b].select_nth_unstable_by(m - a, |&p, &q| {
                let (p, q) = (sites[p as usize], sites[q as usize]);
                if by_x {
                    p.x.total_cmp(&q.x)
                } else {
                    p.y.total_cmp(&q.y)
                }
            });
            let left = Self::build(sites, phi, order, a, m, nodes);
            let right = Self::build(sites, phi, order, m, b, nodes);
            nodes[id].kind = NodeKind::Split(left, right);
        }
        id
    }

    fn box_dist2(&self, node: usize, p: Point2) -> f64 {
        let n = &self.nodes[node];
        let dx = (n.lo.x - p.x).max(p.x - n.hi.x).max(0.0);
        let dy = (n.lo.y - p.y).max(p.y - n.hi.y).max(0.0);
        dx * dx + dy * dy
    }
}

/// One power cell as a tagged polygon.
pub(crate) struct CellOutput {
    pub vertices: Vec<Point2>,
    pub tags: Vec<usize>,
}

/// Tag value used for clipping-domain edges inside [`power_cell`]:
/// `BOUNDARY_BASE + k` for domain edge `k`.
pub(crate) const BOUNDARY_BASE: usize = usize::MAX / 2;

struct CellBuilder<'a> {
    sites: &'a [Point2],
    phi: &'a [f64],
    tree: &'a SiteTree,
    i: usize,
    xi: Point2,
    ui: f64,
    eps: f64,
    verts: Vec<Point2>,
    tags: Vec<usize>,
    coincident: Option<usize>,
}

impl CellBuilder<'_> {
    /// True when no site below `node` can cut the current cell: at every
    /// vertex the lower bound of their power exceeds the power of site `i`.
    fn prunable(&self, node: usize) -> bool {
        let u = self.tree.nodes[node].u_min;
        self.verts
            .iter()
            .all(|&v| self.tree.box_dist2(node, v) + 2.0 * u >= (v - self.xi).norm2() + 2.0 * self.ui)
    }

    fn visit(&mut self, node: usize) {
        if self.verts.is_empty() || self.coincident.is_some() {
            return;
        }
        let near = self.tree.box_dist2(node, self.xi) <= self.eps * self.eps;
        if !near && self.prunable(node) {
            return;
        }
        match self.tree.nodes[node].kind {
            NodeKind::Leaf(a, b) => {
                for &j in &self.tree.order[a..b] {
                    let j = j as usize;
                    if j == self.i {
                        continue;
                    }
                    let d = self.sites[j] - self.xi;
                    if d.norm() <= self.eps {
                        self.coincident = Some(j);
                        return;
                    }
                    let hp = HalfPlane {
                        normal: d,
                        offset: self.phi[j] - self.phi[self.i],
                    };
                    let (v, t) = clip_tagged(&self.verts, &self.tags, &hp, j, self.eps);
                    self.verts = v;
                    self.tags = t;
                    if self.verts.is_empty() {
                        return;
                    }
                }
            }
            NodeKind::Split(l, r) => {
                let (first, second) = if self.tree.box_dist2(l, self.xi) <= self.tree.box_dist2(r, self.xi) {
                    (l, r)
                } else {
                    (r, l)
                };
                self.visit(first);
                self.visit(second);
            }
        }
    }
}

/// Power cell of site `i` among `sites` with potentials `phi`, clipped to
/// `start`. Tags are site indices, or `BOUNDARY_BASE + k` for edge `k` of
/// `start`.
pub(crate) fn power_cell(
    sites: &[Point2],
    phi: &[f64],
    tree: &SiteTree,
    i: usize,
    start: &[Point2],
    eps: f64,
) -> Result<CellOutput> {
    let xi = sites[i];
    let mut b = CellBuilder {
        sites,
        phi,
        tree,
        i,
        xi,
        ui: phi[i] - 0.5 * xi.norm2(),
        eps,
        verts: start.to_vec(),
        tags: (0..start.len()).map(|k| BOUNDARY_BASE + k).collect(),
        coincident: None,
    };
    if !tree.nodes.is_empty() {
        b.visit(0);
    }
    if let Some(j) = b.coincident {
        return Err(Error::CoincidentSites(i.min(j), i.max(j)));
    }
    if b.verts.is_empty() {
        b.tags.clear();
    }
    Ok(CellOutput {
        vertices: b.verts,
        tags: b.tags,
    })
}

/// Builds the Laguerre diagram of `sites` with potential `phi`, clipped to
/// the target domain `Y`, with cell masses measured by the target density.
pub fn build_diagram(sites: &[Point2], phi: &[f64], target: &TargetDomain) -> Result<LaguerreDiagram> {
    if sites.len() != phi.len() {
        return Err(Error::InvalidInput(format!(
            "{} sites but {} potential values",
            sites.len(),
            phi.len()
        )));
    }
    if sites.is_empty() {
        return Err(Error::NoPoints);
    }
    if sites.iter().any(|p| !p.is_finite()) || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite site or potential".into()));
    }
    let domain = target.boundary().clone();
    let scale = domain.diameter();
    let eps = EPS_GEOM_REL * scale;
    let tree = SiteTree::new(sites, phi);
    let start = domain.vertices();
    let raw: Vec<CellOutput> = (0..sites.len())
        .into_par_iter()
        .map(|i| power_cell(sites, phi, &tree, i, start, eps))
        .collect::<Result<_>>()?;
    let tagged = raw
        .into_iter()
        .map(|c| {
            let tags = c
                .tags
                .into_iter()
                .map(|t| {
                    if t >= BOUNDARY_BASE {
                        EdgeTag::Boundary(t - BOUNDARY_BASE)
                    } else {
                        EdgeTag::Site { site: t, shift: [0, 0] }
                    }
                })
                .collect();
            (c.vertices, tags)
        })
        .collect();
    assemble(domain, sites.to_vec(), phi.to_vec(), tagged, target.density(), scale)
}

/// Turns tagged cell polygons into a diagram: masses, centroids, edges.
pub(crate) fn assemble(
    domain: ConvexPolygon,
    sites: Vec<Point2>,
    potential: Vec<f64>,
    tagged: Vec<(Vec<Point2>, Vec<EdgeTag>)>,
    density: &dyn Density,
    scale: f64,
) -> Result<LaguerreDiagram> {
    let mut cells = Vec::with_capacity(tagged.len());
    let mut tags = Vec::with_capacity(tagged.len());
    for (v, t) in tagged {
        cells.push(ConvexPolygon::from_vertices_unchecked(v));
        tags.push(t);
    }
    let mc: Vec<(f64, Option<Point2>)> = cells
        .par_iter()
        .map(|c| geom::mass_and_centroid(c, density))
        .collect::<Result<_>>()?;
    let (masses, centroids) = mc.into_iter().unzip();

    // Each interior edge is seen from both sides; average the two.
    let mut acc: BTreeMap<(usize, usize, Shift), (f64, f64, u32, Point2, Point2)> = BTreeMap::new();
    for (i, (cell, ctags)) in cells.iter().zip(&tags).enumerate() {
        let v = cell.vertices();
        for (k, tag) in ctags.iter().enumerate() {
            let EdgeTag::Site { site: j, shift } = *tag else { continue };
            if j == i {
                continue;
            }
            let (a, b) = (v[k], v[(k + 1) % v.len()]);
            let len = a.dist(b);
            let w = geom::segment_integral(a, b, density);
            let key = if i < j { (i, j, shift) } else { (j, i, [-shift[0], -shift[1]]) };
            let e = acc.entry(key).or_insert((0.0, 0.0, 0, a, b));
            e.0 += w;
            e.1 += len;
            e.2 += 1;
            if i < j {
                e.3 = a;
                e.4 = b;
            }
        }
    }
    let edges = acc
        .into_iter()
        .map(|((i, j, shift), (w, len, n, a, b))| DiagramEdge {
            i,
            j,
            shift,
            a,
            b,
            length: len / n as f64,
            weight: w / n as f64,
        })
        .collect();
    Ok(LaguerreDiagram {
        domain,
        sites,
        potential,
        cells,
        masses,
        centroids,
        edges,
        tags,
        scale,
    })
}

/// `H_ij = ∂m_i/∂phi_j`: symmetric, nonnegative off the diagonal, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MassJacobian {
    pub matrix: SymmetricSparse,
}

impl MassJacobian {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// `-H`, a weighted graph Laplacian.
    pub fn laplacian(&self) -> SymmetricSparse {
        self.matrix.scaled(-1.0)
    }
}

/// Mass Jacobian from the edge integrals:
/// `H_ij = ∫_{edge ij} g ds / |x_i - x_j|`, `H_ii = -Σ_j H_ij`.
pub fn mass_jacobian(diagram: &LaguerreDiagram) -> MassJacobian {
    let n = diagram.sites.len();
    let mut diag = vec![0.0; n];
    let mut off = Vec::with_capacity(diagram.edges.len());
    for e in &diagram.edges {
        let xj = diagram.sites[e.j] + Point2::new(e.shift[0] as f64, e.shift[1] as f64);
        let d = diagram.sites[e.i].dist(xj);
        let h = e.weight / d;
        if h == 0.0 {
            continue;
        }
        off.push((e.i, e.j, h));
        diag[e.i] -= h;
        diag[e.j] -= h;
    }
    MassJacobian {
        matrix: SymmetricSparse::from_parts(diag, off),
    }
}

impl LaguerreDiagram {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn edge_tags(&self, cell: usize) -> &[EdgeTag] {
        &self.tags[cell]
    }

    pub fn jacobian(&self) -> MassJacobian {
        mass_jacobian(self)
    }

    /// Dual vertices of a planar diagram. Vertices closer than
    /// `tol::VERTEX_MERGE_REL * diam(Y)` are merged, so a degenerate vertex
    /// shared by more than three cells appears once with all its cells.
    pub fn dual_vertices(&self) -> DualVertices {
        dual_vertices(self)
    }

    /// `V - E + F` of the clipped complex (1 for a subdivided disk).
    pub fn euler_characteristic(&self) -> i64 {
        let dv = self.dual_vertices();
        let tau = tol::VERTEX_MERGE_REL * self.scale;
        let v = (dv.interior.len() + dv.boundary.len()) as i64;
        let interior_edges = self.edges.iter().filter(|e| e.length > tau).count() as i64;
        let boundary_edges = self
            .cells
            .iter()
            .zip(&self.tags)
            .map(|(c, t)| {
                let verts = c.vertices();
                t.iter()
                    .enumerate()
                    .filter(|(k, tag)| {
                        matches!(tag, EdgeTag::Boundary(_))
                            && verts[*k].dist(verts[(k + 1) % verts.len()]) > tau
                    })
                    .count()
            })
            .sum::<usize>() as i64;
        let f = self.cells.iter().filter(|c| !c.is_empty()).count() as i64;
        v - (interior_edges + boundary_edges) + f
    }

    /// Discrete Legendre transform `psi(y) = max_i (x_i.y - phi_i)`.
    pub fn legendre(&self, y: Point2) -> f64 {
        crate::convexity::legendre_discrete(&self.sites, &self.potential, y)
    }

    /// Writes `cell_id,vertex_index,x,y` and `cell_id,mass` files.
    pub fn write_csv(&self, cells_path: &Path, masses_path: &Path, periodic: bool) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(cells_path)?);
        if periodic {
            writeln!(w, "# period=1")?;
        }
        writeln!(w, "cell_id,vertex_index,x,y")?;
        for (i, c) in self.cells.iter().enumerate() {
            for (k, p) in c.vertices().iter().enumerate() {
                writeln!(w, "{i},{k},{},{}", p.x, p.y)?;
            }
        }
        w.flush()?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(masses_path)?);
        if periodic {
            writeln!(w, "# period=1")?;
        }
        writeln!(w, "cell_id,mass")?;
        for (i, m) in self.masses.iter().enumerate() {
            writeln!(w, "{i},{m}")?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Candidate {
    position: Point2,
    cells: Vec<usize>,
    boundary: bool,
}

/// Free-function form of [`LaguerreDiagram::dual_vertices`].
pub fn dual_vertices(diagram: &LaguerreDiagram) -> DualVertices {
    let mut cands = Vec::new();
    for (i, (cell, tags)) in diagram.cells.iter().zip(&diagram.tags).enumerate() {
        let v = cell.vertices();
        let n = v.len();
        for k in 0..n {
            let before = tags[(k + n - 1) % n];
            let after = tags[k];
            let mut cells = vec![i];
            let mut boundary = false;
            for t in [before, after] {
                match t {
                    EdgeTag::Site { site, .. } => cells.push(site),
                    EdgeTag::Boundary(_) => boundary = true,
                }
            }
            cands.push(Candidate {
                position: v[k],
                cells,
                boundary,
            });
        }
    }
    let tau = tol::VERTEX_MERGE_REL * diagram.scale;
    let clusters = cluster_points(&cands.iter().map(|c| c.position).collect::<Vec<_>>(), tau);
    let mut out = DualVertices::default();
    for members in clusters {
        let mut pos = Point2::ZERO;
        let mut cells = Vec::new();
        let mut boundary = false;
        for &m in &members {
            pos += cands[m].position;
            cells.extend_from_slice(&cands[m].cells);
            boundary |= cands[m].boundary;
        }
        cells.sort_unstable();
        cells.dedup();
        let v = DualVertex {
            position: pos / members.len() as f64,
            cells,
        };
        if boundary {
            out.boundary.push(v);
        } else {
            out.interior.push(v);
        }
    }
    out
}

/// Groups points into clusters whose members are chained by distances
/// `<= tau`. Clusters come out ordered by their smallest member index.
pub(crate) fn cluster_points(points: &[Point2], tau: f64) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    let cell = tau.max(1e-300);
    let key = |p: Point2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (k, p) in points.iter().enumerate() {
        buckets.entry(key(*p)).or_default().push(k);
    }
    for (k, p) in points.iter().enumerate() {
        let (cx, cy) = key(*p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(cx + dx, cy + dy)) {
                    for &m in list {
                        if m > k && points[m].dist(*p) <= tau {
                            let (a, b) = (find(&mut parent, k), find(&mut parent, m));
                            if a != b {
                                parent[a.max(b)] = a.min(b);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..n {
        let r = find(&mut parent, k);
        groups.entry(r).or_default().push(k);
    }
    groups.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::TargetDomain;
    use rand::{Rng, SeedableRng};

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn unit() -> TargetDomain {
        TargetDomain::uniform(ConvexPolygon::unit_square()).unwrap()
    }

    fn random_sites(n: usize, seed: u64) -> Vec<Point2> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| p(rng.random(), rng.random())).collect()
    }

    /// Independent reference: clip against every other site's bisector,
    /// written in midpoint form.
    fn brute_force_cells(sites: &[Point2], phi: &[f64], y: &ConvexPolygon) -> Vec<ConvexPolygon> {
        (0..sites.len())
            .map(|i| {
                let mut c = y.clone();
                for j in 0..sites.len() {
                    if j != i {
                        let n = sites[j] - sites[i];
                        c = c.clip(&HalfPlane::new(n, phi[j] - phi[i]).unwrap());
                    }
                }
                c
            })
            .collect()
    }

    #[test]
    fn single_site_owns_the_domain() {
        let d = build_diagram(&[p(0.3, 0.8)], &[5.0], &unit()).unwrap();
        assert!(d.cells[0].approx_eq(&ConvexPolygon::unit_square(), 0.0));
        assert_eq!(d.masses, vec![1.0]);
    }

    #[test]
    fn two_site_voronoi_and_shifted_bisector() {
        let x = [p(0.25, 0.5), p(0.75, 0.5)];
        let phi = PotentialVector::voronoi(&x);
        let d = build_diagram(&x, &phi.values, &unit()).unwrap();
        assert!((d.masses[0] - 0.5).abs() < 1e-15 && (d.masses[1] - 0.5).abs() < 1e-15);

        let phi2 = [phi.values[0], phi.values[1] + 0.1];
        let d = build_diagram(&x, &phi2, &unit()).unwrap();
        assert!((d.masses[0] - 0.7).abs() < 1e-14, "{:?}", d.masses);
        assert!((d.masses[1] - 0.3).abs() < 1e-14);
        // Monte Carlo assignment oracle.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mut first = 0usize;
        for _ in 0..n {
            let y = p(rng.random(), rng.random());
            if x[0].dot(y) - phi2[0] >= x[1].dot(y) - phi2[1] {
                first += 1;
            }
        }
        assert!((first as f64 / n as f64 - 0.7).abs() < 2e-3);
    }

    #[test]
    fn two_site_jacobian_closed_form() {
        let x = [p(0.25, 0.5), p(0.75, 0.5)];
        let d = build_diagram(&x, &PotentialVector::voronoi(&x).values, &unit()).unwrap();
        let h = d.jacobian();
        assert!((h.get(0, 1) - 2.0).abs() < 1e-14);
        assert!((h.get(0, 0) + 2.0).abs() < 1e-14);
        assert!((h.get(1, 1) + 2.0).abs() < 1e-14);
        assert!(d.dual_vertices().interior.is_empty());
    }

    #[test]
    fn symmetric_four_sites_share_one_vertex() {
        let x = [p(0.25, 0.25), p(0.75, 0.25), p(0.25, 0.75), p(0.75, 0.75)];
        let d = build_diagram(&x, &PotentialVector::voronoi(&x).values, &unit()).unwrap();
        let dv = d.dual_vertices();
        assert_eq!(dv.interior.len(), 1);
        assert!(dv.interior[0].position.dist(p(0.5, 0.5)) < 1e-14);
        assert_eq!(dv.interior[0].cells, vec![0, 1, 2, 3]);
        assert_eq!(d.euler_characteristic(), 1);
    }

    #[test]
    fn coincident_sites_are_rejected() {
        let x = [p(0.2, 0.2), p(0.6, 0.6), p(0.2, 0.2)];
        let r = build_diagram(&x, &[0.0; 3], &unit());
        assert!(matches!(r, Err(Error::CoincidentSites(0, 2))));
    }

    #[test]
    fn pruned_cells_match_brute_force_with_random_weights() {
        for seed in 0..5 {
            let x = random_sites(150, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 100);
            let phi: Vec<f64> = x.iter().map(|q| 0.5 * q.norm2() + 0.01 * rng.random::<f64>()).collect();
            let d = build_diagram(&x, &phi, &unit()).unwrap();
            let bf = brute_force_cells(&x, &phi, &ConvexPolygon::unit_square());
            for (a, b) in d.cells.iter().zip(&bf) {
                assert!(a.approx_eq(b, 1e-12), "{a:?} vs {b:?}");
            }
            assert!((d.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = random_sites(20, 9);
        let phi = PotentialVector::voronoi(&x).values;
        let target = unit();
        let d = build_diagram(&x, &phi, &target).unwrap();
        let h = d.jacobian();
        let step = 1e-6;
        let mut max_err: f64 = 0.0;
        let mut max_h: f64 = 0.0;
        for j in 0..x.len() {
            let mut plus = phi.clone();
            plus[j] += step;
            let mut minus = phi.clone();
            minus[j] -= step;
            let mp = build_diagram(&x, &plus, &target).unwrap().masses;
            let mm = build_diagram(&x, &minus, &target).unwrap().masses;
            for i in 0..x.len() {
                let fd = (mp[i] - mm[i]) / (2.0 * step);
                max_err = max_err.max((fd - h.get(i, j)).abs());
                max_h = max_h.max(h.get(i, j).abs());
            }
        }
        assert!(max_err / max_h <= 1e-5, "relative error {}", max_err / max_h);
        for s in h.matrix.row_sums() {
            assert!(s.abs() < 1e-10);
        }
        for (_, _, v) in h.matrix.offdiag() {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn euler_relation_on_random_voronoi() {
        let x = random_sites(50, 21);
        let d = build_diagram(&x, &PotentialVector::voronoi(&x).values, &unit()).unwrap();
        assert_eq!(d.euler_characteristic(), 1);
        for v in &d.dual_vertices().interior {
            assert!(v.cells.len() >= 3);
        }
    }

    #[test]
    fn shift_invariance_and_monotonicity() {
        let x = random_sites(40, 5);
        let phi = PotentialVector::voronoi(&x).values;
        let t = unit();
        let d0 = build_diagram(&x, &phi, &t).unwrap();
        let shifted: Vec<f64> = phi.iter().map(|v| v + 3.7).collect();
        let d1 = build_diagram(&x, &shifted, &t).unwrap();
        for (a, b) in d0.cells.iter().zip(&d1.cells) {
            assert!(a.approx_eq(b, 1e-12));
        }
        for i in 0..x.len() {
            let mut up = phi.clone();
            up[i] += 1e-4;
            let d2 = build_diagram(&x, &up, &t).unwrap();
            assert!(d2.masses[i] <= d0.masses[i] + 1e-12);
        }
    }

    #[test]
    fn empty_cells_are_legal() {
        let x = [p(0.25, 0.5), p(0.75, 0.5)];
        let d = build_diagram(&x, &[0.0, 10.0], &unit()).unwrap();
        assert_eq!(d.masses[1], 0.0);
        assert!(d.cells[1].is_empty());
        assert_eq!(d.masses[0], 1.0);
    }

    #[test]
    fn cluster_points_chains_neighbours() {
        let pts = [p(0.0, 0.0), p(0.5e-9, 0.0), p(1.0, 1.0), p(0.9e-9, 0.0)];
        let c = cluster_points(&pts, 1e-9);
        assert_eq!(c, vec![vec![0, 1, 3], vec![2]]);
    }
}

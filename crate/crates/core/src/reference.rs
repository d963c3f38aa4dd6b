//! Separable reference problem on the unit square with closed-form
//! potential, map and inverse map; error norms against it; log-log rate
//! fitting; and the stability experiment.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::{extend_pwa, transport_map, PiecewiseAffineConvex, TransportMapPWC};
use crate::error::{Error, Result};
use crate::geom::{self, ConvexPolygon, Point2};
use crate::laguerre::LaguerreDiagram;
use crate::measures::{
    discretize, discretize_weighted, grid_cloud, w1_upper_bound, DiscreteMeasure, SourceCloud, SourceMeasure, TargetDomain,
};
use crate::quadrature::gauss_legendre_unit;
use crate::solver::{damped_newton_with, PlanarProblem, SolveSettings, Solution};

/// Source density `Π_k (1 + α(1 - 2x_k))` on the unit square, transported
/// to the uniform density by `T(x) = (t(x_1), t(x_2))`, `t(s) = s + α s(1 - s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableProblem {
    pub alpha: f64,
}

/// Outcome of [`SeparableProblem::self_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCheck {
    pub mass_error: f64,
    pub monge_ampere_residual: f64,
    /// Kolmogorov-Smirnov distance to uniform of each image coordinate.
    pub ks_distance: [f64; 2],
}

impl SeparableProblem {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.abs() <= 0.9) {
            return Err(Error::InvalidInput(format!("alpha = {alpha} outside [-0.9, 0.9]")));
        }
        Ok(SeparableProblem { alpha })
    }

    fn factor(&self, s: f64) -> f64 {
        1.0 + self.alpha * (1.0 - 2.0 * s)
    }

    pub fn density(&self, x: Point2) -> f64 {
        self.factor(x.x) * self.factor(x.y)
    }

    pub fn potential(&self, x: Point2) -> f64 {
        let c = |s: f64| 0.5 * s * s + self.alpha * (0.5 * s * s - s * s * s / 3.0);
        c(x.x) + c(x.y)
    }

    /// Diagonal of `D²φ` (the off-diagonal entries vanish).
    pub fn potential_hessian_diagonal(&self, x: Point2) -> [f64; 2] {
        let d = |s: f64| 1.0 + self.alpha - 2.0 * self.alpha * s;
        [d(x.x), d(x.y)]
    }

    pub fn map_1d(&self, s: f64) -> f64 {
        s + self.alpha * s * (1.0 - s)
    }

    /// Root of `map_1d(s) = v` in `[0, 1]`, written to avoid cancellation.
    pub fn inverse_1d(&self, v: f64) -> f64 {
        let a = self.alpha;
        let b = 1.0 + a;
        let disc = (b * b - 4.0 * a * v).max(0.0);
        2.0 * v / (b + disc.sqrt())
    }

    pub fn map(&self, x: Point2) -> Point2 {
        Point2::new(self.map_1d(x.x), self.map_1d(x.y))
    }

    pub fn inverse_map(&self, y: Point2) -> Point2 {
        Point2::new(self.inverse_1d(y.x), self.inverse_1d(y.y))
    }

    pub fn source(&self) -> Result<SourceMeasure> {
        let p = *self;
        SourceMeasure::new(ConvexPolygon::unit_square(), Arc::new(move |x: Point2| p.density(x)))
    }

    pub fn target(&self) -> Result<TargetDomain> {
        TargetDomain::uniform(ConvexPolygon::unit_square())
    }

    /// Checks unit mass, `det D²φ = f` on a 100x100 grid, and that the map
    /// pushes the density to uniform, using 10⁴ stratified samples drawn by
    /// inverting the numerically integrated marginal distribution.
    pub fn self_check(&self) -> SelfCheck {
        let rule = gauss_legendre_unit(4);
        let mut mass = 0.0;
        for &(s, ws) in &rule {
            for &(t, wt) in &rule {
                mass += ws * wt * self.density(Point2::new(s, t));
            }
        }
        let mut ma: f64 = 0.0;
        for a in 0..100 {
            for b in 0..100 {
                let x = Point2::new((a as f64 + 0.5) / 100.0, (b as f64 + 0.5) / 100.0);
                let [hxx, hyy] = self.potential_hessian_diagonal(x);
                ma = ma.max((hxx * hyy - self.density(x)).abs());
            }
        }
        let marginal = |s: f64| -> f64 { rule.iter().map(|&(t, w)| w * s * self.factor(t * s)).sum() };
        let invert = |u: f64| -> f64 {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if marginal(mid) < u {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut ks = [0.0; 2];
        for (axis, ks_axis) in ks.iter_mut().enumerate() {
            let mut images: Vec<f64> = (0..n)
                .map(|k| {
                    let u = (k as f64 + rng.random::<f64>()) / n as f64;
                    let x = invert(u);
                    let p = if axis == 0 { Point2::new(x, 0.5) } else { Point2::new(0.5, x) };
                    let y = self.map(p);
                    if axis == 0 { y.x } else { y.y }
                })
                .collect();
            images.sort_by(f64::total_cmp);
            *ks_axis = images
                .iter()
                .enumerate()
                .map(|(k, &v)| {
                    let lo = k as f64 / n as f64;
                    let hi = (k + 1) as f64 / n as f64;
                    (v - lo).abs().max((hi - v).abs())
                })
                .fold(0.0, f64::max);
        }
        SelfCheck {
            mass_error: (mass - 1.0).abs(),
            monge_ampere_residual: ma,
            ks_distance: ks,
        }
    }
}

fn fan_rule() -> Vec<(f64, f64)> {
    gauss_legendre_unit(4)
}

/// `(Σ_j ∫_{F_j} |y_j - T(x)|² dx)^{1/2}` over the facets of a
/// piecewise-constant map.
pub fn h1_error(map: &TransportMapPWC, problem: &SeparableProblem) -> f64 {
    let rule = fan_rule();
    map.facets
        .par_iter()
        .zip(&map.targets)
        .map(|(f, &y)| geom::integrate_gauss(f, &rule, |x| (y - problem.map(x)).norm2()))
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// The same facet sum evaluated from the extension's pieces directly.
pub fn map_l2_error(pwa: &PiecewiseAffineConvex, problem: &SeparableProblem) -> f64 {
    let rule = fan_rule();
    pwa.facets
        .par_iter()
        .map(|f| {
            let y = pwa.pieces[f.piece].gradient;
            geom::integrate_gauss(&f.polygon, &rule, |x| (y - problem.map(x)).norm2())
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// `L²(X_h)` distance between the extension and the exact potential after
/// removing each one's mean over `X_h`.
pub fn l2_error(pwa: &PiecewiseAffineConvex, problem: &SeparableProblem) -> f64 {
    let rule = fan_rule();
    let area = pwa.domain.area();
    let per_facet = |g: &(dyn Fn(Point2, f64) -> f64 + Sync)| -> f64 {
        pwa.facets
            .par_iter()
            .map(|f| {
                let piece = pwa.pieces[f.piece];
                geom::integrate_gauss(&f.polygon, &rule, |x| g(x, piece.value(x)))
            })
            .collect::<Vec<_>>()
            .iter()
            .sum()
    };
    let offset = per_facet(&|x, v| v - problem.potential(x)) / area;
    per_facet(&|x, v| (v - problem.potential(x) - offset).powi(2)).sqrt()
}

/// Root mean square of `phi_i - φ(x_i)` after removing the mean offset.
pub fn vertex_l2_error(sites: &[Point2], phi: &[f64], problem: &SeparableProblem) -> f64 {
    let diff: Vec<f64> = sites.iter().zip(phi).map(|(&x, p)| p - problem.potential(x)).collect();
    let n = diff.len() as f64;
    let mean = diff.iter().sum::<f64>() / n;
    (diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `(Σ_i ∫_{cell_i} |x_i - T⁻¹(y)|² g dy)^{1/2}`.
pub fn inverse_map_error(diagram: &LaguerreDiagram, target: &TargetDomain, problem: &SeparableProblem) -> f64 {
    let rule = gauss_legendre_unit(8);
    let g = target.density();
    diagram
        .cells
        .par_iter()
        .zip(&diagram.sites)
        .map(|(c, &x)| geom::integrate_gauss(c, &rule, |y| (x - problem.inverse_map(y)).norm2() * g.eval(y)))
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Least-squares line through `(log h, log e)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn fit_rate(hs: &[f64], errors: &[f64]) -> Result<RateFit> {
    if hs.len() != errors.len() || hs.len() < 3 {
        return Err(Error::InvalidInput("rate fit needs at least 3 paired values".into()));
    }
    if hs.iter().chain(errors).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("rate fit needs positive finite values".into()));
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("rate fit needs distinct h values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub h1_error: f64,
    pub l2_error: f64,
    pub map_l2: f64,
    pub vertex_l2: f64,
    pub inverse_map_l2: f64,
    pub w1_bound: f64,
    pub newton_iters: usize,
    pub residual_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFits {
    pub h1_error: RateFit,
    pub l2_error: RateFit,
    pub map_l2: RateFit,
    pub vertex_l2: RateFit,
    pub inverse_map_l2: RateFit,
    pub w1_bound: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Present when there are at least three rows.
    pub fits: Option<RateFits>,
}

pub const REPORT_HEADER: &str = "h,N,h1_error,l2_error,map_l2,vertex_l2,inverse_map_l2,w1_bound,newton_iters,residual_inf";

impl RateReport {
    pub fn new(mut rows: Vec<RateRow>) -> Result<Self> {
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        if rows.windows(2).any(|w| w[1].h >= w[0].h) {
            return Err(Error::InvalidInput("rate report rows need distinct h".into()));
        }
        let fits = if rows.len() >= 3 {
            let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
            let col = |f: fn(&RateRow) -> f64| -> Result<RateFit> {
                fit_rate(&hs, &rows.iter().map(f).collect::<Vec<_>>())
            };
            Some(RateFits {
                h1_error: col(|r| r.h1_error)?,
                l2_error: col(|r| r.l2_error)?,
                map_l2: col(|r| r.map_l2)?,
                vertex_l2: col(|r| r.vertex_l2)?,
                inverse_map_l2: col(|r| r.inverse_map_l2)?,
                w1_bound: col(|r| r.w1_bound)?,
            })
        } else {
            None
        };
        Ok(RateReport { rows, fits })
    }

    /// Writes the report rows, then a `slope` footer row with the fitted
    /// log-log slope of each error column (blank where not applicable).
    /// The footer needs at least three rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.h,
                r.n,
                r.h1_error,
                r.l2_error,
                r.map_l2,
                r.vertex_l2,
                r.inverse_map_l2,
                r.w1_bound,
                r.newton_iters,
                r.residual_inf
            )?;
        }
        if let Some(f) = &self.fits {
            writeln!(
                w,
                "slope,,{},{},{},{},{},{},,",
                f.h1_error.slope,
                f.l2_error.slope,
                f.map_l2.slope,
                f.vertex_l2.slope,
                f.inverse_map_l2.slope,
                f.w1_bound.slope
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A solved instance of the separable problem on some source cloud.
#[derive(Debug, Clone)]
pub struct ReferenceInstance {
    pub problem: SeparableProblem,
    pub cloud: SourceCloud,
    pub target: TargetDomain,
    pub masses: Vec<f64>,
    pub solution: Solution,
    pub map: TransportMapPWC,
    /// Set when the map failed the duality checks; `map` is then the
    /// unchecked convex extension.
    pub duality_violation: Option<(usize, f64)>,
}

/// How site masses are taken from the source measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassRule {
    /// `∫_{C_i} μ` over the Voronoi cells.
    #[default]
    Cells,
    /// `f(x_i) |C_i|`, renormalized.
    Weighted,
    /// `1/N`; only matches the source when it is uniform (`α = 0`).
    Equal,
}

/// Discretizes the source over `cloud`, solves, and builds the map.
pub fn solve_reference_instance(
    problem: &SeparableProblem,
    cloud: SourceCloud,
    rule: MassRule,
    settings: &SolveSettings,
) -> Result<ReferenceInstance> {
    let source = problem.source()?;
    let target = problem.target()?;
    let f = match rule {
        MassRule::Cells => discretize(&source, &cloud)?,
        MassRule::Weighted => discretize_weighted(&source, &cloud)?,
        MassRule::Equal => DiscreteMeasure::uniform(cloud.points.clone())?,
    };
    let planar = PlanarProblem::new(cloud.points.clone(), target.clone());
    let solution = damped_newton_with(&planar, &f.masses, settings)?;
    let (map, duality_violation) = match transport_map(&cloud.points, &solution.potential, &solution.diagram) {
        Ok(m) => (m, None),
        Err(Error::DualityViolation { facet, distance }) => (
            TransportMapPWC::from_pwa(extend_pwa(&cloud.points, &solution.potential)?),
            Some((facet, distance)),
        ),
        Err(e) => return Err(e),
    };
    Ok(ReferenceInstance {
        problem: *problem,
        cloud,
        target,
        masses: f.masses,
        solution,
        map,
        duality_violation,
    })
}

/// Grid instance; duality violations are errors here.
pub fn solve_grid_instance(problem: &SeparableProblem, k: usize, settings: &SolveSettings) -> Result<ReferenceInstance> {
    let cloud = grid_cloud(&ConvexPolygon::unit_square(), k)?;
    let inst = solve_reference_instance(problem, cloud, MassRule::Cells, settings)?;
    match inst.duality_violation {
        Some((facet, distance)) => Err(Error::DualityViolation { facet, distance }),
        None => Ok(inst),
    }
}

impl ReferenceInstance {
    pub fn rate_row(&self) -> Result<RateRow> {
        let p = &self.problem;
        let h1 = h1_error(&self.map, p);
        let map_l2 = map_l2_error(self.map.pwa(), p);
        if h1 != map_l2 {
            return Err(Error::InvalidInput(format!("map error mismatch: {h1} vs {map_l2}")));
        }
        Ok(RateRow {
            h: self.cloud.mesh_norm,
            n: self.cloud.len(),
            h1_error: h1,
            l2_error: l2_error(self.map.pwa(), p),
            map_l2,
            vertex_l2: vertex_l2_error(&self.cloud.points, &self.solution.potential, p),
            inverse_map_l2: inverse_map_error(&self.solution.diagram, &self.target, p),
            w1_bound: w1_upper_bound(&p.source()?, &self.cloud),
            newton_iters: self.solution.report.iterations,
            residual_inf: self.solution.report.final_residual_inf,
        })
    }
}

/// Solves the separable problem on each `k x k` grid and tabulates errors.
pub fn rate_series(alpha: f64, ks: &[usize], settings: &SolveSettings) -> Result<RateReport> {
    let problem = SeparableProblem::new(alpha)?;
    let rows = ks
        .iter()
        .map(|&k| solve_grid_instance(&problem, k, settings)?.rate_row())
        .collect::<Result<Vec<_>>>()?;
    RateReport::new(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub alpha: f64,
    pub alpha_other: f64,
    /// `|α - α'| / √15`.
    pub d_l2_exact: f64,
    pub d_l2_quadrature: f64,
    /// Upper bound for `W₁` from the product of the one-dimensional
    /// monotone couplings.
    pub w1_bound: f64,
    /// `d_l2 / sqrt(w1)`, `None` when both vanish.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// Largest ratio: the smallest constant `C` with `d ≤ C W₁^{1/2}`.
    pub constant: f64,
    /// Largest over smallest ratio.
    pub ratio_spread: f64,
}

/// Distance between the exact maps of pairs of separable problems against
/// the `W₁` distance of their source measures. Integrals use a composite
/// 4-point Gauss rule on `k` intervals per axis.
pub fn stability_experiment(pairs: &[(f64, f64)], k: usize) -> Result<StabilityReport> {
    if k == 0 {
        return Err(Error::InvalidInput("quadrature resolution must be at least 1".into()));
    }
    let rule = gauss_legendre_unit(4);
    let nodes: Vec<(f64, f64)> = (0..k)
        .flat_map(|c| rule.iter().map(move |&(s, w)| ((c as f64 + s) / k as f64, w / k as f64)))
        .collect();
    let mut rows = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let pa = SeparableProblem::new(a)?;
        let pb = SeparableProblem::new(b)?;
        let mut d2 = 0.0;
        for &(s, ws) in &nodes {
            for &(t, wt) in &nodes {
                let x = Point2::new(s, t);
                d2 += ws * wt * (pa.map(x) - pb.map(x)).norm2();
            }
        }
        // Each marginal distribution function equals the 1D map.
        let w1_axis: f64 = nodes.iter().map(|&(s, w)| w * (pa.map_1d(s) - pb.map_1d(s)).abs()).sum();
        let w1 = 2.0 * w1_axis;
        let d_exact = (a - b).abs() / 15f64.sqrt();
        let d_quad = d2.sqrt();
        rows.push(StabilityRow {
            alpha: a,
            alpha_other: b,
            d_l2_exact: d_exact,
            d_l2_quadrature: d_quad,
            w1_bound: w1,
            ratio: if w1 > 0.0 { Some(d_quad / w1.sqrt()) } else { None },
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        rows,
        constant: max,
        ratio_spread: if ratios.is_empty() { 1.0 } else { max / min },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    #[test]
    fn self_check_passes() {
        for a in [-0.9, -0.3, 0.0, 0.5, 0.9] {
            let c = SeparableProblem::new(a).unwrap().self_check();
            assert!(c.mass_error <= 1e-12, "{c:?}");
            assert!(c.monge_ampere_residual <= 1e-12);
            assert!(c.ks_distance[0] <= 0.02 && c.ks_distance[1] <= 0.02, "{c:?}");
        }
        assert!(SeparableProblem::new(0.95).is_err());
    }

    #[test]
    fn inverse_is_stable_and_exact() {
        for a in [-0.9, -1e-9, 0.0, 1e-12, 0.5, 0.9] {
            let p = SeparableProblem::new(a).unwrap();
            for k in 0..=100 {
                let s = k as f64 / 100.0;
                assert!((p.inverse_1d(p.map_1d(s)) - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn potential_gradient_is_the_map() {
        let p = SeparableProblem::new(0.5).unwrap();
        let x = Point2::new(0.3, 0.8);
        let h = 1e-6;
        let gx = (p.potential(x + Point2::new(h, 0.0)) - p.potential(x - Point2::new(h, 0.0))) / (2.0 * h);
        let gy = (p.potential(x + Point2::new(0.0, h)) - p.potential(x - Point2::new(0.0, h))) / (2.0 * h);
        assert!((gx - p.map(x).x).abs() < 1e-9 && (gy - p.map(x).y).abs() < 1e-9);
        let [hxx, _] = p.potential_hessian_diagonal(x);
        let num = (p.map_1d(x.x + h) - p.map_1d(x.x - h)) / (2.0 * h);
        assert!((num - hxx).abs() < 1e-9);
    }

    #[test]
    fn fit_rate_examples() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let f = fit_rate(&hs, &hs).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let e: Vec<f64> = hs.iter().map(|h| 3.0 * h.sqrt()).collect();
        let f = fit_rate(&hs, &e).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit_rate(&hs, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn identity_problem_errors() {
        let p = SeparableProblem::new(0.0).unwrap();
        let cloud = grid_cloud(&ConvexPolygon::unit_square(), 8).unwrap();
        let exact: Vec<f64> = cloud.points.iter().map(|&x| p.potential(x)).collect();
        let pwa = extend_pwa(&cloud.points, &exact).unwrap();
        // Interpolation of a quadratic: O(h²).
        assert!(l2_error(&pwa, &p) <= cloud.mesh_norm.powi(2));
        let shifted: Vec<f64> = exact.iter().map(|v| v + 5.0).collect();
        let pwa2 = extend_pwa(&cloud.points, &shifted).unwrap();
        assert!((l2_error(&pwa, &p) - l2_error(&pwa2, &p)).abs() < 1e-12);
        assert!(vertex_l2_error(&cloud.points, &exact, &p) < 1e-15);
        assert!(vertex_l2_error(&cloud.points, &shifted, &p) < 1e-14);

        let inst = solve_grid_instance(&p, 8, &SolveSettings::default()).unwrap();
        let row = inst.rate_row().unwrap();
        assert!(row.h1_error <= row.h);
        assert!(row.inverse_map_l2 <= row.h);
        assert_eq!(row.h1_error, row.map_l2);
    }

    #[test]
    fn single_site_inverse_error_matches_monte_carlo() {
        let p = SeparableProblem::new(0.5).unwrap();
        let t = p.target().unwrap();
        let x = Point2::new(0.5, 0.5);
        let d = crate::laguerre::build_diagram(&[x], &[0.0], &t).unwrap();
        let e = inverse_map_error(&d, &t, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = Point2::new(rng.random(), rng.random());
            acc += (x - p.inverse_map(y)).norm2();
        }
        let mc = (acc / n as f64).sqrt();
        assert!((e - mc).abs() < 2e-3, "{e} vs {mc}");
    }

    #[test]
    fn stability_closed_forms() {
        let r = stability_experiment(&[(0.3, 0.3), (0.0, 0.5)], 4).unwrap();
        assert_eq!(r.rows[0].d_l2_quadrature, 0.0);
        assert_eq!(r.rows[0].w1_bound, 0.0);
        assert!((r.rows[1].d_l2_exact - 0.5 / 15f64.sqrt()).abs() < 1e-15);
        assert!((r.rows[1].d_l2_quadrature - r.rows[1].d_l2_exact).abs() < 1e-12);
        assert!((r.rows[1].w1_bound - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rate_report_csv_has_footer() {
        let rows: Vec<RateRow> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&h| RateRow {
                h,
                n: 1,
                h1_error: h.sqrt(),
                l2_error: h,
                map_l2: h.sqrt(),
                vertex_l2: h,
                inverse_map_l2: h.powf(0.25),
                w1_bound: h / 2.0,
                newton_iters: 3,
                residual_inf: 1e-12,
            })
            .collect();
        let rep = RateReport::new(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        rep.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("slope,,0.5"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn vertex_error_is_shift_invariant(c in -10.0f64..10.0, a in -0.9f64..0.9) {
            let p = SeparableProblem::new(a).unwrap();
            let cloud = grid_cloud(&ConvexPolygon::unit_square(), 3).unwrap();
            let phi: Vec<f64> = cloud.points.iter().enumerate().map(|(i, x)| x.norm2() + 0.01 * i as f64).collect();
            let shifted: Vec<f64> = phi.iter().map(|v| v + c).collect();
            let e0 = vertex_l2_error(&cloud.points, &phi, &p);
            let e1 = vertex_l2_error(&cloud.points, &shifted, &p);
            prop_assert!((e0 - e1).abs() < 1e-12);
        }
    }
}

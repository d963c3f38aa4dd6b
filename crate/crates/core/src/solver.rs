//! Damped Newton solver for the discrete Monge-Ampère equation
//! `m_i(phi) = f_i`, posed as minimization of the convex dual energy
//! `E(phi) = ∫_Y max_i (x_i.y - phi_i) g dy + Σ_i f_i phi_i`, `∇E = f - m`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SolveFailure};
use crate::geom::Point2;
use crate::laguerre::{build_diagram, mass_jacobian, subtract_mean, LaguerreDiagram, MassJacobian, PotentialVector};
use crate::linalg::solve_laplacian;
use crate::measures::TargetDomain;

/// Produces Laguerre diagrams for a fixed set of sites from a vector of
/// unknowns, and the unknown-dependent part of the dual energy.
pub trait DiagramBuilder: Sync {
    fn sites(&self) -> &[Point2];

    fn diagram(&self, unknowns: &[f64]) -> Result<LaguerreDiagram>;

    /// `∫ ψ g` over the domain, where `ψ` is the conjugate whose cells
    /// make up `diagram`.
    fn conjugate_integral(&self, diagram: &LaguerreDiagram, unknowns: &[f64]) -> f64;

    /// Mean-zero starting point whose cells are all nonempty.
    fn initial_guess(&self) -> Vec<f64>;

    /// Scale used for perturbations (squared domain diameter).
    fn length_scale_sq(&self) -> f64;
}

/// Sites in the plane with a target domain; unknowns are `phi_i`.
#[derive(Clone, Debug)]
pub struct PlanarProblem {
    pub sites: Vec<Point2>,
    pub target: TargetDomain,
}

impl PlanarProblem {
    pub fn new(sites: Vec<Point2>, target: TargetDomain) -> Self {
        PlanarProblem { sites, target }
    }
}

impl DiagramBuilder for PlanarProblem {
    fn sites(&self) -> &[Point2] {
        &self.sites
    }

    fn diagram(&self, phi: &[f64]) -> Result<LaguerreDiagram> {
        build_diagram(&self.sites, phi, &self.target)
    }

    fn conjugate_integral(&self, d: &LaguerreDiagram, phi: &[f64]) -> f64 {
        d.masses
            .iter()
            .zip(&d.centroids)
            .zip(self.sites.iter().zip(phi))
            .map(|((&m, c), (x, p))| match c {
                Some(c) => m * (x.dot(*c) - p),
                None => 0.0,
            })
            .sum()
    }

    fn initial_guess(&self) -> Vec<f64> {
        PotentialVector::voronoi(&self.sites).mean_zero().values
    }

    fn length_scale_sq(&self) -> f64 {
        let d = self.target.boundary().diameter();
        d * d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    /// Stop when `max_i |m_i - f_i|` is at most this.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Cells must keep at least this fraction of the initial smallest mass.
    pub epsilon0_factor: f64,
    pub backtrack_factor: f64,
    pub min_step: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol_residual: 1e-10,
            max_iters: 100,
            epsilon0_factor: 0.5,
            backtrack_factor: 0.5,
            min_step: 1e-7,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol_residual > 0.0
            && self.epsilon0_factor > 0.0
            && self.epsilon0_factor < 1.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.min_step > 0.0
            && self.min_step < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub residual_inf: f64,
    pub step: f64,
    pub energy: f64,
    pub min_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_inf: f64,
    pub step_sizes: Vec<f64>,
    pub energies: Vec<f64>,
    pub converged: bool,
    pub epsilon0: f64,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Converged solve: mean-zero unknowns and the diagram they produce.
#[derive(Debug, Clone)]
pub struct Solution {
    pub potential: Vec<f64>,
    pub diagram: LaguerreDiagram,
    pub report: SolveReport,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(masses: &[f64], f: &[f64]) -> Vec<f64> {
    masses.iter().zip(f).map(|(m, f)| m - f).collect()
}

/// `E = ∫ ψ g + Σ f_i x_i` for a built diagram.
pub fn energy_of<B: DiagramBuilder + ?Sized>(b: &B, d: &LaguerreDiagram, x: &[f64], f: &[f64]) -> f64 {
    b.conjugate_integral(d, x) + f.iter().zip(x).map(|(f, x)| f * x).sum::<f64>()
}

fn check_masses(f: &[f64], n: usize) -> Result<()> {
    if f.len() != n {
        return Err(Error::InvalidInput(format!("{n} sites but {} target masses", f.len())));
    }
    if n == 0 {
        return Err(Error::NoPoints);
    }
    if f.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("target masses must be positive".into()));
    }
    let total: f64 = f.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("target masses sum to {total}, not 1")));
    }
    Ok(())
}

/// Damped Newton iteration started from `init` (or the builder's initial
/// guess). Every accepted step keeps all masses above
/// `epsilon0 = epsilon0_factor * min(min f, min m(init))`, reduces the
/// residual norm by the factor `1 - t/2` and does not increase the energy.
pub fn damped_newton_from<B: DiagramBuilder + ?Sized>(
    b: &B,
    f: &[f64],
    settings: &SolveSettings,
    init: Option<Vec<f64>>,
) -> Result<Solution> {
    settings.validate()?;
    let n = b.sites().len();
    check_masses(f, n)?;
    let mut x = init.unwrap_or_else(|| b.initial_guess());
    if x.len() != n {
        return Err(Error::InvalidInput("initial guess has the wrong length".into()));
    }
    subtract_mean(&mut x);
    let mut d = b.diagram(&x)?;
    let mut r = residual(&d.masses, f);
    let mut e = energy_of(b, &d, &x, f);
    let mut report = SolveReport {
        final_residual_inf: inf_norm(&r),
        ..Default::default()
    };
    let min_mass = d.min_mass();
    report.energies.push(e);
    report.trace.push(TraceRow {
        iter: 0,
        residual_inf: report.final_residual_inf,
        step: 0.0,
        energy: e,
        min_mass,
    });
    if !(min_mass > 0.0) {
        return Err(Error::solve(SolveFailure::InfeasibleInitialization, report));
    }
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let eps0 = settings.epsilon0_factor * f_min.min(min_mass);
    report.epsilon0 = eps0;

    loop {
        let res_inf = inf_norm(&r);
        report.final_residual_inf = res_inf;
        if res_inf <= settings.tol_residual {
            report.converged = true;
            break;
        }
        if report.iterations >= settings.max_iters {
            return Err(Error::solve(SolveFailure::MaxIterations, report));
        }
        let lap = mass_jacobian(&d).laplacian();
        let dir = solve_laplacian(&lap, &r)?;
        let r_norm = two_norm(&r);
        let mut t = 1.0;
        let accepted = loop {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let dt = b.diagram(&xt)?;
            if dt.min_mass() >= eps0 {
                let rt = residual(&dt.masses, f);
                let et = energy_of(b, &dt, &xt, f);
                if two_norm(&rt) <= (1.0 - 0.5 * t) * r_norm && et <= e + 1e-13 * (1.0 + e.abs()) {
                    break Some((xt, dt, rt, et));
                }
            }
            t *= settings.backtrack_factor;
            if t < settings.min_step {
                break None;
            }
        };
        let Some((xt, dt, rt, et)) = accepted else {
            return Err(Error::solve(SolveFailure::Stalled, report));
        };
        x = xt;
        subtract_mean(&mut x);
        d = dt;
        r = rt;
        e = et;
        report.iterations += 1;
        report.step_sizes.push(t);
        report.energies.push(e);
        report.trace.push(TraceRow {
            iter: report.iterations,
            residual_inf: inf_norm(&r),
            step: t,
            energy: e,
            min_mass: d.min_mass(),
        });
    }
    Ok(Solution {
        potential: x,
        diagram: d,
        report,
    })
}

pub fn damped_newton_with<B: DiagramBuilder + ?Sized>(b: &B, f: &[f64], settings: &SolveSettings) -> Result<Solution> {
    damped_newton_from(b, f, settings, None)
}

/// Solves for site potentials in the plane, starting from Voronoi weights.
pub fn damped_newton(
    sites: &[Point2],
    f: &[f64],
    target: &TargetDomain,
    settings: &SolveSettings,
) -> Result<(PotentialVector, SolveReport)> {
    let p = PlanarProblem::new(sites.to_vec(), target.clone());
    let s = damped_newton_with(&p, f, settings)?;
    Ok((PotentialVector::new(s.potential), s.report))
}

pub fn energy(sites: &[Point2], phi: &[f64], target: &TargetDomain, f: &[f64]) -> Result<f64> {
    let p = PlanarProblem::new(sites.to_vec(), target.clone());
    let d = p.diagram(phi)?;
    Ok(energy_of(&p, &d, phi, f))
}

/// `∇E = f - m(phi)`.
pub fn gradient(sites: &[Point2], phi: &[f64], target: &TargetDomain, f: &[f64]) -> Result<Vec<f64>> {
    let d = build_diagram(sites, phi, target)?;
    Ok(f.iter().zip(&d.masses).map(|(f, m)| f - m).collect())
}

/// `∇²E = -∂m/∂phi`, returned as the mass Jacobian.
pub fn hessian(sites: &[Point2], phi: &[f64], target: &TargetDomain) -> Result<MassJacobian> {
    Ok(mass_jacobian(&build_diagram(sites, phi, target)?))
}

/// Mean-zero random perturbation of `base` with amplitude at most
/// `amplitude`, halved until every cell is nonempty. Returns the perturbed
/// point and the amplitude used.
pub fn feasible_perturbation<B: DiagramBuilder + ?Sized>(
    b: &B,
    base: &[f64],
    amplitude: f64,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = base.iter().map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    subtract_mean(&mut noise);
    let peak = inf_norm(&noise).max(1e-300);
    let mut a = amplitude;
    for _ in 0..60 {
        let x: Vec<f64> = base.iter().zip(&noise).map(|(b, z)| b + a * z / peak).collect();
        if b.diagram(&x)?.min_mass() > 0.0 {
            return Ok((x, a));
        }
        a *= 0.5;
    }
    Ok((base.to_vec(), 0.0))
}

/// Independent oracle for tiny instances (`N <= 4`): cyclic coordinate
/// descent where each one-dimensional problem `m_i(x) = f_i` is solved by
/// bisection (`m_i` is nonincreasing in `x_i`).
pub fn brute_force_with<B: DiagramBuilder + ?Sized>(b: &B, f: &[f64]) -> Result<Vec<f64>> {
    let n = b.sites().len();
    if n > 4 {
        return Err(Error::InvalidInput(format!("brute force solver takes at most 4 sites, got {n}")));
    }
    check_masses(f, n)?;
    let mut x = b.initial_guess();
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let scale = b.length_scale_sq();
    let mass_at = |x: &[f64], i: usize| -> Result<f64> { Ok(b.diagram(x)?.masses[i]) };
    for _sweep in 0..100_000 {
        let d = b.diagram(&x)?;
        if inf_norm(&residual(&d.masses, f)) <= 1e-11 {
            subtract_mean(&mut x);
            return Ok(x);
        }
        for i in 0..n {
            let mut y = x.clone();
            // Bracket a sign change of f_i - m_i.
            let mut lo = x[i];
            let mut hi = x[i];
            let mut step = scale;
            y[i] = lo;
            while f[i] - mass_at(&y, i)? > 0.0 {
                lo -= step;
                step *= 2.0;
                y[i] = lo;
            }
            step = scale;
            y[i] = hi;
            while f[i] - mass_at(&y, i)? < 0.0 {
                hi += step;
                step *= 2.0;
                y[i] = hi;
            }
            while hi - lo > 1e-16 * (1.0 + lo.abs().max(hi.abs())) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                y[i] = mid;
                if f[i] - mass_at(&y, i)? > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            x[i] = 0.5 * (lo + hi);
        }
    }
    let d = b.diagram(&x)?;
    let res = inf_norm(&residual(&d.masses, f));
    if res > 1e-8 {
        return Err(Error::solve(
            SolveFailure::MaxIterations,
            SolveReport {
                final_residual_inf: res,
                ..Default::default()
            },
        ));
    }
    subtract_mean(&mut x);
    Ok(x)
}

pub fn brute_force_solve(sites: &[Point2], f: &[f64], target: &TargetDomain) -> Result<PotentialVector> {
    let p = PlanarProblem::new(sites.to_vec(), target.clone());
    brute_force_with(&p, f).map(PotentialVector::new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ConvexPolygon;
    use crate::measures::random_points;
    use proptest::prelude::*;

    fn unit() -> TargetDomain {
        TargetDomain::uniform(ConvexPolygon::unit_square()).unwrap()
    }

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn two_points() -> Vec<Point2> {
        vec![p(0.25, 0.5), p(0.75, 0.5)]
    }

    #[test]
    fn single_site_energy() {
        let e = energy(&[p(0.3, 0.9)], &[0.0], &unit(), &[1.0]).unwrap();
        assert!((e - (0.15 + 0.45)).abs() < 1e-15);
    }

    #[test]
    fn energy_is_shift_invariant() {
        let x = random_points(&ConvexPolygon::unit_square(), 30, 4).unwrap();
        let phi = PotentialVector::voronoi(&x).values;
        let f = vec![1.0 / 30.0; 30];
        let e0 = energy(&x, &phi, &unit(), &f).unwrap();
        let shifted: Vec<f64> = phi.iter().map(|v| v + 3.7).collect();
        let e1 = energy(&x, &shifted, &unit(), &f).unwrap();
        assert!((e0 - e1).abs() < 1e-12);
    }

    #[test]
    fn two_point_closed_form() {
        let f = [0.7, 0.3];
        let (phi, rep) = damped_newton(&two_points(), &f, &unit(), &SolveSettings::default()).unwrap();
        assert!(rep.converged);
        assert!((phi.values[0] + 0.175).abs() < 1e-10, "{:?}", phi.values);
        assert!((phi.values[1] - 0.175).abs() < 1e-10);
        let bf = brute_force_solve(&two_points(), &f, &unit()).unwrap();
        assert!((bf.values[0] + 0.175).abs() < 1e-6 && (bf.values[1] - 0.175).abs() < 1e-6);
        // The closed form minimizes the energy along the free direction.
        let e = |s: f64| energy(&two_points(), &[-s, s], &unit(), &f).unwrap();
        assert!(e(0.175) <= e(0.175 + 1e-4) && e(0.175) <= e(0.175 - 1e-4));
    }

    #[test]
    fn symmetric_four_points_need_no_steps() {
        let x = vec![p(0.25, 0.25), p(0.75, 0.25), p(0.25, 0.75), p(0.75, 0.75)];
        let f = [0.25; 4];
        let g = gradient(&x, &PotentialVector::voronoi(&x).values, &unit(), &f).unwrap();
        assert!(inf_norm(&g) < 1e-15);
        let (phi, rep) = damped_newton(&x, &f, &unit(), &SolveSettings::default()).unwrap();
        assert!(rep.iterations <= 1);
        let want = PotentialVector::voronoi(&x).mean_zero();
        for (a, b) in phi.values.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_energy_differences() {
        let x = random_points(&ConvexPolygon::unit_square(), 20, 8).unwrap();
        let f = vec![0.05; 20];
        let phi = PotentialVector::voronoi(&x).values;
        let g = gradient(&x, &phi, &unit(), &f).unwrap();
        let s: f64 = g.iter().sum();
        assert!(s.abs() < 1e-12);
        for j in 0..20 {
            let mut a = phi.clone();
            a[j] += 1e-6;
            let mut b = phi.clone();
            b[j] -= 1e-6;
            let fd = (energy(&x, &a, &unit(), &f).unwrap() - energy(&x, &b, &unit(), &f).unwrap()) / 2e-6;
            assert!((fd - g[j]).abs() <= 1e-6, "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn random_hundred_converges() {
        let x = random_points(&ConvexPolygon::unit_square(), 100, 1).unwrap();
        let f = vec![0.01; 100];
        let (_, rep) = damped_newton(&x, &f, &unit(), &SolveSettings::default()).unwrap();
        assert!(rep.converged && rep.final_residual_inf <= 1e-10 && rep.iterations <= 30);
        for w in rep.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * (1.0 + w[0].abs()));
        }
        for w in rep.trace.windows(2) {
            assert!(w[1].residual_inf < w[0].residual_inf || w[1].residual_inf <= 1e-10);
            assert!(w[1].min_mass >= rep.epsilon0);
        }
    }

    #[test]
    fn infeasible_start_and_iteration_cap() {
        let x = two_points();
        let r = damped_newton_from(
            &PlanarProblem::new(x.clone(), unit()),
            &[0.5, 0.5],
            &SolveSettings::default(),
            Some(vec![0.0, 10.0]),
        );
        assert!(matches!(
            r,
            Err(Error::Solve {
                kind: SolveFailure::InfeasibleInitialization,
                ..
            })
        ));
        let s = SolveSettings {
            max_iters: 0,
            ..Default::default()
        };
        let r = damped_newton(&x, &[0.7, 0.3], &unit(), &s);
        assert!(matches!(
            r,
            Err(Error::Solve {
                kind: SolveFailure::MaxIterations,
                ..
            })
        ));
    }

    #[test]
    fn brute_force_agrees_on_three_points() {
        let x = random_points(&ConvexPolygon::unit_square(), 3, 5).unwrap();
        let f = [0.2, 0.5, 0.3];
        let (a, _) = damped_newton(&x, &f, &unit(), &SolveSettings::default()).unwrap();
        let b = brute_force_solve(&x, &f, &unit()).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-6);
        }
        assert_eq!(brute_force_solve(&[p(0.5, 0.5)], &[1.0], &unit()).unwrap().values, vec![0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn permutation_equivariance(seed in 0u64..500, rot in 1usize..29) {
            let n = 30;
            let x = random_points(&ConvexPolygon::unit_square(), n, seed).unwrap();
            let mut f: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
            let s: f64 = f.iter().sum();
            f.iter_mut().for_each(|v| *v /= s);
            let (a, _) = damped_newton(&x, &f, &unit(), &SolveSettings::default()).unwrap();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let xp: Vec<Point2> = perm.iter().map(|&k| x[k]).collect();
            let fp: Vec<f64> = perm.iter().map(|&k| f[k]).collect();
            let (b, _) = damped_newton(&xp, &fp, &unit(), &SolveSettings::default()).unwrap();
            for (i, &k) in perm.iter().enumerate() {
                prop_assert!((b.values[i] - a.values[k]).abs() < 1e-8);
            }
        }
    }
}

//! Equal masses on a random cloud: damped Newton from the Voronoi weights,
//! checked against the coordinate-bisection oracle on a tiny instance.

use sdot::measures::random_points;
use sdot::solver::{brute_force_solve, damped_newton};
use sdot::{ConvexPolygon, SolveSettings, TargetDomain};

pub fn run_example() -> sdot::Result<f64> {
    let square = ConvexPolygon::unit_square();
    let target = TargetDomain::uniform(square.clone())?;

    let n = 500;
    let sites = random_points(&square, n, 11)?;
    let f = vec![1.0 / n as f64; n];
    let (phi, report) = damped_newton(&sites, &f, &target, &SolveSettings::default())?;
    for row in &report.trace {
        println!(
            "iter {:2}  residual {:.3e}  step {:<6}  energy {:.12}",
            row.iter, row.residual_inf, row.step, row.energy
        );
    }
    assert_eq!(phi.len(), n);

    let small = random_points(&square, 4, 2)?;
    let f4 = [0.1, 0.2, 0.3, 0.4];
    let (newton, _) = damped_newton(&small, &f4, &target, &SolveSettings::default())?;
    let oracle = brute_force_solve(&small, &f4, &target)?;
    let gap = newton
        .as_slice()
        .iter()
        .zip(oracle.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("4 sites: newton vs bisection oracle {gap:.1e}");
    Ok(report.final_residual_inf)
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}

//! Periodic transport: a two-strip torus with a closed-form answer, then the
//! quasi-periodic reference on refining grids.

use sdot::periodic::{periodic_rate_series, periodic_solve, TorusCloud, TorusDensity};
use sdot::{Point2, SolveSettings};

pub fn run_example() -> sdot::Result<f64> {
    let cloud = TorusCloud::new(vec![Point2::new(0.25, 0.5), Point2::new(0.75, 0.5)], vec![0.6, 0.4])?;
    let sol = periodic_solve(&cloud, &TorusDensity::uniform(), &SolveSettings::default())?;
    println!("strips: u = {:?}, masses = {:?}", sol.potential, sol.diagram.masses);

    let report = periodic_rate_series(0.5, &[8, 16, 32], &SolveSettings::default())?;
    for r in &report.rows {
        println!("h {:.4}  N {:5}  H1 {:.4e}  newton {}", r.h, r.n, r.h1_error, r.newton_iters);
    }
    let slope = report.fits.expect("three rows").h1_error.slope;
    println!("H1 slope {slope:.3}");
    Ok(slope)
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}

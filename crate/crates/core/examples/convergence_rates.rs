//! Error norms against the separable reference on refining grids, with
//! log-log slopes.

use sdot::reference::rate_series;
use sdot::SolveSettings;

pub fn run_example() -> sdot::Result<f64> {
    let report = rate_series(0.5, &[6, 12, 24], &SolveSettings::default())?;
    println!("{:>8} {:>6} {:>10} {:>10} {:>10} {:>10}", "h", "N", "h1", "l2", "vertex", "inverse");
    for r in &report.rows {
        println!(
            "{:8.4} {:6} {:10.3e} {:10.3e} {:10.3e} {:10.3e}",
            r.h, r.n, r.h1_error, r.l2_error, r.vertex_l2, r.inverse_map_l2
        );
    }
    let fits = report.fits.expect("three rows");
    println!(
        "slopes: h1 {:.2}  l2 {:.2}  vertex {:.2}  inverse {:.2}  w1 {:.2}",
        fits.h1_error.slope, fits.l2_error.slope, fits.vertex_l2.slope, fits.inverse_map_l2.slope, fits.w1_bound.slope
    );
    Ok(fits.h1_error.slope)
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}

//! Map distance between reference problems against the W1 distance of
//! their sources.

use sdot::reference::stability_experiment;

pub fn run_example() -> sdot::Result<f64> {
    let pairs: Vec<(f64, f64)> = [0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|&t| (0.0, t)).collect();
    let r = stability_experiment(&pairs, 64)?;
    for row in &r.rows {
        println!(
            "({:.1}, {:.1})  d_L2 {:.10} (exact {:.10})  W1 <= {:.6}  ratio {:.4}",
            row.alpha,
            row.alpha_other,
            row.d_l2_quadrature,
            row.d_l2_exact,
            row.w1_bound,
            row.ratio.unwrap_or(f64::NAN)
        );
    }
    println!("constant {:.4}, max/min ratio {:.3}", r.constant, r.ratio_spread);
    Ok(r.ratio_spread)
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}

//! From solved site values to the piecewise-affine potential: lower hull of
//! the lifted sites, transport map, facet/vertex audit and the Monge-Ampère
//! measure of the Legendre transform.

use sdot::convexity::{global_lift, ma_measure_pwa};
use sdot::reference::{solve_grid_instance, SeparableProblem};
use sdot::{verify_facet_vertex_bijection, SolveSettings};

pub fn run_example() -> sdot::Result<usize> {
    let problem = SeparableProblem::new(0.5)?;
    let inst = solve_grid_instance(&problem, 10, &SolveSettings::default())?;
    let map = &inst.map;
    println!("{} facets over {} sites", map.facets.len(), inst.cloud.len());

    let audit = verify_facet_vertex_bijection(map.pwa(), &inst.solution.diagram);
    println!(
        "facets {}  interior vertices {}  degenerate pairs {}  mismatches {}",
        audit.facet_count,
        audit.interior_vertex_count,
        audit.degenerate_pairs,
        audit.mismatches()
    );

    // The Legendre transform's Monge-Ampère measure puts the cell masses back
    // on the sites.
    let atoms = ma_measure_pwa(&global_lift(&inst.solution.diagram));
    let mut worst: f64 = 0.0;
    for (x, m) in inst.cloud.points.iter().zip(&inst.solution.diagram.masses) {
        let k = atoms
            .points
            .iter()
            .position(|p| p.dist(*x) < 1e-9)
            .expect("every site carries an atom");
        worst = worst.max((atoms.masses[k] - m).abs());
    }
    println!("atom masses vs cell masses: {worst:.1e}");

    let y = map.eval(sdot::Point2::new(0.3, 0.7))?;
    println!("T_h(0.3, 0.7) = ({:.4}, {:.4}), exact ({:.4}, {:.4})", y.x, y.y, problem.map_1d(0.3), problem.map_1d(0.7));
    Ok(audit.mismatches())
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}

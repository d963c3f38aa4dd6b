//! Laguerre diagram of a small cloud: masses, shared edges and the mass
//! Jacobian, first at Voronoi weights and then with one site pushed down.

use sdot::laguerre::mass_jacobian;
use sdot::measures::random_points;
use sdot::{build_diagram, ConvexPolygon, PotentialVector, TargetDomain};

pub fn run_example() -> sdot::Result<(f64, f64)> {
    let square = ConvexPolygon::unit_square();
    let target = TargetDomain::uniform(square.clone())?;
    let sites = random_points(&square, 12, 3)?;

    let phi = PotentialVector::voronoi(&sites).values;
    let vor = build_diagram(&sites, &phi, &target)?;
    println!("voronoi: {} cells, {} edges, total mass {:.15}", vor.len(), vor.edges.len(), vor.total_mass());

    // Lowering phi_0 grows cell 0.
    let mut lowered = phi.clone();
    lowered[0] -= 0.02;
    let lag = build_diagram(&sites, &lowered, &target)?;
    println!("cell 0 mass: {:.5} -> {:.5}", vor.masses[0], lag.masses[0]);

    let h = mass_jacobian(&lag);
    let row: f64 = (0..sites.len()).map(|j| h.get(0, j)).sum();
    println!("jacobian row 0 sums to {row:.1e}, diagonal {:.4}", h.get(0, 0));
    Ok((vor.masses[0], lag.masses[0]))
}

fn main() -> sdot::Result<()> {
    run_example().map(|_| ())
}

//! Unmarked model with kappa = 0.5, c = 0.5: density 1 and the pair function
//! from the FFT closed form and from the Neumann resolvent.

use contact_workbench::dispersal::DispersalKernel;
use contact_workbench::hierarchy::{
    solve_k1, solve_k2_unmarked, solve_stationary, HierarchyProblem, Representation,
    SolverSettings, TorusGrid,
};
use contact_workbench::model::ContactModel;

fn main() -> contact_workbench::Result<()> {
    let model = ContactModel::unmarked(0.5, 0.5, DispersalKernel::uniform_ball(1, 1.0)?, 16.0)?;
    println!("k1 = {}", solve_k1(&model, 1e-14)?.values()[0]);

    let grid = TorusGrid::new(1, 16.0, 64)?;
    let problem = HierarchyProblem::new(model, grid, SolverSettings::default())?;
    let closed = solve_k2_unmarked(&problem)?;
    let neumann = solve_stationary(&problem, 2, Representation::Difference)?;
    println!(
        "sup |closed - neumann| = {:.2e}",
        closed.sup_distance(neumann.order(2))?
    );
    println!("{:>6} {:>12}", "u", "k2(u)");
    for cell in (0..=32).step_by(4) {
        println!(
            "{:6.2} {:12.8}",
            grid.position(cell)[0],
            closed.values()[cell]
        );
    }
    Ok(())
}

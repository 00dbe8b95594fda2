//! Relaxation of orders 1 and 2 from empty and from Poisson-like initial data.

use contact_workbench::dispersal::DispersalKernel;
use contact_workbench::hierarchy::{
    constant_initial, evolve_cauchy, solve_stationary, zero_initial, CauchySettings,
    HierarchyProblem, Representation, SolverSettings, TorusGrid,
};
use contact_workbench::model::ContactModel;

fn main() -> contact_workbench::Result<()> {
    let model =
        ContactModel::unmarked(0.5, 0.5, DispersalKernel::isotropic_gaussian(1, 1.0)?, 50.0)?;
    let grid = TorusGrid::new(1, 50.0, 128)?;
    let problem = HierarchyProblem::new(model, grid, SolverSettings::default())?;
    let reference = solve_stationary(&problem, 2, Representation::Difference)?.orders;
    let settings = CauchySettings {
        horizon: 40.0,
        dt: Some(0.01),
        record_every: 500,
    };
    for (name, initial) in [
        ("empty", zero_initial(&reference)),
        ("poisson(2)", constant_initial(&reference, 2.0)),
    ] {
        let traj = evolve_cauchy(&problem, &initial, &reference, &settings)?;
        println!("{name}:");
        for (j, t) in traj.times.iter().enumerate() {
            println!(
                "  t = {t:5.1}  |k1 - kc1| = {:.3e}  |k2 - kc2| = {:.3e}",
                traj.deviations[0][j], traj.deviations[1][j]
            );
        }
        println!(
            "  fitted rates {:.4} {:.4}",
            traj.decay_rate(1, 10.0, 40.0).unwrap_or(f64::NAN),
            traj.decay_rate(2, 10.0, 40.0).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

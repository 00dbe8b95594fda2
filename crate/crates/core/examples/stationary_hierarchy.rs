//! Order-3 stationary hierarchy of a two-mark planar model, with the
//! factorization and growth reports.

use contact_workbench::dispersal::DispersalKernel;
use contact_workbench::hierarchy::{
    check_factorization, solve_stationary, HierarchyProblem, Representation, SolverSettings,
    TorusGrid,
};
use contact_workbench::markspace::{MarkSpace, MutationKernel};
use contact_workbench::model::{ContactModel, ImmigrationRate};

fn main() -> contact_workbench::Result<()> {
    let marks = MarkSpace::new(vec!["a".into(), "b".into()], vec![1.0, 1.0])?;
    let kernel = MutationKernel::new(marks, vec![vec![2.0, 1.0], vec![1.0, 2.0]])?;
    let model = ContactModel::new(
        kernel,
        0.2,
        ImmigrationRate::new(vec![0.3, 0.6])?,
        DispersalKernel::isotropic_gaussian(2, 1.0)?,
        20.0,
    )?;
    println!("effective kappa {:.3}", model.kappa());
    let grid = TorusGrid::new(2, 20.0, 32)?;
    let problem = HierarchyProblem::new(model, grid, SolverSettings::default())?;
    let sol = solve_stationary(&problem, 3, Representation::Difference)?;
    println!("k1 = {:?}", sol.k1());

    let radii = [0.0, 2.5, 5.0, 10.0];
    for n in 2..=3 {
        let report = check_factorization(sol.order(n), sol.k1(), &radii)?;
        println!("order {n} deviation from the product vs separation:");
        for (r, d) in report.radii.iter().zip(&report.deviations) {
            println!("  {r:5.2} {}", d.map_or("-".into(), |v| format!("{v:.3e}")));
        }
    }
    let g = &sol.growth;
    println!(
        "growth ratios {:?}, H = {:.4}, D = {:.4}",
        g.ratios, g.h, g.d
    );
    Ok(())
}

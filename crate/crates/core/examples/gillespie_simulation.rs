//! Gillespie replicas of a two-mark model: densities against the solver and
//! the short-range pair correlation.

use contact_workbench::dispersal::DispersalKernel;
use contact_workbench::hierarchy::solve_k1;
use contact_workbench::markspace::{MarkSpace, MutationKernel};
use contact_workbench::model::{ContactModel, ImmigrationRate};
use contact_workbench::simulator::{
    estimate_k1, estimate_pair_correlation, run_replicas, SimParams,
};

fn main() -> contact_workbench::Result<()> {
    let marks = MarkSpace::new(vec!["a".into(), "b".into()], vec![1.0, 1.0])?;
    let kernel = MutationKernel::new(marks, vec![vec![2.0, 1.0], vec![1.0, 2.0]])?;
    let model = ContactModel::new(
        kernel,
        0.2,
        ImmigrationRate::new(vec![0.3, 0.6])?,
        DispersalKernel::isotropic_gaussian(1, 1.0)?,
        40.0,
    )?;
    let exact = solve_k1(&model, 1e-12)?;
    let mut params = SimParams::new(model, 99, 400.0, 30.0, 8);
    params.bin_width = 0.5;
    params.max_radius = 4.0;
    let acc = run_replicas(&params)?;
    for (e, k) in estimate_k1(&acc)?.iter().zip(exact.values()) {
        println!(
            "mark {}: simulated {:.4} +- {:.4}, solver {k:.4}",
            e.mark, e.estimate, e.stderr
        );
    }
    let events: u64 = acc
        .events
        .iter()
        .map(|e| e.births + e.deaths + e.immigrations)
        .sum();
    println!(
        "{events} events, mean population {:.1}",
        acc.mean_population()
    );
    for bin in estimate_pair_correlation(&acc)?
        .bins
        .iter()
        .filter(|b| b.mark_i == 0 && b.mark_j == 1)
    {
        println!(
            "  [{:.1}, {:.1}) k2(a, b) = {}",
            bin.r_lo,
            bin.r_hi,
            bin.estimate.map_or("-".into(), |v| format!(
                "{v:.4} +- {:.4}",
                bin.stderr.unwrap_or(0.0)
            ))
        );
    }
    Ok(())
}

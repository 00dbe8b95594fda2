//! Perron data of a two-mark mutation kernel and the renormalized contact intensity.

use contact_workbench::markspace::{krein_rutman, renormalize, MarkSpace, MutationKernel};

fn main() -> contact_workbench::Result<()> {
    let marks = MarkSpace::new(vec!["wild".into(), "mutant".into()], vec![1.0, 0.5])?;
    let kernel = MutationKernel::new(marks, vec![vec![2.0, 1.0], vec![0.5, 3.0]])?;
    let spec = krein_rutman(&kernel, 1e-12, 100_000)?;
    println!("r = {:.12}, kappa_cr = {:.12}", spec.r, spec.kappa_cr);
    println!("q = {:?}", spec.q);
    println!("q_adj = {:?}", spec.q_adj);
    println!(
        "converged in {} iterations (residual {:.1e})",
        spec.iterations, spec.residual
    );

    let (scaled, effective) = renormalize(&kernel, 0.5 * spec.kappa_cr)?;
    println!("kappa = kappa_cr / 2 gives effective kappa {effective:.6}");
    println!(
        "renormalized radius {:.12}",
        krein_rutman(&scaled, 1e-12, 100_000)?.r
    );

    match renormalize(&kernel, spec.kappa_cr) {
        Err(e) => println!("at kappa_cr: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

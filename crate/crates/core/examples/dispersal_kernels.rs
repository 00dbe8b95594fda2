//! Densities, characteristic functions and torus-wrapped densities of the dispersal families.

use contact_workbench::dispersal::DispersalKernel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> contact_workbench::Result<()> {
    let kernels = [
        ("gaussian", DispersalKernel::isotropic_gaussian(2, 1.0)?),
        ("ball", DispersalKernel::uniform_ball(2, 1.5)?),
        ("box", DispersalKernel::uniform_box(vec![1.0, 2.0])?),
    ];
    let side = 40.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, k) in &kernels {
        let sample = k.sample(&mut rng);
        println!(
            "{name:8} a(0) = {:.5}  char_fn(1, 0) = {:.5}  wrapped a(L/2, 0) = {:.3e}  rms std = {:.4}  sample = {:.3?}",
            k.density(&[0.0, 0.0])?,
            k.char_fn(&[1.0, 0.0]).re,
            k.wrapped_density(&[side / 2.0, 0.0], side)?,
            k.rms_std(),
            sample
        );
    }
    Ok(())
}

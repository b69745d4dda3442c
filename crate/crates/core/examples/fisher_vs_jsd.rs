//! Second-order agreement between the JSD of a small step and the
//! Fisher-Rao quadratic form: `JSD(p, p + d) ~ d'Gd / 8`.
//!
//! ```text
//! cargo run --example fisher_vs_jsd
//! ```

use geopath::metrics::{fisher_quadratic_form, FisherMode};
use geopath::nn::backward_jsd_pair;
use geopath::{Matrix, MlpConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> geopath::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = MlpConfig::new(vec![2, 4, 3], false)?;
    let theta = ModelParams::init_he(&config, &mut rng)?;
    let x = Matrix::new(
        16,
        2,
        (0..32).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )?;

    let mut delta = theta.zeros_like();
    for s in delta.slices_mut() {
        for v in s.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let norm = delta.norm();
    delta.scale(1.0 / norm);

    let g = fisher_quadratic_form(&theta, &delta, &x, FisherMode::Exact)?;
    println!("d'Gd = {g:.6}");
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let mut moved = theta.clone();
        moved.axpy(eps, &delta)?;
        let j = backward_jsd_pair(&theta, &moved, &x)?.2;
        println!(
            "eps {eps:.0e}: JSD / (eps^2 d'Gd / 8) = {:.6}",
            j / (eps * eps * g / 8.0)
        );
    }
    Ok(())
}

//! Forward pass, cross-entropy gradient and a finite-difference spot check.
//!
//! ```text
//! cargo run --example forward_and_gradients
//! ```

use geopath::nn::{backward_ce, cross_entropy, forward, predict_proba};
use geopath::{Matrix, MlpConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geopath::Result<()> {
    let config = MlpConfig::new(vec![2, 4, 3], true)?;
    let theta = ModelParams::init_he(&config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let x = Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.3], vec![-1.5, 1.5]])?;
    let y = [0, 2, 1];

    let logits = forward(&theta, &x)?;
    let probs = predict_proba(&theta, &x)?;
    for r in 0..x.rows {
        println!(
            "x = {:?}  logits = {:.4?}  probs = {:.4?}",
            x.row(r),
            logits.row(r),
            probs.row(r)
        );
    }
    let loss = |t: &ModelParams| cross_entropy(&predict_proba(t, &x).unwrap(), &y).unwrap();
    println!("mean cross-entropy: {:.6}", loss(&theta));

    let grad = backward_ce(&theta, &x, &y)?;
    let h = 1e-5;
    println!("first-layer weight gradients, analytic vs central difference:");
    for k in 0..theta.layers[0].weight.data.len() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus.layers[0].weight.data[k] += h;
        minus.layers[0].weight.data[k] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        println!(
            "  w[{k}]: {:+.10} {:+.10}",
            grad.layers[0].weight.data[k], numeric
        );
    }
    Ok(())
}

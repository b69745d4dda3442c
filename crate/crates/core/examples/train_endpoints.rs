//! Trains two narrow networks from different seeds and evaluates them.
//!
//! ```text
//! cargo run --release --example train_endpoints
//! ```

use geopath::cli::ExperimentConfig;
use geopath::trainer::{evaluate, train_with_history};

fn main() -> geopath::Result<()> {
    let cfg = ExperimentConfig::default();
    let (train, test) = cfg.load_data()?;
    let (seed_a, seed_b) = cfg.model_seeds();
    for seed in [seed_a, seed_b] {
        let (model, history) = train_with_history(&cfg.arch, &train, &cfg.train.opts(seed))?;
        let tr = evaluate(&model, &train)?;
        let te = evaluate(&model, &test)?;
        println!(
            "seed {seed}: epoch loss {:.4} -> {:.4}; train {:.4} ({:.1}%), test {:.4} ({:.1}%)",
            history.epoch_loss[0],
            history.epoch_loss[history.epoch_loss.len() - 1],
            tr.loss,
            100.0 * tr.accuracy,
            te.loss,
            100.0 * te.accuracy
        );
    }
    Ok(())
}

//! The full desk-scale experiment: two aligned narrow networks, the linear
//! path between them, and the optimized path.
//!
//! ```text
//! cargo run --release --example geodesic_path [ITERATIONS]
//! ```

use geopath::align::{apply_permutation, weight_matching};
use geopath::cli::ExperimentConfig;
use geopath::geodesic::{init_path, optimize_path};
use geopath::metrics::loss_profile;
use geopath::trainer::train;

fn main() -> geopath::Result<()> {
    let mut cfg = ExperimentConfig::default();
    if let Some(n) = std::env::args().nth(1) {
        cfg.geodesic.iterations = n.parse().expect("ITERATIONS must be a count");
    }
    let (train_set, test_set) = cfg.load_data()?;
    let (seed_a, seed_b) = cfg.model_seeds();
    let a = train(&cfg.arch, &train_set, &cfg.train.opts(seed_a))?;
    let b = train(&cfg.arch, &train_set, &cfg.train.opts(seed_b))?;
    let b = apply_permutation(&b, &weight_matching(&a, &b)?)?;

    let linear = init_path(&a, &b, cfg.n)?;
    let opts = cfg.geodesic.opts(cfg.geodesic_seed());
    let (optimized, trace) = optimize_path(&linear, train_set.inputs(), &opts)?;
    for t in trace.iter().step_by(10).chain(trace.last()) {
        println!(
            "iteration {:>5}: energy {:.4e}  sum sqrt(JSD) {:.4}  euclid {:.4}",
            t.iteration, t.energy, t.sqrt_length, t.euclid_length
        );
    }

    let pre = loss_profile(&linear, &train_set, &test_set)?;
    let post = loss_profile(&optimized, &train_set, &test_set)?;
    println!(" model   linear loss  optimized loss");
    for i in 0..cfg.n {
        println!(
            "{:>6} {:>13.4} {:>15.4}",
            i + 1,
            pre.per_model_train_loss[i],
            post.per_model_train_loss[i]
        );
    }
    println!(
        "train barrier {:.4} -> {:.4}",
        pre.train_barrier(),
        post.train_barrier()
    );
    println!(
        "test barrier  {:.4} -> {:.4}",
        pre.test_barrier(),
        post.test_barrier()
    );
    Ok(())
}

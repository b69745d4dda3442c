//! Writes the report files for a short optimization run.
//!
//! ```text
//! cargo run --release --example report [OUT_DIR]
//! ```

use geopath::align::{apply_permutation, weight_matching};
use geopath::cli::ExperimentConfig;
use geopath::geodesic::{init_path, optimize_path};
use geopath::metrics::{loss_profile, write_report};
use geopath::trainer::train;

fn main() -> geopath::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("geopath-example-report"));
    let mut cfg = ExperimentConfig::default();
    cfg.geodesic.iterations = 500;

    let (train_set, test_set) = cfg.load_data()?;
    let (seed_a, seed_b) = cfg.model_seeds();
    let a = train(&cfg.arch, &train_set, &cfg.train.opts(seed_a))?;
    let b = train(&cfg.arch, &train_set, &cfg.train.opts(seed_b))?;
    let b = apply_permutation(&b, &weight_matching(&a, &b)?)?;
    let linear = init_path(&a, &b, cfg.n)?;
    let (optimized, trace) = optimize_path(
        &linear,
        train_set.inputs(),
        &cfg.geodesic.opts(cfg.geodesic_seed()),
    )?;

    let pre = loss_profile(&linear, &train_set, &test_set)?;
    let post = loss_profile(&optimized, &train_set, &test_set)?;
    write_report(&pre, &post, &trace, &out)?;
    for name in [
        "path_lengths.csv",
        "pre_opt_loss.csv",
        "post_opt_loss.csv",
        "trace.csv",
        "metrics.json",
    ] {
        println!("{}", out.join(name).display());
    }
    Ok(())
}

//! Permutation alignment: recovering a planted permutation, then aligning
//! two independently trained networks.
//!
//! ```text
//! cargo run --release --example weight_matching
//! ```

use geopath::align::{
    apply_permutation, weight_matching, weight_matching_with, MatchOpts, PermutationSpec,
};
use geopath::cli::ExperimentConfig;
use geopath::geodesic::init_path;
use geopath::nn::forward;
use geopath::trainer::{evaluate, train};
use geopath::ModelParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> geopath::Result<()> {
    let cfg = ExperimentConfig::default();
    let (train_set, _) = cfg.load_data()?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let theta = ModelParams::init_he(&cfg.arch, &mut rng)?;
    let planted = PermutationSpec::random(&cfg.arch, &mut rng);
    let shuffled = apply_permutation(&theta, &planted)?;
    let same =
        forward(&theta, train_set.inputs())?.data == forward(&shuffled, train_set.inputs())?.data;
    println!("planted {:?}; logits unchanged: {same}", planted.perms);
    let found = weight_matching(&theta, &shuffled)?;
    println!(
        "recovered exactly: {}",
        apply_permutation(&shuffled, &found)?.bitwise_eq(&theta)
    );

    let (seed_a, seed_b) = cfg.model_seeds();
    let a = train(&cfg.arch, &train_set, &cfg.train.opts(seed_a))?;
    let b = train(&cfg.arch, &train_set, &cfg.train.opts(seed_b))?;
    let outcome = weight_matching_with(&a, &b, &MatchOpts::default())?;
    println!(
        "trained pair: similarity {:.3} -> {:.3} in {} sweeps",
        outcome.objective[0],
        outcome.objective[outcome.objective.len() - 1],
        outcome.sweeps
    );
    let aligned = apply_permutation(&b, &outcome.spec)?;
    for (name, end) in [("unaligned", &b), ("aligned", &aligned)] {
        let path = init_path(&a, end, 3)?;
        println!(
            "{name:>9} midpoint train loss {:.4}",
            evaluate(&path.models()[1], &train_set)?.loss
        );
    }
    Ok(())
}

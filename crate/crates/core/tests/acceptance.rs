//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use geopath::align::{
    apply_permutation, assignment_score, solve_lap, weight_matching, PermutationSpec,
};
use geopath::cli::{main_with_args, ExperimentConfig};
use geopath::geodesic::{energy_gradients, init_path, jsd, optimize_path, path_energy, Path};
use geopath::metrics::{fisher_quadratic_form, loss_profile, FisherMode};
use geopath::nn::{backward_ce, backward_jsd_pair, cross_entropy, predict_proba};
use geopath::trainer::train;
use geopath::{data, MlpConfig, ModelParams};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    let theta = random_model(&[2, 4, 3], false, 1);
    let x = random_inputs(8, 2, 2);
    let y: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let ce = |t: &ModelParams| cross_entropy(&predict_proba(t, &x).unwrap(), &y).unwrap();
    let grad = backward_ce(&theta, &x, &y).unwrap();

    let a = random_model(&[2, 4, 3], false, 3);
    let b = random_model(&[2, 4, 3], false, 4);
    let mid = random_model(&[2, 4, 3], false, 5);
    let path = Path::new(vec![a.clone(), mid.clone(), b.clone()]).unwrap();
    let energy_grad = energy_gradients(&path, &x).unwrap().1.remove(0);
    let energy = |m: &ModelParams| {
        path_energy(
            &Path::new(vec![a.clone(), m.clone(), b.clone()]).unwrap(),
            &x,
        )
        .unwrap()
        .0
    };

    let (mut worst_ce, mut worst_energy) = (0.0f64, 0.0f64);
    for k in 0..20 {
        let d = unit_direction(&theta, 100 + k);
        let fd = directional_fd(ce, &theta, &d, H);
        worst_ce = worst_ce.max(rel_err(grad.dot(&d).unwrap(), fd, 1e-12));
        let fd = directional_fd(energy, &mid, &d, H);
        worst_energy = worst_energy.max(rel_err(energy_grad.dot(&d).unwrap(), fd, 1e-12));
    }
    outcome(
        worst_ce < 1e-5 && worst_energy < 1e-5,
        format!("max rel err: cross-entropy {worst_ce:.2e}, energy {worst_energy:.2e} (tol 1e-5)"),
    )
}

fn fisher_jsd() -> Outcome {
    let theta = random_model(&[2, 4, 3], false, 11);
    let x = random_inputs(16, 2, 12);
    let mut worst = 0.0f64;
    let mut monotone = true;
    for k in 0..10 {
        let delta = unit_direction(&theta, 200 + k);
        let g = fisher_quadratic_form(&theta, &delta, &x, FisherMode::Exact).unwrap();
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let j = backward_jsd_pair(&theta, &shifted(&theta, &delta, eps), &x)
                .unwrap()
                .2;
            let ratio = j / (eps * eps / 8.0 * g);
            let deviation = (ratio - 1.0).abs();
            monotone &= deviation < last;
            last = deviation;
            if eps == 1e-3 {
                worst = worst.max(deviation);
            }
        }
    }
    outcome(
        worst <= 0.01 && monotone,
        format!("max |ratio - 1| at eps 1e-3: {worst:.2e}; monotone in eps: {monotone}"),
    )
}

fn lap_exactness() -> Outcome {
    let mut r = rng(7);
    let mut mismatches = 0;
    for n in 2..=7 {
        for _ in 0..100 {
            let s = random_square(n, &mut r);
            let sigma = solve_lap(&s).unwrap();
            let (best, total) = brute_force_lap(&s);
            if sigma != best || (assignment_score(&s, &sigma) - total).abs() > 1e-12 {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} of 600 differ from exhaustive search"),
    )
}

fn planted_recovery() -> Outcome {
    let d = data::gen_gaussian_mixture(5, 40, 2, 0.5, 3).unwrap();
    let archs: [(&[usize], bool); 2] = [(&[2, 8, 8, 5], false), (&[2, 16, 12, 5], true)];
    let (mut recovered, mut worst_barrier) = (0, 0.0f64);
    for k in 0..10u64 {
        let (sizes, ln) = archs[k as usize % 2];
        let theta = random_model(sizes, ln, 300 + k);
        let planted = PermutationSpec::random(&theta.config, &mut rng(400 + k));
        let b = apply_permutation(&theta, &planted).unwrap();
        let aligned = apply_permutation(&b, &weight_matching(&theta, &b).unwrap()).unwrap();
        if aligned.bitwise_eq(&theta) {
            recovered += 1;
        }
        let profile = loss_profile(&init_path(&theta, &aligned, 25).unwrap(), &d, &d).unwrap();
        let losses = &profile.per_model_train_loss;
        let ends = losses[0].max(losses[24]);
        let interior = losses[1..24]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        worst_barrier = worst_barrier.max((interior - ends).abs());
    }
    outcome(
        recovered == 10 && worst_barrier <= 1e-12,
        format!(
            "{recovered}/10 recovered bitwise; max |interior - endpoint| loss {worst_barrier:.1e}"
        ),
    )
}

struct DeskScale {
    width: usize,
    ratio: f64,
    energy: (f64, f64),
    interior: (f64, f64),
    endpoint_max: f64,
    endpoints_fixed: bool,
    sqrt_len: (f64, f64),
    euclid: f64,
    chord: f64,
    cv: f64,
}

fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn interior_max(losses: &[f64]) -> f64 {
    losses[1..losses.len() - 1]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn desk_scale() -> DeskScale {
    let cfg = ExperimentConfig::default();
    let (train_set, test_set) = cfg.load_data().unwrap();
    let (seed_a, seed_b) = cfg.model_seeds();
    let mut width = 8;
    loop {
        let arch = MlpConfig::new(vec![2, width, width, 5], false).unwrap();
        let a = train(&arch, &train_set, &cfg.train.opts(seed_a)).unwrap();
        let b = train(&arch, &train_set, &cfg.train.opts(seed_b)).unwrap();
        let b = apply_permutation(&b, &weight_matching(&a, &b).unwrap()).unwrap();
        let linear = init_path(&a, &b, cfg.n).unwrap();
        let pre = loss_profile(&linear, &train_set, &test_set).unwrap();
        let losses = &pre.per_model_train_loss;
        let endpoint_max = losses[0].max(losses[losses.len() - 1]);
        let ratio = interior_max(losses) / endpoint_max;
        if ratio < 1.25 && width > 2 {
            println!("      width {width}: barrier ratio {ratio:.3} < 1.25, halving the width");
            width /= 2;
            continue;
        }

        let opts = cfg.geodesic.opts(cfg.geodesic_seed());
        let inputs = train_set.inputs();
        let (optimized, _) = optimize_path(&linear, inputs, &opts).unwrap();
        let post = loss_profile(&optimized, &train_set, &test_set).unwrap();
        return DeskScale {
            width,
            ratio,
            energy: (
                path_energy(&linear, inputs).unwrap().0,
                path_energy(&optimized, inputs).unwrap().0,
            ),
            interior: (
                interior_max(losses),
                interior_max(&post.per_model_train_loss),
            ),
            endpoint_max,
            endpoints_fixed: optimized.start().bitwise_eq(&a) && optimized.end().bitwise_eq(&b),
            sqrt_len: (pre.lengths.jsd_length, post.lengths.jsd_length),
            euclid: post.lengths.euclid_length,
            chord: a.distance(&b).unwrap(),
            cv: coefficient_of_variation(&post.per_segment_jsd),
        };
    }
}

fn fig2_analog(r: &DeskScale) -> Outcome {
    let barrier = r.interior.0 - r.endpoint_max;
    let drop = r.interior.0 - r.interior.1;
    let checks = [
        r.ratio >= 1.25,
        r.energy.1 < r.energy.0,
        drop >= 0.5 * barrier,
        r.endpoints_fixed,
        r.sqrt_len.1 < r.sqrt_len.0 && r.euclid >= r.chord,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "width {}: barrier ratio {:.3}; energy {:.4e} -> {:.4e}; max interior loss {:.4} -> {:.4} \
             (drop {:.0}% of barrier); endpoints fixed: {}; sum sqrt(JSD) {:.4} -> {:.4}; \
             euclid {:.4} vs chord {:.4}",
            r.width,
            r.ratio,
            r.energy.0,
            r.energy.1,
            r.interior.0,
            r.interior.1,
            100.0 * drop / barrier,
            r.endpoints_fixed,
            r.sqrt_len.0,
            r.sqrt_len.1,
            r.euclid,
            r.chord
        ),
    )
}

fn tree(root: &FsPath) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"version": 1, "seed": 3,
            "dataset": {"kind": "gaussian_mixture", "classes": 5, "per_class": 60},
            "train": {"epochs": 20, "batch_size": 64},
            "n": 9,
            "geodesic": {"iterations": 60, "batch_size": 128, "eval_every": 20}}"#,
    )
    .unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let code = main_with_args([
            "geopath",
            "--threads",
            threads,
            "run-all",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        tree(&out)
    };
    let first = run("1", "a");
    let second = run("1", "b");
    let threaded = run("4", "c");
    outcome(
        first == second && first == threaded,
        format!(
            "{} files; rerun identical: {}; --threads 4 identical: {}",
            first.len(),
            first == second,
            first == threaded
        ),
    )
}

fn jsd_units() -> Outcome {
    let same = jsd(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap();
    let disjoint = jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let half = jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
    let m = [0.75, 0.25];
    let kl_p = 0.5 * (0.5f64 / m[0]).ln() + 0.5 * (0.5f64 / m[1]).ln();
    let kl_q = (1.0f64 / m[0]).ln();
    let reference = 0.5 * kl_p + 0.5 * kl_q;
    outcome(
        same == 0.0 && (disjoint - 2f64.ln()).abs() <= 1e-12 && (half - reference).abs() <= 1e-9,
        format!(
            "jsd(p,p) = {same}; disjoint - ln 2 = {:.1e}; half-split {half:.9}",
            disjoint - 2f64.ln()
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report =
        |id: &str, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
            let start = Instant::now();
            let mut o = f();
            let elapsed = start.elapsed();
            if let Some(limit) = limit {
                if elapsed > limit {
                    o.passed = false;
                    o.detail += &format!("; exceeded {} s", limit.as_secs());
                }
            }
            let tag = if o.passed { "PASS" } else { "FAIL" };
            println!(
                "[{tag}] {id} {name} ({:.1} s): {}",
                elapsed.as_secs_f64(),
                o.detail
            );
            if !o.passed {
                failures += 1;
            }
        };

    let secs = |s| Some(Duration::from_secs(s));
    report("1", "gradient correctness", secs(10), &mut gradients);
    report("2", "Fisher-JSD consistency", secs(30), &mut fisher_jsd);
    report("3", "LAP exactness", secs(30), &mut lap_exactness);
    report(
        "4",
        "planted-permutation recovery",
        secs(60),
        &mut planted_recovery,
    );

    let mut desk = None;
    report("5", "desk-scale barrier removal", secs(600), &mut || {
        let r = desk_scale();
        let o = fig2_analog(&r);
        desk = Some(r);
        o
    });
    let cv = desk.as_ref().map_or(f64::NAN, |r| r.cv);
    report("6", "constant speed", None, &mut || {
        outcome(
            cv <= 0.25,
            format!("segment JSD coefficient of variation {cv:.3} (max 0.25)"),
        )
    });
    report("7", "end-to-end determinism", None, &mut determinism);
    report("8", "JSD unit values", None, &mut jsd_units);

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

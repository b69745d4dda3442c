mod common;

use common::*;
use geopath::geodesic::{
    energy_gradients, init_path, jsd, optimize_path, path_energy, GeodesicOpts, Path,
};
use geopath::nn::backward_jsd_pair;
use geopath::{Matrix, MlpConfig, ModelParams};
use proptest::prelude::*;

fn logit_model(bias: [f64; 2]) -> ModelParams {
    let cfg = MlpConfig::new(vec![1, 2], false).unwrap();
    let mut m = ModelParams::zeros(&cfg).unwrap();
    m.layers[0].bias = bias.to_vec();
    m
}

#[test]
fn jsd_unit_values() {
    let p = [0.3, 0.7];
    assert_eq!(jsd(&p, &p).unwrap(), 0.0);
    assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
    let direct = 0.25 * (2.0f64 / 3.0).ln() + 0.25 * 2f64.ln() + 0.5 * (4.0f64 / 3.0).ln();
    assert!((jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - direct).abs() < 1e-9);
    assert!((direct - 0.215762).abs() < 1e-6);
    assert!(jsd(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    assert!(jsd(&[1.5, -0.5], &[0.5, 0.5]).is_err());
    assert!(jsd(&[1.0], &[0.5, 0.5]).is_err());
}

#[test]
fn segment_of_two_fixed_rows() {
    // the second model puts all but exp(-80) of its mass on class 0
    let path = Path::new(vec![logit_model([0.0, 0.0]), logit_model([40.0, -40.0])]).unwrap();
    let x = Matrix::new(3, 1, vec![0.0, 1.0, -2.0]).unwrap();
    let (total, per_segment) = path_energy(&path, &x).unwrap();
    assert_eq!(per_segment.len(), 1);
    assert!((total - 0.215762).abs() < 1e-6);
    assert!((total - jsd(&[0.5, 0.5], &[1.0, 0.0]).unwrap()).abs() < 1e-9);
}

#[test]
fn two_model_energy_is_the_endpoint_jsd() {
    let a = random_model(&[2, 4, 3], false, 1);
    let b = random_model(&[2, 4, 3], false, 2);
    let x = random_inputs(10, 2, 3);
    let (total, _) = path_energy(&init_path(&a, &b, 2).unwrap(), &x).unwrap();
    assert_eq!(total, backward_jsd_pair(&a, &b, &x).unwrap().2);
}

#[test]
fn degenerate_path_is_stationary() {
    let a = random_model(&[2, 5, 3], true, 4);
    let path = init_path(&a, &a, 6).unwrap();
    assert!(path.models().iter().all(|m| m.bitwise_eq(&a)));
    let x = random_inputs(40, 2, 5);
    assert_eq!(path_energy(&path, &x).unwrap().0, 0.0);
    let opts = GeodesicOpts {
        batch_size: 16,
        iterations: 20,
        eval_every: 5,
        ..GeodesicOpts::default()
    };
    let (out, trace) = optimize_path(&path, &x, &opts).unwrap();
    assert!(out.models().iter().all(|m| m.bitwise_eq(&a)));
    assert!(trace.iter().all(|t| t.energy == 0.0));
}

fn energy(models: &[ModelParams], x: &Matrix) -> f64 {
    path_energy(&Path::new(models.to_vec()).unwrap(), x)
        .unwrap()
        .0
}

#[test]
fn energy_gradient_matches_finite_differences() {
    for (ln, seed) in [(false, 10), (true, 11)] {
        let a = random_model(&[2, 4, 3], ln, seed);
        let b = random_model(&[2, 4, 3], ln, seed + 1);
        let mut path = init_path(&a, &b, 3).unwrap().into_models();
        // move off the straight line so both segments differ
        path[1] = random_model(&[2, 4, 3], ln, seed + 2);
        let x = random_inputs(8, 2, seed + 3);
        let (_, grads) = energy_gradients(&Path::new(path.clone()).unwrap(), &x).unwrap();
        let numeric = componentwise_fd(
            |m| {
                let mut models = path.clone();
                models[1] = m.clone();
                energy(&models, &x)
            },
            &path[1],
            1e-5,
        );
        let err = max_rel_err(&grads[0].flatten(), &numeric, 1e-5);
        assert!(err < 1e-5, "layernorm={ln}: {err:e}");
    }
}

#[test]
fn optimization_keeps_endpoints_and_lowers_energy() {
    let a = random_model(&[2, 6, 3], false, 20);
    let b = random_model(&[2, 6, 3], false, 21);
    let x = random_inputs(64, 2, 22);
    let path = init_path(&a, &b, 5).unwrap();
    let opts = GeodesicOpts {
        batch_size: 64,
        iterations: 200,
        eval_every: 50,
        ..GeodesicOpts::default()
    };
    let (out, trace) = optimize_path(&path, &x, &opts).unwrap();
    assert!(out.start().bitwise_eq(&a));
    assert!(out.end().bitwise_eq(&b));
    assert!(path_energy(&out, &x).unwrap().0 < path_energy(&path, &x).unwrap().0);
    let iters: Vec<usize> = trace.iter().map(|t| t.iteration).collect();
    assert_eq!(iters, vec![0, 50, 100, 150, 200]);
}

#[test]
fn trace_always_has_the_final_iteration() {
    let a = random_model(&[2, 3, 2], false, 1);
    let b = random_model(&[2, 3, 2], false, 2);
    let x = random_inputs(20, 2, 3);
    let opts = GeodesicOpts {
        batch_size: 8,
        iterations: 7,
        eval_every: 3,
        ..GeodesicOpts::default()
    };
    let (_, trace) = optimize_path(&init_path(&a, &b, 4).unwrap(), &x, &opts).unwrap();
    let iters: Vec<usize> = trace.iter().map(|t| t.iteration).collect();
    assert_eq!(iters, vec![0, 3, 6, 7]);
}

#[test]
fn optimizer_is_deterministic_across_thread_counts() {
    let a = random_model(&[2, 6, 3], true, 30);
    let b = random_model(&[2, 6, 3], true, 31);
    let x = random_inputs(50, 2, 32);
    let path = init_path(&a, &b, 6).unwrap();
    let opts = GeodesicOpts {
        batch_size: 16,
        iterations: 30,
        eval_every: 10,
        seed: 4,
        ..GeodesicOpts::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| optimize_path(&path, &x, &opts).unwrap())
    };
    let (p1, t1) = run(1);
    let (p4, t4) = run(4);
    assert!(p1
        .models()
        .iter()
        .zip(p4.models())
        .all(|(u, v)| u.bitwise_eq(v)));
    assert_eq!(t1, t4);
}

#[test]
fn invalid_inputs_are_rejected() {
    let a = random_model(&[2, 3, 2], false, 1);
    let b = random_model(&[2, 4, 2], false, 2);
    assert!(init_path(&a, &b, 3).is_err());
    assert!(init_path(&a, &a, 1).is_err());
    let path = init_path(&a, &a, 3).unwrap();
    assert!(path_energy(&path, &random_inputs(4, 3, 1)).is_err());
    let bad = GeodesicOpts {
        iterations: 0,
        ..GeodesicOpts::default()
    };
    assert!(optimize_path(&path, &random_inputs(4, 2, 1), &bad).is_err());
}

fn distribution(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

proptest! {
    #[test]
    fn jsd_is_symmetric_and_bounded(
        p in prop::collection::vec(0.0f64..1.0, 4),
        q in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        prop_assume!(p.iter().sum::<f64>() > 1e-3 && q.iter().sum::<f64>() > 1e-3);
        let (p, q) = (distribution(&p), distribution(&q));
        let pq = jsd(&p, &q).unwrap();
        prop_assert_eq!(pq.to_bits(), jsd(&q, &p).unwrap().to_bits());
        prop_assert!((0.0..=2f64.ln()).contains(&pq));
    }
}

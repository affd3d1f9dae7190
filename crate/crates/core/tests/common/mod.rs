#![allow(dead_code)]

use std::path::PathBuf;

use llm_ensemble::harness::{load_dataset, ReplayRecord};
use llm_ensemble::orchestrator::mock::MockServer;
use llm_ensemble::predictor::{HeadDims, PredictorHead};
use llm_ensemble::Registry;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_registry() -> Registry {
    llm_ensemble::load_registry(fixture_dir().join("registry.toml")).unwrap()
}

pub fn fixture_records(reg: &Registry) -> Vec<ReplayRecord> {
    load_dataset(fixture_dir().join("mixinstruct_synthetic.jsonl"), reg).unwrap()
}

/// Best total profit over all `2^n` subsets whose cost fits `capacity`.
/// Subset totals are summed in ascending index order.
pub fn enumerate_best(items: &[(u64, f64)], capacity: u64) -> f64 {
    let n = items.len();
    let mut best = 0.0;
    for mask in 0u32..(1 << n) {
        let mut cost = 0u64;
        let mut profit = 0.0;
        for (i, &(c, p)) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                cost += c;
                profit += p;
            }
        }
        if cost <= capacity && profit > best {
            best = profit;
        }
    }
    best
}

pub fn subset_profit(items: &[(u64, f64)], subset: &[usize]) -> f64 {
    subset.iter().map(|&i| items[i].1).fold(0.0, |a, p| a + p)
}

/// Compares the analytic backward pass with central finite differences on one
/// random toy head. Returns `(worst relative error, largest absolute difference)`;
/// components whose absolute difference is within `1e-8` count as exact.
pub fn gradient_check(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims =
        HeadDims::new(rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8)).unwrap();
    let normal = Normal::new(0.0, 0.7).unwrap();
    let params: Vec<f64> = (0..dims.param_count()).map(|_| normal.sample(&mut rng)).collect();
    let x: Vec<f64> = (0..dims.d).map(|_| normal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..dims.n_models).map(|_| normal.sample(&mut rng)).collect();
    let delta = 0.3;
    let head = PredictorHead::from_params(dims, 0.0, params.clone()).unwrap();
    let (_, grads) = head.backward(&x, &y, delta, None).unwrap();

    let loss = |p: &[f64]| {
        let h = PredictorHead::from_params(dims, 0.0, p.to_vec()).unwrap();
        let out = h.predict(&x).unwrap();
        out.iter()
            .zip(&y)
            .map(|(o, t)| {
                let r = (o - t).abs();
                if r <= delta {
                    0.5 * r * r
                } else {
                    delta * (r - 0.5 * delta)
                }
            })
            .sum::<f64>()
            / y.len() as f64
    };

    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut p = params.clone();
    for i in 0..params.len() {
        p[i] = params[i] + step;
        let up = loss(&p);
        p[i] = params[i] - step;
        let down = loss(&p);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.values[i];
        let diff = (numeric - analytic).abs();
        max_abs = max_abs.max(diff);
        if diff <= 1e-8 {
            continue;
        }
        worst = worst.max(diff / numeric.abs().max(analytic.abs()));
    }
    (worst, max_abs)
}

/// Synthetic linear regression task used for the training sanity checks:
/// `y = A x / sqrt(d) + noise` with `x ~ U(-0.5, 0.5)^d`, `A ~ N(0, 1)`.
pub fn linear_task(seed: u64, samples: usize, d: usize, outputs: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, 0.01).unwrap();
    let u = Uniform::new(-0.5, 0.5);
    let a: Vec<Vec<f64>> = (0..outputs).map(|_| (0..d).map(|_| unit.sample(&mut rng)).collect()).collect();
    let scale = 1.0 / (d as f64).sqrt();
    (0..samples)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| u.sample(&mut rng)).collect();
            let y = a
                .iter()
                .map(|row| row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() * scale + noise.sample(&mut rng))
                .collect();
            (x, y)
        })
        .collect()
}

/// Four mock-backed models of increasing size, with a fuser on the same server.
pub fn mock_registry(server: &MockServer, extra_defaults: &str) -> Registry {
    let sizes =
        [(1_000_000_000u64, 16, 2048), (2_000_000_000, 24, 2048), (3_000_000_000, 32, 2560), (4_000_000_000, 32, 3072)];
    let mut toml = format!("fuser_endpoint = \"{}\"\n\n[defaults]\n{extra_defaults}\n", server.fuser_endpoint());
    for (i, (n, l, d)) in sizes.iter().enumerate() {
        toml.push_str(&format!(
            "\n[[models]]\nname = \"m{i}\"\nendpoint = \"{}\"\nn_params = {n}\nn_layer = {l}\nd_model = {d}\nmax_ctx = 2048\n",
            server.endpoint(&format!("m{i}"))
        ));
    }
    Registry::from_toml_str(&toml).unwrap()
}

/// A head whose predictions ignore the input and equal `bias`.
pub fn constant_head(d: usize, bias: &[f64]) -> PredictorHead {
    let dims = HeadDims::new(d, 4, 3, bias.len()).unwrap();
    let mut params = vec![0.0; dims.param_count()];
    let n = params.len();
    params[n - bias.len()..].copy_from_slice(bias);
    PredictorHead::from_params(dims, 0.2, params).unwrap()
}

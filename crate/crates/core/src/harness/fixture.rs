//! Synthetic replay fixture: 100 records over a 4-model toy registry.
//!
//! Scores are drawn from per-model normals whose means sit in the usual
//! log-likelihood quality range (-2.7 to -3.9). Everything here is synthetic;
//! real instruction datasets are supplied by the user in the same format.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{CandidateRecord, ReplayRecord};

pub const FIXTURE_SEED: u64 = 20_231_016;
pub const FIXTURE_RECORDS: usize = 100;

/// Registry matching the fixture. Architecture numbers are illustrative.
pub const FIXTURE_REGISTRY_TOML: &str = r#"# Toy registry for the synthetic replay fixture. Sizes are illustrative.

[defaults]
budget_fraction = 0.2
grid_resolution = 1000
dispatch_timeout_ms = 5000
failure_policy = "fuse_partial"
fusion_mode = "best_predicted"
infeasible_policy = "error"
token_mode = "chars_ratio"

[[models]]
name = "alpaca-7b"
endpoint = "mock"
n_params = 6_700_000_000
n_layer = 32
d_model = 4096
max_ctx = 2048

[[models]]
name = "vicuna-13b"
endpoint = "mock"
n_params = 13_000_000_000
n_layer = 40
d_model = 5120
max_ctx = 2048

[[models]]
name = "dolly-3b"
endpoint = "mock"
n_params = 2_800_000_000
n_layer = 32
d_model = 2560
max_ctx = 2048

[[models]]
name = "oasst-1b"
endpoint = "mock"
n_params = 1_400_000_000
n_layer = 24
d_model = 2048
max_ctx = 2048
"#;

/// `(model, mean score, spread)` in registry order.
pub const FIXTURE_MODELS: [(&str, f64, f64); 4] =
    [("alpaca-7b", -2.81, 0.45), ("vicuna-13b", -3.21, 0.50), ("dolly-3b", -3.89, 0.55), ("oasst-1b", -2.74, 0.60)];

const TASKS: [&str; 8] = [
    "Summarize the following passage",
    "Explain the main idea of",
    "Write a short poem about",
    "List three facts about",
    "Translate into plain English",
    "Give advice on",
    "Classify the sentiment of",
    "Answer the question about",
];

const TOPICS: [&str; 10] = [
    "coral reefs",
    "the history of printing",
    "household budgeting",
    "sourdough baking",
    "solar panels",
    "learning a second language",
    "urban cycling",
    "volcanoes",
    "sleep hygiene",
    "chess openings",
];

const FILLER: [&str; 12] =
    ["the", "report", "notes", "that", "several", "experts", "argue", "data", "shows", "over", "recent", "years"];

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn generate_fixture(seed: u64) -> Vec<ReplayRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<Normal<f64>> =
        FIXTURE_MODELS.iter().map(|&(_, m, s)| Normal::new(m, s).expect("valid normal")).collect();
    (0..FIXTURE_RECORDS)
        .map(|i| {
            let task = TASKS.choose(&mut rng).expect("non-empty");
            let topic = TOPICS.choose(&mut rng).expect("non-empty");
            let words = rng.gen_range(0..80);
            let input: Vec<&str> = (0..words).map(|_| *FILLER.choose(&mut rng).expect("non-empty")).collect();
            let candidates = FIXTURE_MODELS
                .iter()
                .zip(&dists)
                .map(|(&(model, _, _), d)| CandidateRecord {
                    model: model.to_string(),
                    text: format!("{model} answer on {topic}"),
                    score: round4(d.sample(&mut rng)),
                })
                .collect();
            ReplayRecord {
                query_id: format!("syn-{i:03}"),
                instruction: format!("{task} {topic}."),
                input: input.join(" "),
                candidates,
            }
        })
        .collect()
}

/// The fixture as dataset file contents.
pub fn fixture_jsonl(seed: u64) -> String {
    generate_fixture(seed).iter().map(|r| serde_json::to_string(r).expect("records always serialize") + "\n").collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Registry;

    #[test]
    fn fixture_shape_and_means() {
        let reg = Registry::from_toml_str(FIXTURE_REGISTRY_TOML).unwrap();
        assert_eq!(reg.len(), 4);
        let recs = generate_fixture(FIXTURE_SEED);
        assert_eq!(recs.len(), 100);
        for (i, &(name, mean, _)) in FIXTURE_MODELS.iter().enumerate() {
            assert_eq!(reg.get(i).unwrap().name, name);
            let m = recs.iter().map(|r| r.oracle_scores(&reg).unwrap()[i]).sum::<f64>() / 100.0;
            assert!((m - mean).abs() < 0.2, "{name}: {m}");
        }
        assert_eq!(fixture_jsonl(FIXTURE_SEED), fixture_jsonl(FIXTURE_SEED));
    }
}

mod common;

use llm_ensemble::harness::fixture::{fixture_jsonl, FIXTURE_REGISTRY_TOML, FIXTURE_SEED};
use llm_ensemble::harness::report::SweepReport;
use llm_ensemble::harness::{
    baseline_compare, build_training_set, parse_dataset, replay_outcomes, replay_sweep, report_emit, ReplayRecord,
    ReplaySettings, ReportFormat, ScoreSource, TargetMode, DEFAULT_FRACTIONS,
};
use llm_ensemble::predictor::{train, Encoder, HeadDims, PredictorHead, TrainConfig};
use llm_ensemble::Registry;

fn settings() -> ReplaySettings {
    ReplaySettings { seed: 7, ..ReplaySettings::new("fixture") }
}

#[test]
fn checked_in_fixture_matches_generator() {
    let dir = common::fixture_dir();
    assert_eq!(std::fs::read_to_string(dir.join("registry.toml")).unwrap(), FIXTURE_REGISTRY_TOML);
    assert_eq!(std::fs::read_to_string(dir.join("mixinstruct_synthetic.jsonl")).unwrap(), fixture_jsonl(FIXTURE_SEED));
    let reg = common::fixture_registry();
    assert_eq!(common::fixture_records(&reg).len(), 100);
}

/// Per-token FLOPs written out independently of the library.
fn flops(n_params: f64, n_layer: f64, d_model: f64, tokens: f64) -> f64 {
    (2.0 * n_params + 2.0 * n_layer * tokens * d_model) * tokens
}

#[test]
fn toy_sweep_matches_exhaustive_recomputation() {
    let toml = r#"
[defaults]
grid_resolution = 1000000

[[models]]
name = "small"
endpoint = "mock"
n_params = 1_000_000_000
n_layer = 16
d_model = 2048
max_ctx = 4096

[[models]]
name = "medium"
endpoint = "mock"
n_params = 2_500_000_000
n_layer = 24
d_model = 2560
max_ctx = 4096

[[models]]
name = "large"
endpoint = "mock"
n_params = 4_000_000_000
n_layer = 32
d_model = 3072
max_ctx = 4096
"#;
    let reg = Registry::from_toml_str(toml).unwrap();
    let arch = [(1e9, 16.0, 2048.0), (2.5e9, 24.0, 2560.0), (4e9, 32.0, 3072.0)];
    let scores: [[f64; 3]; 5] =
        [[-2.5, -3.0, -2.2], [-3.9, -2.7, -3.1], [-2.8, -2.75, -4.0], [-3.3, -3.5, -2.9], [-2.1, -3.6, -3.2]];
    let lines: String = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let input = "word ".repeat(3 + 7 * i);
            format!(
                "{{\"query_id\":\"t{i}\",\"instruction\":\"Task number {i}\",\"input\":\"{input}\",\"candidates\":[{{\"model\":\"small\",\"score\":{}}},{{\"model\":\"medium\",\"score\":{}}},{{\"model\":\"large\",\"score\":{}}}]}}\n",
                s[0], s[1], s[2]
            )
        })
        .collect();
    let records = parse_dataset(&lines, "toy", &reg).unwrap();
    let fractions = [0.3, 0.6, 1.0];
    let st = ReplaySettings { grid_resolution: 1_000_000, ..ReplaySettings::new("toy") };
    let report = replay_sweep(&records, &reg, &ScoreSource::Oracle, &fractions, &st).unwrap();

    for (row, &f) in report.rows.iter().zip(&fractions) {
        let (mut sel, mut real, mut target, mut ratio) = (0.0, 0.0, 0.0, 0.0);
        for (r, s) in records.iter().zip(&scores) {
            let text = r.query_text();
            let tokens = (text.chars().count() as f64 / 4.0).ceil();
            let costs: Vec<f64> = arch.iter().map(|&(n, l, d)| flops(n, l, d, tokens)).collect();
            let baseline: f64 = costs.iter().sum();
            let eps = f * baseline;
            let alpha = s.iter().fold(0.0_f64, |m, q| m.max(q.abs())) + 1.0;
            let mut best: Option<(f64, u32)> = None;
            for mask in 1u32..8 {
                let members: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
                let c: f64 = members.iter().map(|&i| costs[i]).sum();
                // Keep clear of the grid slack so raw feasibility decides.
                assert!((c - eps).abs() > 1e-4 * eps || c <= eps);
                if c > eps {
                    continue;
                }
                let t: f64 = members.iter().map(|&i| alpha + s[i]).sum();
                if best.is_none_or(|(b, _)| t > b) {
                    best = Some((t, mask));
                }
            }
            let (t, mask) = best.expect("some model fits at these fractions");
            let members: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
            sel += members.len() as f64;
            real += members.iter().map(|&i| s[i]).fold(f64::MIN, f64::max);
            target += t;
            ratio += members.iter().map(|&i| costs[i]).sum::<f64>() / baseline;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        assert_eq!(row.infeasible, 0);
        assert!(close(row.mean_selected, sel / 5.0), "f={f}: {} vs {}", row.mean_selected, sel / 5.0);
        assert!(close(row.mean_realized_quality.unwrap(), real / 5.0), "f={f}");
        assert!(close(row.mean_predicted_target, target / 5.0), "f={f}");
        assert!(close(row.mean_cost_ratio, ratio / 5.0), "f={f}");
    }
}

#[test]
fn fixture_sweep_invariants() {
    let reg = common::fixture_registry();
    let records = common::fixture_records(&reg);
    let outcomes = replay_outcomes(&records, &reg, &ScoreSource::Oracle, &DEFAULT_FRACTIONS, &settings()).unwrap();
    for (&f, per_fraction) in DEFAULT_FRACTIONS.iter().zip(&outcomes) {
        for o in per_fraction {
            assert!(o.selection.total_cost <= f * o.baseline_cost, "budget exceeded at {f}");
        }
    }
    for (r, o) in records.iter().zip(outcomes.last().unwrap()) {
        let oracle = r.oracle_scores(&reg).unwrap();
        assert_eq!(o.selection.selected, vec![0, 1, 2, 3]);
        assert_eq!(o.realized_quality.unwrap(), oracle.iter().copied().fold(f64::MIN, f64::max));
    }
    // At 10% only the smallest model fits.
    for (r, o) in records.iter().zip(&outcomes[0]) {
        assert_eq!(o.selection.selected, vec![3]);
        assert_eq!(o.realized_quality.unwrap(), r.oracle_scores(&reg).unwrap()[3]);
    }
    let report = replay_sweep(&records, &reg, &ScoreSource::Oracle, &DEFAULT_FRACTIONS, &settings()).unwrap();
    for w in report.rows.windows(2) {
        assert!(w[1].mean_predicted_target >= w[0].mean_predicted_target);
    }
    for row in &report.rows {
        assert!(row.mean_cost_ratio <= row.fraction);
    }
}

#[test]
fn reports_are_byte_stable_and_round_trip() {
    let reg = common::fixture_registry();
    let records = common::fixture_records(&reg);
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let report = replay_sweep(&records, &reg, &ScoreSource::Oracle, &DEFAULT_FRACTIONS, &settings()).unwrap();
        for (fmt, ext) in [(ReportFormat::Csv, "csv"), (ReportFormat::Structured, "json")] {
            let path = dir.path().join(format!("sweep{run}.{ext}"));
            report_emit(&report, fmt, &path).unwrap();
            files.push(std::fs::read(&path).unwrap());
        }
    }
    assert_eq!(files[0], files[2]);
    assert_eq!(files[1], files[3]);
    let parsed = SweepReport::from_structured(std::str::from_utf8(&files[1]).unwrap()).unwrap();
    assert_eq!(parsed.to_structured().as_bytes(), &files[1][..]);
    assert_eq!(parsed.rows.len(), 10);
    assert!(parsed.metadata.quality_proxy.contains("max oracle score"));
}

#[test]
fn knapsack_dominates_random_draws() {
    let reg = common::fixture_registry();
    let records = common::fixture_records(&reg);
    for &f in &[0.2, 0.35, 0.6] {
        let cmp = baseline_compare(&records, &reg, f, 25, None, &settings()).unwrap();
        for rec in &cmp.records {
            for (d, t) in rec.random_draws.iter().zip(&rec.random_targets) {
                assert!(rec.knapsack_target >= *t, "{} at {f}: {:?} beats knapsack", rec.query_id, d);
            }
        }
        let rows = &cmp.table.rows;
        assert_eq!(rows[0].strategy, "knapsack_oracle");
        assert_eq!(rows[1].strategy, "random");
        assert_eq!(rows.len(), 2 + reg.len());
        if f == 0.2 {
            assert!(rows[0].mean_realized_quality.unwrap() >= rows[1].mean_realized_quality.unwrap());
        }
    }
}

#[test]
fn comparison_is_seed_deterministic() {
    let reg = common::fixture_registry();
    let records = common::fixture_records(&reg);
    let a = baseline_compare(&records, &reg, 0.4, 1, None, &settings()).unwrap();
    let b = baseline_compare(&records, &reg, 0.4, 1, None, &settings()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.table.to_csv(), b.table.to_csv());
    let other = ReplaySettings { seed: 8, ..settings() };
    let c = baseline_compare(&records, &reg, 0.4, 1, None, &other).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn single_model_registry_makes_every_strategy_identical() {
    let reg = Registry::from_toml_str(
        "[[models]]\nname = \"solo\"\nendpoint = \"mock\"\nn_params = 1000000\nn_layer = 2\nd_model = 64\nmax_ctx = 512\n",
    )
    .unwrap();
    let records: Vec<ReplayRecord> = (0..5)
        .map(|i| {
            parse_dataset(
                &format!("{{\"query_id\":\"s{i}\",\"instruction\":\"hello {i}\",\"candidates\":[{{\"model\":\"solo\",\"score\":-{i}.5}}]}}"),
                "solo",
                &reg,
            )
            .unwrap()
            .remove(0)
        })
        .collect();
    let cmp = baseline_compare(&records, &reg, 1.0, 3, None, &settings()).unwrap();
    let first = &cmp.table.rows[0];
    for row in &cmp.table.rows[1..] {
        assert_eq!(row.mean_realized_quality, first.mean_realized_quality, "{}", row.strategy);
        assert_eq!(row.mean_selected, first.mean_selected);
        assert_eq!(row.mean_cost_ratio, first.mean_cost_ratio);
    }
}

#[test]
fn predictor_scores_drive_a_sweep() {
    let reg = common::fixture_registry();
    let records = common::fixture_records(&reg);
    let enc = Encoder::HashedNgram { dim: 32, seed: 3 };
    let set = build_training_set(&records, &reg, &enc, TargetMode::Raw).unwrap();
    let data: Vec<(Vec<f64>, Vec<f64>)> = set.into_iter().map(|(e, t)| (e.vector, t)).collect();
    let mut head = PredictorHead::init(HeadDims::new(32, 16, 8, reg.len()).unwrap(), 0.2, 3).unwrap();
    train(&mut head, &data, &TrainConfig { epochs: 5, learning_rate: 3e-3, seed: 3, ..TrainConfig::default() })
        .unwrap();
    let source = ScoreSource::Predictor { head: &head, encoder: &enc };
    let report = replay_sweep(&records, &reg, &source, &[0.2, 0.5, 1.0], &settings()).unwrap();
    assert_eq!(report.metadata.score_source, "predictor");
    assert!(report.metadata.encoder.starts_with("hashed_ngram"));
    assert_eq!(report.rows[2].mean_selected, 4.0);
    let cmp = baseline_compare(&records, &reg, 0.2, 2, Some(source), &settings()).unwrap();
    assert_eq!(cmp.table.rows[1].strategy, "knapsack_predictor");
}

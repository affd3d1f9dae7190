use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use llm_ensemble::costing::build_query_context;
use llm_ensemble::harness::fixture::{fixture_jsonl, FIXTURE_REGISTRY_TOML, FIXTURE_SEED};
use llm_ensemble::harness::report::{fmt_sig, ReportFormat};
use llm_ensemble::harness::{
    baseline_compare, build_training_set, load_dataset, replay_sweep, ReplaySettings, ScoreSource, TargetMode,
    DEFAULT_FRACTIONS,
};
use llm_ensemble::orchestrator::mock::{MockScript, MockServer};
use llm_ensemble::orchestrator::{service, Pipeline};
use llm_ensemble::predictor::encoder::stable_query_id;
use llm_ensemble::predictor::{
    train, Checkpoint, EmbeddingStore, Encoder, EncoderKind, HeadDims, PredictorHead, TrainConfig, DEFAULT_D,
    DEFAULT_G, DEFAULT_H,
};
use llm_ensemble::registry::{validate_fraction, FusionMode, CONFIG_ENV};
use llm_ensemble::selector::{budget_sweep, select, select_with_diagnostics};
use llm_ensemble::{load_registry, Candidate, Registry, SelectionResult};

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "llm-ensemble", version, about = "Budget-constrained LLM ensemble toolkit")]
struct Cli {
    /// Registry file (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Seed for every random stream (training, baselines, hashing encoder).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cost grid resolution; defaults to the registry's setting.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a replay dataset against the registry.
    Ingest {
        #[arg(long)]
        dataset: PathBuf,
        /// Also write hashed n-gram embeddings for every record to this file.
        #[arg(long)]
        emit_embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_D)]
        dim: usize,
    },
    /// Train the quality predictor on a replay dataset and write a checkpoint.
    TrainPredictor(TrainArgs),
    /// Replay a dataset (or a candidate file) over a range of budget fractions.
    Sweep {
        #[arg(long, conflicts_with = "candidates", required_unless_present = "candidates")]
        dataset: Option<PathBuf>,
        /// Candidate CSV (`model,quality,cost`) swept with the selector alone.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[command(flatten)]
        scores: ScoreArgs,
        /// Comma-separated fractions in (0, 1].
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare knapsack selection with random and single-model baselines.
    Compare {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[command(flatten)]
        scores: ScoreArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-model token counts and FLOPs costs for one query.
    Cost { text: String },
    /// Select models from a candidate CSV (`model,quality,cost`) under a budget.
    Select {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
        budget_fraction: Option<f64>,
        /// Absolute budget in FLOPs.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Also report the subset that is optimal for unshifted scores.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Predicted quality of every model for one query.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        query_id: Option<String>,
        text: String,
    },
    /// Serve the ensemble over HTTP.
    Route {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        budget_fraction: Option<f64>,
        #[arg(long, value_enum)]
        fusion_mode: Option<FusionArg>,
    },
    /// Run scripted mock model and fuser backends.
    MockBackend {
        #[arg(long, default_value = "127.0.0.1:9000")]
        bind: String,
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Write the synthetic fixture dataset and its registry.
    GenFixture {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Remote,
    BestPredicted,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Remote => FusionMode::Remote,
            FusionArg::BestPredicted => FusionMode::BestPredicted,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Use predicted scores from this checkpoint instead of oracle scores.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Embedding file for checkpoints trained on precomputed embeddings.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Precomputed embeddings; otherwise the hashed n-gram encoder is used.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Hashed encoder width.
    #[arg(long, default_value_t = DEFAULT_D)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_H)]
    hidden: usize,
    #[arg(long, default_value_t = DEFAULT_G)]
    glu: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "raw")]
    targets: TargetMode,
}

#[derive(Debug, Deserialize)]
struct CandidateRow {
    model: String,
    quality: f64,
    cost: f64,
}

fn registry(cli: &Cli) -> anyhow::Result<Registry> {
    let Some(path) = &cli.config else {
        bail!("no registry: pass --config or set {CONFIG_ENV}");
    };
    Ok(load_registry(path)?)
}

fn grid(cli: &Cli, reg: Option<&Registry>) -> usize {
    cli.grid.or(reg.map(|r| r.defaults().grid_resolution)).unwrap_or(1000)
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Structured => ReportFormat::Structured,
        Format::Text | Format::Csv => ReportFormat::Csv,
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_encoder(kind: EncoderKind, d: usize, embeddings: Option<&Path>) -> anyhow::Result<Encoder> {
    Ok(match kind {
        EncoderKind::HashedNgram { seed } => Encoder::HashedNgram { dim: d, seed },
        EncoderKind::File => {
            let path = embeddings.context("checkpoint was trained on precomputed embeddings; pass --embeddings")?;
            Encoder::File(EmbeddingStore::load(path)?)
        }
    })
}

fn load_predictor(checkpoint: &Path, embeddings: Option<&Path>) -> anyhow::Result<(PredictorHead, Encoder)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let encoder = load_encoder(ckpt.encoder, ckpt.head.dims().d, embeddings)?;
    Ok((ckpt.head, encoder))
}

/// Candidate files are self-contained: rows are indexed by position, and the
/// registry (when given) only supplies the grid default.
fn read_candidates(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Candidate>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut names = Vec::new();
    let mut cands = Vec::new();
    for (i, row) in rdr.deserialize::<CandidateRow>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        names.push(row.model);
        cands.push(Candidate { model_index: i, quality: row.quality, cost: row.cost });
    }
    if cands.is_empty() {
        bail!("{}: no candidates", path.display());
    }
    Ok((names, cands))
}

fn selected_names(sel: &SelectionResult, cands: &[Candidate], names: &[String]) -> Vec<String> {
    sel.selected
        .iter()
        .map(|&idx| {
            debug_assert_eq!(cands[idx].model_index, idx);
            names[idx].clone()
        })
        .collect()
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    selected_models: Vec<String>,
    #[serde(flatten)]
    selection: &'a SelectionResult,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest { dataset, emit_embeddings, dim } => {
            let reg = registry(&cli)?;
            let records = load_dataset(dataset, &reg)?;
            let complete = records.iter().filter(|r| r.oracle_scores(&reg).is_ok()).count();
            out!("{}: {} records, {} cover every registry model", dataset.display(), records.len(), complete);
            if let Some(out) = emit_embeddings {
                let enc = Encoder::HashedNgram { dim: *dim, seed: cli.seed };
                let mut text = String::new();
                for r in &records {
                    text.push_str(&serde_json::to_string(&enc.embed(&r.query_id, &r.query_text())?)?);
                    text.push('\n');
                }
                std::fs::write(out, text)?;
            }
        }
        Command::TrainPredictor(args) => {
            let reg = registry(&cli)?;
            let records = load_dataset(&args.dataset, &reg)?;
            let (encoder, kind) = match &args.embeddings {
                Some(p) => (Encoder::File(EmbeddingStore::load(p)?), EncoderKind::File),
                None => (
                    Encoder::HashedNgram { dim: args.dim, seed: cli.seed },
                    EncoderKind::HashedNgram { seed: cli.seed },
                ),
            };
            let set = build_training_set(&records, &reg, &encoder, args.targets)?;
            let data: Vec<(Vec<f64>, Vec<f64>)> = set.into_iter().map(|(e, t)| (e.vector, t)).collect();
            let dims = HeadDims::new(encoder.dim(), args.hidden, args.glu, reg.len())?;
            let mut head = PredictorHead::init(dims, args.dropout, cli.seed)?;
            let mut cfg = TrainConfig { seed: cli.seed, ..TrainConfig::default() };
            if let Some(v) = args.epochs {
                cfg.epochs = v;
            }
            if let Some(v) = args.learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = args.batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = args.delta {
                cfg.delta = v;
            }
            let report = train(&mut head, &data, &cfg)?;
            for (i, l) in report.epoch_losses.iter().enumerate() {
                out!("epoch {} loss {}", i + 1, fmt_sig(*l));
            }
            Checkpoint { head, delta: cfg.delta, encoder: kind }.save(&args.out)?;
            out!("wrote {}", args.out.display());
        }
        Command::Sweep { dataset, candidates, scores, fractions, out } => {
            let fractions = fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
            if let Some(path) = candidates {
                let reg = cli.config.as_ref().map(|_| registry(&cli)).transpose()?;
                let (names, cands) = read_candidates(path)?;
                let baseline: f64 = cands.iter().map(|c| c.cost).sum();
                let rows = budget_sweep(&cands, &fractions, baseline, grid(&cli, reg.as_ref()))?;
                let mut text = String::from("fraction,total_target_score,total_cost,selected\n");
                for (f, sel) in rows {
                    text.push_str(&format!(
                        "{},{},{},{}\n",
                        fmt_sig(f),
                        fmt_sig(sel.total_target_score),
                        fmt_sig(sel.total_cost),
                        selected_names(&sel, &cands, &names).join(";")
                    ));
                }
                return emit(out.as_deref(), &text);
            }
            let reg = registry(&cli)?;
            let dataset = dataset.as_ref().expect("clap requires dataset or candidates");
            let records = load_dataset(dataset, &reg)?;
            let settings = ReplaySettings {
                dataset: dataset.display().to_string(),
                seed: cli.seed,
                grid_resolution: grid(&cli, Some(&reg)),
                token_mode: reg.defaults().token_mode,
            };
            let predictor =
                scores.checkpoint.as_ref().map(|c| load_predictor(c, scores.embeddings.as_deref())).transpose()?;
            let source = match &predictor {
                Some((head, encoder)) => ScoreSource::Predictor { head, encoder },
                None => ScoreSource::Oracle,
            };
            let report = replay_sweep(&records, &reg, &source, &fractions, &settings)?;
            emit(out.as_deref(), &report.render(report_format(cli.format)))?;
        }
        Command::Compare { dataset, fraction, trials, scores, out } => {
            let reg = registry(&cli)?;
            let records = load_dataset(dataset, &reg)?;
            let settings = ReplaySettings {
                dataset: dataset.display().to_string(),
                seed: cli.seed,
                grid_resolution: grid(&cli, Some(&reg)),
                token_mode: reg.defaults().token_mode,
            };
            let predictor =
                scores.checkpoint.as_ref().map(|c| load_predictor(c, scores.embeddings.as_deref())).transpose()?;
            let source = predictor.as_ref().map(|(head, encoder)| ScoreSource::Predictor { head, encoder });
            let cmp = baseline_compare(&records, &reg, *fraction, *trials, source, &settings)?;
            emit(out.as_deref(), &cmp.table.render(report_format(cli.format)))?;
        }
        Command::Cost { text } => {
            let reg = registry(&cli)?;
            let ctx = build_query_context(&reg, stable_query_id(text), text.clone(), reg.defaults().token_mode);
            match cli.format {
                Format::Structured => out!("{}", serde_json::to_string_pretty(&ctx)?),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.write_record(["model", "tokens", "clamped", "cost_flops"])?;
                    for (i, name) in reg.names().enumerate() {
                        w.write_record([
                            name.to_string(),
                            ctx.token_counts[i].to_string(),
                            ctx.clamped[i].to_string(),
                            format!("{:e}", ctx.costs[i]),
                        ])?;
                    }
                    w.flush()?;
                }
                Format::Text => {
                    for (i, name) in reg.names().enumerate() {
                        let flag = if ctx.clamped[i] { " (clamped)" } else { "" };
                        out!("{name:<24} {:>6} tokens{flag}  {:.6e} FLOPs", ctx.token_counts[i], ctx.costs[i]);
                    }
                    out!("{:<24} {:>6}         {:.6e} FLOPs", "all models", "", ctx.total_baseline_cost());
                }
            }
        }
        Command::Select { candidates, budget_fraction, epsilon, diagnostics } => {
            let reg = cli.config.as_ref().map(|_| registry(&cli)).transpose()?;
            let (names, cands) = read_candidates(candidates)?;
            let eps = match (budget_fraction, epsilon) {
                (Some(f), _) => {
                    validate_fraction(*f)?;
                    f * cands.iter().map(|c| c.cost).sum::<f64>()
                }
                (None, Some(e)) => *e,
                (None, None) => unreachable!("clap requires one budget flag"),
            };
            let g = grid(&cli, reg.as_ref());
            let sel = if *diagnostics { select_with_diagnostics(&cands, eps, g)? } else { select(&cands, eps, g)? };
            let chosen = selected_names(&sel, &cands, &names);
            match cli.format {
                Format::Structured => {
                    out!(
                        "{}",
                        serde_json::to_string_pretty(&SelectOutput { selected_models: chosen, selection: &sel })?
                    )
                }
                Format::Csv => {
                    out!("model,quality,cost,target_score,cost_units,selected");
                    for (it, name) in sel.items.iter().zip(&names) {
                        out!(
                            "{name},{},{},{},{},{}",
                            fmt_sig(it.quality),
                            fmt_sig(it.cost),
                            fmt_sig(it.target_score),
                            it.cost_units,
                            sel.selected.contains(&it.model_index)
                        );
                    }
                }
                Format::Text => {
                    if sel.infeasible {
                        out!("no model fits epsilon = {:.6e} FLOPs", eps);
                    } else {
                        out!("selected: {}", chosen.join(", "));
                    }
                    out!("total cost {:.6e} of epsilon {:.6e} FLOPs", sel.total_cost, eps);
                    out!("total target score {} (alpha {})", fmt_sig(sel.total_target_score), fmt_sig(sel.alpha));
                    if let Some(raw) = &sel.raw_optimal {
                        let raw_sel = SelectionResult { selected: raw.clone(), ..sel.clone() };
                        let raw_names = selected_names(&raw_sel, &cands, &names);
                        let shown = if raw_names.is_empty() { "(empty set)".to_string() } else { raw_names.join(", ") };
                        out!("raw-score optimum: {shown}");
                    }
                }
            }
        }
        Command::Predict { checkpoint, embeddings, query_id, text } => {
            let reg = registry(&cli)?;
            let (head, encoder) = load_predictor(checkpoint, embeddings.as_deref())?;
            let pipeline = Pipeline::new(reg, head, encoder)?;
            let id = query_id.clone().unwrap_or_else(|| stable_query_id(text));
            let scores = pipeline.predict(&id, text)?;
            match cli.format {
                Format::Structured => {
                    let map: serde_json::Map<String, serde_json::Value> =
                        pipeline.registry().names().zip(&scores).map(|(n, s)| (n.to_string(), (*s).into())).collect();
                    out!("{}", serde_json::to_string_pretty(&map)?);
                }
                Format::Csv => {
                    out!("model,predicted_quality");
                    for (n, s) in pipeline.registry().names().zip(&scores) {
                        out!("{n},{}", fmt_sig(*s));
                    }
                }
                Format::Text => {
                    for (n, s) in pipeline.registry().names().zip(&scores) {
                        out!("{n:<24} {}", fmt_sig(*s));
                    }
                }
            }
        }
        Command::Route { checkpoint, embeddings, bind, budget_fraction, fusion_mode } => {
            let mut reg = registry(&cli)?;
            let mut defaults = reg.defaults().clone();
            if let Some(f) = budget_fraction {
                defaults.budget_fraction = *f;
            }
            if let Some(m) = fusion_mode {
                defaults.fusion_mode = (*m).into();
            }
            if let Some(g) = cli.grid {
                defaults.grid_resolution = g;
            }
            reg = reg.with_defaults(defaults)?;
            let (head, encoder) = load_predictor(checkpoint, embeddings.as_deref())?;
            let pipeline = Pipeline::new(reg, head, encoder)?;
            tokio::runtime::Runtime::new()?.block_on(service::serve(pipeline, bind))?;
        }
        Command::MockBackend { bind, script } => {
            let script = script.as_ref().map(MockScript::load).transpose()?.unwrap_or_default();
            tokio::runtime::Runtime::new()?.block_on(async {
                let server = MockServer::bind(bind, script).await?;
                out!("mock backend on http://{}", server.addr());
                tokio::signal::ctrl_c().await?;
                anyhow::Ok(())
            })?;
        }
        Command::GenFixture { out_dir } => {
            std::fs::create_dir_all(out_dir)?;
            std::fs::write(out_dir.join("registry.toml"), FIXTURE_REGISTRY_TOML)?;
            std::fs::write(out_dir.join("mixinstruct_synthetic.jsonl"), fixture_jsonl(FIXTURE_SEED))?;
            out!("wrote fixture to {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        // A reader that stops early (`| head`) is not a failure.
        if e.chain()
            .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
        {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

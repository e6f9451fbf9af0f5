use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use nucleus_core::decoding::{
    generate, human_record, read_jsonl, write_jsonl, DecoderConfig, Detokenizer, Strategy, HUSE_INTERPOLATION_MASS,
};
use nucleus_core::exec::with_threads;
use nucleus_core::harness::{
    context_pairs, decoder_slug, evaluate_records, extract_contexts, generate_to_file, human_records, huse_config,
    load_corpora, run_experiment, train_model, ContextItem, ExperimentConfig,
};
use nucleus_core::huse::{extract_features, generate_for_huse, huse_score, run_huse, AnnotationSet, HuseReport};
use nucleus_core::lm::{NgramModel, TokenId, TraceProvider};
use nucleus_core::metrics::write_metrics_files;
use nucleus_core::probes::{
    beam_width_effect, beam_width_series, compare_probability_traces, distribution_shape_probe,
    repetition_feedback_probe, sample_phrase, token_probability_trace, CopyAggregate,
};
use nucleus_core::rng::RngStream;
use nucleus_core::{ContextWindow, DistributionProvider};

use crate::{Aggregate, Cli, Command, ProbeCommand};

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Replay {
            trace,
            strategy,
            seed,
            max_len,
            output,
        } => replay(&trace, strategy, seed, max_len, &output),
        Command::Train { config, output } => {
            let cfg = load_config(&config.config, threads)?;
            with_threads(cfg.threads, || train(&cfg, output))
        }
        Command::Generate {
            config,
            strategy,
            count,
            max_len,
            output,
        } => {
            let cfg = load_config(&config.config, threads)?;
            with_threads(cfg.threads, || generate_cmd(&cfg, strategy, count, max_len, output))
        }
        Command::Evaluate {
            config,
            generations,
            output,
        } => {
            let cfg = load_config(&config.config, threads)?;
            with_threads(cfg.threads, || evaluate_cmd(&cfg, &generations, output))
        }
        Command::Probe { config, probe } => {
            let cfg = load_config(&config.config, threads)?;
            with_threads(cfg.threads, || probe_cmd(&cfg, probe))
        }
        Command::Huse {
            config,
            strategy,
            annotations,
            output,
        } => {
            let cfg = load_config(&config.config, threads)?;
            with_threads(cfg.threads, || huse_cmd(&cfg, strategy, annotations, output))
        }
        Command::Report { config } => {
            let cfg = load_config(&config.config, threads)?;
            with_threads(cfg.threads, || report(&cfg))
        }
    }
}

fn load_config(path: &Path, threads: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_env()?;
    if let Some(t) = threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn with_decoder_defaults(cfg: &ExperimentConfig, mut d: DecoderConfig, max_len: Option<usize>) -> DecoderConfig {
    d.seed = cfg.seed;
    d.max_len = max_len.unwrap_or(cfg.max_len);
    d
}

/// The trained model and the held-out contexts of an experiment.
fn setup(cfg: &ExperimentConfig) -> Result<(NgramModel, Vec<ContextItem>)> {
    let path = cfg.model_path();
    if !path.exists() {
        return Err(nucleus_core::Error::Path {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "model not found"),
        })
        .context("run `nucleus-lab train` first");
    }
    let model = NgramModel::load(&path)?;
    let corpora = load_corpora(cfg)?;
    let items = extract_contexts(&model, &corpora.pool, cfg)?;
    Ok((model, items))
}

fn detokenizer(model: &NgramModel) -> Detokenizer<'_> {
    Detokenizer {
        vocab: model.vocabulary(),
        tokenizer: *model.tokenizer(),
    }
}

fn train(cfg: &ExperimentConfig, output: Option<PathBuf>) -> Result<()> {
    let corpora = load_corpora(cfg)?;
    let (model, summary) = train_model(cfg, &corpora)?;
    let path = output.unwrap_or_else(|| cfg.model_path());
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    model.save(&path)?;
    for (w, ppl) in &summary.tuning {
        println!("lower_order_weight {w:.2}  dev perplexity {ppl:.3}");
    }
    println!(
        "vocabulary {}  train tokens {}  lower_order_weight {}",
        summary.vocabulary, summary.train_tokens, summary.lower_order_weight
    );
    match summary.heldout_perplexity {
        Some(p) => println!("held-out perplexity {p:.3}"),
        None => println!("held-out perplexity n/a (no held-out documents)"),
    }
    log::info!("model written to {}", path.display());
    Ok(())
}

fn generate_cmd(
    cfg: &ExperimentConfig,
    strategy: DecoderConfig,
    count: Option<usize>,
    max_len: Option<usize>,
    output: Option<PathBuf>,
) -> Result<()> {
    let decoder = with_decoder_defaults(cfg, strategy, max_len);
    let (model, mut items) = setup(cfg)?;
    if let Some(n) = count {
        items.truncate(n);
    }
    let path = output.unwrap_or_else(|| {
        cfg.output_dir
            .join("generations")
            .join(format!("{}.jsonl", decoder_slug(&decoder.spec())))
    });
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let records = generate_to_file(&model, &items, &decoder, &path, Some(&detokenizer(&model)))?;
    println!("{} records -> {}", records.len(), path.display());
    Ok(())
}

fn replay(trace: &Path, strategy: DecoderConfig, seed: u64, max_len: Option<usize>, output: &Path) -> Result<()> {
    if matches!(strategy.strategy, Strategy::Beam | Strategy::StochasticBeam) {
        bail!(nucleus_core::Error::InvalidParameter(
            "a trace holds one distribution per step, so only greedy and sampling strategies can replay it".into()
        ));
    }
    let provider = TraceProvider::load(trace)?;
    let mut decoder = strategy.with_seed(seed);
    decoder.max_len = max_len.unwrap_or(provider.len());
    let ctx = ContextWindow::start(provider.vocabulary());
    let record = generate(&provider, &ctx, &decoder, 0)?;
    let detok = Detokenizer {
        vocab: provider.vocabulary(),
        tokenizer: Default::default(),
    };
    let header = json!({"trace": trace.display().to_string(), "strategy": decoder.spec()});
    write_jsonl(output, std::slice::from_ref(&record), &header, Some(&detok))?;
    if !provider.renormalized_steps().is_empty() {
        log::warn!("{} trace steps were renormalized", provider.renormalized_steps().len());
    }
    println!("{} tokens -> {}", record.continuation.len(), output.display());
    Ok(())
}

fn evaluate_cmd(cfg: &ExperimentConfig, files: &[PathBuf], output: Option<PathBuf>) -> Result<()> {
    let (model, items) = setup(cfg)?;
    let mut rows = Vec::with_capacity(files.len() + 1);
    for f in files {
        let records = read_jsonl(f)?;
        let label = match records.first() {
            Some(r) => r.label(),
            None => bail!(nucleus_core::Error::MalformedRecords(format!("{}: no records", f.display()))),
        };
        rows.push(evaluate_records(cfg, &label, &records, &model, true)?);
    }
    let human = human_records(&model, &items, cfg.max_len)?;
    rows.push(evaluate_records(cfg, "human", &human, &model, true)?);

    let prefix = output.unwrap_or_else(|| cfg.output_dir.join("metrics"));
    if let Some(dir) = prefix.parent() {
        ensure_dir(dir)?;
    }
    let csv_path = prefix.with_extension("csv");
    let json_path = prefix.with_extension("json");
    write_metrics_files(&csv_path, &json_path, &rows)?;
    print!("{}", std::fs::read_to_string(&csv_path)?);
    Ok(())
}

fn probe_cmd(cfg: &ExperimentConfig, probe: ProbeCommand) -> Result<()> {
    let (model, items) = setup(cfg)?;
    let dir = cfg.output_dir.join("probes");
    ensure_dir(&dir)?;
    match probe {
        ProbeCommand::TokenTrace {
            strategy,
            contexts,
            index,
        } => {
            let decoder = with_decoder_defaults(cfg, strategy, None);
            let n = contexts.min(items.len());
            let cmp = compare_probability_traces(&model, &context_pairs(&items[..n]), &decoder)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
            let it = items.get(index).context("context index out of range")?;
            let decoded = generate(&model, &it.context, &decoder, index as u64)?;
            let human = human_record(&model, index as u64, &it.context, &it.gold, cfg.max_len)?;
            for (name, cont) in [("decoded", &decoded.continuation), ("human", &human.continuation)] {
                let mut s = token_probability_trace(&model, &it.context, cont)?
                    .with_meta("source", name)
                    .with_meta("strategy", decoder.spec());
                s.name = format!("token_probability_{name}");
                println!("{}", s.save(&dir)?.display());
            }
        }
        ProbeCommand::Shape { p, k, contexts } => {
            let n = contexts.min(items.len());
            let seqs: Vec<Vec<TokenId>> = items[..n]
                .iter()
                .map(|it| {
                    let mut s = it.context.tokens().to_vec();
                    s.extend_from_slice(&it.gold[..it.gold.len() - 1]);
                    s
                })
                .collect();
            let shape = distribution_shape_probe(&model, &seqs, p, k)?;
            println!("{}", shape.series()?.save(&dir)?.display());
            let hist = dir.join("distribution_shape_histograms.json");
            let body = json!({
                "p": p, "k": k,
                "entropy": shape.entropy_hist,
                "nucleus_size": shape.nucleus_hist,
                "topk_mass": shape.topk_mass_hist,
            });
            std::fs::write(&hist, serde_json::to_string_pretty(&body)? + "\n")?;
            println!("{}", hist.display());
        }
        ProbeCommand::Feedback {
            phrase,
            random,
            phrase_len,
            copies,
            aggregate,
        } => {
            let agg = match aggregate {
                Aggregate::Arithmetic => CopyAggregate::Arithmetic,
                Aggregate::Geometric => CopyAggregate::Geometric,
            };
            let tok = model.tokenizer();
            let mut phrases: Vec<(String, Vec<TokenId>)> = phrase
                .iter()
                .map(|p| (p.clone(), model.vocabulary().encode(&tok.tokenize(p))))
                .collect();
            for j in 0..random {
                let mut rng = RngStream::derived(cfg.seed, "phrase", j as u64);
                let ids = sample_phrase(model.vocabulary(), phrase_len, &mut rng)?;
                let text = detokenizer(&model).text(&ids);
                phrases.push((text, ids));
            }
            if phrases.is_empty() {
                bail!(nucleus_core::Error::InvalidParameter("give --phrase or --random".into()));
            }
            for (text, ids) in phrases {
                let s = repetition_feedback_probe(&model, &ids, copies, agg)?.with_meta("phrase", text.replace(' ', "_"));
                let ys = s.column("mean_probability").unwrap_or_default();
                println!(
                    "{:40} first {:.4} last {:.4} -> {}",
                    text,
                    ys.first().copied().unwrap_or(f64::NAN),
                    ys.last().copied().unwrap_or(f64::NAN),
                    s.save(&dir)?.display()
                );
            }
        }
        ProbeCommand::BeamWidth { widths, contexts } => {
            let n = contexts.min(items.len());
            let rows = beam_width_effect(&model, &context_pairs(&items[..n]), &widths, cfg.max_len)?;
            for r in &rows {
                println!(
                    "{:12} mean_length {:8.2} distinct_trigrams {}",
                    r.label, r.mean_length, r.distinct_trigrams
                );
            }
            println!("{}", beam_width_series(&rows)?.save(&dir)?.display());
        }
    }
    Ok(())
}

fn huse_cmd(
    cfg: &ExperimentConfig,
    strategy: DecoderConfig,
    annotations: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<()> {
    let decoder = with_decoder_defaults(cfg, strategy, None);
    let (model, items) = setup(cfg)?;
    let n = cfg.huse.generations.min(items.len());
    let pairs = context_pairs(&items[..n]);
    let slug = decoder_slug(&decoder.spec());
    ensure_dir(&cfg.output_dir)?;
    let report = match annotations {
        Some(path) => {
            let set = AnnotationSet::load(&path)?;
            let contexts: Vec<ContextWindow> = pairs.iter().map(|(c, _)| c.clone()).collect();
            let mut records = human_records(&model, &items[..n], cfg.max_len)?;
            records.extend(generate_for_huse(&model, &contexts, &decoder, HUSE_INTERPOLATION_MASS)?);
            let features = extract_features(&records, &model, &set)?;
            let s = huse_score(&features.instances, cfg.huse.k)?;
            HuseReport {
                method: decoder.spec(),
                interpolation_mass: HUSE_INTERPOLATION_MASS,
                score: s.score,
                k: s.k,
                instances: s.instances,
                loo_error: s.loo_error,
                feature_means: features.means,
                feature_sds: features.sds,
            }
        }
        None => {
            let run = run_huse(&model, &model, &pairs, &decoder, &huse_config(cfg))?;
            let ann = cfg.output_dir.join(format!("annotations_{slug}.csv"));
            run.annotations.save(&ann)?;
            log::info!("synthetic annotations written to {}", ann.display());
            run.report
        }
    };
    let path = output.unwrap_or_else(|| cfg.output_dir.join(format!("huse_{slug}.json")));
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    println!("HUSE {:.4} (LOO error {:.4}, n={}, k={}) -> {}", report.score, report.loo_error, report.instances, report.k, path.display());
    Ok(())
}

fn report(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(cfg)?;
    print!("{}", std::fs::read_to_string(&out.table_csv)?);
    log::info!("table written to {} and {}", out.table_csv.display(), out.table_json.display());
    Ok(())
}

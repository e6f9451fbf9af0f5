use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use crate::decoding::{
    generate, human_record, read_jsonl, record_to_json, write_jsonl, DecoderConfig, Detokenizer, GenerationRecord,
    Strategy, HUMAN_LABEL, RECORD_SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::exec::try_par_map;
use crate::decoding::HUSE_INTERPOLATION_MASS;
use crate::huse::{run_huse, AnnotatorConfig, HuseReport, HuseRunConfig};
use crate::lm::{read_corpus, ContextWindow, Corpus, DistributionProvider, NgramModel, TokenId, TrainConfig};
use crate::metrics::{evaluate, write_metrics_files, Measured, MetricsConfig, MetricsReport, SelfBleuConfig, ZipfConfig};
use crate::rng::RngStream;

/// Records are generated and appended in chunks of this many contexts so an
/// interrupted run can resume.
const CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct Corpora {
    pub train: Corpus,
    /// Held-out documents reserved for smoothing tuning.
    pub dev: Corpus,
    /// Held-out documents contexts are drawn from.
    pub pool: Corpus,
}

pub fn load_corpora(cfg: &ExperimentConfig) -> Result<Corpora> {
    let tok = cfg.corpus.tokenizer;
    let full = read_corpus(&cfg.corpus.train, &tok)?;
    let (train, heldout) = match &cfg.corpus.heldout {
        Some(p) => (full, read_corpus(p, &tok)?),
        None => full.split_every(cfg.corpus.heldout_every),
    };
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut pool = heldout;
    let dev = match &cfg.model.tune {
        Some(t) => {
            if pool.documents.len() <= t.dev_documents {
                return Err(Error::InsufficientData(format!(
                    "{} held-out documents cannot spare {} for tuning",
                    pool.documents.len(),
                    t.dev_documents
                )));
            }
            let split = pool.documents.len() - t.dev_documents;
            Corpus {
                documents: pool.documents.split_off(split),
            }
        }
        None => Corpus::default(),
    };
    Ok(Corpora { train, dev, pool })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub vocabulary: usize,
    pub train_tokens: usize,
    pub lower_order_weight: f64,
    /// `(weight, dev perplexity)` per grid point when tuning was requested.
    pub tuning: Vec<(f64, f64)>,
    /// Perplexity on the context pool.
    pub heldout_perplexity: Option<f64>,
}

pub fn train_model(cfg: &ExperimentConfig, corpora: &Corpora) -> Result<(NgramModel, TrainSummary)> {
    let tc = TrainConfig {
        order: cfg.model.order,
        smoothing: cfg.model.smoothing,
        min_count: cfg.model.min_count,
        append_eod: true,
        tokenizer: cfg.corpus.tokenizer,
    };
    let mut model = NgramModel::train(&corpora.train, tc)?;
    let tuning = match &cfg.model.tune {
        Some(t) => model.tune_lower_order_weight(&corpora.dev, &t.grid)?,
        None => Vec::new(),
    };
    let heldout_perplexity = if corpora.pool.is_empty() {
        None
    } else {
        Some(model.perplexity(&corpora.pool)?)
    };
    let summary = TrainSummary {
        vocabulary: model.vocabulary().len(),
        train_tokens: corpora.train.token_count(),
        lower_order_weight: model.config().smoothing.lower_order_weight,
        tuning,
        heldout_perplexity,
    };
    Ok((model, summary))
}

/// A context and the gold continuation that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextItem {
    /// Index of the source document in the context pool.
    pub doc_index: usize,
    pub context: ContextWindow,
    /// Remaining document tokens, ending with `</s>`.
    pub gold: Vec<TokenId>,
}

/// The first `N` tokens of each pool document (after `<s>`), `N` drawn
/// uniformly from the configured range with the document's own stream and
/// capped so at least one word remains. Documents with fewer than two words
/// are skipped; extraction stops after `count` contexts.
pub fn extract_contexts(model: &NgramModel, pool: &Corpus, cfg: &ExperimentConfig) -> Result<Vec<ContextItem>> {
    let c = &cfg.contexts;
    let v = model.vocabulary().len();
    let mut items = Vec::with_capacity(c.count.min(pool.documents.len()));
    for (i, doc) in pool.documents.iter().enumerate() {
        if items.len() == c.count {
            break;
        }
        if doc.len() < 2 {
            continue;
        }
        let mut rng = RngStream::derived(cfg.seed, "context", i as u64);
        let span = (c.max_tokens - c.min_tokens + 1) as u64;
        let n = (c.min_tokens + rng.below(span) as usize).min(doc.len() - 1);
        let ids = model.encode_document(doc);
        items.push(ContextItem {
            doc_index: i,
            context: ContextWindow::new(ids[..=n].to_vec(), v)?,
            gold: ids[n + 1..].to_vec(),
        });
    }
    if items.len() < c.count {
        log::warn!("only {} of the requested {} contexts are available", items.len(), c.count);
    }
    if items.is_empty() {
        return Err(Error::InsufficientData("no usable held-out documents for contexts".into()));
    }
    Ok(items)
}

pub fn context_pairs(items: &[ContextItem]) -> Vec<(ContextWindow, Vec<TokenId>)> {
    items.iter().map(|it| (it.context.clone(), it.gold.clone())).collect()
}

/// One record per context; the record id is the context's position.
pub fn generate_records<P>(provider: &P, items: &[ContextItem], decoder: &DecoderConfig) -> Result<Vec<GenerationRecord>>
where
    P: DistributionProvider + Sync + ?Sized,
{
    try_par_map(items, |i, it| generate(provider, &it.context, decoder, i as u64))
}

pub fn human_records<P>(provider: &P, items: &[ContextItem], max_len: usize) -> Result<Vec<GenerationRecord>>
where
    P: DistributionProvider + Sync + ?Sized,
{
    try_par_map(items, |i, it| human_record(provider, i as u64, &it.context, &it.gold, max_len))
}

fn header(decoder: Option<&DecoderConfig>, contexts: usize) -> serde_json::Value {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    json!({
        "created_unix": created,
        "strategy": decoder.map_or_else(|| HUMAN_LABEL.to_string(), DecoderConfig::spec),
        "decoder": decoder,
        "contexts": contexts,
    })
}

/// Generates the records missing from `path` (by id), appending them chunk
/// by chunk, then rewrites the file in canonical id order.
pub fn generate_to_file<P>(
    provider: &P,
    items: &[ContextItem],
    decoder: &DecoderConfig,
    path: &Path,
    detok: Option<&Detokenizer<'_>>,
) -> Result<Vec<GenerationRecord>>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let mut records = if path.exists() { read_jsonl(path)? } else { Vec::new() };
    if let Some(r) = records.iter().find(|r| r.config.as_ref() != Some(decoder)) {
        return Err(Error::Config(format!(
            "{} already holds records for `{}`, not `{}`",
            path.display(),
            r.label(),
            decoder.spec()
        )));
    }
    records.retain(|r| (r.id as usize) < items.len());
    let have: BTreeSet<u64> = records.iter().map(|r| r.id).collect();
    let todo: Vec<usize> = (0..items.len()).filter(|&i| !have.contains(&(i as u64))).collect();
    let head = header(Some(decoder), items.len());
    if !todo.is_empty() {
        if !have.is_empty() {
            log::info!("{}: resuming, {} of {} records present", decoder.spec(), have.len(), items.len());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::at_path(path, e))?;
        let fresh = file.metadata().map_err(|e| Error::at_path(path, e))?.len() == 0;
        let mut w = BufWriter::new(file);
        if fresh {
            let mut h = head.clone();
            h["kind"] = "header".into();
            h["v"] = RECORD_SCHEMA_VERSION.into();
            writeln!(w, "{h}")?;
        }
        let mut done = have.len();
        for chunk in todo.chunks(CHUNK) {
            let new = try_par_map(chunk, |_, &i| generate(provider, &items[i].context, decoder, i as u64))?;
            for r in &new {
                writeln!(w, "{}", record_to_json(r, detok)?)?;
            }
            w.flush().map_err(|e| Error::at_path(path, e))?;
            done += new.len();
            records.extend(new);
            log::info!("{}: {done}/{}", decoder.spec(), items.len());
        }
    }
    records.sort_by_key(|r| r.id);
    write_jsonl(path, &records, &head, detok)?;
    Ok(records)
}

/// File-name-safe form of a decoder spec, e.g. `topk_k=40_t=0.7`.
pub fn decoder_slug(spec: &str) -> String {
    spec.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '=' || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn metrics_config(cfg: &ExperimentConfig, records: usize) -> MetricsConfig {
    MetricsConfig {
        perplexity: cfg.metrics.perplexity,
        self_bleu: cfg.metrics.self_bleu.then(|| SelfBleuConfig {
            sample_size: cfg.self_bleu_sample(records),
            seed: cfg.seed,
            ..SelfBleuConfig::default()
        }),
        zipf: cfg.metrics.zipf.then(ZipfConfig::default),
        repetition: cfg.metrics.repetition,
    }
}

/// Metric row for one record set. With `rescore` the perplexity is
/// recomputed under `provider`; otherwise the stored log-probabilities are
/// used (identical when the records came from `provider`).
pub fn evaluate_records<P>(
    cfg: &ExperimentConfig,
    method: &str,
    records: &[GenerationRecord],
    provider: &P,
    rescore: bool,
) -> Result<MetricsReport>
where
    P: DistributionProvider + Sync + ?Sized,
{
    let mc = metrics_config(cfg, records.len());
    evaluate(method, records, rescore.then_some(provider), provider.eod(), &mc)
}

pub fn huse_config(cfg: &ExperimentConfig) -> HuseRunConfig {
    HuseRunConfig {
        k: cfg.huse.k,
        mass: HUSE_INTERPOLATION_MASS,
        annotator_seed: cfg.seed,
        annotator: AnnotatorConfig {
            annotators: cfg.huse.annotators,
            ..AnnotatorConfig::default()
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutput {
    pub train: TrainSummary,
    pub contexts: usize,
    /// Decoder rows in config order, then the human row.
    pub rows: Vec<MetricsReport>,
    pub huse: Vec<HuseReport>,
    pub table_csv: PathBuf,
    pub table_json: PathBuf,
}

/// Train, extract contexts, generate with every decoder (resumably),
/// evaluate, optionally run HUSE, and write `table1.csv` / `table1.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let gen_dir = out.join("generations");
    std::fs::create_dir_all(&gen_dir).map_err(|e| Error::at_path(&gen_dir, e))?;

    let corpora = load_corpora(cfg)?;
    let (model, train) = train_model(cfg, &corpora)?;
    model.save(&cfg.model_path())?;
    let items = extract_contexts(&model, &corpora.pool, cfg)?;
    log::info!("{} contexts, vocabulary {}", items.len(), train.vocabulary);
    let detok = Detokenizer {
        vocab: model.vocabulary(),
        tokenizer: *model.tokenizer(),
    };

    let mut rows = Vec::new();
    let mut huse_reports = Vec::new();
    let pairs = context_pairs(&items[..items.len().min(cfg.huse.generations)]);
    for d in &cfg.decoders {
        let path = gen_dir.join(format!("{}.jsonl", decoder_slug(&d.spec())));
        let records = generate_to_file(&model, &items, d, &path, Some(&detok))?;
        let mut row = evaluate_records(cfg, &d.spec(), &records, &model, false)?;
        if cfg.metrics.huse && matches!(d.strategy, Strategy::TopK | Strategy::Nucleus) {
            let run = run_huse(&model, &model, &pairs, d, &huse_config(cfg))?;
            row.huse = Some(Measured {
                value: run.report.score,
                sample_size: run.report.instances,
            });
            let slug = decoder_slug(&d.spec());
            run.annotations.save(&out.join(format!("annotations_{slug}.csv")))?;
            huse_reports.push(run.report);
        }
        rows.push(row);
    }
    let human = human_records(&model, &items, cfg.max_len)?;
    write_jsonl(&gen_dir.join("human.jsonl"), &human, &header(None, items.len()), Some(&detok))?;
    rows.push(evaluate_records(cfg, HUMAN_LABEL, &human, &model, false)?);

    let table_csv = out.join("table1.csv");
    let table_json = out.join("table1.json");
    write_metrics_files(&table_csv, &table_json, &rows)?;
    if !huse_reports.is_empty() {
        let p = out.join("huse.json");
        std::fs::write(&p, serde_json::to_string_pretty(&huse_reports)? + "\n").map_err(|e| Error::at_path(&p, e))?;
    }
    let p = out.join("training.json");
    std::fs::write(&p, serde_json::to_string_pretty(&train)? + "\n").map_err(|e| Error::at_path(&p, e))?;
    Ok(ExperimentOutput {
        train,
        contexts: items.len(),
        rows,
        huse: huse_reports,
        table_csv,
        table_json,
    })
}

//! Experiment orchestration: configuration, corpus handling, context
//! extraction, resumable batch generation and report assembly.

mod config;
mod run;

pub use config::{
    default_tune_grid, ContextConfig, CorpusConfig, ExperimentConfig, HuseSettings, MetricToggles, ModelConfig,
    TuneConfig, ENV_OUTPUT_DIR, ENV_THREADS,
};
pub use run::{
    context_pairs, decoder_slug, evaluate_records, extract_contexts, generate_records, generate_to_file,
    human_records, huse_config, load_corpora, metrics_config, run_experiment, train_model, ContextItem, Corpora,
    ExperimentOutput, TrainSummary,
};

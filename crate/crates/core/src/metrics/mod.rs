//! Distributional evaluation of record sets: generation perplexity,
//! Self-BLEU, Zipf coefficient and repetition rate.

mod bleu;
mod perplexity;
mod repetition;
mod report;
mod zipf;

pub use bleu::{self_bleu, self_bleu_documents, SelfBleu, SelfBleuConfig};
pub use perplexity::{generation_perplexity, perplexity_from_logprobs, recorded_perplexity};
pub use repetition::{is_repetitive, repetition_pct, trailing_loop, MAX_PHRASE_LEN, MIN_COPIES, MIN_PHRASE_LEN};
pub use report::{evaluate, write_metrics_csv, write_metrics_files, Measured, MetricsConfig, MetricsReport, CSV_COLUMNS};
pub use zipf::{rank_frequencies, write_rank_frequency_csv, zipf_fit, zipf_fit_corpus, zipf_fit_records, ZipfConfig, ZipfFit};

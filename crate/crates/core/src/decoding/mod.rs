//! Decoding strategies: greedy, beam, stochastic beam, pure sampling,
//! temperature, top-k and nucleus sampling, plus the interpolated mode used
//! when generating text for HUSE.

mod beam;
mod config;
mod generate;
mod record;
mod truncate;

pub use beam::{beam_search, stochastic_beam_samples, stochastic_beam_search, Hypothesis};
pub use config::{DecoderConfig, Strategy, DEFAULT_MAX_LEN, HUSE_INTERPOLATION_MASS};
pub use generate::{decoding_distribution, generate, human_record};
pub use record::{
    existing_ids, read_jsonl, record_from_json, record_to_json, write_jsonl, Detokenizer,
    GenerationRecord, Termination, HUMAN_LABEL, RECORD_SCHEMA_VERSION,
};
pub use truncate::{
    apply_temperature, interpolate_with_original, nucleus_size, sample_token,
    sample_with_uniform, truncate_nucleus, truncate_topk, Truncated,
};

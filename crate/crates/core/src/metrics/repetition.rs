use crate::decoding::GenerationRecord;
use crate::exec::par_map;
use crate::lm::TokenId;

pub const MIN_PHRASE_LEN: usize = 2;
pub const MAX_PHRASE_LEN: usize = 20;
pub const MIN_COPIES: usize = 3;

/// Length of the shortest phrase (in `MIN_PHRASE_LEN..=max_phrase_len`) of
/// which the sequence ends in at least `MIN_COPIES` consecutive exact copies.
pub fn trailing_loop(tokens: &[TokenId], max_phrase_len: usize) -> Option<usize> {
    let n = tokens.len();
    (MIN_PHRASE_LEN..=max_phrase_len)
        .take_while(|&l| l * MIN_COPIES <= n)
        .find(|&l| {
            let last = &tokens[n - l..];
            (2..=MIN_COPIES).all(|c| &tokens[n - c * l..n - (c - 1) * l] == last)
        })
}

/// Whether the continuation (ignoring a trailing `</s>`) ends in a loop.
pub fn is_repetitive(record: &GenerationRecord, eod: TokenId) -> bool {
    trailing_loop(record.text_tokens(eod), MAX_PHRASE_LEN).is_some()
}

/// Percentage of records whose continuation ends in a loop; 0 for no records.
pub fn repetition_pct(records: &[GenerationRecord], eod: TokenId) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let flags = par_map(records, |_, r| is_repetitive(r, eod));
    let flagged = flags.iter().filter(|&&f| f).count();
    100.0 * flagged as f64 / records.len() as f64
}

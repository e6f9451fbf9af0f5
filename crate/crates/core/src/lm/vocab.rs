use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::error::{Error, Result};

pub const BOD_TOKEN: &str = "<s>";
pub const EOD_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense bidirectional token/id mapping with three reserved ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bod: TokenId,
    eod: TokenId,
    unk: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list. The three special ids
    /// must be distinct and in range; tokens must be distinct.
    pub fn new(tokens: Vec<String>, bod: TokenId, eod: TokenId, unk: TokenId) -> Result<Self> {
        let n = tokens.len();
        for (name, id) in [("bod", bod), ("eod", eod), ("unk", unk)] {
            if id as usize >= n {
                return Err(Error::param(format!("{name} id {id} outside vocabulary of {n}")));
            }
        }
        if bod == eod || bod == unk || eod == unk {
            return Err(Error::param("special token ids must be distinct"));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::param(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            bod,
            eod,
            unk,
        })
    }

    /// `<s>`, `</s>`, `<unk>` at ids 0, 1, 2 followed by `words`.
    pub fn with_specials<S: Into<String>>(words: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut tokens = vec![BOD_TOKEN.to_string(), EOD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(words.into_iter().map(Into::into));
        Self::new(tokens, 0, 1, 2)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bod(&self) -> TokenId {
        self.bod
    }

    pub fn eod(&self) -> TokenId {
        self.eod
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id == self.bod || id == self.eod || id == self.unk
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id.
    pub fn id_or_unk(&self, token: &str) -> TokenId {
        self.id(token).unwrap_or(self.unk)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, words: &[String]) -> Vec<TokenId> {
        words.iter().map(|w| self.id_or_unk(w)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    /// Runs of alphanumerics (with inner apostrophes) plus single punctuation marks.
    #[default]
    Word,
    /// One token per character; whitespace runs collapse to a single space.
    Char,
}

impl std::str::FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Self::Word),
            "char" => Ok(Self::Char),
            other => Err(Error::Config(format!("unknown tokenizer mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
    pub lowercase: bool,
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode, lowercase: bool) -> Self {
        Self { mode, lowercase }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        match self.mode {
            TokenizerMode::Word => word_tokens(&text),
            TokenizerMode::Char => char_tokens(&text),
        }
    }

    pub fn detokenize<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> String {
        match self.mode {
            TokenizerMode::Char => tokens.into_iter().collect(),
            TokenizerMode::Word => {
                let mut out = String::new();
                let mut glue_next = true;
                for t in tokens {
                    let attach_left = matches!(t, "." | "," | ";" | ":" | "!" | "?" | ")" | "]" | "%");
                    if !out.is_empty() && !attach_left && !glue_next {
                        out.push(' ');
                    }
                    out.push_str(t);
                    glue_next = matches!(t, "(" | "[" | "$");
                }
                out
            }
        }
    }
}

fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let inner_apostrophe = c == '\''
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            cur.push(c);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn char_tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in text.trim().chars() {
        if c.is_whitespace() {
            if out.last().map(String::as_str) != Some(" ") {
                out.push(" ".to_string());
            }
        } else {
            out.push(c.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        let v = Vocabulary::with_specials(["a", "b"]).unwrap();
        for id in 0..v.len() as TokenId {
            assert_eq!(v.id(v.token(id).unwrap()), Some(id));
        }
        assert_eq!(v.id_or_unk("zzz"), v.unk());
    }

    #[test]
    fn specials_must_differ() {
        let toks = vec!["x".to_string(), "y".to_string()];
        assert!(Vocabulary::new(toks.clone(), 0, 0, 1).is_err());
        assert!(Vocabulary::new(toks, 0, 1, 5).is_err());
        assert!(Vocabulary::with_specials(["a", "a"]).is_err());
    }

    #[test]
    fn word_tokenizer_splits_punctuation() {
        let t = Tokenizer::new(TokenizerMode::Word, true);
        assert_eq!(
            t.tokenize("The nation's debt, (now) 5%."),
            vec!["the", "nation's", "debt", ",", "(", "now", ")", "5", "%", "."]
        );
        let toks = t.tokenize("we hold, that all.");
        assert_eq!(t.detokenize(toks.iter().map(String::as_str)), "we hold, that all.");
    }

    #[test]
    fn char_tokenizer_collapses_space() {
        let t = Tokenizer::new(TokenizerMode::Char, false);
        assert_eq!(t.tokenize(" ab \n c"), vec!["a", "b", " ", "c"]);
        assert_eq!(t.detokenize(["a", "b", " ", "c"]), "ab c");
    }
}

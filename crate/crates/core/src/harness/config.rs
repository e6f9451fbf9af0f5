use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption, Properties};

use crate::decoding::{DecoderConfig, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::huse::DEFAULT_K;
use crate::lm::{SmoothingConfig, Tokenizer, TokenizerMode};

pub const ENV_OUTPUT_DIR: &str = "NUCLEUS_LAB_OUTPUT_DIR";
pub const ENV_THREADS: &str = "NUCLEUS_LAB_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub train: PathBuf,
    /// When absent, every `heldout_every`-th training document is held out.
    pub heldout: Option<PathBuf>,
    pub heldout_every: usize,
    pub tokenizer: Tokenizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub grid: Vec<f64>,
    /// Held-out documents (taken from the end) reserved for tuning; they are
    /// never used as contexts.
    pub dev_documents: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub order: usize,
    pub min_count: u32,
    pub smoothing: SmoothingConfig,
    /// `lower_order_weight = auto`: pick the weight on held-out data.
    pub tune: Option<TuneConfig>,
    /// Where the trained model is cached; defaults to `<output>/model.ntdm`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricToggles {
    pub perplexity: bool,
    pub self_bleu: bool,
    /// `None` means one fifth of the generation count.
    pub self_bleu_sample: Option<usize>,
    pub zipf: bool,
    pub repetition: bool,
    pub huse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HuseSettings {
    pub k: usize,
    pub generations: usize,
    pub annotators: usize,
}

/// Everything one experiment needs; see `ExperimentConfig::parse` for the
/// file format.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub contexts: ContextConfig,
    pub max_len: usize,
    pub decoders: Vec<DecoderConfig>,
    pub metrics: MetricToggles,
    pub huse: HuseSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// 0 lets the thread pool decide.
    pub threads: usize,
}

pub fn default_tune_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig {
                train: PathBuf::new(),
                heldout: None,
                heldout_every: 10,
                tokenizer: Tokenizer::new(TokenizerMode::Word, true),
            },
            model: ModelConfig {
                order: 3,
                min_count: 1,
                smoothing: SmoothingConfig::default(),
                tune: None,
                path: None,
            },
            contexts: ContextConfig {
                min_tokens: 1,
                max_tokens: 40,
                count: 1000,
            },
            max_len: DEFAULT_MAX_LEN,
            decoders: Vec::new(),
            metrics: MetricToggles {
                perplexity: true,
                self_bleu: true,
                self_bleu_sample: None,
                zipf: true,
                repetition: true,
                huse: false,
            },
            huse: HuseSettings {
                k: DEFAULT_K,
                generations: 200,
                annotators: 20,
            },
            output_dir: PathBuf::from("out"),
            seed: 0,
            threads: 0,
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("corpus", &["train", "heldout", "heldout_every", "tokenizer", "lowercase"]),
    (
        "model",
        &["order", "min_count", "lower_order_weight", "floor_mass", "witten_bell", "tune_grid", "dev_documents", "path"],
    ),
    ("contexts", &["min_tokens", "max_tokens", "count"]),
    ("generation", &["max_len", "decoder"]),
    ("metrics", &["perplexity", "self_bleu", "self_bleu_sample", "zipf", "repetition", "huse"]),
    ("huse", &["k", "generations", "annotators"]),
    ("output", &["dir", "seed", "threads"]),
];

impl ExperimentConfig {
    /// Parses the `[section]` / `key = value` format. `decoder` may repeat.
    /// Relative paths are resolved against `base_dir`.
    ///
    /// ```text
    /// [corpus]
    /// train = data/sotu.txt.gz
    /// heldout_every = 10
    /// [model]
    /// order = 3
    /// lower_order_weight = auto
    /// [generation]
    /// decoder = greedy
    /// decoder = nucleus:p=0.95
    /// ```
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let opt = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys must appear inside a [section]".into()));
                }
                continue;
            };
            let allowed = KEYS
                .iter()
                .find(|(s, _)| *s == section)
                .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?
                .1;
            for (k, _) in props.iter() {
                if !allowed.contains(&k) {
                    return Err(Error::Config(format!("unknown key `{k}` in [{section}]")));
                }
                if k != "decoder" && props.get_all(k).count() > 1 {
                    return Err(Error::Config(format!("key `{k}` repeated in [{section}]")));
                }
            }
            let s = Section { name: section, props };
            match section {
                "corpus" => {
                    if let Some(v) = s.str("train") {
                        cfg.corpus.train = base_dir.join(v);
                    }
                    if let Some(v) = s.str("heldout") {
                        cfg.corpus.heldout = (!v.is_empty()).then(|| base_dir.join(v));
                    }
                    s.set("heldout_every", &mut cfg.corpus.heldout_every)?;
                    if let Some(v) = s.str("tokenizer") {
                        cfg.corpus.tokenizer.mode = v.parse()?;
                    }
                    s.set("lowercase", &mut cfg.corpus.tokenizer.lowercase)?;
                }
                "model" => {
                    s.set("order", &mut cfg.model.order)?;
                    s.set("min_count", &mut cfg.model.min_count)?;
                    s.set("floor_mass", &mut cfg.model.smoothing.floor_mass)?;
                    s.set("witten_bell", &mut cfg.model.smoothing.witten_bell)?;
                    match s.str("lower_order_weight") {
                        Some("auto") => {
                            cfg.model.tune.get_or_insert_with(|| TuneConfig {
                                grid: default_tune_grid(),
                                dev_documents: 300,
                            });
                        }
                        Some(_) => s.set("lower_order_weight", &mut cfg.model.smoothing.lower_order_weight)?,
                        None => {}
                    }
                    if let Some(tune) = cfg.model.tune.as_mut() {
                        if let Some(v) = s.str("tune_grid") {
                            tune.grid = v
                                .split(',')
                                .map(|x| x.trim().parse::<f64>())
                                .collect::<std::result::Result<_, _>>()
                                .map_err(|_| s.bad("tune_grid", v))?;
                        }
                        s.set("dev_documents", &mut tune.dev_documents)?;
                    } else if s.str("tune_grid").is_some() || s.str("dev_documents").is_some() {
                        return Err(Error::Config(
                            "tune_grid and dev_documents need lower_order_weight = auto".into(),
                        ));
                    }
                    if let Some(v) = s.str("path") {
                        cfg.model.path = (!v.is_empty()).then(|| base_dir.join(v));
                    }
                }
                "contexts" => {
                    s.set("min_tokens", &mut cfg.contexts.min_tokens)?;
                    s.set("max_tokens", &mut cfg.contexts.max_tokens)?;
                    s.set("count", &mut cfg.contexts.count)?;
                }
                "generation" => {
                    s.set("max_len", &mut cfg.max_len)?;
                    for d in props.get_all("decoder") {
                        cfg.decoders.push(d.parse()?);
                    }
                }
                "metrics" => {
                    s.set("perplexity", &mut cfg.metrics.perplexity)?;
                    s.set("self_bleu", &mut cfg.metrics.self_bleu)?;
                    match s.str("self_bleu_sample") {
                        Some("auto") | None => {}
                        Some(v) => cfg.metrics.self_bleu_sample = Some(v.parse().map_err(|_| s.bad("self_bleu_sample", v))?),
                    }
                    s.set("zipf", &mut cfg.metrics.zipf)?;
                    s.set("repetition", &mut cfg.metrics.repetition)?;
                    s.set("huse", &mut cfg.metrics.huse)?;
                }
                "huse" => {
                    s.set("k", &mut cfg.huse.k)?;
                    s.set("generations", &mut cfg.huse.generations)?;
                    s.set("annotators", &mut cfg.huse.annotators)?;
                }
                "output" => {
                    if let Some(v) = s.str("dir") {
                        cfg.output_dir = base_dir.join(v);
                    }
                    s.set("seed", &mut cfg.seed)?;
                    s.set("threads", &mut cfg.threads)?;
                }
                _ => unreachable!(),
            }
        }
        cfg.finish();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Propagates the shared seed and length limit into every decoder.
    pub fn finish(&mut self) {
        for d in &mut self.decoders {
            d.seed = self.seed;
            d.max_len = self.max_len;
        }
    }

    /// Applies the output-directory and thread-count environment overrides.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
        if let Ok(t) = std::env::var(ENV_THREADS) {
            self.threads = t
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_THREADS} must be an integer, got `{t}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path, what: &str| {
            if p.as_os_str().is_empty() {
                Err(Error::Config(format!("{what} path is not set")))
            } else if !p.exists() {
                Err(Error::at_path(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
                ))
            } else {
                Ok(())
            }
        };
        must_exist(&self.corpus.train, "training corpus")?;
        if let Some(h) = &self.corpus.heldout {
            must_exist(h, "held-out corpus")?;
        } else if self.corpus.heldout_every < 2 {
            return Err(Error::Config("heldout_every must be at least 2".into()));
        }
        if self.model.order == 0 {
            return Err(Error::Config("model order must be at least 1".into()));
        }
        self.model.smoothing.validate()?;
        if let Some(t) = &self.model.tune {
            if t.grid.is_empty() || t.grid.iter().any(|w| !(0.0..1.0).contains(w)) {
                return Err(Error::Config("tune_grid values must lie in [0, 1)".into()));
            }
            if t.dev_documents == 0 {
                return Err(Error::Config("dev_documents must be at least 1".into()));
            }
        }
        let c = &self.contexts;
        if c.min_tokens == 0 || c.min_tokens > c.max_tokens {
            return Err(Error::Config(format!(
                "context token range {}..={} is invalid",
                c.min_tokens, c.max_tokens
            )));
        }
        if c.count == 0 {
            return Err(Error::Config("context count must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        for d in &self.decoders {
            d.validate(usize::MAX)?;
        }
        if self.metrics.self_bleu_sample == Some(0) {
            return Err(Error::Config("self_bleu_sample must be at least 1".into()));
        }
        if self.huse.k == 0 || self.huse.k.is_multiple_of(2) {
            return Err(Error::Config("huse k must be odd".into()));
        }
        if self.huse.annotators == 0 {
            return Err(Error::Config("huse annotators must be at least 1".into()));
        }
        Ok(())
    }

    /// Self-BLEU hypotheses for `n` generations: the configured value, or
    /// one fifth of `n`.
    pub fn self_bleu_sample(&self, n: usize) -> usize {
        self.metrics.self_bleu_sample.unwrap_or((n / 5).max(1))
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.path.clone().unwrap_or_else(|| self.output_dir.join("model.ntdm"))
    }
}

struct Section<'a> {
    name: &'a str,
    props: &'a Properties,
}

impl Section<'_> {
    fn str(&self, key: &str) -> Option<&str> {
        self.props.get(key).map(str::trim)
    }

    fn bad(&self, key: &str, v: &str) -> Error {
        Error::Config(format!("[{}] {key}: cannot parse `{v}`", self.name))
    }

    fn set<T: std::str::FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.str(key) {
            *slot = v.parse().map_err(|_| self.bad(key, v))?;
        }
        Ok(())
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 200;
/// Mass given to the untruncated distribution when generating for HUSE.
pub const HUSE_INTERPOLATION_MASS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    Beam,
    StochasticBeam,
    Sample,
    TopK,
    Nucleus,
}

impl Strategy {
    pub fn is_sampling(self) -> bool {
        matches!(self, Strategy::Sample | Strategy::TopK | Strategy::Nucleus)
    }
}

/// Strategy selector plus every decoding parameter. Parameters a strategy
/// does not use keep their neutral defaults and are still recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub strategy: Strategy,
    pub p: f64,
    pub k: usize,
    #[serde(rename = "t")]
    pub temperature: f64,
    #[serde(rename = "b")]
    pub beam_width: usize,
    pub max_len: usize,
    pub interpolation_mass: f64,
    pub seed: u64,
    /// Gumbel noise scale for stochastic beam search; 0 turns it into plain
    /// beam search.
    #[serde(default = "one")]
    pub noise_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl DecoderConfig {
    fn base(strategy: Strategy) -> Self {
        Self {
            strategy,
            p: 1.0,
            k: 1,
            temperature: 1.0,
            beam_width: 1,
            max_len: DEFAULT_MAX_LEN,
            interpolation_mass: 0.0,
            seed: 0,
            noise_scale: 1.0,
        }
    }

    pub fn greedy() -> Self {
        Self::base(Strategy::Greedy)
    }

    pub fn sample() -> Self {
        Self::base(Strategy::Sample)
    }

    pub fn beam(b: usize) -> Self {
        Self {
            beam_width: b,
            ..Self::base(Strategy::Beam)
        }
    }

    pub fn stochastic_beam(b: usize) -> Self {
        Self {
            beam_width: b,
            ..Self::base(Strategy::StochasticBeam)
        }
    }

    pub fn top_k(k: usize) -> Self {
        Self {
            k,
            ..Self::base(Strategy::TopK)
        }
    }

    pub fn nucleus(p: f64) -> Self {
        Self {
            p,
            ..Self::base(Strategy::Nucleus)
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_interpolation(mut self, mass: f64) -> Self {
        self.interpolation_mass = mass;
        self
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param(format!("p must be in (0, 1], got {}", self.p)));
        }
        if self.k < 1 || (self.strategy == Strategy::TopK && self.k > vocab_size) {
            return Err(Error::param(format!(
                "k must be in [1, {vocab_size}], got {}",
                self.k
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::param(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.beam_width < 1 {
            return Err(Error::param("beam width must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.interpolation_mass) {
            return Err(Error::param(format!(
                "interpolation mass must be in [0, 1], got {}",
                self.interpolation_mass
            )));
        }
        if self.interpolation_mass > 0.0 && !self.strategy.is_sampling() {
            return Err(Error::param("interpolation applies to sampling strategies only"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::param("noise scale must be non-negative"));
        }
        Ok(())
    }

    /// Canonical strategy string (the CLI grammar).
    pub fn spec(&self) -> String {
        let t = |s: &mut String| {
            if self.temperature != 1.0 {
                s.push_str(&format!(",t={}", self.temperature));
            }
        };
        match self.strategy {
            Strategy::Greedy => "greedy".into(),
            Strategy::Beam => format!("beam:b={}", self.beam_width),
            Strategy::StochasticBeam => format!("sbeam:b={}", self.beam_width),
            Strategy::Sample if self.temperature != 1.0 => {
                format!("sample:t={}", self.temperature)
            }
            Strategy::Sample => "sample".into(),
            Strategy::TopK => {
                let mut s = format!("topk:k={}", self.k);
                t(&mut s);
                s
            }
            Strategy::Nucleus => {
                let mut s = format!("nucleus:p={}", self.p);
                t(&mut s);
                s
            }
        }
    }
}

impl fmt::Display for DecoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec())
    }
}

/// Parses `greedy | beam:b=<int> | sbeam:b=<int> | sample | sample:t=<float> |
/// topk:k=<int>[,t=<float>] | nucleus:p=<float>[,t=<float>]`.
impl FromStr for DecoderConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidStrategy(s.to_string());
        let s_trim = s.trim();
        let (name, params) = match s_trim.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s_trim, None),
        };
        let mut kv: Vec<(&str, &str)> = Vec::new();
        if let Some(p) = params {
            for part in p.split(',') {
                let (k, v) = part.split_once('=').ok_or_else(bad)?;
                if kv.iter().any(|(seen, _)| *seen == k.trim()) {
                    return Err(bad());
                }
                kv.push((k.trim(), v.trim()));
            }
            if kv.is_empty() {
                return Err(bad());
            }
        }
        let (mut cfg, required, optional): (Self, &str, &[&str]) = match name {
            "greedy" => (Self::greedy(), "", &[]),
            "beam" => (Self::beam(1), "b", &[]),
            "sbeam" => (Self::stochastic_beam(1), "b", &[]),
            "sample" => (Self::sample(), "", &["t"]),
            "topk" => (Self::top_k(1), "k", &["t"]),
            "nucleus" => (Self::nucleus(1.0), "p", &["t"]),
            _ => return Err(bad()),
        };
        if !required.is_empty() && !kv.iter().any(|(k, _)| *k == required) {
            return Err(bad());
        }
        for (k, v) in kv {
            if k != required && !optional.contains(&k) {
                return Err(bad());
            }
            match k {
                "b" => cfg.beam_width = v.parse().map_err(|_| bad())?,
                "k" => cfg.k = v.parse().map_err(|_| bad())?,
                "p" => cfg.p = v.parse().map_err(|_| bad())?,
                "t" => cfg.temperature = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        // vocabulary-dependent bounds are checked again at generation time
        cfg.validate(usize::MAX).map_err(|_| bad())?;
        Ok(cfg)
    }
}

//! Binary model format (`.ntdm`). All integers and floats little-endian.
//!
//! ```text
//! "NTDM"                      magic, 4 bytes
//! u8   version                currently 1
//! u32  order
//! f64  lower-order weight
//! f64  floor mass
//! u8   Witten-Bell weights (0/1)
//! u32  min count
//! u8   append </s> (0/1)
//! u8   tokenizer mode (0 = word, 1 = char)
//! u8   lowercase (0/1)
//! u32  |V|, u32 bod id, u32 eod id, u32 unk id
//! |V| × (u32 byte length, UTF-8 bytes)           token strings in id order
//! u64  unigram total
//! |V| × u64                                      unigram counts in id order
//! for k in 2..=order:
//!   u64 history count
//!   per history, sorted lexicographically by ids:
//!     (k-1) × u32 history ids
//!     u64 total, u32 follower count
//!     follower count × (u32 id, u64 count)       sorted by id
//! ```
//!
//! Writing is canonical, so `save(load(save(m)))` reproduces the same bytes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ngram::{Followers, HistoryTable, NgramModel, SmoothingConfig, TrainConfig};
use super::vocab::{Tokenizer, TokenizerMode, Vocabulary};
use super::TokenId;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NTDM";
const VERSION: u8 = 1;

impl NgramModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::at_path(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::at_path(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        put_u32(w, c.order as u32)?;
        w.write_all(&c.smoothing.lower_order_weight.to_le_bytes())?;
        w.write_all(&c.smoothing.floor_mass.to_le_bytes())?;
        w.write_all(&[c.smoothing.witten_bell as u8])?;
        put_u32(w, c.min_count)?;
        let mode = match c.tokenizer.mode {
            TokenizerMode::Word => 0u8,
            TokenizerMode::Char => 1u8,
        };
        w.write_all(&[c.append_eod as u8, mode, c.tokenizer.lowercase as u8])?;

        let v = &self.vocab;
        put_u32(w, v.len() as u32)?;
        put_u32(w, v.bod())?;
        put_u32(w, v.eod())?;
        put_u32(w, v.unk())?;
        for t in v.tokens() {
            put_u32(w, t.len() as u32)?;
            w.write_all(t.as_bytes())?;
        }
        put_u64(w, self.unigram_total)?;
        for &cnt in &self.unigram_counts {
            put_u64(w, cnt)?;
        }
        for table in &self.tables {
            let mut keys: Vec<&Box<[TokenId]>> = table.keys().collect();
            keys.sort_unstable();
            put_u64(w, keys.len() as u64)?;
            for key in keys {
                for &id in key.iter() {
                    put_u32(w, id)?;
                }
                let f = &table[key];
                put_u64(w, f.total)?;
                put_u32(w, f.next.len() as u32)?;
                for &(id, cnt) in &f.next {
                    put_u32(w, id)?;
                    put_u64(w, cnt)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(bad("missing NTDM magic"));
        }
        let version = get_u8(r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let order = get_u32(r)? as usize;
        if order < 1 {
            return Err(bad("order must be at least 1"));
        }
        let lower_order_weight = get_f64(r)?;
        let floor_mass = get_f64(r)?;
        let witten_bell = get_u8(r)? != 0;
        let min_count = get_u32(r)?;
        let append_eod = get_u8(r)? != 0;
        let mode = match get_u8(r)? {
            0 => TokenizerMode::Word,
            1 => TokenizerMode::Char,
            m => return Err(bad(format!("unknown tokenizer mode {m}"))),
        };
        let lowercase = get_u8(r)? != 0;
        let smoothing = SmoothingConfig {
            lower_order_weight,
            floor_mass,
            witten_bell,
        };
        smoothing.validate().map_err(|e| bad(e.to_string()))?;

        let n = get_u32(r)? as usize;
        let (bod, eod, unk) = (get_u32(r)?, get_u32(r)?, get_u32(r)?);
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            let len = get_u32(r)? as usize;
            let mut buf = vec![0u8; len];
            read_exact(r, &mut buf)?;
            tokens.push(String::from_utf8(buf).map_err(|_| bad("token is not UTF-8"))?);
        }
        let vocab = Vocabulary::new(tokens, bod, eod, unk).map_err(|e| bad(e.to_string()))?;

        let unigram_total = get_u64(r)?;
        let mut unigram_counts = Vec::with_capacity(n);
        for _ in 0..n {
            unigram_counts.push(get_u64(r)?);
        }
        if unigram_total == 0 || unigram_counts.iter().sum::<u64>() != unigram_total {
            return Err(bad("unigram counts do not match their total"));
        }

        let mut tables = Vec::with_capacity(order - 1);
        for k in 2..=order {
            let count = get_u64(r)? as usize;
            let mut table: HistoryTable = HashMap::with_capacity(count);
            for _ in 0..count {
                let mut hist = Vec::with_capacity(k - 1);
                for _ in 0..k - 1 {
                    hist.push(checked_id(get_u32(r)?, n)?);
                }
                let total = get_u64(r)?;
                let m = get_u32(r)? as usize;
                let mut next = Vec::with_capacity(m);
                for _ in 0..m {
                    next.push((checked_id(get_u32(r)?, n)?, get_u64(r)?));
                }
                if total == 0 || next.iter().map(|&(_, c)| c).sum::<u64>() != total {
                    return Err(bad("follower counts do not match their total"));
                }
                table.insert(hist.into_boxed_slice(), Followers { total, next });
            }
            tables.push(table);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after model tables"));
        }

        let config = TrainConfig {
            order,
            smoothing,
            min_count,
            append_eod,
            tokenizer: Tokenizer::new(mode, lowercase),
        };
        Ok(NgramModel::from_parts(config, vocab, unigram_counts, unigram_total, tables))
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::MalformedModel(msg.into())
}

fn checked_id(id: u32, n: usize) -> Result<TokenId> {
    if (id as usize) < n {
        Ok(id)
    } else {
        Err(bad(format!("token id {id} outside vocabulary of {n}")))
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => bad("unexpected end of file"),
        _ => Error::Io(e),
    })
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

//! `BQE1` model files.
//!
//! ```text
//! "BQE1" | version u8 | 6 × u64 config
//! | per vocabulary (source, mt): u64 max_size, u64 words, words as u32 len + utf-8
//! | u64 array count | per array: u64 length, little-endian f64 values
//! ```

use std::fs;
use std::path::Path;

use super::params::{array_specs, ModelConfig, ModelParams};
use super::Student;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"BQE1";
const VERSION: u8 = 1;

pub fn to_bytes(student: &Student) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let c = student.config();
    for v in [
        c.source_vocab_size,
        c.mt_vocab_size,
        c.embedding_dim,
        c.hidden_dim,
        c.max_len,
        c.attention_dim,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for vocab in [&student.source_vocab, &student.mt_vocab] {
        out.extend_from_slice(&(vocab.max_size() as u64).to_le_bytes());
        out.extend_from_slice(&(vocab.words().len() as u64).to_le_bytes());
        for w in vocab.words() {
            out.extend_from_slice(&(w.len() as u32).to_le_bytes());
            out.extend_from_slice(w.as_bytes());
        }
    }
    let tensors = student.params.tensors();
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.offset.checked_add(n) {
            Some(end) if end <= self.bytes.len() => {
                let s = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(s)
            }
            _ => Err(self.error(format!("truncated while reading {what}"))),
        }
    }

    fn error(&self, msg: String) -> Error {
        Error::Format {
            offset: self.offset,
            msg,
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.offset;
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::Format {
            offset: at,
            msg: format!("{what} {v} does not fit in memory"),
        })
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Student> {
    let mut r = Reader { bytes, offset: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a BQE1 model file".into(),
        });
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let config_at = r.offset;
    let config = ModelConfig {
        source_vocab_size: r.usize("config")?,
        mt_vocab_size: r.usize("config")?,
        embedding_dim: r.usize("config")?,
        hidden_dim: r.usize("config")?,
        max_len: r.usize("config")?,
        attention_dim: r.usize("config")?,
    };
    config.validate().map_err(|e| Error::Format {
        offset: config_at,
        msg: e.to_string(),
    })?;

    let mut vocabs = Vec::with_capacity(2);
    for name in ["source vocabulary", "mt vocabulary"] {
        let at = r.offset;
        let max_size = r.usize(name)?;
        let count = r.usize(name)?;
        // each word needs at least its 4-byte length
        if count > (bytes.len() - r.offset) / 4 {
            return Err(r.error(format!("{name} claims {count} words")));
        }
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32(name)? as usize;
            let word_at = r.offset;
            let raw = r.take(len, name)?;
            let word = std::str::from_utf8(raw).map_err(|_| Error::Format {
                offset: word_at,
                msg: format!("{name} entry is not valid utf-8"),
            })?;
            words.push(word.to_string());
        }
        vocabs.push(Vocabulary::from_words(words, max_size).map_err(|e| Error::Format {
            offset: at,
            msg: e.to_string(),
        })?);
    }
    let mt_vocab = vocabs.pop().unwrap();
    let source_vocab = vocabs.pop().unwrap();

    let specs = array_specs(&config);
    let count_at = r.offset;
    let count = r.usize("array count")?;
    if count != specs.len() {
        return Err(Error::Format {
            offset: count_at,
            msg: format!("expected {} arrays, found {count}", specs.len()),
        });
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape, _) in specs {
        let at = r.offset;
        let len = r.usize(&name)?;
        let expected: usize = shape.iter().product();
        if len != expected {
            return Err(Error::Format {
                offset: at,
                msg: format!("{name}: expected {expected} values, found {len}"),
            });
        }
        let raw = r.take(len.saturating_mul(8), &name)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.offset != bytes.len() {
        return Err(r.error(format!("{} trailing bytes", bytes.len() - r.offset)));
    }
    let params = ModelParams::from_tensors(&config, tensors)?;
    Student::new(params, source_vocab, mt_vocab).map_err(|e| Error::Format {
        offset: config_at,
        msg: e.to_string(),
    })
}

pub fn save_model(student: &Student, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(student))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Student> {
    from_bytes(&fs::read(path)?)
}

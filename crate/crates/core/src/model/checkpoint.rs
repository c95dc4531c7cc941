//! Binary checkpoint format, all integers little-endian `u32`:
//!
//! ```text
//! magic "ASREADER" (8 bytes) | version | E | H | vocab size
//! entity block start | entity block end
//! vocab size × (byte length, UTF-8 token)
//! tensor count × (name length, name, rank, dims..., f32 LE values)
//! ```
//!
//! Values are stored as 32-bit floats; saving `f32` parameters and loading
//! them back is bit-exact.

use std::io::{Read, Write};

use crate::data::Vocabulary;
use crate::ndmath::{Real, Tensor};

use super::params::{Dims, ModelParams};

pub const MAGIC: &[u8; 8] = b"ASREADER";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

fn put(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_len(w: &mut impl Write, v: usize) -> Result<(), CheckpointError> {
    let v = u32::try_from(v)
        .map_err(|_| CheckpointError::Corrupt(format!("{v} does not fit in u32")))?;
    Ok(put(w, v)?)
}

fn get(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_string(r: &mut impl Read) -> Result<String, CheckpointError> {
    let len = get(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| CheckpointError::Corrupt(e.to_string()))
}

pub fn save_checkpoint<T: Real, W: Write>(
    mut w: W,
    params: &ModelParams<T>,
    vocab: &Vocabulary,
) -> Result<(), CheckpointError> {
    if vocab.len() != params.dims.vocab {
        return Err(CheckpointError::Corrupt(format!(
            "vocabulary has {} tokens but the embedding has {} rows",
            vocab.len(),
            params.dims.vocab
        )));
    }
    w.write_all(MAGIC)?;
    put(&mut w, FORMAT_VERSION)?;
    put_len(&mut w, params.dims.embed)?;
    put_len(&mut w, params.dims.hidden)?;
    put_len(&mut w, vocab.len())?;
    let ents = vocab.entity_range();
    put(&mut w, ents.start)?;
    put(&mut w, ents.end)?;
    for tok in vocab.tokens() {
        put_len(&mut w, tok.len())?;
        w.write_all(tok.as_bytes())?;
    }
    let named = params.named_tensors();
    put_len(&mut w, named.len())?;
    for (name, t) in named {
        put_len(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_len(&mut w, t.shape().len())?;
        for &d in t.shape() {
            put_len(&mut w, d)?;
        }
        let mut buf = Vec::with_capacity(4 * t.numel());
        for x in t.data() {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Real, R: Read>(
    mut r: R,
) -> Result<(ModelParams<T>, Vocabulary), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = get(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let embed = get(&mut r)? as usize;
    let hidden = get(&mut r)? as usize;
    let vocab_size = get(&mut r)? as usize;
    let ents = get(&mut r)?..get(&mut r)?;
    let tokens = (0..vocab_size)
        .map(|_| get_string(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    let vocab = Vocabulary::from_tokens(tokens, ents)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let dims = Dims::new(vocab_size, embed, hidden)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let count = get(&mut r)? as usize;
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        let name = get_string(&mut r)?;
        let rank = get(&mut r)? as usize;
        if rank == 0 || rank > 4 {
            return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| get(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; 4 * numel];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Corrupt(format!("{name}: {e}")))?;
        named.push((name, t));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }
    let params = ModelParams::from_named(dims, named)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    Ok((params, vocab))
}

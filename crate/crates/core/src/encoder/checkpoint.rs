//! Binary checkpoint: a text header line, a JSON line echoing the encoder
//! configuration and vocabulary hash, then named tensors, each as
//! `u32 name length | name | u32 rank | u64 dims… | f64 payload`, all
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "mpcite-ckpt v1";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    vocab_hash: String,
    tensor_count: usize,
    meta: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub vocab_hash: String,
    /// Free-form metadata (training config echo, final metrics).
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_exact<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| corrupt(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(
        read_exact(r, 4)?.try_into().expect("4 bytes"),
    ))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(
        read_exact(r, 8)?.try_into().expect("8 bytes"),
    ))
}

fn read_line<R: Read>(r: &mut R) -> Result<String> {
    let mut bytes = Vec::new();
    let mut b = [0u8; 1];
    loop {
        r.read_exact(&mut b)
            .map_err(|e| corrupt(format!("truncated header: {e}")))?;
        if b[0] == b'\n' {
            break;
        }
        bytes.push(b[0]);
    }
    String::from_utf8(bytes).map_err(|e| corrupt(e.to_string()))
}

impl Checkpoint {
    pub fn new(config: EncoderConfig, vocab_hash: String, meta: serde_json::Value) -> Self {
        Checkpoint {
            config,
            vocab_hash,
            meta,
            tensors: Vec::new(),
        }
    }

    /// Appends every tensor of `params` under `prefix/`.
    pub fn push_params(&mut self, prefix: &str, params: &EncoderParams) {
        for (name, t) in params.named_tensors() {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}/{name}"),
                shape: t.shape().to_vec(),
                data: t.iter().copied().collect(),
            });
        }
    }

    /// Rebuilds the parameter set stored under `prefix/`, validating every
    /// shape against the configuration.
    pub fn params(&self, prefix: &str) -> Result<EncoderParams> {
        self.config.validate()?;
        let find = |name: &str| -> Result<&NamedTensor> {
            let full = format!("{prefix}/{name}");
            self.tensors
                .iter()
                .find(|t| t.name == full)
                .ok_or_else(|| corrupt(format!("missing tensor {full}")))
        };
        let embedding = find("token_embedding")?;
        if embedding.shape.len() != 2 || embedding.shape[1] != self.config.hidden {
            return Err(corrupt(format!(
                "token_embedding shape {:?} does not match hidden size {}",
                embedding.shape, self.config.hidden
            )));
        }
        let mut params =
            EncoderParams::random(&self.config, embedding.shape[0], &mut crate::rng::seeded(0))?;
        let names: Vec<(String, Vec<usize>)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for ((name, shape), mut target) in names.into_iter().zip(params.tensors_mut()) {
            let stored = find(&name)?;
            if stored.shape != shape {
                return Err(corrupt(format!(
                    "tensor {prefix}/{name}: stored shape {:?}, configuration expects {shape:?}",
                    stored.shape
                )));
            }
            target
                .as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(&stored.data);
        }
        Ok(params)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            tensor_count: self.tensors.len(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_string(&header).map_err(|e| corrupt(e.to_string()))?;
        let io = |e: std::io::Error| corrupt(e.to_string());
        writeln!(out, "{CHECKPOINT_MAGIC}").map_err(io)?;
        writeln!(out, "{json}").map_err(io)?;
        for t in &self.tensors {
            out.write_all(&(t.name.len() as u32).to_le_bytes())
                .map_err(io)?;
            out.write_all(t.name.as_bytes()).map_err(io)?;
            out.write_all(&(t.shape.len() as u32).to_le_bytes())
                .map_err(io)?;
            for &d in &t.shape {
                out.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
            for v in &t.data {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let magic = read_line(&mut input)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(corrupt(format!(
                "bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
            )));
        }
        let header: Header = serde_json::from_str(&read_line(&mut input)?)
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let mut tensors = Vec::with_capacity(header.tensor_count);
        for _ in 0..header.tensor_count {
            let name_len = read_u32(&mut input)? as usize;
            let name = String::from_utf8(read_exact(&mut input, name_len)?)
                .map_err(|e| corrupt(e.to_string()))?;
            let rank = read_u32(&mut input)? as usize;
            let shape = (0..rank)
                .map(|_| read_u64(&mut input).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = read_exact(&mut input, len * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(|e| corrupt(e.to_string()))? != 0 {
            return Err(corrupt("trailing bytes after last tensor"));
        }
        Ok(Checkpoint {
            config: header.config,
            vocab_hash: header.vocab_hash,
            meta: header.meta,
            tensors,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

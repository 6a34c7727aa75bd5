//! Single-file checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"PLRCKPT1"
//! u32 manifest length, manifest bytes (UTF-8 key=value lines)
//! u32 tensor count
//! per tensor: u16 name length, name, u8 rank, rank × u64 dims, f32 data
//! ```
//!
//! Tensors are stored in name order so equal parameter sets serialize to
//! equal bytes. Files are named `<role>_<step>.ckpt`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PLRCKPT1";
const MAX_RANK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Classifier,
    Generator,
    Discriminator,
    Oracle,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Classifier => "classifier",
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
            Role::Oracle => "oracle",
        }
    }

    pub fn file_name(self, step: u64) -> String {
        format!("{}_{step}.ckpt", self.as_str())
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier" => Ok(Role::Classifier),
            "generator" => Ok(Role::Generator),
            "discriminator" => Ok(Role::Discriminator),
            "oracle" => Ok(Role::Oracle),
            other => Err(Error::invalid(format!("unknown checkpoint role {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub role: Role,
    pub step: u64,
    pub config_hash: String,
    pub architecture: String,
    /// Free-form extra fields (class count, channels, latent size, ...).
    pub extra: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(role: Role, step: u64, config_hash: impl Into<String>, architecture: impl Into<String>) -> Self {
        Self {
            role,
            step,
            config_hash: config_hash.into(),
            architecture: architecture.into(),
            extra: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.extra
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format("checkpoint", format!("manifest lacks integer {key}")))
    }

    /// Identifier used as pseudo-label provenance.
    pub fn id(&self) -> String {
        format!("{}_{}@{}", self.role, self.step, self.config_hash)
    }

    fn encode(&self) -> String {
        let mut out = format!(
            "role={}\nstep={}\nconfig_hash={}\narchitecture={}\n",
            self.role, self.step, self.config_hash, self.architecture
        );
        for (k, v) in &self.extra {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    fn decode(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("checkpoint", format!("bad manifest line {line:?}")))?;
            if k.is_empty() || fields.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::format("checkpoint", format!("bad manifest key {k:?}")));
            }
        }
        let mut take = |k: &str| {
            fields
                .remove(k)
                .ok_or_else(|| Error::format("checkpoint", format!("manifest lacks {k}")))
        };
        let role = take("role")?.parse()?;
        let step = take("step")?
            .parse()
            .map_err(|_| Error::format("checkpoint", "manifest step is not an integer"))?;
        let config_hash = take("config_hash")?;
        let architecture = take("architecture")?;
        Ok(Self {
            role,
            step,
            config_hash,
            architecture,
            extra: fields,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<TensorRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("checkpoint", "unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(manifest: Manifest, mut tensors: Vec<TensorRecord>) -> Self {
        tensors.sort_by(|a, b| a.name.cmp(&b.name));
        Self { manifest, tensors }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors
            .binary_search_by(|t| t.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.tensors[i])
    }

    pub fn encode(&self) -> Vec<u8> {
        let manifest = self.manifest.encode();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let mlen = r.u32()? as usize;
        let manifest = std::str::from_utf8(r.take(mlen)?)
            .map_err(|_| Error::format("checkpoint", "manifest is not UTF-8"))?;
        let text = manifest;
        let manifest = Manifest::decode(text)?;
        // one byte sequence per checkpoint: reject reordered or reformatted manifests
        if manifest.encode() != text {
            return Err(Error::format("checkpoint", "manifest is not in canonical form"));
        }
        let count = r.u32()? as usize;
        let mut tensors: Vec<TensorRecord> = Vec::new();
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?
                .to_string();
            if let Some(prev) = tensors.last() {
                if prev.name >= name {
                    return Err(Error::format("checkpoint", "tensor names out of order"));
                }
            }
            let rank = r.u8()? as usize;
            if rank > MAX_RANK {
                return Err(Error::format("checkpoint", format!("rank {rank} too large")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut numel: usize = 1;
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?)
                    .map_err(|_| Error::format("checkpoint", "dimension too large"))?;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| Error::format("checkpoint", "tensor size overflows"))?;
                shape.push(d);
            }
            let nbytes = numel
                .checked_mul(4)
                .ok_or_else(|| Error::format("checkpoint", "tensor size overflows"))?;
            let raw = r.take(nbytes)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(TensorRecord { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes after last tensor"));
        }
        Ok(Self { manifest, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile {
                path: path.to_path_buf(),
                hint: "checkpoint not found".into(),
            });
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        Checkpoint::new(
            Manifest::new(Role::Generator, 42, "00ff00ff00ff00ff", "fc-conv").with("classes", 10),
            vec![
                TensorRecord { name: "w".into(), shape: vec![2, 2], data: vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5] },
                TensorRecord { name: "b".into(), shape: vec![2], data: vec![0.25, -7.0] },
                TensorRecord { name: "s".into(), shape: vec![], data: vec![9.0] },
            ],
        )
    }

    #[test]
    fn encode_decode_is_bit_exact() {
        let ck = sample();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.manifest.get_usize("classes").unwrap(), 10);
        assert_eq!(back.tensor("b").unwrap().data, vec![0.25, -7.0]);
        assert_eq!(back.tensors[0].name, "b");
        assert_eq!(back.manifest.id(), "generator_42@00ff00ff00ff00ff");
        assert_eq!(Role::Oracle.file_name(3), "oracle_3.ckpt");
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::decode(&magic).is_err());
        assert!(Checkpoint::decode(b"PLRCKPT1\xff\xff\xff\xff").is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_payload_round_trips(
            data in proptest::collection::vec(any::<u32>(), 0..64),
            step in any::<u64>(),
        ) {
            let floats: Vec<f32> = data.iter().map(|&b| f32::from_bits(b)).collect();
            let ck = Checkpoint::new(
                Manifest::new(Role::Classifier, step, "h", "a"),
                vec![TensorRecord { name: "p".into(), shape: vec![floats.len()], data: floats }],
            );
            let bytes = ck.encode();
            prop_assert_eq!(Checkpoint::decode(&bytes).unwrap().encode(), bytes);
        }
    }
}

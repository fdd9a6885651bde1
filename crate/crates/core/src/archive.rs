//! Single-file model and lookup-table archives.
//!
//! Layout: an 8-byte little-endian manifest length `n`, `n` bytes of JSON
//! manifest, then the blob. Tensors are row-major little-endian floats at
//! byte offsets relative to the blob start, packed in manifest order.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decode::LookupTable;
use crate::decoder::{DecoderConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::training::ToyEncoder;

pub const FORMAT_VERSION: u32 = 1;

/// Features this build can read when an archive lists them under `requires`.
pub const SUPPORTED_FEATURES: &[&str] = &[];

/// Float width of the blob. Computation is always 64-bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchiveKind {
    Model,
    Lookup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// Byte offset into the blob.
    pub offset: u64,
    pub rows: usize,
    pub cols: usize,
    pub dtype: Dtype,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupInfo {
    pub history: usize,
    pub num_ids: usize,
}

/// The JSON header of an archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: ArchiveKind,
    pub dtype: Dtype,
    pub config: DecoderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookup: Option<LookupInfo>,
    pub tensors: Vec<TensorEntry>,
    /// Tensor names stored as views of another tensor.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// Features a reader must understand to load the archive.
    #[serde(default)]
    pub requires: Vec<String>,
    /// Unrecognized optional fields, kept for re-saving.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// A decoder, optionally with its toy encoder, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArchive {
    pub config: DecoderConfig,
    pub weights: ModelWeights,
    pub encoder: Option<ToyEncoder>,
    pub seed: Option<u64>,
    /// Unrecognized optional manifest fields from a loaded archive.
    pub extra: BTreeMap<String, Value>,
}

fn write_archive(manifest: &Manifest, tensors: &[&Matrix]) -> Vec<u8> {
    let json = serde_json::to_vec(manifest).expect("manifest serializes");
    let blob_len: usize = tensors.iter().map(|m| m.len() * manifest.dtype.size()).sum();
    let mut out = Vec::with_capacity(8 + json.len() + blob_len);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for m in tensors {
        for &v in m.data() {
            match manifest.dtype {
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
    }
    out
}

fn directory(named: &[(String, &Matrix)], dtype: Dtype) -> Vec<TensorEntry> {
    let mut offset = 0u64;
    named
        .iter()
        .map(|(name, m)| {
            let e = TensorEntry { name: name.clone(), offset, rows: m.rows(), cols: m.cols(), dtype };
            offset += (m.len() * dtype.size()) as u64;
            e
        })
        .collect()
}

/// Splits raw bytes into a manifest and the blob, checking version and
/// required features before interpreting anything else.
pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Corrupt(format!("file of {} bytes has no length prefix", bytes.len())))?;
    let len = u64::from_le_bytes(len_bytes);
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(8))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Corrupt(format!("manifest length {len} exceeds file size {}", bytes.len())))?;
    let value: Value =
        serde_json::from_slice(&bytes[8..end]).map_err(|e| Error::Corrupt(format!("manifest is not JSON: {e}")))?;
    match value.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::UnsupportedFormat(format!(
                "format_version {v}; this build reads version {FORMAT_VERSION}"
            )))
        }
        None => return Err(Error::UnsupportedFormat("manifest has no numeric format_version".into())),
    }
    if let Some(reqs) = value.get("requires").and_then(Value::as_array) {
        for r in reqs {
            let name = r.as_str().unwrap_or("<non-string>");
            if !SUPPORTED_FEATURES.contains(&name) {
                return Err(Error::UnsupportedFormat(format!("archive requires unknown feature `{name}`")));
            }
        }
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| Error::Validation(format!("manifest: {e}")))?;
    manifest.config.validate().map_err(|e| Error::Validation(e.to_string()))?;
    Ok((manifest, &bytes[end..]))
}

/// Reads every tensor of the directory, checking that each lies inside the
/// blob and that the blob has no trailing bytes.
fn read_tensors(manifest: &Manifest, blob: &[u8]) -> Result<BTreeMap<String, Matrix>> {
    let mut out = BTreeMap::new();
    let mut used = 0usize;
    for e in &manifest.tensors {
        if e.dtype != manifest.dtype {
            return Err(Error::Validation(format!("tensor `{}` dtype differs from archive dtype", e.name)));
        }
        let size = e.dtype.size();
        let bytes = e.rows.checked_mul(e.cols).and_then(|n| n.checked_mul(size));
        let start = usize::try_from(e.offset).ok();
        let range = match (start, bytes) {
            (Some(s), Some(b)) => s.checked_add(b).map(|end| s..end),
            _ => None,
        };
        let range = range
            .filter(|r| r.end <= blob.len())
            .ok_or_else(|| Error::Corrupt(format!("tensor `{}` extends past the end of the blob", e.name)))?;
        used += range.len();
        let data: Vec<f64> = blob[range]
            .chunks_exact(size)
            .map(|c| match e.dtype {
                Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
                Dtype::F32 => f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))),
            })
            .collect();
        if out.insert(e.name.clone(), Matrix::from_vec(e.rows, e.cols, data)?).is_some() {
            return Err(Error::Validation(format!("tensor `{}` listed twice", e.name)));
        }
    }
    if used != blob.len() {
        return Err(Error::Corrupt(format!("blob has {} bytes, tensors cover {used}", blob.len())));
    }
    Ok(out)
}

impl ModelArchive {
    pub fn new(config: DecoderConfig, weights: ModelWeights) -> Result<Self> {
        weights.validate(&config)?;
        Ok(Self { config, weights, encoder: None, seed: None, extra: BTreeMap::new() })
    }

    pub fn manifest(&self, dtype: Dtype) -> Manifest {
        let named = self.named_tensors();
        let mut aliases = BTreeMap::new();
        if self.weights.is_tied() {
            aliases.insert("out.tokens".to_string(), "embedding".to_string());
        }
        Manifest {
            format_version: FORMAT_VERSION,
            kind: ArchiveKind::Model,
            dtype,
            config: self.config.clone(),
            seed: self.seed,
            lookup: None,
            tensors: directory(&named, dtype),
            aliases,
            requires: Vec::new(),
            extra: self.extra.clone(),
        }
    }

    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut named = self.weights.tensors();
        if let Some(enc) = &self.encoder {
            named.push(("encoder.weight".into(), &enc.weight));
            named.push(("encoder.bias".into(), &enc.bias));
        }
        named
    }

    pub fn to_bytes(&self, dtype: Dtype) -> Vec<u8> {
        let named = self.named_tensors();
        let tensors: Vec<&Matrix> = named.iter().map(|(_, m)| *m).collect();
        write_archive(&self.manifest(dtype), &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (manifest, blob) = read_manifest(bytes)?;
        if manifest.kind != ArchiveKind::Model {
            return Err(Error::Validation("archive holds a lookup table, not a model".into()));
        }
        let cfg = manifest.config.clone();
        let expected_aliases: BTreeMap<String, String> = if cfg.tied {
            [("out.tokens".to_string(), "embedding".to_string())].into()
        } else {
            BTreeMap::new()
        };
        if manifest.aliases != expected_aliases {
            return Err(Error::Validation(format!(
                "aliases {:?} do not match tied = {}",
                manifest.aliases, cfg.tied
            )));
        }
        let mut tensors = read_tensors(&manifest, blob)?;
        let encoder = match (tensors.remove("encoder.weight"), tensors.remove("encoder.bias")) {
            (Some(weight), Some(bias)) => {
                if weight.cols() != cfg.encoder_dim || bias.rows() != 1 || bias.cols() != cfg.encoder_dim {
                    return Err(Error::Validation("encoder tensors do not match encoder_dim".into()));
                }
                Some(ToyEncoder { weight, bias })
            }
            (None, None) => None,
            _ => return Err(Error::Validation("encoder needs both encoder.weight and encoder.bias".into())),
        };
        let weights = ModelWeights::from_tensors(&cfg, tensors)?;
        weights.validate(&cfg).map_err(|e| match e {
            Error::Config(m) => Error::Validation(m),
            other => other,
        })?;
        Ok(Self { config: cfg, weights, encoder, seed: manifest.seed, extra: manifest.extra })
    }

    pub fn save(&self, path: &Path, dtype: Dtype) -> Result<()> {
        std::fs::write(path, self.to_bytes(dtype)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Serializes a lookup table together with the config it came from.
pub fn lookup_to_bytes(table: &LookupTable, config: &DecoderConfig, dtype: Dtype) -> Vec<u8> {
    let named = vec![("lookup".to_string(), table.table())];
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: ArchiveKind::Lookup,
        dtype,
        config: config.clone(),
        seed: None,
        lookup: Some(LookupInfo { history: table.history(), num_ids: table.num_ids() }),
        tensors: directory(&named, dtype),
        aliases: BTreeMap::new(),
        requires: Vec::new(),
        extra: BTreeMap::new(),
    };
    write_archive(&manifest, &[table.table()])
}

pub fn lookup_from_bytes(bytes: &[u8]) -> Result<(LookupTable, DecoderConfig)> {
    let (manifest, blob) = read_manifest(bytes)?;
    let info = match (manifest.kind, &manifest.lookup) {
        (ArchiveKind::Lookup, Some(info)) => info.clone(),
        _ => return Err(Error::Validation("archive does not hold a lookup table".into())),
    };
    let mut tensors = read_tensors(&manifest, blob)?;
    let table = tensors
        .remove("lookup")
        .ok_or_else(|| Error::Validation("lookup archive has no `lookup` tensor".into()))?;
    if !tensors.is_empty() || table.cols() != manifest.config.prediction_dim() {
        return Err(Error::Validation("lookup tensor does not match the config".into()));
    }
    Ok((LookupTable::from_parts(info.history, info.num_ids, table)?, manifest.config))
}

pub fn save_lookup(table: &LookupTable, config: &DecoderConfig, path: &Path, dtype: Dtype) -> Result<()> {
    std::fs::write(path, lookup_to_bytes(table, config, dtype)).map_err(|e| Error::io(path, e))
}

pub fn load_lookup(path: &Path) -> Result<(LookupTable, DecoderConfig)> {
    lookup_from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Number of blob bytes in an archive.
pub fn blob_len(bytes: &[u8]) -> Result<usize> {
    Ok(read_manifest(bytes)?.1.len())
}

//! Model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "MGTC" | u32 version = 1
//! u32 len | TOML header: unit, model config, skeleton document
//! u32 count | count × tensor      (trainable parameters)
//! u32 count | count × tensor      (input standardizer buffers)
//! tensor = u32 len | name | u32 rank | rank × u32 dim | f64 data
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::ModelError;
use crate::model::{MgtNet, ModelConfig};
use crate::skeleton::SkeletonGraph;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MGTC";
pub const VERSION: u32 = 1;

const STD_MEAN: &str = "standardizer.mean";
const STD_STD: &str = "standardizer.std";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    unit: String,
    skeleton: String,
    model: ModelConfig,
}

/// A trained network with everything needed to evaluate it on new data.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: MgtNet,
    pub unit: String,
    pub standardizer: Option<Standardizer>,
}

fn err(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| err(format!("unexpected end of file reading {what} at byte offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String, ModelError> {
        let len = self.u32(what)?;
        let offset = self.pos;
        String::from_utf8(self.take(len, what)?.to_vec())
            .map_err(|_| err(format!("invalid UTF-8 in {what} at byte offset {offset}")))
    }

    fn tensor(&mut self) -> Result<(String, Tensor), ModelError> {
        let name = self.string("tensor name")?;
        let rank = self.u32("tensor rank")?;
        if rank > 8 {
            return Err(err(format!("tensor `{name}` has implausible rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32("tensor shape")).collect::<Result<Vec<_>, _>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel
            .filter(|&n| n.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| err(format!("tensor `{name}` shape {shape:?} exceeds the file size")))?;
        let raw = self.take(numel * 8, "tensor data")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(err(format!("tensor `{name}` contains non-finite values")));
        }
        let t = Tensor::new(&shape, data).map_err(|e| err(format!("tensor `{name}`: {e}")))?;
        Ok((name, t))
    }
}

impl Checkpoint {
    pub fn new(net: MgtNet, unit: impl Into<String>, standardizer: Option<Standardizer>) -> Self {
        Self {
            net,
            unit: unit.into(),
            standardizer,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            unit: self.unit.clone(),
            skeleton: self.net.skeleton().to_toml_string(),
            model: self.net.config().clone(),
        };
        let text = toml::to_string(&header).expect("header serializes");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, text.len());
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.net.params().len());
        for (name, t) in self.net.params().iter() {
            put_tensor(&mut out, name, t);
        }
        match &self.standardizer {
            Some(s) => {
                put_u32(&mut out, 2);
                let n = s.mean.len();
                put_tensor(&mut out, STD_MEAN, &Tensor::new(&[n], s.mean.clone()).expect("vector"));
                put_tensor(&mut out, STD_STD, &Tensor::new(&[n], s.std.clone()).expect("vector"));
            }
            None => put_u32(&mut out, 0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(err("not a checkpoint (bad magic bytes)"));
        }
        let version = r.u32("version")?;
        if version as u32 != VERSION {
            return Err(err(format!("unsupported checkpoint version {version}")));
        }
        let text = r.string("config block")?;
        let header: Header = toml::from_str(&text).map_err(|e| err(format!("config block: {e}")))?;
        let skeleton = SkeletonGraph::from_toml_str(&header.skeleton)?;
        let mut net = MgtNet::new(header.model, &skeleton, 0)?;

        let count = r.u32("parameter count")?;
        let mut seen = HashSet::new();
        for _ in 0..count {
            let (name, t) = r.tensor()?;
            let id = net
                .params()
                .find(&name)
                .ok_or_else(|| err(format!("unknown parameter `{name}`")))?;
            if !seen.insert(id) {
                return Err(err(format!("parameter `{name}` appears twice")));
            }
            let slot = net.params_mut().get_mut(id);
            if slot.shape() != t.shape() {
                return Err(err(format!(
                    "parameter `{name}` has shape {:?}, the config requires {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            slot.data_mut().copy_from_slice(t.data());
        }
        if let Some(missing) = net.params().ids().find(|id| !seen.contains(id)) {
            return Err(err(format!("missing parameter `{}`", net.params().name(missing))));
        }

        let buffers = r.u32("buffer count")?;
        let mut mean = None;
        let mut std = None;
        for _ in 0..buffers {
            let (name, t) = r.tensor()?;
            if t.shape() != [2 * net.config().joints] {
                return Err(err(format!("buffer `{name}` has shape {:?}", t.shape())));
            }
            match name.as_str() {
                STD_MEAN => mean = Some(t.into_data()),
                STD_STD => std = Some(t.into_data()),
                _ => return Err(err(format!("unknown buffer `{name}`"))),
            }
        }
        let standardizer = match (mean, std) {
            (Some(mean), Some(std)) => Some(Standardizer { mean, std }),
            (None, None) => None,
            _ => return Err(err("standardizer buffers are incomplete")),
        };
        if r.pos != bytes.len() {
            return Err(err(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            net,
            unit: header.unit,
            standardizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Standardizes (if configured) and predicts one raw input sequence.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor, ModelError> {
        match &self.standardizer {
            Some(s) => {
                let z = s
                    .apply_input(input)
                    .map_err(|e| ModelError::Config(e.to_string()))?;
                self.net.predict(&z)
            }
            None => self.net.predict(input),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SynthConfig};

    fn sample_checkpoint() -> Checkpoint {
        let g = SkeletonGraph::human36m();
        let net = MgtNet::new(ModelConfig::toy(), &g, 3).unwrap();
        let ds = synthesize(&g, &SynthConfig::default());
        Checkpoint::new(net, "m", Some(Standardizer::fit(&ds).unwrap()))
    }

    #[test]
    fn roundtrip_preserves_parameters_and_predictions() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        for ((a, x), (b, y)) in ck.net.params().iter().zip(back.net.params().iter()) {
            assert_eq!(a, b);
            assert_eq!(x.data(), y.data());
        }
        assert_eq!(back.standardizer, ck.standardizer);
        let s = synthesize(&SkeletonGraph::human36m(), &SynthConfig::default());
        let input = &s.samples()[0].input;
        assert_eq!(ck.predict(input).unwrap(), back.predict(input).unwrap());
    }

    #[test]
    fn rejects_unknown_and_missing_parameters() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes();
        let name = b"head.bias";
        let pos = bytes.windows(name.len()).position(|w| w == name).unwrap();
        let mut renamed = bytes.clone();
        renamed[pos..pos + 4].copy_from_slice(b"tail");
        let e = Checkpoint::from_bytes(&renamed).unwrap_err().to_string();
        assert!(e.contains("unknown parameter `tail.bias`"), "{e}");

        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}

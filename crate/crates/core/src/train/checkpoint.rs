//! `SEGCKPT1` container, little-endian throughout:
//!
//! ```text
//! magic[8] version:u32 config_len:u32 config_json
//! epoch:u64 has_best:u8 [best_epoch:u64 best_dice:f64]
//! n_params:u32 { name_len:u32 name dtype:u8 trainable:u8 rank:u32 dims:u32* data }*
//! step:u64 { m_len:u64 m v }*
//! ```

use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, SegModel};
use crate::nn::ParamStore;
use crate::tensor::{DType, Scalar};

use super::adam::AdamState;
use super::config::RunConfig;

pub const MAGIC: &[u8; 8] = b"SEGCKPT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub trainable: bool,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: usize,
    pub best: Option<BestRecord>,
    pub params: Vec<NamedTensor>,
    pub optimizer: AdamState<f32>,
}

impl Checkpoint {
    pub fn capture(
        config: &RunConfig,
        epoch: usize,
        best: Option<BestRecord>,
        store: &ParamStore<f32>,
        optimizer: &AdamState<f32>,
    ) -> Self {
        Self {
            config: config.clone(),
            epoch,
            best,
            params: store
                .iter()
                .map(|(_, p)| NamedTensor {
                    name: p.name.clone(),
                    trainable: p.trainable,
                    dims: p.tensor.dims().to_vec(),
                    data: p.tensor.data().to_vec(),
                })
                .collect(),
            optimizer: optimizer.clone(),
        }
    }

    /// Rebuilds the network from the stored config and loads every tensor.
    ///
    /// With `expected`, the stored architecture must equal it.
    pub fn restore_model(&self, expected: Option<&ModelConfig>) -> Result<SegModel<f32>> {
        let stored = &self.config.model;
        if let Some(want) = expected {
            if want != stored {
                return Err(Error::Config(format!(
                    "checkpoint architecture does not match the requested one\ncheckpoint: {}\nrequested: {}",
                    serde_json::to_string(stored).expect("serializes"),
                    serde_json::to_string(want).expect("serializes"),
                )));
            }
        }
        let mut model = SegModel::<f32>::new(stored, 0)?;
        if model.params.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} tensors but its architecture defines {}",
                self.params.len(),
                model.params.len()
            )));
        }
        for t in &self.params {
            model.params.assign(&t.name, &t.dims, t.data.clone())?;
        }
        Ok(model)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let w = &mut out;
        w.write_u32::<LittleEndian>(VERSION).unwrap();
        let json = serde_json::to_vec(&self.config).expect("run config serializes");
        w.write_u32::<LittleEndian>(json.len() as u32).unwrap();
        w.extend_from_slice(&json);
        w.write_u64::<LittleEndian>(self.epoch as u64).unwrap();
        match self.best {
            Some(b) => {
                w.write_u8(1).unwrap();
                w.write_u64::<LittleEndian>(b.epoch as u64).unwrap();
                w.write_f64::<LittleEndian>(b.dice).unwrap();
            }
            None => w.write_u8(0).unwrap(),
        }
        w.write_u32::<LittleEndian>(self.params.len() as u32).unwrap();
        for t in &self.params {
            w.write_u32::<LittleEndian>(t.name.len() as u32).unwrap();
            w.extend_from_slice(t.name.as_bytes());
            w.write_u8(f32::DTYPE.code()).unwrap();
            w.write_u8(t.trainable as u8).unwrap();
            w.write_u32::<LittleEndian>(t.dims.len() as u32).unwrap();
            for &d in &t.dims {
                w.write_u32::<LittleEndian>(d as u32).unwrap();
            }
            t.data.iter().for_each(|&v| v.write_le(w));
        }
        w.write_u64::<LittleEndian>(self.optimizer.step).unwrap();
        for (m, v) in self.optimizer.m.iter().zip(&self.optimizer.v) {
            w.write_u64::<LittleEndian>(m.len() as u64).unwrap();
            m.iter().chain(v).for_each(|&x| x.write_le(w));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Decoder {
            cur: Cursor::new(bytes),
        };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic, expected SEGCKPT1"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(8, format!("unsupported checkpoint version {version}")));
        }
        let len = r.u32("config length")? as usize;
        let at = r.pos();
        let config: RunConfig = serde_json::from_slice(r.take(len, "config")?)
            .map_err(|e| Error::format(at, format!("config document: {e}")))?;
        let epoch = r.u64("epoch")? as usize;
        let best = match r.u8("best flag")? {
            0 => None,
            1 => Some(BestRecord {
                epoch: r.u64("best epoch")? as usize,
                dice: r.f64("best dice")?,
            }),
            f => return Err(Error::format(r.pos() - 1, format!("invalid best flag {f}"))),
        };
        let count = r.u32("parameter count")? as usize;
        let mut params = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32("name length")? as usize;
            let at = r.pos();
            let name = String::from_utf8(r.take(len, "name")?.to_vec())
                .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?;
            let code = r.u8("dtype")?;
            if DType::from_code(code) != Some(DType::F32) {
                return Err(Error::format(r.pos() - 1, format!("parameter {name}: unsupported dtype {code}")));
            }
            let trainable = r.u8("trainable flag")? != 0;
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(Error::format(r.pos() - 4, format!("parameter {name}: rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32("dims")? as usize);
            }
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.ok_or_else(|| Error::format(r.pos(), format!("parameter {name}: dims overflow")))?;
            let data = r.f32s(n, &name)?;
            params.push(NamedTensor {
                name,
                trainable,
                dims,
                data,
            });
        }
        let step = r.u64("optimizer step")?;
        let (mut m, mut v) = (Vec::with_capacity(count), Vec::with_capacity(count));
        for t in &params {
            let n = r.u64("moment length")? as usize;
            if n != 0 && n != t.data.len() {
                return Err(Error::format(r.pos() - 8, format!("moments of {} have length {n}", t.name)));
            }
            m.push(r.f32s(n, "first moment")?);
            v.push(r.f32s(n, "second moment")?);
        }
        if r.pos() as usize != bytes.len() {
            return Err(Error::format(r.pos(), "trailing bytes after checkpoint"));
        }
        Ok(Self {
            config,
            epoch,
            best,
            params,
            optimizer: AdamState { step, m, v },
        })
    }

    /// Writes through a temporary file so an interrupted save leaves any
    /// previous checkpoint at `path` intact.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.encode()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Decoder<'a> {
    cur: Cursor<&'a [u8]>,
}

impl<'a> Decoder<'a> {
    fn pos(&self) -> u64 {
        self.cur.position()
    }

    fn short(&self, what: &str) -> Error {
        Error::format(self.pos(), format!("truncated checkpoint while reading {what}"))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let start = self.pos() as usize;
        let buf: &'a [u8] = *self.cur.get_ref();
        let end = start.checked_add(n).filter(|&e| e <= buf.len()).ok_or_else(|| self.short(what))?;
        self.cur.set_position(end as u64);
        Ok(&buf[start..end])
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.short(what))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur.read_u32::<LittleEndian>().map_err(|_| self.short(what))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.cur.read_u64::<LittleEndian>().map_err(|_| self.short(what))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.cur.read_f64::<LittleEndian>().map_err(|_| self.short(what))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n.checked_mul(4).ok_or_else(|| self.short(what))?;
        let raw = self.take(bytes, what)?;
        let mut out = vec![0f32; n];
        Cursor::new(raw)
            .read_f32_into::<LittleEndian>(&mut out)
            .map_err(|_| self.short(what))?;
        Ok(out)
    }
}

//! `.svol`: magic `SVOL0001`, LE `u32` rank, LE `u32` dims, `u8` dtype code,
//! then raw little-endian elements.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::metrics::LabelMap;

use super::volume::Volume;

pub const MAGIC: &[u8; 8] = b"SVOL0001";
const MAX_RANK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum SvolData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I16(Vec<i16>),
}

impl SvolData {
    pub fn code(&self) -> u8 {
        match self {
            SvolData::F32(_) => 0,
            SvolData::U8(_) => 1,
            SvolData::I16(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SvolData::F32(v) => v.len(),
            SvolData::U8(v) => v.len(),
            SvolData::I16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Svol {
    pub dims: Vec<usize>,
    pub data: SvolData,
}

impl Svol {
    pub fn new(dims: Vec<usize>, data: SvolData) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK || dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(Error::Data(format!("invalid svol dims {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Data(format!("svol dims {dims:?} do not match {} elements", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_volume(v: &Volume) -> Self {
        Self {
            dims: v.dims().to_vec(),
            data: SvolData::F32(v.data().to_vec()),
        }
    }

    pub fn from_labels(l: &LabelMap) -> Self {
        Self {
            dims: l.dims().to_vec(),
            data: SvolData::U8(l.data().to_vec()),
        }
    }

    fn dims3(&self) -> Result<[usize; 3]> {
        <[usize; 3]>::try_from(self.dims.as_slice())
            .map_err(|_| Error::Data(format!("expected a 3D volume, got dims {:?}", self.dims)))
    }

    /// Float view of any payload type.
    pub fn to_volume(&self) -> Result<Volume> {
        let data = match &self.data {
            SvolData::F32(v) => v.clone(),
            SvolData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            SvolData::I16(v) => v.iter().map(|&x| x as f32).collect(),
        };
        Volume::new(self.dims3()?, data)
    }

    /// Integer labels; float payloads must hold integral values in `0..=255`.
    pub fn to_labels(&self) -> Result<LabelMap> {
        let dims = self.dims3()?;
        let data = match &self.data {
            SvolData::U8(v) => v.clone(),
            SvolData::I16(v) => v
                .iter()
                .map(|&x| u8::try_from(x).map_err(|_| Error::Data(format!("label value {x} out of range"))))
                .collect::<Result<_>>()?,
            SvolData::F32(_) => return super::nifti::to_labels(&self.to_volume()?),
        };
        LabelMap::new(dims, data)
    }

    pub fn encode(&self) -> Vec<u8> {
        let size = match self.data {
            SvolData::F32(_) => 4,
            SvolData::U8(_) => 1,
            SvolData::I16(_) => 2,
        };
        let mut out = Vec::with_capacity(13 + 4 * self.dims.len() + size * self.data.len());
        out.extend_from_slice(MAGIC);
        let mut word = [0u8; 4];
        LittleEndian::write_u32(&mut word, self.dims.len() as u32);
        out.extend_from_slice(&word);
        for &d in &self.dims {
            LittleEndian::write_u32(&mut word, d as u32);
            out.extend_from_slice(&word);
        }
        out.push(self.data.code());
        let start = out.len();
        out.resize(start + size * self.data.len(), 0);
        let body = &mut out[start..];
        match &self.data {
            SvolData::F32(v) => LittleEndian::write_f32_into(v, body),
            SvolData::U8(v) => body.copy_from_slice(v),
            SvolData::I16(v) => LittleEndian::write_i16_into(v, body),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let need = |off: usize, n: usize, what: &str| -> Result<()> {
            if bytes.len() < off + n {
                Err(Error::format(bytes.len() as u64, format!("truncated {what}")))
            } else {
                Ok(())
            }
        };
        need(0, 12, "header")?;
        if &bytes[..8] != MAGIC {
            return Err(Error::format(0, "bad magic, expected SVOL0001"));
        }
        let rank = LittleEndian::read_u32(&bytes[8..]) as usize;
        if !(1..=MAX_RANK).contains(&rank) {
            return Err(Error::format(8, format!("rank {rank} out of range 1..={MAX_RANK}")));
        }
        need(12, 4 * rank + 1, "dims")?;
        let mut dims = Vec::with_capacity(rank);
        let mut n = 1usize;
        for i in 0..rank {
            let off = 12 + 4 * i;
            let d = LittleEndian::read_u32(&bytes[off..]) as usize;
            n = n
                .checked_mul(d)
                .filter(|_| d > 0)
                .ok_or_else(|| Error::format(off as u64, format!("invalid dimension {d}")))?;
            dims.push(d);
        }
        let code_off = 12 + 4 * rank;
        let body = &bytes[code_off + 1..];
        let size = match bytes[code_off] {
            0 => 4,
            1 => 1,
            2 => 2,
            c => return Err(Error::format(code_off as u64, format!("unknown dtype code {c}"))),
        };
        let want = n
            .checked_mul(size)
            .ok_or_else(|| Error::format(12, "element count overflows"))?;
        if body.len() != want {
            return Err(Error::format(
                (code_off + 1 + body.len().min(want)) as u64,
                format!("payload holds {} bytes, expected {want}", body.len()),
            ));
        }
        let data = match bytes[code_off] {
            0 => {
                let mut v = vec![0f32; n];
                LittleEndian::read_f32_into(body, &mut v);
                SvolData::F32(v)
            }
            1 => SvolData::U8(body.to_vec()),
            _ => {
                let mut v = vec![0i16; n];
                LittleEndian::read_i16_into(body, &mut v);
                SvolData::I16(v)
            }
        };
        Ok(Self { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_format() {
        let s = Svol::new(vec![1, 2], SvolData::I16(vec![-2, 258])).unwrap();
        let b = s.encode();
        let mut want = b"SVOL0001".to_vec();
        want.extend([2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2]);
        want.extend([0xfe, 0xff, 0x02, 0x01]);
        assert_eq!(b, want);
        assert_eq!(Svol::decode(&b).unwrap(), s);
    }

    #[test]
    fn truncation_and_trailing_bytes_rejected() {
        let b = Svol::new(vec![3], SvolData::F32(vec![1.0, 2.0, 3.0])).unwrap().encode();
        assert!(matches!(Svol::decode(&b[..b.len() - 1]), Err(Error::Format { .. })));
        let mut longer = b.clone();
        longer.push(0);
        assert!(matches!(Svol::decode(&longer), Err(Error::Format { .. })));
        let mut bad = b;
        bad[0] = b'X';
        assert!(matches!(Svol::decode(&bad), Err(Error::Format { offset: 0, .. })));
    }
}

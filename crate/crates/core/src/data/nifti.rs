//! Minimal uncompressed single-file NIfTI-1 (`n+1`) reader and writer.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::metrics::LabelMap;

use super::volume::Volume;

pub const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag.
pub const DATA_OFFSET: usize = 352;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_MAGIC: usize = 344;
const MAGIC: &[u8; 4] = b"n+1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiType {
    U8,
    I16,
    F32,
    U16,
}

impl NiftiType {
    pub fn code(self) -> i16 {
        match self {
            NiftiType::U8 => 2,
            NiftiType::I16 => 4,
            NiftiType::F32 => 16,
            NiftiType::U16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(NiftiType::U8),
            4 => Some(NiftiType::I16),
            16 => Some(NiftiType::F32),
            512 => Some(NiftiType::U16),
            _ => None,
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiType::U8 => 1,
            NiftiType::I16 | NiftiType::U16 => 2,
            NiftiType::F32 => 4,
        }
    }
}

/// Parsed header. The raw bytes are kept so geometry fields we do not
/// interpret (qform, sform, ...) survive a rewrite.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    raw: Vec<u8>,
    pub big_endian: bool,
    /// `[nz, ny, nx]`, i.e. `[D, H, W]`.
    pub dims: [usize; 3],
    pub datatype: NiftiType,
    /// Voxel size along x, y, z.
    pub pixdim: [f32; 3],
    pub vox_offset: usize,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiVolume {
    pub header: NiftiHeader,
    /// Scaled voxel values.
    pub volume: Volume,
}

struct Reader<'a> {
    bytes: &'a [u8],
    big: bool,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        if self.big {
            BigEndian::read_i16(&self.bytes[off..])
        } else {
            LittleEndian::read_i16(&self.bytes[off..])
        }
    }

    fn f32(&self, off: usize) -> f32 {
        if self.big {
            BigEndian::read_f32(&self.bytes[off..])
        } else {
            LittleEndian::read_f32(&self.bytes[off..])
        }
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(
            bytes.len() as u64,
            format!("file ends inside the {HEADER_SIZE}-byte header"),
        ));
    }
    let big = match (LittleEndian::read_i32(bytes), BigEndian::read_i32(bytes)) {
        (348, _) => false,
        (_, 348) => true,
        (v, _) => return Err(Error::format(0, format!("sizeof_hdr is {v}, expected 348"))),
    };
    if &bytes[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC {
        return Err(Error::format(
            OFF_MAGIC as u64,
            format!("bad magic {:?}, expected \"n+1\"", &bytes[OFF_MAGIC..OFF_MAGIC + 4]),
        ));
    }
    let r = Reader { bytes, big };
    let ndim = r.i16(OFF_DIM);
    if !(1..=7).contains(&ndim) {
        return Err(Error::format(OFF_DIM as u64, format!("dim[0] = {ndim} out of range 1..=7")));
    }
    let mut xyz = [1usize; 3];
    for i in 1..=ndim as usize {
        let off = OFF_DIM + 2 * i;
        let d = r.i16(off);
        if d < 1 {
            return Err(Error::format(off as u64, format!("dim[{i}] = {d} is not positive")));
        }
        if i <= 3 {
            xyz[i - 1] = d as usize;
        } else if d != 1 {
            return Err(Error::format(off as u64, format!("only 3D volumes are supported, dim[{i}] = {d}")));
        }
    }
    let code = r.i16(OFF_DATATYPE);
    let datatype = NiftiType::from_code(code)
        .ok_or_else(|| Error::format(OFF_DATATYPE as u64, format!("unsupported datatype {code}")))?;
    let bitpix = r.i16(OFF_BITPIX);
    if bitpix as usize != 8 * datatype.bytes() {
        return Err(Error::format(
            OFF_BITPIX as u64,
            format!("bitpix {bitpix} does not match datatype {code}"),
        ));
    }
    let vox = r.f32(OFF_VOX_OFFSET);
    if !(vox >= HEADER_SIZE as f32) || vox.fract() != 0.0 {
        return Err(Error::format(OFF_VOX_OFFSET as u64, format!("invalid vox_offset {vox}")));
    }
    let pixdim = [1, 2, 3].map(|i| r.f32(OFF_PIXDIM + 4 * i));
    Ok(NiftiHeader {
        raw: bytes[..HEADER_SIZE].to_vec(),
        big_endian: big,
        dims: [xyz[2], xyz[1], xyz[0]],
        datatype,
        pixdim,
        vox_offset: vox as usize,
        scl_slope: r.f32(OFF_SCL_SLOPE),
        scl_inter: r.f32(OFF_SCL_INTER),
    })
}

/// Decodes a whole `.nii` file held in memory.
pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiVolume> {
    let header = parse_header(bytes)?;
    let n: usize = header.dims.iter().product();
    let size = header.datatype.bytes();
    let end = header.vox_offset + n * size;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("payload truncated: {n} voxels need bytes {}..{end}", header.vox_offset),
        ));
    }
    let payload = &bytes[header.vox_offset..end];
    let r = Reader {
        bytes: payload,
        big: header.big_endian,
    };
    let mut data: Vec<f32> = match header.datatype {
        NiftiType::U8 => payload.iter().map(|&b| b as f32).collect(),
        NiftiType::I16 => (0..n).map(|i| r.i16(2 * i) as f32).collect(),
        NiftiType::U16 => (0..n).map(|i| r.i16(2 * i) as u16 as f32).collect(),
        NiftiType::F32 => (0..n).map(|i| r.f32(4 * i)).collect(),
    };
    let (slope, inter) = (header.scl_slope, header.scl_inter);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope, inter) != (1.0, 0.0) {
        data.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    let volume = Volume::new(header.dims, data)?;
    Ok(NiftiVolume { header, volume })
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiVolume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_nifti(&bytes)
}

/// Voxel payload for writing.
#[derive(Debug, Clone, Copy)]
pub enum NiftiPayload<'a> {
    U8(&'a [u8]),
    F32(&'a [f32]),
}

impl NiftiHeader {
    /// Fresh little-endian header for a `[D, H, W]` volume.
    pub fn new(dims: [usize; 3], pixdim: [f32; 3]) -> Result<Self> {
        let mut raw = vec![0u8; HEADER_SIZE];
        raw[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC);
        let mut h = NiftiHeader {
            raw,
            big_endian: false,
            dims,
            datatype: NiftiType::F32,
            pixdim,
            vox_offset: DATA_OFFSET,
            scl_slope: 1.0,
            scl_inter: 0.0,
        };
        h.sync_raw()?;
        Ok(h)
    }

    fn sync_raw(&mut self) -> Result<()> {
        let big = self.big_endian;
        let (dims, datatype, pixdim) = (self.dims, self.datatype, self.pixdim);
        let (vox_offset, slope, inter) = (self.vox_offset, self.scl_slope, self.scl_inter);
        let raw = &mut self.raw;
        let put_i16 = |raw: &mut [u8], off: usize, v: i16| {
            if big {
                BigEndian::write_i16(&mut raw[off..], v)
            } else {
                LittleEndian::write_i16(&mut raw[off..], v)
            }
        };
        let put_f32 = |raw: &mut [u8], off: usize, v: f32| {
            if big {
                BigEndian::write_f32(&mut raw[off..], v)
            } else {
                LittleEndian::write_f32(&mut raw[off..], v)
            }
        };
        if big {
            BigEndian::write_i32(raw, HEADER_SIZE as i32);
        } else {
            LittleEndian::write_i32(raw, HEADER_SIZE as i32);
        }
        let [d, h, w] = dims;
        let mut dim = [3i16, 1, 1, 1, 1, 1, 1, 1];
        for (slot, v) in dim[1..4].iter_mut().zip([w, h, d]) {
            *slot = i16::try_from(v)
                .map_err(|_| Error::Data(format!("dimension {v} does not fit a NIfTI-1 header")))?;
        }
        for (i, v) in dim.into_iter().enumerate() {
            put_i16(raw, OFF_DIM + 2 * i, v);
        }
        put_i16(raw, OFF_DATATYPE, datatype.code());
        put_i16(raw, OFF_BITPIX, 8 * datatype.bytes() as i16);
        for (i, p) in pixdim.into_iter().enumerate() {
            put_f32(raw, OFF_PIXDIM + 4 * (i + 1), p);
        }
        put_f32(raw, OFF_VOX_OFFSET, vox_offset as f32);
        put_f32(raw, OFF_SCL_SLOPE, slope);
        put_f32(raw, OFF_SCL_INTER, inter);
        Ok(())
    }

    /// Serializes a volume using this header's geometry and byte order.
    pub fn encode(&self, dims: [usize; 3], payload: NiftiPayload<'_>) -> Result<Vec<u8>> {
        let n: usize = dims.iter().product();
        let (datatype, len) = match payload {
            NiftiPayload::U8(v) => (NiftiType::U8, v.len()),
            NiftiPayload::F32(v) => (NiftiType::F32, v.len()),
        };
        if len != n {
            return Err(Error::Data(format!("{len} voxels do not match dims {dims:?}")));
        }
        let mut h = self.clone();
        h.dims = dims;
        h.datatype = datatype;
        h.vox_offset = DATA_OFFSET;
        h.scl_slope = 1.0;
        h.scl_inter = 0.0;
        h.sync_raw()?;
        let mut out = h.raw.clone();
        out.extend_from_slice(&[0; DATA_OFFSET - HEADER_SIZE]);
        match payload {
            NiftiPayload::U8(v) => out.extend_from_slice(v),
            NiftiPayload::F32(v) => {
                let start = out.len();
                out.resize(start + 4 * n, 0);
                if h.big_endian {
                    BigEndian::write_f32_into(v, &mut out[start..]);
                } else {
                    LittleEndian::write_f32_into(v, &mut out[start..]);
                }
            }
        }
        Ok(out)
    }
}

pub fn write_nifti(path: impl AsRef<Path>, header: &NiftiHeader, dims: [usize; 3], payload: NiftiPayload<'_>) -> Result<()> {
    let path = path.as_ref();
    let bytes = header.encode(dims, payload)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Interprets voxel values as integer labels.
pub fn to_labels(v: &Volume) -> Result<LabelMap> {
    let mut out = Vec::with_capacity(v.data().len());
    for (i, &x) in v.data().iter().enumerate() {
        if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) {
            return Err(Error::Data(format!("voxel {i} holds {x}, not an integer label")));
        }
        out.push(x as u8);
    }
    LabelMap::new(v.dims(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_parse_round_trip_both_orders() {
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        for big in [false, true] {
            let mut h = NiftiHeader::new([2, 3, 4], [1.0, 1.0, 2.5]).unwrap();
            h.big_endian = big;
            let bytes = h.encode([2, 3, 4], NiftiPayload::F32(&data)).unwrap();
            let nv = parse_nifti(&bytes).unwrap();
            assert_eq!(nv.header.big_endian, big);
            assert_eq!(nv.volume.dims(), [2, 3, 4]);
            assert_eq!(nv.volume.data(), &data[..]);
            assert_eq!(nv.header.pixdim, [1.0, 1.0, 2.5]);
        }
    }

    #[test]
    fn geometry_survives_rewrite() {
        let mut bytes = NiftiHeader::new([1, 1, 2], [1.0; 3])
            .unwrap()
            .encode([1, 1, 2], NiftiPayload::U8(&[0, 1]))
            .unwrap();
        // srow_x[0] lives at byte 280
        LittleEndian::write_f32(&mut bytes[280..], 0.75);
        let h = parse_header(&bytes).unwrap();
        let again = h.encode([1, 1, 2], NiftiPayload::U8(&[2, 3])).unwrap();
        assert_eq!(LittleEndian::read_f32(&again[280..]), 0.75);
    }

    #[test]
    fn rejects_non_integer_labels() {
        let v = Volume::new([1, 1, 2], vec![1.0, 1.5]).unwrap();
        assert!(matches!(to_labels(&v), Err(Error::Data(_))));
    }
}

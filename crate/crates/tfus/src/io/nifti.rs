//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) volumes.
//!
//! A deliberate subset: 3D scalar data of type uint8, int16, int32, float32
//! or float64, either byte order, optional `scl_slope`/`scl_inter` scaling.
//! The orientation matrix is not applied; the origin is taken from the qform
//! (or sform) translation.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use tfus_core::{GridSpec, ScalarField3D, Units};

use crate::error::{Error, Result};

const HEADER_LEN: usize = 348;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiType {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl NiftiType {
    fn code(self) -> i16 {
        match self {
            NiftiType::U8 => 2,
            NiftiType::I16 => 4,
            NiftiType::I32 => 8,
            NiftiType::F32 => 16,
            NiftiType::F64 => 64,
        }
    }

    fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => NiftiType::U8,
            4 => NiftiType::I16,
            8 => NiftiType::I32,
            16 => NiftiType::F32,
            64 => NiftiType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            NiftiType::U8 => 1,
            NiftiType::I16 => 2,
            NiftiType::I32 | NiftiType::F32 => 4,
            NiftiType::F64 => 8,
        }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

struct Header<'a> {
    bytes: &'a [u8],
    little: bool,
}

impl Header<'_> {
    fn i16(&self, off: usize) -> i16 {
        let b = [self.bytes[off], self.bytes[off + 1]];
        if self.little { i16::from_le_bytes(b) } else { i16::from_be_bytes(b) }
    }

    fn f32(&self, off: usize) -> f32 {
        let b = [self.bytes[off], self.bytes[off + 1], self.bytes[off + 2], self.bytes[off + 3]];
        if self.little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }
    }
}

/// Reads a NIfTI-1 volume; voxel values are returned in HU-tagged `f32`.
pub fn read_nifti(path: &Path) -> Result<ScalarField3D> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    let read = if is_gz(path) {
        GzDecoder::new(file).read_to_end(&mut bytes)
    } else {
        std::io::BufReader::new(file).read_to_end(&mut bytes)
    };
    read.map_err(|e| Error::io(path, e))?;
    decode(path, &bytes, Units::Hounsfield)
}

fn truncated(path: &Path, what: &str) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("truncated {what}")))
}

fn decode(path: &Path, bytes: &[u8], units: Units) -> Result<ScalarField3D> {
    if bytes.len() < HEADER_LEN {
        return Err(truncated(path, "header"));
    }
    let little = match (
        i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
    ) {
        (348, _) => true,
        (_, 348) => false,
        _ => return Err(Error::format(path, "sizeof_hdr is not 348")),
    };
    let magic = &bytes[344..348];
    if magic != b"n+1\0" {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected single-file NIfTI-1 \"n+1\"")));
    }
    let h = Header { bytes, little };
    let ndim = h.i16(40);
    let dim: Vec<i16> = (1..8).map(|i| h.i16(40 + 2 * i)).collect();
    if !(1..=7).contains(&ndim) || dim[..ndim as usize].iter().any(|&d| d < 1) {
        return Err(Error::format(path, format!("invalid dim field {ndim} {dim:?}")));
    }
    if dim[3..ndim as usize].iter().any(|&d| d != 1) {
        return Err(Error::format(path, "only 3D scalar volumes are supported"));
    }
    let dims = [0, 1, 2].map(|a| if (a as i16) < ndim { dim[a] as usize } else { 1 });
    let code = h.i16(70);
    let dtype = NiftiType::from_code(code)
        .ok_or_else(|| Error::format(path, format!("unsupported datatype code {code}")))?;
    let pixdim = [1, 2, 3].map(|i| h.f32(76 + 4 * i).abs() as f64);
    let spacing = pixdim.map(|p| if p > 0.0 && p.is_finite() { p } else { 1.0 });
    let vox_offset = h.f32(108);
    if !(vox_offset >= HEADER_LEN as f32) {
        return Err(Error::format(path, format!("vox_offset {vox_offset} < 348")));
    }
    let (slope, inter) = (h.f32(112), h.f32(116));
    let origin = if h.i16(252) > 0 {
        [h.f32(268), h.f32(272), h.f32(276)].map(|v| v as f64)
    } else if h.i16(254) > 0 {
        [h.f32(292), h.f32(308), h.f32(324)].map(|v| v as f64)
    } else {
        [0.0; 3]
    };
    let grid = GridSpec::new(dims, spacing, origin)?;
    let n = grid.len();
    let start = vox_offset as usize;
    let size = dtype.size();
    let payload = bytes.get(start..).filter(|p| p.len() >= n * size).ok_or_else(|| truncated(path, "voxel payload"))?;
    let mut values: Vec<f64> = payload[..n * size]
        .chunks_exact(size)
        .map(|c| {
            macro_rules! num {
                ($t:ty) => {{
                    let arr = c.try_into().expect("chunk size matches type");
                    (if little { <$t>::from_le_bytes(arr) } else { <$t>::from_be_bytes(arr) }) as f64
                }};
            }
            match dtype {
                NiftiType::U8 => c[0] as f64,
                NiftiType::I16 => num!(i16),
                NiftiType::I32 => num!(i32),
                NiftiType::F32 => num!(f32),
                NiftiType::F64 => num!(f64),
            }
        })
        .collect();
    if slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0) {
        values.iter_mut().for_each(|v| *v = *v * slope as f64 + inter as f64);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(path, format!("non-finite voxel at linear index {i}")));
    }
    Ok(ScalarField3D::new(grid, values.into_iter().map(|v| v as f32).collect(), units)?)
}

/// Encodes `field` as a NIfTI-1 image of type `dtype` (little endian,
/// `vox_offset` 352, qform translation = grid origin).
pub fn encode(field: &ScalarField3D, dtype: NiftiType) -> Result<Vec<u8>> {
    let grid = field.grid();
    if grid.dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::Argument("dimension exceeds the NIfTI-1 limit of 32767".into()));
    }
    let mut h = vec![0u8; 352];
    let put_i16 = |h: &mut Vec<u8>, off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut Vec<u8>, off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    h[0..4].copy_from_slice(&348i32.to_le_bytes());
    put_i16(&mut h, 40, 3);
    for a in 0..3 {
        put_i16(&mut h, 42 + 2 * a, grid.dims[a] as i16);
    }
    for a in 3..7 {
        put_i16(&mut h, 42 + 2 * a, 1);
    }
    put_i16(&mut h, 70, dtype.code());
    put_i16(&mut h, 72, (dtype.size() * 8) as i16);
    put_f32(&mut h, 76, 1.0);
    for a in 0..3 {
        put_f32(&mut h, 80 + 4 * a, grid.spacing[a] as f32);
    }
    put_f32(&mut h, 108, 352.0);
    put_f32(&mut h, 112, 1.0);
    h[123] = 2; // xyzt_units: mm
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 0);
    // qform quaternion b, c, d = 0 (identity rotation)
    for a in 0..3 {
        put_f32(&mut h, 268 + 4 * a, grid.origin[a] as f32);
    }
    h[344..348].copy_from_slice(b"n+1\0");
    let mut out = h;
    out.reserve(field.values().len() * dtype.size());
    for &v in field.values() {
        let fits = |lo: f64, hi: f64| {
            let r = (v as f64).round();
            if r < lo || r > hi {
                Err(Error::Argument(format!("value {v} does not fit the requested NIfTI datatype")))
            } else {
                Ok(r)
            }
        };
        match dtype {
            NiftiType::U8 => out.push(fits(0.0, 255.0)? as u8),
            NiftiType::I16 => out.extend_from_slice(&(fits(i16::MIN as f64, i16::MAX as f64)? as i16).to_le_bytes()),
            NiftiType::I32 => out.extend_from_slice(&(fits(i32::MIN as f64, i32::MAX as f64)? as i32).to_le_bytes()),
            NiftiType::F32 => out.extend_from_slice(&v.to_le_bytes()),
            NiftiType::F64 => out.extend_from_slice(&(v as f64).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Writes `field` to `path`; gzip-compressed when the name ends in `.gz`.
pub fn write_nifti(path: &Path, field: &ScalarField3D, dtype: NiftiType) -> Result<()> {
    let bytes = encode(field, dtype)?;
    super::write_atomic(path, |w| {
        if is_gz(path) {
            let mut enc = GzEncoder::new(w, Compression::default());
            enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
            enc.finish().map_err(|e| Error::io(path, e))?;
        } else {
            w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

//! NumPy `.npy` (format version 1.0) arrays and `.npz` ZIP archives.

use std::collections::BTreeMap;
use std::io::{Read, Seek, Write};
use std::path::Path;

use tfus_core::{GridSpec, ScalarField3D, Units};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Element storage of an array, always held in native (C) order.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::U8(v) => v.len(),
            NpyData::I16(v) => v.len(),
            NpyData::I32(v) => v.len(),
            NpyData::I64(v) => v.len(),
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// NumPy type string, e.g. `<f4`.
    pub fn descr(&self) -> &'static str {
        match self {
            NpyData::U8(_) => "|u1",
            NpyData::I16(_) => "<i2",
            NpyData::I32(_) => "<i4",
            NpyData::I64(_) => "<i8",
            NpyData::F32(_) => "<f4",
            NpyData::F64(_) => "<f8",
        }
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            NpyData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NpyData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Argument(format!("shape {shape:?} holds {n} elements, data has {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    /// A 3D field as an `(nx, ny, nz)` C-order `float32` array, so that
    /// `array[i, j, k]` is voxel `(i, j, k)`.
    pub fn from_field(field: &ScalarField3D) -> Self {
        let [nx, ny, nz] = field.dims();
        let v = field.values();
        let mut out = Vec::with_capacity(v.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    out.push(v[i + nx * (j + ny * k)]);
                }
            }
        }
        Self { shape: vec![nx, ny, nz], data: NpyData::F32(out) }
    }

    /// Inverse of [`NpyArray::from_field`]; accepts any numeric dtype.
    pub fn to_field(&self, spacing: f64, units: Units) -> Result<ScalarField3D> {
        let &[nx, ny, nz] = self.shape.as_slice() else {
            return Err(Error::Argument(format!("expected a 3D array, got shape {:?}", self.shape)));
        };
        let src = self.data.to_f64();
        let mut values = vec![0.0f32; src.len()];
        let mut idx = 0;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    values[i + nx * (j + ny * k)] = src[idx] as f32;
                    idx += 1;
                }
            }
        }
        Ok(ScalarField3D::new(GridSpec::isotropic([nx, ny, nz], spacing)?, values, units)?)
    }

    /// An `N x 3` float64 array of points.
    pub fn from_points(points: &[[f64; 3]]) -> Self {
        Self { shape: vec![points.len(), 3], data: NpyData::F64(points.iter().flatten().copied().collect()) }
    }

    pub fn to_points(&self) -> Result<Vec<[f64; 3]>> {
        match self.shape.as_slice() {
            [_, 3] => Ok(self.data.to_f64().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()),
            s => Err(Error::Argument(format!("expected an N x 3 array, got shape {s:?}"))),
        }
    }
}

fn header_string(arr: &NpyArray) -> Vec<u8> {
    let shape = match arr.shape.len() {
        1 => format!("({},)", arr.shape[0]),
        _ => format!("({})", arr.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let dict = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}", arr.data.descr(), shape);
    // magic (6) + version (2) + length (2) + dict + padding + '\n' is a multiple of 64
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let mut h = dict.into_bytes();
    h.extend(std::iter::repeat_n(b' ', pad));
    h.push(b'\n');
    h
}

/// Serializes an array in `.npy` v1.0 format.
pub fn write_npy<W: Write>(w: &mut W, arr: &NpyArray) -> std::io::Result<()> {
    let header = header_string(arr);
    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&(header.len() as u16).to_le_bytes())?;
    w.write_all(&header)?;
    macro_rules! body {
        ($v:expr) => {{
            let mut buf = Vec::with_capacity(1 << 16);
            for chunk in $v.chunks(1 << 14) {
                buf.clear();
                for x in chunk {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }};
    }
    match &arr.data {
        NpyData::U8(v) => w.write_all(v)?,
        NpyData::I16(v) => body!(v),
        NpyData::I32(v) => body!(v),
        NpyData::I64(v) => body!(v),
        NpyData::F32(v) => body!(v),
        NpyData::F64(v) => body!(v),
    }
    Ok(())
}

struct Header {
    descr: String,
    fortran: bool,
    shape: Vec<usize>,
}

/// Extracts the quoted or bare value following `'key':` in a header dict.
fn dict_value<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}'");
    let start = dict.find(&pat)? + pat.len();
    let rest = dict[start..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else if let Some(r) = rest.strip_prefix('\'') {
        r.find('\'')? + 2
    } else {
        rest.find([',', '}']).unwrap_or(rest.len())
    };
    Some(rest[..end].trim())
}

fn parse_header(dict: &str) -> std::result::Result<Header, String> {
    let descr = dict_value(dict, "descr").ok_or("missing 'descr'")?;
    let descr = descr.trim_matches('\'').to_string();
    let fortran = match dict_value(dict, "fortran_order").ok_or("missing 'fortran_order'")? {
        "True" => true,
        "False" => false,
        other => return Err(format!("bad fortran_order {other}")),
    };
    let shape_s = dict_value(dict, "shape").ok_or("missing 'shape'")?;
    let inner = shape_s.strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or("bad shape")?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse::<usize>().map_err(|_| format!("bad shape entry {s}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Header { descr, fortran, shape })
}

/// Reverses axis order: Fortran-ordered data to C order.
fn fortran_to_c<T: Copy>(v: Vec<T>, shape: &[usize]) -> Vec<T> {
    if shape.len() < 2 {
        return v;
    }
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        // Fortran linear index: first axis fastest.
        let mut lin = 0;
        let mut stride = 1;
        for (a, &i) in idx.iter().enumerate() {
            lin += i * stride;
            stride *= shape[a];
        }
        out.push(v[lin]);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// Parses a `.npy` stream (versions 1.0–3.0, any byte order, either memory order).
pub fn read_npy<R: Read>(r: &mut R, name: &Path) -> Result<NpyArray> {
    let bad = |m: String| Error::format(name, m);
    let mut pre = [0u8; 8];
    r.read_exact(&mut pre).map_err(|e| Error::io(name, e))?;
    if &pre[..6] != MAGIC {
        return Err(bad("missing \\x93NUMPY magic".into()));
    }
    let header_len = match pre[6] {
        1 => {
            let mut b = [0u8; 2];
            r.read_exact(&mut b).map_err(|e| Error::io(name, e))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| Error::io(name, e))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(bad(format!("unsupported npy version {v}"))),
    };
    let mut hbytes = vec![0u8; header_len];
    r.read_exact(&mut hbytes).map_err(|e| Error::io(name, e))?;
    let dict = String::from_utf8(hbytes).map_err(|_| bad("header is not UTF-8".into()))?;
    let h = parse_header(&dict).map_err(bad)?;
    let n: usize = h.shape.iter().product();
    let (order, kind) = h.descr.split_at(1);
    let little = match order {
        "<" | "|" | "=" => true,
        ">" => false,
        _ => return Err(bad(format!("unsupported dtype {}", h.descr))),
    };
    macro_rules! read_as {
        ($t:ty, $size:expr, $variant:ident) => {{
            let mut raw = vec![0u8; n * $size];
            r.read_exact(&mut raw).map_err(|e| Error::io(name, e))?;
            let v: Vec<$t> = raw
                .chunks_exact($size)
                .map(|c| {
                    let arr = c.try_into().expect("chunk size matches type");
                    if little { <$t>::from_le_bytes(arr) } else { <$t>::from_be_bytes(arr) }
                })
                .collect();
            NpyData::$variant(if h.fortran { fortran_to_c(v, &h.shape) } else { v })
        }};
    }
    let data = match kind {
        "u1" | "b1" => read_as!(u8, 1, U8),
        "i2" => read_as!(i16, 2, I16),
        "i4" => read_as!(i32, 4, I32),
        "i8" => read_as!(i64, 8, I64),
        "f4" => read_as!(f32, 4, F32),
        "f8" => read_as!(f64, 8, F64),
        _ => return Err(bad(format!("unsupported dtype {}", h.descr))),
    };
    Ok(NpyArray { shape: h.shape, data })
}

/// Writes named arrays as `<name>.npy` members of a ZIP archive, atomically.
pub fn write_npz(path: &Path, entries: &[(&str, &NpyArray)], compress: bool) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for (name, _) in entries {
        if name.is_empty() {
            return Err(Error::Argument("npz entry names must be non-empty".into()));
        }
        if !seen.insert(*name) {
            return Err(Error::Argument(format!("duplicate npz entry name '{name}'")));
        }
    }
    let method = if compress { CompressionMethod::Deflated } else { CompressionMethod::Stored };
    let options = SimpleFileOptions::default().compression_method(method).large_file(false);
    super::write_atomic(path, |w| {
        let mut zip = ZipWriter::new(StreamSeek(w));
        for (name, arr) in entries {
            let big = arr.data.len() * 8 > u32::MAX as usize / 2;
            zip.start_file(format!("{name}.npy"), options.large_file(big)).map_err(|e| zip_err(path, e))?;
            write_npy(&mut zip, arr).map_err(|e| Error::io(path, e))?;
        }
        zip.finish().map_err(|e| zip_err(path, e))?;
        Ok(())
    })
}

/// Adapter giving a buffered file writer the `Seek` bound the ZIP writer needs.
struct StreamSeek<'a, 'b>(&'a mut std::io::BufWriter<&'b mut std::fs::File>);

impl Write for StreamSeek<'_, '_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

impl Seek for StreamSeek<'_, '_> {
    fn seek(&mut self, pos: std::io::SeekFrom) -> std::io::Result<u64> {
        self.0.seek(pos)
    }
}

fn zip_err(path: &Path, e: zip::result::ZipError) -> Error {
    match e {
        zip::result::ZipError::Io(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Reads every `.npy` member of an archive, keyed by name without extension.
pub fn read_npz(path: &Path) -> Result<BTreeMap<String, NpyArray>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut zip = ZipArchive::new(std::io::BufReader::new(file)).map_err(|e| zip_err(path, e))?;
    let mut out = BTreeMap::new();
    for i in 0..zip.len() {
        let mut member = zip.by_index(i).map_err(|e| zip_err(path, e))?;
        let name = member.name().to_string();
        let key = name.strip_suffix(".npy").unwrap_or(&name).to_string();
        let arr = read_npy(&mut member, &path.join(&name))?;
        if out.insert(key.clone(), arr).is_some() {
            return Err(Error::format(path, format!("duplicate member '{key}'")));
        }
    }
    Ok(out)
}

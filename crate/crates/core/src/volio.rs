//! VOL3 files and CSV reports.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                       |
//! |--------|------|---------------------------------------------|
//! | 0      | 4    | magic `VOL3`                                |
//! | 4      | 2    | version (u16, currently 1)                  |
//! | 6      | 2    | kind (u16: 1 real, 2 complex, 3 mask)       |
//! | 8      | 12   | nx, ny, nz (u32)                            |
//! | 20     | 24   | dx, dy, dz (f64, µm)                        |
//! | 44     | …    | payload, x fastest                          |
//!
//! Real payloads are one f32 per voxel, complex payloads interleave (re, im)
//! f32 pairs, masks use one byte (0 or 1) per voxel. Writes go to a temporary
//! file in the target directory and are renamed into place.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::metrics::SliceReport;
use crate::scalar::Real;
use crate::volgrid::{GridSpec, Spectrum3, SupportMask, Volume3, HERMITIAN_TOL};

pub const MAGIC: [u8; 4] = *b"VOL3";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 44;
/// Default upper bound on the payload a reader will allocate.
pub const DEFAULT_ALLOC_CAP: u64 = 2 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum PayloadKind {
    Real = 1,
    Complex = 2,
    Mask = 3,
}

impl PayloadKind {
    fn from_code(code: u16) -> Result<Self> {
        match code {
            1 => Ok(Self::Real),
            2 => Ok(Self::Complex),
            3 => Ok(Self::Mask),
            other => Err(Error::UnknownKind(other)),
        }
    }

    pub fn bytes_per_voxel(self) -> u64 {
        match self {
            Self::Real => 4,
            Self::Complex => 8,
            Self::Mask => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub kind: PayloadKind,
    pub dims: [u32; 3],
    pub pitch: [f64; 3],
}

impl Header {
    fn for_grid(kind: PayloadKind, grid: &GridSpec) -> Result<Self> {
        let dim = |n: usize| {
            u32::try_from(n).map_err(|_| Error::InvalidGrid(format!("axis length {n} exceeds u32")))
        };
        Ok(Self {
            kind,
            dims: [dim(grid.nx)?, dim(grid.ny)?, dim(grid.nz)?],
            pitch: grid.pitch(),
        })
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..8].copy_from_slice(&(self.kind as u16).to_le_bytes());
        for a in 0..3 {
            b[8 + 4 * a..12 + 4 * a].copy_from_slice(&self.dims[a].to_le_bytes());
            b[20 + 8 * a..28 + 8 * a].copy_from_slice(&self.pitch[a].to_le_bytes());
        }
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        let magic: [u8; 4] = b[0..4].try_into().expect("slice of length 4");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let kind = PayloadKind::from_code(u16::from_le_bytes([b[6], b[7]]))?;
        let dims = std::array::from_fn(|a| u32::from_le_bytes(b[8 + 4 * a..12 + 4 * a].try_into().unwrap()));
        let pitch = std::array::from_fn(|a| f64::from_le_bytes(b[20 + 8 * a..28 + 8 * a].try_into().unwrap()));
        Ok(Self { kind, dims, pitch })
    }

    /// Payload length in bytes; `TooLarge` on overflow.
    pub fn payload_len(&self) -> Result<u64> {
        let [x, y, z] = self.dims.map(u64::from);
        x.checked_mul(y)
            .and_then(|v| v.checked_mul(z))
            .and_then(|v| v.checked_mul(self.kind.bytes_per_voxel()))
            .ok_or(Error::TooLarge { bytes: u64::MAX, cap: u64::MAX })
    }

    fn grid(&self) -> Result<GridSpec> {
        let [nx, ny, nz] = self.dims.map(|d| d as usize);
        GridSpec::new(nx, ny, nz, self.pitch[0], self.pitch[1], self.pitch[2])
    }
}

/// Reads header and payload, validating kind and length before allocating.
fn read_payload(mut r: impl Read, expected: PayloadKind, cap: u64) -> Result<(GridSpec, Vec<u8>)> {
    let mut hb = [0u8; HEADER_LEN];
    let got = read_up_to(&mut r, &mut hb)?;
    if got < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, actual: got as u64 });
    }
    let header = Header::from_bytes(&hb)?;
    if header.kind != expected {
        return Err(Error::KindMismatch { expected: expected as u16, found: header.kind as u16 });
    }
    let len = header.payload_len()?;
    if len > cap {
        return Err(Error::TooLarge { bytes: len, cap });
    }
    let mut payload = vec![0u8; len as usize];
    let got = read_up_to(&mut r, &mut payload)?;
    if (got as u64) < len {
        return Err(Error::Truncated { expected: len, actual: got as u64 });
    }
    let extra = std::io::copy(&mut r, &mut std::io::sink())?;
    if extra > 0 {
        return Err(Error::TrailingBytes(extra));
    }
    Ok((header.grid()?, payload))
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

fn f32s(payload: &[u8]) -> impl Iterator<Item = f32> + '_ {
    payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()))
}

pub fn encode_vol<T: Real>(vol: &Volume3<T>) -> Result<Vec<u8>> {
    let mut out = Header::for_grid(PayloadKind::Real, vol.grid())?.to_bytes().to_vec();
    out.reserve(4 * vol.data().len());
    for &v in vol.data() {
        out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_vol<T: Real>(r: impl Read, cap: u64) -> Result<Volume3<T>> {
    let (grid, payload) = read_payload(r, PayloadKind::Real, cap)?;
    Volume3::new(grid, f32s(&payload).map(|v| T::of(v as f64)).collect())
}

pub fn encode_spec<T: Real>(spec: &Spectrum3<T>) -> Result<Vec<u8>> {
    let mut out = Header::for_grid(PayloadKind::Complex, spec.grid())?.to_bytes().to_vec();
    out.reserve(8 * spec.data().len());
    for c in spec.data() {
        out.extend_from_slice(&(c.re.to_f64_lossy() as f32).to_le_bytes());
        out.extend_from_slice(&(c.im.to_f64_lossy() as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a spectrum; it is flagged Hermitian when its deviation is within
/// tolerance.
pub fn decode_spec<T: Real>(r: impl Read, cap: u64) -> Result<Spectrum3<T>> {
    let (grid, payload) = read_payload(r, PayloadKind::Complex, cap)?;
    let vals: Vec<f32> = f32s(&payload).collect();
    let data: Vec<Complex<T>> = vals
        .chunks_exact(2)
        .map(|p| Complex::new(T::of(p[0] as f64), T::of(p[1] as f64)))
        .collect();
    let loose = Spectrum3::new(grid, data, false)?;
    let hermitian = loose.hermitian_deviation() <= HERMITIAN_TOL;
    Spectrum3::new(grid, loose.into_data(), hermitian)
}

pub fn encode_mask(mask: &SupportMask) -> Result<Vec<u8>> {
    let mut out = Header::for_grid(PayloadKind::Mask, mask.grid())?.to_bytes().to_vec();
    out.extend(mask.data().iter().map(|&b| b as u8));
    Ok(out)
}

pub fn decode_mask(r: impl Read, cap: u64) -> Result<SupportMask> {
    let (grid, payload) = read_payload(r, PayloadKind::Mask, cap)?;
    let data = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::BadPayload(format!("mask byte {other} is neither 0 nor 1"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    let mask = SupportMask::new(grid, data.clone())?;
    if mask.data() != data.as_slice() {
        return Err(Error::BadPayload("mask is not centrosymmetric or lacks DC".into()));
    }
    Ok(mask)
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        w.write_all(bytes)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Header of the file at `path`, without reading the payload.
pub fn read_header(path: &Path) -> Result<Header> {
    let mut hb = [0u8; HEADER_LEN];
    let got = read_up_to(&mut File::open(path)?, &mut hb)?;
    if got < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, actual: got as u64 });
    }
    Header::from_bytes(&hb)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

pub fn write_vol<T: Real>(path: &Path, vol: &Volume3<T>) -> Result<()> {
    write_atomic(path, &encode_vol(vol)?)
}

pub fn read_vol<T: Real>(path: &Path) -> Result<Volume3<T>> {
    decode_vol(open(path)?, DEFAULT_ALLOC_CAP)
}

pub fn write_spec<T: Real>(path: &Path, spec: &Spectrum3<T>) -> Result<()> {
    write_atomic(path, &encode_spec(spec)?)
}

pub fn read_spec<T: Real>(path: &Path) -> Result<Spectrum3<T>> {
    decode_spec(open(path)?, DEFAULT_ALLOC_CAP)
}

pub fn write_mask(path: &Path, mask: &SupportMask) -> Result<()> {
    write_atomic(path, &encode_mask(mask)?)
}

pub fn read_mask(path: &Path) -> Result<SupportMask> {
    decode_mask(open(path)?, DEFAULT_ALLOC_CAP)
}

/// Headerless little-endian f32 voxels, x fastest.
pub fn write_raw_f32<T: Real>(path: &Path, vol: &Volume3<T>) -> Result<()> {
    let bytes: Vec<u8> = vol
        .data()
        .iter()
        .flat_map(|v| (v.to_f64_lossy() as f32).to_le_bytes())
        .collect();
    write_atomic(path, &bytes)
}

/// CSV with header `z_um,mse,ssim,pearson`, one row per slice and a final
/// `volume` row with the aggregates.
pub fn slice_report_csv(report: &SliceReport) -> String {
    let mut s = String::from("z_um,mse,ssim,pearson\n");
    for r in &report.rows {
        s.push_str(&format!("{:.4},{:e},{},{}\n", r.z_um, r.mse, r.ssim, r.pearson));
    }
    s.push_str(&format!("volume,{:e},{},{}\n", report.mse, report.ssim, report.pearson));
    s
}

pub fn write_slice_csv(path: &Path, report: &SliceReport) -> Result<()> {
    write_atomic(path, slice_report_csv(report).as_bytes())
}

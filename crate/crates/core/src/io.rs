//! Raster file I/O.
//!
//! Two on-disk formats are supported:
//!
//! * 8- or 16-bit single-channel grayscale PNG.
//! * RAS, a raw little-endian container: the magic `CSR1`, then `u32` width,
//!   `u32` height and `u32` dtype (0 = u8, 1 = u16, 2 = u32, 3 = f32),
//!   followed by `width * height` row-major samples. No padding, no checksum.
//!
//! Integer samples load as their exact value (`n` becomes `n.0`); nothing is
//! rescaled.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::{Grid, LabelMap, Raster};

pub const RAS_MAGIC: [u8; 4] = *b"CSR1";
const RAS_HEADER_LEN: usize = 16;
const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// Sniff the magic bytes.
    Auto,
    /// Grayscale PNG; written as 16-bit, read as 8- or 16-bit.
    Png16,
    Ras,
}

impl Format {
    /// `.png` paths map to PNG, everything else to RAS.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => Format::Png16,
            _ => Format::Ras,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Format::Auto),
            "png16" | "png" => Ok(Format::Png16),
            "ras" => Ok(Format::Ras),
            other => Err(Error::UnsupportedFormat(format!("unknown format name {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum RasDtype {
    U8 = 0,
    U16 = 1,
    U32 = 2,
    F32 = 3,
}

impl RasDtype {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(RasDtype::U8),
            1 => Ok(RasDtype::U16),
            2 => Ok(RasDtype::U32),
            3 => Ok(RasDtype::F32),
            other => Err(Error::UnsupportedFormat(format!("unknown RAS dtype {other}"))),
        }
    }

    fn sample_bytes(self) -> usize {
        match self {
            RasDtype::U8 => 1,
            RasDtype::U16 => 2,
            RasDtype::U32 | RasDtype::F32 => 4,
        }
    }
}

/// Samples decoded from either container before conversion to a grid type.
enum Decoded {
    Integer {
        width: usize,
        height: usize,
        values: Vec<u32>,
    },
    Float {
        width: usize,
        height: usize,
        values: Vec<f32>,
    },
}

fn sniff(bytes: &[u8]) -> Result<Format> {
    if bytes.starts_with(&RAS_MAGIC) {
        Ok(Format::Ras)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        Ok(Format::Png16)
    } else {
        Err(Error::UnsupportedFormat("unrecognized magic bytes".into()))
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn checked_area(width: u64, height: u64) -> Result<usize> {
    let overflow = Error::DimensionOverflow { width, height };
    let area = width.checked_mul(height).ok_or(overflow)?;
    // Every sample is widened to 4 bytes in memory.
    if area.checked_mul(4).is_none_or(|b| b > isize::MAX as u64) {
        return Err(Error::DimensionOverflow { width, height });
    }
    usize::try_from(area).map_err(|_| Error::DimensionOverflow { width, height })
}

fn decode_ras(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < RAS_HEADER_LEN {
        return Err(Error::CorruptFile(format!(
            "RAS header needs {RAS_HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes[..4] != RAS_MAGIC {
        return Err(Error::UnsupportedFormat("missing CSR1 magic".into()));
    }
    let width = read_u32(bytes, 4) as usize;
    let height = read_u32(bytes, 8) as usize;
    let dtype = RasDtype::from_code(read_u32(bytes, 12))?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptFile(format!("zero dimension {width}x{height}")));
    }
    let area = checked_area(width as u64, height as u64)?;
    let payload = &bytes[RAS_HEADER_LEN..];
    let expected = area as u128 * dtype.sample_bytes() as u128;
    if payload.len() as u128 != expected {
        return Err(Error::CorruptFile(format!(
            "RAS payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    Ok(match dtype {
        RasDtype::U8 => Decoded::Integer {
            width,
            height,
            values: payload.iter().map(|&b| b as u32).collect(),
        },
        RasDtype::U16 => Decoded::Integer {
            width,
            height,
            values: payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
                .collect(),
        },
        RasDtype::U32 => Decoded::Integer {
            width,
            height,
            values: payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        },
        RasDtype::F32 => Decoded::Float {
            width,
            height,
            values: payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        },
    })
}

fn decode_png(bytes: &[u8]) -> Result<Decoded> {
    let limits = png::Limits { bytes: usize::MAX };
    let mut decoder = png::Decoder::new_with_limits(Cursor::new(bytes), limits);
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "PNG color type {:?}; only single-channel grayscale is supported",
            info.color_type
        )));
    }
    let depth = info.bit_depth;
    if !matches!(depth, png::BitDepth::Eight | png::BitDepth::Sixteen) {
        return Err(Error::UnsupportedFormat(format!(
            "PNG bit depth {depth:?}; only 8 and 16 are supported"
        )));
    }
    checked_area(width as u64, height as u64)?;
    let size = reader.output_buffer_size().ok_or(Error::DimensionOverflow {
        width: width as u64,
        height: height as u64,
    })?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf)?;
    let data = &buf[..frame.buffer_size()];
    let values = match depth {
        png::BitDepth::Eight => data.iter().map(|&b| b as u32).collect(),
        _ => data
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect(),
    };
    Ok(Decoded::Integer { width, height, values })
}

fn decode(bytes: &[u8], format: Format) -> Result<Decoded> {
    let detected = sniff(bytes)?;
    match (format, detected) {
        (Format::Auto, f) | (f, Format::Auto) => decode_as(bytes, f),
        (want, got) if want == got => decode_as(bytes, got),
        (want, _) => Err(Error::UnsupportedFormat(format!("file is not {want:?}"))),
    }
}

fn decode_as(bytes: &[u8], format: Format) -> Result<Decoded> {
    match format {
        Format::Ras => decode_ras(bytes),
        _ => decode_png(bytes),
    }
}

/// Parses an in-memory raster file.
pub fn decode_raster(bytes: &[u8], format: Format) -> Result<Raster> {
    match decode(bytes, format)? {
        Decoded::Integer { width, height, values } => {
            Raster::new(width, height, values.into_iter().map(|v| v as f32).collect())
        }
        Decoded::Float { width, height, values } => Raster::new(width, height, values),
    }
}

/// Parses an in-memory label file. Float RAS payloads are rejected.
pub fn decode_labels(bytes: &[u8], format: Format) -> Result<LabelMap> {
    match decode(bytes, format)? {
        Decoded::Integer { width, height, values } => LabelMap::new(width, height, values),
        Decoded::Float { .. } => Err(Error::UnsupportedFormat("f32 RAS cannot hold labels".into())),
    }
}

pub fn load_raster(path: impl AsRef<Path>, format: Format) -> Result<Raster> {
    decode_raster(&fs::read(path)?, format)
}

pub fn load_labels(path: impl AsRef<Path>, format: Format) -> Result<LabelMap> {
    decode_labels(&fs::read(path)?, format)
}

fn ras_header(width: usize, height: usize, dtype: RasDtype) -> Result<Vec<u8>> {
    let w = u32::try_from(width).map_err(|_| Error::DimensionOverflow {
        width: width as u64,
        height: height as u64,
    })?;
    let h = u32::try_from(height).map_err(|_| Error::DimensionOverflow {
        width: width as u64,
        height: height as u64,
    })?;
    let mut out = Vec::with_capacity(RAS_HEADER_LEN + width * height * dtype.sample_bytes());
    out.extend_from_slice(&RAS_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&(dtype as u32).to_le_bytes());
    Ok(out)
}

/// RAS bytes with an f32 payload.
pub fn encode_raster_ras(r: &Raster) -> Result<Vec<u8>> {
    let mut out = ras_header(r.width(), r.height(), RasDtype::F32)?;
    for v in r.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// RAS bytes with a u32 payload.
pub fn encode_labels_ras(l: &LabelMap) -> Result<Vec<u8>> {
    let mut out = ras_header(l.width(), l.height(), RasDtype::U32)?;
    for v in l.labels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn encode_png16(width: usize, height: usize, values: impl Iterator<Item = u16>) -> Result<Vec<u8>> {
    let overflow = || Error::DimensionOverflow {
        width: width as u64,
        height: height as u64,
    };
    let w = u32::try_from(width).map_err(|_| overflow())?;
    let h = u32::try_from(height).map_err(|_| overflow())?;
    let mut data = Vec::with_capacity(width * height * 2);
    for v in values {
        data.extend_from_slice(&v.to_be_bytes());
    }
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w, h);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&data)?;
        writer.finish()?;
    }
    Ok(out)
}

/// 16-bit PNG bytes. Every sample must be an integer in `[0, 65535]`.
pub fn encode_raster_png16(r: &Raster) -> Result<Vec<u8>> {
    if let Some((index, &value)) = r
        .samples()
        .iter()
        .enumerate()
        .find(|(_, &v)| v.fract() != 0.0 || !(0.0..=65535.0).contains(&v))
    {
        return Err(Error::RangeError { index, value });
    }
    encode_png16(r.width(), r.height(), r.samples().iter().map(|&v| v as u16))
}

pub fn encode_labels_png16(l: &LabelMap) -> Result<Vec<u8>> {
    if let Some(&label) = l.labels().iter().find(|&&v| v > u16::MAX as u32) {
        return Err(Error::LabelOverflow { label });
    }
    encode_png16(l.width(), l.height(), l.labels().iter().map(|&v| v as u16))
}

fn resolve(path: &Path, format: Format) -> Format {
    match format {
        Format::Auto => Format::from_path(path),
        f => f,
    }
}

/// Writes `r`; `Format::Auto` picks the container from the file extension.
pub fn save_raster(r: &Raster, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = match resolve(path, format) {
        Format::Png16 => encode_raster_png16(r)?,
        _ => encode_raster_ras(r)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_labels(l: &LabelMap, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = match resolve(path, format) {
        Format::Png16 => encode_labels_png16(l)?,
        _ => encode_labels_ras(l)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

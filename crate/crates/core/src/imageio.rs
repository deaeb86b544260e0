//! Binary PGM/PPM input and grayscale PFM disparity files.
//!
//! PFM files are written little-endian (negative scale) with rows stored
//! bottom-to-top. Invalid disparities are stored as `+inf` and any
//! non-finite value read back is treated as invalid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::array::DenseArray;
use crate::error::{Error, Result};

/// 8-bit image stored as floats in `[0, 255]`, shape `[H, W, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    data: DenseArray,
}

impl Image {
    pub fn new(data: DenseArray) -> Result<Self> {
        let shape = data.shape();
        if shape.len() != 3 || !(shape[2] == 1 || shape[2] == 3) {
            return Err(Error::ShapeMismatch(format!(
                "image needs shape [H, W, 1|3], got {:?}",
                shape
            )));
        }
        if data.data().iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 255.0) {
            return Err(Error::Format("image values must lie in [0, 255]".into()));
        }
        Ok(Self { data })
    }

    pub fn from_gray(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(DenseArray::from_vec(&[height, width, 1], values)?)
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn data(&self) -> &DenseArray {
        &self.data
    }

    /// Sample at `(x, y, channel)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data.data()[(y * self.width() + x) * self.channels() + c]
    }
}

/// Per-pixel disparity with a validity mask, shape `[H, W]`.
///
/// Values under invalid pixels carry no meaning; equality ignores them.
#[derive(Clone, Debug)]
pub struct DisparityMap {
    disp: DenseArray,
    valid: Vec<bool>,
}

impl PartialEq for DisparityMap {
    fn eq(&self, other: &Self) -> bool {
        self.disp.shape() == other.disp.shape()
            && self.valid == other.valid
            && self
                .values()
                .iter()
                .zip(other.values())
                .zip(&self.valid)
                .all(|((a, b), &ok)| !ok || a == b)
    }
}

impl DisparityMap {
    pub fn new(disp: DenseArray, valid: Vec<bool>) -> Result<Self> {
        if disp.rank() != 2 || valid.len() != disp.len() {
            return Err(Error::ShapeMismatch(format!(
                "disparity shape {:?} with {} mask entries",
                disp.shape(),
                valid.len()
            )));
        }
        if disp
            .data()
            .iter()
            .zip(&valid)
            .any(|(d, &ok)| ok && !d.is_finite())
        {
            return Err(Error::Numeric("non-finite disparity marked valid".into()));
        }
        Ok(Self { disp, valid })
    }

    pub fn all_valid(disp: DenseArray) -> Result<Self> {
        let valid = vec![true; disp.len()];
        Self::new(disp, valid)
    }

    /// Builds a map where non-finite entries become invalid.
    pub fn from_raw(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self::new(DenseArray::from_vec(&[height, width], values)?, valid)
    }

    pub fn width(&self) -> usize {
        self.disp.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.disp.shape()[0]
    }

    pub fn disp(&self) -> &DenseArray {
        &self.disp
    }

    pub fn values(&self) -> &[f32] {
        self.disp.data()
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn read_token<R: Read>(r: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::Format("unexpected end of header".into()));
        }
        match byte[0] {
            b'#' if token.is_empty() => loop {
                if r.read(&mut byte)? == 0 {
                    return Err(Error::Format("unexpected end of header".into()));
                }
                if byte[0] == b'\n' || byte[0] == b'\r' {
                    break;
                }
            },
            c if c.is_ascii_whitespace() => {
                if !token.is_empty() {
                    return Ok(token);
                }
            }
            c => token.push(c as char),
        }
    }
}

fn parse_dim(tok: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Error::Format(format!("invalid dimension {tok:?}"))),
    }
}

/// Decodes a binary PGM (`P5`) or PPM (`P6`) stream with maxval 255.
pub fn decode_pnm<R: Read>(mut r: R) -> Result<Image> {
    let magic = read_token(&mut r)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic {other:?}"))),
    };
    let width = parse_dim(&read_token(&mut r)?)?;
    let height = parse_dim(&read_token(&mut r)?)?;
    let maxval = read_token(&mut r)?;
    if maxval != "255" {
        return Err(Error::Format(format!("maxval must be 255, got {maxval}")));
    }
    let mut payload = vec![0u8; width * height * channels];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format("truncated PNM payload".into()))?;
    let values = payload.into_iter().map(f32::from).collect();
    Image::new(DenseArray::from_vec(&[height, width, channels], values)?)
}

pub fn encode_pnm<W: Write>(mut w: W, img: &Image) -> Result<()> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    write!(w, "{}\n{} {}\n255\n", magic, img.width(), img.height())?;
    let bytes: Vec<u8> = img
        .data()
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pnm(BufReader::new(File::open(path)?))
}

pub fn write_pnm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_pnm(&mut w, img)?;
    w.flush()?;
    Ok(())
}

/// Decodes a grayscale PFM stream. Colour (`PF`) files are rejected.
pub fn decode_pfm<R: Read>(mut r: R) -> Result<DisparityMap> {
    let magic = read_token(&mut r)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Format("colour PFM is not supported".into())),
        other => return Err(Error::Format(format!("unsupported PFM magic {other:?}"))),
    }
    let width = parse_dim(&read_token(&mut r)?)?;
    let height = parse_dim(&read_token(&mut r)?)?;
    let scale_tok = read_token(&mut r)?;
    let scale: f32 = scale_tok
        .parse()
        .map_err(|_| Error::Format(format!("invalid PFM scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("invalid PFM scale {scale}")));
    }
    let little_endian = scale < 0.0;
    let mut payload = vec![0u8; width * height * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::Format("truncated PFM payload".into()))?;

    let mut values = vec![0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        // file row 0 is the bottom image row
        let (file_row, x) = (i / width, i % width);
        values[(height - 1 - file_row) * width + x] = v;
    }
    DisparityMap::from_raw(width, height, values)
}

pub fn encode_pfm<W: Write>(mut w: W, d: &DisparityMap) -> Result<()> {
    let (width, height) = (d.width(), d.height());
    write!(w, "Pf\n{} {}\n-1\n", width, height)?;
    let mut bytes = Vec::with_capacity(width * height * 4);
    for y in (0..height).rev() {
        for x in 0..width {
            let i = y * width + x;
            let v = if d.valid()[i] { d.values()[i] } else { f32::INFINITY };
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DisparityMap> {
    decode_pfm(BufReader::new(File::open(path)?))
}

pub fn write_pfm(path: impl AsRef<Path>, d: &DisparityMap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    encode_pfm(&mut w, d)?;
    w.flush()?;
    Ok(())
}

/// 8-bit visualization value of a disparity: `clamp(round(d * scale), 0, 255)`,
/// invalid pixels map to 0.
pub fn disparity_to_gray(d: &DisparityMap, scale: f32) -> Result<Image> {
    if !(scale > 0.0) {
        return Err(Error::Config(format!("visualization scale must be > 0, got {scale}")));
    }
    let values = d
        .values()
        .iter()
        .zip(d.valid())
        .map(|(&v, &ok)| {
            if ok {
                (v * scale).round().clamp(0.0, 255.0)
            } else {
                0.0
            }
        })
        .collect();
    Image::from_gray(d.width(), d.height(), values)
}

/// Writes a PGM visualization of a disparity map.
pub fn write_disparity_png_like(path: impl AsRef<Path>, d: &DisparityMap, scale: f32) -> Result<()> {
    write_pnm(path, &disparity_to_gray(d, scale)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_ignores_invalid_values() {
        let a = DisparityMap::new(DenseArray::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap(), vec![true, false]).unwrap();
        let b = DisparityMap::from_raw(2, 1, vec![1.0, f32::INFINITY]).unwrap();
        assert_eq!(a, b);
        let c = DisparityMap::from_raw(2, 1, vec![1.0, 0.0]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn reads_gray_pgm() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        let img = decode_pnm(&bytes[..]).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 1));
        assert_eq!(img.data().data(), &[0.0, 64.0, 128.0, 255.0]);
    }

    #[test]
    fn reads_ppm_pixel() {
        let mut bytes = b"P6\n# comment\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30]);
        let img = decode_pnm(&bytes[..]).unwrap();
        assert_eq!(img.data().shape(), &[1, 1, 3]);
        assert_eq!(img.data().data(), &[10.0, 20.0, 30.0]);
    }

    #[test]
    fn pnm_errors() {
        assert!(matches!(decode_pnm(&b"P2\n1 1\n255\n0"[..]), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(&b"P5\n1 1\n65535\n00"[..]), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(&b"P5\n2 2\n255\n\x00\x01"[..]), Err(Error::Format(_))));
        assert!(matches!(decode_pnm(&b"P5\n2"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn pfm_single_pixel_and_sentinel() {
        let d = DisparityMap::from_raw(2, 1, vec![3.5, f32::INFINITY]).unwrap();
        assert_eq!(d.valid(), &[true, false]);
        let mut buf = Vec::new();
        encode_pfm(&mut buf, &d).unwrap();
        assert_eq!(&buf[..12], b"Pf\n2 1\n-1\n\x00\x00");
        let back = decode_pfm(&buf[..]).unwrap();
        assert_eq!(back.values()[0], 3.5);
        assert_eq!(back.valid(), &[true, false]);
    }

    #[test]
    fn pfm_reads_big_endian() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_be_bytes());
        bytes.extend_from_slice(&2.0f32.to_be_bytes());
        let d = decode_pfm(&bytes[..]).unwrap();
        // bottom row first
        assert_eq!(d.values(), &[2.0, 1.0]);
    }

    #[test]
    fn pfm_errors() {
        let mut colour = b"PF\n1 1\n-1\n".to_vec();
        colour.extend_from_slice(&[0; 12]);
        assert!(matches!(decode_pfm(&colour[..]), Err(Error::Format(_))));
        let mut zero = b"Pf\n1 1\n0\n".to_vec();
        zero.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_pfm(&zero[..]), Err(Error::Format(_))));
        assert!(matches!(decode_pfm(&b"Pf\n1 1\n-1\n\x00"[..]), Err(Error::Format(_))));
    }

    #[test]
    fn visualization_clamps() {
        let d = DisparityMap::new(
            DenseArray::from_vec(&[1, 4], vec![1.0, 10.0, -2.0, 0.4]).unwrap(),
            vec![true, true, true, false],
        )
        .unwrap();
        let img = disparity_to_gray(&d, 64.0).unwrap();
        assert_eq!(img.data().data(), &[64.0, 255.0, 0.0, 0.0]);
        assert!(disparity_to_gray(&d, 0.0).is_err());
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(Image::from_gray(1, 1, vec![256.0]).is_err());
        assert!(Image::new(DenseArray::zeros(&[2, 2, 2]).unwrap()).is_err());
    }
}

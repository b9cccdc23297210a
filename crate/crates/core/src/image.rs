//! 8-bit grayscale and RGB rasters with binary PGM (P5) / PPM (P6) codecs.

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("unsupported or malformed netpbm header: {0}")]
    BadHeader(String),
    #[error("netpbm data truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ImageError {
    pub fn kind(&self) -> &'static str {
        match self {
            ImageError::BadLength { .. } => "BadLength",
            ImageError::BadHeader(_) => "BadHeader",
            ImageError::Truncated => "Truncated",
            ImageError::Io(_) => "Io",
        }
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::BadLength {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(GrayImage { width, height, data })
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Intensities as `f64` in the 0..=255 range.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Rounds and clamps real intensities into an 8-bit image.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self, ImageError> {
        let data = values
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        Self::from_vec(width, height, data)
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 20);
        self.write_pgm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self, ImageError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::parse_pgm(&bytes)
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self, ImageError> {
        let (header, offset) = parse_netpbm_header(bytes, b"P5")?;
        let n = header.width * header.height;
        let body = bytes.get(offset..offset + n).ok_or(ImageError::Truncated)?;
        Self::from_vec(header.width, header.height, body.to_vec())
    }
}

/// Row-major interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 20);
        self.write_ppm(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn parse_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let (header, offset) = parse_netpbm_header(bytes, b"P6")?;
        let n = header.width * header.height * 3;
        let body = bytes.get(offset..offset + n).ok_or(ImageError::Truncated)?;
        Ok(RgbImage {
            width: header.width,
            height: header.height,
            data: body.to_vec(),
        })
    }
}

struct NetpbmHeader {
    width: usize,
    height: usize,
}

/// Parses `magic width height maxval` plus the single whitespace byte that
/// precedes the raster. Comment lines (`#`) are skipped.
fn parse_netpbm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(NetpbmHeader, usize), ImageError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(ImageError::BadHeader(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(ImageError::Truncated),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text
            .parse()
            .map_err(|_| ImageError::BadHeader(format!("bad numeric field {text:?}")))?;
    }
    if fields[2] != 255 {
        return Err(ImageError::BadHeader(format!("maxval {} (only 255 supported)", fields[2])));
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::Truncated),
    }
    Ok((
        NetpbmHeader {
            width: fields[0],
            height: fields[1],
        },
        pos,
    ))
}

//! RGB8 raster observations and their binary encoding.
//!
//! Encoding: the magic `NCSR`, little-endian `u32` width and height, then
//! `width * height * 3` row-major RGB bytes.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const RASTER_MAGIC: &[u8; 4] = b"NCSR";

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("bad raster magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("raster dimensions {0}x{1} are not supported")]
    BadDimensions(u32, u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Raster {
    /// All-black raster.
    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height * 3],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width * height * 3).then_some(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, col: usize, row: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_black(&self) -> bool {
        self.pixels.iter().all(|&b| b == 0)
    }

    pub fn encoded_len(&self) -> usize {
        12 + self.pixels.len()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(RASTER_MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&self.pixels)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, RasterError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RASTER_MAGIC {
            return Err(RasterError::BadMagic(magic));
        }
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        let width = u32::from_le_bytes(b);
        r.read_exact(&mut b)?;
        let height = u32::from_le_bytes(b);
        // 4096x4096 is far beyond anything the simulator renders; reject
        // rather than allocate on a corrupt header.
        if width == 0 || height == 0 || width > 4096 || height > 4096 {
            return Err(RasterError::BadDimensions(width, height));
        }
        let mut pixels = vec![0u8; width as usize * height as usize * 3];
        r.read_exact(&mut pixels)?;
        Ok(Self {
            width: width as usize,
            height: height as usize,
            pixels,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        Self::read_from(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_little_endian() {
        let mut r = Raster::black(2, 3);
        r.put(1, 2, [9, 8, 7]);
        let bytes = r.to_bytes();
        assert_eq!(&bytes[..4], b"NCSR");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(bytes.len(), 12 + 18);
        assert_eq!(&bytes[bytes.len() - 3..], &[9, 8, 7]);
        assert_eq!(Raster::from_bytes(&bytes).unwrap(), r);
    }

    #[test]
    fn truncated_and_bad_magic_rejected() {
        let bytes = Raster::black(4, 4).to_bytes();
        assert!(matches!(
            Raster::from_bytes(&bytes[..20]),
            Err(RasterError::Io(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Raster::from_bytes(&bad),
            Err(RasterError::BadMagic(_))
        ));
    }
}

//! Netpbm export and import of canvases.
//!
//! PBM (P4) uses the format's own convention, 1 = ink. PGM (P5, maxval 255)
//! writes ink as 0 on a 255 background and says so in a header comment.
//! Decoding treats any sample below 128 as ink.

use thiserror::Error;

use super::glyphs::{Cell, CELL_HEIGHT, CELL_WIDTH};
use super::Canvas;

pub const PGM_COMMENT: &str = "# ink=0 background=255";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("not a binary PGM (P5) image")]
    BadMagic,
    #[error("malformed PGM header")]
    BadHeader,
    #[error("canvas images must be a multiple of {CELL_WIDTH} px wide and {CELL_HEIGHT} px tall, got {0}x{1}")]
    BadDimensions(usize, usize),
    #[error("expected {expected} bytes of pixel data, found {found}")]
    Truncated { expected: usize, found: usize },
}

impl Canvas {
    pub fn to_pbm(&self) -> Vec<u8> {
        let w = self.width_px();
        let mut out = format!("P4\n{} {}\n", w, CELL_HEIGHT).into_bytes();
        for row in self.rows() {
            for byte in row.chunks(8) {
                let packed = byte
                    .iter()
                    .enumerate()
                    .fold(0u8, |acc, (n, &ink)| acc | (u8::from(ink) << (7 - n)));
                out.push(packed);
            }
        }
        out
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let w = self.width_px();
        let mut out = format!("P5\n{PGM_COMMENT}\n{} {}\n255\n", w, CELL_HEIGHT).into_bytes();
        for row in self.rows() {
            out.extend(row.iter().map(|&ink| if ink { 0u8 } else { 255 }));
        }
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Canvas, ImageError> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos).ok_or(ImageError::BadMagic)?;
        if magic != b"P5" {
            return Err(ImageError::BadMagic);
        }
        let mut field = || -> Result<usize, ImageError> {
            let tok = next_token(bytes, &mut pos).ok_or(ImageError::BadHeader)?;
            std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or(ImageError::BadHeader)
        };
        let (w, h, maxval) = (field()?, field()?, field()?);
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::BadHeader);
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if w == 0 || w % CELL_WIDTH != 0 || h != CELL_HEIGHT {
            return Err(ImageError::BadDimensions(w, h));
        }
        let data = bytes.get(pos..).unwrap_or_default();
        if data.len() != w * h {
            return Err(ImageError::Truncated {
                expected: w * h,
                found: data.len(),
            });
        }
        let threshold = maxval.div_ceil(2);
        let mut cells = vec![Cell::EMPTY; w / CELL_WIDTH];
        for y in 0..h {
            for x in 0..w {
                if usize::from(data[y * w + x]) < threshold {
                    cells[x / CELL_WIDTH].set(x % CELL_WIDTH, y);
                }
            }
        }
        Ok(Canvas::from_cells(cells))
    }
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

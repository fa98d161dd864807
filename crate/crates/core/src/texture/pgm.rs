//! Minimal binary PGM (P5) reader for the texture pipeline's grayscale
//! inputs. 8-bit maxval only.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

use super::GrayImage;

fn bad(msg: impl Into<String>) -> Error {
    Error::Malformed {
        format: "pgm",
        line: 0,
        msg: msg.into(),
    }
}

/// Read the next whitespace-delimited token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    let n = bytes.len();
    loop {
        while *pos < n && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < n && bytes[*pos] == b'#' {
            while *pos < n && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < n && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(bad("unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Load a binary (P5) PGM file with maxval <= 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    // delegate to the in-memory parser
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(bad(format!("expected P5 magic, found {magic:?}")));
    }
    let width: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| bad("invalid width"))?;
    let height: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| bad("invalid height"))?;
    let maxval: usize = next_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| bad("invalid maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval} (8-bit only)")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(bad(format!(
            "raster truncated: need {need} bytes, found {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let data: Vec<u32> = bytes[pos..pos + need]
        .iter()
        .map(|&b| u32::from(b))
        .collect();
    GrayImage::new(data, width, height)
}

/// Serialize an 8-bit image as binary P5 (used by tests and the data
/// generator).
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    if img.pixels().iter().any(|&p| p > 255) {
        return Err(Error::config("pgm writer supports 8-bit pixels only"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
        let raw: Vec<u8> = img.pixels().iter().map(|&p| p as u8).collect();
        w.write_all(&raw)?;
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_tiny_p5() {
        let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 10, 20, 30]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(0, 2), 255);
        assert_eq!(img.get(1, 0), 10);
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::new((0..12).map(|v| v * 20).collect(), 4, 3).unwrap();
        let p = dir.path().join("t.pgm");
        write_pgm(&img, &p).unwrap();
        let back = read_pgm(&p).unwrap();
        assert_eq!(img.pixels(), back.pixels());
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        let bytes = b"P5\n4 4\n255\n\x00\x01".to_vec();
        assert!(parse_pgm(&bytes).is_err());
    }
}

//! Binary PPM (P6, maxval 255) images.

use std::path::Path;

use rectrack_core::Image;

use crate::error::{Error, Result};

pub fn encode(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

/// Accepts `#` comments and arbitrary whitespace between header fields.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("PPM header truncated".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_owned());
    }
    if fields[0] != "P6" {
        return Err(Error::Format(format!("unsupported image format {:?}, expected P6", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PPM header field {s:?}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("PPM maxval {maxval} unsupported, expected 255")));
    }
    if w == 0 || h == 0 {
        return Err(Error::Format("PPM has zero size".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(3)).ok_or_else(|| Error::Format("PPM too large".into()))?;
    let data = bytes.get(pos..pos + need).ok_or_else(|| Error::Format("PPM raster truncated".into()))?;
    Ok(Image::from_rgb(w, h, data.to_vec())?)
}

pub fn read(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode(image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_raster() {
        let mut img = Image::new(2, 1, [0, 0, 0]);
        img.set_pixel(1, 0, [1, 2, 3]);
        let bytes = encode(&img);
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 0, 0, 1, 2, 3]);
        assert_eq!(decode(&bytes).unwrap(), img);
    }

    #[test]
    fn comments_are_skipped() {
        let bytes = b"P6 # made by hand\n1 1\n# depth\n255\n\x07\x08\x09";
        assert_eq!(decode(bytes).unwrap().pixel(0, 0), [7, 8, 9]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode(b"P3\n1 1\n255\n000").is_err());
        assert!(decode(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(decode(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").is_err());
        assert!(decode(b"P6\n1").is_err());
    }
}

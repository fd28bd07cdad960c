//! Binary PGM (`P5`) and PPM (`P6`) images with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image { path: path.to_path_buf(), reason: reason.into() }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(malformed(path, "expected magic P5 or P6")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, "header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "expected a decimal header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ASCII");
        *field = text.parse().map_err(|_| malformed(path, format!("header field {text} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(malformed(path, format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero image dimension"));
    }
    Ok(Header { channels, width, height, payload_start: pos })
}

/// Decodes an in-memory P5/P6 file; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    let h = parse_header(bytes, path)?;
    let count = h.channels * h.width * h.height;
    let payload = &bytes[h.payload_start..];
    if payload.len() < count {
        return Err(malformed(path, format!("truncated payload: {} of {count} bytes", payload.len())));
    }
    let plane = h.width * h.height;
    let mut data = vec![0.0; count];
    // interleaved samples to planar channels
    for (i, &b) in payload[..count].iter().enumerate() {
        let (pixel, c) = (i / h.channels, i % h.channels);
        data[c * plane + pixel] = f64::from(b) / 255.0;
    }
    Image::new(h.channels, h.height, h.width, data)
}

/// Encodes an image as P5 (gray) or P6 (RGB), rounding to 8 bits.
pub fn encode(img: &Image) -> Vec<u8> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    let data = img.tensor().as_slice();
    out.reserve(c * plane);
    for pixel in 0..plane {
        for ch in 0..c {
            out.push((data[ch * plane + pixel] * 255.0).round() as u8);
        }
    }
    out
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(img)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn decodes_minimal_gray() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend([0, 255, 51, 102]);
        let img = decode(&bytes, p()).unwrap();
        assert_eq!((img.channels(), img.height(), img.width()), (1, 2, 2));
        assert_eq!(img.tensor().as_slice(), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn decodes_color_with_comments() {
        let mut bytes = b"P6\n# made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 0, 255]);
        let img = decode(&bytes, p()).unwrap();
        assert_eq!((img.channels(), img.height(), img.width()), (3, 1, 2));
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(2, 0, 1), 1.0);
        assert_eq!(img.get(1, 0, 0), 0.0);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(decode(b"P2 2 2 255\n0000", p()).is_err());
        assert!(decode(b"P5 2 2 65535\n00000000", p()).is_err());
        assert!(decode(b"P5 2 2 255\n000", p()).is_err());
        assert!(decode(b"P5 2", p()).is_err());
        assert!(decode(b"P5 x 2 255\n0000", p()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(3, 2, 3, (0..18).map(|i| i as f64 / 17.0).collect()).unwrap();
        let path = dir.path().join("x.ppm");
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img.quantized());
        assert!(matches!(read_image(dir.path().join("missing.pgm")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn encode_then_decode_is_quantization(
            (c, h, w, data) in (prop_oneof![Just(1usize), Just(3usize)], 1usize..6, 1usize..6)
                .prop_flat_map(|(c, h, w)| (Just(c), Just(h), Just(w), proptest::collection::vec(0.0f64..=1.0, c * h * w)))
        ) {
            let img = Image::new(c, h, w, data).unwrap();
            let back = decode(&encode(&img), p()).unwrap();
            prop_assert_eq!(&back, &img.quantized());
            prop_assert_eq!(decode(&encode(&back), p()).unwrap(), back);
        }
    }
}

//! Grayscale little-endian PFM depth maps. Rows are stored bottom-up; invalid
//! pixels are written as 0 and read back as invalid.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Grid};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Splits off one `\n`-terminated header line.
fn header_line<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path, line: usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| parse_err(path, line, "truncated header"))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end])
        .map(str::trim)
        .map_err(|_| parse_err(path, line, "header is not text"))
}

/// Decodes PFM bytes; `path` only labels errors.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let mut pos = 0;
    let magic = header_line(bytes, &mut pos, path, 1)?;
    match magic {
        "Pf" => {}
        "PF" => {
            return Err(Error::UnsupportedVariant {
                path: path.to_path_buf(),
                message: "color PFM".into(),
            })
        }
        other => return Err(parse_err(path, 1, format!("bad magic `{other}`"))),
    }
    let dims = header_line(bytes, &mut pos, path, 2)?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, 2, format!("bad dimensions `{dims}`")))?;
    let [w, h] = parsed[..] else {
        return Err(parse_err(path, 2, format!("bad dimensions `{dims}`")));
    };
    if w == 0 || h == 0 {
        return Err(parse_err(path, 2, "empty image"));
    }
    let scale_line = header_line(bytes, &mut pos, path, 3)?;
    let scale: f64 = scale_line
        .parse()
        .map_err(|_| parse_err(path, 3, format!("bad scale `{scale_line}`")))?;
    if !(scale.is_finite() && scale != 0.0) {
        return Err(parse_err(path, 3, format!("bad scale `{scale_line}`")));
    }
    if scale > 0.0 {
        return Err(Error::UnsupportedVariant {
            path: path.to_path_buf(),
            message: "big-endian PFM".into(),
        });
    }
    let data = &bytes[pos..];
    let need = w * h * 4;
    if data.len() != need {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("expected {need} bytes of pixel data, found {}", data.len()),
        });
    }
    let mut values = Grid::new(w, h, 0.0);
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        let (x, row) = (k % w, k / w);
        *values.get_mut(x, h - 1 - row) = f64::from(v);
    }
    Ok(DepthMap::new(values))
}

/// Encodes a depth map; values are rounded to `f32`.
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let v = depth.depth(x, y).unwrap_or(0.0) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn write_pfm(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(depth)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_little_endian() {
        let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let d = decode_pfm(&bytes, Path::new("d.pfm")).unwrap();
        // First stored row is the bottom row.
        assert_eq!(d.depth(0, 1), Some(1.0));
        assert_eq!(d.depth(1, 1), Some(2.0));
        assert_eq!(d.depth(0, 0), Some(3.0));
        assert_eq!(d.depth(1, 0), Some(4.0));
    }

    #[test]
    fn variants_rejected() {
        let big = b"Pf\n1 1\n1.0\n\0\0\0\0";
        assert!(matches!(
            decode_pfm(big, Path::new("d")),
            Err(Error::UnsupportedVariant { .. })
        ));
        let color = b"PF\n1 1\n-1.0\n";
        assert!(matches!(
            decode_pfm(color, Path::new("d")),
            Err(Error::UnsupportedVariant { .. })
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n2 x\n-1.0\n", Path::new("d")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n1 1\n-1.0\n\0\0", Path::new("d")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn invalid_pixels_round_trip_as_invalid() {
        let mut d = DepthMap::constant(3, 2, 7.5);
        *d.valid.get_mut(1, 0) = false;
        let back = decode_pfm(&encode_pfm(&d), Path::new("d")).unwrap();
        assert_eq!(back.valid, d.valid);
        assert_eq!(back.depth(0, 0), Some(7.5));
    }
}

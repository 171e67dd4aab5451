//! Netpbm (PGM/PPM) images, plus PNG with the `png` feature. Intensities are
//! mapped to `[0, 1]` by the file's maxval.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Grid, Image};

/// Maxval used when writing, so 16 bits per sample are kept.
pub const WRITE_MAXVAL: u16 = 65535;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    path: &'a Path,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                if b == b'\n' {
                    self.line += 1;
                }
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(self.path, self.line, "truncated header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| parse_err(self.path, self.line, "header is not text"))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let line = self.line;
        let tok = self.token()?.to_string();
        tok.parse()
            .map_err(|_| parse_err(self.path, line, format!("bad {what} `{tok}`")))
    }
}

/// Decodes P2, P3, P5 or P6 data.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut hdr = Header {
        bytes,
        pos: 0,
        line: 1,
        path,
    };
    let magic = hdr.token()?.to_string();
    let (channels, binary) = match magic.as_str() {
        "P2" => (1, false),
        "P3" => (3, false),
        "P5" => (1, true),
        "P6" => (3, true),
        other => {
            return Err(Error::UnsupportedVariant {
                path: path.to_path_buf(),
                message: format!("netpbm type `{other}`"),
            })
        }
    };
    let w = hdr.number("width")?;
    let h = hdr.number("height")?;
    let line = hdr.line;
    let maxval = hdr.number("maxval")?;
    if w == 0 || h == 0 {
        return Err(parse_err(path, line, "empty image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(path, line, format!("maxval {maxval} out of range")));
    }
    let n = w * h * channels;
    let scale = maxval as f64;
    let samples: Vec<u32> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let data = &bytes[(hdr.pos + 1).min(bytes.len())..];
        let width = if maxval < 256 { 1 } else { 2 };
        if data.len() < n * width {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("expected {} bytes of pixel data, found {}", n * width, data.len()),
            });
        }
        if width == 1 {
            data[..n].iter().map(|&b| u32::from(b)).collect()
        } else {
            data[..2 * n]
                .chunks_exact(2)
                .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        }
    } else {
        (0..n)
            .map(|_| hdr.number("sample").map(|v| v as u32))
            .collect::<Result<_>>()?
    };
    if let Some(&bad) = samples.iter().find(|&&s| s as usize > maxval) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("sample {bad} exceeds maxval {maxval}"),
        });
    }
    let data = samples.iter().map(|&s| f64::from(s) / scale).collect();
    Image::from_vec(w, h, channels, data)
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * f64::from(WRITE_MAXVAL)).round() as u16
}

/// Binary PGM (one channel) or PPM (three channels) at 16 bits per sample.
pub fn encode_pnm(image: &Image) -> Result<Vec<u8>> {
    let magic = match image.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidArgument(format!(
                "netpbm needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!(
        "{magic}\n{} {}\n{WRITE_MAXVAL}\n",
        image.width(),
        image.height()
    )
    .into_bytes();
    for &v in image.as_slice() {
        out.extend_from_slice(&quantize(v).to_be_bytes());
    }
    Ok(out)
}

/// 8-bit PGM with 255 for `true` and 0 for `false`.
pub fn encode_mask(mask: &Grid<bool>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.as_slice().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads an image, picking the format from the file extension.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pgm" | "ppm" | "pnm" => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_pnm(&bytes, path)
        }
        "png" => read_png(path),
        other => Err(Error::UnsupportedVariant {
            path: path.to_path_buf(),
            message: format!("image extension `{other}`"),
        }),
    }
}

/// Writes an image, picking the format from the file extension.
pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pgm" | "ppm" | "pnm" => {
            std::fs::write(path, encode_pnm(image)?).map_err(|e| Error::io(path, e))
        }
        "png" => write_png(path, image),
        other => Err(Error::UnsupportedVariant {
            path: path.to_path_buf(),
            message: format!("image extension `{other}`"),
        }),
    }
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Grid<bool>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_mask(mask)).map_err(|e| Error::io(path, e))
}

/// Whether PNG support was compiled in.
pub const PNG_SUPPORTED: bool = cfg!(feature = "png");

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<u16>) = if img.color().has_color() {
        (3, img.into_rgb16().into_raw())
    } else {
        (1, img.into_luma16().into_raw())
    };
    let data = data
        .into_iter()
        .map(|v| f64::from(v) / f64::from(u16::MAX))
        .collect();
    Image::from_vec(w, h, channels, data)
}

#[cfg(feature = "png")]
fn write_png(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw: Vec<u16> = img.as_slice().iter().map(|&v| quantize(v)).collect();
    let fail = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let dynamic = match img.channels() {
        1 => image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, raw)
            .map(image::DynamicImage::ImageLuma16),
        3 => image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(w, h, raw)
            .map(image::DynamicImage::ImageRgb16),
        c => return Err(fail(format!("png needs 1 or 3 channels, got {c}"))),
    }
    .ok_or_else(|| fail("pixel buffer has the wrong size".into()))?;
    dynamic.save(path).map_err(|e| fail(e.to_string()))
}

#[cfg(not(feature = "png"))]
fn read_png(path: &Path) -> Result<Image> {
    Err(png_disabled(path))
}

#[cfg(not(feature = "png"))]
fn write_png(path: &Path, _img: &Image) -> Result<()> {
    Err(png_disabled(path))
}

#[cfg(not(feature = "png"))]
fn png_disabled(path: &Path) -> Error {
    Error::UnsupportedVariant {
        path: path.to_path_buf(),
        message: "PNG support not compiled in (enable the `png` feature)".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_and_binary_agree() {
        let ascii = b"P2\n# comment\n2 1\n255\n0 255\n";
        let binary = b"P5\n2 1\n255\n\x00\xff";
        let a = decode_pnm(ascii, Path::new("a.pgm")).unwrap();
        let b = decode_pnm(binary, Path::new("b.pgm")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(1, 0, 0), 1.0);
    }

    #[test]
    fn sixteen_bit_round_trip() {
        let img = Image::from_fn(3, 2, 3, |x, y, c| (x + 2 * y + c) as f64 / 9.0);
        let back = decode_pnm(&encode_pnm(&img).unwrap(), Path::new("i.ppm")).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-15);
        }
        // Quantized values survive a second trip exactly.
        let again = decode_pnm(&encode_pnm(&back).unwrap(), Path::new("i.ppm")).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode_pnm(b"P5\n2 x\n255\n", Path::new("m.pgm")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            decode_pnm(b"P4\n2 2\n", Path::new("m.pbm")),
            Err(Error::UnsupportedVariant { .. })
        ));
        assert!(matches!(
            decode_pnm(b"P5\n2 2\n255\n\x00", Path::new("m.pgm")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn mask_encoding() {
        let mask = Grid::from_vec(2, 1, vec![true, false]).unwrap();
        let img = decode_pnm(&encode_mask(&mask), Path::new("m.pgm")).unwrap();
        assert_eq!(img.as_slice(), &[1.0, 0.0]);
    }
}

//! Text camera files: `extrinsic`, a 4×4 world-to-camera matrix, `intrinsic`,
//! a 3×3 matrix, then `depth_min depth_interval`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Contents of one camera file.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFile {
    pub camera: Camera,
    pub depth_min: f64,
    pub depth_interval: f64,
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Lines {
            path,
            inner: it.peekable(),
            last: 0,
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last = n;
                Ok((n, l))
            }
            None => Err(self.err(self.last + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        let (n, l) = self.next(word)?;
        if l != word {
            return Err(self.err(n, format!("expected `{word}`, found `{l}`")));
        }
        Ok(())
    }

    /// A line holding at least `min` numbers; extra trailing values are kept.
    fn numbers(&mut self, min: usize, exact: bool, what: &str) -> Result<Vec<f64>> {
        let (n, l) = self.next(what)?;
        let mut out = Vec::new();
        for tok in l.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| self.err(n, format!("`{tok}` is not a number in {what}")))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    path: self.path.to_path_buf(),
                    value: tok.to_string(),
                });
            }
            out.push(v);
        }
        if out.len() < min || (exact && out.len() != min) {
            return Err(self.err(
                n,
                format!("{what} needs {min} values, found {}", out.len()),
            ));
        }
        Ok(out)
    }
}

/// Parses camera-file text; `path` only labels errors.
pub fn parse_camera(text: &str, path: &Path) -> Result<CameraFile> {
    let mut lines = Lines::new(path, text);
    lines.keyword("extrinsic")?;
    let mut e = [[0.0; 4]; 4];
    for (r, row) in e.iter_mut().enumerate() {
        let v = lines.numbers(4, true, &format!("extrinsic row {}", r + 1))?;
        row.copy_from_slice(&v);
    }
    lines.keyword("intrinsic")?;
    let mut k = [[0.0; 3]; 3];
    for (r, row) in k.iter_mut().enumerate() {
        let v = lines.numbers(3, true, &format!("intrinsic row {}", r + 1))?;
        row.copy_from_slice(&v);
    }
    let range = lines.numbers(2, false, "depth range")?;
    let range_line = lines.last;
    if let Some((n, l)) = lines.inner.next() {
        return Err(lines.err(n, format!("unexpected trailing content `{l}`")));
    }
    let rotation = Matrix3::from_fn(|r, c| e[r][c]);
    let translation = Vector3::new(e[0][3], e[1][3], e[2][3]);
    let intrinsics = Matrix3::from_fn(|r, c| k[r][c]);
    let camera = Camera::new(intrinsics, rotation, translation)?;
    if !(range[0] > 0.0 && range[1] > 0.0) {
        return Err(lines.err(range_line, "depth_min and depth_interval must be positive"));
    }
    Ok(CameraFile {
        camera,
        depth_min: range[0],
        depth_interval: range[1],
    })
}

pub fn read_camera(path: impl AsRef<Path>) -> Result<CameraFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_camera(&text, path)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Text form with 17 significant digits per value, so parsing restores every bit.
pub fn format_camera(file: &CameraFile) -> String {
    let cam = &file.camera;
    let mut out = String::from("extrinsic\n");
    for r in 0..3 {
        let row: Vec<String> = (0..3).map(|c| num(cam.rotation[(r, c)])).collect();
        let _ = writeln!(out, "{} {}", row.join(" "), num(cam.translation[r]));
    }
    let _ = writeln!(out, "{} {} {} {}", num(0.0), num(0.0), num(0.0), num(1.0));
    out.push_str("\nintrinsic\n");
    for r in 0..3 {
        let row: Vec<String> = (0..3).map(|c| num(cam.intrinsics[(r, c)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "\n{} {}", num(file.depth_min), num(file.depth_interval));
    out
}

pub fn write_camera(path: impl AsRef<Path>, file: &CameraFile) -> Result<()> {
    let path: PathBuf = path.as_ref().into();
    std::fs::write(&path, format_camera(file)).map_err(|e| Error::io(path, e))
}

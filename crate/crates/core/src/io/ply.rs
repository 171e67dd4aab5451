//! Point clouds as PLY: a `vertex` element with `x y z` float properties and
//! optional `red green blue` uchar properties.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;

use crate::error::{Error, Result};
use crate::fusion::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn to_uchar(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn build(cloud: &PointCloud, encoding: PlyEncoding) -> Ply<DefaultElement> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = match encoding {
        PlyEncoding::Ascii => Encoding::Ascii,
        PlyEncoding::BinaryLittleEndian => Encoding::BinaryLittleEndian,
    };
    let mut vertex = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z"] {
        vertex.properties.add(PropertyDef::new(
            name.to_string(),
            PropertyType::Scalar(ScalarType::Float),
        ));
    }
    if cloud.colors.is_some() {
        for name in ["red", "green", "blue"] {
            vertex.properties.add(PropertyDef::new(
                name.to_string(),
                PropertyType::Scalar(ScalarType::UChar),
            ));
        }
    }
    vertex.count = cloud.len();
    ply.header.elements.add(vertex);
    let rows = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut e = DefaultElement::new();
            e.insert("x".into(), Property::Float(p.x as f32));
            e.insert("y".into(), Property::Float(p.y as f32));
            e.insert("z".into(), Property::Float(p.z as f32));
            if let Some(colors) = &cloud.colors {
                let [r, g, b] = colors[i];
                e.insert("red".into(), Property::UChar(to_uchar(r)));
                e.insert("green".into(), Property::UChar(to_uchar(g)));
                e.insert("blue".into(), Property::UChar(to_uchar(b)));
            }
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), rows);
    ply
}

/// Serializes a cloud. Coordinates are stored as 32-bit floats and colors as bytes.
pub fn encode_ply(cloud: &PointCloud, encoding: PlyEncoding) -> Result<Vec<u8>> {
    cloud.validate()?;
    let mut ply = build(cloud, encoding);
    let mut out = Vec::new();
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| Error::InvalidArgument(format!("cannot encode PLY: {e}")))?;
    Ok(out)
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_ply(cloud, encoding)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn scalar(e: &DefaultElement, name: &str, path: &Path) -> Result<Option<f64>> {
    Ok(match e.get(name) {
        None => None,
        Some(Property::Float(v)) => Some(f64::from(*v)),
        Some(Property::Double(v)) => Some(*v),
        Some(Property::UChar(v)) => Some(f64::from(*v)),
        Some(Property::Char(v)) => Some(f64::from(*v)),
        Some(Property::Short(v)) => Some(f64::from(*v)),
        Some(Property::UShort(v)) => Some(f64::from(*v)),
        Some(Property::Int(v)) => Some(f64::from(*v)),
        Some(Property::UInt(v)) => Some(f64::from(*v)),
        Some(_) => return Err(format_err(path, format!("property `{name}` is a list"))),
    })
}

/// Parses a PLY from a reader; `path` only labels errors.
pub fn decode_ply(reader: impl std::io::Read, path: &Path) -> Result<PointCloud> {
    let mut reader = BufReader::new(reader);
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut reader)
        .map_err(|e| format_err(path, format!("invalid PLY: {e}")))?;
    let Some(vertices) = ply.payload.get("vertex") else {
        return Err(format_err(path, "no `vertex` element"));
    };
    let has_color = ply
        .header
        .elements
        .get("vertex")
        .is_some_and(|v| ["red", "green", "blue"].iter().all(|c| v.properties.contains_key(*c)));
    let mut points = Vec::with_capacity(vertices.len());
    let mut colors = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        let mut xyz = [0.0; 3];
        for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
            *slot = scalar(v, name, path)?
                .ok_or_else(|| format_err(path, format!("vertex {i} lacks `{name}`")))?;
        }
        if !xyz.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteValue {
                path: path.to_path_buf(),
                value: format!("vertex {i}"),
            });
        }
        points.push(Vector3::from(xyz));
        if has_color {
            let mut rgb = [0.0; 3];
            for (slot, name) in rgb.iter_mut().zip(["red", "green", "blue"]) {
                *slot = scalar(v, name, path)?.unwrap_or(0.0) / 255.0;
            }
            colors.push(rgb);
        }
    }
    PointCloud::new(points, has_color.then_some(colors))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_ply(file, path)
}

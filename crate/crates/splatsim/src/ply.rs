//! Binary little-endian PLY files in the layout written by splat trainers.
//!
//! Per-vertex properties read: `x y z f_dc_0..2 opacity scale_0..2 rot_0..3`.
//! Scales are stored as logs, opacity as a logit, color as the degree-0
//! SH coefficient and rotation as `(w, x, y, z)`. Other properties are
//! skipped.

use std::fs;
use std::path::Path;

use splatsim_core::splat::{color_to_sh, logit, sh_to_color, sigmoid, Gaussian3D, SplatScene};
use splatsim_core::{Quat, Vec3};
use thiserror::Error;

const REQUIRED: [&str; REQUIRED_COUNT] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1",
    "rot_2", "rot_3",
];
const REQUIRED_COUNT: usize = 14;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a PLY file (missing 'ply' magic)")]
    BadMagic,
    #[error("unsupported PLY format '{0}', only binary_little_endian 1.0 is read")]
    UnsupportedFormat(String),
    #[error("malformed PLY header at line {line}: {message}")]
    MalformedHeader { line: usize, message: String },
    #[error("property '{name}' has unsupported type '{ty}'")]
    UnsupportedType { name: String, ty: String },
    #[error("required vertex property '{0}' is missing")]
    MissingProperty(&'static str),
    #[error("payload truncated at byte offset {offset} (vertex {vertex}, property '{property}')")]
    Truncated { offset: usize, vertex: usize, property: String },
    #[error("vertex {vertex} has a non-finite or degenerate '{property}'")]
    InvalidValue { vertex: usize, property: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.properties.iter().map(|(_, s)| s.size()).sum()
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, usize), PlyError> {
    if !bytes.starts_with(b"ply\n") && !bytes.starts_with(b"ply\r\n") {
        return Err(PlyError::BadMagic);
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut pos = 0;
    let mut line_no = 0;
    let mut saw_format = false;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(PlyError::MalformedHeader { line: line_no + 1, message: "missing end_header".into() })?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| PlyError::MalformedHeader { line: line_no + 1, message: "non-UTF-8 header".into() })?
            .trim_end_matches('\r');
        pos += end + 1;
        line_no += 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        let malformed = |message: &str| PlyError::MalformedHeader { line: line_no, message: message.into() };
        match words.first().copied() {
            Some("ply") if line_no == 1 => {}
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                if words.get(1) != Some(&"binary_little_endian") {
                    return Err(PlyError::UnsupportedFormat(words.get(1).unwrap_or(&"").to_string()));
                }
                saw_format = true;
            }
            Some("element") => {
                let (Some(name), Some(count)) = (words.get(1), words.get(2)) else {
                    return Err(malformed("element needs a name and a count"));
                };
                let count = count.parse().map_err(|_| malformed("element count is not an integer"))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| malformed("property before any element"))?;
                if words.get(1) == Some(&"list") {
                    return Err(PlyError::UnsupportedType {
                        name: words.last().unwrap_or(&"").to_string(),
                        ty: "list".into(),
                    });
                }
                let (Some(ty), Some(name)) = (words.get(1), words.get(2)) else {
                    return Err(malformed("property needs a type and a name"));
                };
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| PlyError::UnsupportedType { name: name.to_string(), ty: ty.to_string() })?;
                element.properties.push((name.to_string(), scalar));
            }
            Some("end_header") => break,
            Some(other) => return Err(malformed(&format!("unknown keyword '{other}'"))),
        }
    }
    if !saw_format {
        return Err(PlyError::MalformedHeader { line: line_no, message: "missing format line".into() });
    }
    Ok((elements, pos))
}

/// Parse a whole PLY file held in memory.
pub fn parse_ply(bytes: &[u8]) -> Result<SplatScene, PlyError> {
    let (elements, mut offset) = parse_header(bytes)?;
    let mut gaussians = Vec::new();
    for element in &elements {
        let stride = element.stride();
        if element.name != "vertex" {
            let needed = stride * element.count;
            if bytes.len() < offset + needed {
                return Err(PlyError::Truncated { offset: bytes.len(), vertex: 0, property: element.name.clone() });
            }
            offset += needed;
            continue;
        }
        // byte offset of each required property inside one vertex record
        let mut slots = [(0usize, Scalar::F32); REQUIRED_COUNT];
        for (slot, name) in slots.iter_mut().zip(REQUIRED.iter()) {
            let mut at = 0;
            let mut found = None;
            for (pname, scalar) in &element.properties {
                if pname == name {
                    found = Some((at, *scalar));
                    break;
                }
                at += scalar.size();
            }
            *slot = found.ok_or(PlyError::MissingProperty(name))?;
        }
        gaussians.reserve(element.count);
        for v in 0..element.count {
            let base = offset + v * stride;
            if bytes.len() < base + stride {
                let mut at = 0;
                let mut property = String::new();
                for (pname, scalar) in &element.properties {
                    if base + at + scalar.size() > bytes.len() {
                        property = pname.clone();
                        break;
                    }
                    at += scalar.size();
                }
                return Err(PlyError::Truncated { offset: bytes.len(), vertex: v, property });
            }
            let rec = &bytes[base..base + stride];
            let val = |i: usize| {
                let (at, s) = slots[i];
                s.read(&rec[at..])
            };
            let vals: [f64; REQUIRED_COUNT] = std::array::from_fn(val);
            for (i, x) in vals.iter().enumerate() {
                if !x.is_finite() {
                    return Err(PlyError::InvalidValue { vertex: v, property: REQUIRED[i] });
                }
            }
            let q = Quat::new(vals[11], vals[12], vals[13], vals[10]);
            if !(q.norm() > 0.0) {
                return Err(PlyError::InvalidValue { vertex: v, property: "rot_0" });
            }
            gaussians.push(Gaussian3D {
                mean: Vec3::new(vals[0], vals[1], vals[2]),
                scale: Vec3::new(vals[7].exp(), vals[8].exp(), vals[9].exp()),
                rotation: q.normalized(),
                opacity: sigmoid(vals[6]),
                color: [sh_to_color(vals[3]), sh_to_color(vals[4]), sh_to_color(vals[5])],
            });
        }
        offset += stride * element.count;
    }
    Ok(SplatScene::new(gaussians))
}

pub fn load_ply(path: &Path) -> Result<SplatScene, PlyError> {
    let bytes = fs::read(path).map_err(|source| PlyError::Io { path: path.display().to_string(), source })?;
    parse_ply(&bytes)
}

/// Encode the Gaussians of `scene` (alignment and background are not part
/// of the format). Opacities are clamped into `(0, 1)` before the logit.
pub fn encode_ply(scene: &SplatScene) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", scene.gaussians.len()).as_bytes());
    for name in REQUIRED.iter() {
        out.extend_from_slice(format!("property float {name}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for g in &scene.gaussians {
        let opacity = g.opacity.clamp(1e-6, 1.0 - 1e-6);
        let q = g.rotation;
        let vals = [
            g.mean.x,
            g.mean.y,
            g.mean.z,
            color_to_sh(g.color[0]),
            color_to_sh(g.color[1]),
            color_to_sh(g.color[2]),
            logit(opacity),
            g.scale.x.ln(),
            g.scale.y.ln(),
            g.scale.z.ln(),
            q.w,
            q.x,
            q.y,
            q.z,
        ];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_ply(scene: &SplatScene, path: &Path) -> Result<(), PlyError> {
    fs::write(path, encode_ply(scene)).map_err(|source| PlyError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(props: &[&str], count: usize) -> Vec<u8> {
        let mut h = format!("ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex {count}\n");
        for p in props {
            h.push_str(&format!("property float {p}\n"));
        }
        h.push_str("end_header\n");
        h.into_bytes()
    }

    fn record(vals: &[f32]) -> Vec<u8> {
        vals.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn activation_identities() {
        let mut bytes = header(&REQUIRED[..], 1);
        bytes.extend(record(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]));
        let scene = parse_ply(&bytes).unwrap();
        let g = scene.gaussians[0];
        assert_eq!(g.scale, Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(g.opacity, 0.5);
        assert_eq!(g.color, [0.5, 0.5, 0.5]);
        assert_eq!(g.rotation, Quat::IDENTITY);
        assert_eq!(g.mean, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn extra_properties_and_order_are_tolerated() {
        let mut props: Vec<&str> = REQUIRED[..].iter().rev().copied().collect();
        props.insert(3, "nx");
        props.push("f_rest_0");
        let mut bytes = header(&props, 1);
        let mut vals = vec![0.0f32; props.len()];
        for (i, p) in props.iter().enumerate() {
            vals[i] = match *p {
                "x" => 4.0,
                "rot_0" => 1.0,
                "nx" | "f_rest_0" => 99.0,
                _ => 0.0,
            };
        }
        bytes.extend(record(&vals));
        let g = parse_ply(&bytes).unwrap().gaussians[0];
        assert_eq!(g.mean.x, 4.0);
        assert_eq!(g.rotation, Quat::IDENTITY);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(parse_ply(b"nope"), Err(PlyError::BadMagic)));
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_ply(ascii), Err(PlyError::UnsupportedFormat(f)) if f == "ascii"));
        let bytes = header(&["x", "y", "z"], 0);
        assert!(matches!(parse_ply(&bytes), Err(PlyError::MissingProperty("f_dc_0"))));
        let mut bytes = header(&REQUIRED[..], 2);
        let mut first = [0.0; 14];
        first[REQUIRED.iter().position(|n| *n == "rot_0").unwrap()] = 1.0;
        bytes.extend(record(&first));
        bytes.extend(record(&[0.0; 6]));
        match parse_ply(&bytes) {
            Err(PlyError::Truncated { vertex, property, .. }) => {
                assert_eq!(vertex, 1);
                assert_eq!(property, "opacity");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let scene = SplatScene::new(vec![
            Gaussian3D {
                mean: Vec3::new(0.5, -1.0, 2.0),
                scale: Vec3::new(0.1, 0.2, 0.05),
                rotation: Quat::new(0.1, 0.2, 0.3, 0.9).normalized(),
                opacity: 0.8,
                color: [0.2, 0.4, 0.9],
            },
            Gaussian3D::isotropic(Vec3::zeros(), 0.3, 0.1, [1.0, 0.0, 0.5]),
        ]);
        let back = parse_ply(&encode_ply(&scene)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in scene.gaussians.iter().zip(&back.gaussians) {
            assert!((a.mean - b.mean).amax() < 1e-6);
            assert!((a.scale - b.scale).amax() < 1e-6);
            assert!((a.opacity - b.opacity).abs() < 1e-6);
            assert!((a.rotation.to_vector4() - b.rotation.to_vector4()).amax() < 1e-6);
            for c in 0..3 {
                assert!((a.color[c] - b.color[c]).abs() < 1e-6);
            }
        }
    }
}

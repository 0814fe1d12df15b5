//! Binary little-endian PLY with the usual splat vertex attributes.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Vector3;

use super::binary::{read_file, write_file};
use crate::error::{Error, Result};
use crate::model::{KernelKind, SplatPrimitive, SplatScene};

const WRITTEN: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

struct Header {
    vertices: usize,
    props: Vec<(String, Scalar)>,
    kernel: Option<KernelKind>,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |field: &str, m: String| Error::format(path, field, m);
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| err("header", "no end_header line".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| err("header", "not ASCII".into()))?;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    if lines.next() != Some("ply") {
        return Err(err("header", "first line is not 'ply'".into()));
    }
    let mut format_ok = false;
    let mut vertices = None;
    let mut props = Vec::new();
    let mut kernel = None;
    let mut in_vertex = false;
    let mut seen_element = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", other, ..] => return Err(err("format", format!("unsupported format '{other}', need binary_little_endian"))),
            ["comment", "kernel", k] => kernel = Some(k.parse::<KernelKind>().map_err(|e| err("comment kernel", e.to_string()))?),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                if seen_element {
                    return Err(err("element", "vertex must be the first element".into()));
                }
                vertices = Some(n.parse::<usize>().map_err(|_| err("element vertex", format!("bad count '{n}'")))?);
                in_vertex = true;
                seen_element = true;
            }
            ["element", ..] => {
                in_vertex = false;
                seen_element = true;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(err("property", "list properties on vertices are not supported".into()));
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| err(&format!("property {name}"), format!("unknown type '{ty}'")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(err("header", format!("unrecognized line '{line}'"))),
        }
    }
    if !format_ok {
        return Err(err("format", "missing format line".into()));
    }
    Ok(Header {
        vertices: vertices.ok_or_else(|| err("element vertex", "no vertex element".into()))?,
        props,
        kernel,
        data_start: end + 11,
    })
}

/// Read splats from a binary PLY.
///
/// `opacity` is read as the raw logit θ. The kernel comes from `kernel`, else
/// the file's `comment kernel` line, else Gaussian2D when `scale_2` is absent.
pub fn read_ply(path: &Path, kernel: Option<KernelKind>) -> Result<SplatScene> {
    let bytes = read_file(path)?;
    decode_ply(&bytes, path, kernel)
}

pub fn decode_ply(bytes: &[u8], path: &Path, kernel: Option<KernelKind>) -> Result<SplatScene> {
    let h = parse_header(bytes, path)?;
    let mut offset = HashMap::new();
    let mut stride = 0;
    for (name, ty) in &h.props {
        if offset.insert(name.as_str(), (stride, *ty)).is_some() {
            return Err(Error::format(path, format!("property {name}"), "declared twice"));
        }
        stride += ty.size();
    }
    let need = |name: &str| {
        offset
            .get(name)
            .copied()
            .ok_or_else(|| Error::format(path, format!("property {name}"), "missing"))
    };
    let has_z = offset.contains_key("scale_2");
    let kernel = kernel.or(h.kernel).unwrap_or(if has_z { KernelKind::Gaussian3D } else { KernelKind::Gaussian2D });
    let pos = [need("x")?, need("y")?, need("z")?];
    let scale = [need("scale_0")?, need("scale_1")?, if has_z || kernel == KernelKind::Gaussian3D { need("scale_2")? } else { need("scale_1")? }];
    let rot = [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?];
    let opacity = need("opacity")?;
    let dc: Vec<_> = ["f_dc_0", "f_dc_1", "f_dc_2"].iter().map(|n| offset.get(n).copied()).collect();

    let body = &bytes[h.data_start..];
    let total = h.vertices.checked_mul(stride).ok_or_else(|| Error::format(path, "element vertex", "size overflows"))?;
    if body.len() < total {
        return Err(Error::format(
            path,
            "vertex data",
            format!("{} vertices of {stride} bytes need {total} bytes, file has {}", h.vertices, body.len()),
        ));
    }
    let mut prims = Vec::with_capacity(h.vertices);
    let mut in_unit = 0usize;
    for i in 0..h.vertices {
        let rec = &body[i * stride..(i + 1) * stride];
        let get = |(o, t): (usize, Scalar)| t.read(&rec[o..]);
        let mut log_scale = Vector3::new(get(scale[0]), get(scale[1]), get(scale[2]));
        if !has_z {
            // surfels have no third axis; keep it finite and thin
            log_scale.z = log_scale.x.min(log_scale.y);
        }
        let theta = get(opacity);
        if (0.0..=1.0).contains(&theta) {
            in_unit += 1;
        }
        let prim = SplatPrimitive {
            position: Vector3::new(get(pos[0]), get(pos[1]), get(pos[2])),
            log_scale,
            rotation: [get(rot[0]), get(rot[1]), get(rot[2]), get(rot[3])],
            theta,
            kernel,
            color_dc: [0, 1, 2].map(|k| dc[k].map(get).unwrap_or(0.0)),
        };
        prim.validate().map_err(|e| Error::format(path, format!("vertex {i}"), e.to_string()))?;
        prims.push(prim);
    }
    if h.vertices > 0 && in_unit == h.vertices {
        log::warn!(
            "{}: every opacity lies in [0, 1]; values are read as logits. If the exporter stored \
             activated opacities, convert them with logit(p) first",
            path.display()
        );
    }
    SplatScene::new(prims)
}

/// Encode a scene; parameters are rounded to f32.
pub fn encode_ply(scene: &SplatScene) -> Vec<u8> {
    let kernel = scene.primitives().first().map(|p| p.kernel).unwrap_or_default();
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\ncomment kernel {kernel}\nelement vertex {}\n",
        scene.len()
    )
    .into_bytes();
    for name in WRITTEN {
        out.extend_from_slice(format!("property float {name}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for p in scene.primitives() {
        let vals = [
            p.position.x,
            p.position.y,
            p.position.z,
            0.0,
            0.0,
            0.0,
            p.color_dc[0],
            p.color_dc[1],
            p.color_dc[2],
            p.theta,
            p.log_scale.x,
            p.log_scale.y,
            p.log_scale.z,
            p.rotation[0],
            p.rotation[1],
            p.rotation[2],
            p.rotation[3],
        ];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Write a scene. Mixed-kernel scenes are rejected since the file records one kernel.
pub fn write_ply(path: &Path, scene: &SplatScene) -> Result<()> {
    if let Some(first) = scene.primitives().first() {
        if scene.primitives().iter().any(|p| p.kernel != first.kernel) {
            return Err(Error::invalid("PLY output needs a single kernel kind for all primitives"));
        }
    }
    write_file(path, &encode_ply(scene))
}

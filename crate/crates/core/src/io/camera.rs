//! Plain-text camera list, one view per line:
//! `view_id width height fx fy cx cy m00 m01 ... m33` with the
//! world-to-camera matrix in row-major order. `#` starts a comment.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::model::CameraView;

pub fn encode_cameras(views: &[CameraView]) -> String {
    let mut s = String::from("# view_id width height fx fy cx cy world_to_camera (16 values, row-major)\n");
    for v in views {
        s.push_str(&format!("{} {} {} {} {} {} {}", v.view_id, v.width, v.height, v.fx, v.fy, v.cx, v.cy));
        for r in 0..4 {
            for c in 0..4 {
                s.push_str(&format!(" {}", v.world_to_camera[(r, c)]));
            }
        }
        s.push('\n');
    }
    s
}

pub fn decode_cameras(text: &str, path: &Path) -> Result<Vec<CameraView>> {
    let mut views = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let field = |name: &str| format!("line {} {name}", n + 1);
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 23 {
            return Err(Error::format(path, field("view"), format!("expected 23 fields, found {}", tok.len())));
        }
        let int = |k: usize, name: &str| {
            tok[k]
                .parse::<u32>()
                .map_err(|_| Error::format(path, field(name), format!("'{}' is not a non-negative integer", tok[k])))
        };
        let real = |k: usize, name: &str| {
            tok[k]
                .parse::<f64>()
                .map_err(|_| Error::format(path, field(name), format!("'{}' is not a number", tok[k])))
        };
        let mut m = Matrix4::zeros();
        for k in 0..16 {
            m[(k / 4, k % 4)] = real(7 + k, "world_to_camera")?;
        }
        let v = CameraView::new(
            tok[0],
            int(1, "width")?,
            int(2, "height")?,
            real(3, "fx")?,
            real(4, "fy")?,
            real(5, "cx")?,
            real(6, "cy")?,
            m,
        )
        .map_err(|e| Error::format(path, field(&format!("view '{}'", tok[0])), e.to_string()))?;
        if !ids.insert(v.view_id.clone()) {
            return Err(Error::format(path, field("view_id"), format!("duplicate view id '{}'", v.view_id)));
        }
        views.push(v);
    }
    if views.is_empty() {
        return Err(Error::format(path, "views", "file lists no cameras"));
    }
    Ok(views)
}

pub fn read_cameras(path: &Path) -> Result<Vec<CameraView>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_cameras(&text, path)
}

pub fn write_cameras(path: &Path, views: &[CameraView]) -> Result<()> {
    std::fs::write(path, encode_cameras(views)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("cams.txt")
    }

    #[test]
    fn parses_comments_and_rejects_bad_lines() {
        let text = "# header\nv0 4 3 2.5 2.5 2 1.5 1 0 0 0 0 1 0 0 0 0 1 3 0 0 0 1 # trailing\n\n";
        let v = decode_cameras(text, p()).unwrap();
        assert_eq!(v[0].world_to_camera[(2, 3)], 3.0);
        assert_eq!(v[0].height, 3);
        let short = "v0 4 3 2.5\n";
        assert!(decode_cameras(short, p()).unwrap_err().to_string().contains("line 1"));
        let dup = format!("{0}{0}", "v0 4 3 2.5 2.5 2 1.5 1 0 0 0 0 1 0 0 0 0 1 3 0 0 0 1\n");
        assert!(decode_cameras(&dup, p()).is_err());
        let invalid = "v0 0 3 2.5 2.5 2 1.5 1 0 0 0 0 1 0 0 0 0 1 3 0 0 0 1\n";
        assert!(decode_cameras(invalid, p()).is_err());
        assert!(decode_cameras("# nothing\n", p()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            f in 1e-3f64..1e4, cx in 0.0f64..1e3, angle in -3.2f64..3.2,
            t in proptest::array::uniform3(-1e3f64..1e3),
        ) {
            let r = nalgebra::Rotation3::from_euler_angles(angle, 0.3 * angle, -angle);
            let mut m = Matrix4::identity();
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
            for k in 0..3 {
                m[(k, 3)] = t[k];
            }
            let v = CameraView::new("view_x", 1000, 5, f, f * 1.5, cx, 2.25, m).unwrap();
            let back = decode_cameras(&encode_cameras(std::slice::from_ref(&v)), p()).unwrap();
            prop_assert_eq!(&back[0], &v);
        }
    }
}

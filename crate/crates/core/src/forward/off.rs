//! ASCII OFF meshes with an optional JSON sidecar carrying the conformal
//! factor.

use std::path::Path;

use serde::Deserialize;

use super::mesh::SurfaceMesh;
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    conformal_factor: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidInput(format!("OFF: {}", msg.into()))
}

/// Parses OFF text. Polygons are fan-triangulated; `#` starts a comment.
pub fn parse_off(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    match tokens.next() {
        Some("OFF") => {}
        Some(t) => return Err(bad(format!("expected header OFF, found {t:?}"))),
        None => return Err(bad("empty file")),
    }
    let mut count = |what: &str| -> Result<usize> {
        let t = tokens.next().ok_or_else(|| bad(format!("missing {what}")))?;
        t.parse().map_err(|_| bad(format!("invalid {what} {t:?}")))
    };
    let nv = count("vertex count")?;
    let nf = count("face count")?;
    let _ne = count("edge count")?;
    // Guard against absurd counts before allocating.
    if nv > text.len() || nf > text.len() {
        return Err(bad("element counts exceed file size"));
    }
    let mut rest: Vec<&str> = tokens.collect();
    rest.reverse();
    let mut next = |what: &str| rest.pop().ok_or_else(|| bad(format!("unexpected end of file reading {what}")));
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut p = [0.0; 3];
        for c in &mut p {
            let t = next("vertex")?;
            *c = t
                .parse()
                .map_err(|_| bad(format!("invalid coordinate {t:?} in vertex {i}")))?;
        }
        vertices.push(p);
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let t = next("face")?;
        let k: usize = t.parse().map_err(|_| bad(format!("invalid face size {t:?}")))?;
        if k < 3 {
            return Err(bad(format!("face {f} has {k} vertices")));
        }
        let mut idx = Vec::with_capacity(k);
        for _ in 0..k {
            let t = next("face")?;
            let v: usize = t.parse().map_err(|_| bad(format!("invalid index {t:?} in face {f}")))?;
            if v >= nv {
                return Err(bad(format!("face {f} references vertex {v} of {nv}")));
            }
            idx.push(v);
        }
        for j in 1..k - 1 {
            triangles.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    Ok((vertices, triangles))
}

/// Reads `path` and, if present, the sidecar `<path>.json` (or an explicit
/// sidecar path).
pub fn read_off(path: &Path, sidecar: Option<&Path>) -> Result<SurfaceMesh> {
    let text = std::fs::read_to_string(path)?;
    let (vertices, triangles) = parse_off(&text)?;
    let default_sidecar = path.with_extension("json");
    let side = match sidecar {
        Some(p) => Some(p.to_path_buf()),
        None => default_sidecar.exists().then_some(default_sidecar),
    };
    let rho = match side {
        Some(p) => {
            let s: Sidecar = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            Some(s.conformal_factor)
        }
        None => None,
    };
    SurfaceMesh::new(vertices, triangles, rho)
}

/// OFF text of a mesh (triangles only).
pub fn write_off(mesh: &SurfaceMesh) -> String {
    let mut s = format!(
        "OFF\n{} {} {}\n",
        mesh.vertices().len(),
        mesh.triangles().len(),
        mesh.edge_count()
    );
    for p in mesh.vertices() {
        s.push_str(&format!("{:?} {:?} {:?}\n", p[0], p[1], p[2]));
    }
    for t in mesh.triangles() {
        s.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    s
}

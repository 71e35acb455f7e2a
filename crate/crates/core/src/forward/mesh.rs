//! Triangulated surfaces with exactly one boundary loop, and generators for
//! the disk and the torus with a cap removed.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Torus layers per unit of `1 / h`.
const LAYERS_PER_UNIT: f64 = 10.0;

/// An oriented triangle mesh in `R³` whose boundary is a single cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    vertices: Vec<[f64; 3]>,
    triangles: Vec<[usize; 3]>,
    boundary_loop: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    conformal_factor: Option<Vec<f64>>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    dot(sub(a, b), sub(a, b)).sqrt()
}

impl SurfaceMesh {
    /// Validates the mesh and extracts its boundary loop. The loop follows
    /// the boundary edges in the direction induced by the triangle
    /// orientation and starts at the smallest boundary vertex index.
    pub fn new(
        vertices: Vec<[f64; 3]>,
        triangles: Vec<[usize; 3]>,
        conformal_factor: Option<Vec<f64>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::DegenerateMesh("no triangles".into()));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateMesh("non-finite vertex coordinate".into()));
        }
        let mut used = vec![false; nv];
        let mut scale = 0.0f64;
        for t in &triangles {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::DegenerateMesh(format!("triangle {t:?} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::DegenerateMesh(format!("triangle {t:?} repeats a vertex")));
            }
            for &v in t {
                used[v] = true;
            }
            for k in 0..3 {
                scale = scale.max(dist(vertices[t[k]], vertices[t[(k + 1) % 3]]));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::DegenerateMesh(format!("vertex {v} is not used by any triangle")));
        }
        for (i, t) in triangles.iter().enumerate() {
            let a = vertices[t[0]];
            let n = cross(sub(vertices[t[1]], a), sub(vertices[t[2]], a));
            if dot(n, n).sqrt() <= 1e-14 * scale * scale {
                return Err(Error::DegenerateMesh(format!("triangle {i} has zero area")));
            }
        }

        // Directed edges must be unique (consistent orientation, manifold).
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (i, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if directed.insert(e, i).is_some() {
                    return Err(Error::DegenerateMesh(format!(
                        "edge {e:?} is traversed twice in the same direction (non-manifold or inconsistently oriented)"
                    )));
                }
            }
        }
        let mut next: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(Error::DegenerateMesh(format!("boundary is pinched at vertex {a}")));
            }
        }
        let start = match next.keys().next() {
            Some(&s) => s,
            None => return Err(Error::DegenerateMesh("surface has no boundary".into())),
        };
        let mut boundary_loop = vec![start];
        let mut cur = next[&start];
        while cur != start {
            boundary_loop.push(cur);
            cur = match next.get(&cur) {
                Some(&n) => n,
                None => return Err(Error::DegenerateMesh("boundary is not closed".into())),
            };
            if boundary_loop.len() > next.len() {
                return Err(Error::DegenerateMesh("boundary is not a simple cycle".into()));
            }
        }
        if boundary_loop.len() != next.len() {
            return Err(Error::DegenerateMesh(format!(
                "boundary has more than one component ({} of {} boundary vertices on the first loop)",
                boundary_loop.len(),
                next.len()
            )));
        }
        if boundary_loop.len() < 3 {
            return Err(Error::DegenerateMesh("boundary loop has fewer than 3 vertices".into()));
        }

        if let Some(rho) = &conformal_factor {
            if rho.len() != nv {
                return Err(Error::InvalidInput(format!(
                    "conformal factor has {} values for {nv} vertices",
                    rho.len()
                )));
            }
            if let Some(i) = rho.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(Error::InvalidInput(format!("conformal factor is not positive at vertex {i}")));
            }
            if let Some(&i) = boundary_loop.iter().find(|&&i| (rho[i] - 1.0).abs() > 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "conformal factor must equal 1 on the boundary, got {} at vertex {i}",
                    rho[i]
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_loop,
            conformal_factor,
        })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }

    pub fn conformal_factor(&self) -> Option<&[f64]> {
        self.conformal_factor.as_deref()
    }

    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0]];
                let n = cross(sub(self.vertices[t[1]], a), sub(self.vertices[t[2]], a));
                0.5 * dot(n, n).sqrt()
            })
            .sum()
    }

    /// Lengths of the boundary edges, edge `k` joining loop vertices `k` and
    /// `k + 1`.
    pub fn boundary_edge_lengths(&self) -> Vec<f64> {
        let b = &self.boundary_loop;
        (0..b.len())
            .map(|k| dist(self.vertices[b[k]], self.vertices[b[(k + 1) % b.len()]]))
            .collect()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edge_lengths().iter().sum()
    }

    /// Moves interior vertices by `f(position)`; boundary vertices stay fixed.
    /// The result is revalidated.
    pub fn map_interior(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Self> {
        let mut on_boundary = vec![false; self.vertices.len()];
        for &b in &self.boundary_loop {
            on_boundary[b] = true;
        }
        let vertices = self
            .vertices
            .iter()
            .zip(&on_boundary)
            .map(|(&p, &b)| if b { p } else { f(p) })
            .collect();
        Self::new(vertices, self.triangles.clone(), self.conformal_factor.clone())
    }
}

/// Triangulates the annulus between two closed polygonal rings given by
/// increasing angles in `[0, 2π)`. Triangles are counterclockwise when the
/// outer ring surrounds the inner one.
fn stitch(inner: &[(usize, f64)], outer: &[(usize, f64)], tris: &mut Vec<[usize; 3]>) {
    let (ni, no) = (inner.len(), outer.len());
    let ang = |ring: &[(usize, f64)], k: usize| ring[k % ring.len()].1 + 2.0 * PI * (k / ring.len()) as f64;
    let (mut i, mut j) = (0, 0);
    while i < ni || j < no {
        let advance_inner = if i == ni {
            false
        } else if j == no {
            true
        } else {
            ang(inner, i + 1) <= ang(outer, j + 1)
        };
        let (a, b) = (inner[i % ni].0, outer[j % no].0);
        if advance_inner {
            tris.push([a, b, inner[(i + 1) % ni].0]);
            i += 1;
        } else {
            tris.push([a, b, outer[(j + 1) % no].0]);
            j += 1;
        }
    }
}

/// Unit disk in the plane `z = 0`: concentric rings at radii `k / K`,
/// `K = ceil(1 / h)`, with `6k` vertices on ring `k`. The boundary loop runs
/// counterclockwise from `(1, 0)`.
pub fn mesh_disk(h: f64) -> Result<SurfaceMesh> {
    if !(h.is_finite() && h > 0.0 && h <= 1.0) {
        return Err(Error::DegenerateMesh(format!("edge length h = {h} must lie in (0, 1]")));
    }
    let rings = (1.0 / h).ceil() as usize;
    let mut vertices = vec![[0.0, 0.0, 0.0]];
    let mut tris = Vec::new();
    let mut prev: Vec<(usize, f64)> = vec![(0, 0.0)];
    for k in 1..=rings {
        let r = k as f64 / rings as f64;
        let count = 6 * k;
        let ring: Vec<(usize, f64)> = (0..count)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / count as f64;
                vertices.push([r * t.cos(), r * t.sin(), 0.0]);
                (vertices.len() - 1, t)
            })
            .collect();
        if k == 1 {
            for j in 0..count {
                tris.push([0, ring[j].0, ring[(j + 1) % count].0]);
            }
        } else {
            stitch(&prev, &ring, &mut tris);
        }
        prev = ring;
    }
    let mut mesh = SurfaceMesh::new(vertices, tris, None)?;
    // Start the loop at (1, 0), which is the first vertex of the last ring.
    let first = mesh.vertices.len() - 6 * rings;
    let pos = mesh.boundary_loop.iter().position(|&v| v == first).expect("boundary contains ring start");
    mesh.boundary_loop.rotate_left(pos);
    Ok(mesh)
}

/// Parameters of [`mesh_torus_minus_cap_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusOptions {
    /// Geodesic radius of the removed cap; default `0.8 π r`.
    pub cap_radius: Option<f64>,
    /// Boundary edges are `h / boundary_refinement` long.
    pub boundary_refinement: f64,
    /// Exponent of the layer grading away from the boundary.
    pub grading: f64,
}

impl Default for TorusOptions {
    fn default() -> Self {
        Self {
            cap_radius: None,
            boundary_refinement: 5.0,
            grading: 3.0,
        }
    }
}

fn torus_point(big_r: f64, r: f64, u: f64, v: f64) -> [f64; 3] {
    let w = big_r + r * v.cos();
    [w * u.cos(), w * u.sin(), r * v.sin()]
}

/// Torus with radii `R > r` and a cap removed around the outer equator point
/// `(R + r, 0, 0)`; see [`mesh_torus_minus_cap_with`].
pub fn mesh_torus_minus_cap(big_r: f64, r: f64, h: f64) -> Result<SurfaceMesh> {
    mesh_torus_minus_cap_with(big_r, r, h, TorusOptions::default())
}

/// The mesh lives on the parameter square `[−π, π]²` centred on the cap. The
/// cap is the ellipse with semi-axes `ρ / (R + r)` and `ρ / r`; layers blend
/// the ellipse into the square boundary along rays from the centre, and
/// opposite square edges are identified. Boundary spacing is refined towards
/// the cap; layers are graded geometrically in the blend parameter.
pub fn mesh_torus_minus_cap_with(big_r: f64, r: f64, h: f64, opts: TorusOptions) -> Result<SurfaceMesh> {
    if !(r > 0.0 && big_r > r && big_r.is_finite()) {
        return Err(Error::DegenerateMesh(format!("need 0 < r < R, got R = {big_r}, r = {r}")));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::DegenerateMesh(format!("edge length h = {h} must be positive")));
    }
    if !(opts.boundary_refinement >= 1.0 && opts.grading >= 1.0) {
        return Err(Error::DegenerateMesh("refinement and grading must be at least 1".into()));
    }
    let rho = opts.cap_radius.unwrap_or(0.8 * PI * r);
    let (au, av) = (rho / (big_r + r), rho / r);
    if !(rho > 0.0 && au < PI && av < PI) {
        return Err(Error::DegenerateMesh(format!("cap radius {rho} does not fit on the torus")));
    }
    // The thinnest strip left between the cap and its periodic copy.
    let strip = ((PI - av) * r).min((PI - au) * (big_r - r));
    if strip < 2.0 * h {
        return Err(Error::DegenerateMesh(format!(
            "h = {h} is too coarse for the strip of width {strip:.3} left around the cap"
        )));
    }

    let ellipse = |phi: f64| 1.0 / ((phi.cos() / au).powi(2) + (phi.sin() / av).powi(2)).sqrt();
    // Physical cap perimeter, for the boundary vertex count.
    let perimeter: f64 = {
        let m = 4096;
        let pt = |k: usize| {
            let phi = 2.0 * PI * k as f64 / m as f64;
            let e = ellipse(phi);
            torus_point(big_r, r, e * phi.cos(), e * phi.sin())
        };
        (0..m).map(|k| dist(pt(k), pt(k + 1))).sum()
    };
    let hb = h / opts.boundary_refinement;
    let quarter = ((perimeter / hb) / 4.0).ceil().max(4.0) as usize;
    let nb = 4 * quarter;
    let layers = ((LAYERS_PER_UNIT / h).ceil() as usize).max(8);

    // Square boundary walk: up the right edge from the corner (π, −π), then
    // left along the top, down the left edge, right along the bottom.
    let square: Vec<[f64; 2]> = (0..nb)
        .map(|k| {
            let t = (k % quarter) as f64 / quarter as f64;
            let y = -PI + 2.0 * PI * t;
            match k / quarter {
                0 => [PI, y],
                1 => [-y, PI],
                2 => [-PI, -y],
                _ => [y, -PI],
            }
        })
        .collect();

    let mut param: Vec<[f64; 2]> = Vec::with_capacity(nb * (layers + 1));
    let mut index = vec![vec![0usize; nb]; layers + 1];
    let mut outer_ids: HashMap<(i64, i64), usize> = HashMap::new();
    let lattice = 2.0 * PI / quarter as f64;
    for (j, row) in index.iter_mut().enumerate() {
        let t = (j as f64 / layers as f64).powf(opts.grading);
        for (k, q) in square.iter().enumerate() {
            let phi = q[1].atan2(q[0]);
            let rq = q[0].hypot(q[1]);
            let rad = (1.0 - t) * ellipse(phi) + t * rq;
            let p = if j == layers { *q } else { [rad * phi.cos(), rad * phi.sin()] };
            if j == layers {
                // Opposite edges of the square are the same circle on the torus.
                let key = (
                    ((p[0] + PI) / lattice).round() as i64 % quarter as i64,
                    ((p[1] + PI) / lattice).round() as i64 % quarter as i64,
                );
                if let Some(&id) = outer_ids.get(&key) {
                    row[k] = id;
                    continue;
                }
                outer_ids.insert(key, param.len());
            }
            param.push(p);
            row[k] = param.len() - 1;
        }
    }
    let mut tris = Vec::with_capacity(2 * nb * layers);
    for j in 0..layers {
        for k in 0..nb {
            let k1 = (k + 1) % nb;
            let (a, b, c, d) = (index[j][k], index[j][k1], index[j + 1][k], index[j + 1][k1]);
            tris.push([a, d, b]);
            tris.push([a, c, d]);
        }
    }
    let vertices = param.iter().map(|p| torus_point(big_r, r, p[0], p[1])).collect();
    SurfaceMesh::new(vertices, tris, None)
}

//! Discrete harmonic extension with the cotangent stiffness matrix and the
//! resulting boundary Schur complement.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::{dist, dot, SurfaceMesh};
use crate::error::{Error, Result};

/// Columns solved per block against the interior factorization.
const BLOCK: usize = 64;

/// DN map on boundary vertex values, `M_B⁻¹ (A_BB − A_BI A_II⁻¹ A_IB)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDN {
    /// Arclength coordinate of each boundary vertex along the loop.
    pub arclength: Vec<f64>,
    /// Total boundary length.
    pub length: f64,
    /// Lumped boundary mass.
    pub mass: Vec<f64>,
    /// Row-major `n_b × n_b`.
    pub matrix: Vec<f64>,
}

impl DiscreteDN {
    pub fn size(&self) -> usize {
        self.arclength.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.size() + j]
    }

    /// `max_i |sum_j DN_ij|` relative to the largest entry.
    pub fn constant_defect(&self) -> f64 {
        let n = self.size();
        let scale = self.matrix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (0..n)
            .map(|i| (0..n).map(|j| self.entry(i, j)).sum::<f64>().abs())
            .fold(0.0, f64::max)
            / scale.max(f64::MIN_POSITIVE)
    }

    /// Largest relative asymmetry of `M DN` (symmetry in the mass inner product).
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let a = self.mass[i] * self.entry(i, j);
                let b = self.mass[j] * self.entry(j, i);
                worst = worst.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }
}

/// Cotangent stiffness matrix as a sorted map of `(row, col)` entries.
pub(crate) fn cotangent_stiffness(mesh: &SurfaceMesh) -> BTreeMap<(usize, usize), f64> {
    let v = mesh.vertices();
    let mut a = BTreeMap::new();
    for t in mesh.triangles() {
        for k in 0..3 {
            let (i, j, o) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
            let p = [v[i][0] - v[o][0], v[i][1] - v[o][1], v[i][2] - v[o][2]];
            let q = [v[j][0] - v[o][0], v[j][1] - v[o][1], v[j][2] - v[o][2]];
            let cr = [
                p[1] * q[2] - p[2] * q[1],
                p[2] * q[0] - p[0] * q[2],
                p[0] * q[1] - p[1] * q[0],
            ];
            let w = 0.5 * dot(p, q) / dot(cr, cr).sqrt();
            *a.entry((i, j)).or_insert(0.0) -= w;
            *a.entry((j, i)).or_insert(0.0) -= w;
            *a.entry((i, i)).or_insert(0.0) += w;
            *a.entry((j, j)).or_insert(0.0) += w;
        }
    }
    a
}

/// Discrete DN map of `mesh`. The conformal factor is validated by the mesh
/// but does not enter: the Dirichlet energy is conformally invariant.
pub fn dn_from_mesh(mesh: &SurfaceMesh) -> Result<DiscreteDN> {
    let nv = mesh.vertices().len();
    let bl = mesh.boundary_loop();
    let nb = bl.len();
    // Local numbering: boundary vertices by loop position, interior in order.
    let mut slot = vec![usize::MAX; nv];
    for (k, &b) in bl.iter().enumerate() {
        slot[b] = k;
    }
    let mut ni = 0;
    let mut is_boundary = vec![false; nv];
    for &b in bl {
        is_boundary[b] = true;
    }
    for v in 0..nv {
        if !is_boundary[v] {
            slot[v] = ni;
            ni += 1;
        }
    }
    if ni == 0 {
        return Err(Error::SingularInterior("mesh has no interior vertices".into()));
    }

    let a = cotangent_stiffness(mesh);
    let mut a_ii = Vec::new();
    // Boundary-interior coupling, stored per boundary vertex.
    let mut a_bi: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    let mut s = vec![0.0; nb * nb];
    for (&(i, j), &x) in &a {
        match (is_boundary[i], is_boundary[j]) {
            (false, false) => a_ii.push(Triplet::new(slot[i], slot[j], x)),
            (true, false) => a_bi[slot[i]].push((slot[j], x)),
            (true, true) => s[slot[i] * nb + slot[j]] += x,
            (false, true) => {}
        }
    }
    let a_ii = SparseColMat::<usize, f64>::try_new_from_triplets(ni, ni, &a_ii)
        .map_err(|e| Error::SingularInterior(format!("assembly: {e:?}")))?;
    let llt = a_ii
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::SingularInterior(format!("cholesky: {e:?}")))?;

    // A_IB = A_BI^T: columns are the boundary rows' couplings.
    let blocks: Vec<(usize, Vec<f64>)> = (0..nb)
        .step_by(BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let width = BLOCK.min(nb - start);
            let mut rhs = Mat::<f64>::zeros(ni, width);
            for c in 0..width {
                for &(k, x) in &a_bi[start + c] {
                    rhs[(k, c)] = x;
                }
            }
            llt.solve_in_place(rhs.as_mut());
            // Column block of A_BI A_II⁻¹ A_IB.
            let mut out = vec![0.0; nb * width];
            for (row, coupling) in a_bi.iter().enumerate() {
                for c in 0..width {
                    out[row * width + c] = coupling.iter().map(|&(k, x)| x * rhs[(k, c)]).sum();
                }
            }
            (start, out)
        })
        .collect();
    for (start, out) in blocks {
        let width = BLOCK.min(nb - start);
        for row in 0..nb {
            for c in 0..width {
                s[row * nb + start + c] -= out[row * width + c];
            }
        }
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularInterior("Schur complement is not finite".into()));
    }

    let verts = mesh.vertices();
    let edges: Vec<f64> = (0..nb).map(|k| dist(verts[bl[k]], verts[bl[(k + 1) % nb]])).collect();
    let mass: Vec<f64> = (0..nb).map(|k| 0.5 * (edges[k] + edges[(k + nb - 1) % nb])).collect();
    let mut arclength = Vec::with_capacity(nb);
    let mut acc = 0.0;
    for e in &edges {
        arclength.push(acc);
        acc += e;
    }
    for i in 0..nb {
        for j in 0..nb {
            s[i * nb + j] /= mass[i];
        }
    }
    Ok(DiscreteDN {
        arclength,
        length: acc,
        mass,
        matrix: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::mesh::mesh_disk;

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let m = mesh_disk(0.25).unwrap();
        let a = cotangent_stiffness(&m);
        let mut rows = vec![0.0; m.vertices().len()];
        for (&(i, _), &x) in &a {
            rows[i] += x;
        }
        assert!(rows.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn disk_dn_annihilates_constants_and_is_symmetric() {
        let dn = dn_from_mesh(&mesh_disk(0.1).unwrap()).unwrap();
        assert!(dn.constant_defect() < 1e-8);
        assert!(dn.symmetry_defect() < 1e-8);
        assert!((dn.length - 2.0 * std::f64::consts::PI).abs() < 0.01);
    }
}

//! Ground-truth DN operators: the closed-form disk and finite-element maps
//! of triangulated surfaces.

mod fem;
mod mesh;
mod off;

pub use fem::{dn_from_mesh, DiscreteDN};
pub use mesh::{mesh_disk, mesh_torus_minus_cap, mesh_torus_minus_cap_with, SurfaceMesh, TorusOptions};
pub use off::{parse_off, read_off, write_off};

use faer::{Mat, Side};
use faer::linalg::solvers::Solve;
use num_complex::Complex64 as C64;

use crate::boundary::GridSpec;
use crate::error::{Error, Result};
use crate::operator::{calibrate_orientation, BoundaryOperator, Orientation};

/// DN map of the disk whose boundary has circumference `L`: mode `n` goes to
/// `2π|n| / L` (that is, `|n|` on the unit disk).
pub fn dn_disk(grid: GridSpec) -> BoundaryOperator {
    BoundaryOperator::diagonal(grid, |n| C64::new(grid.wavenumber(n).abs(), 0.0))
}

/// Fourier realization of a discrete DN map on `grid`. Vertex values and
/// Fourier modes are related by weighted least squares (weights = lumped
/// mass) at the vertex arclength coordinates, rescaled so the boundary has
/// length `L`. The orientation is calibrated afterwards.
pub fn to_fourier(dn: &DiscreteDN, grid: GridSpec) -> Result<BoundaryOperator> {
    let nb = dn.size();
    let size = grid.size();
    if nb < 2 * size {
        return Err(Error::Underresolved {
            vertices: nb,
            required: 2 * size,
            modes: grid.modes,
        });
    }
    let ell = dn.length;
    let e = Mat::from_fn(nb, size, |k, j| {
        let n = grid.mode_at(j) as f64;
        C64::from_polar(1.0, 2.0 * std::f64::consts::PI * n * dn.arclength[k] / ell)
    });
    // Weighted adjoint Eᴴ W.
    let ehw = Mat::from_fn(size, nb, |j, k| e[(k, j)].conj() * dn.mass[k]);
    let gram = &ehw * &e;
    let gram = Mat::from_fn(size, size, |i, j| (gram[(i, j)] + gram[(j, i)].conj()) * 0.5);
    let d = Mat::from_fn(nb, nb, |i, j| C64::new(dn.entry(i, j), 0.0));
    let mut rhs = &ehw * (&d * &e);
    let llt = gram
        .llt(Side::Lower)
        .map_err(|err| Error::Linalg(format!("boundary interpolation: {err:?}")))?;
    llt.solve_in_place(rhs.as_mut());
    let factor = C64::new(ell / grid.length, 0.0);
    // Enforce the exact realness symmetry that rounding leaves slightly off.
    let m = Mat::from_fn(size, size, |i, j| {
        let a = rhs[(i, j)];
        let b = rhs[(size - 1 - i, size - 1 - j)].conj();
        (a + b) * 0.5 * factor
    });
    let op = BoundaryOperator::new(grid, m, Orientation::Positive)?;
    Ok(calibrate_orientation(&op)?.0)
}

/// `to_fourier(dn_from_mesh(mesh), grid)`.
pub fn dn_mesh_operator(mesh: &SurfaceMesh, grid: GridSpec) -> Result<BoundaryOperator> {
    to_fourier(&dn_from_mesh(mesh)?, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundaryFunction;

    #[test]
    fn disk_examples() {
        let g = GridSpec::unit_circle(8).unwrap();
        let lam = dn_disk(g);
        let cos3 = BoundaryFunction::from_fn(g, |s| C64::new((3.0 * s).cos(), 0.0));
        let out = lam.apply(&cos3).unwrap();
        assert!((&out - &cos3.scale(C64::new(3.0, 0.0))).norm() < 1e-13);
        assert!(lam.apply(&BoundaryFunction::unit(g)).unwrap().norm() == 0.0);
        let sin = BoundaryFunction::from_fn(g, |s| C64::new(s.sin(), 0.0));
        assert!((&lam.apply(&sin).unwrap() - &sin).norm() < 1e-13);
    }

    #[test]
    fn underresolved_boundary_is_rejected() {
        let dn = dn_from_mesh(&mesh_disk(0.25).unwrap()).unwrap();
        assert_eq!(dn.size(), 24);
        assert!(matches!(
            to_fourier(&dn, GridSpec::unit_circle(8).unwrap()),
            Err(Error::Underresolved { .. })
        ));
    }

    #[test]
    fn fem_disk_is_close_to_closed_form() {
        let g = GridSpec::unit_circle(8).unwrap();
        let lam = dn_mesh_operator(&mesh_disk(0.05).unwrap(), g).unwrap();
        assert!(lam.is_real());
        assert_eq!(lam.orientation(), Orientation::Positive);
        let exact = dn_disk(g);
        for n in -4i64..=4 {
            let d = (lam.entry(n, n) - exact.entry(n, n)).norm();
            assert!(d <= 0.05 * (n.abs() as f64).max(1.0), "mode {n}: {d}");
        }
        // Constants are annihilated.
        let col0 = lam.apply(&BoundaryFunction::unit(g)).unwrap();
        assert!(col0.norm() < 1e-8 * lam.norm().unwrap());
    }
}

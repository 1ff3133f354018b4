//! Triangle meshes of patches projected stereographically to R^3.

use std::io::{self, Write};

use nalgebra::{Vector3, Vector4};
use rayon::prelude::*;

use crate::error::{GeomError, Result};
use crate::forms::{GridSpec, SurfacePatch};
use crate::s3core::{S3Point, Stereographic};

/// Vertices closer than this (chordal distance in R^4) to the projection
/// pole trigger pole reselection.
pub const MESH_POLE_TOL: f64 = 1e-3;

pub const DEFAULT_POLE: S3Point = S3Point { w: -1.0, x: 0.0, y: 0.0, z: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct MeshR3 {
    pub vertices: Vec<Vector3<f64>>,
    /// 0-based vertex indices.
    pub faces: Vec<[usize; 3]>,
    pub tag: String,
    pub params: Vec<(String, f64)>,
    pub grid: GridSpec,
    pub pole: S3Point,
    /// Whether `pole` replaced the requested one.
    pub pole_reselected: bool,
}

/// ±e_i for the four coordinate axes.
pub fn signed_basis_poles() -> [S3Point; 8] {
    let mut out = [S3Point::IDENTITY; 8];
    for i in 0..4 {
        for (k, s) in [1.0, -1.0].into_iter().enumerate() {
            let mut v = Vector4::zeros();
            v[i] = s;
            out[2 * i + k] = S3Point::from_vector(&v);
        }
    }
    out
}

fn min_distance(points: &[Vector4<f64>], pole: S3Point) -> f64 {
    let p = pole.to_vector();
    points.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min)
}

/// Grid faces: each cell (i,j) splits into two triangles.
pub fn grid_faces(grid: &GridSpec) -> Vec<[usize; 3]> {
    let mut faces = Vec::with_capacity(2 * grid.nu.saturating_sub(1) * grid.nv.saturating_sub(1));
    for i in 0..grid.nu.saturating_sub(1) {
        for j in 0..grid.nv.saturating_sub(1) {
            let k = i * grid.nv + j;
            faces.push([k, k + grid.nv, k + grid.nv + 1]);
            faces.push([k, k + grid.nv + 1, k + 1]);
        }
    }
    faces
}

/// Samples the patch on the grid and projects from `pole`. If a vertex
/// comes within `MESH_POLE_TOL` of the pole, the signed basis pole with the
/// largest minimum distance is used instead.
pub fn mesh_from_patch(p: &SurfacePatch, grid: &GridSpec, pole: S3Point) -> Result<MeshR3> {
    if grid.nu < 2 || grid.nv < 2 {
        return Err(GeomError::Domain(format!("mesh grid needs at least 2x2 samples, got {}x{}", grid.nu, grid.nv)));
    }
    let points: Vec<Vector4<f64>> = grid.points().par_iter().map(|&(u, v)| p.value(u, v)).collect();
    if let Some(bad) = points.iter().find(|q| !q.iter().all(|x| x.is_finite())) {
        return Err(GeomError::Domain(format!("patch produced a non-finite point {bad:?}")));
    }
    let mut chosen = pole;
    let mut reselected = false;
    if min_distance(&points, pole) < MESH_POLE_TOL {
        let (best, dist) = signed_basis_poles()
            .into_iter()
            .map(|c| (c, min_distance(&points, c)))
            .fold((pole, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if dist < MESH_POLE_TOL {
            return Err(GeomError::PoleProximity(dist));
        }
        chosen = best;
        reselected = true;
    }
    let proj = Stereographic::new(chosen);
    let vertices = points
        .par_iter()
        .map(|q| proj.project(S3Point::from_vector(q)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeshR3 {
        vertices,
        faces: grid_faces(grid),
        tag: p.tag.clone(),
        params: p.params.clone(),
        grid: *grid,
        pole: chosen,
        pole_reselected: reselected,
    })
}

impl MeshR3 {
    pub fn is_finite(&self) -> bool {
        self.vertices.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn header_lines(&self) -> Vec<String> {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let g = &self.grid;
        vec![
            format!("s3flat {} {}", self.tag, params.join(" ")),
            format!("grid {}x{} u=[{},{}] v=[{},{}]", g.nu, g.nv, g.umin, g.umax, g.vmin, g.vmax),
            format!("pole {} {} {} {}", self.pole.w, self.pole.x, self.pole.y, self.pole.z),
        ]
    }

    /// Wavefront OBJ with 17 significant digits and 1-based faces.
    pub fn write_obj(&self, mut w: impl Write) -> io::Result<()> {
        for line in self.header_lines() {
            writeln!(w, "# {line}")?;
        }
        for v in &self.vertices {
            writeln!(w, "v {:.16e} {:.16e} {:.16e}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }

    /// ASCII PLY.
    pub fn write_ply(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        for line in self.header_lines() {
            writeln!(w, "comment {line}")?;
        }
        writeln!(w, "element vertex {}", self.vertices.len())?;
        for c in ["x", "y", "z"] {
            writeln!(w, "property double {c}")?;
        }
        writeln!(w, "element face {}", self.faces.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(w, "end_header")?;
        for v in &self.vertices {
            writeln!(w, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::theorem1_patch;
    use crate::forms::Domain;

    #[test]
    fn counts_and_faces() {
        let y = theorem1_patch(2.0, 3.0, false).unwrap();
        let m = mesh_from_patch(&y, &GridSpec::square(64, 64), DEFAULT_POLE).unwrap();
        assert_eq!(m.vertices.len(), 4096);
        assert_eq!(m.faces.len(), 7938);
        assert!(m.is_finite());
        assert!(m.faces.iter().flatten().all(|&k| k < 4096));
    }

    #[test]
    fn obj_is_deterministic() {
        let y = theorem1_patch(2.0, 3.0, false).unwrap();
        let grid = GridSpec::square(8, 6);
        let write = || {
            let mut buf = vec![];
            mesh_from_patch(&y, &grid, DEFAULT_POLE).unwrap().write_obj(&mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = write();
        assert_eq!(a, write());
        assert_eq!(a.lines().filter(|l| l.starts_with("v ")).count(), 48);
        assert_eq!(a.lines().filter(|l| l.starts_with("f ")).count(), 70);
        assert!(a.contains("\nf 1 7 8\n"));
    }

    #[test]
    fn ply_header_counts() {
        let y = theorem1_patch(2.0, 3.0, false).unwrap();
        let mut buf = vec![];
        mesh_from_patch(&y, &GridSpec::square(4, 5), DEFAULT_POLE).unwrap().write_ply(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("element vertex 20\n") && s.contains("element face 24\n"));
    }

    #[test]
    fn pole_reselection() {
        // the full product passes through (1,0,0,0) at the origin
        let x = theorem1_patch(2.0, 3.0, true).unwrap();
        let m = mesh_from_patch(&x, &GridSpec::square(5, 5), S3Point::IDENTITY).unwrap();
        assert!(m.pole_reselected && m.pole != S3Point::IDENTITY && m.is_finite());
    }

    #[test]
    fn pole_failure_when_every_pole_is_hit() {
        // a patch running through all eight signed basis points
        let poles = signed_basis_poles();
        let p = SurfacePatch::from_map("hits", Domain::PLANE, move |u, _| {
            let k = (u.round() as i64).clamp(0, 7) as usize;
            poles[k].to_vector()
        });
        let grid = GridSpec::new(0.0, 7.0, 0.0, 1.0, 8, 2);
        assert!(matches!(mesh_from_patch(&p, &grid, DEFAULT_POLE), Err(GeomError::PoleProximity(_))));
    }
}

//! Legacy-ASCII VTK unstructured-grid export (cell type 5 triangles,
//! type 10 tetrahedra) with optional point scalars and cell vectors.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::fem::{CellVectorField, NodalField};
use crate::mesh::{FaceTag, TetMesh, TriMesh};
use crate::scalar::Real;

pub struct VtkDataset<'a, S> {
    pub point_scalars: Vec<(&'a str, &'a NodalField<S>)>,
    pub cell_vectors: Vec<(&'a str, &'a CellVectorField<S>)>,
}

impl<'a, S> Default for VtkDataset<'a, S> {
    fn default() -> Self {
        VtkDataset {
            point_scalars: Vec::new(),
            cell_vectors: Vec::new(),
        }
    }
}

fn header(out: &mut String, title: &str) {
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title);
    out.push('\n');
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
}

fn points<S: Real>(out: &mut String, coords: impl Iterator<Item = [S; 3]>, n: usize) {
    writeln!(out, "POINTS {n} double").unwrap();
    for p in coords {
        writeln!(out, "{} {} {}", p[0].to_f64_(), p[1].to_f64_(), p[2].to_f64_()).unwrap();
    }
}

fn attach_data<S: Real>(out: &mut String, n_points: usize, n_cells: usize, data: &VtkDataset<S>) {
    if !data.cell_vectors.is_empty() {
        writeln!(out, "CELL_DATA {n_cells}").unwrap();
        for (name, field) in &data.cell_vectors {
            writeln!(out, "VECTORS {name} double").unwrap();
            for v in &field.vectors {
                writeln!(out, "{} {} {}", v[0].to_f64_(), v[1].to_f64_(), v[2].to_f64_()).unwrap();
            }
        }
    }
    if !data.point_scalars.is_empty() {
        writeln!(out, "POINT_DATA {n_points}").unwrap();
        for (name, field) in &data.point_scalars {
            writeln!(out, "SCALARS {name} double 1").unwrap();
            out.push_str("LOOKUP_TABLE default\n");
            for v in &field.values {
                writeln!(out, "{}", v.to_f64_()).unwrap();
            }
        }
    }
}

pub fn tri_mesh_to_vtk<S: Real>(mesh: &TriMesh<S>, data: &VtkDataset<S>) -> String {
    let mut out = String::new();
    header(&mut out, "cross-section mesh");
    points(
        &mut out,
        mesh.vertices.iter().map(|v| [v[0], v[1], S::zero()]),
        mesh.vertices.len(),
    );
    let nt = mesh.triangles.len();
    writeln!(out, "CELLS {nt} {}", 4 * nt).unwrap();
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        out.push_str("5\n");
    }
    attach_data(&mut out, mesh.vertices.len(), nt, data);
    out
}

pub fn tet_mesh_to_vtk<S: Real>(mesh: &TetMesh<S>, data: &VtkDataset<S>) -> String {
    let mut out = String::new();
    header(&mut out, "extruded cylinder mesh");
    points(&mut out, mesh.vertices.iter().copied(), mesh.vertices.len());
    let nt = mesh.tets.len();
    writeln!(out, "CELLS {nt} {}", 5 * nt).unwrap();
    for t in &mesh.tets {
        writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    writeln!(out, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        out.push_str("10\n");
    }
    attach_data(&mut out, mesh.vertices.len(), nt, data);
    out
}

/// Boundary surface of a tet mesh with integer face tags
/// (0 lateral, 1 top, 2 bottom) as CELL_DATA.
pub fn tet_boundary_to_vtk<S: Real>(mesh: &TetMesh<S>) -> String {
    let mut out = String::new();
    header(&mut out, "boundary tags");
    points(&mut out, mesh.vertices.iter().copied(), mesh.vertices.len());
    let nf = mesh.boundary_faces.len();
    writeln!(out, "CELLS {nf} {}", 4 * nf).unwrap();
    for f in &mesh.boundary_faces {
        writeln!(out, "3 {} {} {}", f.verts[0], f.verts[1], f.verts[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {nf}").unwrap();
    for _ in 0..nf {
        out.push_str("5\n");
    }
    writeln!(out, "CELL_DATA {nf}").unwrap();
    out.push_str("SCALARS boundary_tag int 1\nLOOKUP_TABLE default\n");
    for f in &mesh.boundary_faces {
        let tag = match f.tag {
            FaceTag::Lateral => 0,
            FaceTag::Top => 1,
            FaceTag::Bottom => 2,
        };
        writeln!(out, "{tag}").unwrap();
    }
    out
}

pub fn write_file(path: &Path, content: &str) -> io::Result<()> {
    std::fs::write(path, content)
}

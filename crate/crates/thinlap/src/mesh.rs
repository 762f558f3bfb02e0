//! Simplicial meshes of the cross-section `omega` (triangles) and of the
//! unit-thickness cylinder `omega x (-1/2, 1/2)` (tetrahedra).
//!
//! Generation is deterministic: identical inputs produce bit-identical
//! vertex orderings and connectivity.

use std::collections::BTreeMap;

use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("extrusion requires at least one layer")]
    ZeroLayers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DomainTag {
    Disk,
    Rect,
}

/// Tag for a boundary face of an extruded mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceTag {
    Lateral,
    Top,
    Bottom,
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge<S> {
    pub verts: [usize; 2],
    pub normal: [S; 2],
    pub length: S,
}

#[derive(Debug, Clone)]
pub struct TriMesh<S> {
    pub vertices: Vec<[S; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge<S>>,
    pub domain_tag: DomainTag,
}

#[derive(Debug, Clone)]
pub struct BoundaryFace<S> {
    pub verts: [usize; 3],
    pub normal: [S; 3],
    pub area: S,
    pub tag: FaceTag,
}

#[derive(Debug, Clone)]
pub struct TetMesh<S> {
    pub vertices: Vec<[S; 3]>,
    /// Positively oriented vertex quadruples.
    pub tets: Vec<[usize; 4]>,
    pub boundary_faces: Vec<BoundaryFace<S>>,
    pub n_layers: usize,
    pub domain_tag: DomainTag,
}

pub fn tri_area<S: Real>(a: [S; 2], b: [S; 2], c: [S; 2]) -> S {
    ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) * S::half()
}

pub fn tet_volume<S: Real>(a: [S; 3], b: [S; 3], c: [S; 3], d: [S; 3]) -> S {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    let det = u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]);
    det / S::lit(6.0)
}

impl<S: Real> TriMesh<S> {
    pub fn area(&self) -> S {
        self.triangles
            .iter()
            .map(|t| {
                tri_area(
                    self.vertices[t[0]],
                    self.vertices[t[1]],
                    self.vertices[t[2]],
                )
            })
            .sum()
    }

    pub fn boundary_length(&self) -> S {
        self.boundary_edges.iter().map(|e| e.length).sum()
    }

    /// Vertex indices lying on the boundary, sorted.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .flat_map(|e| e.verts.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

impl<S: Real> TetMesh<S> {
    pub fn volume(&self) -> S {
        self.tets
            .iter()
            .map(|t| {
                tet_volume(
                    self.vertices[t[0]],
                    self.vertices[t[1]],
                    self.vertices[t[2]],
                    self.vertices[t[3]],
                )
            })
            .sum()
    }
}

/// Boundary edges are the edges used by exactly one triangle. The outward
/// normal of a CCW-traversed edge (a, b) is (b - a) rotated by -90 degrees.
fn compute_boundary_edges<S: Real>(
    vertices: &[[S; 2]],
    triangles: &[[usize; 3]],
) -> Vec<BoundaryEdge<S>> {
    let mut count: BTreeMap<(usize, usize), (usize, [usize; 2])> = BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = count.entry(key).or_insert((0, [a, b]));
            entry.0 += 1;
        }
    }
    count
        .into_values()
        .filter(|(n, _)| *n == 1)
        .map(|(_, [a, b])| {
            let d = [
                vertices[b][0] - vertices[a][0],
                vertices[b][1] - vertices[a][1],
            ];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            BoundaryEdge {
                verts: [a, b],
                normal: [d[1] / len, -d[0] / len],
                length: len,
            }
        })
        .collect()
}

/// Triangulation of the regular (6 * 4^n_refine)-gon inscribed in the unit
/// circle: a 6-triangle fan uniformly refined `n_refine` times with new
/// boundary vertices projected back onto the circle.
pub fn disk_mesh<S: Real>(n_refine: usize) -> TriMesh<S> {
    let mut vertices: Vec<[S; 2]> = vec![[S::zero(), S::zero()]];
    for k in 0..6 {
        let theta = S::lit(k as f64) * S::FRAC_PI_3();
        vertices.push([theta.cos(), theta.sin()]);
    }
    let triangles: Vec<[usize; 3]> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    let mut mesh = TriMesh {
        boundary_edges: compute_boundary_edges(&vertices, &triangles),
        vertices,
        triangles,
        domain_tag: DomainTag::Disk,
    };
    for _ in 0..n_refine {
        mesh = refine(&mesh);
    }
    mesh
}

/// Unit square split into nx * ny cells, each cell cut along the
/// bottom-left-to-top-right diagonal.
pub fn rect_mesh<S: Real>(nx: usize, ny: usize) -> TriMesh<S> {
    assert!(nx >= 1 && ny >= 1);
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                S::from_usize_(i) / S::from_usize_(nx),
                S::from_usize_(j) / S::from_usize_(ny),
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    TriMesh {
        boundary_edges: compute_boundary_edges(&vertices, &triangles),
        vertices,
        triangles,
        domain_tag: DomainTag::Rect,
    }
}

/// Uniform red refinement: each triangle becomes four. On disk meshes the
/// new midpoints of boundary edges are projected to the unit circle.
pub fn refine<S: Real>(mesh: &TriMesh<S>) -> TriMesh<S> {
    let boundary: std::collections::BTreeSet<(usize, usize)> = mesh
        .boundary_edges
        .iter()
        .map(|e| (e.verts[0].min(e.verts[1]), e.verts[0].max(e.verts[1])))
        .collect();
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    // Deterministic midpoint ordering: iterate triangles in order, edges in
    // local order, first occurrence allocates the vertex.
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            midpoint.entry(key).or_insert_with(|| {
                let mut m = [
                    (vertices[a][0] + vertices[b][0]) * S::half(),
                    (vertices[a][1] + vertices[b][1]) * S::half(),
                ];
                if mesh.domain_tag == DomainTag::Disk && boundary.contains(&key) {
                    let r = (m[0] * m[0] + m[1] * m[1]).sqrt();
                    m = [m[0] / r, m[1] / r];
                }
                vertices.push(m);
                vertices.len() - 1
            });
        }
    }
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for t in &mesh.triangles {
        let key = |a: usize, b: usize| (a.min(b), a.max(b));
        let m01 = midpoint[&key(t[0], t[1])];
        let m12 = midpoint[&key(t[1], t[2])];
        let m20 = midpoint[&key(t[2], t[0])];
        triangles.push([t[0], m01, m20]);
        triangles.push([t[1], m12, m01]);
        triangles.push([t[2], m20, m12]);
        triangles.push([m01, m12, m20]);
    }
    TriMesh {
        boundary_edges: compute_boundary_edges(&vertices, &triangles),
        vertices,
        triangles,
        domain_tag: mesh.domain_tag,
    }
}

/// Extrude a triangulation of `omega` into `omega x (-1/2, 1/2)` with
/// `n_layers` layers. Each prism splits into three tets; the quad-face
/// diagonal runs from the bottom copy of the larger global index to the top
/// copy of the smaller, so adjacent prisms conform.
pub fn extrude<S: Real>(base: &TriMesh<S>, n_layers: usize) -> Result<TetMesh<S>, MeshError> {
    if n_layers == 0 {
        return Err(MeshError::ZeroLayers);
    }
    let nv = base.vertices.len();
    let mut vertices = Vec::with_capacity(nv * (n_layers + 1));
    for k in 0..=n_layers {
        let z = S::from_usize_(k) / S::from_usize_(n_layers) - S::half();
        for v in &base.vertices {
            vertices.push([v[0], v[1], z]);
        }
    }
    let mut tets = Vec::with_capacity(3 * base.triangles.len() * n_layers);
    for k in 0..n_layers {
        let bot = k * nv;
        let top = (k + 1) * nv;
        for t in &base.triangles {
            let mut s = *t;
            s.sort_unstable();
            let [i0, i1, i2] = s;
            let (b0, b1, b2) = (bot + i0, bot + i1, bot + i2);
            let (t0, t1, t2) = (top + i0, top + i1, top + i2);
            for cand in [[b0, b1, b2, t0], [b1, b2, t0, t1], [b2, t0, t1, t2]] {
                tets.push(orient_tet(&vertices, cand));
            }
        }
    }
    let boundary_faces = compute_boundary_faces(&vertices, &tets);
    Ok(TetMesh {
        vertices,
        tets,
        boundary_faces,
        n_layers,
        domain_tag: base.domain_tag,
    })
}

fn orient_tet<S: Real>(vertices: &[[S; 3]], mut t: [usize; 4]) -> [usize; 4] {
    let vol = tet_volume(
        vertices[t[0]],
        vertices[t[1]],
        vertices[t[2]],
        vertices[t[3]],
    );
    if vol < S::zero() {
        t.swap(2, 3);
    }
    t
}

fn compute_boundary_faces<S: Real>(
    vertices: &[[S; 3]],
    tets: &[[usize; 4]],
) -> Vec<BoundaryFace<S>> {
    let mut count: BTreeMap<[usize; 3], (usize, usize)> = BTreeMap::new();
    for (ti, t) in tets.iter().enumerate() {
        for f in [
            [t[0], t[1], t[2]],
            [t[0], t[1], t[3]],
            [t[0], t[2], t[3]],
            [t[1], t[2], t[3]],
        ] {
            let mut key = f;
            key.sort_unstable();
            let e = count.entry(key).or_insert((0, ti));
            e.0 += 1;
        }
    }
    let mut faces = Vec::new();
    for (key, (n, owner)) in count {
        if n != 1 {
            continue;
        }
        let [a, b, c] = key;
        let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
        let u = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
        let v = [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]];
        let mut nrm = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let nlen = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
        let area = nlen * S::half();
        for x in &mut nrm {
            *x = *x / nlen;
        }
        // orient outward: away from the owning tet's centroid
        let t = tets[*&owner];
        let quarter = S::lit(0.25);
        let third = S::one() / S::lit(3.0);
        let mut cc = [S::zero(); 3];
        let mut fc = [S::zero(); 3];
        for d in 0..3 {
            cc[d] = (vertices[t[0]][d] + vertices[t[1]][d] + vertices[t[2]][d] + vertices[t[3]][d])
                * quarter;
            fc[d] = (pa[d] + pb[d] + pc[d]) * third;
        }
        let dot = (0..3).map(|d| nrm[d] * (fc[d] - cc[d])).sum::<S>();
        if dot < S::zero() {
            for x in &mut nrm {
                *x = -*x;
            }
        }
        let snap = S::lit(1e-12);
        let tag = if nrm[2].abs() <= snap {
            nrm[2] = S::zero();
            FaceTag::Lateral
        } else if nrm[2] > S::zero() {
            nrm = [S::zero(), S::zero(), S::one()];
            FaceTag::Top
        } else {
            nrm = [S::zero(), S::zero(), -S::one()];
            FaceTag::Bottom
        };
        faces.push(BoundaryFace {
            verts: [a, b, c],
            normal: nrm,
            area,
            tag,
        });
    }
    faces
}

//! P1 finite-element operators on triangle and tetrahedral meshes:
//! per-cell gradients, anisotropic norms, energies, weak divergence
//! residuals and boundary traces.
//!
//! All boundary terms use the midpoint (centroid) rule on lateral
//! boundary facets; top/bottom faces of extruded meshes carry no boundary
//! term (natural Neumann sides).

use crate::mesh::{DomainTag, FaceTag, TetMesh, TriMesh};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("field has {got} values but the space has {expect} vertices")]
    SizeMismatch { got: usize, expect: usize },
    #[error("vector dimension {got} does not match scaling mode dimension {expect}")]
    DimensionMismatch { got: usize, expect: usize },
    #[error("energy_p requires p > 1, got {0}")]
    InvalidExponent(f64),
}

/// Anisotropy of the gradient norm: `Planar` is the Euclidean norm in the
/// cross-section, `Thin` scales the transverse derivative by 1/eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingParams<S> {
    Planar,
    Thin { eps: S },
}

impl<S: Real> ScalingParams<S> {
    pub fn thin(eps: S) -> Self {
        assert!(eps > S::zero(), "eps must be positive");
        ScalingParams::Thin { eps }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScalingParams::Planar => 2,
            ScalingParams::Thin { .. } => 3,
        }
    }
}

/// One simplex with precomputed measure and P1 shape-function gradients.
#[derive(Debug, Clone)]
pub struct Cell<S> {
    pub verts: [usize; 4],
    pub measure: S,
    pub grads: [[S; 3]; 4],
}

/// A lateral boundary facet: an edge of the 2D boundary polygon or a
/// triangular face on the lateral surface of the extruded cylinder.
#[derive(Debug, Clone)]
pub struct LateralFacet<S> {
    pub verts: [usize; 3],
    pub n_verts: usize,
    pub measure: S,
    pub normal: [S; 3],
    /// (x1, x2) of the facet midpoint, where boundary data lives.
    pub midpoint: [S; 2],
}

/// Geometry cache for P1 assembly, shared by every operator and solver.
#[derive(Debug, Clone)]
pub struct P1Space<S> {
    pub dim: usize,
    pub coords: Vec<[S; 3]>,
    pub cells: Vec<Cell<S>>,
    pub lateral: Vec<LateralFacet<S>>,
    /// true at vertices on the lateral (Dirichlet) boundary
    pub dirichlet: Vec<bool>,
    /// lumped vertex measures (row sums of the P1 mass matrix)
    pub vertex_measure: Vec<S>,
    pub total_measure: S,
    pub domain_tag: DomainTag,
}

fn sub3<S: Real>(a: [S; 3], b: [S; 3]) -> [S; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3<S: Real>(a: [S; 3], b: [S; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3<S: Real>(a: [S; 3], b: [S; 3]) -> [S; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl<S: Real> P1Space<S> {
    pub fn from_tri(mesh: &TriMesh<S>) -> Self {
        let coords: Vec<[S; 3]> = mesh
            .vertices
            .iter()
            .map(|v| [v[0], v[1], S::zero()])
            .collect();
        let mut cells = Vec::with_capacity(mesh.triangles.len());
        for t in &mesh.triangles {
            let p = [coords[t[0]], coords[t[1]], coords[t[2]]];
            let measure = crate::mesh::tri_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
            let mut grads = [[S::zero(); 3]; 4];
            for i in 0..3 {
                let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                // perpendicular to the opposite edge, normalized so that
                // grad . (p_i - a) = 1
                let e = sub3(b, a);
                let d = [-e[1], e[0], S::zero()];
                let s = dot3(d, sub3(p[i], a));
                grads[i] = [d[0] / s, d[1] / s, S::zero()];
            }
            cells.push(Cell {
                verts: [t[0], t[1], t[2], usize::MAX],
                measure,
                grads,
            });
        }
        let lateral = mesh
            .boundary_edges
            .iter()
            .map(|e| {
                let (a, b) = (mesh.vertices[e.verts[0]], mesh.vertices[e.verts[1]]);
                LateralFacet {
                    verts: [e.verts[0], e.verts[1], usize::MAX],
                    n_verts: 2,
                    measure: e.length,
                    normal: [e.normal[0], e.normal[1], S::zero()],
                    midpoint: [(a[0] + b[0]) * S::half(), (a[1] + b[1]) * S::half()],
                }
            })
            .collect();
        Self::finish(2, coords, cells, lateral, mesh.domain_tag)
    }

    pub fn from_tet(mesh: &TetMesh<S>) -> Self {
        let coords = mesh.vertices.clone();
        let mut cells = Vec::with_capacity(mesh.tets.len());
        for t in &mesh.tets {
            let p = [coords[t[0]], coords[t[1]], coords[t[2]], coords[t[3]]];
            let measure = crate::mesh::tet_volume(p[0], p[1], p[2], p[3]);
            let mut grads = [[S::zero(); 3]; 4];
            for i in 0..4 {
                let others = [p[(i + 1) % 4], p[(i + 2) % 4], p[(i + 3) % 4]];
                let d = cross3(sub3(others[1], others[0]), sub3(others[2], others[0]));
                let s = dot3(d, sub3(p[i], others[0]));
                grads[i] = [d[0] / s, d[1] / s, d[2] / s];
            }
            cells.push(Cell {
                verts: *t,
                measure,
                grads,
            });
        }
        let third = S::one() / S::lit(3.0);
        let lateral = mesh
            .boundary_faces
            .iter()
            .filter(|f| f.tag == FaceTag::Lateral)
            .map(|f| {
                let (a, b, c) = (coords[f.verts[0]], coords[f.verts[1]], coords[f.verts[2]]);
                LateralFacet {
                    verts: f.verts,
                    n_verts: 3,
                    measure: f.area,
                    normal: f.normal,
                    midpoint: [(a[0] + b[0] + c[0]) * third, (a[1] + b[1] + c[1]) * third],
                }
            })
            .collect();
        Self::finish(3, coords, cells, lateral, mesh.domain_tag)
    }

    fn finish(
        dim: usize,
        coords: Vec<[S; 3]>,
        cells: Vec<Cell<S>>,
        lateral: Vec<LateralFacet<S>>,
        domain_tag: DomainTag,
    ) -> Self {
        let nv = coords.len();
        let mut dirichlet = vec![false; nv];
        for f in &lateral {
            for &v in &f.verts[..f.n_verts] {
                dirichlet[v] = true;
            }
        }
        let mut vertex_measure = vec![S::zero(); nv];
        let mut total = S::zero();
        let share = S::one() / S::from_usize_(dim + 1);
        for c in &cells {
            total += c.measure;
            for &v in &c.verts[..dim + 1] {
                vertex_measure[v] += c.measure * share;
            }
        }
        P1Space {
            dim,
            coords,
            cells,
            lateral,
            dirichlet,
            vertex_measure,
            total_measure: total,
            domain_tag,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn cell_verts<'a>(&self, c: &'a Cell<S>) -> &'a [usize] {
        &c.verts[..self.dim + 1]
    }

    pub fn facet_verts<'a>(&self, f: &'a LateralFacet<S>) -> &'a [usize] {
        &f.verts[..f.n_verts]
    }
}

/// Piecewise-linear scalar field given by vertex values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<S> {
    pub values: Vec<S>,
}

impl<S: Real> NodalField<S> {
    pub fn zeros(space: &P1Space<S>) -> Self {
        NodalField {
            values: vec![S::zero(); space.n_vertices()],
        }
    }

    pub fn from_fn(space: &P1Space<S>, f: impl Fn([S; 3]) -> S) -> Self {
        NodalField {
            values: space.coords.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn check(&self, space: &P1Space<S>) -> Result<(), FemError> {
        if self.values.len() != space.n_vertices() {
            return Err(FemError::SizeMismatch {
                got: self.values.len(),
                expect: space.n_vertices(),
            });
        }
        Ok(())
    }
}

/// One constant d-vector per cell (gradients, dual fluxes).
#[derive(Debug, Clone, PartialEq)]
pub struct CellVectorField<S> {
    pub vectors: Vec<[S; 3]>,
}

impl<S: Real> CellVectorField<S> {
    pub fn constant(space: &P1Space<S>, v: [S; 3]) -> Self {
        CellVectorField {
            vectors: vec![v; space.cells.len()],
        }
    }
}

/// One scalar per lateral boundary facet, the facet-integrated normal flux
/// `measure(e) * (sigma . nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDual<S> {
    pub values: Vec<S>,
}

impl<S: Real> BoundaryDual<S> {
    pub fn zeros(space: &P1Space<S>) -> Self {
        BoundaryDual {
            values: vec![S::zero(); space.lateral.len()],
        }
    }

    /// Facet fluxes induced by a constant vector field.
    pub fn from_constant_flux(space: &P1Space<S>, sigma: [S; 3]) -> Self {
        BoundaryDual {
            values: space
                .lateral
                .iter()
                .map(|f| f.measure * dot3(sigma, f.normal))
                .collect(),
        }
    }
}

/// Named monotone profile g on [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile<S> {
    Identity,
    Cubic,
    Ramp(S),
}

impl<S: Real> Profile<S> {
    pub fn eval(&self, t: S) -> S {
        match *self {
            Profile::Identity => t,
            Profile::Cubic => t * t * t,
            Profile::Ramp(k) => (k * t).max(-S::one()).min(S::one()),
        }
    }
}

/// Closed-form boundary data u0 on the cross-section boundary; independent
/// of x3 by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData<S> {
    Constant(S),
    /// a + b x1 + c x2
    Affine(S, S, S),
    MonotoneX1(Profile<S>),
    /// sum_k a_k cos(k theta) + b_k sin(k theta), k >= 1, theta = atan2(x2, x1)
    Fourier { a: Vec<S>, b: Vec<S> },
}

impl<S: Real> BoundaryData<S> {
    pub fn eval(&self, x1: S, x2: S) -> S {
        match self {
            BoundaryData::Constant(c) => *c,
            BoundaryData::Affine(a, b, c) => *a + *b * x1 + *c * x2,
            BoundaryData::MonotoneX1(g) => g.eval(x1),
            BoundaryData::Fourier { a, b } => {
                let theta = x2.atan2(x1);
                let mut v = S::zero();
                for (k, ak) in a.iter().enumerate() {
                    v += *ak * (S::from_usize_(k + 1) * theta).cos();
                }
                for (k, bk) in b.iter().enumerate() {
                    v += *bk * (S::from_usize_(k + 1) * theta).sin();
                }
                v
            }
        }
    }

    /// Nodal interpolant with u0 values at lateral boundary vertices and
    /// zero elsewhere, or the x3-independent extension everywhere.
    pub fn interpolate_everywhere(&self, space: &P1Space<S>) -> NodalField<S> {
        NodalField::from_fn(space, |x| self.eval(x[0], x[1]))
    }
}

/// Exact gradient of the piecewise-linear interpolant, one vector per cell.
pub fn cell_gradients<S: Real>(space: &P1Space<S>, u: &NodalField<S>) -> CellVectorField<S> {
    let vectors = space
        .cells
        .iter()
        .map(|c| {
            let mut g = [S::zero(); 3];
            for (k, &v) in space.cell_verts(c).iter().enumerate() {
                for d in 0..3 {
                    g[d] += u.values[v] * c.grads[k][d];
                }
            }
            g
        })
        .collect();
    CellVectorField { vectors }
}

/// `Planar`: Euclidean norm of (g1, g2). `Thin`: |(g1, g2, g3/eps)|.
pub fn scaled_norm<S: Real>(g: &[S], scaling: &ScalingParams<S>) -> Result<S, FemError> {
    if g.len() != scaling.dim() {
        return Err(FemError::DimensionMismatch {
            got: g.len(),
            expect: scaling.dim(),
        });
    }
    Ok(match scaling {
        ScalingParams::Planar => (g[0] * g[0] + g[1] * g[1]).sqrt(),
        ScalingParams::Thin { eps } => {
            let g3 = g[2] / *eps;
            (g[0] * g[0] + g[1] * g[1] + g3 * g3).sqrt()
        }
    })
}

/// The gradient with the transverse component scaled by 1/eps, so that the
/// anisotropic norm is the Euclidean norm of the result.
pub fn scaled_vec<S: Real>(g: [S; 3], scaling: &ScalingParams<S>) -> [S; 3] {
    match scaling {
        ScalingParams::Planar => [g[0], g[1], S::zero()],
        ScalingParams::Thin { eps } => [g[0], g[1], g[2] / *eps],
    }
}

pub fn scaled_norm3<S: Real>(g: [S; 3], scaling: &ScalingParams<S>) -> S {
    let h = scaled_vec(g, scaling);
    dot3(h, h).sqrt()
}

/// Dual norm of the anisotropic gradient norm: |(s1, s2, eps * s3)|.
pub fn dual_norm3<S: Real>(s: [S; 3], scaling: &ScalingParams<S>) -> S {
    match scaling {
        ScalingParams::Planar => (s[0] * s[0] + s[1] * s[1]).sqrt(),
        ScalingParams::Thin { eps } => {
            let s3 = s[2] * *eps;
            (s[0] * s[0] + s[1] * s[1] + s3 * s3).sqrt()
        }
    }
}

/// p-Dirichlet energy: sum of measure * |grad|_eps^p over cells; the
/// normalized form is its (1/p)-th power.
pub fn energy_p<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    p: S,
    scaling: &ScalingParams<S>,
    normalized: bool,
) -> Result<S, FemError> {
    if p <= S::one() {
        return Err(FemError::InvalidExponent(p.to_f64_()));
    }
    u.check(space)?;
    let grads = cell_gradients(space, u);
    let mut e = S::zero();
    for (c, g) in space.cells.iter().zip(&grads.vectors) {
        e += c.measure * scaled_norm3(*g, scaling).powf(p);
    }
    Ok(if normalized { e.powf(S::one() / p) } else { e })
}

/// Relaxed total-variation energy: TV plus the lateral boundary penalty
/// integral of |u - u0| (midpoint rule per facet).
pub fn energy_tv<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    u0: &BoundaryData<S>,
    scaling: &ScalingParams<S>,
) -> S {
    tv_part(space, u, scaling) + penalty_part(space, u, u0)
}

pub fn tv_part<S: Real>(space: &P1Space<S>, u: &NodalField<S>, scaling: &ScalingParams<S>) -> S {
    let grads = cell_gradients(space, u);
    space
        .cells
        .iter()
        .zip(&grads.vectors)
        .map(|(c, g)| c.measure * scaled_norm3(*g, scaling))
        .sum()
}

pub fn penalty_part<S: Real>(space: &P1Space<S>, u: &NodalField<S>, u0: &BoundaryData<S>) -> S {
    space
        .lateral
        .iter()
        .map(|f| {
            let mean = facet_mean(space, f, u);
            f.measure * (mean - u0.eval(f.midpoint[0], f.midpoint[1])).abs()
        })
        .sum()
}

pub fn facet_mean<S: Real>(space: &P1Space<S>, f: &LateralFacet<S>, u: &NodalField<S>) -> S {
    let vs = space.facet_verts(f);
    vs.iter().map(|&v| u.values[v]).sum::<S>() / S::from_usize_(vs.len())
}

/// Weak divergence residual per vertex:
/// `r_i = sum_T m_T sigma_T . grad phi_i - sum_{f ni i} s_f / #verts(f)`.
/// Zero means sigma is discretely divergence-free with boundary flux s.
pub fn divergence_residual_vec<S: Real>(
    space: &P1Space<S>,
    sigma: &CellVectorField<S>,
    s: &BoundaryDual<S>,
) -> Vec<S> {
    let mut r = vec![S::zero(); space.n_vertices()];
    for (c, sg) in space.cells.iter().zip(&sigma.vectors) {
        for (k, &v) in space.cell_verts(c).iter().enumerate() {
            r[v] += c.measure * dot3(*sg, c.grads[k]);
        }
    }
    for (f, &sf) in space.lateral.iter().zip(&s.values) {
        let vs = space.facet_verts(f);
        let w = sf / S::from_usize_(vs.len());
        for &v in vs {
            r[v] -= w;
        }
    }
    r
}

/// Max-norm of the weak divergence residual.
pub fn divergence_residual<S: Real>(
    space: &P1Space<S>,
    sigma: &CellVectorField<S>,
    s: &BoundaryDual<S>,
    _scaling: &ScalingParams<S>,
) -> S {
    divergence_residual_vec(space, sigma, s)
        .into_iter()
        .fold(S::zero(), |m, x| m.max(x.abs()))
}

/// Extremality defect `sum_T m_T (|grad u|_eps + sigma . grad u)`, which is
/// nonnegative whenever sigma is dual-feasible and zero iff
/// `-sigma . Du = |Du|_eps` cell-wise.
pub fn pairing_check<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    sigma: &CellVectorField<S>,
    scaling: &ScalingParams<S>,
) -> S {
    let grads = cell_gradients(space, u);
    space
        .cells
        .iter()
        .zip(grads.vectors.iter().zip(&sigma.vectors))
        .map(|(c, (g, sg))| c.measure * (scaled_norm3(*g, scaling) + dot3(*sg, *g)))
        .sum()
}

/// Measure-normalized L^p mean of the scaled gradient norm,
/// `((1/|Omega|) sum m |grad u|^p)^(1/p)`; nondecreasing in p by Jensen.
pub fn normalized_gradient_lp<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    p: S,
    scaling: &ScalingParams<S>,
) -> S {
    let grads = cell_gradients(space, u);
    let mut e = S::zero();
    for (c, g) in space.cells.iter().zip(&grads.vectors) {
        e += c.measure * scaled_norm3(*g, scaling).powf(p);
    }
    (e / space.total_measure).powf(S::one() / p)
}

/// Max and measure-weighted L1 vertex-wise distances between two fields.
pub fn field_errors<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    v: &NodalField<S>,
) -> (S, S) {
    let mut sup = S::zero();
    let mut l1 = S::zero();
    for i in 0..space.n_vertices() {
        let d = (u.values[i] - v.values[i]).abs();
        sup = sup.max(d);
        l1 += space.vertex_measure[i] * d;
    }
    (sup, l1)
}

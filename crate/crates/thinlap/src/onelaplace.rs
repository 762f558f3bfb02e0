//! First-order primal-dual solver for the relaxed p = 1 problems. The dual
//! iterate is a piecewise-constant flux with anisotropic dual norm at most
//! one together with lateral boundary fluxes, so optimality can be
//! certified through the divergence residual, the pairing defect and the
//! boundary sign condition.

use crate::fem::{
    divergence_residual, divergence_residual_vec, dual_norm3, energy_tv, facet_mean,
    pairing_check, scaled_vec, tv_part, BoundaryData, BoundaryDual, CellVectorField, NodalField,
    P1Space, ScalingParams,
};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct PDOptions<S> {
    pub max_iters: usize,
    /// relative duality-gap tolerance
    pub gap_tol: S,
    /// max-norm tolerance on the weak divergence residual
    pub div_tol: S,
    /// tau / sigma step ratio
    pub step_ratio: S,
    /// over-relaxation parameter
    pub theta: S,
    pub power_iters: usize,
    /// convergence check and trace cadence
    pub check_every: usize,
    /// primal initialization (defaults to zero)
    pub init: Option<NodalField<S>>,
}

impl<S: Real> Default for PDOptions<S> {
    fn default() -> Self {
        PDOptions {
            max_iters: 200_000,
            gap_tol: S::lit(1e-4),
            div_tol: S::lit(1e-6),
            step_ratio: S::one(),
            theta: S::one(),
            power_iters: 30,
            check_every: 50,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow<S> {
    pub iter: usize,
    pub primal: S,
    pub dual: S,
    pub gap: S,
    pub div_residual: S,
}

#[derive(Debug, Clone)]
pub struct PDSolution<S> {
    pub u: NodalField<S>,
    /// dual flux, in unscaled coordinates (anisotropic dual-norm ball)
    pub sigma: CellVectorField<S>,
    /// lateral facet fluxes, |s_f| <= measure(f)
    pub s: BoundaryDual<S>,
    pub primal: S,
    /// divergence-corrected dual value (a valid lower bound up to the
    /// stated correction)
    pub dual: S,
    pub gap: S,
    pub div_residual: S,
    pub iters: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow<S>>,
}

/// Discrete dual objective `- sum_f s_f u0(midpoint f)`.
pub fn dual_objective<S: Real>(
    space: &P1Space<S>,
    s: &BoundaryDual<S>,
    u0: &BoundaryData<S>,
) -> S {
    -space
        .lateral
        .iter()
        .zip(&s.values)
        .map(|(f, &sf)| sf * u0.eval(f.midpoint[0], f.midpoint[1]))
        .sum::<S>()
}

/// Boundary mass `sum_f measure(f) |u0(midpoint f)|`, a data-scale constant
/// reported alongside the duality diagnostics.
pub fn boundary_mass<S: Real>(space: &P1Space<S>, u0: &BoundaryData<S>) -> S {
    space
        .lateral
        .iter()
        .map(|f| f.measure * u0.eval(f.midpoint[0], f.midpoint[1]).abs())
        .sum()
}

/// Correction making the dual value a true lower bound for the primal at
/// the given u: for any dual-feasible (sigma, s) and any u,
/// `energy_tv(u) >= dual_objective(s) - |R|_1 * |u|_inf`, R the weak
/// divergence residual vector. Both norms are computed, not estimated.
fn dual_correction<S: Real>(residual: &[S], u: &[S]) -> S {
    let l1 = residual.iter().map(|r| r.abs()).sum::<S>();
    let umax = u.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    l1 * umax
}

/// Estimate of the operator norm of u -> (-m_T grad_eps u, facet means)
/// by power iteration on K^T K.
fn operator_norm<S: Real>(space: &P1Space<S>, scaling: &ScalingParams<S>, iters: usize) -> S {
    let n = space.n_vertices();
    let mut v: Vec<S> = (0..n).map(|i| S::lit(((i + 1) as f64).sin())).collect();
    let mut lambda = S::one();
    for _ in 0..iters {
        let w = apply_ktk(space, scaling, &v);
        let norm = w.iter().map(|&x| x * x).sum::<S>().sqrt();
        if norm == S::zero() {
            break;
        }
        lambda = norm;
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    lambda.sqrt()
}

fn apply_ktk<S: Real>(space: &P1Space<S>, scaling: &ScalingParams<S>, v: &[S]) -> Vec<S> {
    let n = space.n_vertices();
    let nvpc = space.dim + 1;
    let mut out = vec![S::zero(); n];
    for c in &space.cells {
        let mut g = [S::zero(); 3];
        for (k, &vi) in space.cell_verts(c).iter().enumerate() {
            let hg = scaled_vec(c.grads[k], scaling);
            for d in 0..3 {
                g[d] += v[vi] * hg[d];
            }
        }
        let coef = c.measure * c.measure;
        for k in 0..nvpc {
            let hg = scaled_vec(c.grads[k], scaling);
            out[c.verts[k]] += coef * (g[0] * hg[0] + g[1] * hg[1] + g[2] * hg[2]);
        }
    }
    for f in &space.lateral {
        let vs = space.facet_verts(f);
        let inv = S::one() / S::from_usize_(vs.len());
        let mean = vs.iter().map(|&i| v[i]).sum::<S>() * inv;
        for &i in vs {
            out[i] += mean * inv;
        }
    }
    out
}

/// Minimize the relaxed total-variation energy by a primal-dual splitting.
/// The dual flux is kept in transverse-scaled coordinates internally, where
/// its constraint is the Euclidean unit ball, and unscaled on return.
pub fn solve_tv<S: Real>(
    space: &P1Space<S>,
    u0: &BoundaryData<S>,
    scaling: &ScalingParams<S>,
    opts: &PDOptions<S>,
) -> PDSolution<S> {
    let n = space.n_vertices();
    let nc = space.cells.len();
    let nf = space.lateral.len();
    let nvpc = space.dim + 1;

    let norm_k = operator_norm(space, scaling, opts.power_iters).max(S::lit(1e-12));
    let base = S::lit(0.95) / norm_k;
    let tau = base * opts.step_ratio.sqrt();
    let sig_step = base / opts.step_ratio.sqrt();

    let mut u: Vec<S> = match &opts.init {
        Some(f) => f.values.clone(),
        None => vec![S::zero(); n],
    };
    let mut u_bar = u.clone();
    let mut sigma_hat = vec![[S::zero(); 3]; nc];
    let mut s = vec![S::zero(); nf];
    let u0_mid: Vec<S> = space
        .lateral
        .iter()
        .map(|f| u0.eval(f.midpoint[0], f.midpoint[1]))
        .collect();
    let mut trace = Vec::new();
    let mut iters = 0usize;
    let mut converged = false;
    let mut residual = vec![S::zero(); n];

    while iters < opts.max_iters {
        // dual ascent on the over-relaxed primal iterate
        for (ci, c) in space.cells.iter().enumerate() {
            let mut g = [S::zero(); 3];
            for (k, &vi) in space.cell_verts(c).iter().enumerate() {
                let hg = scaled_vec(c.grads[k], scaling);
                for d in 0..3 {
                    g[d] += u_bar[vi] * hg[d];
                }
            }
            let sh = &mut sigma_hat[ci];
            for d in 0..3 {
                sh[d] -= sig_step * c.measure * g[d];
            }
            let norm = (sh[0] * sh[0] + sh[1] * sh[1] + sh[2] * sh[2]).sqrt();
            if norm > S::one() {
                for d in 0..3 {
                    sh[d] = sh[d] / norm;
                }
            }
        }
        for (fi, f) in space.lateral.iter().enumerate() {
            let vs = space.facet_verts(f);
            let mean = vs.iter().map(|&i| u_bar[i]).sum::<S>() / S::from_usize_(vs.len());
            let v = s[fi] + sig_step * (mean - u0_mid[fi]);
            s[fi] = v.max(-f.measure).min(f.measure);
        }
        // primal descent: u += tau * (divergence residual of the dual pair)
        for r in &mut residual {
            *r = S::zero();
        }
        for (ci, c) in space.cells.iter().enumerate() {
            let sh = sigma_hat[ci];
            for k in 0..nvpc {
                let hg = scaled_vec(c.grads[k], scaling);
                residual[c.verts[k]] +=
                    c.measure * (sh[0] * hg[0] + sh[1] * hg[1] + sh[2] * hg[2]);
            }
        }
        for (fi, f) in space.lateral.iter().enumerate() {
            let vs = space.facet_verts(f);
            let w = s[fi] / S::from_usize_(vs.len());
            for &i in vs {
                residual[i] -= w;
            }
        }
        for i in 0..n {
            let new = u[i] + tau * residual[i];
            u_bar[i] = new + opts.theta * (new - u[i]);
            u[i] = new;
        }
        iters += 1;

        if iters % opts.check_every == 0 || iters == opts.max_iters {
            let field = NodalField { values: u.clone() };
            let primal = energy_tv(space, &field, u0, scaling);
            let div_res = residual
                .iter()
                .fold(S::zero(), |m, r| m.max(r.abs()));
            let raw_dual = -(0..nf).map(|fi| s[fi] * u0_mid[fi]).sum::<S>();
            let dual = raw_dual - dual_correction(&residual, &u);
            let gap = primal - dual;
            trace.push(TraceRow {
                iter: iters,
                primal,
                dual,
                gap,
                div_residual: div_res,
            });
            if gap <= opts.gap_tol * S::one().max(primal.abs()) && div_res <= opts.div_tol {
                converged = true;
                break;
            }
        }
    }

    let u = NodalField { values: u };
    let sigma = CellVectorField {
        vectors: sigma_hat
            .iter()
            .map(|&sh| match scaling {
                ScalingParams::Planar => sh,
                ScalingParams::Thin { eps } => [sh[0], sh[1], sh[2] / *eps],
            })
            .collect(),
    };
    let s = BoundaryDual { values: s };
    let primal = energy_tv(space, &u, u0, scaling);
    let rvec = divergence_residual_vec(space, &sigma, &s);
    let div_res = rvec.iter().fold(S::zero(), |m, r| m.max(r.abs()));
    let raw_dual = dual_objective(space, &s, u0);
    let dual = raw_dual - dual_correction(&rvec, &u.values);
    PDSolution {
        gap: primal - dual,
        primal,
        dual,
        div_residual: div_res,
        iters,
        converged,
        trace,
        u,
        sigma,
        s,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertificateReport<S> {
    pub dual_feasible: bool,
    pub divergence_free: bool,
    pub pairing_extremal: bool,
    pub boundary_sign: bool,
    pub max_dual_norm: S,
    pub div_residual: S,
    pub pairing_defect: S,
    pub max_sign_defect: S,
}

impl<S> CertificateReport<S> {
    pub fn all_pass(&self) -> bool {
        self.dual_feasible && self.divergence_free && self.pairing_extremal && self.boundary_sign
    }
}

/// Check the four extremality conditions of a candidate pair (u, sigma, s)
/// at the given tolerance: dual feasibility, weak divergence-freeness,
/// vanishing pairing defect and the boundary sign condition on facets where
/// the trace misses the boundary data.
pub fn certificate_check<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    sigma: &CellVectorField<S>,
    s: &BoundaryDual<S>,
    u0: &BoundaryData<S>,
    scaling: &ScalingParams<S>,
    tol: S,
) -> CertificateReport<S> {
    let max_dual_norm = sigma
        .vectors
        .iter()
        .fold(S::zero(), |m, &v| m.max(dual_norm3(v, scaling)));
    let div_residual = divergence_residual(space, sigma, s, scaling);
    let tv = tv_part(space, u, scaling);
    let pairing_defect = pairing_check(space, u, sigma, scaling);
    let mut max_sign_defect = S::zero();
    for (f, &sf) in space.lateral.iter().zip(&s.values) {
        let diff = facet_mean(space, f, u) - u0.eval(f.midpoint[0], f.midpoint[1]);
        if diff.abs() > tol {
            let want = f.measure * diff.signum();
            max_sign_defect = max_sign_defect.max((sf - want).abs());
        }
    }
    CertificateReport {
        dual_feasible: max_dual_norm <= S::one() + tol,
        divergence_free: div_residual <= tol,
        pairing_extremal: pairing_defect <= tol * (S::one() + tv),
        boundary_sign: max_sign_defect <= tol,
        max_dual_norm,
        div_residual,
        pairing_defect,
        max_sign_defect,
    }
}

/// Weak-duality slack `primal - (dual_objective - |R|_1 |u|_inf)` for an
/// arbitrary primal/dual pair; nonnegative by construction of the
/// correction whenever (sigma, s) is dual-feasible.
pub fn weak_duality_slack<S: Real>(
    space: &P1Space<S>,
    u: &NodalField<S>,
    sigma: &CellVectorField<S>,
    s: &BoundaryDual<S>,
    u0: &BoundaryData<S>,
    scaling: &ScalingParams<S>,
) -> S {
    let primal = energy_tv(space, u, u0, scaling);
    let rvec = divergence_residual_vec(space, sigma, s);
    let dual = dual_objective(space, s, u0) - dual_correction(&rvec, &u.values);
    primal - dual
}

/// Write the convergence trace as CSV with header
/// `iter,primal,dual,gap,div_residual`.
pub fn trace_csv<S: Real>(trace: &[TraceRow<S>]) -> String {
    let mut out = String::from("iter,primal,dual,gap,div_residual\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter, r.primal, r.dual, r.gap, r.div_residual
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Profile;
    use crate::mesh::{disk_mesh, extrude};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn constant_data_trivial_solution() {
        let space = P1Space::from_tri(&disk_mesh::<f64>(2));
        let u0 = BoundaryData::Constant(3.0);
        // a tighter gap tolerance drives the primal value itself toward zero
        let opts = PDOptions {
            gap_tol: 1e-6,
            max_iters: 500_000,
            ..Default::default()
        };
        let sol = solve_tv(&space, &u0, &ScalingParams::Planar, &opts);
        assert!(sol.converged);
        assert!(sol.primal.abs() <= 1e-4, "primal {}", sol.primal);
        assert!(sol.gap.abs() <= 1e-6);
        for (i, &v) in sol.u.values.iter().enumerate() {
            assert!((v - 3.0).abs() <= 1e-3, "u[{i}] = {v}");
        }
    }

    #[test]
    fn disk_x1_primal_matches_area() {
        let mesh = disk_mesh::<f64>(4);
        let area = mesh.area();
        let space = P1Space::from_tri(&mesh);
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let sol = solve_tv(&space, &u0, &ScalingParams::Planar, &PDOptions::default());
        assert!(sol.converged, "iters {} gap {}", sol.iters, sol.gap);
        assert!((sol.primal - area).abs() <= 1e-2 * std::f64::consts::PI);
        assert!(sol.gap <= 1e-4 * sol.primal.max(1.0) + 1e-12);
    }

    #[test]
    fn dual_objective_examples() {
        let mesh = disk_mesh::<f64>(4);
        let area = mesh.area();
        let space = P1Space::from_tri(&mesh);
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);

        let z = BoundaryDual::zeros(&space);
        assert_close(dual_objective(&space, &z, &u0), 0.0, 0.0);

        // s_e = -l_e (nu . e1): the calibration flux of u = x1
        let s = BoundaryDual::from_constant_flux(&space, [-1.0, 0.0, 0.0]);
        assert_close(dual_objective(&space, &s, &u0), area, 1e-10);

        // constants are orthogonal to (nearly) divergence-free fluxes
        let c = BoundaryData::Constant(4.0);
        let val = dual_objective(&space, &s, &c);
        assert_close(val, 0.0, 1e-9);
    }

    #[test]
    fn certificate_for_constant_calibration() {
        let mesh = disk_mesh::<f64>(3);
        let space = P1Space::from_tri(&mesh);
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let planar = ScalingParams::Planar;
        let u = NodalField::from_fn(&space, |x| x[0]);
        let sigma = CellVectorField::constant(&space, [-1.0, 0.0, 0.0]);
        let s = BoundaryDual::from_constant_flux(&space, [-1.0, 0.0, 0.0]);
        let rep = certificate_check(&space, &u, &sigma, &s, &u0, &planar, 1e-9);
        assert!(rep.all_pass(), "{rep:?}");

        let scaled = CellVectorField::constant(&space, [-1.5, 0.0, 0.0]);
        let rep = certificate_check(&space, &u, &scaled, &s, &u0, &planar, 1e-9);
        assert!(!rep.dual_feasible);

        // s = 0 while the trace misses u0 somewhere
        let off = NodalField::from_fn(&space, |x| x[0] + 0.5);
        let z = BoundaryDual::zeros(&space);
        let rep = certificate_check(&space, &off, &sigma, &z, &u0, &planar, 1e-6);
        assert!(!rep.boundary_sign);
    }

    #[test]
    fn weak_duality_along_iteration() {
        let space = P1Space::from_tri(&disk_mesh::<f64>(2));
        let u0 = BoundaryData::MonotoneX1(Profile::Cubic);
        let opts = PDOptions {
            max_iters: 3000,
            check_every: 100,
            ..Default::default()
        };
        let sol = solve_tv(&space, &u0, &ScalingParams::Planar, &opts);
        for row in &sol.trace {
            assert!(row.dual <= row.primal + 1e-9, "{row:?}");
        }
    }

    #[test]
    fn anisotropic_dual_ball_3d() {
        let base = disk_mesh::<f64>(1);
        let space = P1Space::from_tet(&extrude(&base, 2).unwrap());
        let u0 = BoundaryData::MonotoneX1(Profile::Cubic);
        let eps = 0.3;
        let scaling = ScalingParams::thin(eps);
        let opts = PDOptions {
            max_iters: 20_000,
            ..Default::default()
        };
        let sol = solve_tv(&space, &u0, &scaling, &opts);
        for v in &sol.sigma.vectors {
            let d = (v[0] * v[0] + v[1] * v[1] + (eps * v[2]) * (eps * v[2])).sqrt();
            assert!(d <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn three_d_matches_two_d_for_x3_independent_data() {
        let base = disk_mesh::<f64>(1);
        let s2 = P1Space::from_tri(&base);
        let s3 = P1Space::from_tet(&extrude(&base, 2).unwrap());
        let opts = PDOptions::default();

        // affine data: the boundary quadratures agree exactly, so the
        // optima match up to the duality-gap tolerance
        let x1 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let a2 = solve_tv(&s2, &x1, &ScalingParams::Planar, &opts);
        assert!(a2.converged);
        for eps in [1.0, 0.5, 0.1] {
            let a3 = solve_tv(&s3, &x1, &ScalingParams::thin(eps), &opts);
            assert!(a3.converged, "eps {eps}");
            assert!(
                (a3.primal - a2.primal).abs() <= 2.0 * opts.gap_tol * a2.primal.max(1.0),
                "eps {eps}: {} vs {}",
                a3.primal,
                a2.primal
            );
        }

        // nonlinear data: the 2D penalty samples u0 at edge midpoints, the
        // 3D penalty at face centroids, so the optima differ by O(h^2)
        let u0 = BoundaryData::MonotoneX1(Profile::Cubic);
        let sol2 = solve_tv(&s2, &u0, &ScalingParams::Planar, &opts);
        assert!(sol2.converged);
        for eps in [1.0, 0.5, 0.1] {
            let sol3 = solve_tv(&s3, &u0, &ScalingParams::thin(eps), &opts);
            assert!(sol3.converged, "eps {eps}");
            assert!(
                (sol3.primal - sol2.primal).abs() <= 5e-2,
                "eps {eps}: {} vs {}",
                sol3.primal,
                sol2.primal
            );
        }
    }

    #[test]
    fn nonconvergence_reports_cleanly() {
        let space = P1Space::from_tri(&disk_mesh::<f64>(2));
        let u0 = BoundaryData::MonotoneX1(Profile::Cubic);
        let opts = PDOptions {
            max_iters: 1,
            ..Default::default()
        };
        let sol = solve_tv(&space, &u0, &ScalingParams::Planar, &opts);
        assert!(!sol.converged);
        assert_eq!(sol.iters, 1);
    }
}

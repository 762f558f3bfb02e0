//! Experiment orchestration: fill the (p, eps) minimum-value matrix, its
//! p = 1 and eps = 0 edges and the corner, and report the commutation
//! defects between the two limit paths, as JSON and CSV.

use std::time::Instant;

use serde::Serialize;

use crate::fem::{BoundaryData, NodalField, P1Space, ScalingParams};
use crate::mesh::{extrude, TriMesh};
use crate::onelaplace::{solve_tv, PDOptions};
use crate::plaplace::{solve_p, PSolveOptions};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct HarnessOptions<S> {
    pub p_opts: PSolveOptions<S>,
    pub pd_opts: PDOptions<S>,
    /// worker pool bound; `None` uses THINLAP_THREADS or all cores
    pub threads: Option<usize>,
}

impl<S: Real> Default for HarnessOptions<S> {
    fn default() -> Self {
        HarnessOptions {
            p_opts: PSolveOptions::default(),
            pd_opts: PDOptions::default(),
            threads: None,
        }
    }
}

pub fn thread_budget(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("THINLAP_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(num_threads_available)
        .max(1)
}

fn num_threads_available() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramEdges {
    /// minima of the p = 1 row (3D TV solves, one per eps)
    pub tv_3d: Vec<f64>,
    /// minima of the eps = 0 column (2D p-solves, one per p)
    pub p_2d: Vec<f64>,
    /// corner value: the 2D TV minimum
    pub tv_2d: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramDefects {
    /// |m[p_min][eps_min] - m[1][0]|
    pub commutation: f64,
    /// |m[1][eps_min] - m[1][0]| (dimension reduction first)
    pub path_eps_first: f64,
    /// |m[p_min][0] - m[1][0]| (power-law approximation first)
    pub path_p_first: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramReport {
    pub p_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    /// normalized F-form minima, rows indexed by p, columns by eps
    pub values: Vec<Vec<f64>>,
    pub converged: Vec<Vec<bool>>,
    pub edges: DiagramEdges,
    pub defects: DiagramDefects,
    pub runtimes_ms: Vec<Vec<f64>>,
}

impl DiagramReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Flatten the matrix and its edges; the p = 1 row and eps = 0 column
    /// encode the TV and planar solves.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,eps,value,converged,runtime_ms\n");
        for (i, &p) in self.p_list.iter().enumerate() {
            for (j, &eps) in self.eps_list.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p, eps, self.values[i][j], self.converged[i][j], self.runtimes_ms[i][j]
                ));
            }
        }
        for (j, &eps) in self.eps_list.iter().enumerate() {
            out.push_str(&format!("1,{},{},true,0\n", eps, self.edges.tv_3d[j]));
        }
        for (i, &p) in self.p_list.iter().enumerate() {
            out.push_str(&format!("{},0,{},true,0\n", p, self.edges.p_2d[i]));
        }
        out.push_str(&format!("1,0,{},true,0\n", self.edges.tv_2d));
        out
    }
}

enum Job<S> {
    Interior { i: usize, j: usize, p: S, eps: S },
    TvRow { j: usize, eps: S },
    PlanarCol { i: usize, p: S },
    Corner,
}

enum JobResult {
    Interior { i: usize, j: usize, value: f64, converged: bool, ms: f64 },
    TvRow { j: usize, value: f64 },
    PlanarCol { i: usize, value: f64 },
    Corner { value: f64 },
}

/// Fill the commuting-diagram matrix: interior cells are 3D p-solves, the
/// p = 1 row 3D TV solves, the eps = 0 column 2D p-solves and the corner
/// the 2D TV solve. Values are normalized F-form energies at the computed
/// minimizers; per-cell failures are recorded without aborting the report.
pub fn run_diagram<S: Real>(
    base: &TriMesh<S>,
    n_layers: usize,
    u0: &BoundaryData<S>,
    p_list: &[S],
    eps_list: &[S],
    opts: &HarnessOptions<S>,
) -> DiagramReport {
    let space2 = P1Space::from_tri(base);
    let space3 = P1Space::from_tet(&extrude(base, n_layers).expect("n_layers >= 1"));

    let mut jobs: Vec<Job<S>> = Vec::new();
    for (i, &p) in p_list.iter().enumerate() {
        for (j, &eps) in eps_list.iter().enumerate() {
            jobs.push(Job::Interior { i, j, p, eps });
        }
    }
    for (j, &eps) in eps_list.iter().enumerate() {
        jobs.push(Job::TvRow { j, eps });
    }
    for (i, &p) in p_list.iter().enumerate() {
        jobs.push(Job::PlanarCol { i, p });
    }
    jobs.push(Job::Corner);

    let run_job = |job: &Job<S>| -> JobResult {
        match *job {
            Job::Interior { i, j, p, eps } => {
                let t0 = Instant::now();
                let scaling = ScalingParams::thin(eps);
                match solve_p(&space3, u0, p, &scaling, &opts.p_opts) {
                    Ok(sol) => JobResult::Interior {
                        i,
                        j,
                        value: sol.energy.to_f64_(),
                        converged: sol.converged,
                        ms: t0.elapsed().as_secs_f64() * 1e3,
                    },
                    Err(_) => JobResult::Interior {
                        i,
                        j,
                        value: f64::NAN,
                        converged: false,
                        ms: t0.elapsed().as_secs_f64() * 1e3,
                    },
                }
            }
            Job::TvRow { j, eps } => {
                let scaling = ScalingParams::thin(eps);
                let sol = solve_tv(&space3, u0, &scaling, &opts.pd_opts);
                JobResult::TvRow {
                    j,
                    value: sol.primal.to_f64_(),
                }
            }
            Job::PlanarCol { i, p } => {
                let value = solve_p(&space2, u0, p, &ScalingParams::Planar, &opts.p_opts)
                    .map(|s| s.energy.to_f64_())
                    .unwrap_or(f64::NAN);
                JobResult::PlanarCol { i, value }
            }
            Job::Corner => {
                let sol = solve_tv(&space2, u0, &ScalingParams::Planar, &opts.pd_opts);
                JobResult::Corner {
                    value: sol.primal.to_f64_(),
                }
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_budget(opts.threads))
        .build()
        .expect("thread pool");
    let results: Vec<JobResult> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter().map(run_job).collect()
    });

    let np = p_list.len();
    let ne = eps_list.len();
    let mut values = vec![vec![f64::NAN; ne]; np];
    let mut converged = vec![vec![false; ne]; np];
    let mut runtimes = vec![vec![0.0; ne]; np];
    let mut tv_3d = vec![f64::NAN; ne];
    let mut p_2d = vec![f64::NAN; np];
    let mut tv_2d = f64::NAN;
    for r in results {
        match r {
            JobResult::Interior { i, j, value, converged: c, ms } => {
                values[i][j] = value;
                converged[i][j] = c;
                runtimes[i][j] = ms;
            }
            JobResult::TvRow { j, value } => tv_3d[j] = value,
            JobResult::PlanarCol { i, value } => p_2d[i] = value,
            JobResult::Corner { value } => tv_2d = value,
        }
    }

    let defects = DiagramDefects {
        commutation: (values[np - 1][ne - 1] - tv_2d).abs(),
        path_eps_first: (tv_3d[ne - 1] - tv_2d).abs(),
        path_p_first: (p_2d[np - 1] - tv_2d).abs(),
    };
    DiagramReport {
        p_list: p_list.iter().map(|p| p.to_f64_()).collect(),
        eps_list: eps_list.iter().map(|e| e.to_f64_()).collect(),
        values,
        converged,
        edges: DiagramEdges { tv_3d, p_2d, tv_2d },
        defects,
        runtimes_ms: runtimes,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub level: usize,
    pub n_triangles: usize,
    /// |min F_p - min F_1| per p, in p_list order
    pub diffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaTable {
    pub p_list: Vec<f64>,
    pub rows: Vec<GammaRow>,
    /// diffs non-increasing in p (10% slack) at the finest level
    pub monotone_at_finest: bool,
}

impl GammaTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,p,value_diff\n");
        for r in &self.rows {
            for (k, d) in r.diffs.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", r.level, self.p_list[k], d));
            }
        }
        out
    }
}

/// Value convergence min F_p -> min F_1 over a refinement sequence of 2D
/// meshes; p_list must be descending toward 1.
pub fn gamma_value_check<S: Real>(
    meshes: &[TriMesh<S>],
    u0: &BoundaryData<S>,
    p_list: &[S],
    opts: &HarnessOptions<S>,
) -> GammaTable {
    assert!(meshes.len() >= 2, "need at least two refinement levels");
    let mut rows = Vec::new();
    for (level, mesh) in meshes.iter().enumerate() {
        let space = P1Space::from_tri(mesh);
        let tv = solve_tv(&space, u0, &ScalingParams::Planar, &opts.pd_opts);
        let diffs = p_list
            .iter()
            .map(|&p| {
                solve_p(&space, u0, p, &ScalingParams::Planar, &opts.p_opts)
                    .map(|s| (s.energy.to_f64_() - tv.primal.to_f64_()).abs())
                    .unwrap_or(f64::NAN)
            })
            .collect();
        rows.push(GammaRow {
            level,
            n_triangles: mesh.triangles.len(),
            diffs,
        });
    }
    let finest = &rows.last().unwrap().diffs;
    let monotone_at_finest = finest.windows(2).all(|w| w[1] <= 1.1 * w[0] + 1e-12);
    GammaTable {
        p_list: p_list.iter().map(|p| p.to_f64_()).collect(),
        rows,
        monotone_at_finest,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerRow {
    pub p: f64,
    /// L1 distance to the minimizer at the previous (larger) p
    pub l1_to_previous: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizerTable {
    pub rows: Vec<MinimizerRow>,
    /// L1 distance between the last p-minimizer and the TV minimizer
    pub l1_to_tv: f64,
}

impl MinimizerTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,l1_to_previous\n");
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.p, r.l1_to_previous));
        }
        out.push_str(&format!("1,{}\n", self.l1_to_tv));
        out
    }
}

/// L1 distances between successive p-minimizers and between the smallest-p
/// minimizer and the TV minimizer.
pub fn minimizer_convergence<S: Real>(
    space: &P1Space<S>,
    u0: &BoundaryData<S>,
    p_list: &[S],
    opts: &HarnessOptions<S>,
) -> MinimizerTable {
    let planar = ScalingParams::Planar;
    let mut rows = Vec::new();
    let mut prev: Option<NodalField<S>> = None;
    for &p in p_list {
        let sol = solve_p(space, u0, p, &planar, &opts.p_opts).expect("p in (1,2]");
        let l1 = match &prev {
            Some(q) => crate::fem::field_errors(space, q, &sol.u).1.to_f64_(),
            None => 0.0,
        };
        rows.push(MinimizerRow {
            p: p.to_f64_(),
            l1_to_previous: l1,
        });
        prev = Some(sol.u);
    }
    let tv = solve_tv(space, u0, &planar, &opts.pd_opts);
    let l1_to_tv = crate::fem::field_errors(space, prev.as_ref().unwrap(), &tv.u)
        .1
        .to_f64_();
    MinimizerTable { rows, l1_to_tv }
}

/// F-form energies of a fixed field are non-decreasing in p after measure
/// normalization; evaluated on the harmonic (p = 2) extension of u0.
pub fn matrix_monotonicity_defect<S: Real>(
    space: &P1Space<S>,
    u0: &BoundaryData<S>,
    p_list: &[S],
) -> S {
    let sol = solve_p(
        space,
        u0,
        S::two(),
        &ScalingParams::Planar,
        &PSolveOptions::default(),
    )
    .expect("p = 2 is valid");
    let mut sorted: Vec<S> = p_list.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let vals: Vec<S> = sorted
        .iter()
        .map(|&p| crate::fem::normalized_gradient_lp(space, &sol.u, p, &ScalingParams::Planar))
        .collect();
    let mut worst = S::zero();
    for w in vals.windows(2) {
        worst = worst.max(w[0] - w[1]);
    }
    worst
}

/// Study tables over p for the least-gradient references, re-exported at
/// the harness level.
pub use crate::leastgradient::p_to_1_study;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Profile;
    use crate::mesh::{disk_mesh, refine};

    #[test]
    fn diagram_affine_data_all_entries_near_area() {
        let base = disk_mesh::<f64>(2);
        let area = base.area();
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let opts = HarnessOptions::default();
        let p_list = [1.3, 1.1];
        let rep = run_diagram(&base, 2, &u0, &p_list, &[0.5, 0.2], &opts);
        // every problem is solved exactly by x1; interior entries and the
        // planar p-column are the normalized values area^(1/p), the p = 1
        // row and corner are the area itself
        for (row, &p) in rep.values.iter().zip(&p_list) {
            for &v in row {
                assert!((v - area.powf(1.0 / p)).abs() <= 1e-3, "{v} at p={p}");
            }
        }
        for &v in &rep.edges.tv_3d {
            assert!((v - area).abs() <= 2e-2);
        }
        for (&v, &p) in rep.edges.p_2d.iter().zip(&p_list) {
            assert!((v - area.powf(1.0 / p)).abs() <= 1e-3);
        }
        assert!((rep.edges.tv_2d - area).abs() <= 2e-2);
        let expected = area - area.powf(1.0 / 1.1);
        assert!((rep.defects.commutation - expected).abs() <= 2e-2);
    }

    #[test]
    fn diagram_constant_data_all_zero() {
        let base = disk_mesh::<f64>(1);
        let u0 = BoundaryData::Constant(4.0);
        let rep = run_diagram(&base, 1, &u0, &[1.5], &[0.5], &HarnessOptions::default());
        assert!(rep.values[0][0].abs() <= 1e-8);
        // the first-order TV solver stops at its duality-gap tolerance
        assert!(rep.edges.tv_2d.abs() <= 1e-3);
        assert!(rep.edges.tv_3d[0].abs() <= 1e-3);
    }

    #[test]
    fn diagram_reports_serialize_and_flatten() {
        let base = disk_mesh::<f64>(1);
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let rep = run_diagram(&base, 1, &u0, &[1.5], &[0.5], &HarnessOptions::default());
        let json = rep.to_json();
        assert!(json.contains("\"p_list\""));
        assert!(json.contains("\"defects\""));
        let csv = rep.to_csv();
        assert!(csv.starts_with("p,eps,value,converged,runtime_ms\n"));
        // matrix + tv row + planar column + corner
        assert_eq!(csv.lines().count(), 1 + 1 + 1 + 1 + 1);
    }

    #[test]
    fn reproducible_csv_bytes() {
        let base = disk_mesh::<f64>(1);
        let u0 = BoundaryData::MonotoneX1(Profile::Cubic);
        let opts = HarnessOptions {
            threads: Some(2),
            ..Default::default()
        };
        let a = run_diagram(&base, 1, &u0, &[1.5], &[0.5], &opts);
        let b = run_diagram(&base, 1, &u0, &[1.5], &[0.5], &opts);
        // runtimes differ between runs; compare the value payloads
        assert_eq!(a.values, b.values);
        assert_eq!(a.edges.tv_3d, b.edges.tv_3d);
        assert_eq!(a.edges.p_2d, b.edges.p_2d);
        assert_eq!(a.edges.tv_2d, b.edges.tv_2d);
    }

    #[test]
    fn gamma_check_identity_profile() {
        let m0 = disk_mesh::<f64>(2);
        let m1 = refine(&m0);
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let table = gamma_value_check(&[m0, m1], &u0, &[1.5, 1.2, 1.05], &HarnessOptions::default());
        // |area^(1/p) - area| shrinks as p -> 1
        assert!(table.monotone_at_finest, "{table:?}");
    }

    #[test]
    fn gamma_check_constant_data_zeros() {
        let m0 = disk_mesh::<f64>(1);
        let m1 = refine(&m0);
        let u0 = BoundaryData::Constant(1.0);
        let table = gamma_value_check(&[m0, m1], &u0, &[1.5, 1.2], &HarnessOptions::default());
        for r in &table.rows {
            for &d in &r.diffs {
                assert!(d.abs() <= 1e-4, "{d}");
            }
        }
    }

    #[test]
    fn minimizer_convergence_identity() {
        let space = P1Space::from_tri(&disk_mesh::<f64>(2));
        let u0 = BoundaryData::Affine(0.0, 1.0, 0.0);
        let table = minimizer_convergence(&space, &u0, &[1.5, 1.2, 1.1], &HarnessOptions::default());
        for r in &table.rows {
            assert!(r.l1_to_previous <= 1e-5, "{r:?}");
        }
        assert!(table.l1_to_tv <= 2e-3, "{}", table.l1_to_tv);
    }

    #[test]
    fn matrix_monotonicity() {
        let space = P1Space::from_tri(&disk_mesh::<f64>(2));
        let u0 = BoundaryData::MonotoneX1(Profile::Cubic);
        let defect = matrix_monotonicity_defect(&space, &u0, &[1.05, 1.2, 1.5, 2.0]);
        assert!(defect <= 1e-10, "{defect}");
    }

    #[test]
    fn thread_budget_env() {
        assert!(thread_budget(Some(3)) == 3);
        assert!(thread_budget(None) >= 1);
    }
}

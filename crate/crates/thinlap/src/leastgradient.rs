//! Analytic least-gradient references on the unit disk. For monotone data
//! u0 = g(x1) the least-gradient function is u*(x) = g(x1): its level sets
//! are vertical chords, and the constant field -e1 is a calibration
//! certifying optimality. These closed forms serve as ground truth for the
//! p -> 1 and eps -> 0 convergence studies.

use crate::fem::{
    field_errors, BoundaryData, BoundaryDual, CellVectorField, NodalField, P1Space, Profile,
    ScalingParams,
};
use crate::mesh::DomainTag;
use crate::plaplace::{solve_p, PSolveOptions};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum LGError {
    #[error("least-gradient references require a disk mesh")]
    NotDisk,
    #[error("solver failure at p = {0}")]
    SolverFailure(f64),
}

/// Closed-form least-gradient solution u*(x) = g(x1) on the unit disk with
/// its continuum total variation and constant calibration field.
#[derive(Debug, Clone)]
pub struct LGReference<S> {
    pub profile: Profile<S>,
    pub tv_value: S,
}

/// Area of the strip |x1| <= a inside the unit disk.
fn strip_area<S: Real>(a: S) -> S {
    let a = a.min(S::one());
    S::two() * (a * (S::one() - a * a).sqrt() + a.asin())
}

pub fn lg_reference<S: Real>(profile: Profile<S>) -> LGReference<S> {
    let tv_value = match profile {
        // int_disk g'(x1) dA in closed form
        Profile::Identity => S::PI(),
        Profile::Cubic => S::lit(3.0) * S::PI() / S::lit(4.0),
        Profile::Ramp(k) => {
            if k <= S::one() {
                k * S::PI()
            } else {
                k * strip_area(S::one() / k)
            }
        }
    };
    LGReference { profile, tv_value }
}

impl<S: Real> LGReference<S> {
    pub fn eval(&self, x1: S) -> S {
        self.profile.eval(x1)
    }

    pub fn boundary_data(&self) -> BoundaryData<S> {
        BoundaryData::MonotoneX1(self.profile)
    }

    pub fn interpolant(&self, space: &P1Space<S>) -> NodalField<S> {
        NodalField::from_fn(space, |x| self.profile.eval(x[0]))
    }

    /// The constant calibration -e1 (g is non-decreasing, so
    /// -sigma . grad u* = |grad u*| cell-wise).
    pub fn calibration(&self, space: &P1Space<S>) -> (CellVectorField<S>, BoundaryDual<S>) {
        let sigma = CellVectorField::constant(space, [-S::one(), S::zero(), S::zero()]);
        let s = BoundaryDual::from_constant_flux(space, [-S::one(), S::zero(), S::zero()]);
        (sigma, s)
    }
}

/// Max and measure-weighted L1 distances from a discrete field to the
/// interpolated reference.
pub fn lg_errors<S: Real>(
    space: &P1Space<S>,
    u_h: &NodalField<S>,
    reference: &LGReference<S>,
) -> Result<(S, S), LGError> {
    if space.domain_tag != DomainTag::Disk {
        return Err(LGError::NotDisk);
    }
    Ok(field_errors(space, u_h, &reference.interpolant(space)))
}

#[derive(Debug, Clone)]
pub struct StudyRow<S> {
    pub p: S,
    pub sup_error: S,
    pub l1_error: S,
    pub energy: S,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct StudyTable<S> {
    pub rows: Vec<StudyRow<S>>,
}

impl<S: Real> StudyTable<S> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,sup_error,l1_error,energy\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.p, r.sup_error, r.l1_error, r.energy));
        }
        out
    }
}

/// Solve the p-problem for each p in the (descending) list and tabulate the
/// distances to the least-gradient reference.
pub fn p_to_1_study<S: Real>(
    space: &P1Space<S>,
    profile: Profile<S>,
    p_list: &[S],
    scaling: &ScalingParams<S>,
    opts: &PSolveOptions<S>,
) -> Result<StudyTable<S>, LGError> {
    if space.domain_tag != DomainTag::Disk {
        return Err(LGError::NotDisk);
    }
    let reference = lg_reference(profile);
    let u0 = reference.boundary_data();
    let mut rows = Vec::with_capacity(p_list.len());
    for &p in p_list {
        match solve_p(space, &u0, p, scaling, opts) {
            Ok(sol) => {
                let (sup, l1) = lg_errors(space, &sol.u, &reference)?;
                rows.push(StudyRow {
                    p,
                    sup_error: sup,
                    l1_error: l1,
                    energy: sol.energy,
                    converged: sol.converged,
                });
            }
            Err(_) => rows.push(StudyRow {
                p,
                sup_error: S::nan(),
                l1_error: S::nan(),
                energy: S::nan(),
                converged: false,
            }),
        }
    }
    Ok(StudyTable { rows })
}

/// Largest violation of x1-monotonicity along lines of vertices sharing
/// identical (x2, x3) coordinates.
pub fn monotonicity_defect<S: Real>(space: &P1Space<S>, u: &NodalField<S>) -> S {
    let mut order: Vec<usize> = (0..space.n_vertices()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (space.coords[a], space.coords[b]);
        (ca[1], ca[2], ca[0])
            .partial_cmp(&(cb[1], cb[2], cb[0]))
            .unwrap()
    });
    let mut worst = S::zero();
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if space.coords[a][1] == space.coords[b][1] && space.coords[a][2] == space.coords[b][2] {
            worst = worst.max(u.values[a] - u.values[b]);
        }
    }
    worst
}

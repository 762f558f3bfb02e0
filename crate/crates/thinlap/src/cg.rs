//! CSR sparse matrices and a Jacobi-preconditioned conjugate gradient
//! solver, used by the Kacanov iteration for its SPD linear steps.

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Csr<S> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<S>,
}

impl<S: Real> Csr<S> {
    /// Build the sparsity pattern from cell connectivity; values start at 0.
    pub fn pattern(n: usize, cells: impl Iterator<Item = Vec<usize>>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for verts in cells {
            for &i in &verts {
                for &j in &verts {
                    adj[i].push(j);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Csr {
            n,
            row_ptr,
            col_idx,
            vals: vec![S::zero(); nnz],
        }
    }

    pub fn zero_values(&mut self) {
        for v in &mut self.vals {
            *v = S::zero();
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: S) {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        let k = row.binary_search(&j).expect("entry outside pattern");
        self.vals[self.row_ptr[i] + k] += v;
    }

    pub fn matvec(&self, x: &[S], y: &mut [S]) {
        for i in 0..self.n {
            let mut acc = S::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diag(&self) -> Vec<S> {
        let mut d = vec![S::zero(); self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }
}

fn masked_dot<S: Real>(a: &[S], b: &[S], free: &[bool]) -> S {
    let mut acc = S::zero();
    for i in 0..a.len() {
        if free[i] {
            acc += a[i] * b[i];
        }
    }
    acc
}

/// Solve `A x = b` on the free components (x is held fixed elsewhere) by
/// preconditioned conjugate gradient with the diagonal preconditioner.
/// Returns the iteration count and the final relative residual.
pub fn pcg<S: Real>(
    a: &Csr<S>,
    b: &[S],
    x: &mut [S],
    free: &[bool],
    tol: S,
    max_iters: usize,
) -> (usize, S) {
    let n = a.n;
    let diag = a.diag();
    let inv_diag: Vec<S> = diag
        .iter()
        .map(|&d| if d > S::zero() { S::one() / d } else { S::one() })
        .collect();
    let mut r = vec![S::zero(); n];
    let mut ax = vec![S::zero(); n];
    a.matvec(x, &mut ax);
    for i in 0..n {
        r[i] = if free[i] { b[i] - ax[i] } else { S::zero() };
    }
    let r0_norm = masked_dot(&r, &r, free).sqrt();
    let b_norm = masked_dot(b, b, free)
        .sqrt()
        .max(r0_norm)
        .max(S::lit(1e-300));
    let mut z: Vec<S> = (0..n).map(|i| inv_diag[i] * r[i]).collect();
    let mut p = z.clone();
    let mut rz = masked_dot(&r, &z, free);
    let mut ap = vec![S::zero(); n];
    for it in 0..max_iters {
        let res = masked_dot(&r, &r, free).sqrt();
        if res <= tol * b_norm {
            return (it, res / b_norm);
        }
        a.matvec(&p, &mut ap);
        let pap = masked_dot(&p, &ap, free);
        if pap <= S::zero() {
            return (it, res / b_norm);
        }
        let alpha = rz / pap;
        for i in 0..n {
            if free[i] {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        let rz_new = masked_dot(&r, &z, free);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            if free[i] {
                p[i] = z[i] + beta * p[i];
            } else {
                p[i] = S::zero();
            }
        }
    }
    let res = masked_dot(&r, &r, free).sqrt();
    (max_iters, res / b_norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // 1D Laplacian on 5 nodes, Dirichlet at the ends
        let n = 5;
        let mut a = Csr::<f64>::pattern(n, (0..4).map(|i| vec![i, i + 1]));
        for i in 0..4 {
            a.add(i, i, 1.0);
            a.add(i + 1, i + 1, 1.0);
            a.add(i, i + 1, -1.0);
            a.add(i + 1, i, -1.0);
        }
        let mut sol = vec![0.0; n];
        sol[4] = 1.0;
        let free = vec![false, true, true, true, false];
        // A x = 0 on free nodes with the boundary values held in x
        let b = vec![0.0; n];
        let (_, res) = pcg(&a, &b, &mut sol, &free, 1e-12, 100);
        assert!(res <= 1e-10);
        // harmonic interpolation between 0 and 1
        for (i, want) in [(1, 0.25), (2, 0.5), (3, 0.75)] {
            assert!((sol[i] - want).abs() < 1e-9, "{} vs {}", sol[i], want);
        }
    }
}

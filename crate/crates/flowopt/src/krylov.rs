//! Krylov kernels: restarted flexible GMRES and a fixed-step inner GMRES.
//!
//! Both use right preconditioning and a zero initial guess. The flexible
//! variant stores preconditioned directions so the preconditioner may change
//! between iterations (it contains inner iterations here).

use std::time::Instant;

/// Matrix-free linear operator.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinOp for crate::sparse::SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

/// Preconditioner application z = P^-1 r; may be nonlinear in r when built
/// from inner iterations.
pub trait Prec {
    fn dim(&self) -> usize;
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

pub struct IdentityPrec(pub usize);

impl Prec for IdentityPrec {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.to_vec()
    }
}

#[derive(Debug, Clone, Default)]
pub struct KrylovStats {
    pub iterations: usize,
    pub rel_history: Vec<f64>,
    pub converged: bool,
    pub wall_seconds: f64,
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense matrix of a linear operator, column by column (diagnostics/tests).
pub fn materialize(op: &dyn LinOp) -> Vec<Vec<f64>> {
    let n = op.dim();
    let mut cols = vec![vec![0.0; n]; n];
    let mut e = vec![0.0; n];
    for (j, col) in cols.iter_mut().enumerate() {
        e[j] = 1.0;
        op.apply(&e, col);
        e[j] = 0.0;
    }
    // transpose column-major to row-major
    let mut rows = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            rows[i][j] = col[i];
        }
    }
    rows
}

#[derive(Debug, Clone)]
pub struct FgmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for FgmresOptions {
    fn default() -> Self {
        FgmresOptions {
            tol: 1e-6,
            restart: 10,
            max_iterations: 400,
        }
    }
}

/// One Arnoldi cycle of right-preconditioned flexible GMRES, starting from
/// x0 with residual r0. Returns the updated solution, the final residual
/// norm, and how many steps were taken.
fn fgmres_cycle(
    op: &dyn LinOp,
    prec: &dyn Prec,
    x0: &[f64],
    r0: &[f64],
    steps: usize,
    bnorm: f64,
    tol_abs: f64,
    history: &mut Vec<f64>,
) -> (Vec<f64>, f64, usize) {
    let n = op.dim();
    let beta = norm2(r0);
    if beta == 0.0 {
        return (x0.to_vec(), 0.0, 0);
    }
    let mut v: Vec<Vec<f64>> = vec![r0.iter().map(|x| x / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    // Hessenberg stored column-wise, with Givens rotations applied in place
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut res = beta;
    let mut k = 0;
    while k < steps {
        let zk = prec.apply(&v[k]);
        let mut w = vec![0.0; n];
        op.apply(&zk, &mut w);
        z.push(zk);
        let mut hk = vec![0.0; k + 2];
        for (j, vj) in v.iter().enumerate() {
            let hij = dot(&w, vj);
            hk[j] = hij;
            axpy(-hij, vj, &mut w);
        }
        let wn = norm2(&w);
        hk[k + 1] = wn;
        // apply previous rotations
        for j in 0..k {
            let t = cs[j] * hk[j] + sn[j] * hk[j + 1];
            hk[j + 1] = -sn[j] * hk[j] + cs[j] * hk[j + 1];
            hk[j] = t;
        }
        let denom = (hk[k] * hk[k] + hk[k + 1] * hk[k + 1]).sqrt();
        let (c, s) = if denom == 0.0 {
            (1.0, 0.0)
        } else {
            (hk[k] / denom, hk[k + 1] / denom)
        };
        cs.push(c);
        sn.push(s);
        hk[k] = c * hk[k] + s * hk[k + 1];
        hk[k + 1] = 0.0;
        g.push(-s * g[k]);
        g[k] *= c;
        h.push(hk);
        res = g[k + 1].abs();
        history.push(res / bnorm.max(f64::MIN_POSITIVE));
        k += 1;
        let breakdown = wn <= 1e-14 * beta;
        if res <= tol_abs || breakdown {
            break;
        }
        if k < steps {
            v.push(w.iter().map(|x| x / wn).collect());
        }
    }
    // back substitution for y, then x = x0 + Z y
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= h[j][i] * y[j];
        }
        y[i] = s / h[i][i];
    }
    let mut x = x0.to_vec();
    for (j, zj) in z.iter().take(k).enumerate() {
        axpy(y[j], zj, &mut x);
    }
    (x, res, k)
}

/// Restarted flexible GMRES with right preconditioning and zero initial
/// guess; converges when the true relative residual reaches `tol`.
pub fn fgmres(op: &dyn LinOp, prec: &dyn Prec, b: &[f64], opts: &FgmresOptions) -> (Vec<f64>, KrylovStats) {
    let t0 = Instant::now();
    let n = op.dim();
    let bnorm = norm2(b);
    let mut stats = KrylovStats::default();
    if bnorm == 0.0 {
        stats.converged = true;
        stats.wall_seconds = t0.elapsed().as_secs_f64();
        return (vec![0.0; n], stats);
    }
    let tol_abs = opts.tol * bnorm;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut total = 0usize;
    loop {
        let steps = opts.restart.min(opts.max_iterations - total);
        if steps == 0 {
            break;
        }
        let (xn, res, k) = fgmres_cycle(op, prec, &x, &r, steps, bnorm, tol_abs, &mut stats.rel_history);
        x = xn;
        total += k;
        if res <= tol_abs || total >= opts.max_iterations || k == 0 {
            if res <= tol_abs {
                stats.converged = true;
            }
            break;
        }
        // true residual for the restart
        let mut ax = vec![0.0; n];
        op.apply(&x, &mut ax);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm2(&r) <= tol_abs {
            stats.converged = true;
            break;
        }
    }
    stats.iterations = total;
    stats.wall_seconds = t0.elapsed().as_secs_f64();
    (x, stats)
}

/// Exactly `steps` right-preconditioned GMRES iterations from a zero initial
/// guess (fewer on breakdown); no tolerance test.
pub fn gmres_fixed(op: &dyn LinOp, prec: &dyn Prec, b: &[f64], steps: usize) -> Vec<f64> {
    let n = op.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return vec![0.0; n];
    }
    let mut history = Vec::new();
    let x0 = vec![0.0; n];
    let (x, _, _) = fgmres_cycle(op, prec, &x0, b, steps, bnorm, 0.0, &mut history);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    fn diag(vals: &[f64]) -> SparseMatrix {
        SparseMatrix::from_triplets(
            vals.len(),
            vals.len(),
            vals.iter().enumerate().map(|(i, &v)| (i as u32, i as u32, v)).collect(),
        )
    }

    #[test]
    fn zero_rhs_zero_iterations() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let (x, st) = fgmres(&a, &IdentityPrec(3), &[0.0; 3], &FgmresOptions::default());
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(st.iterations, 0);
        assert!(st.converged);
        let y = gmres_fixed(&a, &IdentityPrec(3), &[0.0; 3], 5);
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn fixed_steps_exact_for_low_degree_minimal_polynomial() {
        // 5 distinct eigenvalues -> degree-5 minimal polynomial -> exact in 5
        let vals = [1.0, 2.0, 3.0, 4.0, 5.0, 1.0, 2.0, 3.0];
        let a = diag(&vals);
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let x = gmres_fixed(&a, &IdentityPrec(8), &b, 5);
        for i in 0..8 {
            assert!((x[i] - b[i] / vals[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn full_krylov_space_is_exact() {
        let n = 9;
        let mut trips = Vec::new();
        for i in 0..n as u32 {
            trips.push((i, i, 3.0));
            if i + 1 < n as u32 {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -0.5));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, trips);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = gmres_fixed(&a, &IdentityPrec(n), &b, n);
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn restarted_convergence_and_history() {
        let n = 30;
        let vals: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / 3.0).collect();
        let a = diag(&vals);
        let b = vec![1.0; n];
        let opts = FgmresOptions {
            tol: 1e-10,
            restart: 10,
            max_iterations: 200,
        };
        let (x, st) = fgmres(&a, &IdentityPrec(n), &b, &opts);
        assert!(st.converged);
        assert!(*st.rel_history.last().unwrap() <= 1e-10);
        for i in 0..n {
            assert!((x[i] - 1.0 / vals[i]).abs() < 1e-9);
        }
    }
}

//! Chebyshev semi-iteration for mass matrices.
//!
//! A fixed number of steps of the Chebyshev-accelerated Jacobi iteration is
//! a fixed polynomial in diag(M)^-1 M applied to the right-hand side: linear,
//! deterministic, and an excellent approximation of M^-1 for mass matrices
//! whose diagonally scaled spectrum is tightly enclosed.

use crate::error::{FlowError, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy)]
pub struct ChebParams {
    pub steps: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ChebParams {
    pub fn with_steps(mut self, steps: usize) -> ChebParams {
        self.steps = steps;
        self
    }

    pub fn new(steps: usize, lambda_min: f64, lambda_max: f64) -> Result<ChebParams> {
        if !(lambda_min > 0.0 && lambda_min <= lambda_max) {
            return Err(FlowError::Config(format!(
                "invalid Chebyshev bounds [{lambda_min}, {lambda_max}]"
            )));
        }
        Ok(ChebParams {
            steps,
            lambda_min,
            lambda_max,
        })
    }
}

/// Gershgorin enclosure of the spectrum of diag(M)^-1 M: [1 - r, 1 + r] with
/// r the largest scaled off-diagonal row sum. The lower end may be negative
/// for higher-order mass matrices; intersect with a certified positive bound
/// before use (see [`bounds_for_mass`]).
pub fn gershgorin_bounds(m: &SparseMatrix) -> (f64, f64) {
    let d = m.diagonal();
    let mut radius: f64 = 0.0;
    for i in 0..m.nrows() {
        let (cols, vals) = m.row(i);
        let mut r = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            if *c as usize != i {
                r += v.abs();
            }
        }
        radius = radius.max(r / d[i]);
    }
    (1.0 - radius, 1.0 + radius)
}

/// Intersect the Gershgorin enclosure with an externally certified one
/// (element-wise bounds from the assembly).
pub fn bounds_for_mass(m: &SparseMatrix, certified: (f64, f64), steps: usize) -> Result<ChebParams> {
    let (glo, ghi) = gershgorin_bounds(m);
    let lo = glo.max(certified.0);
    let hi = ghi.min(certified.1);
    ChebParams::new(steps, lo, hi)
}

/// Chebyshev solver for M x = r built on Jacobi scaling.
#[derive(Debug, Clone)]
pub struct ChebyshevMass {
    m: SparseMatrix,
    inv_diag: Vec<f64>,
    pub params: ChebParams,
}

impl ChebyshevMass {
    pub fn new(m: SparseMatrix, params: ChebParams) -> ChebyshevMass {
        let inv_diag = m.diagonal().iter().map(|d| 1.0 / d).collect();
        ChebyshevMass { m, inv_diag, params }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.m
    }

    /// Approximate M^-1 r after `params.steps` iterations.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        chebyshev_apply(&self.m, &self.inv_diag, r, self.params)
    }
}

/// Approximate mass inverse: Chebyshev in production, dense in diagnostics.
pub enum MassInverse {
    Chebyshev(ChebyshevMass),
    Exact(crate::dense::DenseLu),
}

impl MassInverse {
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            MassInverse::Chebyshev(c) => c.apply(r),
            MassInverse::Exact(lu) => lu.solve(r),
        }
    }
}

/// Chebyshev iteration on the Jacobi-preconditioned system
/// (D^-1 M) x = D^-1 r with spectrum enclosed in [lambda_min, lambda_max].
pub fn chebyshev_apply(
    m: &SparseMatrix,
    inv_diag: &[f64],
    r: &[f64],
    params: ChebParams,
) -> Vec<f64> {
    let n = m.nrows();
    debug_assert_eq!(r.len(), n);
    let b: Vec<f64> = r.iter().zip(inv_diag).map(|(v, d)| v * d).collect();
    let theta = 0.5 * (params.lambda_max + params.lambda_min);
    let delta = 0.5 * (params.lambda_max - params.lambda_min);
    if delta <= f64::EPSILON * theta {
        // degenerate interval: the operator is theta * I
        return b.iter().map(|v| v / theta).collect();
    }
    let sigma1 = theta / delta;
    let mut rho = 1.0 / sigma1;
    let mut x = vec![0.0; n];
    let mut res = b.clone();
    let mut d: Vec<f64> = b.iter().map(|v| v / theta).collect();
    let mut tmp = vec![0.0; n];
    for step in 0..params.steps {
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
        // res -= D^-1 M d
        m.matvec(&d, &mut tmp);
        for i in 0..n {
            res[i] -= tmp[i] * inv_diag[i];
        }
        if step + 1 == params.steps {
            break;
        }
        let rho_next = 1.0 / (2.0 * sigma1 - rho);
        for i in 0..n {
            d[i] = rho_next * rho * d[i] + 2.0 * rho_next / delta * res[i];
        }
        rho = rho_next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseLu;
    use crate::fem;
    use crate::grid::{DofLayout, Grid};

    #[test]
    fn identity_bounds_degenerate() {
        let id = SparseMatrix::identity(5);
        let (lo, hi) = gershgorin_bounds(&id);
        assert_eq!((lo, hi), (1.0, 1.0));
        let p = ChebParams::new(20, lo, hi).unwrap();
        let ch = ChebyshevMass::new(id, p);
        let r = vec![2.0, -1.0, 0.5, 3.0, 0.0];
        assert_eq!(ch.apply(&r), r);
    }

    #[test]
    fn rejects_invalid_bounds() {
        assert!(ChebParams::new(20, 0.0, 1.0).is_err());
        assert!(ChebParams::new(20, 2.0, 1.0).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = Grid::build(2).unwrap();
        let m = fem::assemble_mass_q1(&g);
        let certified = fem::mass_element_bounds(&g, None, true);
        let p = bounds_for_mass(&m, certified, 20).unwrap();
        let ch = ChebyshevMass::new(m, p);
        let z = ch.apply(&vec![0.0; ch.dim()]);
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn q1_gershgorin_contains_dense_spectrum() {
        use nalgebra::DMatrix;
        let g = Grid::build(2).unwrap();
        let m = fem::assemble_mass_q1(&g);
        let (lo, hi) = gershgorin_bounds(&m);
        let dd = m.diagonal();
        let dm = {
            let d = m.to_dense();
            DMatrix::from_fn(m.nrows(), m.nrows(), |i, j| {
                d[i][j] / (dd[i].sqrt() * dd[j].sqrt())
            })
        };
        let eig = dm.symmetric_eigen();
        for ev in eig.eigenvalues.iter() {
            assert!(*ev >= lo - 1e-12 && *ev <= hi + 1e-12);
        }
        // tightened bounds sit inside the Gershgorin enclosure
        let certified = fem::mass_element_bounds(&g, None, true);
        let p = bounds_for_mass(&m, certified, 20).unwrap();
        assert!(p.lambda_min >= lo && p.lambda_max <= hi);
        for ev in eig.eigenvalues.iter() {
            assert!(*ev >= p.lambda_min - 1e-12 && *ev <= p.lambda_max + 1e-12);
        }
    }

    #[test]
    fn twenty_steps_beat_1e6_on_velocity_mass() {
        let g = Grid::build(2).unwrap();
        let layout = DofLayout::enclosed(&g);
        let m_full = fem::assemble_mass_q2(&g);
        let m = layout.interior_csr(&m_full);
        let certified = fem::mass_element_bounds(&g, Some(&layout), false);
        let p = bounds_for_mass(&m, certified, 20).unwrap();
        let lu = DenseLu::factor_csr(&m).unwrap();
        let ch = ChebyshevMass::new(m, p);
        let n = ch.dim();
        let mut state = 0x12345678u64;
        let r: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        let approx = ch.apply(&r);
        let exact = lu.solve(&r);
        let num = crate::krylov::norm2(
            &approx.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        let den = crate::krylov::norm2(&exact);
        let rel = num / den;
        println!("chebyshev 20-step relative error on level-2 velocity mass: {rel:.3e}");
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn application_is_linear() {
        let g = Grid::build(2).unwrap();
        let m = fem::assemble_mass_q1(&g);
        let certified = fem::mass_element_bounds(&g, None, true);
        let p = bounds_for_mass(&m, certified, 20).unwrap();
        let ch = ChebyshevMass::new(m, p);
        let n = ch.dim();
        let r1: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let r2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let sum: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + b).collect();
        let z1 = ch.apply(&r1);
        let z2 = ch.apply(&r2);
        let zs = ch.apply(&sum);
        for i in 0..n {
            assert!((zs[i] - z1[i] - z2[i]).abs() < 1e-12);
        }
    }
}

//! Wind-independent spatial discretization shared by the stationary and
//! all-at-once solvers: assembled operators, Dirichlet bookkeeping,
//! Chebyshev bounds, and the multigrid level cache.

use crate::chebyshev::{bounds_for_mass, ChebParams};
use crate::error::Result;
use crate::fem::{self, LpsConfig};
use crate::grid::{DofLayout, Grid};
use crate::multigrid::CdCache;
use crate::sparse::SparseMatrix;

pub struct Discretization {
    pub grid: Grid,
    pub layout: DofLayout,
    pub mhat: SparseMatrix,
    pub khat: SparseMatrix,
    pub m_ii: SparseMatrix,
    pub k_ii: SparseMatrix,
    /// Full divergence matrix, n_p x 2N.
    pub b: SparseMatrix,
    /// Interior divergence matrix, n_p x n_v.
    pub b_i: SparseMatrix,
    pub mp: SparseMatrix,
    pub kp: SparseMatrix,
    pub cheb_m: ChebParams,
    pub cheb_mp: ChebParams,
    pub cd_cache: CdCache,
}

impl Discretization {
    pub fn new(level: u32, cheb_steps: usize) -> Result<Discretization> {
        let grid = Grid::build(level)?;
        let layout = DofLayout::enclosed(&grid);
        let mhat = fem::assemble_mass_q2(&grid);
        let khat = fem::assemble_stiffness_q2(&grid);
        let m_ii = layout.interior_csr(&mhat);
        let k_ii = layout.interior_csr(&khat);
        let b = fem::assemble_divergence(&grid);
        let b_i = layout.interior_divergence(&b);
        let mp = fem::assemble_mass_q1(&grid);
        let kp = fem::assemble_stiffness_q1(&grid);
        let cheb_m = bounds_for_mass(
            &m_ii,
            fem::mass_element_bounds(&grid, Some(&layout), false),
            cheb_steps,
        )?;
        let cheb_mp =
            bounds_for_mass(&mp, fem::mass_element_bounds(&grid, None, true), cheb_steps)?;
        let cd_cache = CdCache::new(&grid)?;
        Ok(Discretization {
            grid,
            layout,
            mhat,
            khat,
            m_ii,
            k_ii,
            b,
            b_i,
            mp,
            kp,
            cheb_m,
            cheb_mp,
            cd_cache,
        })
    }

    /// Apply a scalar full-space operator to both components of a 2N vector.
    pub fn apply_vec(mat: &SparseMatrix, x: &[f64]) -> Vec<f64> {
        let n = mat.nrows();
        let mut y = vec![0.0; 2 * n];
        let mut tmp = vec![0.0; n];
        for c in 0..2 {
            mat.matvec(&x[c * n..(c + 1) * n], &mut tmp);
            y[c * n..(c + 1) * n].copy_from_slice(&tmp);
        }
        y
    }

    pub fn total_kkt_dim_stationary(&self) -> usize {
        2 * self.layout.n_v + 2 * self.layout.n_p
    }
}

/// Assembled convection and stabilization matrices for one wind.
pub struct WindOps {
    pub nhat: SparseMatrix,
    pub what: SparseMatrix,
}

pub fn wind_ops(asm: &Discretization, wind: &[f64], lps: LpsConfig, nu: f64) -> Result<WindOps> {
    Ok(WindOps {
        nhat: fem::assemble_convection_q2(&asm.grid, wind)?,
        what: fem::assemble_lps_q2(&asm.grid, wind, lps, nu)?,
    })
}

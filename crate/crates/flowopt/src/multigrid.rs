//! Geometric multigrid V-cycles on the uniform grid hierarchy.
//!
//! Coarsening halves the grid per level down to level 1. Prolongation is the
//! natural finite element embedding (biquadratic for Q2, bilinear for Q1),
//! coarse operators are Galerkin triple products, smoothing is symmetric
//! Gauss-Seidel (2 pre, 2 post), and the coarsest system is solved densely.

use crate::dense::DenseLu;
use crate::error::{FlowError, Result};
use crate::grid::{DofLayout, Grid};
use crate::sparse::SparseMatrix;

/// 1d embedding weights for one fine index: (coarse indices, weights).
fn q2_weights_1d(g: usize) -> Vec<(usize, f64)> {
    if g % 2 == 0 {
        vec![(g / 2, 1.0)]
    } else {
        let e = g / 4;
        let xi = (g as f64 - (4 * e + 2) as f64) / 2.0;
        let w = [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)];
        vec![(2 * e, w[0]), (2 * e + 1, w[1]), (2 * e + 2, w[2])]
    }
}

fn q1_weights_1d(g: usize) -> Vec<(usize, f64)> {
    if g % 2 == 0 {
        vec![(g / 2, 1.0)]
    } else {
        vec![(g / 2, 0.5), (g / 2 + 1, 0.5)]
    }
}

/// Prolongation between scalar Q2 interiors of consecutive levels.
pub fn q2_interior_prolongation(fine: &Grid, fine_layout: &DofLayout) -> SparseMatrix {
    let coarse = Grid::build(fine.level - 1).expect("coarse level valid");
    let coarse_layout = DofLayout::enclosed(&coarse);
    let sf = fine.q2_side();
    let sc = coarse.q2_side();
    let mut trips = Vec::new();
    for (fi, &fnode) in fine_layout.interior_nodes.iter().enumerate() {
        let (gx, gy) = (fnode as usize % sf, fnode as usize / sf);
        for (cx, wx) in q2_weights_1d(gx) {
            for (cy, wy) in q2_weights_1d(gy) {
                let cnode = cy * sc + cx;
                let ci = coarse_layout.interior_of[cnode];
                if ci != u32::MAX {
                    let w = wx * wy;
                    if w != 0.0 {
                        trips.push((fi as u32, ci, w));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(fine_layout.n2i, coarse_layout.n2i, trips)
}

/// Prolongation between full Q1 spaces of consecutive levels.
pub fn q1_prolongation(fine: &Grid) -> SparseMatrix {
    let coarse = Grid::build(fine.level - 1).expect("coarse level valid");
    let sf = fine.elements_per_side + 1;
    let sc = coarse.elements_per_side + 1;
    let mut trips = Vec::new();
    for f in 0..fine.n_q1() {
        let (gx, gy) = (f % sf, f / sf);
        for (cx, wx) in q1_weights_1d(gx) {
            for (cy, wy) in q1_weights_1d(gy) {
                trips.push((f as u32, (cy * sc + cx) as u32, wx * wy));
            }
        }
    }
    SparseMatrix::from_triplets(fine.n_q1(), coarse.n_q1(), trips)
}

struct MgLevel {
    a: SparseMatrix,
    diag: Vec<f64>,
    /// prolongation from the next-coarser level into this one
    p: Option<SparseMatrix>,
}

/// Multigrid hierarchy for one operator; `apply` runs a fixed number of
/// V-cycles, a fixed linear process.
pub struct MgHierarchy {
    levels: Vec<MgLevel>,
    coarse_lu: DenseLu,
    pub cycles: usize,
    smooth_iters: usize,
}

/// Coefficients of a (shifted) convection-diffusion block
/// a * M + b * (nu K + sign N(w) + W(w)).
pub struct CdBlockSpec<'a> {
    pub mass_coef: f64,
    pub cd_coef: f64,
    pub nu: f64,
    /// Full-space fine-grid wind; None drops convection and stabilization.
    pub wind: Option<&'a [f64]>,
    /// Negate the convection term (adjoint blocks).
    pub adjoint: bool,
    pub lps: crate::fem::LpsConfig,
}

impl MgHierarchy {
    pub(crate) fn assemble(
        levels: Vec<(SparseMatrix, Option<SparseMatrix>)>,
        cycles: usize,
    ) -> Result<MgHierarchy> {
        let mut out = Vec::with_capacity(levels.len());
        let mut coarse_lu = None;
        let last = levels.len() - 1;
        for (k, (a, p)) in levels.into_iter().enumerate() {
            if k == last {
                coarse_lu = Some(DenseLu::factor_csr(&a).map_err(|_| {
                    FlowError::Numeric("singular multigrid coarse matrix".into())
                })?);
            }
            let diag = a.diagonal();
            out.push(MgLevel { a, diag, p });
        }
        Ok(MgHierarchy {
            levels: out,
            coarse_lu: coarse_lu.unwrap(),
            cycles,
            smooth_iters: 2,
        })
    }

    /// Galerkin hierarchy given the fine operator and the prolongation chain
    /// ordered fine-to-coarse.
    pub fn from_prolongations(
        a_fine: SparseMatrix,
        prolongations: Vec<SparseMatrix>,
        cycles: usize,
    ) -> Result<MgHierarchy> {
        let mut levels = Vec::new();
        let mut a = a_fine;
        for p in prolongations {
            let coarse = p.transpose().matmul(&a).matmul(&p);
            levels.push((a, Some(p)));
            a = coarse;
        }
        levels.push((a, None));
        Self::assemble(levels, cycles)
    }

    /// Hierarchy for a scalar Q2-interior operator on the given grid, with
    /// Galerkin coarse operators. Appropriate for symmetric blocks.
    pub fn for_q2_interior(grid: &Grid, layout: &DofLayout, a: SparseMatrix, cycles: usize) -> Result<MgHierarchy> {
        let mut ps = Vec::new();
        let mut g = grid.clone();
        let mut l = layout.clone();
        while g.level > 1 {
            ps.push(q2_interior_prolongation(&g, &l));
            g = Grid::build(g.level - 1)?;
            l = DofLayout::enclosed(&g);
        }
        Self::from_prolongations(a, ps, cycles)
    }

    /// Hierarchy for a convection-diffusion block with re-assembled coarse
    /// operators: the wind is injected onto each coarser grid and the
    /// stabilization parameter recomputed for the coarse mesh size. Galerkin
    /// coarsening of strongly convective fine operators is unstable because
    /// the coarse systems inherit the fine-grid stabilization only.
    pub fn for_cd_q2(
        grid: &Grid,
        layout: &DofLayout,
        spec: &CdBlockSpec,
        cycles: usize,
    ) -> Result<MgHierarchy> {
        use crate::fem;
        let mut levels = Vec::new();
        let mut g = grid.clone();
        let mut l = layout.clone();
        let mut wind = spec.wind.map(|w| w.to_vec());
        loop {
            let m = fem::assemble_mass_q2(&g);
            let k = fem::assemble_stiffness_q2(&g);
            let mut a = m.scaled(spec.mass_coef).add_scaled(1.0, &k, spec.cd_coef * spec.nu);
            if let Some(w) = &wind {
                let sign = if spec.adjoint { -1.0 } else { 1.0 };
                let n = fem::assemble_convection_q2(&g, w)?;
                a = a.add_scaled(1.0, &n, sign * spec.cd_coef);
                let wmat = fem::assemble_lps_q2(&g, w, spec.lps, spec.nu)?;
                a = a.add_scaled(1.0, &wmat, spec.cd_coef);
            }
            let a_ii = l.interior_csr(&a);
            if g.level == 1 {
                levels.push((a_ii, None));
                break;
            }
            levels.push((a_ii, Some(q2_interior_prolongation(&g, &l))));
            wind = wind.map(|w| inject_wind_to_coarse(&g, &w));
            g = Grid::build(g.level - 1)?;
            l = DofLayout::enclosed(&g);
        }
        Self::assemble(levels, cycles)
    }

    /// Hierarchy for a full Q1 operator on the given grid.
    pub fn for_q1(grid: &Grid, a: SparseMatrix, cycles: usize) -> Result<MgHierarchy> {
        let mut ps = Vec::new();
        let mut g = grid.clone();
        while g.level > 1 {
            ps.push(q1_prolongation(&g));
            g = Grid::build(g.level - 1)?;
        }
        Self::from_prolongations(a, ps, cycles)
    }

    pub fn dim(&self) -> usize {
        self.levels[0].a.nrows()
    }

    pub fn level_dims(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.a.nrows()).collect()
    }

    fn smooth(&self, k: usize, r: &[f64], x: &mut [f64], iters: usize) {
        let lvl = &self.levels[k];
        let a = &lvl.a;
        let n = a.nrows();
        for _ in 0..iters {
            for i in 0..n {
                let (cols, vals) = a.row(i);
                let mut s = r[i];
                for (c, v) in cols.iter().zip(vals) {
                    s -= v * x[*c as usize];
                }
                x[i] += s / lvl.diag[i];
            }
            for i in (0..n).rev() {
                let (cols, vals) = a.row(i);
                let mut s = r[i];
                for (c, v) in cols.iter().zip(vals) {
                    s -= v * x[*c as usize];
                }
                x[i] += s / lvl.diag[i];
            }
        }
    }

    fn vcycle(&self, k: usize, r: &[f64]) -> Vec<f64> {
        if k + 1 == self.levels.len() {
            return self.coarse_lu.solve(r);
        }
        let lvl = &self.levels[k];
        let n = lvl.a.nrows();
        let mut x = vec![0.0; n];
        self.smooth(k, r, &mut x, self.smooth_iters);
        let mut ax = vec![0.0; n];
        lvl.a.matvec(&x, &mut ax);
        let resid: Vec<f64> = r.iter().zip(&ax).map(|(ri, ai)| ri - ai).collect();
        let p = lvl.p.as_ref().unwrap();
        let mut rc = vec![0.0; p.ncols()];
        p.matvec_transpose_add(1.0, &resid, &mut rc);
        let ec = self.vcycle(k + 1, &rc);
        p.matvec_add(1.0, &ec, &mut x);
        self.smooth(k, r, &mut x, self.smooth_iters);
        x
    }

    /// Approximate inverse action: `cycles` V-cycles starting from zero.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut x = self.vcycle(0, r);
        for _ in 1..self.cycles {
            let mut ax = vec![0.0; x.len()];
            self.levels[0].a.matvec(&x, &mut ax);
            let resid: Vec<f64> = r.iter().zip(&ax).map(|(ri, ai)| ri - ai).collect();
            let e = self.vcycle(0, &resid);
            for (xi, ei) in x.iter_mut().zip(&e) {
                *xi += ei;
            }
        }
        x
    }

    /// Asymptotic error contraction factor of a single V-cycle, measured on
    /// a random initial error (diagnostics and tests).
    pub fn contraction_factor(&self, probes: usize) -> f64 {
        let n = self.dim();
        let mut state = 0xabcdef12345u64;
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        // solve A e = 0 starting from random x: error contraction
        let mut prev = crate::krylov::norm2(&x);
        let mut factor = 0.0;
        for _ in 0..probes {
            let mut ax = vec![0.0; n];
            self.levels[0].a.matvec(&x, &mut ax);
            for v in &mut ax {
                *v = -*v;
            }
            let e = self.vcycle(0, &ax);
            for (xi, ei) in x.iter_mut().zip(&e) {
                *xi += ei;
            }
            let cur = crate::krylov::norm2(&x);
            factor = cur / prev;
            prev = cur;
            if cur < 1e-300 {
                break;
            }
        }
        factor
    }
}

/// Multigrid-backed solver for the singular pressure stiffness K_p: the
/// first lexicographic node is pinned to zero and the output is projected
/// to mean zero.
pub struct PinnedPressureSolver {
    hier: MgHierarchy,
}

impl PinnedPressureSolver {
    pub fn new(grid: &Grid, k_p: &SparseMatrix, cycles: usize) -> Result<PinnedPressureSolver> {
        let pinned = pin_node(k_p, 0);
        Ok(PinnedPressureSolver {
            hier: MgHierarchy::for_q1(grid, pinned, cycles)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.hier.dim()
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let mut rp = r.to_vec();
        rp[0] = 0.0;
        let mut x = self.hier.apply(&rp);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        for v in &mut x {
            *v -= mean;
        }
        x
    }
}

/// Shared per-level data for building many convection-diffusion hierarchies
/// on one grid: coarse grids, layouts, prolongations, and the
/// wind-independent mass/stiffness assemblies.
pub struct CdCache {
    grids: Vec<Grid>,
    layouts: Vec<DofLayout>,
    /// ps[k] prolongs level k+1 (coarser) interior into level k interior.
    ps: Vec<SparseMatrix>,
    m_ii: Vec<SparseMatrix>,
    k_ii: Vec<SparseMatrix>,
}

impl CdCache {
    pub fn new(grid: &Grid) -> Result<CdCache> {
        let mut grids = vec![grid.clone()];
        while grids.last().unwrap().level > 1 {
            grids.push(Grid::build(grids.last().unwrap().level - 1)?);
        }
        let layouts: Vec<DofLayout> = grids.iter().map(DofLayout::enclosed).collect();
        let ps = grids[..grids.len() - 1]
            .iter()
            .zip(&layouts)
            .map(|(g, l)| q2_interior_prolongation(g, l))
            .collect();
        let m_ii = grids
            .iter()
            .zip(&layouts)
            .map(|(g, l)| l.interior_csr(&crate::fem::assemble_mass_q2(g)))
            .collect();
        let k_ii = grids
            .iter()
            .zip(&layouts)
            .map(|(g, l)| l.interior_csr(&crate::fem::assemble_stiffness_q2(g)))
            .collect();
        Ok(CdCache {
            grids,
            layouts,
            ps,
            m_ii,
            k_ii,
        })
    }

    /// Build the forward/adjoint hierarchy pair for one wind and shift; the
    /// per-level convection and stabilization matrices are assembled once
    /// and reused with flipped convection sign.
    pub fn hierarchy_pair(
        &self,
        spec: &CdBlockSpec,
        cycles: usize,
    ) -> Result<(MgHierarchy, MgHierarchy)> {
        use crate::fem;
        let nl = self.grids.len();
        let mut fwd = Vec::with_capacity(nl);
        let mut adj = Vec::with_capacity(nl);
        let mut wind = spec.wind.map(|w| w.to_vec());
        for k in 0..nl {
            let base = self.m_ii[k]
                .scaled(spec.mass_coef)
                .add_scaled(1.0, &self.k_ii[k], spec.cd_coef * spec.nu);
            let (af, aa) = if let Some(w) = &wind {
                let g = &self.grids[k];
                let l = &self.layouts[k];
                let n = l.interior_csr(&fem::assemble_convection_q2(g, w)?);
                let wm = l.interior_csr(&fem::assemble_lps_q2(g, w, spec.lps, spec.nu)?);
                let with_w = base.add_scaled(1.0, &wm, spec.cd_coef);
                (
                    with_w.add_scaled(1.0, &n, spec.cd_coef),
                    with_w.add_scaled(1.0, &n, -spec.cd_coef),
                )
            } else {
                (base.clone(), base)
            };
            let p = if k + 1 < nl {
                wind = wind.map(|w| inject_wind_to_coarse(&self.grids[k], &w));
                Some(self.ps[k].clone())
            } else {
                None
            };
            fwd.push((af, p.clone()));
            adj.push((aa, p));
        }
        Ok((
            MgHierarchy::assemble(fwd, cycles)?,
            MgHierarchy::assemble(adj, cycles)?,
        ))
    }
}

/// Nodal injection of a full-space 2-component Q2 wind onto the next
/// coarser grid (coarse Q2 nodes are a subset of fine Q2 nodes).
pub fn inject_wind_to_coarse(fine: &Grid, wind: &[f64]) -> Vec<f64> {
    let coarse = Grid::build(fine.level - 1).expect("coarse level valid");
    let (sf, sc) = (fine.q2_side(), coarse.q2_side());
    let (nf, nc) = (fine.n_q2(), coarse.n_q2());
    let mut out = vec![0.0; 2 * nc];
    for cy in 0..sc {
        for cx in 0..sc {
            let c = cy * sc + cx;
            let f = 2 * cy * sf + 2 * cx;
            out[c] = wind[f];
            out[nc + c] = wind[nf + f];
        }
    }
    out
}

/// Symmetric pinning: zero row and column, unit diagonal.
pub fn pin_node(a: &SparseMatrix, node: usize) -> SparseMatrix {
    let n = a.nrows();
    let mut trips = Vec::with_capacity(a.nnz() + 1);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if i != node && *c as usize != node {
                trips.push((i as u32, *c, *v));
            }
        }
    }
    trips.push((node as u32, node as u32, 1.0));
    SparseMatrix::from_triplets(n, n, trips)
}

/// Swappable approximate inverse of a sparse block: a multigrid hierarchy in
/// production, a dense factorization in diagnostic paths.
pub enum BlockInverse {
    Multigrid(MgHierarchy),
    Exact(DenseLu),
}

impl BlockInverse {
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            BlockInverse::Multigrid(h) => h.apply(r),
            BlockInverse::Exact(lu) => lu.solve(r),
        }
    }
}

/// Pinned pressure stiffness solve: multigrid or dense, then mean-zero.
pub enum KpSolve {
    Multigrid(PinnedPressureSolver),
    Exact { lu: DenseLu },
}

impl KpSolve {
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            KpSolve::Multigrid(s) => s.solve(r),
            KpSolve::Exact { lu } => {
                let mut rp = r.to_vec();
                rp[0] = 0.0;
                let mut x = lu.solve(&rp);
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                for v in &mut x {
                    *v -= mean;
                }
                x
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem;
    use crate::grid::{DofLayout, Grid};

    #[test]
    fn prolongation_reproduces_constants() {
        // Q1: exact everywhere; Q2 interior: exact away from the boundary
        let g = Grid::build(3).unwrap();
        let p1 = q1_prolongation(&g);
        let c = p1.apply(&vec![1.0; p1.ncols()]);
        assert!(c.iter().all(|v| (v - 1.0).abs() < 1e-13));

        let layout = DofLayout::enclosed(&g);
        let p2 = q2_interior_prolongation(&g, &layout);
        let cf = p2.apply(&vec![1.0; p2.ncols()]);
        let s = g.q2_side();
        for (fi, &fnode) in layout.interior_nodes.iter().enumerate() {
            let (gx, gy) = (fnode as usize % s, fnode as usize / s);
            let dist = gx.min(gy).min(s - 1 - gx).min(s - 1 - gy);
            if dist >= 5 {
                assert!((cf[fi] - 1.0).abs() < 1e-13, "node ({gx},{gy}): {}", cf[fi]);
            }
        }
    }

    #[test]
    fn level_dims_strictly_decrease() {
        let g = Grid::build(4).unwrap();
        let layout = DofLayout::enclosed(&g);
        let k = layout.interior_csr(&fem::assemble_stiffness_q2(&g));
        let h = MgHierarchy::for_q2_interior(&g, &layout, k, 1).unwrap();
        let dims = h.level_dims();
        for w in dims.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert_eq!(*dims.last().unwrap(), 9);
    }

    #[test]
    fn vcycle_zero_input() {
        let g = Grid::build(2).unwrap();
        let layout = DofLayout::enclosed(&g);
        let k = layout.interior_csr(&fem::assemble_stiffness_q2(&g));
        let h = MgHierarchy::for_q2_interior(&g, &layout, k, 4).unwrap();
        let z = h.apply(&vec![0.0; h.dim()]);
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diffusion_contraction_level_independent() {
        let mut factors = Vec::new();
        for level in 2..=5 {
            let g = Grid::build(level).unwrap();
            let layout = DofLayout::enclosed(&g);
            let k = layout.interior_csr(&fem::assemble_stiffness_q2(&g));
            let h = MgHierarchy::for_q2_interior(&g, &layout, k, 1).unwrap();
            let f = h.contraction_factor(8);
            factors.push(f);
        }
        println!("diffusion V-cycle contraction factors l=2..5: {factors:?}");
        for &f in &factors {
            assert!(f < 0.2, "contraction {f} too weak");
        }
        let (fmin, fmax) = factors
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &f| (lo.min(f), hi.max(f)));
        assert!(fmax / fmin.max(1e-12) < 10.0, "factors not level-independent: {factors:?}");
    }

    #[test]
    fn convection_dominated_block_still_contracts() {
        // L(w) + M at nu = 1/500 with stabilization, level 4
        let level = 4;
        let nu = 1.0 / 500.0;
        let g = Grid::build(level).unwrap();
        let layout = DofLayout::enclosed(&g);
        let wind = fem::interpolate_q2(
            &g,
            &fem::VectorField::new(|x, y, _| [y, -x]),
            0.0,
        );
        let spec = CdBlockSpec {
            mass_coef: 1.0,
            cd_coef: 1.0,
            nu,
            wind: Some(&wind),
            adjoint: false,
            lps: fem::LpsConfig::default(),
        };
        let h = MgHierarchy::for_cd_q2(&g, &layout, &spec, 1).unwrap();
        let f = h.contraction_factor(8);
        println!("convection-dominated V-cycle contraction at level 4: {f:.3}");
        assert!(f < 1.0, "V-cycle diverges: factor {f}");
    }

    #[test]
    fn pinned_pressure_solve_matches_dense() {
        use crate::dense::DenseLu;
        let g = Grid::build(2).unwrap();
        let kp = fem::assemble_stiffness_q1(&g);
        // enough cycles to resolve the 1e-6 comparison with the dense oracle
        let solver = PinnedPressureSolver::new(&g, &kp, 8).unwrap();
        let n = kp.nrows();
        // right-hand side orthogonal to constants
        let mut r: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let mean = r.iter().sum::<f64>() / n as f64;
        for v in &mut r {
            *v -= mean;
        }
        let x = solver.solve(&r);
        // dense pinned solve + projection
        let pinned = pin_node(&kp, 0);
        let lu = DenseLu::factor_csr(&pinned).unwrap();
        let mut rp = r.clone();
        rp[0] = 0.0;
        let mut xd = lu.solve(&rp);
        let meand = xd.iter().sum::<f64>() / n as f64;
        for v in &mut xd {
            *v -= meand;
        }
        let err = crate::krylov::norm2(&x.iter().zip(&xd).map(|(a, b)| a - b).collect::<Vec<_>>())
            / crate::krylov::norm2(&xd);
        println!("pinned solve vs dense relative error: {err:.3e}");
        assert!(err < 1e-6);
        // output is mean-zero
        let xmean = x.iter().sum::<f64>() / n as f64;
        assert!(xmean.abs() < 1e-12);
    }

    #[test]
    fn pinned_pressure_recovers_mean_zero_solution() {
        let g = Grid::build(2).unwrap();
        let kp = fem::assemble_stiffness_q1(&g);
        let solver = PinnedPressureSolver::new(&g, &kp, 2).unwrap();
        let n = kp.nrows();
        let mut x0: Vec<f64> = (0..n).map(|i| ((i % 5) as f64) * 0.3 - 0.6).collect();
        let mean = x0.iter().sum::<f64>() / n as f64;
        for v in &mut x0 {
            *v -= mean;
        }
        let r = kp.apply(&x0);
        let x = solver.solve(&r);
        let err = crate::krylov::norm2(&x.iter().zip(&x0).map(|(a, b)| a - b).collect::<Vec<_>>())
            / crate::krylov::norm2(&x0);
        println!("pinned K_p recovery relative error: {err:.3e}");
        assert!(err < 1e-2, "recovery error {err}");
    }
}

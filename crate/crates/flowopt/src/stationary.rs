//! Stationary Navier-Stokes control: the Oseen-linearized KKT system, its
//! block-triangular preconditioner, and the nonlinear Picard loop.
//!
//! Each Oseen step solves
//!
//! ```text
//!   [ M      L_adj   B^T        ] [dv ]   [R2]
//!   [ L     -M/beta       B^T   ] [dz ] = [R1]
//!   [ B                         ] [dmu]   [r1]
//!   [        B                  ] [dp ]   [r2]
//! ```
//!
//! with L = nu K + N(v) + W(v), by flexible GMRES preconditioned with
//! [Phi 0; Psi -S]: five inner GMRES steps approximate the (1,1)-block
//! (Chebyshev mass solves plus multigrid on the shifted factors), and the
//! Schur complement is approximated by a pressure-space commutator product
//! K_p D_p^-1 M_p with its own inner iteration.

use std::sync::Arc;
use std::time::Instant;

use crate::chebyshev::{ChebyshevMass, MassInverse};
use crate::config::SolverConfig;
use crate::dense::DenseLu;
use crate::error::Result;
use crate::fem::{self, LpsConfig};
use crate::grid::DofLayout;
use crate::krylov::{fgmres, gmres_fixed, norm2, FgmresOptions, LinOp, Prec};
use crate::multigrid::{BlockInverse, CdBlockSpec, KpSolve, PinnedPressureSolver};
use crate::space::{wind_ops, Discretization, WindOps};
use crate::problems::{ProblemSpec, Scheme};
use crate::report::RunReport;
use crate::sparse::SparseMatrix;

/// One Oseen step's KKT operator (interior unknowns).
pub struct StationaryKkt {
    pub nu: f64,
    pub beta: f64,
    pub n2i: usize,
    pub n_p: usize,
    pub m_ii: SparseMatrix,
    pub l_ii: SparseMatrix,
    pub ladj_ii: SparseMatrix,
    pub b_i: SparseMatrix,
    /// Pressure-space operators for the Schur approximation.
    pub mp: SparseMatrix,
    pub kp: SparseMatrix,
    pub lp: SparseMatrix,
    pub lp_adj: SparseMatrix,
}

impl StationaryKkt {
    /// Blocks for the Stokes control solve: L = L_adj = K (unit viscosity,
    /// no convection or stabilization).
    pub fn stokes(asm: &Discretization, beta: f64) -> StationaryKkt {
        StationaryKkt {
            nu: 1.0,
            beta,
            n2i: asm.layout.n2i,
            n_p: asm.layout.n_p,
            m_ii: asm.m_ii.clone(),
            l_ii: asm.k_ii.clone(),
            ladj_ii: asm.k_ii.clone(),
            b_i: asm.b_i.clone(),
            mp: asm.mp.clone(),
            kp: asm.kp.clone(),
            lp: asm.kp.clone(),
            lp_adj: asm.kp.clone(),
        }
    }

    /// Blocks for a Navier-Stokes Oseen step with the given wind matrices.
    pub fn with_wind(
        asm: &Discretization,
        nu: f64,
        beta: f64,
        wind: &[f64],
        ops: &WindOps,
        lps: LpsConfig,
    ) -> Result<StationaryKkt> {
        let n_ii = asm.layout.interior_csr(&ops.nhat);
        let w_ii = asm.layout.interior_csr(&ops.what);
        let kw = asm.k_ii.scaled(nu).add_scaled(1.0, &w_ii, 1.0);
        let l_ii = kw.add_scaled(1.0, &n_ii, 1.0);
        let ladj_ii = kw.add_scaled(1.0, &n_ii, -1.0);
        let pops = fem::assemble_pressure_ops(&asm.grid, wind, lps, nu)?;
        let kpw = pops
            .stiffness
            .scaled(nu)
            .add_scaled(1.0, &pops.stabilization, 1.0);
        let lp = kpw.add_scaled(1.0, &pops.convection, 1.0);
        let lp_adj = kpw.add_scaled(1.0, &pops.convection, -1.0);
        Ok(StationaryKkt {
            nu,
            beta,
            n2i: asm.layout.n2i,
            n_p: asm.layout.n_p,
            m_ii: asm.m_ii.clone(),
            l_ii,
            ladj_ii,
            b_i: asm.b_i.clone(),
            mp: pops.mass,
            kp: pops.stiffness,
            lp,
            lp_adj,
        })
    }

    pub fn n_v(&self) -> usize {
        2 * self.n2i
    }

    fn velocity_apply(&self, mat: &SparseMatrix, x: &[f64], y: &mut [f64], alpha: f64) {
        for c in 0..2 {
            mat.matvec_add(alpha, &x[c * self.n2i..(c + 1) * self.n2i], &mut y[c * self.n2i..(c + 1) * self.n2i]);
        }
    }
}

impl LinOp for StationaryKkt {
    fn dim(&self) -> usize {
        2 * self.n_v() + 2 * self.n_p
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nv = self.n_v();
        let np = self.n_p;
        let (dv, rest) = x.split_at(nv);
        let (dz, rest) = rest.split_at(nv);
        let (dmu, dp) = rest.split_at(np);
        y.fill(0.0);
        {
            let (y1, yrest) = y.split_at_mut(nv);
            let (y2, yrest) = yrest.split_at_mut(nv);
            let (y3, y4) = yrest.split_at_mut(np);
            // adjoint momentum rows: M dv + L_adj dz + B^T dmu
            self.velocity_apply(&self.m_ii, dv, y1, 1.0);
            self.velocity_apply(&self.ladj_ii, dz, y1, 1.0);
            self.b_i.matvec_transpose_add(1.0, dmu, y1);
            // state momentum rows: L dv - (1/beta) M dz + B^T dp
            self.velocity_apply(&self.l_ii, dv, y2, 1.0);
            self.velocity_apply(&self.m_ii, dz, y2, -1.0 / self.beta);
            self.b_i.matvec_transpose_add(1.0, dp, y2);
            // divergence rows
            self.b_i.matvec_add(1.0, dv, y3);
            self.b_i.matvec_add(1.0, dz, y4);
        }
    }
}

/// The (1,1)-block of the KKT system as a standalone operator.
pub struct PhiOp<'a>(pub &'a StationaryKkt);

impl LinOp for PhiOp<'_> {
    fn dim(&self) -> usize {
        2 * self.0.n_v()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.0;
        let nv = k.n_v();
        let (dv, dz) = x.split_at(nv);
        y.fill(0.0);
        let (y1, y2) = y.split_at_mut(nv);
        k.velocity_apply(&k.m_ii, dv, y1, 1.0);
        k.velocity_apply(&k.ladj_ii, dz, y1, 1.0);
        k.velocity_apply(&k.l_ii, dv, y2, 1.0);
        k.velocity_apply(&k.m_ii, dz, y2, -1.0 / k.beta);
    }
}

/// Whether preconditioner sub-solves run their production approximations or
/// exact dense factorizations (used by diagnostics and tests).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecMode {
    Approximate,
    Exact,
}

/// Block-triangular approximation of the (1,1)-block:
/// [M_c 0; L -S] with S = (L + M/sqrt(beta)) M^-1 (L_adj + M/sqrt(beta)).
pub struct PhiPrec {
    n2i: usize,
    mass_inv: MassInverse,
    m_ii: SparseMatrix,
    l_ii: SparseMatrix,
    inv_l: BlockInverse,
    inv_ladj: BlockInverse,
}

impl PhiPrec {
    pub fn new(
        asm: &Discretization,
        kkt: &StationaryKkt,
        wind: Option<&[f64]>,
        config: &SolverConfig,
        mode: PrecMode,
    ) -> Result<PhiPrec> {
        let shift = 1.0 / kkt.beta.sqrt();
        let (mass_inv, inv_l, inv_ladj) = match mode {
            PrecMode::Approximate => {
                let cheb = ChebyshevMass::new(
                    kkt.m_ii.clone(),
                    asm.cheb_m.with_steps(config.cheb_steps),
                );
                let spec = CdBlockSpec {
                    mass_coef: shift,
                    cd_coef: 1.0,
                    nu: kkt.nu,
                    wind,
                    adjoint: false,
                    lps: config.lps,
                };
                let (fwd, adj) = asm
                    .cd_cache
                    .hierarchy_pair(&spec, config.mg_cycles_velocity)?;
                (
                    MassInverse::Chebyshev(cheb),
                    BlockInverse::Multigrid(fwd),
                    BlockInverse::Multigrid(adj),
                )
            }
            PrecMode::Exact => {
                let m_lu = DenseLu::factor_csr(&kkt.m_ii)?;
                let l_sh = kkt.l_ii.add_scaled(1.0, &kkt.m_ii, shift);
                let ladj_sh = kkt.ladj_ii.add_scaled(1.0, &kkt.m_ii, shift);
                (
                    MassInverse::Exact(m_lu),
                    BlockInverse::Exact(DenseLu::factor_csr(&l_sh)?),
                    BlockInverse::Exact(DenseLu::factor_csr(&ladj_sh)?),
                )
            }
        };
        Ok(PhiPrec {
            n2i: kkt.n2i,
            mass_inv,
            m_ii: kkt.m_ii.clone(),
            l_ii: kkt.l_ii.clone(),
            inv_l,
            inv_ladj,
        })
    }

    fn per_component(&self, f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
        let n = self.n2i;
        let mut out = Vec::with_capacity(2 * n);
        out.extend(f(&x[..n]));
        out.extend(f(&x[n..]));
        out
    }
}

impl Prec for PhiPrec {
    fn dim(&self) -> usize {
        4 * self.n2i
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let nv = 2 * self.n2i;
        let (r1, r2) = r.split_at(nv);
        let z1 = self.per_component(|x| self.mass_inv.apply(x), r1);
        // t = L z1 - r2
        let mut t = vec![0.0; nv];
        for c in 0..2 {
            self.l_ii
                .matvec_add(1.0, &z1[c * self.n2i..(c + 1) * self.n2i], &mut t[c * self.n2i..(c + 1) * self.n2i]);
        }
        for (ti, r2i) in t.iter_mut().zip(r2) {
            *ti -= r2i;
        }
        let u = self.per_component(|x| self.inv_l.apply(x), &t);
        let mut mu_vec = vec![0.0; nv];
        for c in 0..2 {
            self.m_ii
                .matvec_add(1.0, &u[c * self.n2i..(c + 1) * self.n2i], &mut mu_vec[c * self.n2i..(c + 1) * self.n2i]);
        }
        let z2 = self.per_component(|x| self.inv_ladj.apply(x), &mu_vec);
        let mut out = z1;
        out.extend(z2);
        out
    }
}

/// Commutator-based approximation of the outer Schur complement
/// S = Psi Phi^-1 Psi^T ~= K_p-blockdiag * D_p^-1 * M_p-blockdiag with
/// D_p = [M_p, L_adj_p; L_p, -M_p/beta]. The inverse application runs pinned
/// K_p solves per slot, multiplies by the sparse D_p blocks, and finishes
/// with Chebyshev mass solves per slot.
pub struct SchurPrec {
    pub n_p: usize,
    beta: f64,
    mp: SparseMatrix,
    lp: SparseMatrix,
    lp_adj: SparseMatrix,
    mass_inv: MassInverse,
    kp_solve: Arc<KpSolve>,
}

impl SchurPrec {
    pub fn new(
        asm: &Discretization,
        kkt: &StationaryKkt,
        kp_solve: Arc<KpSolve>,
        config: &SolverConfig,
        mode: PrecMode,
    ) -> Result<SchurPrec> {
        let mass_inv = match mode {
            PrecMode::Approximate => MassInverse::Chebyshev(ChebyshevMass::new(
                kkt.mp.clone(),
                asm.cheb_mp.with_steps(config.cheb_steps),
            )),
            PrecMode::Exact => MassInverse::Exact(DenseLu::factor_csr(&kkt.mp)?),
        };
        Ok(SchurPrec {
            n_p: kkt.n_p,
            beta: kkt.beta,
            mp: kkt.mp.clone(),
            lp: kkt.lp.clone(),
            lp_adj: kkt.lp_adj.clone(),
            mass_inv,
            kp_solve,
        })
    }

    /// z = S_hat^-1 r for the 2 n_p pressure block.
    pub fn apply_inv(&self, r: &[f64]) -> Vec<f64> {
        let np = self.n_p;
        let t1 = self.kp_solve.apply(&r[..np]);
        let t2 = self.kp_solve.apply(&r[np..]);
        // y = D_p t
        let mut y1 = vec![0.0; np];
        self.mp.matvec_add(1.0, &t1, &mut y1);
        self.lp_adj.matvec_add(1.0, &t2, &mut y1);
        let mut y2 = vec![0.0; np];
        self.lp.matvec_add(1.0, &t1, &mut y2);
        self.mp.matvec_add(-1.0 / self.beta, &t2, &mut y2);
        let mut out = self.mass_inv.apply(&y1);
        out.extend(self.mass_inv.apply(&y2));
        out
    }
}

/// The outer preconditioner [Phi_hat 0; Psi -S_hat].
pub struct StationaryPrec {
    kkt: Arc<StationaryKkt>,
    phi_prec: PhiPrec,
    schur: SchurPrec,
    inner_steps: usize,
}

impl StationaryPrec {
    pub fn new(
        asm: &Discretization,
        kkt: Arc<StationaryKkt>,
        wind: Option<&[f64]>,
        kp_solve: Arc<KpSolve>,
        config: &SolverConfig,
        mode: PrecMode,
    ) -> Result<StationaryPrec> {
        let phi_prec = PhiPrec::new(asm, &kkt, wind, config, mode)?;
        let schur = SchurPrec::new(asm, &kkt, kp_solve, config, mode)?;
        Ok(StationaryPrec {
            kkt,
            phi_prec,
            schur,
            inner_steps: config.inner_gmres_steps,
        })
    }
}

impl Prec for StationaryPrec {
    fn dim(&self) -> usize {
        self.kkt.dim()
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let nv = self.kkt.n_v();
        let np = self.kkt.n_p;
        let (r_phi, r_psi) = r.split_at(2 * nv);
        let z_phi = gmres_fixed(&PhiOp(&self.kkt), &self.phi_prec, r_phi, self.inner_steps);
        // w = Psi z_phi - r_psi
        let mut w = vec![0.0; 2 * np];
        {
            let (w1, w2) = w.split_at_mut(np);
            self.kkt.b_i.matvec_add(1.0, &z_phi[..nv], w1);
            self.kkt.b_i.matvec_add(1.0, &z_phi[nv..], w2);
        }
        for (wi, ri) in w.iter_mut().zip(r_psi) {
            *wi -= ri;
        }
        let z_p = self.schur.apply_inv(&w);
        let mut out = z_phi;
        out.extend(z_p);
        out
    }
}

/// Current Oseen iterate: interior velocity coefficients plus the boundary
/// padding held separately.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
    /// Full-space vector with the Dirichlet data at boundary nodes.
    pub boundary: Vec<f64>,
    pub oseen_index: usize,
}

impl StationaryState {
    pub fn zeros(asm: &Discretization, boundary: Vec<f64>) -> StationaryState {
        StationaryState {
            v: vec![0.0; asm.layout.n_v],
            zeta: vec![0.0; asm.layout.n_v],
            p: vec![0.0; asm.layout.n_p],
            mu: vec![0.0; asm.layout.n_p],
            boundary,
            oseen_index: 0,
        }
    }

    pub fn v_full(&self, layout: &DofLayout) -> Vec<f64> {
        layout.pad_velocity(&self.v, &self.boundary)
    }

    pub fn zeta_full(&self, layout: &DofLayout) -> Vec<f64> {
        let zero = vec![0.0; self.boundary.len()];
        layout.pad_velocity(&self.zeta, &zero)
    }

    pub fn apply_update(&mut self, delta: &[f64]) {
        let nv = self.v.len();
        let np = self.p.len();
        debug_assert_eq!(delta.len(), 2 * nv + 2 * np);
        for (x, d) in self.v.iter_mut().zip(&delta[..nv]) {
            *x += d;
        }
        for (x, d) in self.zeta.iter_mut().zip(&delta[nv..2 * nv]) {
            *x += d;
        }
        for (x, d) in self.mu.iter_mut().zip(&delta[2 * nv..2 * nv + np]) {
            *x += d;
        }
        for (x, d) in self.p.iter_mut().zip(&delta[2 * nv + np..]) {
            *x += d;
        }
        self.oseen_index += 1;
    }
}

/// Stacked nonlinear residual (R2, R1, r1, r2) of the current iterate; in
/// Stokes mode the convection, stabilization, and omega terms are dropped
/// and unit viscosity is used.
pub fn stationary_residual(
    asm: &Discretization,
    problem: &ProblemSpec,
    state: &StationaryState,
    ops: Option<&WindOps>,
) -> Vec<f64> {
    let grid = &asm.grid;
    let layout = &asm.layout;
    let n = grid.n_q2();
    let v_full = state.v_full(layout);
    let z_full = state.zeta_full(layout);
    let f_load = fem::assemble_load_q2(grid, &problem.f, 0.0);
    let vd = fem::interpolate_q2(grid, &problem.v_d, 0.0);

    let apply_l = |x: &[f64], adjoint: bool| -> Vec<f64> {
        let nu = if ops.is_some() { problem.nu } else { 1.0 };
        let mut y = Discretization::apply_vec(&asm.khat, x);
        for v in &mut y {
            *v *= nu;
        }
        if let Some(w) = ops {
            let sgn = if adjoint { -1.0 } else { 1.0 };
            for c in 0..2 {
                w.nhat.matvec_add(sgn, &x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
                w.what.matvec_add(1.0, &x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
            }
        }
        y
    };

    let lv = apply_l(&v_full, false);
    let ladj_z = apply_l(&z_full, true);
    let m_v = Discretization::apply_vec(&asm.mhat, &v_full);
    let m_z = Discretization::apply_vec(&asm.mhat, &z_full);
    let m_vd = Discretization::apply_vec(&asm.mhat, &vd);

    let mut bt_p = vec![0.0; 2 * n];
    asm.b.matvec_transpose_add(1.0, &state.p, &mut bt_p);
    let mut bt_mu = vec![0.0; 2 * n];
    asm.b.matvec_transpose_add(1.0, &state.mu, &mut bt_mu);

    let mut r1_full = f_load;
    for i in 0..2 * n {
        r1_full[i] += -lv[i] - bt_p[i] + m_z[i] / problem.beta;
    }
    let mut r2_full: Vec<f64> = (0..2 * n)
        .map(|i| m_vd[i] - m_v[i] - ladj_z[i] - bt_mu[i])
        .collect();
    if ops.is_some() {
        let omega = fem::assemble_gradwind_term(grid, &v_full, &z_full);
        for i in 0..2 * n {
            r2_full[i] -= omega[i];
        }
    }
    let r1_div = asm.b.apply(&v_full);
    let r2_div = asm.b.apply(&z_full);

    let mut rhs = layout.restrict_velocity(&r2_full);
    rhs.extend(layout.restrict_velocity(&r1_full));
    rhs.extend(r1_div.iter().map(|v| -v));
    rhs.extend(r2_div.iter().map(|v| -v));
    rhs
}

/// Relative divergence residual |B v| / |v| of the current velocity.
pub fn divergence_residual(asm: &Discretization, state: &StationaryState) -> f64 {
    let v_full = state.v_full(&asm.layout);
    let div = asm.b.apply(&v_full);
    norm2(&div) / norm2(&state.v).max(1e-300)
}

/// Stokes control solve used as the first Oseen iterate.
pub fn stokes_initial_guess(
    problem: &ProblemSpec,
    level: u32,
    config: &SolverConfig,
) -> Result<(StationaryState, RunReport)> {
    let mut p = problem.clone();
    p.nu = 1.0;
    solve_stationary_inner(&p, level, config, true)
}

/// Full nonlinear solve of the stationary control problem.
pub fn solve_stationary(
    problem: &ProblemSpec,
    level: u32,
    config: &SolverConfig,
) -> Result<(StationaryState, RunReport)> {
    solve_stationary_inner(problem, level, config, false)
}

fn solve_stationary_inner(
    problem: &ProblemSpec,
    level: u32,
    config: &SolverConfig,
    stokes_only: bool,
) -> Result<(StationaryState, RunReport)> {
    problem.validate()?;
    config.validate()?;
    let t0 = Instant::now();
    let asm = Discretization::new(level, config.cheb_steps)?;
    let boundary = fem::boundary_values(&asm.grid, &asm.layout, &problem.g, 0.0);
    let mut state = StationaryState::zeros(&asm, boundary);
    let kp_solve = Arc::new(KpSolve::Multigrid(PinnedPressureSolver::new(
        &asm.grid,
        &asm.kp,
        config.mg_cycles_pressure,
    )?));
    let opts = FgmresOptions {
        tol: config.outer_tol,
        restart: config.restart,
        max_iterations: config.max_outer,
    };

    let mut fg_counts = Vec::new();
    let mut res_hist = Vec::new();

    // Oseen iterate 1: the Stokes control solve
    let rhs0 = stationary_residual(&asm, problem, &state, None);
    let ref_norm = norm2(&rhs0).max(1e-300);
    {
        let kkt = Arc::new(StationaryKkt::stokes(&asm, problem.beta));
        let prec = StationaryPrec::new(
            &asm,
            kkt.clone(),
            None,
            kp_solve.clone(),
            config,
            PrecMode::Approximate,
        )?;
        let (delta, st) = fgmres(kkt.as_ref(), &prec, &rhs0, &opts);
        state.apply_update(&delta);
        fg_counts.push(st.iterations);
    }

    let mut converged = true;
    if !(problem.is_stokes() || stokes_only) {
        converged = false;
        loop {
            let wind = state.v_full(&asm.layout);
            let ops = wind_ops(&asm, &wind, config.lps, problem.nu)?;
            let rhs = stationary_residual(&asm, problem, &state, Some(&ops));
            let rel = norm2(&rhs) / ref_norm;
            res_hist.push(rel);
            if !rel.is_finite() {
                break;
            }
            if rel <= config.nonlinear_tol {
                converged = true;
                break;
            }
            if fg_counts.len() >= config.oseen_cap {
                break;
            }
            let kkt = Arc::new(StationaryKkt::with_wind(
                &asm,
                problem.nu,
                problem.beta,
                &wind,
                &ops,
                config.lps,
            )?);
            let prec = StationaryPrec::new(
                &asm,
                kkt.clone(),
                Some(&wind),
                kp_solve.clone(),
                config,
                PrecMode::Approximate,
            )?;
            let (delta, st) = fgmres(kkt.as_ref(), &prec, &rhs, &opts);
            state.apply_update(&delta);
            fg_counts.push(st.iterations);
        }
    }

    let report = RunReport {
        problem: "cavity-stationary".into(),
        scheme: Scheme::None,
        level,
        nu: problem.nu,
        beta: problem.beta,
        dof: 2 * asm.layout.n_v + 2 * asm.layout.n_p,
        fgmres_per_step: fg_counts,
        nonlinear_residuals: res_hist,
        wall_seconds: t0.elapsed().as_secs_f64(),
        v_err: None,
        zeta_err: None,
        converged,
        max_div_residual: divergence_residual(&asm, &state),
    };
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemSpec;

    #[test]
    fn kkt_dimension_level3() {
        let asm = Discretization::new(3, 20).unwrap();
        let kkt = StationaryKkt::stokes(&asm, 1e-2);
        assert_eq!(kkt.dim(), 1062);
    }

    #[test]
    fn stokes_system_is_symmetric() {
        let asm = Discretization::new(2, 20).unwrap();
        let kkt = StationaryKkt::stokes(&asm, 0.01);
        let a = crate::krylov::materialize(&kkt);
        let n = kkt.dim();
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((a[i][j] - a[j][i]).abs());
            }
        }
        assert!(asym <= 1e-12, "asymmetry {asym}");
    }

    #[test]
    fn stokes_path_single_solve() {
        let problem = ProblemSpec::cavity_stationary(1.0, 1e-2);
        let config = SolverConfig::default();
        let (_, report) = solve_stationary(&problem, 2, &config).unwrap();
        assert_eq!(report.oseen_iterations(), 1);
        assert!(report.converged);
    }

    #[test]
    fn zero_data_gives_zero_state() {
        let mut problem = ProblemSpec::cavity_stationary(1.0, 1.0);
        problem.g = crate::fem::VectorField::zero();
        let config = SolverConfig::default();
        let (state, report) = solve_stationary(&problem, 2, &config).unwrap();
        assert!(norm2(&state.v) == 0.0);
        assert_eq!(report.fgmres_per_step, vec![0]);
    }

    #[test]
    fn cavity_guess_has_small_divergence() {
        let problem = ProblemSpec::cavity_stationary(0.05, 1e-2);
        let config = SolverConfig::default();
        let (state, _) = stokes_initial_guess(&problem, 3, &config).unwrap();
        let asm = Discretization::new(3, 20).unwrap();
        let div = divergence_residual(&asm, &state);
        assert!(div <= 1e-5, "divergence residual {div}");
    }

    #[test]
    fn converged_solution_residual_small() {
        let problem = ProblemSpec::cavity_stationary(1.0 / 20.0, 1e-2);
        let config = SolverConfig::default();
        let (state, report) = solve_stationary(&problem, 2, &config).unwrap();
        assert!(report.converged);
        let asm = Discretization::new(2, 20).unwrap();
        let wind = state.v_full(&asm.layout);
        let ops = wind_ops(&asm, &wind, config.lps, problem.nu).unwrap();
        let rhs = stationary_residual(&asm, &problem, &state, Some(&ops));
        let rhs0 = {
            let st0 = StationaryState::zeros(
                &asm,
                fem::boundary_values(&asm.grid, &asm.layout, &problem.g, 0.0),
            );
            stationary_residual(&asm, &problem, &st0, None)
        };
        assert!(norm2(&rhs) <= config.nonlinear_tol * norm2(&rhs0));
    }
}

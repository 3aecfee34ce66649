//! Backward Euler all-at-once KKT system for instationary Navier-Stokes
//! control.
//!
//! All time steps are coupled in one saddle-point system. With S = n_t + 1
//! slots per field and unknowns (dv, dz, dmu, dp) stored time-major, the
//! (1,1)-block couples neighbouring steps through block-bidiagonal chains
//! L1 (adjoint, diag T_n, super -M) and L2 (state, diag L_n, sub -M), with
//! L_n = tau (nu K + N_n + W_n) + M. The fixed initial and terminal
//! conditions dv_0 = 0, dz_nt = 0 are imposed as solenoidal-projection
//! saddle rows, which keeps Psi = I (x) tau B exactly block-diagonal.
//!
//! The preconditioner approximates the (1,1)-block by five inner GMRES
//! steps with Chebyshev mass solves and block-forward/backward substitution
//! through the shifted chains (multigrid per diagonal block; the singular
//! slot of the mass block carries an epsilon surrogate), and the outer Schur
//! complement by the pressure-space commutator product.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use crate::chebyshev::{ChebyshevMass, MassInverse};
use crate::config::SolverConfig;
use crate::dense::DenseLu;
use crate::error::{FlowError, Result};
use crate::fem;
use crate::krylov::{fgmres, gmres_fixed, norm2, FgmresOptions, LinOp, Prec};
use crate::multigrid::{BlockInverse, CdBlockSpec, KpSolve, PinnedPressureSolver};
use crate::problems::{ProblemSpec, Scheme};
use crate::report::RunReport;
use crate::space::{Discretization, WindOps};
use crate::sparse::SparseMatrix;
use crate::stationary::PrecMode;

#[inline]
fn slot(z: &[f64], n: usize, w: usize) -> &[f64] {
    &z[n * w..(n + 1) * w]
}

#[derive(Debug, Clone, Copy)]
pub struct TimeGridBE {
    pub t_f: f64,
    pub n_t: usize,
    pub tau: f64,
}

impl TimeGridBE {
    pub fn new(t_f: f64, n_t: usize) -> Result<TimeGridBE> {
        if n_t == 0 || t_f <= 0.0 {
            return Err(FlowError::Config("time grid needs n_t >= 1, t_f > 0".into()));
        }
        Ok(TimeGridBE {
            t_f,
            n_t,
            tau: t_f / n_t as f64,
        })
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }
}

/// Trajectory iterate: interior coefficients per time slot; the pressure
/// trajectories carry the projection multipliers in their extra slots
/// (p slot 0, mu slot n_t).
#[derive(Debug, Clone)]
pub struct BeState {
    pub v: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    /// Per-slot full-space boundary padding for the state velocity.
    pub boundary: Vec<Vec<f64>>,
}

impl BeState {
    pub fn init(asm: &Discretization, problem: &ProblemSpec, tg: &TimeGridBE) -> BeState {
        let slots = tg.n_t + 1;
        let boundary: Vec<Vec<f64>> = (0..slots)
            .map(|n| fem::boundary_values(&asm.grid, &asm.layout, &problem.g, tg.time(n)))
            .collect();
        let mut v = vec![vec![0.0; asm.layout.n_v]; slots];
        let v0_full = fem::interpolate_q2(&asm.grid, &problem.v0, 0.0);
        v[0] = asm.layout.restrict_velocity(&v0_full);
        BeState {
            v,
            zeta: vec![vec![0.0; asm.layout.n_v]; slots],
            p: vec![vec![0.0; asm.layout.n_p]; slots],
            mu: vec![vec![0.0; asm.layout.n_p]; slots],
            boundary,
        }
    }

    pub fn v_full(&self, asm: &Discretization, n: usize) -> Vec<f64> {
        asm.layout.pad_velocity(&self.v[n], &self.boundary[n])
    }

    pub fn zeta_full(&self, asm: &Discretization, n: usize) -> Vec<f64> {
        let zero = vec![0.0; self.boundary[n].len()];
        asm.layout.pad_velocity(&self.zeta[n], &zero)
    }

    pub fn apply_update(&mut self, delta: &[f64]) {
        let slots = self.v.len();
        let nv = self.v[0].len();
        let np = self.p[0].len();
        debug_assert_eq!(delta.len(), 2 * slots * (nv + np));
        let mut off = 0;
        for n in 0..slots {
            for (x, d) in self.v[n].iter_mut().zip(&delta[off..off + nv]) {
                *x += d;
            }
            off += nv;
        }
        for n in 0..slots {
            for (x, d) in self.zeta[n].iter_mut().zip(&delta[off..off + nv]) {
                *x += d;
            }
            off += nv;
        }
        for n in 0..slots {
            for (x, d) in self.mu[n].iter_mut().zip(&delta[off..off + np]) {
                *x += d;
            }
            off += np;
        }
        for n in 0..slots {
            for (x, d) in self.p[n].iter_mut().zip(&delta[off..off + np]) {
                *x += d;
            }
            off += np;
        }
    }
}

/// The all-at-once operator for one Oseen step.
pub struct BeKkt {
    pub nu: f64,
    pub beta: f64,
    pub tau: f64,
    pub n_t: usize,
    pub n2i: usize,
    pub n_p: usize,
    pub m_ii: SparseMatrix,
    /// Interior L_n = tau (nu K + N_n + W_n) + M per slot.
    pub l_n: Vec<Arc<SparseMatrix>>,
    /// Interior T_n = tau (nu K - N_n + W_n) + M per slot.
    pub t_n: Vec<Arc<SparseMatrix>>,
    pub b_i: SparseMatrix,
    pub mp: SparseMatrix,
    pub kp: SparseMatrix,
    /// Pressure-space chains L_{n,p}, T_{n,p} for the Schur approximation.
    pub lp_n: Vec<Arc<SparseMatrix>>,
    pub tp_n: Vec<Arc<SparseMatrix>>,
}

impl BeKkt {
    pub fn stokes(asm: &Discretization, beta: f64, tg: &TimeGridBE) -> BeKkt {
        let slots = tg.n_t + 1;
        let l = Arc::new(asm.k_ii.scaled(tg.tau).add_scaled(1.0, &asm.m_ii, 1.0));
        let lp = Arc::new(asm.kp.scaled(tg.tau).add_scaled(1.0, &asm.mp, 1.0));
        BeKkt {
            nu: 1.0,
            beta,
            tau: tg.tau,
            n_t: tg.n_t,
            n2i: asm.layout.n2i,
            n_p: asm.layout.n_p,
            m_ii: asm.m_ii.clone(),
            l_n: vec![l.clone(); slots],
            t_n: vec![l; slots],
            b_i: asm.b_i.clone(),
            mp: asm.mp.clone(),
            kp: asm.kp.clone(),
            lp_n: vec![lp.clone(); slots],
            tp_n: vec![lp; slots],
        }
    }

    /// Navier-Stokes blocks from per-slot winds (full space, padded with the
    /// time-dependent boundary data).
    pub fn with_winds(
        asm: &Discretization,
        nu: f64,
        beta: f64,
        tg: &TimeGridBE,
        winds: &[Vec<f64>],
        ops: &[WindOps],
        config: &SolverConfig,
    ) -> Result<BeKkt> {
        let slots = tg.n_t + 1;
        assert_eq!(winds.len(), slots);
        assert_eq!(ops.len(), slots);
        let tau = tg.tau;
        let mut l_n = Vec::with_capacity(slots);
        let mut t_n = Vec::with_capacity(slots);
        let mut lp_n = Vec::with_capacity(slots);
        let mut tp_n = Vec::with_capacity(slots);
        for n in 0..slots {
            let n_ii = asm.layout.interior_csr(&ops[n].nhat);
            let w_ii = asm.layout.interior_csr(&ops[n].what);
            let base = asm
                .k_ii
                .scaled(tau * nu)
                .add_scaled(1.0, &w_ii, tau)
                .add_scaled(1.0, &asm.m_ii, 1.0);
            l_n.push(Arc::new(base.add_scaled(1.0, &n_ii, tau)));
            t_n.push(Arc::new(base.add_scaled(1.0, &n_ii, -tau)));
            let pops = fem::assemble_pressure_ops(&asm.grid, &winds[n], config.lps, nu)?;
            let pbase = pops
                .stiffness
                .scaled(tau * nu)
                .add_scaled(1.0, &pops.stabilization, tau)
                .add_scaled(1.0, &asm.mp, 1.0);
            lp_n.push(Arc::new(pbase.add_scaled(1.0, &pops.convection, tau)));
            tp_n.push(Arc::new(pbase.add_scaled(1.0, &pops.convection, -tau)));
        }
        Ok(BeKkt {
            nu,
            beta,
            tau,
            n_t: tg.n_t,
            n2i: asm.layout.n2i,
            n_p: asm.layout.n_p,
            m_ii: asm.m_ii.clone(),
            l_n,
            t_n,
            b_i: asm.b_i.clone(),
            mp: asm.mp.clone(),
            kp: asm.kp.clone(),
            lp_n,
            tp_n,
        })
    }

    pub fn slots(&self) -> usize {
        self.n_t + 1
    }

    pub fn n_v(&self) -> usize {
        2 * self.n2i
    }

    fn vel_add(&self, mat: &SparseMatrix, x: &[f64], y: &mut [f64], alpha: f64) {
        for c in 0..2 {
            mat.matvec_add(
                alpha,
                &x[c * self.n2i..(c + 1) * self.n2i],
                &mut y[c * self.n2i..(c + 1) * self.n2i],
            );
        }
    }
}

impl LinOp for BeKkt {
    fn dim(&self) -> usize {
        2 * self.slots() * (self.n_v() + self.n_p)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.slots();
        let nv = self.n_v();
        let np = self.n_p;
        let (dv, rest) = x.split_at(s * nv);
        let (dz, rest) = rest.split_at(s * nv);
        let (dmu, dp) = rest.split_at(s * np);
        y.fill(0.0);
        let (y1, yrest) = y.split_at_mut(s * nv);
        let (y2, yrest) = yrest.split_at_mut(s * nv);
        let (y3, y4) = yrest.split_at_mut(s * np);
        
        for n in 0..s {
            // adjoint momentum rows
            let yr = &mut y1[n * nv..(n + 1) * nv];
            if n < self.n_t {
                self.vel_add(&self.m_ii, slot(dv, n, nv), yr, self.tau);
                self.vel_add(&self.m_ii, slot(dz, n + 1, nv), yr, -1.0);
            }
            self.vel_add(&self.t_n[n], slot(dz, n, nv), yr, 1.0);
            self.b_i.matvec_transpose_add(self.tau, slot(dmu, n, np), yr);
        }
        for n in 0..s {
            // state momentum rows; slot 0 is the solenoidal projection of dv_0
            let yr = &mut y2[n * nv..(n + 1) * nv];
            self.vel_add(&self.l_n[n], slot(dv, n, nv), yr, 1.0);
            if n >= 1 {
                self.vel_add(&self.m_ii, slot(dv, n - 1, nv), yr, -1.0);
                self.vel_add(&self.m_ii, slot(dz, n, nv), yr, -self.tau / self.beta);
            }
            self.b_i.matvec_transpose_add(self.tau, slot(dp, n, np), yr);
        }
        for n in 0..s {
            self.b_i
                .matvec_add(self.tau, slot(dv, n, nv), &mut y3[n * np..(n + 1) * np]);
            self.b_i
                .matvec_add(self.tau, slot(dz, n, nv), &mut y4[n * np..(n + 1) * np]);
        }
    }
}

/// The (1,1)-block of the all-at-once system.
pub struct PhiOpBE<'a>(pub &'a BeKkt);

impl LinOp for PhiOpBE<'_> {
    fn dim(&self) -> usize {
        2 * self.0.slots() * self.0.n_v()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.0;
        let s = k.slots();
        let nv = k.n_v();
        let (dv, dz) = x.split_at(s * nv);
        y.fill(0.0);
        let (y1, y2) = y.split_at_mut(s * nv);
        
        for n in 0..s {
            let yr = &mut y1[n * nv..(n + 1) * nv];
            if n < k.n_t {
                k.vel_add(&k.m_ii, slot(dv, n, nv), yr, k.tau);
                k.vel_add(&k.m_ii, slot(dz, n + 1, nv), yr, -1.0);
            }
            k.vel_add(&k.t_n[n], slot(dz, n, nv), yr, 1.0);
        }
        for n in 0..s {
            let yr = &mut y2[n * nv..(n + 1) * nv];
            k.vel_add(&k.l_n[n], slot(dv, n, nv), yr, 1.0);
            if n >= 1 {
                k.vel_add(&k.m_ii, slot(dv, n - 1, nv), yr, -1.0);
                k.vel_add(&k.m_ii, slot(dz, n, nv), yr, -k.tau / k.beta);
            }
        }
    }
}

/// Mass-block shift weights of the perturbed Schur factors: zero in the
/// first slot, one in the interior slots, sqrt(epsilon) in the last.
fn shift_weight(n: usize, n_t: usize, epsilon: f64) -> f64 {
    if n == 0 {
        0.0
    } else if n == n_t {
        epsilon.sqrt()
    } else {
        1.0
    }
}

/// Triangular approximation of the (1,1)-block with the epsilon-perturbed
/// mass surrogate.
pub struct PhiPrecBE {
    n2i: usize,
    n_t: usize,
    tau: f64,
    epsilon: f64,
    mass_inv: MassInverse,
    m_ii: SparseMatrix,
    l_n: Vec<Arc<SparseMatrix>>,
    d2_inv: Vec<Arc<BlockInverse>>,
    d1_inv: Vec<Arc<BlockInverse>>,
}

impl PhiPrecBE {
    pub fn new(
        asm: &Discretization,
        kkt: &BeKkt,
        winds: Option<&[Vec<f64>]>,
        config: &SolverConfig,
        mode: PrecMode,
    ) -> Result<PhiPrecBE> {
        let slots = kkt.slots();
        let shift = kkt.tau / kkt.beta.sqrt();
        let mass_inv = match mode {
            PrecMode::Approximate => MassInverse::Chebyshev(ChebyshevMass::new(
                kkt.m_ii.clone(),
                asm.cheb_m.with_steps(config.cheb_steps),
            )),
            PrecMode::Exact => MassInverse::Exact(DenseLu::factor_csr(&kkt.m_ii)?),
        };
        let mut d2_inv = Vec::with_capacity(slots);
        let mut d1_inv = Vec::with_capacity(slots);
        match mode {
            PrecMode::Approximate => {
                // identical blocks share one hierarchy pair
                let mut cache: HashMap<(u64, usize), (Arc<BlockInverse>, Arc<BlockInverse>)> =
                    HashMap::new();
                for n in 0..slots {
                    let mass_coef = 1.0 + shift_weight(n, kkt.n_t, config.epsilon) * shift;
                    let key = (mass_coef.to_bits(), if winds.is_some() { n } else { usize::MAX });
                    let entry = match cache.get(&key) {
                        Some(e) => e.clone(),
                        None => {
                            let spec = CdBlockSpec {
                                mass_coef,
                                cd_coef: kkt.tau,
                                nu: kkt.nu,
                                wind: winds.map(|w| w[n].as_slice()),
                                adjoint: false,
                                lps: config.lps,
                            };
                            let (fwd, adj) = asm
                                .cd_cache
                                .hierarchy_pair(&spec, config.mg_cycles_velocity)?;
                            let e = (
                                Arc::new(BlockInverse::Multigrid(fwd)),
                                Arc::new(BlockInverse::Multigrid(adj)),
                            );
                            cache.insert(key, e.clone());
                            e
                        }
                    };
                    d2_inv.push(entry.0);
                    d1_inv.push(entry.1);
                }
            }
            PrecMode::Exact => {
                for n in 0..slots {
                    let w = shift_weight(n, kkt.n_t, config.epsilon) * shift;
                    let d2 = kkt.l_n[n].add_scaled(1.0, &kkt.m_ii, w);
                    let d1 = kkt.t_n[n].add_scaled(1.0, &kkt.m_ii, w);
                    d2_inv.push(Arc::new(BlockInverse::Exact(DenseLu::factor_csr(&d2)?)));
                    d1_inv.push(Arc::new(BlockInverse::Exact(DenseLu::factor_csr(&d1)?)));
                }
            }
        }
        Ok(PhiPrecBE {
            n2i: kkt.n2i,
            n_t: kkt.n_t,
            tau: kkt.tau,
            epsilon: config.epsilon,
            mass_inv,
            m_ii: kkt.m_ii.clone(),
            l_n: kkt.l_n.clone(),
            d2_inv,
            d1_inv,
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

impl Prec for PhiPrecBE {
    fn dim(&self) -> usize {
        2 * (self.n_t + 1) * 2 * self.n2i
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let s = self.n_t + 1;
        let nv = 2 * self.n2i;
        let (r1, r2) = r.split_at(s * nv);
        // z1 = Mtilde^-1 r1 slot-wise (tau M, ..., tau M, eps tau M)
        let mut z1 = vec![0.0; s * nv];
        for n in 0..s {
            let scale = if n == self.n_t {
                1.0 / (self.epsilon * self.tau)
            } else {
                1.0 / self.tau
            };
            let zi = self.per_component(|x| self.mass_inv.apply(x), &r1[n * nv..(n + 1) * nv]);
            for (o, v) in z1[n * nv..(n + 1) * nv].iter_mut().zip(zi) {
                *o = scale * v;
            }
        }
        // t = L2 z1 - r2
        let mut t = vec![0.0; s * nv];
        for n in 0..s {
            let (head, tail) = t.split_at_mut(n * nv);
            let tn = &mut tail[..nv];
            let _ = head;
            for c in 0..2 {
                self.l_n[n].matvec_add(
                    1.0,
                    &z1[n * nv + c * self.n2i..n * nv + (c + 1) * self.n2i],
                    &mut tn[c * self.n2i..(c + 1) * self.n2i],
                );
                if n >= 1 {
                    self.m_ii.matvec_add(
                        -1.0,
                        &z1[(n - 1) * nv + c * self.n2i..(n - 1) * nv + (c + 1) * self.n2i],
                        &mut tn[c * self.n2i..(c + 1) * self.n2i],
                    );
                }
            }
            for (ti, ri) in tn.iter_mut().zip(&r2[n * nv..(n + 1) * nv]) {
                *ti -= ri;
            }
        }
        // forward substitution through L2 + M_sqrt(beta)
        let mut u = vec![0.0; s * nv];
        for n in 0..s {
            let mut rhs = t[n * nv..(n + 1) * nv].to_vec();
            if n >= 1 {
                let prev = u[(n - 1) * nv..n * nv].to_vec();
                for c in 0..2 {
                    self.m_ii.matvec_add(
                        1.0,
                        &prev[c * self.n2i..(c + 1) * self.n2i],
                        &mut rhs[c * self.n2i..(c + 1) * self.n2i],
                    );
                }
            }
            let un = self.per_component(|x| self.d2_inv[n].apply(x), &rhs);
            u[n * nv..(n + 1) * nv].copy_from_slice(&un);
        }
        // w = Mtilde u
        let mut w = vec![0.0; s * nv];
        for n in 0..s {
            let scale = if n == self.n_t {
                self.epsilon * self.tau
            } else {
                self.tau
            };
            for c in 0..2 {
                self.m_ii.matvec_add(
                    scale,
                    &u[n * nv + c * self.n2i..n * nv + (c + 1) * self.n2i],
                    &mut w[n * nv + c * self.n2i..n * nv + (c + 1) * self.n2i],
                );
            }
        }
        // backward substitution through L1 + M_sqrt(beta)
        let mut z2 = vec![0.0; s * nv];
        for n in (0..s).rev() {
            let mut rhs = w[n * nv..(n + 1) * nv].to_vec();
            if n + 1 < s {
                let next = z2[(n + 1) * nv..(n + 2) * nv].to_vec();
                for c in 0..2 {
                    self.m_ii.matvec_add(
                        1.0,
                        &next[c * self.n2i..(c + 1) * self.n2i],
                        &mut rhs[c * self.n2i..(c + 1) * self.n2i],
                    );
                }
            }
            let zn = self.per_component(|x| self.d1_inv[n].apply(x), &rhs);
            z2[n * nv..(n + 1) * nv].copy_from_slice(&zn);
        }
        let mut out = z1;
        out.extend(z2);
        out
    }
}

/// Commutator Schur approximation: S_hat^-1 = tau^-2 M_p-cheb . D_p . K_p-mg
/// with D_p the pressure-space mirror of the all-at-once (1,1)-block.
pub struct SchurPrecBE {
    n_p: usize,
    n_t: usize,
    tau: f64,
    beta: f64,
    mp: SparseMatrix,
    lp_n: Vec<Arc<SparseMatrix>>,
    tp_n: Vec<Arc<SparseMatrix>>,
    mass_inv: MassInverse,
    kp_solve: Arc<KpSolve>,
}

impl SchurPrecBE {
    pub fn new(
        asm: &Discretization,
        kkt: &BeKkt,
        kp_solve: Arc<KpSolve>,
        config: &SolverConfig,
        mode: PrecMode,
    ) -> Result<SchurPrecBE> {
        let mass_inv = match mode {
            PrecMode::Approximate => MassInverse::Chebyshev(ChebyshevMass::new(
                kkt.mp.clone(),
                asm.cheb_mp.with_steps(config.cheb_steps),
            )),
            PrecMode::Exact => MassInverse::Exact(DenseLu::factor_csr(&kkt.mp)?),
        };
        Ok(SchurPrecBE {
            n_p: kkt.n_p,
            n_t: kkt.n_t,
            tau: kkt.tau,
            beta: kkt.beta,
            mp: kkt.mp.clone(),
            lp_n: kkt.lp_n.clone(),
            tp_n: kkt.tp_n.clone(),
            mass_inv,
            kp_solve,
        })
    }

    pub fn apply_inv(&self, r: &[f64]) -> Vec<f64> {
        let s = self.n_t + 1;
        let np = self.n_p;
        let (r1, r2) = r.split_at(s * np);
        let t1: Vec<Vec<f64>> = (0..s)
            .map(|n| self.kp_solve.apply(&r1[n * np..(n + 1) * np]))
            .collect();
        let t2: Vec<Vec<f64>> = (0..s)
            .map(|n| self.kp_solve.apply(&r2[n * np..(n + 1) * np]))
            .collect();
        let inv_tau2 = 1.0 / (self.tau * self.tau);
        let mut out = Vec::with_capacity(2 * s * np);
        for n in 0..s {
            // y1_n = tau M_p t1_n [n<n_t] + T_{n,p} t2_n - M_p t2_{n+1} [n<n_t]
            let mut y = vec![0.0; np];
            if n < self.n_t {
                self.mp.matvec_add(self.tau, &t1[n], &mut y);
                self.mp.matvec_add(-1.0, &t2[n + 1], &mut y);
            }
            self.tp_n[n].matvec_add(1.0, &t2[n], &mut y);
            let z = self.mass_inv.apply(&y);
            out.extend(z.iter().map(|v| inv_tau2 * v));
        }
        for n in 0..s {
            // y2_n = L_{n,p} t1_n - M_p t1_{n-1} [n>=1] - (tau/beta) M_p t2_n [n>=1]
            let mut y = vec![0.0; np];
            self.lp_n[n].matvec_add(1.0, &t1[n], &mut y);
            if n >= 1 {
                self.mp.matvec_add(-1.0, &t1[n - 1], &mut y);
                self.mp.matvec_add(-self.tau / self.beta, &t2[n], &mut y);
            }
            let z = self.mass_inv.apply(&y);
            out.extend(z.iter().map(|v| inv_tau2 * v));
        }
        out
    }
}

/// The outer block-triangular preconditioner.
pub struct BePrec {
    kkt: Arc<BeKkt>,
    phi_prec: PhiPrecBE,
    schur: SchurPrecBE,
    inner_steps: usize,
}

impl BePrec {
    pub fn new(
        asm: &Discretization,
        kkt: Arc<BeKkt>,
        winds: Option<&[Vec<f64>]>,
        kp_solve: Arc<KpSolve>,
        config: &SolverConfig,
        mode: PrecMode,
    ) -> Result<BePrec> {
        let phi_prec = PhiPrecBE::new(asm, &kkt, winds, config, mode)?;
        let schur = SchurPrecBE::new(asm, &kkt, kp_solve, config, mode)?;
        Ok(BePrec {
            kkt,
            phi_prec,
            schur,
            inner_steps: config.inner_gmres_steps,
        })
    }
}

impl Prec for BePrec {
    fn dim(&self) -> usize {
        self.kkt.dim()
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let k = &self.kkt;
        let s = k.slots();
        let nv = k.n_v();
        let np = k.n_p;
        let (r_phi, r_psi) = r.split_at(2 * s * nv);
        let z_phi = gmres_fixed(&PhiOpBE(k), &self.phi_prec, r_phi, self.inner_steps);
        let mut w = vec![0.0; 2 * s * np];
        for n in 0..s {
            k.b_i
                .matvec_add(k.tau, &z_phi[n * nv..(n + 1) * nv], &mut w[n * np..(n + 1) * np]);
            k.b_i.matvec_add(
                k.tau,
                &z_phi[(s + n) * nv..(s + n + 1) * nv],
                &mut w[(s + n) * np..(s + n + 1) * np],
            );
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

/// Stacked nonlinear residual of the current trajectory; `ops` holds the
/// per-slot wind matrices (None for the Stokes system).
pub fn be_residual(
    asm: &Discretization,
    problem: &ProblemSpec,
    tg: &TimeGridBE,
    state: &BeState,
    ops: Option<&[WindOps]>,
) -> Vec<f64> {
    let s = tg.n_t + 1;
    let tau = tg.tau;
    let beta = problem.beta;
    let nu = if ops.is_some() { problem.nu } else { 1.0 };
    let n = asm.grid.n_q2();
    let nv = asm.layout.n_v;
    let np = asm.layout.n_p;

    let v_full: Vec<Vec<f64>> = (0..s).map(|k| state.v_full(asm, k)).collect();
    let z_full: Vec<Vec<f64>> = (0..s).map(|k| state.zeta_full(asm, k)).collect();

    // T_n x and L_n x on the full space
    let apply_tl = |slot: usize, x: &[f64], adjoint: bool| -> Vec<f64> {
        let mut y = Discretization::apply_vec(&asm.khat, x);
        for v in &mut y {
            *v *= tau * nu;
        }
        if let Some(all) = ops {
            let sgn = if adjoint { -1.0 } else { 1.0 };
            let o = &all[slot];
            for c in 0..2 {
                o.nhat
                    .matvec_add(sgn * tau, &x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
                o.what
                    .matvec_add(tau, &x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
            }
        }
        let mx = Discretization::apply_vec(&asm.mhat, x);
        for (yi, mi) in y.iter_mut().zip(&mx) {
            *yi += mi;
        }
        y
    };

    let mut rhs = vec![0.0; 2 * s * (nv + np)];
    // adjoint-momentum residuals R2_n, slots 0..n_t-1 (slot n_t stays zero)
    for k in 0..tg.n_t {
        let vd = fem::interpolate_q2(&asm.grid, &problem.v_d, tg.time(k));
        let m_vd = Discretization::apply_vec(&asm.mhat, &vd);
        let m_v = Discretization::apply_vec(&asm.mhat, &v_full[k]);
        let t_z = apply_tl(k, &z_full[k], true);
        let m_znext = Discretization::apply_vec(&asm.mhat, &z_full[k + 1]);
        let mut bt_mu = vec![0.0; 2 * n];
        asm.b.matvec_transpose_add(tau, &state.mu[k], &mut bt_mu);
        let mut r2 = vec![0.0; 2 * n];
        for i in 0..2 * n {
            r2[i] = tau * m_vd[i] - tau * m_v[i] - t_z[i] + m_znext[i] - bt_mu[i];
        }
        if ops.is_some() {
            let omega = fem::assemble_gradwind_term(&asm.grid, &v_full[k], &z_full[k]);
            for i in 0..2 * n {
                r2[i] -= tau * omega[i];
            }
        }
        let r2i = asm.layout.restrict_velocity(&r2);
        rhs[k * nv..(k + 1) * nv].copy_from_slice(&r2i);
    }
    // state-momentum residuals R1_{n-1} in slots 1..=n_t (slot 0 stays zero)
    for k in 1..=tg.n_t {
        let f = fem::assemble_load_q2(&asm.grid, &problem.f, tg.time(k));
        let m_vprev = Discretization::apply_vec(&asm.mhat, &v_full[k - 1]);
        let l_v = apply_tl(k, &v_full[k], false);
        let m_z = Discretization::apply_vec(&asm.mhat, &z_full[k]);
        let mut bt_p = vec![0.0; 2 * n];
        asm.b.matvec_transpose_add(tau, &state.p[k], &mut bt_p);
        let mut r1 = vec![0.0; 2 * n];
        for i in 0..2 * n {
            r1[i] = tau * f[i] + m_vprev[i] - l_v[i] - bt_p[i] + tau / beta * m_z[i];
        }
        let r1i = asm.layout.restrict_velocity(&r1);
        rhs[(s + k) * nv..(s + k + 1) * nv].copy_from_slice(&r1i);
    }
    // divergence residuals
    let off3 = 2 * s * nv;
    for k in 1..=tg.n_t {
        let d = asm.b.apply(&v_full[k]);
        for (o, di) in rhs[off3 + k * np..off3 + (k + 1) * np].iter_mut().zip(&d) {
            *o = -tau * di;
        }
    }
    let off4 = off3 + s * np;
    for k in 0..tg.n_t {
        let d = asm.b.apply(&z_full[k]);
        for (o, di) in rhs[off4 + k * np..off4 + (k + 1) * np].iter_mut().zip(&d) {
            *o = -tau * di;
        }
    }
    rhs
}

/// Per-slot winds (padded full-space velocities) of the current iterate.
fn state_winds(asm: &Discretization, state: &BeState) -> Vec<Vec<f64>> {
    (0..state.v.len()).map(|n| state.v_full(asm, n)).collect()
}

/// max_n |B v_n| / |v_n| over the trajectory; slots whose velocity vanishes
/// relative to the trajectory (fixed zero initial data resolved only to
/// solver tolerance) are excluded from the ratio.
pub fn divergence_residual_be(asm: &Discretization, state: &BeState) -> f64 {
    let vmax = state.v.iter().map(|v| norm2(v)).fold(0.0f64, f64::max);
    let mut worst: f64 = 0.0;
    for n in 0..state.v.len() {
        let vn = norm2(&state.v[n]);
        if vn <= 1e-6 * vmax {
            continue;
        }
        let d = asm.b.apply(&state.v_full(asm, n));
        worst = worst.max(norm2(&d) / vn);
    }
    worst
}

/// Full nonlinear solve of the backward Euler all-at-once control problem.
pub fn solve_be(
    problem: &ProblemSpec,
    level: u32,
    config: &SolverConfig,
) -> Result<(BeState, RunReport)> {
    problem.validate()?;
    config.validate()?;
    if problem.scheme != Scheme::BackwardEuler {
        return Err(FlowError::Config("solve_be needs scheme=be".into()));
    }
    let t0 = Instant::now();
    let tg = TimeGridBE::new(problem.t_f, problem.n_t.unwrap_or(40))?;
    let asm = Discretization::new(level, config.cheb_steps)?;
    let mut state = BeState::init(&asm, problem, &tg);
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

    let rhs0 = be_residual(&asm, problem, &tg, &state, None);
    let ref_norm = norm2(&rhs0).max(1e-300);
    {
        let kkt = Arc::new(BeKkt::stokes(&asm, problem.beta, &tg));
        let prec = BePrec::new(
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
    if !problem.is_stokes() {
        converged = false;
        loop {
            let winds = state_winds(&asm, &state);
            let ops: Vec<WindOps> = winds
                .iter()
                .map(|w| crate::space::wind_ops(&asm, w, config.lps, problem.nu))
                .collect::<Result<_>>()?;
            let rhs = be_residual(&asm, problem, &tg, &state, Some(&ops));
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
            let kkt = Arc::new(BeKkt::with_winds(
                &asm,
                problem.nu,
                problem.beta,
                &tg,
                &winds,
                &ops,
                config,
            )?);
            let prec = BePrec::new(
                &asm,
                kkt.clone(),
                Some(&winds),
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
        problem: "cavity-instationary".into(),
        scheme: Scheme::BackwardEuler,
        level,
        nu: problem.nu,
        beta: problem.beta,
        dof: 2 * (tg.n_t + 1) * (asm.layout.n_v + asm.layout.n_p),
        fgmres_per_step: fg_counts,
        nonlinear_residuals: res_hist,
        wall_seconds: t0.elapsed().as_secs_f64(),
        v_err: None,
        zeta_err: None,
        converged,
        max_div_residual: divergence_residual_be(&asm, &state),
    };
    Ok((state, report))
}

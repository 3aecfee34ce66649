//! Q2-Q1 finite element assembly on the uniform grid.
//!
//! All bilinear forms use a 4x4 tensor Gauss-Legendre rule per element.
//! Velocity-space operators are assembled as scalar Q2 blocks; the vector
//! operator is the same block repeated per component (see [`kron2`]).
//! Stabilization is local projection: fluctuation kappa = Id - pi of the
//! streamline derivative, with pi the patchwise L2 projection onto
//! constants over 2x2-element patches.

use std::sync::Arc;

use crate::error::{FlowError, Result};
use crate::grid::{DofLayout, Grid};
use crate::sparse::SparseMatrix;

pub use crate::sparse::kron2 as vector_block;

/// Time-dependent 2-component field on the closed domain.
#[derive(Clone)]
pub struct VectorField(Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>);

impl VectorField {
    pub fn new(f: impl Fn(f64, f64, f64) -> [f64; 2] + Send + Sync + 'static) -> Self {
        VectorField(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::new(|_, _, _| [0.0, 0.0])
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        (self.0)(x, y, t)
    }
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("VectorField(..)")
    }
}

/// Time-dependent scalar field (pressure-space data).
#[derive(Clone)]
pub struct ScalarField(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>);

impl ScalarField {
    pub fn new(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField(Arc::new(f))
    }

    pub fn zero() -> Self {
        Self::new(|_, _, _| 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.0)(x, y, t)
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

/// Local projection stabilization knobs.
#[derive(Debug, Clone, Copy)]
pub struct LpsConfig {
    pub enabled: bool,
    /// Dimensionless scaling of the per-patch stabilization parameter.
    pub delta0: f64,
}

impl Default for LpsConfig {
    fn default() -> Self {
        LpsConfig {
            enabled: true,
            delta0: 1.0,
        }
    }
}

const NQ: usize = 4;

/// 4-point Gauss-Legendre nodes/weights on [-1,1].
pub fn gauss4() -> ([f64; 4], [f64; 4]) {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
    let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
    ([-b, -a, a, b], [wb, wa, wa, wb])
}

fn q2_shape_1d(x: f64) -> [f64; 3] {
    [0.5 * x * (x - 1.0), 1.0 - x * x, 0.5 * x * (x + 1.0)]
}

fn q2_dshape_1d(x: f64) -> [f64; 3] {
    [x - 0.5, -2.0 * x, x + 0.5]
}

fn q1_shape_1d(x: f64) -> [f64; 2] {
    [0.5 * (1.0 - x), 0.5 * (1.0 + x)]
}

fn q1_dshape_1d(_x: f64) -> [f64; 2] {
    [-0.5, 0.5]
}

/// Reference-element data at the 16 tensor quadrature points.
struct RefData {
    /// combined 2d weights
    w: [f64; NQ * NQ],
    /// local coordinates of quadrature points
    xi: [[f64; 2]; NQ * NQ],
    q2: [[f64; 9]; NQ * NQ],
    q2_dx: [[f64; 9]; NQ * NQ],
    q2_dy: [[f64; 9]; NQ * NQ],
    q1: [[f64; 4]; NQ * NQ],
    q1_dx: [[f64; 4]; NQ * NQ],
    q1_dy: [[f64; 4]; NQ * NQ],
}

fn ref_data() -> RefData {
    let (x, w1) = gauss4();
    let mut rd = RefData {
        w: [0.0; 16],
        xi: [[0.0; 2]; 16],
        q2: [[0.0; 9]; 16],
        q2_dx: [[0.0; 9]; 16],
        q2_dy: [[0.0; 9]; 16],
        q1: [[0.0; 4]; 16],
        q1_dx: [[0.0; 4]; 16],
        q1_dy: [[0.0; 4]; 16],
    };
    for qy in 0..NQ {
        for qx in 0..NQ {
            let q = qy * NQ + qx;
            rd.w[q] = w1[qx] * w1[qy];
            rd.xi[q] = [x[qx], x[qy]];
            let (sx, dsx) = (q2_shape_1d(x[qx]), q2_dshape_1d(x[qx]));
            let (sy, dsy) = (q2_shape_1d(x[qy]), q2_dshape_1d(x[qy]));
            for j in 0..3 {
                for i in 0..3 {
                    rd.q2[q][3 * j + i] = sx[i] * sy[j];
                    rd.q2_dx[q][3 * j + i] = dsx[i] * sy[j];
                    rd.q2_dy[q][3 * j + i] = sx[i] * dsy[j];
                }
            }
            let (px, dpx) = (q1_shape_1d(x[qx]), q1_dshape_1d(x[qx]));
            let (py, dpy) = (q1_shape_1d(x[qy]), q1_dshape_1d(x[qy]));
            for j in 0..2 {
                for i in 0..2 {
                    rd.q1[q][2 * j + i] = px[i] * py[j];
                    rd.q1_dx[q][2 * j + i] = dpx[i] * py[j];
                    rd.q1_dy[q][2 * j + i] = px[i] * dpy[j];
                }
            }
        }
    }
    rd
}

fn elem_origin(grid: &Grid, e: usize) -> [f64; 2] {
    let m = grid.elements_per_side;
    let h = grid.element_size;
    [-1.0 + (e % m) as f64 * h, -1.0 + (e / m) as f64 * h]
}

/// Scalar Q2 mass matrix on the full node set.
pub fn assemble_mass_q2(grid: &Grid) -> SparseMatrix {
    let rd = ref_data();
    let n = grid.n_q2();
    let jac = grid.element_size * grid.element_size / 4.0;
    let mut trips = Vec::with_capacity(grid.n_elements() * 81);
    for conn in &grid.elem_q2 {
        let mut local = [[0.0; 9]; 9];
        for q in 0..16 {
            let wj = rd.w[q] * jac;
            for a in 0..9 {
                for b in 0..9 {
                    local[a][b] += wj * rd.q2[q][a] * rd.q2[q][b];
                }
            }
        }
        for a in 0..9 {
            for b in 0..9 {
                trips.push((conn[a], conn[b], local[a][b]));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, trips)
}

/// Scalar Q2 stiffness matrix on the full node set.
pub fn assemble_stiffness_q2(grid: &Grid) -> SparseMatrix {
    let rd = ref_data();
    let n = grid.n_q2();
    // (h^2/4) * (2/h)^2 = 1: gradients in 2d are scale free
    let mut trips = Vec::with_capacity(grid.n_elements() * 81);
    for conn in &grid.elem_q2 {
        let mut local = [[0.0; 9]; 9];
        for q in 0..16 {
            for a in 0..9 {
                for b in 0..9 {
                    local[a][b] += rd.w[q]
                        * (rd.q2_dx[q][a] * rd.q2_dx[q][b] + rd.q2_dy[q][a] * rd.q2_dy[q][b]);
                }
            }
        }
        for a in 0..9 {
            for b in 0..9 {
                trips.push((conn[a], conn[b], local[a][b]));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, trips)
}

fn check_wind(grid: &Grid, wind: &[f64]) -> Result<()> {
    if wind.len() != 2 * grid.n_q2() {
        return Err(FlowError::Dim(format!(
            "wind vector has length {}, expected {}",
            wind.len(),
            2 * grid.n_q2()
        )));
    }
    Ok(())
}

/// Scalar Q2 convection matrix N(w), entries int (w . grad phi_j) phi_i.
/// The wind is a full-space 2-component Q2 coefficient vector.
pub fn assemble_convection_q2(grid: &Grid, wind: &[f64]) -> Result<SparseMatrix> {
    check_wind(grid, wind)?;
    let rd = ref_data();
    let n = grid.n_q2();
    let half_h = grid.element_size / 2.0;
    let mut trips = Vec::with_capacity(grid.n_elements() * 81);
    for conn in &grid.elem_q2 {
        let mut local = [[0.0; 9]; 9];
        for q in 0..16 {
            let mut w = [0.0f64; 2];
            for (a, &ga) in conn.iter().enumerate() {
                w[0] += wind[ga as usize] * rd.q2[q][a];
                w[1] += wind[n + ga as usize] * rd.q2[q][a];
            }
            // (h^2/4) * (2/h) = h/2
            let wq = rd.w[q] * half_h;
            for b in 0..9 {
                let conv = w[0] * rd.q2_dx[q][b] + w[1] * rd.q2_dy[q][b];
                for a in 0..9 {
                    local[a][b] += wq * conv * rd.q2[q][a];
                }
            }
        }
        for a in 0..9 {
            for b in 0..9 {
                trips.push((conn[a], conn[b], local[a][b]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, n, trips))
}

/// Per-patch stabilization parameter
/// delta0 * h / (2 |w|_inf,patch) * (1 - 1/Pe) on patches whose Peclet
/// number Pe = |w|_inf,patch * h / (2 nu) exceeds one, else zero. The
/// (1 - 1/Pe) factor makes delta continuous in the wind; a hard on/off
/// switch at Pe = 1 sends the Picard iteration into a limit cycle whenever
/// a patch sits near the threshold.
fn patch_deltas(grid: &Grid, wind: &[f64], lps: LpsConfig, nu: f64) -> Vec<f64> {
    let rd = ref_data();
    let n = grid.n_q2();
    let h = grid.element_size;
    let mut deltas = Vec::with_capacity(grid.patches.len());
    for patch in &grid.patches {
        let mut wmax: f64 = 0.0;
        for &e in patch {
            let conn = &grid.elem_q2[e as usize];
            for q in 0..16 {
                let mut w = [0.0f64; 2];
                for (a, &ga) in conn.iter().enumerate() {
                    w[0] += wind[ga as usize] * rd.q2[q][a];
                    w[1] += wind[n + ga as usize] * rd.q2[q][a];
                }
                wmax = wmax.max((w[0] * w[0] + w[1] * w[1]).sqrt());
            }
        }
        let peclet = wmax * h / (2.0 * nu);
        if peclet > 1.0 {
            let ramp = (peclet - 1.0).min(1.0);
            deltas.push(lps.delta0 * h / (2.0 * wmax) * ramp);
        } else {
            deltas.push(0.0);
        }
    }
    deltas
}

/// Shared LPS patch assembly over either space.
///
/// `nodes_of(e)` returns the element's node ids, `grad(e, q, a)` the physical
/// streamline-independent gradient components of local basis a at point q.
fn assemble_lps_generic(
    grid: &Grid,
    wind: &[f64],
    lps: LpsConfig,
    nu: f64,
    n_nodes: usize,
    per_elem: usize,
    nodes_of: impl Fn(usize) -> Vec<u32>,
    grad: impl Fn(usize, usize, usize) -> [f64; 2],
) -> Result<SparseMatrix> {
    check_wind(grid, wind)?;
    if !lps.enabled {
        return Ok(SparseMatrix::zeros(n_nodes, n_nodes));
    }
    let rd = ref_data();
    let n = grid.n_q2();
    let jac = grid.element_size * grid.element_size / 4.0;
    let patch_area = 4.0 * grid.element_size * grid.element_size;
    let deltas = patch_deltas(grid, wind, lps, nu);
    let mut trips = Vec::new();
    for (p, patch) in grid.patches.iter().enumerate() {
        let delta = deltas[p];
        if delta == 0.0 {
            continue;
        }
        // collect distinct nodes of the patch
        let mut pnodes: Vec<u32> = Vec::with_capacity(4 * per_elem);
        for &e in patch {
            pnodes.extend(nodes_of(e as usize));
        }
        pnodes.sort_unstable();
        pnodes.dedup();
        let local_of = |g: u32| pnodes.binary_search(&g).unwrap();
        let np = pnodes.len();
        let mut a_mat = vec![0.0; np * np];
        let mut s_vec = vec![0.0; np];
        for &e in patch {
            let conn = nodes_of(e as usize);
            let q2conn = &grid.elem_q2[e as usize];
            for q in 0..16 {
                let mut w = [0.0f64; 2];
                for (a, &ga) in q2conn.iter().enumerate() {
                    w[0] += wind[ga as usize] * rd.q2[q][a];
                    w[1] += wind[n + ga as usize] * rd.q2[q][a];
                }
                let wq = rd.w[q] * jac;
                let mut g = vec![0.0; conn.len()];
                for (a, gv) in g.iter_mut().enumerate() {
                    let d = grad(e as usize, q, a);
                    *gv = w[0] * d[0] + w[1] * d[1];
                }
                for (a, &ga) in conn.iter().enumerate() {
                    let la = local_of(ga);
                    s_vec[la] += wq * g[a];
                    for (b, &gb) in conn.iter().enumerate() {
                        a_mat[la * np + local_of(gb)] += wq * g[a] * g[b];
                    }
                }
            }
        }
        for a in 0..np {
            for b in 0..np {
                let v = delta * (a_mat[a * np + b] - s_vec[a] * s_vec[b] / patch_area);
                if v != 0.0 {
                    trips.push((pnodes[a], pnodes[b], v));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n_nodes, n_nodes, trips))
}

/// Scalar Q2 LPS stabilization matrix W(w).
pub fn assemble_lps_q2(
    grid: &Grid,
    wind: &[f64],
    lps: LpsConfig,
    nu: f64,
) -> Result<SparseMatrix> {
    let rd = ref_data();
    let scale = 2.0 / grid.element_size;
    let q2_dx: Vec<[f64; 9]> = rd.q2_dx.to_vec();
    let q2_dy: Vec<[f64; 9]> = rd.q2_dy.to_vec();
    let elem_q2 = grid.elem_q2.clone();
    assemble_lps_generic(
        grid,
        wind,
        lps,
        nu,
        grid.n_q2(),
        9,
        move |e| elem_q2[e].to_vec(),
        move |_, q, a| [scale * q2_dx[q][a], scale * q2_dy[q][a]],
    )
}

/// Q1 LPS stabilization matrix W_p(w) with the same delta and projection.
pub fn assemble_lps_q1(
    grid: &Grid,
    wind: &[f64],
    lps: LpsConfig,
    nu: f64,
) -> Result<SparseMatrix> {
    let rd = ref_data();
    let scale = 2.0 / grid.element_size;
    let q1_dx: Vec<[f64; 4]> = rd.q1_dx.to_vec();
    let q1_dy: Vec<[f64; 4]> = rd.q1_dy.to_vec();
    let elem_q1 = grid.elem_q1.clone();
    assemble_lps_generic(
        grid,
        wind,
        lps,
        nu,
        grid.n_q1(),
        4,
        move |e| elem_q1[e].to_vec(),
        move |_, q, a| [scale * q1_dx[q][a], scale * q1_dy[q][a]],
    )
}

/// Negative divergence matrix B, size n_q1 x 2*n_q2, entries
/// -int psi_i (del . phi_j) with velocity components blocked [x; y].
pub fn assemble_divergence(grid: &Grid) -> SparseMatrix {
    let rd = ref_data();
    let n = grid.n_q2();
    let np = grid.n_q1();
    let half_h = grid.element_size / 2.0;
    let mut trips = Vec::with_capacity(grid.n_elements() * 72);
    for (e, conn) in grid.elem_q2.iter().enumerate() {
        let pconn = &grid.elem_q1[e];
        let mut lx = [[0.0; 9]; 4];
        let mut ly = [[0.0; 9]; 4];
        for q in 0..16 {
            let wq = rd.w[q] * half_h;
            for (i, _) in pconn.iter().enumerate() {
                for b in 0..9 {
                    lx[i][b] -= wq * rd.q1[q][i] * rd.q2_dx[q][b];
                    ly[i][b] -= wq * rd.q1[q][i] * rd.q2_dy[q][b];
                }
            }
        }
        for (i, &gp) in pconn.iter().enumerate() {
            for (b, &gb) in conn.iter().enumerate() {
                trips.push((gp, gb, lx[i][b]));
                trips.push((gp, gb + n as u32, ly[i][b]));
            }
        }
    }
    SparseMatrix::from_triplets(np, 2 * n, trips)
}

/// Q1 mass matrix.
pub fn assemble_mass_q1(grid: &Grid) -> SparseMatrix {
    let rd = ref_data();
    let np = grid.n_q1();
    let jac = grid.element_size * grid.element_size / 4.0;
    let mut trips = Vec::with_capacity(grid.n_elements() * 16);
    for pconn in &grid.elem_q1 {
        for q in 0..16 {
            let wj = rd.w[q] * jac;
            for a in 0..4 {
                for b in 0..4 {
                    trips.push((pconn[a], pconn[b], wj * rd.q1[q][a] * rd.q1[q][b]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(np, np, trips)
}

/// Q1 stiffness matrix (singular: constants are in the kernel).
pub fn assemble_stiffness_q1(grid: &Grid) -> SparseMatrix {
    let rd = ref_data();
    let np = grid.n_q1();
    let mut trips = Vec::with_capacity(grid.n_elements() * 16);
    for pconn in &grid.elem_q1 {
        for q in 0..16 {
            for a in 0..4 {
                for b in 0..4 {
                    trips.push((
                        pconn[a],
                        pconn[b],
                        rd.w[q] * (rd.q1_dx[q][a] * rd.q1_dx[q][b] + rd.q1_dy[q][a] * rd.q1_dy[q][b]),
                    ));
                }
            }
        }
    }
    SparseMatrix::from_triplets(np, np, trips)
}

/// Q1 convection matrix with a Q2 wind.
pub fn assemble_convection_q1(grid: &Grid, wind: &[f64]) -> Result<SparseMatrix> {
    check_wind(grid, wind)?;
    let rd = ref_data();
    let n = grid.n_q2();
    let np = grid.n_q1();
    let half_h = grid.element_size / 2.0;
    let mut trips = Vec::with_capacity(grid.n_elements() * 16);
    for (e, pconn) in grid.elem_q1.iter().enumerate() {
        let conn = &grid.elem_q2[e];
        for q in 0..16 {
            let mut w = [0.0f64; 2];
            for (a, &ga) in conn.iter().enumerate() {
                w[0] += wind[ga as usize] * rd.q2[q][a];
                w[1] += wind[n + ga as usize] * rd.q2[q][a];
            }
            let wq = rd.w[q] * half_h;
            for b in 0..4 {
                let conv = w[0] * rd.q1_dx[q][b] + w[1] * rd.q1_dy[q][b];
                for a in 0..4 {
                    trips.push((pconn[a], pconn[b], wq * conv * rd.q1[q][a]));
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(np, np, trips))
}

/// All four pressure-space operators for a given wind.
pub struct PressureOps {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub convection: SparseMatrix,
    pub stabilization: SparseMatrix,
}

pub fn assemble_pressure_ops(
    grid: &Grid,
    wind: &[f64],
    lps: LpsConfig,
    nu: f64,
) -> Result<PressureOps> {
    Ok(PressureOps {
        mass: assemble_mass_q1(grid),
        stiffness: assemble_stiffness_q1(grid),
        convection: assemble_convection_q1(grid, wind)?,
        stabilization: assemble_lps_q1(grid, wind, lps, nu)?,
    })
}

/// Load vector f_i = int f . phi_i over both components (length 2*n_q2).
pub fn assemble_load_q2(grid: &Grid, field: &VectorField, t: f64) -> Vec<f64> {
    let rd = ref_data();
    let n = grid.n_q2();
    let h = grid.element_size;
    let jac = h * h / 4.0;
    let mut out = vec![0.0; 2 * n];
    for (e, conn) in grid.elem_q2.iter().enumerate() {
        let o = elem_origin(grid, e);
        for q in 0..16 {
            let x = o[0] + (rd.xi[q][0] + 1.0) * h / 2.0;
            let y = o[1] + (rd.xi[q][1] + 1.0) * h / 2.0;
            let f = field.eval(x, y, t);
            let wq = rd.w[q] * jac;
            for (a, &ga) in conn.iter().enumerate() {
                out[ga as usize] += wq * f[0] * rd.q2[q][a];
                out[n + ga as usize] += wq * f[1] * rd.q2[q][a];
            }
        }
    }
    out
}

/// Newton-like residual term: entries int ((grad v)^T z) . phi_i, with v and
/// z full-space Q2 coefficient vectors.
pub fn assemble_gradwind_term(grid: &Grid, v: &[f64], z: &[f64]) -> Vec<f64> {
    let rd = ref_data();
    let n = grid.n_q2();
    let h = grid.element_size;
    let jac = h * h / 4.0;
    let scale = 2.0 / h;
    let mut out = vec![0.0; 2 * n];
    for conn in &grid.elem_q2 {
        for q in 0..16 {
            // grad v (2x2) and z (2) at the quadrature point
            let mut gv = [[0.0f64; 2]; 2];
            let mut zq = [0.0f64; 2];
            for (a, &ga) in conn.iter().enumerate() {
                let (dx, dy) = (scale * rd.q2_dx[q][a], scale * rd.q2_dy[q][a]);
                for c in 0..2 {
                    let vc = v[c * n + ga as usize];
                    gv[c][0] += vc * dx;
                    gv[c][1] += vc * dy;
                    zq[c] += z[c * n + ga as usize] * rd.q2[q][a];
                }
            }
            // ((grad v)^T z)_c = sum_m z_m dv_m/dx_c
            let val = [
                zq[0] * gv[0][0] + zq[1] * gv[1][0],
                zq[0] * gv[0][1] + zq[1] * gv[1][1],
            ];
            let wq = rd.w[q] * jac;
            for (a, &ga) in conn.iter().enumerate() {
                out[ga as usize] += wq * val[0] * rd.q2[q][a];
                out[n + ga as usize] += wq * val[1] * rd.q2[q][a];
            }
        }
    }
    out
}

/// Nodal interpolation of a vector field onto the Q2 velocity space.
pub fn interpolate_q2(grid: &Grid, field: &VectorField, t: f64) -> Vec<f64> {
    let n = grid.n_q2();
    let mut out = vec![0.0; 2 * n];
    for (i, c) in grid.q2_nodes.iter().enumerate() {
        let v = field.eval(c[0], c[1], t);
        out[i] = v[0];
        out[n + i] = v[1];
    }
    out
}

/// Nodal interpolation onto the Q1 pressure space.
pub fn interpolate_q1(grid: &Grid, field: &ScalarField, t: f64) -> Vec<f64> {
    grid.q1_nodes
        .iter()
        .map(|c| field.eval(c[0], c[1], t))
        .collect()
}

/// Full-space vector with the boundary data interpolated at boundary Q2
/// nodes and zeros at interior nodes; used to pad eliminated velocities.
pub fn boundary_values(grid: &Grid, layout: &DofLayout, g: &VectorField, t: f64) -> Vec<f64> {
    let n = grid.n_q2();
    let mut out = vec![0.0; 2 * n];
    for (i, c) in grid.q2_nodes.iter().enumerate() {
        if layout.boundary_mask[i] {
            let v = g.eval(c[0], c[1], t);
            out[i] = v[0];
            out[n + i] = v[1];
        }
    }
    out
}

/// Dirichlet elimination of a scalar Q2 operator: interior block plus the
/// right-hand-side contribution -A_IB g_B for the given boundary values.
pub fn apply_dirichlet_lifting(
    a: &SparseMatrix,
    layout: &DofLayout,
    boundary_full: &[f64],
) -> (SparseMatrix, Vec<f64>) {
    let a_ii = layout.interior_csr(a);
    let full = a.apply(boundary_full);
    let mut lift = layout.restrict_scalar(&full);
    for v in &mut lift {
        *v = -*v;
    }
    (a_ii, lift)
}

/// Element-wise certified bounds for the spectrum of diag(M)^-1 M of a mass
/// matrix assembled on this grid, optionally after Dirichlet elimination.
pub fn mass_element_bounds(grid: &Grid, layout: Option<&DofLayout>, q1_space: bool) -> (f64, f64) {
    use crate::dense::{symmetric_eigenvalues, DenseMatrix};
    let rd = ref_data();
    let jac = grid.element_size * grid.element_size / 4.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let nloc = if q1_space { 4 } else { 9 };
    for (e, _) in grid.elem_q2.iter().enumerate() {
        let conn: Vec<u32> = if q1_space {
            grid.elem_q1[e].to_vec()
        } else {
            grid.elem_q2[e].to_vec()
        };
        let keep: Vec<usize> = (0..nloc)
            .filter(|&a| match layout {
                Some(l) if !q1_space => !l.boundary_mask[conn[a] as usize],
                _ => true,
            })
            .collect();
        if keep.is_empty() {
            continue;
        }
        let mut me = DenseMatrix::zeros(keep.len(), keep.len());
        for q in 0..16 {
            let wj = rd.w[q] * jac;
            for (ia, &a) in keep.iter().enumerate() {
                for (ib, &b) in keep.iter().enumerate() {
                    let (sa, sb) = if q1_space {
                        (rd.q1[q][a], rd.q1[q][b])
                    } else {
                        (rd.q2[q][a], rd.q2[q][b])
                    };
                    let v = me.get(ia, ib) + wj * sa * sb;
                    me.set(ia, ib, v);
                }
            }
        }
        // symmetric diagonal scaling
        let d: Vec<f64> = (0..keep.len()).map(|i| me.get(i, i).sqrt()).collect();
        let mut s = DenseMatrix::zeros(keep.len(), keep.len());
        for i in 0..keep.len() {
            for j in 0..keep.len() {
                s.set(i, j, me.get(i, j) / (d[i] * d[j]));
            }
        }
        let ev = symmetric_eigenvalues(&s);
        lo = lo.min(ev[0]);
        hi = hi.max(*ev.last().unwrap());
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn mass_partition_of_unity() {
        let g = Grid::build(2).unwrap();
        let m = assemble_mass_q2(&g);
        // 1^T M 1 per scalar component = domain area 4; both components -> 8
        let y = m.apply(&ones(g.n_q2()));
        let total: f64 = y.iter().sum();
        assert!((2.0 * total - 8.0).abs() < 1e-12);
        assert!(m.asymmetry() < 1e-14);
    }

    #[test]
    fn mass_is_positive_definite() {
        use nalgebra::DMatrix;
        let g = Grid::build(2).unwrap();
        let m = assemble_mass_q2(&g);
        let d = m.to_dense();
        let n = m.nrows();
        let dm = DMatrix::from_fn(n, n, |i, j| d[i][j]);
        let eig = dm.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "min eigenvalue {min} not positive");
    }

    #[test]
    fn stiffness_kills_constants() {
        let g = Grid::build(2).unwrap();
        let k = assemble_stiffness_q2(&g);
        let y = k.apply(&ones(g.n_q2()));
        assert!(y.iter().all(|v| v.abs() < 1e-13));
        assert!(k.asymmetry() < 1e-13);
    }

    #[test]
    fn stiffness_quadratic_form_linear_field() {
        // interpolant of (x1, 0): grad has |.|^2 = 1, integral over area 4
        let g = Grid::build(2).unwrap();
        let k = assemble_stiffness_q2(&g);
        let f = VectorField::new(|x, _, _| [x, 0.0]);
        let c = interpolate_q2(&g, &f, 0.0);
        let cx = &c[..g.n_q2()];
        let y = k.apply(cx);
        let val: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((val - 4.0).abs() < 1e-12);
    }

    #[test]
    fn convection_zero_wind() {
        let g = Grid::build(2).unwrap();
        let n = assemble_convection_q2(&g, &vec![0.0; 2 * g.n_q2()]).unwrap();
        assert!(n.max_abs() == 0.0);
    }

    #[test]
    fn convection_skew_for_divergence_free_wind() {
        // rotational wind (x2, -x1) is pointwise divergence free and in Q2;
        // skewness holds on the zero-trace (eliminated) space where the
        // boundary flux term drops
        let g = Grid::build(3).unwrap();
        let layout = crate::grid::DofLayout::enclosed(&g);
        let w = interpolate_q2(&g, &VectorField::new(|x, y, _| [y, -x]), 0.0);
        let n = layout.interior_csr(&assemble_convection_q2(&g, &w).unwrap());
        let skew = n.add_scaled(1.0, &n.transpose(), 1.0).max_abs();
        assert!(skew <= 1e-12, "N + N^T max {skew}");
    }

    #[test]
    fn convection_wind_length_checked() {
        let g = Grid::build(2).unwrap();
        assert!(assemble_convection_q2(&g, &[0.0; 7]).is_err());
    }

    #[test]
    fn lps_disabled_or_zero_wind_is_zero() {
        let g = Grid::build(2).unwrap();
        let zero = vec![0.0; 2 * g.n_q2()];
        let w = assemble_lps_q2(&g, &zero, LpsConfig::default(), 0.01).unwrap();
        assert_eq!(w.max_abs(), 0.0);
        let wind = interpolate_q2(&g, &VectorField::new(|_, _, _| [1.0, 0.0]), 0.0);
        let w2 = assemble_lps_q2(
            &g,
            &wind,
            LpsConfig {
                enabled: false,
                delta0: 1.0,
            },
            1e-3,
        )
        .unwrap();
        assert_eq!(w2.max_abs(), 0.0);
    }

    #[test]
    fn lps_positive_semidefinite() {
        let g = Grid::build(2).unwrap();
        let wind = interpolate_q2(
            &g,
            &VectorField::new(|x, y, _| [1.0 + 0.3 * y, 0.5 - 0.2 * x]),
            0.0,
        );
        let w = assemble_lps_q2(&g, &wind, LpsConfig::default(), 1e-3).unwrap();
        assert!(w.max_abs() > 0.0, "stabilization should be active");
        assert!(w.asymmetry() < 1e-13);
        // quasi-random probes
        let n = w.nrows();
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..100 {
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                })
                .collect();
            let y = w.apply(&x);
            let q: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!(q >= -1e-12, "indefinite: x'Wx = {q}");
        }
    }

    #[test]
    fn lps_fluctuation_of_patch_constant_vanishes() {
        // wind (1,0): streamline derivative of interp(x1) is exactly 1,
        // the patchwise projection removes it entirely
        let g = Grid::build(2).unwrap();
        let wind = interpolate_q2(&g, &VectorField::new(|_, _, _| [1.0, 0.0]), 0.0);
        let w = assemble_lps_q2(&g, &wind, LpsConfig::default(), 1e-3).unwrap();
        assert!(w.max_abs() > 0.0);
        let c = interpolate_q2(&g, &VectorField::new(|x, _, _| [x, 0.0]), 0.0);
        let cx = &c[..g.n_q2()];
        let y = w.apply(cx);
        let q: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(q.abs() < 1e-12, "fluctuation not killed: {q}");
    }

    #[test]
    fn divergence_of_constant_and_rotational_fields() {
        let g = Grid::build(2).unwrap();
        let b = assemble_divergence(&g);
        let c = interpolate_q2(&g, &VectorField::new(|_, _, _| [1.0, 1.0]), 0.0);
        let y = b.apply(&c);
        assert!(y.iter().all(|v| v.abs() < 1e-13));
        let r = interpolate_q2(&g, &VectorField::new(|x, y, _| [y, -x]), 0.0);
        let y2 = b.apply(&r);
        assert!(y2.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn divergence_interior_columns_sum_to_zero() {
        let g = Grid::build(2).unwrap();
        let layout = crate::grid::DofLayout::enclosed(&g);
        let b = assemble_divergence(&g);
        let bi = layout.interior_divergence(&b);
        // 1_p^T B v = -boundary flux = 0 for v vanishing on the boundary
        let mut colsum = vec![0.0; bi.ncols()];
        bi.matvec_transpose_add(1.0, &vec![1.0; bi.nrows()], &mut colsum);
        assert!(colsum.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn pressure_ops_basics() {
        let g = Grid::build(2).unwrap();
        let wind = interpolate_q2(&g, &VectorField::new(|x, y, _| [y, x]), 0.0);
        let ops = assemble_pressure_ops(&g, &wind, LpsConfig::default(), 0.002).unwrap();
        let y = ops.stiffness.apply(&ones(g.n_q1()));
        assert!(y.iter().all(|v| v.abs() < 1e-13), "K_p 1 != 0");
        let my = ops.mass.apply(&ones(g.n_q1()));
        let total: f64 = my.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
        assert!(ops.mass.asymmetry() < 1e-14);
        assert!(ops.stabilization.asymmetry() < 1e-13);
    }

    #[test]
    fn load_vector_cases() {
        let g = Grid::build(2).unwrap();
        let zero = assemble_load_q2(&g, &VectorField::zero(), 0.0);
        assert!(zero.iter().all(|v| *v == 0.0));
        let f1 = assemble_load_q2(&g, &VectorField::new(|_, _, _| [1.0, 0.0]), 0.0);
        let sx: f64 = f1[..g.n_q2()].iter().sum();
        assert!((sx - 4.0).abs() < 1e-12);
        let sy: f64 = f1[g.n_q2()..].iter().sum();
        assert!(sy.abs() < 1e-14);
    }

    #[test]
    fn interpolation_exact_for_quadratics() {
        let g = Grid::build(2).unwrap();
        let f = VectorField::new(|x, y, _| [x * x, y * y]);
        let c = interpolate_q2(&g, &f, 0.0);
        for (i, node) in g.q2_nodes.iter().enumerate() {
            assert!((c[i] - node[0] * node[0]).abs() < 1e-15);
            assert!((c[g.n_q2() + i] - node[1] * node[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn dirichlet_lifting_zero_data_is_pure_deletion() {
        let g = Grid::build(2).unwrap();
        let layout = crate::grid::DofLayout::enclosed(&g);
        let k = assemble_stiffness_q2(&g);
        let zero = vec![0.0; 2 * g.n_q2()];
        let (kii, lift) = apply_dirichlet_lifting(&k, &layout, &zero[..g.n_q2()].to_vec());
        assert_eq!(kii.nrows(), layout.n2i);
        assert!(lift.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cavity_lift_touches_only_top_coupled_rows() {
        let g = Grid::build(2).unwrap();
        let layout = crate::grid::DofLayout::enclosed(&g);
        let k = assemble_stiffness_q2(&g);
        let lid = crate::problems::cavity_lid();
        let gb = boundary_values(&g, &layout, &lid, 0.0);
        let (_, lift) = apply_dirichlet_lifting(&k, &layout, &gb[..g.n_q2()].to_vec());
        // rows coupled to the lid are interior nodes one layer below the top
        let s = g.q2_side();
        for (k_int, &node) in layout.interior_nodes.iter().enumerate() {
            let gy = node as usize / s;
            if lift[k_int].abs() > 0.0 {
                assert!(gy >= s - 3, "unexpected lift at row {gy}");
            }
        }
    }

    #[test]
    fn mass_bounds_positive() {
        let g = Grid::build(2).unwrap();
        let layout = crate::grid::DofLayout::enclosed(&g);
        let (lo, hi) = mass_element_bounds(&g, Some(&layout), false);
        assert!(lo > 0.0 && hi > lo);
        let (lo1, hi1) = mass_element_bounds(&g, None, true);
        assert!(lo1 > 0.0 && hi1 <= 2.26);
    }
}

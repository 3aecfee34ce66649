//! Uniform quadrilateral grid on (-1,1)^2 with Taylor-Hood Q2-Q1 numbering.
//!
//! Refinement level l gives 2^l elements per side of size h = 2^(1-l).
//! Q2 nodes live on the half-spacing lattice, Q1 nodes on element corners.
//! Numbering is lexicographic by (x2, x1): y-major, x fastest. Velocity
//! unknowns are blocked by component, [all x; all y].

use crate::error::{FlowError, Result};

#[derive(Debug, Clone)]
pub struct Grid {
    pub level: u32,
    /// Elements per side, 2^level.
    pub elements_per_side: usize,
    /// Element size h = 2^(1-level).
    pub element_size: f64,
    /// Q2 node coordinates, spacing 2^-level.
    pub q2_nodes: Vec<[f64; 2]>,
    /// Q1 node coordinates, spacing 2^(1-level).
    pub q1_nodes: Vec<[f64; 2]>,
    /// Per-element Q2 connectivity (9 nodes, tensor order).
    pub elem_q2: Vec<[u32; 9]>,
    /// Per-element Q1 connectivity (4 corners, tensor order).
    pub elem_q1: Vec<[u32; 4]>,
    /// Disjoint 2x2-element patches; each entry lists 4 element ids.
    pub patches: Vec<[u32; 4]>,
}

impl Grid {
    pub fn build(level: u32) -> Result<Grid> {
        if !(1..=8).contains(&level) {
            return Err(FlowError::Config(format!(
                "grid level must be in 1..=8, got {level}"
            )));
        }
        let m = 1usize << level;
        let h = 2.0_f64.powi(1 - level as i32);
        let nq2 = 2 * m + 1;
        let nq1 = m + 1;
        let mut q2_nodes = Vec::with_capacity(nq2 * nq2);
        for gy in 0..nq2 {
            for gx in 0..nq2 {
                q2_nodes.push([-1.0 + gx as f64 * h / 2.0, -1.0 + gy as f64 * h / 2.0]);
            }
        }
        let mut q1_nodes = Vec::with_capacity(nq1 * nq1);
        for gy in 0..nq1 {
            for gx in 0..nq1 {
                q1_nodes.push([-1.0 + gx as f64 * h, -1.0 + gy as f64 * h]);
            }
        }
        let mut elem_q2 = Vec::with_capacity(m * m);
        let mut elem_q1 = Vec::with_capacity(m * m);
        for ey in 0..m {
            for ex in 0..m {
                let mut q2 = [0u32; 9];
                for j in 0..3 {
                    for i in 0..3 {
                        q2[3 * j + i] = ((2 * ey + j) * nq2 + 2 * ex + i) as u32;
                    }
                }
                elem_q2.push(q2);
                let mut q1 = [0u32; 4];
                for j in 0..2 {
                    for i in 0..2 {
                        q1[2 * j + i] = ((ey + j) * nq1 + ex + i) as u32;
                    }
                }
                elem_q1.push(q1);
            }
        }
        let mp = m / 2;
        let mut patches = Vec::with_capacity(mp * mp);
        for py in 0..mp {
            for px in 0..mp {
                let e = |dx: usize, dy: usize| ((2 * py + dy) * m + 2 * px + dx) as u32;
                patches.push([e(0, 0), e(1, 0), e(0, 1), e(1, 1)]);
            }
        }
        Ok(Grid {
            level,
            elements_per_side: m,
            element_size: h,
            q2_nodes,
            q1_nodes,
            elem_q2,
            elem_q1,
            patches,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.elem_q2.len()
    }

    pub fn n_q2(&self) -> usize {
        self.q2_nodes.len()
    }

    pub fn n_q1(&self) -> usize {
        self.q1_nodes.len()
    }

    /// Q2 nodes per side.
    pub fn q2_side(&self) -> usize {
        2 * self.elements_per_side + 1
    }

    pub fn is_q2_boundary(&self, node: usize) -> bool {
        let s = self.q2_side();
        let (gx, gy) = (node % s, node / s);
        gx == 0 || gy == 0 || gx == s - 1 || gy == s - 1
    }
}

/// Velocity/pressure unknown bookkeeping for an enclosed-flow problem:
/// Dirichlet velocity values on the whole boundary are eliminated, all Q1
/// pressure nodes are kept.
#[derive(Debug, Clone)]
pub struct DofLayout {
    /// Scalar interior Q2 node count; n_v = 2 * n2i.
    pub n2i: usize,
    /// Velocity unknowns after elimination.
    pub n_v: usize,
    /// Pressure unknowns.
    pub n_p: usize,
    /// Per-Q2-node boundary flag.
    pub boundary_mask: Vec<bool>,
    /// Full node id -> interior id (u32::MAX for boundary nodes).
    pub interior_of: Vec<u32>,
    /// Interior id -> full node id.
    pub interior_nodes: Vec<u32>,
}

impl DofLayout {
    pub fn enclosed(grid: &Grid) -> DofLayout {
        let n = grid.n_q2();
        let mut boundary_mask = vec![false; n];
        let mut interior_of = vec![u32::MAX; n];
        let mut interior_nodes = Vec::new();
        for i in 0..n {
            if grid.is_q2_boundary(i) {
                boundary_mask[i] = true;
            } else {
                interior_of[i] = interior_nodes.len() as u32;
                interior_nodes.push(i as u32);
            }
        }
        let n2i = interior_nodes.len();
        DofLayout {
            n2i,
            n_v: 2 * n2i,
            n_p: grid.n_q1(),
            boundary_mask,
            interior_of,
            interior_nodes,
        }
    }

    /// Restrict a full scalar Q2 vector to interior entries.
    pub fn restrict_scalar(&self, full: &[f64]) -> Vec<f64> {
        self.interior_nodes.iter().map(|&i| full[i as usize]).collect()
    }

    /// Restrict a full 2-component Q2 vector (length 2*N) to length n_v.
    pub fn restrict_velocity(&self, full: &[f64]) -> Vec<f64> {
        let n = self.boundary_mask.len();
        debug_assert_eq!(full.len(), 2 * n);
        let mut out = Vec::with_capacity(self.n_v);
        for comp in 0..2 {
            for &i in &self.interior_nodes {
                out.push(full[comp * n + i as usize]);
            }
        }
        out
    }

    /// Pad an interior velocity vector with the given full-space boundary values.
    pub fn pad_velocity(&self, interior: &[f64], boundary_full: &[f64]) -> Vec<f64> {
        let n = self.boundary_mask.len();
        debug_assert_eq!(interior.len(), self.n_v);
        debug_assert_eq!(boundary_full.len(), 2 * n);
        let mut out = boundary_full.to_vec();
        for comp in 0..2 {
            for (k, &i) in self.interior_nodes.iter().enumerate() {
                out[comp * n + i as usize] = interior[comp * self.n2i + k];
            }
        }
        out
    }

    /// Interior square submatrix of a scalar Q2 operator.
    pub fn interior_csr(&self, a: &crate::sparse::SparseMatrix) -> crate::sparse::SparseMatrix {
        let col_map: Vec<Option<u32>> = self
            .interior_of
            .iter()
            .map(|&v| if v == u32::MAX { None } else { Some(v) })
            .collect();
        a.submatrix(&self.interior_nodes, &col_map)
    }

    /// Columns of the divergence matrix (n_p x 2N) restricted to interior
    /// velocity unknowns, giving an n_p x n_v matrix.
    pub fn interior_divergence(
        &self,
        b: &crate::sparse::SparseMatrix,
    ) -> crate::sparse::SparseMatrix {
        let n = self.boundary_mask.len();
        let rows: Vec<u32> = (0..b.nrows() as u32).collect();
        let mut col_map = vec![None; 2 * n];
        for comp in 0..2 {
            for (k, &i) in self.interior_nodes.iter().enumerate() {
                col_map[comp * n + i as usize] = Some((comp * self.n2i + k) as u32);
            }
        }
        b.submatrix(&rows, &col_map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_level() {
        assert!(Grid::build(0).is_err());
        assert!(Grid::build(9).is_err());
    }

    #[test]
    fn counts_level2() {
        let g = Grid::build(2).unwrap();
        assert_eq!(g.n_elements(), 16);
        assert_eq!(g.n_q2(), 81);
        assert_eq!(g.n_q1(), 25);
        assert_eq!(g.patches.len(), 4);
    }

    #[test]
    fn counts_level3() {
        let g = Grid::build(3).unwrap();
        assert_eq!(g.n_elements(), 64);
        assert_eq!(g.n_q2(), 289);
        assert_eq!(g.n_q1(), 81);
    }

    #[test]
    fn patches_partition_elements() {
        let g = Grid::build(3).unwrap();
        let mut seen = vec![false; g.n_elements()];
        for p in &g.patches {
            for &e in p {
                assert!(!seen[e as usize]);
                seen[e as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn connectivity_consistent_with_coordinates() {
        let g = Grid::build(2).unwrap();
        let h = g.element_size;
        for (e, conn) in g.elem_q2.iter().enumerate() {
            let (ex, ey) = (e % g.elements_per_side, e / g.elements_per_side);
            let x0 = -1.0 + ex as f64 * h;
            let y0 = -1.0 + ey as f64 * h;
            for j in 0..3 {
                for i in 0..3 {
                    let c = g.q2_nodes[conn[3 * j + i] as usize];
                    assert!((c[0] - (x0 + i as f64 * h / 2.0)).abs() < 1e-15);
                    assert!((c[1] - (y0 + j as f64 * h / 2.0)).abs() < 1e-15);
                }
            }
        }
        for c in &g.q2_nodes {
            assert!(c[0] >= -1.0 && c[0] <= 1.0 && c[1] >= -1.0 && c[1] <= 1.0);
        }
    }

    #[test]
    fn dof_counts_enclosed() {
        for level in 2..=4u32 {
            let g = Grid::build(level).unwrap();
            let d = DofLayout::enclosed(&g);
            let side = 2usize.pow(level + 1) - 1;
            assert_eq!(d.n_v, 2 * side * side);
            assert_eq!(d.n_p, (2usize.pow(level) + 1).pow(2));
            let nb = d.boundary_mask.iter().filter(|&&b| b).count();
            assert_eq!(nb + d.n2i, g.n_q2());
        }
    }
}

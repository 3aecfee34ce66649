//! Built-in problem catalog: lid-driven cavity control targets and the
//! manufactured instationary Stokes problem with a known analytic solution.

use crate::error::{FlowError, Result};
use crate::fem::VectorField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    CavityStationary,
    CavityInstationary,
    StokesManufactured,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    None,
    BackwardEuler,
    CrankNicolson,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::None => write!(f, "none"),
            Scheme::BackwardEuler => write!(f, "be"),
            Scheme::CrankNicolson => write!(f, "cn"),
        }
    }
}

/// A control problem instance: cost-functional data plus constraint data.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub nu: f64,
    pub beta: f64,
    pub t_f: f64,
    pub scheme: Scheme,
    /// Time steps; None means the scheme default (CN: 2^level, BE: t_f/0.05).
    pub n_t: Option<usize>,
    pub f: VectorField,
    pub g: VectorField,
    pub v_d: VectorField,
    pub v0: VectorField,
    pub exact_v: Option<VectorField>,
    pub exact_zeta: Option<VectorField>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 || self.nu <= 0.0 {
            return Err(FlowError::Config("nu and beta must be positive".into()));
        }
        if self.t_f <= 0.0 {
            return Err(FlowError::Config("t_f must be positive".into()));
        }
        match (self.kind, self.scheme) {
            (ProblemKind::CavityStationary, Scheme::None) => Ok(()),
            (ProblemKind::CavityStationary, _) => Err(FlowError::Config(
                "stationary problem takes no time scheme".into(),
            )),
            (ProblemKind::CavityInstationary, Scheme::BackwardEuler | Scheme::CrankNicolson) => {
                Ok(())
            }
            (ProblemKind::CavityInstationary, Scheme::None) => Err(FlowError::Config(
                "instationary problem needs scheme be|cn".into(),
            )),
            (ProblemKind::StokesManufactured, Scheme::CrankNicolson) => Ok(()),
            (ProblemKind::StokesManufactured, _) => Err(FlowError::Config(
                "manufactured problem is Crank-Nicolson only".into(),
            )),
            (ProblemKind::Custom, _) => Ok(()),
        }
    }

    /// Stokes control problems skip the nonlinear loop entirely.
    pub fn is_stokes(&self) -> bool {
        self.kind == ProblemKind::StokesManufactured || self.nu == 1.0
    }

    pub fn cavity_stationary(nu: f64, beta: f64) -> ProblemSpec {
        ProblemSpec {
            kind: ProblemKind::CavityStationary,
            nu,
            beta,
            t_f: 2.0,
            scheme: Scheme::None,
            n_t: None,
            f: VectorField::zero(),
            g: cavity_lid(),
            v_d: VectorField::zero(),
            v0: VectorField::zero(),
            exact_v: None,
            exact_zeta: None,
        }
    }

    pub fn cavity_instationary(nu: f64, beta: f64, scheme: Scheme, n_t: Option<usize>) -> ProblemSpec {
        ProblemSpec {
            kind: ProblemKind::CavityInstationary,
            nu,
            beta,
            t_f: 2.0,
            scheme,
            n_t,
            f: VectorField::zero(),
            g: ramp_lid(),
            v_d: vortex_pair_desired_state(),
            v0: VectorField::zero(),
            exact_v: None,
            exact_zeta: None,
        }
    }

    pub fn manufactured_cn(beta: f64) -> ProblemSpec {
        let t_f = 2.0;
        ProblemSpec {
            kind: ProblemKind::StokesManufactured,
            nu: 1.0,
            beta,
            t_f,
            scheme: Scheme::CrankNicolson,
            n_t: None,
            f: manufactured_forcing(t_f),
            g: manufactured_velocity(t_f),
            v_d: manufactured_desired_state(beta, t_f),
            v0: {
                let v = manufactured_velocity(t_f);
                VectorField::new(move |x, y, _| v.eval(x, y, 0.0))
            },
            exact_v: Some(manufactured_velocity(t_f)),
            exact_zeta: Some(manufactured_adjoint(beta, t_f)),
        }
    }
}

/// Unit lid velocity on the open top edge, zero on the rest of the boundary
/// (corners included).
pub fn cavity_lid() -> VectorField {
    VectorField::new(|x, y, _| {
        if y == 1.0 && x.abs() < 1.0 {
            [1.0, 0.0]
        } else {
            [0.0, 0.0]
        }
    })
}

/// Lid velocity ramping linearly over t in (0,1), then held at one.
pub fn ramp_lid() -> VectorField {
    VectorField::new(|x, y, t| {
        if y == 1.0 && x.abs() < 1.0 {
            [t.min(1.0), 0.0]
        } else {
            [0.0, 0.0]
        }
    })
}

/// Divergence-free pair of counter-rotating vortices, modulated in time.
pub fn vortex_pair_desired_state() -> VectorField {
    let a = 100.0 / 49.0;
    let b = 100.0 / 99.0;
    VectorField::new(move |x, y, t| {
        let ct = (std::f64::consts::PI * t / 2.0).cos();
        let c1 = 1.0 - ((a * (x - 0.5)).powi(2) + (b * y).powi(2)).sqrt();
        if c1 >= 0.0 {
            return [c1 * ct * b * b * y, -c1 * ct * a * a * (x - 0.5)];
        }
        let c2 = 1.0 - ((a * (x + 0.5)).powi(2) + (b * y).powi(2)).sqrt();
        if c2 >= 0.0 {
            return [-c2 * ct * b * b * y, c2 * ct * a * a * (x + 0.5)];
        }
        [0.0, 0.0]
    })
}

pub fn manufactured_velocity(t_f: f64) -> VectorField {
    VectorField::new(move |x, y, t| {
        let e = (t_f - t).exp();
        [e * 20.0 * x * y.powi(3), e * (5.0 * x.powi(4) - 5.0 * y.powi(4))]
    })
}

pub fn manufactured_adjoint(beta: f64, t_f: f64) -> VectorField {
    VectorField::new(move |x, y, t| {
        let s = beta * ((t_f - t).exp() - 1.0);
        [
            s * 2.0 * y * (x * x - 1.0).powi(2) * (y * y - 1.0),
            -s * 2.0 * x * (x * x - 1.0) * (y * y - 1.0).powi(2),
        ]
    })
}

pub fn manufactured_forcing(t_f: f64) -> VectorField {
    VectorField::new(move |x, y, t| {
        let e = (t_f - t).exp();
        let ax = 2.0 * y * (x * x - 1.0).powi(2) * (y * y - 1.0);
        let ay = 2.0 * x * (x * x - 1.0) * (y * y - 1.0).powi(2);
        [
            e * (-20.0 * x * y.powi(3) - ax) + ax,
            e * (5.0 * (y.powi(4) - x.powi(4)) + ay) - ay,
        ]
    })
}

pub fn manufactured_desired_state(beta: f64, t_f: f64) -> VectorField {
    VectorField::new(move |x, y, t| {
        let e = (t_f - t).exp();
        let (x2, y2) = (x * x, y * y);
        let s1 = 4.0 * beta * y * (2.0 * (3.0 * x2 - 1.0) * (y2 - 1.0) + 3.0 * (x2 - 1.0).powi(2));
        let s2 = -4.0 * beta * x * (3.0 * (y2 - 1.0).powi(2) + 2.0 * (x2 - 1.0) * (3.0 * y2 - 1.0));
        let e1 = 20.0 * x * y.powi(3)
            + 2.0 * beta
                * y
                * ((x2 - 1.0).powi(2) * (y2 - 7.0) - 4.0 * (3.0 * x2 - 1.0) * (y2 - 1.0) + 2.0);
        let e2 = 5.0 * (x2 * x2 - y2 * y2)
            - 2.0 * beta
                * x
                * ((y2 - 1.0).powi(2) * (x2 - 7.0) - 4.0 * (x2 - 1.0) * (3.0 * y2 - 1.0) - 2.0);
        [s1 + e * e1, s2 + e * e2]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lid_is_zero_at_corners() {
        let g = cavity_lid();
        assert_eq!(g.eval(1.0, 1.0, 0.0), [0.0, 0.0]);
        assert_eq!(g.eval(-1.0, 1.0, 0.0), [0.0, 0.0]);
        assert_eq!(g.eval(0.5, 1.0, 0.0), [1.0, 0.0]);
        assert_eq!(g.eval(1.0, 0.5, 0.0), [0.0, 0.0]);
    }

    #[test]
    fn ramp_lid_saturates() {
        let g = ramp_lid();
        assert_eq!(g.eval(0.0, 1.0, 0.25), [0.25, 0.0]);
        assert_eq!(g.eval(0.0, 1.0, 1.5), [1.0, 0.0]);
    }

    #[test]
    fn vortex_pair_divergence_free_numerically() {
        let vd = vortex_pair_desired_state();
        let eps = 1e-6;
        for &(x, y) in &[(0.3, 0.1), (0.5, 0.0), (-0.6, 0.2), (-0.4, -0.5)] {
            let dvx = (vd.eval(x + eps, y, 0.3)[0] - vd.eval(x - eps, y, 0.3)[0]) / (2.0 * eps);
            let dvy = (vd.eval(x, y + eps, 0.3)[1] - vd.eval(x, y - eps, 0.3)[1]) / (2.0 * eps);
            assert!((dvx + dvy).abs() < 1e-6, "div {} at ({x},{y})", dvx + dvy);
        }
    }

    #[test]
    fn manufactured_fields_satisfy_state_equation() {
        // v_t - lap(v) + grad(p) = zeta/beta + f with the printed data
        let beta = 0.01;
        let t_f = 2.0;
        let z = manufactured_adjoint(beta, t_f);
        let f = manufactured_forcing(t_f);
        let t = 0.7;
        for &(x, y) in &[(0.2f64, -0.3f64), (-0.5, 0.6), (0.9, 0.9)] {
            let e = (t_f - t).exp();
            let vt = [-e * 20.0 * x * y.powi(3), -e * (5.0 * x.powi(4) - 5.0 * y.powi(4))];
            let lap = [e * 120.0 * x * y, e * (60.0 * x * x - 60.0 * y * y)];
            let grad_p = [e * 120.0 * x * y, e * (60.0 * x * x - 60.0 * y * y)];
            let zv = z.eval(x, y, t);
            let fv = f.eval(x, y, t);
            for c in 0..2 {
                let lhs = vt[c] - lap[c] + grad_p[c];
                let rhs = zv[c] / beta + fv[c];
                assert!((lhs - rhs).abs() < 1e-9, "component {c} at ({x},{y})");
            }
        }
    }

    #[test]
    fn validation_rules() {
        let mut p = ProblemSpec::cavity_stationary(0.05, 1e-6);
        p.validate().unwrap();
        p.scheme = Scheme::BackwardEuler;
        assert!(p.validate().is_err());
        let mut q = ProblemSpec::cavity_instationary(0.01, 1e-2, Scheme::None, None);
        assert!(q.validate().is_err());
        q.scheme = Scheme::CrankNicolson;
        q.validate().unwrap();
        q.beta = 0.0;
        assert!(q.validate().is_err());
    }
}

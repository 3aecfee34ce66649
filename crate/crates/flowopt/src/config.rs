//! Solver configuration and plain-text config parsing.

use crate::error::{FlowError, Result};
use crate::fem::LpsConfig;
use crate::problems::{ProblemKind, ProblemSpec, Scheme};

/// Every tolerance, step count, restart length, and regularization knob of
/// the solver stack.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Outer FGMRES relative tolerance.
    pub outer_tol: f64,
    /// Outer FGMRES restart length.
    pub restart: usize,
    /// Outer FGMRES iteration cap.
    pub max_outer: usize,
    /// Fixed inner GMRES steps for (1,1)-block and Schur pressure systems.
    pub inner_gmres_steps: usize,
    /// Chebyshev semi-iteration steps for mass matrices.
    pub cheb_steps: usize,
    /// V-cycles for convection-diffusion blocks.
    pub mg_cycles_velocity: usize,
    /// V-cycles for pinned pressure stiffness solves.
    pub mg_cycles_pressure: usize,
    /// Invertible-mass surrogate weight for the backward Euler preconditioner.
    pub epsilon: f64,
    pub lps: LpsConfig,
    /// Nonlinear (Oseen) iteration cap.
    pub oseen_cap: usize,
    /// Nonlinear relative residual tolerance.
    pub nonlinear_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            outer_tol: 1e-6,
            restart: 10,
            max_outer: 400,
            inner_gmres_steps: 5,
            cheb_steps: 20,
            mg_cycles_velocity: 4,
            mg_cycles_pressure: 2,
            epsilon: 1e-4,
            lps: LpsConfig::default(),
            oseen_cap: 20,
            nonlinear_tol: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_tol <= 0.0 || self.nonlinear_tol <= 0.0 || self.epsilon <= 0.0 {
            return Err(FlowError::Config("tolerances must be positive".into()));
        }
        if self.restart == 0
            || self.max_outer == 0
            || self.inner_gmres_steps == 0
            || self.cheb_steps == 0
            || self.mg_cycles_velocity == 0
            || self.mg_cycles_pressure == 0
            || self.oseen_cap == 0
        {
            return Err(FlowError::Config("iteration counts must be positive".into()));
        }
        if self.lps.delta0 < 0.0 {
            return Err(FlowError::Config("delta0 must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A parsed `key=value` configuration: problem, solver knobs, grid level.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    pub level: u32,
}

fn parse_f64(line: usize, key: &str, val: &str) -> Result<f64> {
    val.parse().map_err(|_| FlowError::Parse {
        line,
        msg: format!("{key} expects a number, got '{val}'"),
    })
}

fn parse_usize(line: usize, key: &str, val: &str) -> Result<usize> {
    val.parse().map_err(|_| FlowError::Parse {
        line,
        msg: format!("{key} expects an integer, got '{val}'"),
    })
}

/// Parse a plain-text `key=value` configuration (one pair per line or
/// whitespace-separated, `#` comments). Unknown keys are rejected; missing
/// required keys are listed.
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let mut problem_name: Option<String> = None;
    let mut level: Option<u32> = None;
    let mut nu: Option<f64> = None;
    let mut beta: Option<f64> = None;
    let mut scheme: Option<Scheme> = None;
    let mut tau: Option<f64> = None;
    let mut n_t: Option<usize> = None;
    let mut solver = SolverConfig::default();
    let mut tol_set = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        for tok in line.split_whitespace() {
            let (key, val) = tok.split_once('=').ok_or_else(|| FlowError::Parse {
                line: lineno,
                msg: format!("expected key=value, got '{tok}'"),
            })?;
            match key {
                "problem" => problem_name = Some(val.to_string()),
                "level" => {
                    level = Some(parse_usize(lineno, key, val)? as u32);
                }
                "nu" => nu = Some(parse_f64(lineno, key, val)?),
                "beta" => beta = Some(parse_f64(lineno, key, val)?),
                "scheme" => {
                    scheme = Some(match val {
                        "be" => Scheme::BackwardEuler,
                        "cn" => Scheme::CrankNicolson,
                        "none" => Scheme::None,
                        other => {
                            return Err(FlowError::Parse {
                                line: lineno,
                                msg: format!("scheme must be be|cn|none, got '{other}'"),
                            })
                        }
                    })
                }
                "tau" => tau = Some(parse_f64(lineno, key, val)?),
                "nt" => n_t = Some(parse_usize(lineno, key, val)?),
                "tol" => {
                    solver.outer_tol = parse_f64(lineno, key, val)?;
                    tol_set = true;
                }
                "restart" => solver.restart = parse_usize(lineno, key, val)?,
                "max_outer" => solver.max_outer = parse_usize(lineno, key, val)?,
                "inner_gmres" => solver.inner_gmres_steps = parse_usize(lineno, key, val)?,
                "cheb_steps" => solver.cheb_steps = parse_usize(lineno, key, val)?,
                "mg_cycles_velocity" => solver.mg_cycles_velocity = parse_usize(lineno, key, val)?,
                "mg_cycles_pressure" => solver.mg_cycles_pressure = parse_usize(lineno, key, val)?,
                "epsilon" => solver.epsilon = parse_f64(lineno, key, val)?,
                "delta0" => solver.lps.delta0 = parse_f64(lineno, key, val)?,
                "lps" => {
                    solver.lps.enabled = match val {
                        "on" | "true" | "1" => true,
                        "off" | "false" | "0" => false,
                        other => {
                            return Err(FlowError::Parse {
                                line: lineno,
                                msg: format!("lps must be on|off, got '{other}'"),
                            })
                        }
                    }
                }
                "oseen_cap" => solver.oseen_cap = parse_usize(lineno, key, val)?,
                "nonlinear_tol" => solver.nonlinear_tol = parse_f64(lineno, key, val)?,
                other => {
                    return Err(FlowError::Parse {
                        line: lineno,
                        msg: format!("unknown key '{other}'"),
                    })
                }
            }
        }
    }

    let mut missing = Vec::new();
    if problem_name.is_none() {
        missing.push("problem");
    }
    if level.is_none() {
        missing.push("level");
    }
    if beta.is_none() {
        missing.push("beta");
    }
    if !missing.is_empty() {
        return Err(FlowError::Config(format!(
            "missing required keys: {}",
            missing.join(", ")
        )));
    }
    let level = level.unwrap();
    let beta = beta.unwrap();
    let name = problem_name.unwrap();

    let problem = build_problem(&name, nu, beta, scheme, tau, n_t, level)?;
    solver.validate()?;
    if problem.kind == ProblemKind::StokesManufactured && !tol_set {
        solver.outer_tol = 1e-9;
    }
    problem.validate()?;
    Ok(ParsedConfig {
        problem,
        solver,
        level,
    })
}

/// Instantiate a catalog problem by CLI/config name.
pub fn build_problem(
    name: &str,
    nu: Option<f64>,
    beta: f64,
    scheme: Option<Scheme>,
    tau: Option<f64>,
    n_t: Option<usize>,
    level: u32,
) -> Result<ProblemSpec> {
    let t_f = 2.0;
    let n_t_from_tau = |tau: Option<f64>| -> Result<Option<usize>> {
        match tau {
            None => Ok(None),
            Some(t) if t > 0.0 => {
                let n = (t_f / t).round();
                if (n * t - t_f).abs() > 1e-9 * t_f {
                    return Err(FlowError::Config(format!(
                        "tau={t} does not divide t_f={t_f}"
                    )));
                }
                Ok(Some(n as usize))
            }
            Some(t) => Err(FlowError::Config(format!("tau must be positive, got {t}"))),
        }
    };
    match name {
        "cavity-stationary" => {
            let nu = nu.ok_or_else(|| FlowError::Config("cavity-stationary needs nu".into()))?;
            if scheme.is_some() && scheme != Some(Scheme::None) {
                return Err(FlowError::Config(
                    "cavity-stationary takes no time scheme".into(),
                ));
            }
            Ok(ProblemSpec::cavity_stationary(nu, beta))
        }
        "cavity-instationary" => {
            let nu = nu.ok_or_else(|| FlowError::Config("cavity-instationary needs nu".into()))?;
            let scheme = scheme.ok_or_else(|| {
                FlowError::Config("cavity-instationary needs scheme=be|cn".into())
            })?;
            let steps = match scheme {
                Scheme::BackwardEuler => n_t.or(n_t_from_tau(tau)?).or(Some(40)),
                Scheme::CrankNicolson => n_t.or(n_t_from_tau(tau)?).or(Some(1usize << level)),
                Scheme::None => {
                    return Err(FlowError::Config("instationary problem needs be|cn".into()))
                }
            };
            Ok(ProblemSpec::cavity_instationary(nu, beta, scheme, steps))
        }
        "stokes-manufactured" => {
            if let Some(nu) = nu {
                if nu != 1.0 {
                    return Err(FlowError::Config(
                        "stokes-manufactured is a Stokes problem (nu=1)".into(),
                    ));
                }
            }
            let mut p = ProblemSpec::manufactured_cn(beta);
            p.n_t = n_t.or(n_t_from_tau(tau)?).or(Some(1usize << level));
            Ok(p)
        }
        other => Err(FlowError::Config(format!("unknown problem '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_stationary_config() {
        let c = parse_config("problem=cavity-stationary level=3 nu=0.05 beta=1e-6").unwrap();
        assert_eq!(c.level, 3);
        assert_eq!(c.problem.kind, ProblemKind::CavityStationary);
        assert!((c.problem.nu - 0.05).abs() < 1e-15);
        assert!((c.problem.beta - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn missing_keys_listed() {
        let err = parse_config("").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("problem") && msg.contains("level") && msg.contains("beta"));
    }

    #[test]
    fn zero_tol_rejected() {
        let err =
            parse_config("problem=cavity-stationary level=3 nu=0.05 beta=1e-6 tol=0").unwrap_err();
        assert!(err.to_string().contains("positive"));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let err = parse_config("problem=cavity-stationary\nwhatever=1").unwrap_err();
        match err {
            FlowError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("wrong error {other}"),
        }
    }

    #[test]
    fn scheme_consistency() {
        assert!(parse_config("problem=cavity-stationary level=3 nu=0.05 beta=1 scheme=be").is_err());
        let c =
            parse_config("problem=cavity-instationary level=2 nu=0.01 beta=1 scheme=be tau=0.05")
                .unwrap();
        assert_eq!(c.problem.n_t, Some(40));
        let c2 =
            parse_config("problem=cavity-instationary level=3 nu=0.01 beta=1 scheme=cn").unwrap();
        assert_eq!(c2.problem.n_t, Some(8));
    }

    #[test]
    fn manufactured_defaults_to_tight_tol() {
        let c = parse_config("problem=stokes-manufactured level=2 beta=1").unwrap();
        assert!((c.solver.outer_tol - 1e-9).abs() < 1e-18);
        assert_eq!(c.problem.n_t, Some(4));
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let c =
            parse_config("# run\nproblem=cavity-stationary # lid\n\nlevel=3 nu=1.0 beta=1e-2\n")
                .unwrap();
        assert_eq!(c.level, 3);
    }
}

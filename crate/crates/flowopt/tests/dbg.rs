use flowopt::config::SolverConfig;
use flowopt::fem::VectorField;
use flowopt::problems::{ProblemSpec, Scheme};

#[test]
fn dbg_leaky() {
    let config = SolverConfig::default();
    let mut line = String::new();
    for beta in [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let mut p = ProblemSpec::cavity_stationary(0.01, beta);
        p.g = VectorField::new(|_, y, _| if y == 1.0 { [1.0, 0.0] } else { [0.0, 0.0] });
        let (_, r) = flowopt::stationary::solve_stationary(&p, 3, &config).unwrap();
        line += &format!(" {}", r.oseen_iterations());
    }
    println!("LEAKY stat nu=1/100 l=3 oseen:{line}   [paper 13 9 7 5 4 4 3]");
    let mut line = String::new();
    for beta in [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
        let mut p = ProblemSpec::cavity_stationary(0.05, beta);
        p.g = VectorField::new(|_, y, _| if y == 1.0 { [1.0, 0.0] } else { [0.0, 0.0] });
        let (_, r) = flowopt::stationary::solve_stationary(&p, 3, &config).unwrap();
        line += &format!(" {}", r.oseen_iterations());
    }
    println!("LEAKY stat nu=1/20  l=3 oseen:{line}   [paper 5 5 5 5 4 4 3]");
    let mut p2 = ProblemSpec::cavity_instationary(0.01, 1.0, Scheme::BackwardEuler, Some(40));
    p2.g = VectorField::new(|_, y, t: f64| if y == 1.0 { [t.min(1.0), 0.0] } else { [0.0, 0.0] });
    let (_, r2) = flowopt::transient_be::solve_be(&p2, 2, &config).unwrap();
    println!("LEAKY BE nu=1/100 l=2 beta=1: oseen {} (paper 15)", r2.oseen_iterations());
}

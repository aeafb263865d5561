use probit_uq::erm::{minimize, ErmConfig};
use probit_uq::gamp::{run_gamp, BayesProbit, GampConfig};
use probit_uq::probit_model::{generate, ModelParams};
use probit_uq::scalar::dot;
use probit_uq::state_evolution::{bayes_error, solve_bo, solve_erm, SEConfig};
use probit_uq::uncertainty::{calibration_erm, joint_density, JointGaussianSpec};

#[test]
fn state_evolution_in_single_precision() {
    let cfg = SEConfig {
        fp_tol: 1e-6,
        ..SEConfig::default()
    };
    let q32 = solve_bo::<f32>(10.0, 0.5, &cfg).unwrap();
    let q64 = solve_bo::<f64>(10.0, 0.5, &SEConfig::default()).unwrap();
    assert!((q32 as f64 - q64).abs() < 1e-4);
    assert!((bayes_error(q32, 0.5) - 0.173).abs() < 2e-3);
    let fp32 = solve_erm::<f32>(10.0, 0.5, 0.1, &cfg).unwrap();
    let fp64 = solve_erm::<f64>(10.0, 0.5, 0.1, &SEConfig::default()).unwrap();
    assert!((fp32.m as f64 / fp64.m - 1.0).abs() < 1e-3);
    assert!((fp32.q as f64 / fp64.q - 1.0).abs() < 1e-3);
    let d32 = calibration_erm(0.75_f32, fp32.m, fp32.q, 0.5).unwrap();
    let d64 = calibration_erm(0.75, fp64.m, fp64.q, 0.5).unwrap();
    assert!((d32 as f64 - d64).abs() < 1e-4);
}

#[test]
fn solvers_in_single_precision() {
    let params = ModelParams::<f32>::new(100, 3.0, 0.5, 0.0).unwrap();
    let data32 = generate(&params, 1).unwrap();
    let data64 = generate(&ModelParams::<f64>::new(100, 3.0, 0.5, 0.0).unwrap(), 1).unwrap();
    // Same seed, same draws: only the rounding differs.
    for (a, b) in data32.y.iter().zip(&data64.y) {
        assert_eq!(*a as f64, *b);
    }
    let cfg = ErmConfig {
        grad_tol: 1e-5,
        ..ErmConfig::default()
    };
    let w32 = minimize(&data32, 0.5, &cfg).unwrap().w_hat;
    let w64 = minimize(&data64, 0.5, &ErmConfig::default()).unwrap().w_hat;
    let w32: Vec<f64> = w32.iter().map(|&v| v as f64).collect();
    let cos = dot(&w32, &w64) / (dot(&w32, &w32) * dot(&w64, &w64)).sqrt();
    assert!(cos > 0.9999, "{cos}");

    let g = run_gamp(&data32, &BayesProbit { tau: 0.5_f32 }, 1.0, &GampConfig::default()).unwrap();
    assert!(g.converged);
    assert!(g.w_hat.iter().chain(&g.c_hat).all(|v| v.is_finite()));
}

#[test]
fn density_in_single_precision() {
    let s32 = JointGaussianSpec::<f32>::new(0.9, 2.7, 8.3, 0.5).unwrap();
    let s64 = JointGaussianSpec::<f64>::new(0.9, 2.7, 8.3, 0.5).unwrap();
    let f32v = joint_density(0.7_f32, 0.6, 0.8, &s32).unwrap() as f64;
    let f64v = joint_density(0.7, 0.6, 0.8, &s64).unwrap();
    assert!((f32v / f64v - 1.0).abs() < 1e-3, "{f32v} vs {f64v}");
}

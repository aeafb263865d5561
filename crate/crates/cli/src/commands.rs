//! The non-figure subcommands.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use probit_uq::crossval::{empirical_crossval, log_grid, sweep, LambdaSweep};
use probit_uq::erm::{minimize, test_metrics, ErmConfig, ErmStatus};
use probit_uq::gamp::{bayes_test_error, run_gamp_with_diagnostics, BayesProbit, GampConfig, LogisticErm};
use probit_uq::probit_model::{generate, oracle_test_error, ModelParams};
use probit_uq::scalar::{dot, norm_sq};
use probit_uq::state_evolution::{bayes_error, erm_error, erm_test_loss, solve_bo, solve_overlaps, SEConfig};
use probit_uq::uncertainty::{
    calibration_curve, marginal_density_2d, p_grid, CalibrationKind, JointGaussianSpec, MarginalPair,
};
use probit_uq::{Dataset64, Overlaps64};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::CliError;
use crate::output::{Sink, Table};
use crate::svg::{heatmap, LinePlot, Series};

pub fn se_config(o: &SeOptions) -> Result<SEConfig, CliError> {
    let cfg = SEConfig {
        quadrature_nodes: o.nodes,
        fp_tol: o.tol,
        ..SEConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_dataset(path: &Path) -> Result<Dataset64, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Dataset64::read_csv(BufReader::new(f))?)
}

pub fn generate_cmd(a: &GenerateArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    let params = ModelParams::new(a.d, a.alpha, a.tau, 0.0)?;
    let data = generate(&params, a.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    sink.bytes(&a.output, &buf)?;
    Ok(vec![a.seed])
}

pub fn gamp_cmd(a: &GampArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    let data = read_dataset(&a.data)?;
    let cfg = GampConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        damping: a.damping,
        init_seed: a.seed,
        ..GampConfig::default()
    };
    let (result, diag) = match a.channel {
        Channel::Bayes => {
            if a.lambda.is_some() {
                return Err(CliError::Usage("--lambda applies to the erm channel only".into()));
            }
            run_gamp_with_diagnostics(&data, &BayesProbit { tau: data.tau }, 1.0, &cfg)?
        }
        Channel::Erm => {
            let lambda = a
                .lambda
                .ok_or_else(|| CliError::Usage("the erm channel needs --lambda".into()))?;
            run_gamp_with_diagnostics(&data, &LogisticErm, lambda, &cfg)?
        }
    };
    sink.json("gamp_result.json", &result)?;
    let d = data.d() as f64;
    let mut metrics = json!({
        "channel": a.channel,
        "m": dot(&result.w_hat, &data.w_star) / d,
        "q": norm_sq(&result.w_hat) / d,
        "mean_c_hat": result.c_hat.iter().sum::<f64>() / d,
        "variance_clamps": diag.clamped,
        "final_damping": diag.final_damping,
    });
    if a.channel == Channel::Bayes {
        metrics["test_error"] = json!(bayes_test_error(&result, &data.w_star, data.tau, a.n_test, data.seed));
    } else {
        let t = test_metrics(&result.w_hat, &data.w_star, data.tau, a.n_test, data.seed);
        metrics["test_error"] = json!(t.error);
        metrics["test_loss"] = json!(t.loss);
    }
    sink.json("gamp_metrics.json", &metrics)?;
    if !result.converged {
        return Err(CliError::Numerical(format!(
            "GAMP did not converge in {} iterations (last change {:.3e}); results were written",
            result.iterations_used, result.final_delta
        )));
    }
    Ok(vec![data.seed, a.seed])
}

pub fn erm_cmd(a: &ErmArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    let data = read_dataset(&a.data)?;
    let cfg = ErmConfig {
        grad_tol: a.grad_tol,
        max_iter: a.max_iter,
        ..ErmConfig::default()
    };
    let sol = minimize(&data, a.lambda, &cfg)?;
    sink.json("erm_solution.json", &sol)?;
    let t = test_metrics(&sol.w_hat, &data.w_star, data.tau, a.n_test, a.seed);
    sink.json(
        "erm_overlaps.json",
        &json!({
            "m": t.m,
            "q_erm": t.q,
            "rho": t.rho,
            "test_error": t.error,
            "test_loss": t.loss,
            "closed_form_error": t.closed_form_error,
        }),
    )?;
    match sol.status {
        ErmStatus::MaxIterations => Err(CliError::Numerical(format!(
            "minimizer stopped after {} iterations with gradient norm {:.3e}; results were written",
            sol.iterations, sol.final_grad_norm
        ))),
        ErmStatus::DivergingMargin => {
            eprintln!("warning: the data are separable and λ = 0; the iterate norm reached its cap");
            Ok(vec![data.seed, a.seed])
        }
        ErmStatus::Converged => Ok(vec![data.seed, a.seed]),
    }
}

#[derive(Serialize)]
struct SeDerived {
    bayes_error: f64,
    oracle_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    erm_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    erm_test_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_prime: Option<f64>,
}

pub fn se_cmd(a: &SeArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    let cfg = se_config(&a.se)?;
    let out = match a.lambda {
        None => {
            let q_bo = solve_bo(a.alpha, a.tau, &cfg)?;
            json!({
                "alpha": a.alpha,
                "tau": a.tau,
                "overlaps": { "q_bo": q_bo },
                "derived": SeDerived {
                    bayes_error: bayes_error(q_bo, a.tau),
                    oracle_error: oracle_test_error(a.tau),
                    erm_error: None,
                    erm_test_loss: None,
                    sigma: None,
                    tau_prime: None,
                },
            })
        }
        Some(lambda) => {
            let o = solve_overlaps(a.alpha, a.tau, lambda, &cfg)?;
            let spec = JointGaussianSpec::from_overlaps(&o, a.tau)?;
            json!({
                "alpha": a.alpha,
                "tau": a.tau,
                "lambda": lambda,
                "overlaps": o,
                "derived": SeDerived {
                    bayes_error: bayes_error(o.q_bo, a.tau),
                    oracle_error: oracle_test_error(a.tau),
                    erm_error: Some(erm_error(o.m, o.q_erm, a.tau)),
                    erm_test_loss: Some(erm_test_loss(o.m, o.q_erm, a.tau, &cfg.rule())),
                    sigma: Some(spec.sigma),
                    tau_prime: Some(spec.tau_prime),
                },
            })
        }
    };
    sink.json("se.json", &out)?;
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(vec![])
}

pub fn marginal_pair(p: Pair) -> MarginalPair {
    match p {
        Pair::StarErm => MarginalPair::StarErm,
        Pair::BoErm => MarginalPair::BoErm,
        Pair::StarBo => MarginalPair::StarBo,
    }
}

pub fn axis_labels(p: MarginalPair) -> (&'static str, &'static str) {
    match p {
        MarginalPair::StarErm => ("teacher confidence", "ERM confidence"),
        MarginalPair::BoErm => ("Bayes confidence", "ERM confidence"),
        MarginalPair::StarBo => ("teacher confidence", "Bayes confidence"),
    }
}

/// Density at the centres of an `n × n` grid on `(0, 1)²`, as `(a, b, value)`
/// rows with `a` varying slowest.
pub fn density_table(pair: MarginalPair, spec: &JointGaussianSpec<f64>, n: usize) -> Result<Table, CliError> {
    let mut t = Table::new(&["a", "b", "value"]);
    for i in 0..n {
        let a = (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let b = (j as f64 + 0.5) / n as f64;
            t.push(vec![a, b, marginal_density_2d(pair, a, b, spec)?]);
        }
    }
    Ok(t)
}

pub fn density_svg(title: &str, pair: MarginalPair, n: usize, table: &Table) -> String {
    let values: Vec<f64> = table.rows.iter().map(|r| r[2]).collect();
    let (x, y) = axis_labels(pair);
    heatmap(title, x, y, n, &values)
}

pub fn overlaps_json(o: &Overlaps64, spec: &JointGaussianSpec<f64>) -> serde_json::Value {
    json!({ "overlaps": o, "sigma": spec.sigma, "tau": spec.tau, "tau_prime": spec.tau_prime })
}

pub fn density_cmd(a: &DensityArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    if a.grid == 0 {
        return Err(CliError::Usage("--grid must be positive".into()));
    }
    let cfg = se_config(&a.se)?;
    let o = solve_overlaps(a.alpha, a.tau, a.lambda, &cfg)?;
    let spec = JointGaussianSpec::from_overlaps(&o, a.tau)?;
    let pair = marginal_pair(a.pair);
    let table = density_table(pair, &spec, a.grid)?;
    sink.table("density", &table)?;
    let mut meta = overlaps_json(&o, &spec);
    meta["pair"] = json!(pair.name());
    meta["grid"] = json!(a.grid);
    sink.json("density_meta.json", &meta)?;
    let title = format!(
        "{} density, α = {}, τ = {}, λ = {}",
        pair.name(),
        a.alpha,
        a.tau,
        a.lambda
    );
    sink.bytes("density.svg", density_svg(&title, pair, a.grid, &table).as_bytes())?;
    Ok(vec![])
}

pub fn calibration_cmd(a: &CalibrationArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    if a.points == 0 {
        return Err(CliError::Usage("--points must be positive".into()));
    }
    let cfg = se_config(&a.se)?;
    let o = solve_overlaps(a.alpha, a.tau, a.lambda, &cfg)?;
    let spec = JointGaussianSpec::from_overlaps(&o, a.tau)?;
    let kind = match a.reference {
        Reference::Teacher => CalibrationKind::VsTeacher,
        Reference::Bayes => CalibrationKind::VsBayes,
    };
    let curve = calibration_curve(kind, &p_grid(a.points), &spec)?;
    let mut t = Table::new(&["p", "delta"]);
    for (&p, &d) in curve.p_grid.iter().zip(&curve.delta) {
        t.push(vec![p, d]);
    }
    sink.table("calibration", &t)?;
    let plot = LinePlot {
        title: &format!("Calibration, α = {}, τ = {}, λ = {}", a.alpha, a.tau, a.lambda),
        x_label: "p",
        y_label: "Δ_p",
        log_x: false,
        series: vec![Series {
            label: "Δ_p",
            points: curve.p_grid.iter().cloned().zip(curve.delta.iter().cloned()).collect(),
            scatter: false,
        }],
        vertical_lines: vec![],
    };
    sink.bytes("calibration.svg", plot.render().as_bytes())?;
    Ok(vec![])
}

pub fn sweep_table(s: &LambdaSweep<f64>) -> Table {
    let mut cols = vec!["lambda".to_string(), "error".into(), "loss".into()];
    cols.extend(s.p_levels.iter().map(|p| format!("delta_{p}")));
    let mut t = Table::new(&cols);
    for (i, &l) in s.lambdas.iter().enumerate() {
        let mut row = vec![l, s.errors[i], s.losses[i]];
        row.extend(&s.calibrations[i]);
        t.push(row);
    }
    t
}

pub fn sweep_summary(s: &LambdaSweep<f64>) -> serde_json::Value {
    json!({
        "lambda_error": s.lambda_error,
        "lambda_loss": s.lambda_loss,
        "error_at_lambda_error": s.error_at_lambda_error,
        "error_at_lambda_loss": s.error_at_lambda_loss,
        "loss_at_lambda_loss": s.loss_at_lambda_loss,
        "error_unimodal": s.error_unimodal,
        "loss_unimodal": s.loss_unimodal,
        "failed": s.failed.iter().map(|(i, why)| json!({ "index": i, "lambda": s.lambdas[*i], "reason": why })).collect::<Vec<_>>(),
    })
}

pub fn crossval_cmd(a: &CrossvalArgs, sink: &mut Sink) -> Result<Vec<u64>, CliError> {
    let grid = log_grid(a.grid_min, a.grid_max, a.grid_points)?;
    if a.p_levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(CliError::Usage("--p-levels must lie in (0, 1)".into()));
    }
    let cfg = se_config(&a.se)?;
    let (result, seeds) = if a.empirical {
        let data = match &a.data {
            Some(path) => read_dataset(path)?,
            None => generate(&ModelParams::new(a.d, a.alpha, a.tau, 0.0)?, a.seed)?,
        };
        let s = empirical_crossval(&data, &grid, &a.p_levels, a.holdout, a.seed, &ErmConfig::default())?;
        (s, vec![data.seed, a.seed])
    } else {
        (sweep(a.alpha, a.tau, &grid, &a.p_levels, &cfg)?, vec![])
    };
    sink.table("crossval", &sweep_table(&result))?;
    let mut summary = sweep_summary(&result);
    summary["mode"] = json!(if a.empirical { "empirical" } else { "asymptotic" });
    sink.json("crossval_summary.json", &summary)?;
    if !result.error_unimodal || !result.loss_unimodal {
        eprintln!("note: the error or loss curve is not unimodal on this grid; the minimizer was refined around the global grid minimum");
    }
    Ok(seeds)
}

//! Figure recipes. Each writes the theory curves or grids, and unless
//! `--theory-only` is given, the matching simulation next to them.

use probit_uq::crossval::{default_grid, log_grid, sweep};
use probit_uq::erm::{erm_confidence, minimize, ErmConfig};
use probit_uq::gamp::{predict_bayes, run_gamp, BayesProbit, GampConfig};
use probit_uq::montecarlo::{for_each_test_point, Accumulator, CalibrationBin};
use probit_uq::probit_model::{generate, oracle_test_error, sigma_star, ModelParams};
use probit_uq::scalar::dot;
use probit_uq::state_evolution::{bayes_error, erm_error, solve_bo, solve_erm, solve_overlaps, SEConfig};
use probit_uq::uncertainty::{
    calibration_erm, calibration_erm_binned, calibration_erm_vs_bayes, conditional_moments, p_grid, JointGaussianSpec,
    MarginalPair, Target,
};
use probit_uq::{Dataset64, GampResult64};
use serde_json::json;

use crate::args::{FigureArgs, FigureId};
use crate::commands::{density_svg, density_table, overlaps_json, sweep_table};
use crate::error::CliError;
use crate::output::{Sink, Table};
use crate::parallel::par_map;
use crate::svg::{LinePlot, Series};

/// Auxiliary RNG stream of the test points used by the figure simulations.
const TEST_STREAM: u64 = 1;

pub fn run(a: &FigureArgs, sink: &mut Sink, workers: usize) -> Result<Vec<u64>, CliError> {
    if a.grid == 0 {
        return Err(CliError::Usage("--grid must be positive".into()));
    }
    let mut r = Recipe {
        args: a,
        sink,
        workers,
        seeds: Vec::new(),
        se: SEConfig::default(),
    };
    match a.id {
        FigureId::Fig1 => r.fig1()?,
        FigureId::Fig2 => r.fig2()?,
        FigureId::Fig3 => r.fig3()?,
        FigureId::Fig4 => r.fig4()?,
        FigureId::Fig5 => r.fig5()?,
        FigureId::Fig6 => r.fig6()?,
    }
    Ok(r.seeds)
}

struct Recipe<'a> {
    args: &'a FigureArgs,
    sink: &'a mut Sink,
    workers: usize,
    seeds: Vec<u64>,
    se: SEConfig,
}

/// A trained instance: the data, and optionally the Bayes (GAMP) and ERM
/// estimators.
struct Instance {
    data: Dataset64,
    bo: Option<GampResult64>,
    erm: Vec<Option<Vec<f64>>>,
}

fn train(d: usize, alpha: f64, tau: f64, seed: u64, with_bo: bool, lambdas: &[f64]) -> Result<Instance, CliError> {
    let data = generate(&ModelParams::new(d, alpha, tau, 0.0)?, seed)?;
    let bo = if with_bo {
        let r = run_gamp(&data, &BayesProbit { tau }, 1.0, &GampConfig::default())?;
        if !r.converged {
            return Err(CliError::Numerical(format!(
                "GAMP did not converge at d = {d}, α = {alpha}, τ = {tau}, seed {seed}"
            )));
        }
        Some(r)
    } else {
        None
    };
    let erm = lambdas
        .iter()
        .map(|&l| minimize(&data, l, &ErmConfig::default()).map(|s| Some(s.w_hat)))
        .collect::<Result<_, _>>()?;
    Ok(Instance { data, bo, erm })
}

impl Instance {
    /// Visits `[f⋆, f̂_bo, f̂_erm]` for `n_test` fresh points, with the ERM
    /// estimator `erm_index` (NaN for absent estimators).
    fn confidences<F: FnMut([f64; 3])>(&self, erm_index: usize, n_test: usize, seed: u64, mut visit: F) {
        let tau = self.data.tau;
        let w_star = &self.data.w_star;
        let erm = self.erm.get(erm_index).and_then(|w| w.as_deref());
        for_each_test_point::<f64, _>(w_star.len(), n_test, seed, TEST_STREAM, |x, _| {
            let star = sigma_star(dot(w_star, x), tau);
            let bo = self.bo.as_ref().map_or(f64::NAN, |r| predict_bayes(x, r, tau));
            let e = erm.map_or(f64::NAN, |w| erm_confidence(x, w));
            visit([star, bo, e]);
        });
    }
}

struct Histogram2d {
    n: usize,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram2d {
    fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
            total: 0,
        }
    }

    fn cell(&self, v: f64) -> usize {
        ((v * self.n as f64) as usize).min(self.n - 1)
    }

    fn push(&mut self, a: f64, b: f64) {
        let (i, j) = (self.cell(a), self.cell(b));
        self.counts[i * self.n + j] += 1;
        self.total += 1;
    }

    /// Empirical density `(a, b, value)` at the cell centres.
    fn table(&self) -> Table {
        let mut t = Table::new(&["a", "b", "value"]);
        let scale = (self.n * self.n) as f64 / self.total.max(1) as f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let a = (i as f64 + 0.5) / self.n as f64;
                let b = (j as f64 + 0.5) / self.n as f64;
                t.push(vec![a, b, self.counts[i * self.n + j] as f64 * scale]);
            }
        }
        t
    }
}

/// Mean and variance of two targets within bins of a conditioning confidence.
struct BinnedMoments {
    n: usize,
    targets: Vec<[Accumulator; 2]>,
}

impl BinnedMoments {
    fn new(n: usize) -> Self {
        Self {
            n,
            targets: vec![[Accumulator::default(); 2]; n],
        }
    }

    fn push(&mut self, cond: f64, t0: f64, t1: f64) {
        let k = ((cond * self.n as f64) as usize).min(self.n - 1);
        self.targets[k][0].push(t0);
        self.targets[k][1].push(t1);
    }

    fn table(&self, names: [&str; 2]) -> Table {
        let mut t = Table::new(&[
            "p_lo".to_string(),
            "p_hi".into(),
            "count".into(),
            format!("mean_{}", names[0]),
            format!("var_{}", names[0]),
            format!("mean_{}", names[1]),
            format!("var_{}", names[1]),
        ]);
        for (k, acc) in self.targets.iter().enumerate() {
            let lo = k as f64 / self.n as f64;
            let hi = (k + 1) as f64 / self.n as f64;
            let nan_if_empty = |v: f64| if acc[0].count() > 0 { v } else { f64::NAN };
            t.push(vec![
                lo,
                hi,
                acc[0].count() as f64,
                nan_if_empty(acc[0].mean()),
                nan_if_empty(acc[0].variance()),
                nan_if_empty(acc[1].mean()),
                nan_if_empty(acc[1].variance()),
            ]);
        }
        t
    }
}

fn spec_for(alpha: f64, tau: f64, lambda: f64, cfg: &SEConfig) -> Result<JointGaussianSpec<f64>, CliError> {
    let o = solve_overlaps(alpha, tau, lambda, cfg)?;
    Ok(JointGaussianSpec::from_overlaps(&o, tau)?)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let mut acc = Accumulator::default();
    values.iter().for_each(|&v| acc.push(v));
    let se = if values.len() > 1 { acc.std_error() } else { f64::NAN };
    (acc.mean(), se)
}

impl Recipe<'_> {
    fn d(&self, default: usize) -> usize {
        self.args.d.unwrap_or(default)
    }

    fn n_test(&self, default: usize) -> usize {
        self.args.n_test.unwrap_or(default)
    }

    fn trials(&self, default: usize) -> usize {
        self.args.trials.unwrap_or(default).max(1)
    }

    /// Writes a density table and its heatmap.
    fn density(&mut self, stem: &str, title: &str, pair: MarginalPair, t: &Table) -> Result<(), CliError> {
        self.sink.table(stem, t)?;
        let svg = density_svg(title, pair, self.args.grid, t);
        self.sink.bytes(&format!("{stem}.svg"), svg.as_bytes())
    }

    /// Bayes estimator against the teacher at α = 10, τ = 0.5.
    fn fig1(&mut self) -> Result<(), CliError> {
        let (alpha, tau) = (10.0, 0.5);
        let n = self.args.grid;
        let spec = spec_for(alpha, tau, 0.0, &self.se)?;
        let theory = density_table(MarginalPair::StarBo, &spec, n)?;
        self.density("fig1_theory", "Teacher vs Bayes, theory", MarginalPair::StarBo, &theory)?;
        let q_bo = spec.q_bo();
        let mut summary = json!({
            "alpha": alpha,
            "tau": tau,
            "q_bo": q_bo,
            "bayes_error": bayes_error(q_bo, tau),
            "oracle_error": oracle_test_error(tau),
        });
        if !self.args.theory_only {
            let (d, n_test, seed) = (self.d(1000), self.n_test(1_000_000), self.args.seed);
            self.seeds.push(seed);
            let inst = train(d, alpha, tau, seed, true, &[])?;
            let mut hist = Histogram2d::new(n);
            let mut mean = BinnedMoments::new(n);
            let mut wrong = 0usize;
            inst.confidences(0, n_test, seed, |[star, bo, _]| {
                hist.push(star, bo);
                mean.push(bo, star, bo);
                if (star >= 0.5) != (bo >= 0.5) {
                    // Disagreement of the two decision rules, not a test error.
                    wrong += 1;
                }
            });
            self.density(
                "fig1_simulation",
                "Teacher vs Bayes, GAMP",
                MarginalPair::StarBo,
                &hist.table(),
            )?;
            self.sink
                .table("fig1_conditional_mean", &mean.table(["teacher", "bayes"]))?;
            let r = inst.bo.as_ref().expect("trained with GAMP");
            summary["simulation"] = json!({
                "d": d,
                "n_test": n_test,
                "seed": seed,
                "gamp_iterations": r.iterations_used,
                "decision_disagreement": wrong as f64 / n_test as f64,
            });
        }
        self.sink.json("fig1_summary.json", &summary)
    }

    /// Bayes-vs-teacher densities across α ∈ {0.1, 1, 10, 100} and τ ∈ {0.1, 0.5, 2}.
    fn fig2(&mut self) -> Result<(), CliError> {
        let n = self.args.grid;
        let panels: Vec<(f64, f64)> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .flat_map(|&a| [0.1, 0.5, 2.0].map(|t| (a, t)))
            .collect();
        let mut theory = Table::new(&["alpha", "tau", "a", "b", "value"]);
        let mut summary = Table::new(&["alpha", "tau", "q_bo", "bayes_error", "oracle_error", "simulated_error"]);
        let mut q_values = Vec::new();
        for &(alpha, tau) in &panels {
            let q_bo = solve_bo(alpha, tau, &self.se)?;
            // The teacher-Bayes marginal does not involve the ERM block; any
            // admissible one (here independent, unit variance) will do.
            let spec = JointGaussianSpec::new(q_bo, 0.0, 1.0, tau)?;
            for row in density_table(MarginalPair::StarBo, &spec, n)?.rows {
                theory.push([vec![alpha, tau], row].concat());
            }
            q_values.push(q_bo);
        }
        self.sink.table("fig2_theory", &theory)?;

        let simulated: Vec<(Vec<Vec<f64>>, f64)> = if self.args.theory_only {
            Vec::new()
        } else {
            let (d, n_test, seed) = (self.d(200), self.n_test(100_000), self.args.seed);
            let jobs: Vec<(usize, (f64, f64))> = panels.iter().cloned().enumerate().collect();
            self.seeds.extend((0..panels.len() as u64).map(|k| seed + k));
            par_map(jobs, self.workers, |(k, (alpha, tau))| -> Result<_, CliError> {
                let inst = train(d, alpha, tau, seed + k as u64, true, &[])?;
                let mut hist = Histogram2d::new(n);
                let mut errors = 0usize;
                let w_star = &inst.data.w_star;
                let r = inst.bo.as_ref().expect("trained with GAMP");
                for_each_test_point::<f64, _>(d, n_test, seed + k as u64, TEST_STREAM, |x, xi| {
                    let h = dot(w_star, x);
                    let star = sigma_star(h, tau);
                    let bo = predict_bayes(x, r, tau);
                    hist.push(star, bo);
                    let y = probit_uq::probit_model::probit_label(h, tau, xi);
                    if (bo >= 0.5) != (y > 0.0) {
                        errors += 1;
                    }
                });
                Ok((hist.table().rows, errors as f64 / n_test as f64))
            })
            .into_iter()
            .collect::<Result<_, _>>()?
        };
        if !simulated.is_empty() {
            let mut t = Table::new(&["alpha", "tau", "a", "b", "value"]);
            for (&(alpha, tau), (rows, _)) in panels.iter().zip(&simulated) {
                for row in rows {
                    t.push([vec![alpha, tau], row.clone()].concat());
                }
            }
            self.sink.table("fig2_simulation", &t)?;
        }
        for (k, &(alpha, tau)) in panels.iter().enumerate() {
            let sim = simulated.get(k).map_or(f64::NAN, |s| s.1);
            summary.push(vec![
                alpha,
                tau,
                q_values[k],
                bayes_error(q_values[k], tau),
                oracle_test_error(tau),
                sim,
            ]);
        }
        self.sink.table("fig2_summary", &summary)
    }

    /// ERM against the teacher and against Bayes at α = 10, τ = 0.5, λ = 0.
    fn fig3(&mut self) -> Result<(), CliError> {
        let (alpha, tau, lambda) = (10.0, 0.5, 0.0);
        let n = self.args.grid;
        let o = solve_overlaps(alpha, tau, lambda, &self.se)?;
        let spec = JointGaussianSpec::from_overlaps(&o, tau)?;
        for (stem, pair, title) in [
            ("fig3_theory_star_erm", MarginalPair::StarErm, "Teacher vs ERM, theory"),
            ("fig3_theory_bo_erm", MarginalPair::BoErm, "Bayes vs ERM, theory"),
        ] {
            let t = density_table(pair, &spec, n)?;
            self.density(stem, title, pair, &t)?;
        }
        let mut curve = Table::new(&["p", "conditional_mean", "var_teacher", "var_bayes"]);
        for p in p_grid::<f64>(99) {
            let (mean, var_t) = conditional_moments(Target::Teacher, p, &spec)?;
            let (_, var_b) = conditional_moments(Target::Bayes, p, &spec)?;
            curve.push(vec![p, mean, var_t, var_b]);
        }
        self.sink.table("fig3_theory_conditional", &curve)?;
        let mut summary = overlaps_json(&o, &spec);
        summary["erm_error"] = json!(erm_error(o.m, o.q_erm, tau));
        summary["bayes_error"] = json!(bayes_error(o.q_bo, tau));
        if !self.args.theory_only {
            let (d, n_test, seed) = (self.d(1000), self.n_test(1_000_000), self.args.seed);
            self.seeds.push(seed);
            let inst = train(d, alpha, tau, seed, true, &[lambda])?;
            let mut star_erm = Histogram2d::new(n);
            let mut bo_erm = Histogram2d::new(n);
            let mut moments = BinnedMoments::new(n);
            inst.confidences(0, n_test, seed, |[star, bo, e]| {
                star_erm.push(star, e);
                bo_erm.push(bo, e);
                moments.push(e, star, bo);
            });
            self.density(
                "fig3_simulation_star_erm",
                "Teacher vs ERM, simulation",
                MarginalPair::StarErm,
                &star_erm.table(),
            )?;
            self.density(
                "fig3_simulation_bo_erm",
                "Bayes vs ERM, simulation",
                MarginalPair::BoErm,
                &bo_erm.table(),
            )?;
            self.sink
                .table("fig3_simulation_conditional", &moments.table(["teacher", "bayes"]))?;
            summary["simulation"] = json!({ "d": d, "n_test": n_test, "seed": seed });
        }
        self.sink.json("fig3_summary.json", &summary)
    }

    /// Calibration and conditional variances against α at λ = 0, τ = 2,
    /// p = 0.75; and calibration at λ_error and λ_loss for τ ∈ {0, 0.5}.
    fn fig4(&mut self) -> Result<(), CliError> {
        let (tau, p) = (2.0, 0.75);
        let (lo, hi) = (p - 0.01, p + 0.01);
        let mut theory = Table::new(&["alpha", "delta", "delta_tilde", "var_teacher", "var_bayes"]);
        let mut curve_points = Vec::new();
        for alpha in log_grid(2.5, 100.0, 40)? {
            let spec = spec_for(alpha, tau, 0.0, &self.se)?;
            let delta = calibration_erm(p, spec.m(), spec.q_erm(), tau)?;
            let tilde = calibration_erm_vs_bayes(p, spec.m(), spec.q_erm(), spec.q_bo(), tau)?;
            let (_, vt) = conditional_moments(Target::Teacher, p, &spec)?;
            let (_, vb) = conditional_moments(Target::Bayes, p, &spec)?;
            theory.push(vec![alpha, delta, tilde, vt, vb]);
            curve_points.push((alpha, delta));
        }
        self.sink.table("fig4_lambda0_theory", &theory)?;

        let sim_alphas = [3.0, 5.0, 10.0, 30.0];
        let mut sim_points = Vec::new();
        if !self.args.theory_only {
            let (d, n_test, trials, seed) = (self.d(300), self.n_test(100_000), self.trials(10), self.args.seed);
            let jobs: Vec<(usize, usize)> = (0..sim_alphas.len())
                .flat_map(|k| (0..trials).map(move |r| (k, r)))
                .collect();
            let trial_seed = |k: usize, r: usize| seed + (k * trials + r) as u64;
            self.seeds.extend(jobs.iter().map(|&(k, r)| trial_seed(k, r)));
            let rows = par_map(jobs, self.workers, |(k, r)| -> Result<Vec<f64>, CliError> {
                let s = trial_seed(k, r);
                let inst = train(d, sim_alphas[k], tau, s, true, &[0.0])?;
                let mut teacher = CalibrationBin::new(lo, hi);
                let mut bayes = CalibrationBin::new(lo, hi);
                inst.confidences(0, n_test, s, |[star, bo, e]| {
                    teacher.observe(e, star);
                    bayes.observe(e, bo);
                });
                let get = |v: Option<f64>| v.unwrap_or(f64::NAN);
                Ok(vec![
                    sim_alphas[k],
                    s as f64,
                    teacher.count() as f64,
                    get(teacher.delta(p)),
                    get(bayes.delta(p)),
                    get(teacher.conditional_variance()),
                    get(bayes.conditional_variance()),
                ])
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            let mut t = Table::new(&[
                "alpha",
                "seed",
                "count",
                "delta",
                "delta_tilde",
                "var_teacher",
                "var_bayes",
            ]);
            rows.iter().for_each(|r| t.push(r.clone()));
            self.sink.table("fig4_lambda0_simulation", &t)?;

            let mut summary = Table::new(&[
                "alpha",
                "delta_mean",
                "delta_se",
                "delta_tilde_mean",
                "delta_tilde_se",
                "binned_theory",
            ]);
            for &alpha in &sim_alphas {
                let of = |col: usize| -> Vec<f64> {
                    rows.iter()
                        .filter(|r| r[0] == alpha)
                        .map(|r| r[col])
                        .filter(|v| v.is_finite())
                        .collect()
                };
                let (dm, ds) = mean_se(&of(3));
                let (tm, ts) = mean_se(&of(4));
                let fp = solve_erm(alpha, tau, 0.0, &self.se)?;
                let binned = calibration_erm_binned(p, lo, hi, fp.m, fp.q, tau)?;
                summary.push(vec![alpha, dm, ds, tm, ts, binned]);
                sim_points.push((alpha, dm));
            }
            self.sink.table("fig4_lambda0_summary", &summary)?;
        }
        let plot = LinePlot {
            title: "Calibration at λ = 0, τ = 2, p = 0.75",
            x_label: "α",
            y_label: "Δ_p",
            log_x: true,
            series: vec![
                Series {
                    label: "theory",
                    points: curve_points,
                    scatter: false,
                },
                Series {
                    label: "simulation",
                    points: sim_points,
                    scatter: true,
                },
            ],
            vertical_lines: vec![],
        };
        self.sink.bytes("fig4_lambda0.svg", plot.render().as_bytes())?;
        self.fig4_optimal(p)
    }

    fn fig4_optimal(&mut self, p: f64) -> Result<(), CliError> {
        let alphas = log_grid(0.5, 50.0, 16)?;
        let mut t = Table::new(&[
            "tau",
            "alpha",
            "lambda_error",
            "lambda_loss",
            "delta_error",
            "delta_loss",
        ]);
        let mut series = Vec::new();
        for tau in [0.0, 0.5] {
            let mut at_error = Vec::new();
            let mut at_loss = Vec::new();
            for &alpha in &alphas {
                let s = sweep(alpha, tau, &default_grid(), &[], &self.se)?;
                let de = solve_erm(alpha, tau, s.lambda_error, &self.se)?;
                let dl = solve_erm(alpha, tau, s.lambda_loss, &self.se)?;
                let de = calibration_erm(p, de.m, de.q, tau)?;
                let dl = calibration_erm(p, dl.m, dl.q, tau)?;
                t.push(vec![tau, alpha, s.lambda_error, s.lambda_loss, de, dl]);
                at_error.push((alpha, de));
                at_loss.push((alpha, dl));
            }
            series.push((tau, at_error, at_loss));
        }
        self.sink.table("fig4_optimal_theory", &t)?;
        let labels = ["λ_error, τ = 0", "λ_loss, τ = 0", "λ_error, τ = 0.5", "λ_loss, τ = 0.5"];
        let mut plot_series = Vec::new();
        for (k, (_, e, l)) in series.into_iter().enumerate() {
            plot_series.push(Series {
                label: labels[2 * k],
                points: e,
                scatter: false,
            });
            plot_series.push(Series {
                label: labels[2 * k + 1],
                points: l,
                scatter: false,
            });
        }
        let plot = LinePlot {
            title: "Calibration at the optimal λ, p = 0.75",
            x_label: "α",
            y_label: "Δ_p",
            log_x: true,
            series: plot_series,
            vertical_lines: vec![],
        };
        self.sink.bytes("fig4_optimal.svg", plot.render().as_bytes())?;

        if self.args.theory_only {
            return Ok(());
        }
        let (d, n_test, trials) = (self.d(300), self.n_test(100_000), self.trials(10));
        let base = self.args.seed + 1_000_000;
        let sim_alphas = [1.0, 3.0, 10.0];
        let mut jobs = Vec::new();
        for tau in [0.0, 0.5] {
            for &alpha in &sim_alphas {
                let s = sweep(alpha, tau, &default_grid(), &[], &self.se)?;
                for _ in 0..trials {
                    jobs.push((tau, alpha, s.lambda_error, s.lambda_loss, base + jobs.len() as u64));
                }
            }
        }
        self.seeds.extend(jobs.iter().map(|j| j.4));
        let (lo, hi) = (p - 0.01, p + 0.01);
        let rows = par_map(
            jobs,
            self.workers,
            |(tau, alpha, le, ll, s)| -> Result<Vec<f64>, CliError> {
                let inst = train(d, alpha, tau, s, false, &[le, ll])?;
                let mut out = vec![tau, alpha, s as f64];
                for k in 0..2 {
                    let mut bin = CalibrationBin::new(lo, hi);
                    inst.confidences(k, n_test, s, |[star, _, e]| bin.observe(e, star));
                    out.push(bin.delta(p).unwrap_or(f64::NAN));
                }
                Ok(out)
            },
        )
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let mut t = Table::new(&["tau", "alpha", "seed", "delta_error", "delta_loss"]);
        rows.into_iter().for_each(|r| t.push(r));
        self.sink.table("fig4_optimal_simulation", &t)
    }

    /// Bayes-vs-ERM densities at λ_error and λ_loss for (α, τ) = (10, 0.5) and (5, 0).
    fn fig5(&mut self) -> Result<(), CliError> {
        let n = self.args.grid;
        let mut summary = Table::new(&[
            "alpha",
            "tau",
            "lambda_kind",
            "lambda",
            "erm_error",
            "bayes_error",
            "simulated_erm_error",
        ]);
        for (k, (alpha, tau)) in [(10.0, 0.5), (5.0, 0.0)].into_iter().enumerate() {
            let s = sweep(alpha, tau, &default_grid(), &[0.75], &self.se)?;
            self.sink.table(&format!("fig5_sweep_{k}"), &sweep_table(&s))?;
            let lambdas = [s.lambda_error, s.lambda_loss];
            let inst = if self.args.theory_only {
                None
            } else {
                let seed = self.args.seed + k as u64;
                self.seeds.push(seed);
                Some(train(self.d(1000), alpha, tau, seed, true, &lambdas)?)
            };
            for (which, &lambda) in lambdas.iter().enumerate() {
                let name = ["error", "loss"][which];
                let o = solve_overlaps(alpha, tau, lambda, &self.se)?;
                let spec = JointGaussianSpec::from_overlaps(&o, tau)?;
                let t = density_table(MarginalPair::BoErm, &spec, n)?;
                let title = format!("Bayes vs ERM, α = {alpha}, τ = {tau}, λ_{name} = {lambda:.4}");
                self.density(&format!("fig5_theory_{k}_{name}"), &title, MarginalPair::BoErm, &t)?;
                let mut sim_error = f64::NAN;
                if let Some(inst) = &inst {
                    let n_test = self.n_test(1_000_000);
                    let mut hist = Histogram2d::new(n);
                    let mut wrong = 0usize;
                    let w_star = &inst.data.w_star;
                    let w = inst.erm[which].as_deref().expect("trained");
                    for_each_test_point::<f64, _>(w_star.len(), n_test, inst.data.seed, TEST_STREAM, |x, xi| {
                        let h = dot(w_star, x);
                        let bo = predict_bayes(x, inst.bo.as_ref().expect("trained"), tau);
                        let e = erm_confidence(x, w);
                        hist.push(bo, e);
                        let y = probit_uq::probit_model::probit_label(h, tau, xi);
                        if (e >= 0.5) != (y > 0.0) {
                            wrong += 1;
                        }
                    });
                    sim_error = wrong as f64 / n_test as f64;
                    let title = format!("Bayes vs ERM (simulation), α = {alpha}, τ = {tau}, λ_{name}");
                    self.density(
                        &format!("fig5_simulation_{k}_{name}"),
                        &title,
                        MarginalPair::BoErm,
                        &hist.table(),
                    )?;
                }
                summary.push(vec![
                    alpha,
                    tau,
                    which as f64,
                    lambda,
                    erm_error(o.m, o.q_erm, tau),
                    bayes_error(o.q_bo, tau),
                    sim_error,
                ]);
            }
        }
        self.sink.table("fig5_summary", &summary)
    }

    /// Δ_p for p ∈ {0.6, 0.9} as a function of λ at α = 5 for τ ∈ {0, 0.5, 2}.
    fn fig6(&mut self) -> Result<(), CliError> {
        let alpha = 5.0;
        let levels = [0.6, 0.9];
        let grid = log_grid(1e-4, 10.0, 60)?;
        let mut curves = Table::new(&["tau", "lambda", "delta_0.6", "delta_0.9"]);
        let mut optima = Table::new(&["tau", "lambda_error", "lambda_loss"]);
        let mut series = Vec::new();
        let mut verticals = Vec::new();
        for tau in [0.0, 0.5, 2.0] {
            let s = sweep(alpha, tau, &grid, &levels, &self.se)?;
            if !s.failed.is_empty() {
                return Err(CliError::Numerical(format!(
                    "state evolution failed at {} grid points for τ = {tau}",
                    s.failed.len()
                )));
            }
            for (l, c) in s.lambdas.iter().zip(&s.calibrations) {
                curves.push(vec![tau, *l, c[0], c[1]]);
            }
            optima.push(vec![tau, s.lambda_error, s.lambda_loss]);
            verticals.extend([s.lambda_error, s.lambda_loss]);
            for (k, &p) in levels.iter().enumerate() {
                let pts: Vec<(f64, f64)> = s.lambdas.iter().zip(&s.calibrations).map(|(&l, c)| (l, c[k])).collect();
                series.push((format!("τ = {tau}, p = {p}"), pts));
            }
        }
        self.sink.table("fig6_theory", &curves)?;
        self.sink.table("fig6_optima", &optima)?;
        let plot = LinePlot {
            title: "Calibration against λ at α = 5",
            x_label: "λ",
            y_label: "Δ_p",
            log_x: true,
            series: series
                .iter()
                .map(|(label, pts)| Series {
                    label,
                    points: pts.clone(),
                    scatter: false,
                })
                .collect(),
            vertical_lines: verticals,
        };
        self.sink.bytes("fig6.svg", plot.render().as_bytes())
    }
}

use rayon::prelude::*;

use super::artifacts::{csv_bytes, trace_csv_bytes, ExperimentArtifacts, Staging};
use super::config::{Experiment, ExperimentConfig, ProblemFamily, ReferenceChoice};
use super::timing::{timing_bench, TimingTable};
use super::{validate_step_conditions, HarnessError};
use crate::asymptotics::{
    asymptotics_report, clt_replicate, iid_sampler, mse_slope, AsymptoticsReport, CltComparison,
    MseFit, ReplicateOptions,
};
use crate::directions::{default_prob_floor, DirectionKind, DirectionSampler};
use crate::format::real;
use crate::objectives::{
    make_noisy_quadratic, synthesize_logistic, FiniteSumObjective, ReferenceOptimum,
};
use crate::optimizer::{
    coordinate_cost, log_spaced, run_method, Method, RunOptions, RunTrace, SnapshotPolicy,
    StepSchedule,
};
use crate::rng::{stream, Purpose};

/// Objective and reference point built from a config.
#[derive(Clone, Debug)]
pub struct Problem {
    pub objective: FiniteSumObjective<f64>,
    pub reference: ReferenceOptimum<f64>,
}

/// Runs of one method, in replicate order.
#[derive(Clone, Debug)]
pub struct MethodRuns {
    pub method: Method,
    pub traces: Vec<RunTrace<f64>>,
}

#[derive(Clone, Debug)]
pub enum ExperimentResult {
    Convergence(Vec<MethodRuns>),
    Clt(Vec<(Method, CltComparison<f64>)>),
    Mse(Vec<(Method, MseFit<f64>)>),
    GammaCheck(Vec<(Method, AsymptoticsReport<f64>)>),
    Timing(TimingTable),
}

/// Synthesizes the problem instance for `cfg.seed`.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, HarnessError> {
    match cfg.family {
        ProblemFamily::Quadratic => {
            let (objective, reference) = make_noisy_quadratic(
                cfg.dim,
                (cfg.lambda_min, cfg.lambda_max),
                cfg.noise,
                cfg.n_components,
                cfg.seed,
            )?;
            Ok(Problem {
                objective,
                reference,
            })
        }
        ProblemFamily::Logistic => {
            let (objective, generator) = synthesize_logistic(cfg.n_components, cfg.dim, cfg.seed)?;
            let reference = match cfg.reference {
                ReferenceChoice::Generator => generator,
                ReferenceChoice::Empirical => objective.empirical_minimizer(&vec![0.0; cfg.dim])?,
            };
            Ok(Problem {
                objective,
                reference,
            })
        }
    }
}

pub(crate) fn base_sampler(
    cfg: &ExperimentConfig,
    method: Method,
) -> Result<Option<DirectionSampler<f64>>, HarnessError> {
    let Method::Scors(kind) = method else {
        return Ok(None);
    };
    if kind == DirectionKind::NonUniform {
        let floor = cfg
            .prob_floor
            .unwrap_or_else(|| default_prob_floor(cfg.dim));
        let d = cfg.dim as f64;
        return Ok(Some(DirectionSampler::non_uniform(
            vec![1.0 / d; cfg.dim],
            floor,
        )?));
    }
    Ok(Some(DirectionSampler::of_kind(kind, cfg.dim)?))
}

fn schedule(cfg: &ExperimentConfig) -> Result<StepSchedule<f64>, HarnessError> {
    Ok(StepSchedule::new(cfg.c, cfg.alpha)?)
}

fn replicate_options(cfg: &ExperimentConfig) -> ReplicateOptions<f64> {
    ReplicateOptions {
        replicates: cfg.replicates,
        base_seed: cfg.seed,
        init: cfg.init_policy(),
        nu_policy: cfg.nu_mode,
    }
}

fn pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| {
            HarnessError::Validation(format!("cannot start {} worker threads: {e}", cfg.threads))
        })
}

/// Runs the experiment without touching the file system.
pub fn compute_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    super::validate(cfg)?;
    if cfg.experiment == Experiment::Timing {
        return Ok(ExperimentResult::Timing(timing_bench(cfg)?));
    }
    let problem = build_problem(cfg)?;
    let schedule = schedule(cfg)?;
    pool(cfg)?.install(|| match cfg.experiment {
        Experiment::Convergence => convergence(cfg, &problem, &schedule),
        Experiment::Clt => clt(cfg, &problem, &schedule),
        Experiment::Mse => mse(cfg, &problem, &schedule),
        Experiment::GammaCheck => gamma_check(cfg, &problem),
        Experiment::Timing => unreachable!(),
    })
}

fn convergence(
    cfg: &ExperimentConfig,
    problem: &Problem,
    schedule: &StepSchedule<f64>,
) -> Result<ExperimentResult, HarnessError> {
    let samplers = cfg
        .samplers
        .iter()
        .map(|&m| base_sampler(cfg, m))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, u64)> = (0..cfg.samplers.len())
        .flat_map(|i| (0..cfg.replicates as u64).map(move |r| (i, r)))
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(i, r)| {
            let method = cfg.samplers[i];
            let iterations = (cfg.budget / coordinate_cost(method, cfg.dim)).max(1);
            let opts = RunOptions::new(iterations, cfg.seed)
                .replicate(r)
                .snapshots(SnapshotPolicy::LogSpaced(cfg.snapshots))
                .init(cfg.init_policy())
                .nu_policy(cfg.nu_mode);
            run_method(
                &problem.objective,
                &problem.reference.x_star,
                method,
                samplers[i].as_ref(),
                schedule,
                &opts,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut traces = traces.into_iter();
    Ok(ExperimentResult::Convergence(
        cfg.samplers
            .iter()
            .map(|&method| MethodRuns {
                method,
                traces: traces.by_ref().take(cfg.replicates).collect(),
            })
            .collect(),
    ))
}

fn clt(
    cfg: &ExperimentConfig,
    problem: &Problem,
    schedule: &StepSchedule<f64>,
) -> Result<ExperimentResult, HarnessError> {
    let opts = replicate_options(cfg);
    let mut out = Vec::with_capacity(cfg.samplers.len());
    for &method in &cfg.samplers {
        let sampler = base_sampler(cfg, method)?;
        let cmp = clt_replicate(
            &problem.objective,
            &problem.reference,
            method,
            sampler.as_ref(),
            schedule,
            cfg.iterations,
            &opts,
        )?;
        out.push((method, cmp));
    }
    Ok(ExperimentResult::Clt(out))
}

fn mse_grid(cfg: &ExperimentConfig) -> Vec<u64> {
    log_spaced(cfg.grid_min, cfg.iterations, cfg.grid_points)
}

fn mse(
    cfg: &ExperimentConfig,
    problem: &Problem,
    schedule: &StepSchedule<f64>,
) -> Result<ExperimentResult, HarnessError> {
    let opts = replicate_options(cfg);
    let grid = mse_grid(cfg);
    let mut out = Vec::with_capacity(cfg.samplers.len());
    for &method in &cfg.samplers {
        let sampler = base_sampler(cfg, method)?;
        let fit = mse_slope(
            &problem.objective,
            &problem.reference,
            method,
            sampler.as_ref(),
            schedule,
            cfg.p,
            &grid,
            &opts,
        )?;
        out.push((method, fit));
    }
    Ok(ExperimentResult::Mse(out))
}

fn gamma_check(
    cfg: &ExperimentConfig,
    problem: &Problem,
) -> Result<ExperimentResult, HarnessError> {
    let opts = replicate_options(cfg);
    let mut out = Vec::with_capacity(cfg.samplers.len());
    for &method in &cfg.samplers {
        let Method::Scors(kind) = method else {
            continue;
        };
        let base = base_sampler(cfg, method)?;
        let sampler = iid_sampler(&problem.objective, method, base.as_ref(), &opts)?
            .expect("direction methods always have a sampler");
        let slot = DirectionKind::ALL
            .iter()
            .position(|&k| k == kind)
            .unwrap_or(0) as u64;
        let mut rng = stream(cfg.seed, slot, Purpose::MonteCarlo);
        let report = asymptotics_report(
            &problem.objective,
            &problem.reference,
            &sampler,
            cfg.mc_draws,
            &mut rng,
        )?;
        out.push((method, report));
    }
    Ok(ExperimentResult::GammaCheck(out))
}

/// Runs the experiment and writes its CSV files, `summary.txt` and
/// `manifest.txt` into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentArtifacts, HarnessError> {
    let result = compute_experiment(cfg)?;
    let staging = stage(cfg, &result)?;
    staging.finalize(&cfg.out_dir)
}

fn stage(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<Staging, HarnessError> {
    let mut s = Staging::default();
    s.put("experiment", cfg.experiment);
    s.put("family", cfg.family);
    s.put("N", cfg.n_components);
    s.put("d", cfg.dim);
    s.put("seed", cfg.seed);
    s.put("c", cfg.c);
    s.put("alpha", cfg.alpha);
    s.put(
        "samplers",
        cfg.samplers
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    match result {
        ExperimentResult::Convergence(runs) => stage_convergence(cfg, runs, &mut s)?,
        ExperimentResult::Clt(items) => stage_clt(items, &mut s)?,
        ExperimentResult::Mse(items) => stage_mse(cfg, items, &mut s)?,
        ExperimentResult::GammaCheck(items) => stage_gamma(items, &mut s)?,
        ExperimentResult::Timing(table) => super::timing::stage(table, &mut s)?,
    }
    s.put("status", "ok");
    Ok(s)
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn stage_convergence(
    cfg: &ExperimentConfig,
    runs: &[MethodRuns],
    s: &mut Staging,
) -> Result<(), HarnessError> {
    s.put("budget", cfg.budget);
    s.put("replicates", cfg.replicates);
    let mut rows = Vec::new();
    for mr in runs {
        let gaps: Vec<f64> = mr.traces.iter().map(RunTrace::final_relative_gap).collect();
        for t in &mr.traces {
            s.file(
                format!("trace_{}_r{}.csv", mr.method, t.replicate),
                "trace",
                trace_csv_bytes(t)?,
            );
            rows.push(vec![
                mr.method.to_string(),
                t.replicate.to_string(),
                t.iterations.to_string(),
                t.final_cost.to_string(),
                real(t.initial_dist),
                real(t.final_dist()),
                real(t.final_relative_gap()),
            ]);
            s.put_real(
                format!("gap.{}.r{}", mr.method, t.replicate),
                t.final_relative_gap(),
            );
        }
        s.put_real(format!("gap.{}.median", mr.method), median(&gaps));
        s.put_real(
            format!("gap.{}.max", mr.method),
            gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    let find = |m: Method| runs.iter().find(|r| r.method == m);
    if let (Some(u), Some(sgd)) = (
        find(Method::Scors(DirectionKind::Uniform)),
        find(Method::Sgd),
    ) {
        let wins = u
            .traces
            .iter()
            .zip(&sgd.traces)
            .filter(|(a, b)| a.final_relative_gap() <= b.final_relative_gap())
            .count();
        s.put("u_le_sgd_count", wins);
    }
    s.file(
        "final_gaps.csv",
        "final_gaps",
        csv_bytes(
            &[
                "method",
                "replicate",
                "iterations",
                "cumulative_cost",
                "initial_dist",
                "final_dist",
                "final_relative_gap",
            ],
            rows,
        )?,
    );
    for (i, w) in validate_step_conditions(cfg, known_mu(cfg), 1)
        .into_iter()
        .enumerate()
    {
        s.put(format!("warning.{i}"), w);
    }
    Ok(())
}

// Strong-convexity constant when known in closed form.
fn known_mu(cfg: &ExperimentConfig) -> Option<f64> {
    match cfg.family {
        ProblemFamily::Quadratic => Some(cfg.lambda_min),
        ProblemFamily::Logistic => None,
    }
}

fn matrix_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| (0..d).map(move |j| (i, j)))
}

fn stage_clt(items: &[(Method, CltComparison<f64>)], s: &mut Staging) -> Result<(), HarnessError> {
    for (method, c) in items {
        let d = c.predicted_sigma.rows();
        let mut header = vec!["replicate".to_string()];
        header.extend((1..=d).map(|j| format!("z_{j}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        s.file(
            format!("clt_{method}_terminal.csv"),
            "clt_terminal",
            csv_bytes(
                &header,
                c.terminal.iter().enumerate().map(|(r, z)| {
                    std::iter::once(r.to_string())
                        .chain(z.iter().map(|&v| real(v)))
                        .collect::<Vec<_>>()
                }),
            )?,
        );
        s.file(
            format!("clt_{method}_covariance.csv"),
            "clt_covariance",
            csv_bytes(
                &["i", "j", "sample", "predicted"],
                matrix_pairs(d).map(|(i, j)| {
                    vec![
                        i.to_string(),
                        j.to_string(),
                        real(c.sample_cov[(i, j)]),
                        real(c.predicted_sigma[(i, j)]),
                    ]
                }),
            )?,
        );
        s.put(format!("clt.{method}.n"), c.n);
        s.put(format!("clt.{method}.replicates"), c.replicates);
        s.put_real(
            format!("clt.{method}.rel_frobenius_error"),
            c.rel_frobenius_error,
        );
        s.put_real(format!("clt.{method}.sample_trace"), c.sample_cov.trace());
        s.put_real(
            format!("clt.{method}.predicted_trace"),
            c.predicted_sigma.trace(),
        );
        s.put_real(format!("clt.{method}.norm_std"), c.norm_std);
    }
    Ok(())
}

fn stage_mse(
    cfg: &ExperimentConfig,
    items: &[(Method, MseFit<f64>)],
    s: &mut Staging,
) -> Result<(), HarnessError> {
    const ITERATIONS_PER_EPOCH: f64 = 1000.0;
    s.put("p", cfg.p);
    s.put("replicates", cfg.replicates);
    s.put_real("mse.expected_slope", -(cfg.p as f64) * cfg.alpha);
    let mut warned = false;
    for (method, fit) in items {
        s.file(
            format!("mse_{method}.csv"),
            "mse",
            csv_bytes(
                &["n", "epoch", "mean_dist_pow"],
                fit.grid.iter().zip(&fit.mean_pow).map(|(&n, &m)| {
                    vec![
                        n.to_string(),
                        real(n as f64 / ITERATIONS_PER_EPOCH),
                        real(m),
                    ]
                }),
            )?,
        );
        s.put(format!("mse.{method}.fit_from"), fit.fit_from);
        s.put_real(format!("mse.{method}.slope"), fit.slope);
        if !warned {
            for (i, w) in fit.warnings.iter().enumerate() {
                s.put(format!("warning.{i}"), w);
            }
            warned = true;
        }
    }
    Ok(())
}

fn stage_gamma(
    items: &[(Method, AsymptoticsReport<f64>)],
    s: &mut Staging,
) -> Result<(), HarnessError> {
    if let Some((_, first)) = items.first() {
        s.put_real("rho", first.rho);
        s.put("rho_admissible", first.sigma.is_some());
    }
    for (method, r) in items {
        let d = r.q.rows();
        s.file(
            format!("gamma_{method}.csv"),
            "gamma",
            csv_bytes(
                &["i", "j", "closed_form", "monte_carlo"],
                matrix_pairs(d).map(|(i, j)| {
                    vec![
                        i.to_string(),
                        j.to_string(),
                        real(r.gamma_closed[(i, j)]),
                        real(r.gamma_mc[(i, j)]),
                    ]
                }),
            )?,
        );
        s.put(format!("gamma.{method}.mc_draws"), r.mc_draws);
        s.put_real(format!("gamma.{method}.rel_error"), r.gamma_rel_error);
        if let Some(sigma) = &r.sigma {
            s.file(
                format!("sigma_{method}.csv"),
                "sigma",
                csv_bytes(
                    &["i", "j", "sigma"],
                    matrix_pairs(d)
                        .map(|(i, j)| vec![i.to_string(), j.to_string(), real(sigma[(i, j)])]),
                )?,
            );
            if let Some(v) = r.lyapunov_residual {
                s.put_real(format!("sigma.{method}.lyapunov_residual"), v);
            }
            if let Some(v) = r.quadrature_gap {
                s.put_real(format!("sigma.{method}.quadrature_gap"), v);
            }
        }
    }
    Ok(())
}

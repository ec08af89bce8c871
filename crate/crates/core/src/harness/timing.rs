use super::artifacts::{csv_bytes, Staging};
use super::config::ExperimentConfig;
use super::experiments::{base_sampler, build_problem};
use super::HarnessError;
use crate::directions::DirectionKind;
use crate::format::real;
use crate::optimizer::{run_method, Method, RunOptions, SnapshotPolicy, StepSchedule};

/// Seconds per iteration reported for the logistic problem with
/// `N = 50000`, `d = 50`. Kept as a non-binding comparison column.
pub const REFERENCE_SECONDS_PER_ITERATION: [(Method, f64); 5] = [
    (Method::Scors(DirectionKind::Uniform), 4.98e-6),
    (Method::Sgd, 5.05e-6),
    (Method::Scors(DirectionKind::NonUniform), 12.01e-6),
    (Method::Scors(DirectionKind::Gaussian), 6.48e-6),
    (Method::Scors(DirectionKind::Spherical), 8.92e-6),
];

fn reference_seconds(method: Method) -> Option<f64> {
    REFERENCE_SECONDS_PER_ITERATION
        .iter()
        .find(|(m, _)| *m == method)
        .map(|&(_, t)| t)
}

#[derive(Clone, Debug)]
pub struct TimingRow {
    pub method: Method,
    /// Median over repetitions.
    pub seconds_per_iteration: f64,
    /// Relative to the U row, when U was timed.
    pub ratio_to_u: Option<f64>,
    pub repetitions: Vec<f64>,
    pub reference_seconds_per_iteration: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TimingTable {
    pub iterations: u64,
    pub warmup: u64,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn row(&self, method: Method) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Per-method seconds per iteration: one discarded warm-up run of
/// `cfg.warmup` updates, then the median of `cfg.repetitions` runs of
/// `cfg.iterations` updates. Runs sequentially on the calling thread.
pub fn timing_bench(cfg: &ExperimentConfig) -> Result<TimingTable, HarnessError> {
    let problem = build_problem(cfg)?;
    let schedule = StepSchedule::new(cfg.c, cfg.alpha)?;
    let mut rows = Vec::with_capacity(cfg.samplers.len());
    for &method in &cfg.samplers {
        let sampler = base_sampler(cfg, method)?;
        let timed = |iterations: u64, replicate: u64| {
            let opts = RunOptions::new(iterations, cfg.seed)
                .replicate(replicate)
                .snapshots(SnapshotPolicy::FinalOnly)
                .init(cfg.init_policy())
                .nu_policy(cfg.nu_mode);
            run_method(
                &problem.objective,
                &problem.reference.x_star,
                method,
                sampler.as_ref(),
                &schedule,
                &opts,
            )
            .map(|t| t.wall_time_per_iteration)
        };
        if cfg.warmup > 0 {
            timed(cfg.warmup, cfg.repetitions as u64)?;
        }
        let reps = (0..cfg.repetitions as u64)
            .map(|r| timed(cfg.iterations, r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sorted = reps.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let med = if sorted.len() % 2 == 1 {
            sorted[m]
        } else {
            0.5 * (sorted[m - 1] + sorted[m])
        };
        rows.push(TimingRow {
            method,
            seconds_per_iteration: med,
            ratio_to_u: None,
            repetitions: reps,
            reference_seconds_per_iteration: reference_seconds(method),
        });
    }
    let u = rows
        .iter()
        .find(|r| r.method == Method::Scors(DirectionKind::Uniform))
        .map(|r| r.seconds_per_iteration);
    if let Some(u) = u {
        for r in &mut rows {
            r.ratio_to_u = Some(r.seconds_per_iteration / u);
        }
    }
    Ok(TimingTable {
        iterations: cfg.iterations,
        warmup: cfg.warmup,
        rows,
    })
}

pub(crate) fn stage(table: &TimingTable, s: &mut Staging) -> Result<(), HarnessError> {
    let reference_u = reference_seconds(Method::Scors(DirectionKind::Uniform)).unwrap_or(f64::NAN);
    let opt = |v: Option<f64>| v.map(real).unwrap_or_default();
    s.file(
        "timing.csv",
        "timing",
        csv_bytes(
            &[
                "method",
                "seconds_per_iteration",
                "ratio_to_u",
                "reference_seconds_per_iteration",
                "reference_ratio_to_u",
            ],
            table.rows.iter().map(|r| {
                vec![
                    r.method.to_string(),
                    real(r.seconds_per_iteration),
                    opt(r.ratio_to_u),
                    opt(r.reference_seconds_per_iteration),
                    opt(r.reference_seconds_per_iteration.map(|p| p / reference_u)),
                ]
            }),
        )?,
    );
    s.put("iterations", table.iterations);
    s.put("warmup", table.warmup);
    for r in &table.rows {
        s.put_real(
            format!("timing.{}.seconds_per_iteration", r.method),
            r.seconds_per_iteration,
        );
        if let Some(v) = r.ratio_to_u {
            s.put_real(format!("timing.{}.ratio_to_u", r.method), v);
        }
    }
    let u = table.row(Method::Scors(DirectionKind::Uniform));
    let nu = table.row(Method::Scors(DirectionKind::NonUniform));
    if let (Some(u), Some(nu)) = (u, nu) {
        s.put(
            "timing.u_faster_than_nu",
            u.seconds_per_iteration < nu.seconds_per_iteration,
        );
    }
    Ok(())
}

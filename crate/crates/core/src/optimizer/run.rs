use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use super::table::GradientTable;
use super::{OptimizerError, RunTrace, Snapshot, SnapshotPolicy, StepSchedule};
use crate::directions::{
    nu_probabilities_from_gradient, DirectionKind, DirectionSampler, DirectionVector, Draw,
};
use crate::objectives::FiniteSumObjective;
use crate::rng::{stream, Purpose};
use crate::scalar::{dist_sq, dot, norm_sq};
use crate::Scalar;

const DIVERGENCE_NORM: f64 = 1e9;

/// An optimizer: SCORS with a direction law, or plain SGD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Scors(DirectionKind),
    Sgd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Scors(DirectionKind::Uniform),
        Method::Scors(DirectionKind::NonUniform),
        Method::Scors(DirectionKind::Gaussian),
        Method::Scors(DirectionKind::Spherical),
        Method::Sgd,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Scors(k) => write!(f, "{k}"),
            Method::Sgd => f.write_str("SGD"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("sgd") {
            Ok(Method::Sgd)
        } else {
            s.parse().map(Method::Scors)
        }
    }
}

/// Gradient coordinates computed per iteration: 1 for canonical
/// directions, `d` for dense directions (the inner product `⟨V, ∇f_k⟩`
/// needs every coordinate) and for SGD.
pub fn coordinate_cost(method: Method, dim: usize) -> u64 {
    match method {
        Method::Scors(kind) if kind.is_canonical() => 1,
        _ => dim as u64,
    }
}

/// How non-uniform coordinate probabilities are chosen during a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NuPolicy {
    /// Use the probabilities the sampler was built with.
    AsGiven,
    /// Largest-coordinate rule applied once to `g_1 = Σ_k ∇f_k(x_1)`.
    #[default]
    Static,
    /// Same rule applied every iteration to the running aggregate of the
    /// gradient table.
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum InitPolicy<T> {
    #[default]
    Zero,
    /// `x_1 ~ N(0, (radius² / d) I)`.
    Gaussian {
        radius: T,
    },
    Point(Vec<T>),
}

#[derive(Clone, Debug)]
pub struct RunOptions<T> {
    pub iterations: u64,
    pub seed: u64,
    pub replicate: u64,
    pub snapshots: SnapshotPolicy,
    pub init: InitPolicy<T>,
    pub nu_policy: NuPolicy,
}

impl<T: Scalar> RunOptions<T> {
    pub fn new(iterations: u64, seed: u64) -> Self {
        Self {
            iterations,
            seed,
            replicate: 0,
            snapshots: SnapshotPolicy::default(),
            init: InitPolicy::Zero,
            nu_policy: NuPolicy::default(),
        }
    }

    pub fn replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn snapshots(mut self, snapshots: SnapshotPolicy) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn init(mut self, init: InitPolicy<T>) -> Self {
        self.init = init;
        self
    }

    pub fn nu_policy(mut self, nu_policy: NuPolicy) -> Self {
        self.nu_policy = nu_policy;
        self
    }
}

/// `x - γ ⟨v, g⟩ v`, the update `x - γ (v v^T) g` without forming `v v^T`.
pub fn scors_step<T: Scalar>(x: &[T], gamma: T, v: &DirectionVector<T>, g: &[T]) -> Vec<T> {
    assert_eq!(x.len(), g.len());
    assert_eq!(x.len(), v.dim());
    let s = gamma * v.dot(g);
    let mut out = x.to_vec();
    match v {
        DirectionVector::Canonical { index, scale, .. } => out[*index] -= s * *scale,
        DirectionVector::Dense(vals) => {
            for (o, &vi) in out.iter_mut().zip(vals) {
                *o -= s * vi;
            }
        }
    }
    out
}

fn initial_point<T: Scalar>(
    init: &InitPolicy<T>,
    dim: usize,
    seed: u64,
    replicate: u64,
) -> Result<Vec<T>, OptimizerError> {
    match init {
        InitPolicy::Zero => Ok(vec![T::zero(); dim]),
        InitPolicy::Gaussian { radius } => {
            let mut rng = stream(seed, replicate, Purpose::Init);
            let s = *radius / T::lit(dim as f64).sqrt();
            Ok((0..dim)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    T::lit(z) * s
                })
                .collect())
        }
        InitPolicy::Point(p) if p.len() == dim => Ok(p.clone()),
        InitPolicy::Point(p) => Err(OptimizerError::DimensionMismatch(format!(
            "initial point has length {}, objective has dimension {dim}",
            p.len()
        ))),
    }
}

struct Recorder<'a, T> {
    reference: &'a [T],
    schedule: &'a StepSchedule<T>,
    indices: Vec<u64>,
    next: usize,
    snapshots: Vec<Snapshot<T>>,
}

impl<'a, T: Scalar> Recorder<'a, T> {
    fn new(
        reference: &'a [T],
        schedule: &'a StepSchedule<T>,
        policy: &SnapshotPolicy,
        last: u64,
    ) -> Self {
        let indices = policy.indices(last);
        Self {
            reference,
            schedule,
            snapshots: Vec::with_capacity(indices.len()),
            indices,
            next: 0,
        }
    }

    #[inline]
    fn observe(&mut self, n: u64, x: &[T], cost: u64) {
        if self.indices.get(self.next) == Some(&n) {
            let dsq = dist_sq(x, self.reference);
            self.snapshots.push(Snapshot {
                n,
                cumulative_cost: cost,
                dist: dsq.sqrt(),
                dist_sq: dsq,
                gamma: self.schedule.step_size(n),
            });
            self.next += 1;
        }
    }
}

fn check_inputs<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    reference: &[T],
    opts: &RunOptions<T>,
) -> Result<(), OptimizerError> {
    if opts.iterations == 0 {
        return Err(OptimizerError::ZeroIterations);
    }
    if reference.len() != obj.dim() {
        return Err(OptimizerError::DimensionMismatch(format!(
            "reference has length {}, objective has dimension {}",
            reference.len(),
            obj.dim()
        )));
    }
    Ok(())
}

#[inline]
fn guard<T: Scalar>(x: &[T], iteration: u64, gamma: T) -> Result<(), OptimizerError> {
    let nsq = norm_sq(x);
    if !nsq.is_finite() {
        return Err(OptimizerError::NonFinite {
            iteration,
            step: gamma.as_f64(),
        });
    }
    if nsq > T::lit(DIVERGENCE_NORM * DIVERGENCE_NORM) {
        return Err(OptimizerError::Diverged {
            iteration,
            step: gamma.as_f64(),
        });
    }
    Ok(())
}

/// Table with `g_{1,k} = ∇f_k(x)` for every component `k`.
fn table_at<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    x: &[T],
) -> Result<GradientTable<T>, OptimizerError> {
    let d = obj.dim();
    let mut rows = vec![T::zero(); obj.n_components() * d];
    for (k, row) in rows.chunks_exact_mut(d).enumerate() {
        obj.component_grad_into(k, x, row)?;
    }
    Ok(GradientTable::new(d, rows))
}

/// The non-uniform sampler that the static policy uses when starting from
/// `x`: probabilities follow the largest-coordinate rule applied to
/// `∇f(x)`, with `base`'s floor.
pub fn initial_nu_sampler<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    x: &[T],
    base: &DirectionSampler<T>,
) -> Result<DirectionSampler<T>, OptimizerError> {
    let t = table_at(obj, x)?;
    let probs = nu_probabilities_from_gradient(t.aggregate(), base.prob_floor())?;
    Ok(base.with_probs(probs)?)
}

/// Runs `opts.iterations` SCORS updates
/// `x_{n+1} = x_n - γ_n (V V^T) ∇f_U(x_n)` from `x_1`.
///
/// `U` is drawn uniformly from the component stream and `V` from an
/// independent direction stream, both keyed by `(seed, replicate)`.
/// Distances in the trace are measured to `reference`.
pub fn run<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    reference: &[T],
    sampler: &DirectionSampler<T>,
    schedule: &StepSchedule<T>,
    opts: &RunOptions<T>,
) -> Result<RunTrace<T>, OptimizerError> {
    check_inputs(obj, reference, opts)?;
    let d = obj.dim();
    if sampler.dim() != d {
        return Err(OptimizerError::DimensionMismatch(format!(
            "sampler dimension {} differs from objective dimension {d}",
            sampler.dim()
        )));
    }
    let n_comp = obj.n_components();
    let mut comp_rng = stream(opts.seed, opts.replicate, Purpose::Component);
    let mut dir_rng = stream(opts.seed, opts.replicate, Purpose::Direction);

    let mut x = initial_point(&opts.init, d, opts.seed, opts.replicate)?;
    let initial_dist = dist_sq(&x, reference).sqrt();
    let last = opts.iterations + 1;
    let mut rec = Recorder::new(reference, schedule, &opts.snapshots, last);
    rec.observe(1, &x, 0);

    let non_uniform = sampler.kind() == DirectionKind::NonUniform;
    let adaptive = non_uniform && opts.nu_policy == NuPolicy::Adaptive;
    let mut current = sampler.clone();
    let mut table = None;
    if non_uniform && opts.nu_policy != NuPolicy::AsGiven {
        let t = table_at(obj, &x)?;
        let probs = nu_probabilities_from_gradient(t.aggregate(), sampler.prob_floor())?;
        current = sampler.with_probs(probs)?;
        if adaptive {
            table = Some(t);
        }
    }

    let step_cost = if sampler.kind().is_canonical() {
        1
    } else {
        d as u64
    };
    let mut cost = 0u64;
    let mut vbuf = vec![T::zero(); d];
    let mut gbuf = vec![T::zero(); d];
    let started = Instant::now();
    for n in 1..=opts.iterations {
        let gamma = schedule.step_size(n);
        let k = comp_rng.random_range(0..n_comp);
        match current.draw(&mut dir_rng, &mut vbuf)? {
            Draw::Canonical { index, scale } => {
                let g = if let Some(t) = table.as_mut() {
                    obj.component_grad_into(k, &x, &mut gbuf)?;
                    t.update(k, &gbuf);
                    gbuf[index]
                } else {
                    obj.component_grad_coord(k, &x, index)
                };
                x[index] -= gamma * scale * scale * g;
                if !x[index].is_finite() {
                    return Err(OptimizerError::NonFinite {
                        iteration: n,
                        step: gamma.as_f64(),
                    });
                }
                if n % d as u64 == 0 {
                    guard(&x, n, gamma)?;
                }
                if let Some(t) = table.as_ref() {
                    let probs =
                        nu_probabilities_from_gradient(t.aggregate(), sampler.prob_floor())?;
                    current = sampler.with_probs(probs)?;
                }
            }
            Draw::Dense => {
                obj.component_grad_into(k, &x, &mut gbuf)?;
                let s = gamma * dot(&vbuf, &gbuf);
                for (xi, &vi) in x.iter_mut().zip(&vbuf) {
                    *xi -= s * vi;
                }
                guard(&x, n, gamma)?;
            }
        }
        cost += step_cost;
        rec.observe(n + 1, &x, cost);
    }
    let elapsed = started.elapsed().as_secs_f64();
    guard(&x, opts.iterations, schedule.step_size(opts.iterations))?;

    Ok(RunTrace {
        seed: opts.seed,
        replicate: opts.replicate,
        iterations: opts.iterations,
        snapshots: rec.snapshots,
        initial_dist,
        final_iterate: x,
        final_cost: cost,
        wall_time_per_iteration: elapsed / opts.iterations as f64,
    })
}

/// Plain SGD, `x_{n+1} = x_n - γ_n ∇f_U(x_n)`, costing `d` coordinates per
/// iteration. Shares the component stream layout with [`run`].
pub fn run_sgd_baseline<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    reference: &[T],
    schedule: &StepSchedule<T>,
    opts: &RunOptions<T>,
) -> Result<RunTrace<T>, OptimizerError> {
    check_inputs(obj, reference, opts)?;
    let d = obj.dim();
    let n_comp = obj.n_components();
    let mut comp_rng = stream(opts.seed, opts.replicate, Purpose::Component);
    let mut x = initial_point(&opts.init, d, opts.seed, opts.replicate)?;
    let initial_dist = dist_sq(&x, reference).sqrt();
    let mut rec = Recorder::new(reference, schedule, &opts.snapshots, opts.iterations + 1);
    rec.observe(1, &x, 0);

    let mut cost = 0u64;
    let mut gbuf = vec![T::zero(); d];
    let started = Instant::now();
    for n in 1..=opts.iterations {
        let gamma = schedule.step_size(n);
        let k = comp_rng.random_range(0..n_comp);
        obj.component_grad_into(k, &x, &mut gbuf)?;
        for (xi, &g) in x.iter_mut().zip(&gbuf) {
            *xi -= gamma * g;
        }
        guard(&x, n, gamma)?;
        cost += d as u64;
        rec.observe(n + 1, &x, cost);
    }
    let elapsed = started.elapsed().as_secs_f64();

    Ok(RunTrace {
        seed: opts.seed,
        replicate: opts.replicate,
        iterations: opts.iterations,
        snapshots: rec.snapshots,
        initial_dist,
        final_iterate: x,
        final_cost: cost,
        wall_time_per_iteration: elapsed / opts.iterations as f64,
    })
}

/// Monte Carlo estimate of `E[⟨V, ∇f_U(x)⟩ V]` at a fixed `x`, drawing `U`
/// and `V` from the component and direction streams of `seed`. Equals
/// `∇f(x)` in expectation whenever `E[V V^T] = I`.
pub fn frozen_point_mean<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    sampler: &DirectionSampler<T>,
    x: &[T],
    draws: usize,
    seed: u64,
) -> Result<Vec<T>, OptimizerError> {
    let d = obj.dim();
    if x.len() != d || sampler.dim() != d {
        return Err(OptimizerError::DimensionMismatch(format!(
            "point has length {}, sampler dimension {}, objective dimension {d}",
            x.len(),
            sampler.dim()
        )));
    }
    let mut comp_rng = stream(seed, 0, Purpose::Component);
    let mut dir_rng = stream(seed, 0, Purpose::Direction);
    let mut acc = vec![T::zero(); d];
    let mut vbuf = vec![T::zero(); d];
    let mut gbuf = vec![T::zero(); d];
    for _ in 0..draws {
        let k = comp_rng.random_range(0..obj.n_components());
        obj.component_grad_into(k, x, &mut gbuf)?;
        match sampler.draw(&mut dir_rng, &mut vbuf)? {
            Draw::Canonical { index, scale } => acc[index] += scale * scale * gbuf[index],
            Draw::Dense => {
                let s = dot(&vbuf, &gbuf);
                acc.iter_mut().zip(&vbuf).for_each(|(a, &v)| *a += s * v);
            }
        }
    }
    let inv = T::one() / T::lit(draws.max(1) as f64);
    Ok(acc.into_iter().map(|a| a * inv).collect())
}

/// Dispatches on `method`; SCORS methods use `sampler`, which must match
/// the method's direction kind.
pub fn run_method<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    reference: &[T],
    method: Method,
    sampler: Option<&DirectionSampler<T>>,
    schedule: &StepSchedule<T>,
    opts: &RunOptions<T>,
) -> Result<RunTrace<T>, OptimizerError> {
    match method {
        Method::Sgd => run_sgd_baseline(obj, reference, schedule, opts),
        Method::Scors(kind) => match sampler {
            Some(s) if s.kind() == kind => run(obj, reference, s, schedule, opts),
            Some(s) => Err(OptimizerError::DimensionMismatch(format!(
                "sampler kind {} does not match method {method}",
                s.kind()
            ))),
            None => {
                let s = DirectionSampler::of_kind(kind, obj.dim())?;
                run(obj, reference, &s, schedule, opts)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::DenseMatrix;
    use crate::objectives::make_noisy_quadratic;

    #[test]
    fn step_example() {
        let v = DirectionVector::Canonical {
            index: 0,
            scale: 2f64.sqrt(),
            dim: 2,
        };
        let x = scors_step(&[1.0, 1.0], 0.1, &v, &[2.0, 3.0]);
        assert!((x[0] - 0.6).abs() < 1e-15);
        assert_eq!(x[1], 1.0);
        let v = DirectionVector::Dense(vec![0.3, -1.2]);
        assert_eq!(
            scors_step(&[1.0, 1.0], 0.1, &v, &[0.0, 0.0]),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn factored_step_matches_outer_product() {
        let v = vec![0.3, -1.1, 0.7, 2.0, -0.4, 0.05];
        let g = vec![1.0, 0.5, -2.0, 0.25, 3.0, -1.5];
        let x = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let gamma = 0.37;
        let vvt = DenseMatrix::outer(&v, &v);
        let dg = vvt.mul_vec(&g);
        let want: Vec<f64> = x.iter().zip(&dg).map(|(a, b)| a - gamma * b).collect();
        let got = scors_step(&x, gamma, &DirectionVector::Dense(v), &g);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn costs() {
        assert_eq!(
            coordinate_cost(Method::Scors(DirectionKind::Uniform), 50),
            1
        );
        assert_eq!(
            coordinate_cost(Method::Scors(DirectionKind::NonUniform), 50),
            1
        );
        assert_eq!(
            coordinate_cost(Method::Scors(DirectionKind::Gaussian), 50),
            50
        );
        assert_eq!(
            coordinate_cost(Method::Scors(DirectionKind::Spherical), 50),
            50
        );
        assert_eq!(coordinate_cost(Method::Sgd, 50), 50);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("momentum".parse::<Method>().is_err());
    }

    #[test]
    fn rejects_zero_iterations_and_bad_dims() {
        let (obj, r) = make_noisy_quadratic::<f64>(2, (1.0, 1.0), 1.0, 4, 1).unwrap();
        let s = DirectionSampler::uniform(2).unwrap();
        let sched = StepSchedule::harmonic();
        assert!(matches!(
            run(&obj, &r.x_star, &s, &sched, &RunOptions::new(0, 1)),
            Err(OptimizerError::ZeroIterations)
        ));
        let s3 = DirectionSampler::uniform(3).unwrap();
        assert!(run(&obj, &r.x_star, &s3, &sched, &RunOptions::new(5, 1)).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (obj, r) = make_noisy_quadratic::<f64>(3, (50.0, 100.0), 1.0, 4, 1).unwrap();
        let s = DirectionSampler::gaussian(3).unwrap();
        let sched = StepSchedule::new(50.0, 1.0).unwrap();
        let err = run(&obj, &r.x_star, &s, &sched, &RunOptions::new(10_000, 1)).unwrap_err();
        assert!(matches!(
            err,
            OptimizerError::Diverged { .. } | OptimizerError::NonFinite { .. }
        ));
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::HarnessError;
use crate::optimizer::{step_condition_warnings, InitPolicy, Method, NuPolicy};
use crate::DirectionKind;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SCORS_OUT_DIR";
/// Output directory when neither the config nor the environment names one.
pub const FALLBACK_OUT_DIR: &str = "scors-out";

const KEYS: &[&str] = &[
    "experiment",
    "family",
    "N",
    "d",
    "samplers",
    "c",
    "alpha",
    "iterations",
    "budget",
    "replicates",
    "seed",
    "out",
    "nu_mode",
    "init",
    "init_radius",
    "snapshots",
    "lambda_min",
    "lambda_max",
    "noise",
    "reference",
    "p",
    "grid_min",
    "grid_points",
    "mc_draws",
    "warmup",
    "repetitions",
    "threads",
    "prob_floor",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Convergence,
    Clt,
    Mse,
    GammaCheck,
    Timing,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::Clt => "clt",
            Experiment::Mse => "mse",
            Experiment::GammaCheck => "gamma_check",
            Experiment::Timing => "timing",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "convergence" => Ok(Experiment::Convergence),
            "clt" => Ok(Experiment::Clt),
            "mse" => Ok(Experiment::Mse),
            "gamma_check" => Ok(Experiment::GammaCheck),
            "timing" => Ok(Experiment::Timing),
            _ => Err(format!(
                "unknown experiment {s:?} (expected convergence, clt, mse, gamma_check or timing)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemFamily {
    Logistic,
    Quadratic,
}

impl fmt::Display for ProblemFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemFamily::Logistic => "logistic",
            ProblemFamily::Quadratic => "quadratic",
        })
    }
}

/// Reference point for logistic problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceChoice {
    /// Minimizer of the finite sum, found by Newton's method.
    Empirical,
    /// The parameter that generated the labels.
    Generator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitChoice {
    Zero,
    Gaussian,
}

/// Fully resolved experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub family: ProblemFamily,
    pub n_components: usize,
    pub dim: usize,
    pub samplers: Vec<Method>,
    pub c: f64,
    pub alpha: f64,
    /// Updates per run (clt, mse, timing).
    pub iterations: u64,
    /// Coordinate evaluations per run (convergence).
    pub budget: u64,
    pub replicates: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub nu_mode: NuPolicy,
    pub init: InitChoice,
    pub init_radius: f64,
    pub snapshots: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub noise: f64,
    pub reference: ReferenceChoice,
    /// Moment order for the mse experiment.
    pub p: u32,
    pub grid_min: u64,
    pub grid_points: usize,
    pub mc_draws: usize,
    pub warmup: u64,
    pub repetitions: usize,
    /// Worker threads for replicates; 0 lets the pool decide.
    pub threads: usize,
    pub prob_floor: Option<f64>,
}

impl ExperimentConfig {
    pub fn init_policy(&self) -> InitPolicy<f64> {
        match self.init {
            InitChoice::Zero => InitPolicy::Zero,
            InitChoice::Gaussian => InitPolicy::Gaussian {
                radius: self.init_radius,
            },
        }
    }
}

/// One `key = value` line of a config document.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: String,
    /// 1-based source line; 0 for values set programmatically.
    pub line: usize,
}

/// Parsed but not yet interpreted config text. Keys are checked against
/// the known set at parse time, values only when resolving.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigDocument {
    entries: BTreeMap<String, Entry>,
}

impl ConfigDocument {
    /// Parses `key = value` (or `key: value`) lines. Blank lines and text
    /// after `#` are ignored; values may be wrapped in double quotes.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut doc = ConfigDocument::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let split = content.find(['=', ':']).ok_or_else(|| {
                parse_err(line, format!("expected `key = value`, got {content:?}"))
            })?;
            let key = content[..split].trim();
            let mut value = content[split + 1..].trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if key.is_empty() {
                return Err(parse_err(line, "missing key".into()));
            }
            if !KEYS.contains(&key) {
                return Err(parse_err(line, format!("unknown key {key:?}")));
            }
            if value.is_empty() {
                return Err(parse_err(line, format!("missing value for {key:?}")));
            }
            if let Some(prev) = doc.entries.get(key) {
                return Err(parse_err(
                    line,
                    format!("duplicate key {key:?} (first set on line {})", prev.line),
                ));
            }
            doc.entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(doc)
    }

    /// Sets or replaces a value, as command-line overrides do.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), HarnessError> {
        if !KEYS.contains(&key) {
            return Err(parse_err(0, format!("unknown key {key:?}")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.into(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>, HarnessError>
    where
        V::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<V>()
                .map(Some)
                .map_err(|err| parse_err(e.line, format!("{key}: {err}"))),
        }
    }

    fn count(&self, key: &str) -> Result<Option<u64>, HarnessError> {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        if let Ok(v) = e.value.parse::<u64>() {
            return Ok(Some(v));
        }
        // Accept integral scientific notation such as `1e6`.
        match e.value.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= 2f64.powi(53) => Ok(Some(v as u64)),
            _ => Err(parse_err(
                e.line,
                format!("{key}: expected a non-negative integer, got {:?}", e.value),
            )),
        }
    }

    fn word<V>(&self, key: &str, table: &[(&str, V)]) -> Result<Option<V>, HarnessError>
    where
        V: Copy,
    {
        let Some(e) = self.entries.get(key) else {
            return Ok(None);
        };
        table
            .iter()
            .find(|(name, _)| *name == e.value)
            .map(|(_, v)| Some(*v))
            .ok_or_else(|| {
                let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
                parse_err(
                    e.line,
                    format!(
                        "{key}: expected one of {}, got {:?}",
                        names.join("|"),
                        e.value
                    ),
                )
            })
    }

    /// Interprets the document, filling defaults and checking invariants.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let experiment: Experiment = self
            .parsed("experiment")?
            .ok_or_else(|| HarnessError::Validation("missing required key `experiment`".into()))?;
        let family = self
            .word(
                "family",
                &[
                    ("quadratic", ProblemFamily::Quadratic),
                    ("logistic", ProblemFamily::Logistic),
                ],
            )?
            .unwrap_or(ProblemFamily::Quadratic);
        let samplers = match self.get("samplers") {
            Some(e) => e
                .value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Method>().map_err(|err| parse_err(e.line, err)))
                .collect::<Result<Vec<_>, _>>()?,
            None => match experiment {
                Experiment::Convergence | Experiment::Timing => Method::ALL.to_vec(),
                _ => DirectionKind::ALL
                    .iter()
                    .map(|&k| Method::Scors(k))
                    .collect(),
            },
        };
        let default_iterations = match experiment {
            Experiment::Timing => 1_000_000,
            _ => 100_000,
        };
        let default_replicates = match experiment {
            Experiment::Clt => 400,
            Experiment::Mse => 200,
            _ => 1,
        };
        let out_dir = match self.get("out") {
            Some(e) => PathBuf::from(&e.value),
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR)),
        };
        let cfg = ExperimentConfig {
            experiment,
            family,
            n_components: self.count("N")?.unwrap_or(1000) as usize,
            dim: self.count("d")?.unwrap_or(10) as usize,
            samplers,
            c: self.parsed("c")?.unwrap_or(1.0),
            alpha: self.parsed("alpha")?.unwrap_or(1.0),
            iterations: self.count("iterations")?.unwrap_or(default_iterations),
            budget: self.count("budget")?.unwrap_or(1_000_000),
            replicates: self.count("replicates")?.unwrap_or(default_replicates) as usize,
            seed: self.count("seed")?.unwrap_or(1),
            out_dir,
            nu_mode: self
                .word(
                    "nu_mode",
                    &[
                        ("static", NuPolicy::Static),
                        ("adaptive", NuPolicy::Adaptive),
                    ],
                )?
                .unwrap_or(NuPolicy::Static),
            init: self
                .word(
                    "init",
                    &[
                        ("zero", InitChoice::Zero),
                        ("gaussian", InitChoice::Gaussian),
                    ],
                )?
                .unwrap_or(InitChoice::Zero),
            init_radius: self.parsed("init_radius")?.unwrap_or(1.0),
            snapshots: self.count("snapshots")?.unwrap_or(200) as usize,
            lambda_min: self.parsed("lambda_min")?.unwrap_or(0.75),
            lambda_max: self.parsed("lambda_max")?.unwrap_or(2.0),
            noise: self.parsed("noise")?.unwrap_or(1.0),
            reference: self
                .word(
                    "reference",
                    &[
                        ("empirical", ReferenceChoice::Empirical),
                        ("generator", ReferenceChoice::Generator),
                    ],
                )?
                .unwrap_or(ReferenceChoice::Empirical),
            p: self.count("p")?.unwrap_or(1) as u32,
            grid_min: self.count("grid_min")?.unwrap_or(10),
            grid_points: self.count("grid_points")?.unwrap_or(25) as usize,
            mc_draws: self.count("mc_draws")?.unwrap_or(1_000_000) as usize,
            warmup: self.count("warmup")?.unwrap_or(10_000),
            repetitions: self.count("repetitions")?.unwrap_or(5) as usize,
            threads: self.count("threads")?.unwrap_or(0) as usize,
            prob_floor: self.parsed("prob_floor")?,
        };
        validate(&cfg)?;
        Ok(cfg)
    }
}

fn parse_err(line: usize, message: String) -> HarnessError {
    HarnessError::Parse { line, message }
}

/// Parses and resolves a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    ConfigDocument::parse(text)?.resolve()
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

/// Checks the config invariants; the message names the violated one.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    if !(cfg.alpha > 0.5 && cfg.alpha <= 1.0) {
        return Err(invalid(format!(
            "alpha must lie in (1/2, 1] for an admissible step schedule, got {}",
            cfg.alpha
        )));
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(invalid(format!("c must be positive, got {}", cfg.c)));
    }
    for (name, v) in [
        ("N", cfg.n_components as u64),
        ("d", cfg.dim as u64),
        ("iterations", cfg.iterations),
        ("budget", cfg.budget),
        ("replicates", cfg.replicates as u64),
        ("snapshots", cfg.snapshots as u64),
        ("p", cfg.p as u64),
        ("grid_min", cfg.grid_min),
        ("grid_points", cfg.grid_points as u64),
        ("mc_draws", cfg.mc_draws as u64),
        ("repetitions", cfg.repetitions as u64),
    ] {
        if v == 0 {
            return Err(invalid(format!("{name} must be positive")));
        }
    }
    if cfg.samplers.is_empty() {
        return Err(invalid("samplers must list at least one method"));
    }
    for (i, m) in cfg.samplers.iter().enumerate() {
        if cfg.samplers[..i].contains(m) {
            return Err(invalid(format!("sampler {m} listed twice")));
        }
    }
    if cfg.family == ProblemFamily::Quadratic {
        if cfg.n_components < 2 {
            return Err(invalid("the quadratic family needs N ≥ 2"));
        }
        if !(cfg.lambda_min > 0.0 && cfg.lambda_max >= cfg.lambda_min && cfg.lambda_max.is_finite())
        {
            return Err(invalid(format!(
                "need 0 < lambda_min ≤ lambda_max, got [{}, {}]",
                cfg.lambda_min, cfg.lambda_max
            )));
        }
        if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
            return Err(invalid(format!(
                "noise must be non-negative, got {}",
                cfg.noise
            )));
        }
    }
    if !(cfg.init_radius >= 0.0 && cfg.init_radius.is_finite()) {
        return Err(invalid("init_radius must be non-negative"));
    }
    if let Some(f) = cfg.prob_floor {
        if !(f > 0.0 && f * cfg.dim as f64 <= 1.0) {
            return Err(invalid(format!("prob_floor must lie in (0, 1/d], got {f}")));
        }
    }
    let has_nu = cfg
        .samplers
        .contains(&Method::Scors(DirectionKind::NonUniform));
    match cfg.experiment {
        Experiment::Clt => {
            if cfg.c != 1.0 || cfg.alpha != 1.0 {
                return Err(invalid(format!(
                    "the clt experiment needs γ_n = 1/n (c = 1, alpha = 1), got c = {}, alpha = {}",
                    cfg.c, cfg.alpha
                )));
            }
            if cfg.replicates < 2 {
                return Err(invalid("the clt experiment needs at least 2 replicates"));
            }
            if cfg.iterations < 2 {
                return Err(invalid("the clt experiment needs iterations ≥ 2"));
            }
        }
        Experiment::Mse => {
            if cfg.grid_min.saturating_mul(100) > cfg.iterations {
                return Err(invalid(format!(
                    "the mse grid needs iterations ≥ 100 · grid_min, got {} and {}",
                    cfg.iterations, cfg.grid_min
                )));
            }
        }
        Experiment::GammaCheck => {
            if cfg.samplers.contains(&Method::Sgd) {
                return Err(invalid(
                    "gamma_check applies to direction samplers only, remove SGD",
                ));
            }
        }
        Experiment::Timing => {
            if cfg.iterations < 100_000 {
                return Err(invalid(format!(
                    "timing needs iterations ≥ 100000 for stable averages, got {}",
                    cfg.iterations
                )));
            }
        }
        Experiment::Convergence => {}
    }
    if has_nu
        && cfg.nu_mode == NuPolicy::Adaptive
        && matches!(cfg.experiment, Experiment::Clt | Experiment::GammaCheck)
    {
        return Err(invalid(
            "the adaptive NU policy does not draw i.i.d. directions; use nu_mode = static",
        ));
    }
    if has_nu
        && cfg.init == InitChoice::Gaussian
        && matches!(cfg.experiment, Experiment::Clt | Experiment::GammaCheck)
    {
        return Err(invalid(
            "static NU probabilities need a deterministic starting point; use init = zero",
        ));
    }
    Ok(())
}

/// Violated step-constant conditions for moment order `p`, one message each.
/// Silent when `mu` is unknown.
pub fn validate_step_conditions(cfg: &ExperimentConfig, mu: Option<f64>, p: u32) -> Vec<String> {
    step_condition_warnings(cfg.c, cfg.alpha, mu, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config("experiment: convergence\nfamily: quadratic\nd: 3\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::Convergence);
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.n_components, 1000);
        assert_eq!((cfg.c, cfg.alpha, cfg.seed), (1.0, 1.0, 1));
        assert_eq!(cfg.samplers.len(), 5);
    }

    #[test]
    fn alpha_half_is_a_validation_error() {
        let err = parse_config("experiment = mse\nalpha = 0.5\n").unwrap_err();
        match err {
            HarnessError::Validation(m) => assert!(m.contains("(1/2, 1]"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("experiment = mse\n\nmomentum = 0.9\n").unwrap_err();
        match err {
            HarnessError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("momentum"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicates_and_bad_values() {
        assert!(matches!(
            parse_config("experiment = mse\nseed = 1\nseed = 2"),
            Err(HarnessError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_config("experiment = mse\nd = three"),
            Err(HarnessError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("experiment = mse\nsamplers = U, X"),
            Err(HarnessError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("family = logistic"),
            Err(HarnessError::Validation(_))
        ));
    }

    #[test]
    fn comments_quotes_and_scientific_counts() {
        let cfg = parse_config(
            "# header\nexperiment = \"convergence\"  # trailing\nbudget = 2e6\nsamplers = U,SGD\n",
        )
        .unwrap();
        assert_eq!(cfg.budget, 2_000_000);
        assert_eq!(
            cfg.samplers,
            vec![Method::Scors(DirectionKind::Uniform), Method::Sgd]
        );
        assert!(parse_config("experiment = convergence\nbudget = 1.5").is_err());
    }

    #[test]
    fn experiment_specific_checks() {
        assert!(parse_config("experiment = clt\nc = 2").is_err());
        assert!(parse_config("experiment = clt\nnu_mode = adaptive").is_err());
        assert!(parse_config("experiment = clt\nnu_mode = adaptive\nsamplers = U").is_ok());
        assert!(parse_config("experiment = timing\niterations = 1000").is_err());
        assert!(parse_config("experiment = gamma_check\nsamplers = U,SGD").is_err());
    }

    #[test]
    fn step_condition_examples() {
        let mut cfg = parse_config("experiment = mse").unwrap();
        assert!(validate_step_conditions(&cfg, Some(0.75), 1).is_empty());
        let w = validate_step_conditions(&cfg, Some(0.4), 1);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("2cμ > 1"));
        cfg.c = 1.2;
        let w = validate_step_conditions(&cfg, Some(1.0), 2);
        assert!(w.iter().any(|m| m.contains("pcμ ≤ 2^α")));
        assert!(validate_step_conditions(&cfg, None, 2).is_empty());
    }
}

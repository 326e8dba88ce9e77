//! Data-generating processes, their population truths, and a Monte Carlo
//! harness measuring bias, spread and interval coverage of the estimators.
//!
//! Two designs are built in:
//!
//! * `Illustrative`: `p = 10` independent `U[-1, 1]` covariates and
//!   `Y = 0.4 X1 + sqrt(X2 + 1) + 2 X3^2 + e`, `e ~ N(0, 1)`. The mean is
//!   additive in independent covariates, so importances are closed form.
//! * `Main`: `p = 5` equicorrelated standard normals (correlation 0.4),
//!   `mu(x) = (x1 + 0.5)(x2 + 1) + sqrt(max(x2 + 5, 0)) + 5 sqrt((x3 - 0.2)^2 + 1)`
//!   and conditional variance `1 + |x4| + |x5|`. Importances come from
//!   conditional Monte Carlo over the exact Gaussian law of `X_S | X_{-S}`.
//!
//! All truths are on the R-squared scale.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{rank, select};
use crate::bootstrap::{bootstrap_interval, partial_bootstrap, BootstrapPlan, BootstrapTarget};
use crate::data::{Dataset, Ranking, Subset};
use crate::error::{invalid_arg, Result};
use crate::estimation::{auvroc, estimate_selection, estimate_vroc, CrossFitPlan, Mode, DEFAULT_FOLDS};
use crate::inference::{
    auvroc_interval, covariance_vroc, normal_quantile, variance_selection, wald_interval, ConfidenceInterval,
    IntervalMethod,
};
use crate::learners::LearnerSpec;
use crate::metrics::{OutcomeKind, RSquared};
use crate::rng::SeedSpec;

pub const MAIN_CORRELATION: f64 = 0.4;
const ILLUSTRATIVE_P: usize = 10;
const MAIN_P: usize = 5;
const OUTER_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    Illustrative,
    Main,
}

impl DgpKind {
    pub fn p(self) -> usize {
        match self {
            DgpKind::Illustrative => ILLUSTRATIVE_P,
            DgpKind::Main => MAIN_P,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Illustrative => "illustrative",
            DgpKind::Main => "main",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: SeedSpec,
}

pub fn illustrative_mean(x: &[f64]) -> f64 {
    0.4 * x[0] + (x[1] + 1.0).sqrt() + 2.0 * x[2] * x[2]
}

pub fn main_mean(x: &[f64]) -> f64 {
    (x[0] + 0.5) * (x[1] + 1.0) + (x[1] + 5.0).max(0.0).sqrt() + 5.0 * ((x[2] - 0.2).powi(2) + 1.0).sqrt()
}

pub fn main_variance(x: &[f64]) -> f64 {
    1.0 + x[3].abs() + x[4].abs()
}

/// Equicorrelated normals: `X_j = sqrt(1 - rho) Z_j + sqrt(rho) W`.
fn equicorrelated<R: Rng>(rng: &mut R, out: &mut [f64]) {
    let w: f64 = rng.sample(StandardNormal);
    let (a, b) = (MAIN_CORRELATION.sqrt(), (1.0 - MAIN_CORRELATION).sqrt());
    for x in out.iter_mut() {
        *x = a * w + b * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Draws an i.i.d. sample with columns named `X1..Xp`.
pub fn draw(spec: &DgpSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(invalid_arg("sample size must be positive"));
    }
    let p = spec.kind.p();
    let mut rng = spec.seed.rng();
    let mut x = vec![0.0; spec.n * p];
    let mut y = Vec::with_capacity(spec.n);
    for row in x.chunks_mut(p) {
        let e: f64 = rng.sample(StandardNormal);
        match spec.kind {
            DgpKind::Illustrative => {
                row.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
                y.push(illustrative_mean(row) + e);
            }
            DgpKind::Main => {
                equicorrelated(&mut rng, row);
                y.push(main_mean(row) + main_variance(row).sqrt() * e);
            }
        }
    }
    let names = (1..=p).map(|j| format!("X{j}")).collect();
    Dataset::new(x, y, p)?.with_column_names(names)
}

/// Variance contributed by X1, X2 and X3 in the illustrative design; noise adds 1.
pub const ILLUSTRATIVE_COMPONENTS: [f64; 3] = [0.16 / 3.0, 1.0 / 9.0, 16.0 / 45.0];

pub fn illustrative_total_variance() -> f64 {
    ILLUSTRATIVE_COMPONENTS.iter().sum::<f64>() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Analytic,
    ConditionalMc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub outer_draws: usize,
    pub inner_draws: usize,
    /// Draws used for `Var(mu(X))`, the denominator of every truth.
    pub denominator_draws: usize,
    pub seed: u64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            outer_draws: 200_000,
            inner_draws: 64,
            denominator_draws: 2_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub subset: Subset,
    pub psi: f64,
    pub v_full: f64,
    pub v_reduced: f64,
    pub method: OracleMethod,
    /// Monte Carlo standard error of `psi`; 0 for closed forms.
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        count: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let d = v - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return o;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * o.count / count,
            m2: self.m2 + o.m2 + d * d * self.count * o.count / count,
        }
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.count - 1.0)
    }
}

/// Chunked, order-independent reduction of `f` over `draws` draws.
fn chunked_moments<F>(draws: usize, seed: &SeedSpec, f: F) -> Moments
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let chunks = draws.div_ceil(OUTER_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.derive("chunk", c as u64).rng();
            let len = OUTER_CHUNK.min(draws - c * OUTER_CHUNK);
            let mut m = Moments::EMPTY;
            for _ in 0..len {
                m.push(f(&mut rng));
            }
            m
        })
        .collect();
    parts.into_iter().fold(Moments::EMPTY, Moments::merge)
}

/// Population importances for one design, computed lazily and cached.
pub struct TruthOracle {
    kind: DgpKind,
    settings: OracleSettings,
    denominator: OnceLock<(f64, f64, f64)>,
    cache: Mutex<HashMap<Subset, Arc<OnceLock<OracleEntry>>>>,
}

impl TruthOracle {
    pub fn new(kind: DgpKind, settings: OracleSettings) -> Self {
        Self {
            kind,
            settings,
            denominator: OnceLock::new(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn kind(&self) -> DgpKind {
        self.kind
    }

    /// `(Var(mu), Var(Y), relative standard error of Var(mu))`.
    fn denominator(&self) -> (f64, f64, f64) {
        *self.denominator.get_or_init(|| match self.kind {
            DgpKind::Illustrative => {
                let total = illustrative_total_variance();
                (total - 1.0, total, 0.0)
            }
            DgpKind::Main => {
                let seed = SeedSpec::new(self.settings.seed, "oracle-denominator", 0);
                let m = chunked_moments(self.settings.denominator_draws, &seed, |rng| {
                    let mut x = [0.0; MAIN_P];
                    equicorrelated(rng, &mut x);
                    main_mean(&x)
                });
                let var_mu = m.variance();
                // E|X| = sqrt(2 / pi) for a standard normal
                let noise = 1.0 + 2.0 * (2.0 / std::f64::consts::PI).sqrt();
                // sampling variance of a variance estimate is Var((mu - E mu)^2) / N
                let spread = chunked_moments(
                    self.settings.denominator_draws.min(200_000),
                    &seed.derive("spread", 0),
                    |rng| {
                        let mut x = [0.0; MAIN_P];
                        equicorrelated(rng, &mut x);
                        (main_mean(&x) - m.mean).powi(2)
                    },
                );
                let rel = (spread.variance() / m.count).sqrt() / var_mu;
                (var_mu, var_mu + noise, rel)
            }
        })
    }

    pub fn v_full(&self) -> f64 {
        let (var_mu, var_y, _) = self.denominator();
        var_mu / var_y
    }

    pub fn entry(&self, subset: &Subset) -> Result<OracleEntry> {
        let p = self.kind.p();
        if subset.indices().iter().any(|&j| j >= p) {
            return Err(invalid_arg(format!("subset {subset} out of range for p = {p}")));
        }
        let cell = self
            .cache
            .lock()
            .expect("oracle cache poisoned")
            .entry(subset.clone())
            .or_default()
            .clone();
        Ok(cell.get_or_init(|| self.compute(subset)).clone())
    }

    pub fn psi(&self, subset: &Subset) -> Result<f64> {
        Ok(self.entry(subset)?.psi)
    }

    /// Importances of the prefixes of `ranking`.
    pub fn sequence(&self, ranking: &Ranking) -> Result<Vec<f64>> {
        (1..=ranking.len()).map(|j| self.psi(&ranking.prefix(j)?)).collect()
    }

    pub fn auvroc(&self, ranking: &Ranking) -> Result<f64> {
        auvroc(&self.sequence(ranking)?)
    }

    fn compute(&self, subset: &Subset) -> OracleEntry {
        let (var_mu, var_y, rel) = self.denominator();
        let v_full = var_mu / var_y;
        let (psi, std_error, method) = match self.kind {
            DgpKind::Illustrative => {
                let removed: f64 = subset
                    .indices()
                    .iter()
                    .filter_map(|&j| ILLUSTRATIVE_COMPONENTS.get(j))
                    .sum();
                (removed / var_y, 0.0, OracleMethod::Analytic)
            }
            DgpKind::Main if subset.is_empty() => (0.0, 0.0, OracleMethod::ConditionalMc),
            DgpKind::Main if subset.len() == MAIN_P => (v_full, v_full * rel, OracleMethod::ConditionalMc),
            DgpKind::Main => {
                let (num, se) = self.expected_conditional_variance(subset);
                let psi = num / var_y;
                (
                    psi,
                    psi * ((se / num).powi(2) + rel * rel).sqrt(),
                    OracleMethod::ConditionalMc,
                )
            }
        };
        OracleEntry {
            subset: subset.clone(),
            psi,
            v_full,
            v_reduced: v_full - psi,
            method,
            std_error,
        }
    }

    /// `E[Var(mu(X) | X_{-S})]` with its Monte Carlo standard error. The
    /// outer draws share one stream across subsets so differences between
    /// subsets carry less noise.
    fn expected_conditional_variance(&self, subset: &Subset) -> (f64, f64) {
        let inner = self.settings.inner_draws.max(2);
        let rest = subset.complement(MAIN_P);
        let (a, b) = (MAIN_CORRELATION.sqrt(), (1.0 - MAIN_CORRELATION).sqrt());
        // W | X_{-S} is normal; X_S = a W + b Z_S given W
        let precision = 1.0 + rest.len() as f64 * a * a / (b * b);
        let w_sd = precision.sqrt().recip();
        let seed = SeedSpec::new(self.settings.seed, "oracle-outer", 0);
        let m = chunked_moments(self.settings.outer_draws, &seed, |rng| {
            let mut x = [0.0; MAIN_P];
            equicorrelated(rng, &mut x);
            let w_mean = a / (b * b) * rest.indices().iter().map(|&j| x[j]).sum::<f64>() / precision;
            let mut inner_m = Moments::EMPTY;
            for _ in 0..inner {
                let w = w_mean + w_sd * rng.sample::<f64, _>(StandardNormal);
                for &j in subset.indices() {
                    x[j] = a * w + b * rng.sample::<f64, _>(StandardNormal);
                }
                inner_m.push(main_mean(&x));
            }
            inner_m.variance()
        });
        (m.mean, (m.variance() / m.count).sqrt())
    }
}

/// Convenience wrapper building a one-off oracle.
pub fn oracle_psi(kind: DgpKind, subset: &Subset, settings: &OracleSettings) -> Result<OracleEntry> {
    TruthOracle::new(kind, settings.clone()).entry(subset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBootstrap {
    pub replicates: usize,
    #[serde(default = "default_bootstrap_methods")]
    pub methods: Vec<IntervalMethod>,
}

fn default_bootstrap_methods() -> Vec<IntervalMethod> {
    vec![
        IntervalMethod::Efron,
        IntervalMethod::Percentile,
        IntervalMethod::PercentileT,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpKind,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    pub targets: Vec<BootstrapTarget>,
    #[serde(default = "LearnerSpec::boosted")]
    pub learner: LearnerSpec,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub bootstrap: Option<ExperimentBootstrap>,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_grid() -> Vec<usize> {
    vec![500, 1000, 2000, 4000]
}
fn default_reps() -> usize {
    200
}
fn default_modes() -> Vec<Mode> {
    vec![Mode::Crossfit]
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_level() -> f64 {
    0.95
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(invalid_arg(format!("need at least 2 replications, got {}", self.reps)));
        }
        if self.n_grid.is_empty() || self.modes.is_empty() || self.targets.is_empty() {
            return Err(invalid_arg("n_grid, modes and targets must be nonempty"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid_arg(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

/// One estimate from one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub mode: Mode,
    pub target: usize,
    pub rep: usize,
    pub estimate: f64,
    pub truth: f64,
    pub se: f64,
    pub intervals: Vec<ConfidenceInterval>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip)]
    pub seconds: f64,
}

impl ReplicationRecord {
    fn failed(n: usize, mode: Mode, target: usize, rep: usize, error: String, seconds: f64) -> Self {
        Self {
            n,
            mode,
            target,
            rep,
            estimate: f64::NAN,
            truth: f64::NAN,
            se: f64::NAN,
            intervals: Vec::new(),
            error: Some(error),
            seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub mode: Mode,
    pub statistic: String,
    pub algorithm: String,
    pub reps: usize,
    pub failures: usize,
    /// More than 1% of replications failed.
    pub flagged: bool,
    pub mean_truth: f64,
    pub mean_estimate: f64,
    pub sqrt_n_bias: f64,
    pub sqrt_n_sd: f64,
    pub coverage: BTreeMap<String, f64>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub replications: usize,
    pub cells: Vec<CellSummary>,
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

pub fn method_name(m: IntervalMethod) -> &'static str {
    match m {
        IntervalMethod::Wald => "wald",
        IntervalMethod::Uniform => "uniform",
        IntervalMethod::Efron => "efron",
        IntervalMethod::Percentile => "percentile",
        IntervalMethod::PercentileT => "percentile_t",
    }
}

/// Aggregates the replications of one cell. Failed replications are counted
/// but excluded from the statistics.
pub fn summarize_cell(
    n: usize,
    mode: Mode,
    statistic: &str,
    algorithm: &str,
    records: &[&ReplicationRecord],
) -> CellSummary {
    let ok: Vec<&&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let failures = records.len() - ok.len();
    let m = ok.len() as f64;
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / m;
    let mean_truth = mean(&|r| r.truth);
    let mean_estimate = mean(&|r| r.estimate);
    let bias = mean(&|r| r.estimate - r.truth);
    let sd = if ok.len() > 1 {
        (ok.iter().map(|r| (r.estimate - mean_estimate).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let mut coverage = BTreeMap::new();
    if let Some(first) = ok.first() {
        for (k, ci) in first.intervals.iter().enumerate() {
            let hits = ok
                .iter()
                .filter(|r| r.intervals.get(k).is_some_and(|c| c.contains(r.truth)))
                .count();
            coverage.insert(method_name(ci.method).to_string(), hits as f64 / m);
        }
    }
    let rootn = (n as f64).sqrt();
    CellSummary {
        n,
        mode,
        statistic: statistic.to_string(),
        algorithm: algorithm.to_string(),
        reps: records.len(),
        failures,
        flagged: failures as f64 > 0.01 * records.len() as f64,
        mean_truth,
        mean_estimate,
        sqrt_n_bias: rootn * bias,
        sqrt_n_sd: rootn * sd,
        coverage,
        seconds: records.iter().map(|r| r.seconds).sum(),
    }
}

struct Outcome {
    estimate: f64,
    truth: f64,
    se: f64,
    wald: ConfidenceInterval,
}

fn estimate_target(
    plan: &CrossFitPlan<'_>,
    data: &Dataset,
    target: &BootstrapTarget,
    oracle: &TruthOracle,
    level: f64,
    seed: &SeedSpec,
) -> Result<Outcome> {
    let n = data.n();
    match target {
        BootstrapTarget::SelectionPsi { selector } | BootstrapTarget::Ppsv { selector } => {
            let subset = select(selector, data, seed)?;
            let est = estimate_selection(plan, &RSquared, &subset)?;
            let sigma2 = variance_selection(&est);
            let wald = wald_interval(est.psi, sigma2, n, level)?;
            let se = (sigma2 / n as f64).sqrt();
            let truth = oracle.psi(&subset)?;
            if let BootstrapTarget::Ppsv { .. } = target {
                let size = subset.len();
                if size == 0 {
                    return Err(crate::error::Error::UndefinedPpsv);
                }
                let s = size as f64;
                Ok(Outcome {
                    estimate: est.psi / s,
                    truth: truth / s,
                    se: se / s,
                    wald: ConfidenceInterval {
                        lower: wald.lower / s,
                        upper: wald.upper / s,
                        ..wald
                    },
                })
            } else {
                Ok(Outcome {
                    estimate: est.psi,
                    truth,
                    se,
                    wald,
                })
            }
        }
        BootstrapTarget::Auvroc { ranker } => {
            let ranking = rank(ranker, data, seed)?;
            let vroc = estimate_vroc(plan, &RSquared, &ranking)?;
            let sigma = covariance_vroc(&vroc);
            let wald = auvroc_interval(&vroc, &sigma, level)?;
            let z = normal_quantile(0.5 + level / 2.0);
            Ok(Outcome {
                estimate: vroc.auvroc.unwrap_or(f64::NAN),
                truth: oracle.auvroc(&ranking)?,
                se: wald.width() / (2.0 * z),
                wald,
            })
        }
    }
}

fn run_replication(config: &ExperimentConfig, oracle: &TruthOracle, n: usize, rep: usize) -> Vec<ReplicationRecord> {
    let base = SeedSpec::new(config.seed, "experiment", 0);
    let spec = DgpSpec {
        kind: config.dgp,
        n,
        seed: base.derive(&format!("data/n{n}"), rep as u64),
    };
    let data = match draw(&spec) {
        Ok(d) => d,
        Err(e) => {
            return config
                .modes
                .iter()
                .flat_map(|&mode| (0..config.targets.len()).map(move |t| (mode, t)))
                .map(|(mode, t)| ReplicationRecord::failed(n, mode, t, rep, e.to_string(), 0.0))
                .collect()
        }
    };
    let mut out = Vec::new();
    for &mode in &config.modes {
        let plan_seed = base.derive(&format!("plan/n{n}"), rep as u64);
        let plan = match mode {
            Mode::Plugin => CrossFitPlan::plugin(&data, config.learner.clone(), OutcomeKind::Continuous, plan_seed),
            Mode::Crossfit => CrossFitPlan::crossfit(
                &data,
                config.learner.clone(),
                OutcomeKind::Continuous,
                config.folds,
                plan_seed,
            ),
        };
        for (t, target) in config.targets.iter().enumerate() {
            let start = Instant::now();
            let alg_seed = base.derive(&format!("algorithm/n{n}/t{t}"), rep as u64);
            let result = plan.as_ref().map_err(|e| e.to_string()).and_then(|plan| {
                let outcome =
                    estimate_target(plan, &data, target, oracle, config.level, &alg_seed).map_err(|e| e.to_string())?;
                let mut intervals = vec![outcome.wald];
                if let Some(b) = &config.bootstrap {
                    let boot = BootstrapPlan {
                        replicates: b.replicates,
                        seed: base.derive(&format!("bootstrap/n{n}/t{t}/{mode:?}"), rep as u64),
                    };
                    let draws = partial_bootstrap(plan, &RSquared, target, &boot).map_err(|e| e.to_string())?;
                    for &m in &b.methods {
                        intervals.push(
                            bootstrap_interval(&draws, outcome.estimate, outcome.se, m, config.level)
                                .map_err(|e| e.to_string())?,
                        );
                    }
                }
                Ok((outcome, intervals))
            });
            let seconds = start.elapsed().as_secs_f64();
            out.push(match result {
                Ok((o, intervals)) => ReplicationRecord {
                    n,
                    mode,
                    target: t,
                    rep,
                    estimate: o.estimate,
                    truth: o.truth,
                    se: o.se,
                    intervals,
                    error: None,
                    seconds,
                },
                Err(e) => ReplicationRecord::failed(n, mode, t, rep, e, seconds),
            });
        }
    }
    out
}

/// Runs every `(n, mode, target)` cell for `config.reps` independent
/// datasets. Datasets are shared across modes and targets within a
/// replication. The report depends only on the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let oracle = TruthOracle::new(config.dgp, config.oracle.clone());
    run_experiment_with_oracle(config, &oracle)
}

pub fn run_experiment_with_oracle(config: &ExperimentConfig, oracle: &TruthOracle) -> Result<ExperimentReport> {
    config.validate()?;
    if oracle.kind() != config.dgp {
        return Err(invalid_arg("oracle built for a different design"));
    }
    let mut records = Vec::new();
    for &n in &config.n_grid {
        let per_rep: Vec<Vec<ReplicationRecord>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| run_replication(config, oracle, n, rep))
            .collect();
        records.extend(per_rep.into_iter().flatten());
    }
    let mut cells = Vec::new();
    for &n in &config.n_grid {
        for &mode in &config.modes {
            for (t, target) in config.targets.iter().enumerate() {
                let group: Vec<&ReplicationRecord> = records
                    .iter()
                    .filter(|r| r.n == n && r.mode == mode && r.target == t)
                    .collect();
                cells.push(summarize_cell(n, mode, target.name(), target.algorithm_name(), &group));
            }
        }
    }
    Ok(ExperimentReport {
        replications: config.reps,
        cells,
        records,
    })
}

impl ExperimentReport {
    /// One row per cell and statistic.
    pub fn to_csv(&self, timings: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "mode", "statistic", "algorithm", "quantity", "value"])?;
        for c in &self.cells {
            let mode = match c.mode {
                Mode::Plugin => "plugin",
                Mode::Crossfit => "crossfit",
            };
            let mut rows: Vec<(String, f64)> = vec![
                ("reps".into(), c.reps as f64),
                ("failures".into(), c.failures as f64),
                ("mean_truth".into(), c.mean_truth),
                ("mean_estimate".into(), c.mean_estimate),
                ("sqrt_n_bias".into(), c.sqrt_n_bias),
                ("sqrt_n_sd".into(), c.sqrt_n_sd),
            ];
            rows.extend(c.coverage.iter().map(|(m, v)| (format!("coverage_{m}"), *v)));
            if timings {
                rows.push(("seconds".into(), c.seconds));
            }
            for (q, v) in rows {
                w.write_record([
                    c.n.to_string(),
                    mode.into(),
                    c.statistic.clone(),
                    c.algorithm.clone(),
                    q,
                    v.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self, timings: bool) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if timings {
            for (cell, summary) in value["cells"].as_array_mut().into_iter().flatten().zip(&self.cells) {
                cell["seconds"] = summary.seconds.into();
            }
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn cell(&self, n: usize, mode: Mode, statistic: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.mode == mode && c.statistic == statistic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{RankerSpec, SelectorSpec};

    fn sub(idx: &[usize], p: usize) -> Subset {
        Subset::new(idx.to_vec(), p).unwrap()
    }

    #[test]
    fn illustrative_closed_forms() {
        // exact rationals: components 2/75, 1/9, 16/45 over a total of 1.52 (= 38/25)
        let total = 38.0 / 25.0;
        assert!((illustrative_total_variance() - total).abs() < 1e-12);
        let o = TruthOracle::new(DgpKind::Illustrative, OracleSettings::default());
        let p = 10;
        assert!((o.psi(&sub(&[1], p)).unwrap() - (1.0 / 9.0) / total).abs() < 1e-12);
        assert!((o.psi(&sub(&[0, 1], p)).unwrap() - (2.0 / 75.0 * 2.0 + 1.0 / 9.0) / total).abs() < 1e-12);
        assert!((o.psi(&sub(&[0, 1, 2], p)).unwrap() - 0.52 / total).abs() < 1e-12);
        assert!((o.psi(&sub(&[2], p)).unwrap() - (16.0 / 45.0) / total).abs() < 1e-12);
        assert!((o.psi(&sub(&[0, 1, 2, 7], p)).unwrap() - o.v_full()).abs() < 1e-12);
        assert_eq!(o.psi(&Subset::empty()).unwrap(), 0.0);
        assert_eq!(o.entry(&sub(&[4], p)).unwrap().method, OracleMethod::Analytic);
    }

    #[test]
    fn illustrative_draws_match_design() {
        let d = draw(&DgpSpec {
            kind: DgpKind::Illustrative,
            n: 20_000,
            seed: SeedSpec::new(1, "sim-test", 0),
        })
        .unwrap();
        assert_eq!(d.p(), 10);
        assert!((0..d.n()).all(|i| d.row(i).iter().all(|v| (-1.0..=1.0).contains(v))));
        let y = d.y();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 1.52).abs() < 0.05, "{var}");
    }

    #[test]
    fn main_draws_are_equicorrelated() {
        let d = draw(&DgpSpec {
            kind: DgpKind::Main,
            n: 100_000,
            seed: SeedSpec::new(2, "sim-test", 0),
        })
        .unwrap();
        let (a, b) = (d.column(0), d.column(1));
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        let r = cov / (va * vb).sqrt();
        assert!((r - 0.4).abs() < 0.01, "{r}");
    }

    #[test]
    fn main_conditional_variance_near_one_when_x4_x5_vanish() {
        let d = draw(&DgpSpec {
            kind: DgpKind::Main,
            n: 400_000,
            seed: SeedSpec::new(3, "sim-test", 0),
        })
        .unwrap();
        let resid: Vec<f64> = (0..d.n())
            .filter(|&i| d.get(i, 3).abs() < 0.05 && d.get(i, 4).abs() < 0.05)
            .map(|i| d.y()[i] - main_mean(d.row(i)))
            .collect();
        let m = resid.len() as f64;
        let var = resid.iter().map(|r| r * r).sum::<f64>() / m;
        assert!(resid.len() > 200);
        assert!((var - 1.0).abs() < 0.15, "{var} from {m} rows");
    }

    fn small_settings() -> OracleSettings {
        OracleSettings {
            outer_draws: 20_000,
            inner_draws: 32,
            denominator_draws: 200_000,
            seed: 7,
        }
    }

    #[test]
    fn main_oracle_is_monotone_and_anchored() {
        let o = TruthOracle::new(DgpKind::Main, small_settings());
        assert_eq!(o.psi(&Subset::empty()).unwrap(), 0.0);
        let chain = [
            vec![2],
            vec![0, 2],
            vec![0, 1, 2],
            vec![0, 1, 2, 3],
            vec![0, 1, 2, 3, 4],
        ];
        let seq: Vec<f64> = chain.iter().map(|s| o.psi(&sub(s, 5)).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[0] < w[1]), "{seq:?}");
        assert!((seq[4] - o.v_full()).abs() < 1e-12);
        // coarse check against the reference value at low precision
        assert!((seq[2] - 0.66).abs() < 0.03, "{seq:?}");
    }

    #[test]
    fn oracle_is_deterministic() {
        let a = TruthOracle::new(DgpKind::Main, small_settings())
            .entry(&sub(&[0, 3], 5))
            .unwrap();
        let b = TruthOracle::new(DgpKind::Main, small_settings())
            .entry(&sub(&[0, 3], 5))
            .unwrap();
        assert_eq!(a, b);
        assert!(a.std_error > 0.0 && a.std_error < 0.01);
    }

    #[test]
    fn oracle_rejects_bad_subsets() {
        let o = TruthOracle::new(DgpKind::Main, small_settings());
        assert!(o.psi(&sub(&[7], 10)).is_err());
    }

    fn injected(truth: f64, n: usize) -> Vec<ReplicationRecord> {
        (0..10)
            .map(|rep| ReplicationRecord {
                n,
                mode: Mode::Crossfit,
                target: 0,
                rep,
                estimate: truth,
                truth,
                se: 0.0,
                intervals: vec![ConfidenceInterval {
                    lower: truth,
                    upper: truth,
                    level: 0.95,
                    method: IntervalMethod::Wald,
                }],
                error: None,
                seconds: 0.0,
            })
            .collect()
    }

    #[test]
    fn harness_self_test_constant_estimator() {
        let recs = injected(0.66, 1000);
        let refs: Vec<&ReplicationRecord> = recs.iter().collect();
        let c = summarize_cell(1000, Mode::Crossfit, "psi", "fixed", &refs);
        assert_eq!(c.sqrt_n_bias, 0.0);
        assert_eq!(c.sqrt_n_sd, 0.0);
        assert_eq!(c.coverage["wald"], 1.0);
        assert!(!c.flagged);
    }

    #[test]
    fn failures_are_counted_and_flagged() {
        let mut recs = injected(0.5, 100);
        recs.push(ReplicationRecord::failed(
            100,
            Mode::Crossfit,
            0,
            10,
            "boom".into(),
            0.0,
        ));
        let refs: Vec<&ReplicationRecord> = recs.iter().collect();
        let c = summarize_cell(100, Mode::Crossfit, "psi", "fixed", &refs);
        assert_eq!((c.reps, c.failures), (11, 1));
        assert!(c.flagged);
        assert_eq!(c.coverage["wald"], 1.0);
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            dgp: DgpKind::Illustrative,
            n_grid: vec![200],
            reps: 4,
            modes: vec![Mode::Plugin, Mode::Crossfit],
            targets: vec![
                BootstrapTarget::Auvroc {
                    ranker: RankerSpec::MarginalRegression,
                },
                BootstrapTarget::Ppsv {
                    selector: SelectorSpec::MarginalRegression { threshold: 0.1 },
                },
            ],
            learner: LearnerSpec::Ols,
            folds: 2,
            level: 0.9,
            bootstrap: Some(ExperimentBootstrap {
                replicates: 100,
                methods: default_bootstrap_methods(),
            }),
            oracle: OracleSettings::default(),
            seed: 5,
        }
    }

    #[test]
    fn experiment_is_reproducible() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(false).unwrap(), b.to_csv(false).unwrap());
        assert_eq!(a.to_json(false).unwrap(), b.to_json(false).unwrap());
        assert_eq!(a.cells.len(), 4);
        for c in &a.cells {
            assert_eq!(c.reps, 4);
            assert_eq!(c.coverage.len(), 4);
            assert!(c.coverage.values().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(a.to_json(true).unwrap().contains("seconds"));
        assert!(!a.to_csv(false).unwrap().contains("seconds"));
    }

    #[test]
    fn experiment_config_from_toml() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            dgp = "main"
            n_grid = [2000]
            reps = 200
            modes = ["crossfit", "plugin"]
            targets = [{ statistic = "auvroc", ranker = { kind = "lasso" } }]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.modes, vec![Mode::Crossfit, Mode::Plugin]);
        assert_eq!(cfg.folds, 5);
        assert!(cfg.bootstrap.is_none());
        let mut bad = cfg.clone();
        bad.reps = 1;
        assert!(bad.validate().is_err());
    }
}

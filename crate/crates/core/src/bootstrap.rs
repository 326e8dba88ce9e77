//! Partial bootstrap: resample rows and rerun the selection or ranking
//! algorithm, but score each replicate with the prediction functions fitted
//! on the original folds.
//!
//! Replicate `b` draws `n` row indices with replacement. Each drawn row is
//! evaluated by the fold that held it out originally; fold `k` receives weight
//! `w_k = (rows drawn from fold k) / n`. Subsets first seen in a replicate are
//! fitted once, on the original training folds, and memoized in the plan.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{rank, select, RankerSpec, SelectorSpec};
use crate::data::{Ranking, Subset};
use crate::error::{invalid_arg, Error, Result};
use crate::estimation::{auvroc, auvroc_weights, full_on_sample, plan_nuisances, vim_on_sample, CrossFitPlan, Sample};
use crate::inference::{quantile_type7, ConfidenceInterval, IntervalMethod};
use crate::metrics::{Nuisance, PredictivenessMetric};
use crate::rng::SeedSpec;

pub const MIN_INTERVAL_REPLICATES: usize = 100;
const WARN_REPLICATES: usize = 1000;

/// The algorithm rerun on each replicate and the statistic it feeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "snake_case", deny_unknown_fields)]
pub enum BootstrapTarget {
    /// `psi` of the selected set.
    SelectionPsi { selector: SelectorSpec },
    /// `psi / |S|` of the selected set.
    Ppsv { selector: SelectorSpec },
    /// Area under the VROC curve of the ranking.
    Auvroc { ranker: RankerSpec },
}

impl BootstrapTarget {
    pub fn name(&self) -> &'static str {
        match self {
            BootstrapTarget::SelectionPsi { .. } => "psi",
            BootstrapTarget::Ppsv { .. } => "ppsv",
            BootstrapTarget::Auvroc { .. } => "auvroc",
        }
    }

    pub fn algorithm_name(&self) -> &'static str {
        match self {
            BootstrapTarget::SelectionPsi { selector } | BootstrapTarget::Ppsv { selector } => selector.name(),
            BootstrapTarget::Auvroc { ranker } => ranker.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub seed: SeedSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Subset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Ranking>,
    pub theta: f64,
    pub se: f64,
    pub fold_weights: Vec<f64>,
    /// Prefix importances of the replicate ranking (AUVROC target only).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub psi_seq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub replicates: Vec<Replicate>,
    /// Resamples discarded because some fold received no rows.
    pub redraws: usize,
    /// PPSV replicates whose selection came back empty; they score 0.
    pub empty_selections: usize,
}

impl BootstrapDraws {
    pub fn thetas(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.theta).collect()
    }

    pub fn ses(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.se).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.replicates.len() < WARN_REPLICATES {
            w.push(format!(
                "only {} bootstrap replicates; at least {WARN_REPLICATES} are recommended for interval endpoints",
                self.replicates.len()
            ));
        }
        if self.empty_selections > 0 {
            w.push(format!("{} replicates selected no variables", self.empty_selections));
        }
        w
    }
}

/// Per-group second moment of influence values under the sample's weights,
/// turned into a standard error.
fn sample_se(influence: &[Vec<f64>], sample: &Sample, n: usize) -> f64 {
    let var: f64 = influence
        .iter()
        .zip(&sample.weights)
        .filter(|(inf, _)| !inf.is_empty())
        .map(|(inf, w)| w * inf.iter().map(|v| v * v).sum::<f64>() / inf.len() as f64)
        .sum();
    (var / n as f64).sqrt()
}

/// Scores one resample, given as row indices into the original data.
pub fn replicate_from_indices(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    target: &BootstrapTarget,
    indices: &[usize],
    algorithm_seed: &SeedSpec,
    index: usize,
) -> Result<Replicate> {
    let nuisances = plan_nuisances(plan, metric)?;
    replicate_inner(plan, metric, &nuisances, target, indices, algorithm_seed, index).map(|(r, _)| r)
}

fn replicate_inner(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    nuisances: &[Nuisance],
    target: &BootstrapTarget,
    indices: &[usize],
    algorithm_seed: &SeedSpec,
    index: usize,
) -> Result<(Replicate, bool)> {
    let data = plan.data();
    let n = data.n();
    let sample = plan.sample_from_rows(indices);
    if sample.rows.iter().any(|r| r.is_empty()) {
        return Err(Error::InvalidState("resample leaves an evaluation fold empty".into()));
    }
    let resampled = data.select_rows(indices);
    let full = full_on_sample(plan, metric, nuisances, &sample)?;
    let mut empty = false;
    let replicate = match target {
        BootstrapTarget::SelectionPsi { selector: spec } | BootstrapTarget::Ppsv { selector: spec } => {
            let subset = select(spec, &resampled, algorithm_seed)?;
            let (psi, _, influence) = vim_on_sample(plan, metric, nuisances, &full, &subset, &sample)?;
            let se = sample_se(&influence, &sample, n);
            let (theta, se) = match target {
                BootstrapTarget::Ppsv { .. } if subset.is_empty() => {
                    empty = true;
                    (0.0, 0.0)
                }
                BootstrapTarget::Ppsv { .. } => (psi / subset.len() as f64, se / subset.len() as f64),
                _ => (psi, se),
            };
            Replicate {
                index,
                selection: Some(subset),
                ranking: None,
                theta,
                se,
                fold_weights: sample.weights.clone(),
                psi_seq: Vec::new(),
            }
        }
        BootstrapTarget::Auvroc { ranker: spec } => {
            let ranking = rank(spec, &resampled, algorithm_seed)?;
            let p = data.p();
            if p < 2 {
                return Err(invalid_arg("AUVROC needs at least two covariates"));
            }
            let w = auvroc_weights(p);
            let mut psi_seq = Vec::with_capacity(p);
            let mut combined: Vec<Vec<f64>> = sample.rows.iter().map(|r| vec![0.0; r.len()]).collect();
            for j in 1..=p {
                let (psi, _, influence) = vim_on_sample(plan, metric, nuisances, &full, &ranking.prefix(j)?, &sample)?;
                psi_seq.push(psi);
                for (acc, inf) in combined.iter_mut().zip(&influence) {
                    for (a, v) in acc.iter_mut().zip(inf) {
                        *a += w[j - 1] * v;
                    }
                }
            }
            Replicate {
                index,
                selection: None,
                ranking: Some(ranking),
                theta: auvroc(&psi_seq)?,
                se: sample_se(&combined, &sample, n),
                fold_weights: sample.weights.clone(),
                psi_seq,
            }
        }
    };
    Ok((replicate, empty))
}

/// Runs `plan.replicates` partial-bootstrap replicates. Results depend only
/// on the seed, never on thread count or scheduling.
pub fn partial_bootstrap(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    target: &BootstrapTarget,
    bootstrap: &BootstrapPlan,
) -> Result<BootstrapDraws> {
    if bootstrap.replicates == 0 {
        return Err(invalid_arg("need at least one bootstrap replicate"));
    }
    let nuisances = plan_nuisances(plan, metric)?;
    let n = plan.data().n();
    let groups = plan.group_count();
    // the resample for (replicate, attempt) is a pure function of the seed
    let draw = |b: usize, attempt: usize| -> Vec<usize> {
        let mut rng = bootstrap
            .seed
            .derive(&format!("bootstrap-rows/{attempt}"), b as u64)
            .rng();
        (0..n).map(|_| rng.random_range(0..n)).collect()
    };
    let covers_all = |rows: &[usize]| {
        let mut seen = vec![false; groups];
        rows.iter().for_each(|&i| seen[plan.group_of(i)] = true);
        seen.iter().all(|&s| s)
    };
    // settle the redraws first so the cap is enforced deterministically
    let mut attempts = vec![0usize; bootstrap.replicates];
    let mut redraws = 0;
    let cap = 10 * bootstrap.replicates;
    for (b, attempt) in attempts.iter_mut().enumerate() {
        while !covers_all(&draw(b, *attempt)) {
            *attempt += 1;
            redraws += 1;
            if redraws > cap {
                return Err(Error::InvalidState(format!(
                    "more than {cap} degenerate resamples; folds are too small for the bootstrap"
                )));
            }
        }
    }
    let results = attempts
        .par_iter()
        .enumerate()
        .map(|(b, &attempt)| {
            let rows = draw(b, attempt);
            let alg_seed = bootstrap.seed.derive("bootstrap-algorithm", b as u64);
            replicate_inner(plan, metric, &nuisances, target, &rows, &alg_seed, b)
        })
        .collect::<Result<Vec<_>>>()?;
    let empty_selections = results.iter().filter(|(_, e)| *e).count();
    Ok(BootstrapDraws {
        replicates: results.into_iter().map(|(r, _)| r).collect(),
        redraws,
        empty_selections,
    })
}

/// Efron percentile, basic percentile and percentile-t intervals.
pub fn bootstrap_interval(
    draws: &BootstrapDraws,
    theta_hat: f64,
    se_hat: f64,
    method: IntervalMethod,
    level: f64,
) -> Result<ConfidenceInterval> {
    let ses = draws.ses();
    interval_from_values(&draws.thetas(), Some(&ses), theta_hat, se_hat, method, level)
}

pub fn interval_from_values(
    thetas: &[f64],
    ses: Option<&[f64]>,
    theta_hat: f64,
    se_hat: f64,
    method: IntervalMethod,
    level: f64,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid_arg(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if thetas.len() < MIN_INTERVAL_REPLICATES {
        return Err(invalid_arg(format!(
            "bootstrap intervals need at least {MIN_INTERVAL_REPLICATES} replicates, got {}",
            thetas.len()
        )));
    }
    if thetas.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidState("non-finite bootstrap replicate".into()));
    }
    let alpha = 1.0 - level;
    let sorted = |values: &[f64]| {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (lower, upper) = match method {
        IntervalMethod::Efron => {
            let s = sorted(thetas);
            (quantile_type7(&s, alpha / 2.0), quantile_type7(&s, 1.0 - alpha / 2.0))
        }
        IntervalMethod::Percentile => {
            let s = sorted(thetas);
            (
                2.0 * theta_hat - quantile_type7(&s, 1.0 - alpha / 2.0),
                2.0 * theta_hat - quantile_type7(&s, alpha / 2.0),
            )
        }
        IntervalMethod::PercentileT => {
            let ses = ses.ok_or_else(|| invalid_arg("percentile-t needs replicate standard errors"))?;
            if ses.len() != thetas.len() {
                return Err(invalid_arg("one standard error per replicate is required"));
            }
            let t: Vec<f64> = thetas
                .iter()
                .zip(ses)
                .map(|(&th, &se)| {
                    let d = th - theta_hat;
                    if se > 0.0 {
                        d / se
                    } else if d == 0.0 {
                        0.0
                    } else {
                        d.signum() * f64::INFINITY
                    }
                })
                .collect();
            let s = sorted(&t);
            let (q_lo, q_hi) = (quantile_type7(&s, alpha / 2.0), quantile_type7(&s, 1.0 - alpha / 2.0));
            if !(q_lo.is_finite() && q_hi.is_finite()) {
                return Err(Error::InvalidState(
                    "percentile-t quantile is infinite (zero replicate SE)".into(),
                ));
            }
            (theta_hat - se_hat * q_hi, theta_hat - se_hat * q_lo)
        }
        other => return Err(invalid_arg(format!("{other:?} is not a bootstrap interval method"))),
    };
    Ok(ConfidenceInterval {
        lower,
        upper,
        level,
        method,
    })
}

//! Plug-in and cross-fitted estimators of predictiveness, variable
//! importance, VROC curves, AUVROC and PPSV.
//!
//! Both modes run through a [`CrossFitPlan`]. A plan splits the rows into
//! evaluation groups: one group per fold under cross-fitting (trained on the
//! other folds), or a single group trained and evaluated on every row for the
//! plug-in estimator. Fitted predictions on each group's evaluation rows are
//! memoized by the kept covariate set, so VROC prefixes and bootstrap
//! replicates never refit a model they have already seen.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_folds, Dataset, FoldAssignment, Ranking, Subset};
use crate::error::{invalid_arg, Error, Result};
use crate::learners::{fit, LearnerSpec};
use crate::metrics::{influence_from_parts, Nuisance, OutcomeKind, PredictionFunction, PredictivenessMetric};
use crate::rng::SeedSpec;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plugin,
    Crossfit,
}

#[derive(Debug)]
struct Group {
    train: Vec<usize>,
    eval: Vec<usize>,
}

type Cell = Arc<Mutex<Option<Arc<Vec<f64>>>>>;

/// Evaluation groups plus a memo of fitted predictions keyed by
/// `(group, kept columns)`.
pub struct CrossFitPlan<'a> {
    data: &'a Dataset,
    learner: LearnerSpec,
    outcome_kind: OutcomeKind,
    mode: Mode,
    seed: SeedSpec,
    folds: Option<FoldAssignment>,
    groups: Vec<Group>,
    /// Position of each row inside its group's evaluation rows.
    position: Vec<usize>,
    group_of: Vec<usize>,
    memo: Mutex<HashMap<(usize, Subset), Cell>>,
    full_fits: AtomicUsize,
    reduced_fits: AtomicUsize,
}

/// Rows drawn from each evaluation group, with multiplicity, and the weight
/// each group carries in the combined estimate.
#[derive(Debug, Clone)]
pub(crate) struct Sample {
    pub rows: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

/// Predictiveness of one kept set on a [`Sample`], with influence values
/// aligned to `Sample::rows`.
pub(crate) struct KeepEval {
    pub value: f64,
    pub influence: Vec<Vec<f64>>,
}

impl<'a> CrossFitPlan<'a> {
    /// Plug-in plan: learners see every row and are evaluated on every row.
    pub fn plugin(data: &'a Dataset, learner: LearnerSpec, outcome_kind: OutcomeKind, seed: SeedSpec) -> Result<Self> {
        learner.validate()?;
        let all: Vec<usize> = (0..data.n()).collect();
        let groups = vec![Group {
            train: all.clone(),
            eval: all.clone(),
        }];
        Ok(Self::assemble(
            data,
            learner,
            outcome_kind,
            Mode::Plugin,
            seed,
            None,
            groups,
        ))
    }

    /// Cross-fitting plan over `k` random balanced folds.
    pub fn crossfit(
        data: &'a Dataset,
        learner: LearnerSpec,
        outcome_kind: OutcomeKind,
        k: usize,
        seed: SeedSpec,
    ) -> Result<Self> {
        let folds = make_folds(data.n(), k, &seed.derive("crossfit-folds", 0))?;
        Self::with_folds(data, learner, outcome_kind, folds, seed)
    }

    pub fn with_folds(
        data: &'a Dataset,
        learner: LearnerSpec,
        outcome_kind: OutcomeKind,
        folds: FoldAssignment,
        seed: SeedSpec,
    ) -> Result<Self> {
        learner.validate()?;
        if folds.n() != data.n() {
            return Err(invalid_arg(format!(
                "fold assignment covers {} rows, data has {}",
                folds.n(),
                data.n()
            )));
        }
        let groups = (0..folds.k())
            .map(|k| Group {
                train: folds.train_rows(k),
                eval: folds.fold_rows(k),
            })
            .collect();
        Ok(Self::assemble(
            data,
            learner,
            outcome_kind,
            Mode::Crossfit,
            seed,
            Some(folds),
            groups,
        ))
    }

    fn assemble(
        data: &'a Dataset,
        learner: LearnerSpec,
        outcome_kind: OutcomeKind,
        mode: Mode,
        seed: SeedSpec,
        folds: Option<FoldAssignment>,
        groups: Vec<Group>,
    ) -> Self {
        let mut position = vec![0; data.n()];
        let mut group_of = vec![0; data.n()];
        for (g, group) in groups.iter().enumerate() {
            for (pos, &i) in group.eval.iter().enumerate() {
                position[i] = pos;
                group_of[i] = g;
            }
        }
        Self {
            data,
            learner,
            outcome_kind,
            mode,
            seed,
            folds,
            groups,
            position,
            group_of,
            memo: Mutex::new(HashMap::new()),
            full_fits: AtomicUsize::new(0),
            reduced_fits: AtomicUsize::new(0),
        }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn learner(&self) -> &LearnerSpec {
        &self.learner
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        self.folds.as_ref()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Group holding row `i` for evaluation (its fold, or 0 for plug-in).
    pub fn group_of(&self, i: usize) -> usize {
        self.group_of[i]
    }

    /// Number of learner fits so far on all covariates and on strict subsets.
    pub fn fit_counts(&self) -> (usize, usize) {
        (
            self.full_fits.load(Ordering::SeqCst),
            self.reduced_fits.load(Ordering::SeqCst),
        )
    }

    /// Predictions of the learner trained on group `g`'s training rows with
    /// columns `keep`, at each of the group's evaluation rows. Each key is
    /// fitted at most once.
    fn predictions(&self, g: usize, keep: &Subset) -> Result<Arc<Vec<f64>>> {
        let cell = {
            let mut memo = self.memo.lock().expect("memo lock poisoned");
            memo.entry((g, keep.clone())).or_default().clone()
        };
        let mut slot = cell.lock().expect("memo cell poisoned");
        if let Some(p) = slot.as_ref() {
            return Ok(p.clone());
        }
        let p = Arc::new(self.fit_and_predict(g, keep).map_err(|e| match self.mode {
            Mode::Crossfit => Error::FoldFit {
                fold: g,
                source: Box::new(e),
            },
            Mode::Plugin => e,
        })?);
        if keep.len() == self.data.p() {
            self.full_fits.fetch_add(1, Ordering::SeqCst);
        } else {
            self.reduced_fits.fetch_add(1, Ordering::SeqCst);
        }
        *slot = Some(p.clone());
        Ok(p)
    }

    fn fit_and_predict(&self, g: usize, keep: &Subset) -> Result<Vec<f64>> {
        let group = &self.groups[g];
        let seed = self.seed.derive(&format!("fit{keep}"), g as u64);
        let owned;
        let train = match self.mode {
            Mode::Plugin => self.data,
            Mode::Crossfit => {
                owned = self.data.select_rows(&group.train);
                &owned
            }
        };
        let fitted = fit(&self.learner, train, keep, self.outcome_kind, &seed)?;
        Ok(group.eval.iter().map(|&i| fitted.predict(self.data.row(i))).collect())
    }

    fn nuisances(&self, metric: &dyn PredictivenessMetric) -> Result<Vec<Nuisance>> {
        self.groups
            .iter()
            .map(|g| {
                let ys: Vec<f64> = g.train.iter().map(|&i| self.data.y()[i]).collect();
                metric.nuisance(&ys)
            })
            .collect()
    }

    /// Every evaluation row once, groups weighted equally.
    pub(crate) fn original_sample(&self) -> Sample {
        let k = self.groups.len() as f64;
        Sample {
            rows: self.groups.iter().map(|g| g.eval.clone()).collect(),
            weights: vec![1.0 / k; self.groups.len()],
        }
    }

    /// Splits a row multiset by evaluation group; group weights are the
    /// fraction of drawn rows falling in each group.
    pub(crate) fn sample_from_rows(&self, rows: &[usize]) -> Sample {
        let mut by_group = vec![Vec::new(); self.groups.len()];
        for &i in rows {
            by_group[self.group_of[i]].push(i);
        }
        let n = rows.len() as f64;
        let weights = by_group.iter().map(|r| r.len() as f64 / n).collect();
        Sample {
            rows: by_group,
            weights,
        }
    }

    /// `sum_g w_g U(zeta on the group's sampled rows, eta from its training rows)`.
    pub(crate) fn evaluate_keep(
        &self,
        metric: &dyn PredictivenessMetric,
        nuisances: &[Nuisance],
        keep: &Subset,
        sample: &Sample,
    ) -> Result<KeepEval> {
        let mut value = 0.0;
        let mut influence = Vec::with_capacity(self.groups.len());
        for (g, rows) in sample.rows.iter().enumerate() {
            if rows.is_empty() {
                if sample.weights[g] > 0.0 {
                    return Err(Error::InvalidState(format!("evaluation group {g} is empty")));
                }
                influence.push(Vec::new());
                continue;
            }
            let preds = self.predictions(g, keep)?;
            let dots = rows
                .iter()
                .map(|&i| metric.zeta_dot(metric.prepare(preds[self.position[i]]), self.data.y()[i]))
                .collect::<Result<Vec<f64>>>()?;
            let ys: Vec<f64> = rows.iter().map(|&i| self.data.y()[i]).collect();
            let zeta = dots.iter().sum::<f64>() / dots.len() as f64;
            value += sample.weights[g] * metric.u(zeta, nuisances[g].eta);
            influence.push(influence_from_parts(metric, &dots, &ys, &nuisances[g]));
        }
        Ok(KeepEval { value, influence })
    }
}

/// Importance of removing `subset`, with per-row influence values.
#[derive(Debug, Clone, Serialize)]
pub struct VimEstimate {
    pub psi: f64,
    pub v_full: f64,
    pub v_reduced: f64,
    pub subset: Subset,
    /// Influence value of each row of the data, in row order.
    pub influence: Vec<f64>,
    /// `1 / (K n_k)` for a row in fold `k` (or `1 / n` for plug-in), so the
    /// variance estimate is `sum_i w_i influence_i^2`.
    #[serde(skip)]
    pub row_weights: Arc<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VrocEstimate {
    pub ranking: Ranking,
    pub psi_seq: Vec<f64>,
    pub v_full: f64,
    /// `influence[j]` holds the per-row influence values of `psi_seq[j]`.
    #[serde(skip)]
    pub influence: Vec<Vec<f64>>,
    #[serde(skip)]
    pub row_weights: Arc<Vec<f64>>,
    /// Undefined for a single covariate.
    pub auvroc: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionEstimate {
    pub subset: Subset,
    pub size: usize,
    pub psi: f64,
    /// Undefined for an empty selection.
    pub ppsv: Option<f64>,
    #[serde(skip)]
    pub influence: Vec<f64>,
    #[serde(skip)]
    pub row_weights: Arc<Vec<f64>>,
}

impl VimEstimate {
    pub fn n(&self) -> usize {
        self.influence.len()
    }
}

impl VrocEstimate {
    pub fn n(&self) -> usize {
        self.row_weights.len()
    }
}

fn flatten(plan: &CrossFitPlan<'_>, per_group: &[Vec<f64>]) -> Vec<f64> {
    let mut flat = vec![0.0; plan.data.n()];
    for (g, values) in per_group.iter().enumerate() {
        for (&i, &v) in plan.groups[g].eval.iter().zip(values) {
            flat[i] = v;
        }
    }
    flat
}

fn row_weights(plan: &CrossFitPlan<'_>) -> Arc<Vec<f64>> {
    let k = plan.groups.len() as f64;
    let mut w = vec![0.0; plan.data.n()];
    for g in &plan.groups {
        for &i in &g.eval {
            w[i] = 1.0 / (k * g.eval.len() as f64);
        }
    }
    Arc::new(w)
}

fn check_subset(subset: &Subset, p: usize) -> Result<()> {
    if subset.indices().iter().any(|&j| j >= p) {
        return Err(invalid_arg(format!(
            "subset {subset} refers to a column beyond p = {p}"
        )));
    }
    Ok(())
}

fn difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u - v).collect())
        .collect()
}

/// Importance `psi` of `subset` and its per-group influence values on `sample`.
pub(crate) fn vim_on_sample(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    nuisances: &[Nuisance],
    full: &KeepEval,
    subset: &Subset,
    sample: &Sample,
) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let keep = subset.complement(plan.data.p());
    let reduced = plan.evaluate_keep(metric, nuisances, &keep, sample)?;
    Ok((
        full.value - reduced.value,
        reduced.value,
        difference(&full.influence, &reduced.influence),
    ))
}

pub(crate) fn full_on_sample(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    nuisances: &[Nuisance],
    sample: &Sample,
) -> Result<KeepEval> {
    plan.evaluate_keep(metric, nuisances, &Subset::full(plan.data.p()), sample)
}

pub(crate) fn plan_nuisances(plan: &CrossFitPlan<'_>, metric: &dyn PredictivenessMetric) -> Result<Vec<Nuisance>> {
    plan.nuisances(metric)
}

/// Estimate of `psi_S` in the plan's mode (plug-in or cross-fit).
pub fn estimate_vim(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    subset: &Subset,
) -> Result<VimEstimate> {
    check_subset(subset, plan.data.p())?;
    let nuisances = plan.nuisances(metric)?;
    let sample = plan.original_sample();
    let full = full_on_sample(plan, metric, &nuisances, &sample)?;
    let (psi, v_reduced, influence) = vim_on_sample(plan, metric, &nuisances, &full, subset, &sample)?;
    Ok(VimEstimate {
        psi,
        v_full: full.value,
        v_reduced,
        subset: subset.clone(),
        influence: flatten(plan, &influence),
        row_weights: row_weights(plan),
    })
}

/// Plug-in `psi_S`: both learners trained and evaluated on all rows.
pub fn estimate_vim_plugin(
    data: &Dataset,
    metric: &dyn PredictivenessMetric,
    learner: &LearnerSpec,
    subset: &Subset,
    seed: &SeedSpec,
) -> Result<VimEstimate> {
    let plan = CrossFitPlan::plugin(data, learner.clone(), metric.outcome_kind(), seed.clone())?;
    estimate_vim(&plan, metric, subset)
}

/// Cross-fitted `psi_S`, the average over folds of held-out estimates.
pub fn estimate_vim_crossfit(
    metric: &dyn PredictivenessMetric,
    subset: &Subset,
    plan: &CrossFitPlan<'_>,
) -> Result<VimEstimate> {
    if plan.mode() != Mode::Crossfit {
        return Err(invalid_arg("estimate_vim_crossfit needs a cross-fitting plan"));
    }
    estimate_vim(plan, metric, subset)
}

/// VROC curve `(psi_{R[1]}, ..., psi_{R[p]})` sharing one full-model estimate.
pub fn estimate_vroc(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    ranking: &Ranking,
) -> Result<VrocEstimate> {
    let p = plan.data.p();
    if ranking.len() != p {
        return Err(invalid_arg(format!(
            "ranking has {} entries, data has p = {p}",
            ranking.len()
        )));
    }
    let nuisances = plan.nuisances(metric)?;
    let sample = plan.original_sample();
    let full = full_on_sample(plan, metric, &nuisances, &sample)?;
    let points = (1..=p)
        .into_par_iter()
        .map(|j| {
            let prefix = ranking.prefix(j)?;
            vim_on_sample(plan, metric, &nuisances, &full, &prefix, &sample)
        })
        .collect::<Result<Vec<_>>>()?;
    let psi_seq: Vec<f64> = points.iter().map(|(psi, _, _)| *psi).collect();
    let influence = points.iter().map(|(_, _, inf)| flatten(plan, inf)).collect();
    let auvroc = if p >= 2 { Some(auvroc(&psi_seq)?) } else { None };
    Ok(VrocEstimate {
        ranking: ranking.clone(),
        psi_seq,
        v_full: full.value,
        influence,
        row_weights: row_weights(plan),
        auvroc,
    })
}

/// Importance and PPSV of a selected subset.
pub fn estimate_selection(
    plan: &CrossFitPlan<'_>,
    metric: &dyn PredictivenessMetric,
    subset: &Subset,
) -> Result<SelectionEstimate> {
    let vim = estimate_vim(plan, metric, subset)?;
    let size = subset.len();
    Ok(SelectionEstimate {
        subset: subset.clone(),
        size,
        psi: vim.psi,
        ppsv: ppsv(vim.psi, size).ok(),
        influence: vim.influence,
        row_weights: vim.row_weights,
    })
}

/// Trapezoid area `sum_{j=2..p} (psi_j + psi_{j-1}) / 2`.
pub fn auvroc(psi_seq: &[f64]) -> Result<f64> {
    if psi_seq.len() < 2 {
        return Err(invalid_arg("AUVROC needs at least two points"));
    }
    Ok(psi_seq.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum())
}

/// Trapezoid weights `(1/2, 1, ..., 1, 1/2)`, so `auvroc = w . psi_seq`.
pub fn auvroc_weights(p: usize) -> Vec<f64> {
    let mut w = vec![1.0; p];
    w[0] = 0.5;
    w[p - 1] = 0.5;
    w
}

/// Predictiveness per selected variable, `psi / size`.
pub fn ppsv(psi: f64, size: usize) -> Result<f64> {
    if size == 0 {
        return Err(Error::UndefinedPpsv);
    }
    Ok(psi / size as f64)
}

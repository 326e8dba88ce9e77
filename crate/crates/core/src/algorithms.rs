//! Variable selection and ranking algorithms, the objects under evaluation.
//!
//! Every algorithm is a deterministic function of the data and a seed, and
//! every tie breaks toward the lower column index.

use serde::{Deserialize, Serialize};

use crate::data::{make_folds, Dataset, Ranking, Subset};
use crate::error::{invalid_arg, Error, Result};
use crate::learners::{LinearModel, TreeModel};
use crate::rng::SeedSpec;

pub mod defaults {
    pub fn lasso_folds() -> usize {
        10
    }
    pub fn lasso_grid_size() -> usize {
        100
    }
    pub fn lasso_min_ratio() -> f64 {
        1e-3
    }
    pub fn stepwise_folds() -> usize {
        5
    }
    pub fn tree_depth() -> usize {
        4
    }
    pub fn min_leaf() -> usize {
        5
    }
}

/// Settings shared by the lasso selector and ranker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LassoSettings {
    #[serde(default = "defaults::lasso_folds")]
    pub folds: usize,
    #[serde(default = "defaults::lasso_grid_size")]
    pub grid_size: usize,
    #[serde(default = "defaults::lasso_min_ratio")]
    pub min_ratio: f64,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            folds: defaults::lasso_folds(),
            grid_size: defaults::lasso_grid_size(),
            min_ratio: defaults::lasso_min_ratio(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectorSpec {
    /// Keeps covariates whose absolute standardized univariate coefficient
    /// exceeds `threshold`.
    MarginalRegression { threshold: f64 },
    Lasso {
        #[serde(flatten)]
        settings: LassoSettings,
    },
    ForwardStepwise {
        #[serde(default = "defaults::stepwise_folds")]
        folds: usize,
    },
    TreeImportance {
        #[serde(default = "defaults::tree_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
    },
    /// A precomputed selection that ignores the data.
    #[serde(skip)]
    Fixed(Subset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RankerSpec {
    MarginalRegression,
    Lasso {
        #[serde(flatten)]
        settings: LassoSettings,
    },
    ForwardStepwise {
        #[serde(default = "defaults::stepwise_folds")]
        folds: usize,
    },
    TreeImportance {
        #[serde(default = "defaults::tree_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
    },
    /// A precomputed ranking that ignores the data.
    #[serde(skip)]
    Fixed(Ranking),
}

impl SelectorSpec {
    pub fn lasso() -> Self {
        SelectorSpec::Lasso {
            settings: LassoSettings::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectorSpec::MarginalRegression { .. } => "marginal_regression",
            SelectorSpec::Lasso { .. } => "lasso",
            SelectorSpec::ForwardStepwise { .. } => "forward_stepwise",
            SelectorSpec::TreeImportance { .. } => "tree_importance",
            SelectorSpec::Fixed(_) => "fixed",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SelectorSpec::MarginalRegression { threshold } if !(*threshold > 0.0) => Err(invalid_arg(format!(
                "marginal regression threshold must be > 0, got {threshold}"
            ))),
            SelectorSpec::Lasso { settings } => settings.validate(),
            SelectorSpec::ForwardStepwise { folds } => validate_folds(*folds),
            SelectorSpec::TreeImportance { max_depth, min_leaf } => validate_tree(*max_depth, *min_leaf),
            _ => Ok(()),
        }
    }
}

impl RankerSpec {
    pub fn lasso() -> Self {
        RankerSpec::Lasso {
            settings: LassoSettings::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RankerSpec::MarginalRegression => "marginal_regression",
            RankerSpec::Lasso { .. } => "lasso",
            RankerSpec::ForwardStepwise { .. } => "forward_stepwise",
            RankerSpec::TreeImportance { .. } => "tree_importance",
            RankerSpec::Fixed(_) => "fixed",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RankerSpec::Lasso { settings } => settings.validate(),
            RankerSpec::ForwardStepwise { folds } => validate_folds(*folds),
            RankerSpec::TreeImportance { max_depth, min_leaf } => validate_tree(*max_depth, *min_leaf),
            _ => Ok(()),
        }
    }
}

impl LassoSettings {
    fn validate(&self) -> Result<()> {
        validate_folds(self.folds)?;
        if self.grid_size < 2 {
            return Err(invalid_arg("lasso grid needs at least 2 points"));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio < 1.0) {
            return Err(invalid_arg(format!(
                "lasso min_ratio must lie in (0, 1), got {}",
                self.min_ratio
            )));
        }
        Ok(())
    }
}

fn validate_folds(folds: usize) -> Result<()> {
    if folds < 2 {
        return Err(invalid_arg(format!("need at least 2 folds, got {folds}")));
    }
    Ok(())
}

fn validate_tree(max_depth: usize, min_leaf: usize) -> Result<()> {
    if max_depth == 0 || min_leaf == 0 {
        return Err(invalid_arg("tree depth and min_leaf must be >= 1"));
    }
    Ok(())
}

pub fn select(spec: &SelectorSpec, data: &Dataset, seed: &SeedSpec) -> Result<Subset> {
    spec.validate()?;
    let p = data.p();
    match spec {
        SelectorSpec::MarginalRegression { threshold } => {
            let coefs = standardized_coefficients(data);
            Subset::new((0..p).filter(|&j| coefs[j].abs() > *threshold).collect(), p)
        }
        SelectorSpec::Lasso { settings } => lasso_select(data, settings, seed),
        SelectorSpec::ForwardStepwise { folds } => Ok(forward_stepwise(data, *folds, seed)?.selected),
        SelectorSpec::TreeImportance { max_depth, min_leaf } => {
            let gains = tree_gains(data, *max_depth, *min_leaf);
            Subset::new((0..p).filter(|&j| gains[j] > 0.0).collect(), p)
        }
        SelectorSpec::Fixed(subset) => {
            if subset.indices().iter().any(|&j| j >= p) {
                return Err(invalid_arg("fixed selection refers to a column beyond p"));
            }
            Ok(subset.clone())
        }
    }
}

pub fn rank(spec: &RankerSpec, data: &Dataset, seed: &SeedSpec) -> Result<Ranking> {
    spec.validate()?;
    let p = data.p();
    match spec {
        RankerSpec::MarginalRegression => {
            let coefs = standardized_coefficients(data);
            let scores: Vec<f64> = coefs.iter().map(|c| c.abs()).collect();
            Ranking::new(order_by_decreasing(&scores), p)
        }
        RankerSpec::Lasso { settings } => lasso_rank(data, settings),
        RankerSpec::ForwardStepwise { folds } => {
            let run = forward_stepwise(data, *folds, seed)?;
            let mut order = run.order;
            let rest: Vec<usize> = (0..p).filter(|j| !order.contains(j)).collect();
            let resid_corr = residual_correlations(data, &run.selected)?;
            let scores: Vec<f64> = rest.iter().map(|&j| resid_corr[j].abs()).collect();
            order.extend(order_by_decreasing(&scores).into_iter().map(|a| rest[a]));
            Ranking::new(order, p)
        }
        RankerSpec::TreeImportance { max_depth, min_leaf } => {
            Ranking::new(order_by_decreasing(&tree_gains(data, *max_depth, *min_leaf)), p)
        }
        RankerSpec::Fixed(ranking) => {
            if ranking.len() != p {
                return Err(invalid_arg(format!(
                    "fixed ranking has {} entries, data has p = {p}",
                    ranking.len()
                )));
            }
            Ok(ranking.clone())
        }
    }
}

/// Indices sorted by decreasing score; equal scores keep ascending index.
fn order_by_decreasing(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Univariate slope times `sd(x_j) / sd(y)`, i.e. the sample correlation.
/// Constant columns score 0.
pub fn standardized_coefficients(data: &Dataset) -> Vec<f64> {
    let (my, sy) = mean_sd(data.y());
    (0..data.p())
        .map(|j| {
            let col = data.column(j);
            let (mx, sx) = mean_sd(&col);
            if sx == 0.0 || sy == 0.0 {
                return 0.0;
            }
            let cov = col.iter().zip(data.y()).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / col.len() as f64;
            cov / (sx * sy)
        })
        .collect()
}

fn tree_gains(data: &Dataset, max_depth: usize, min_leaf: usize) -> Vec<f64> {
    let tree = TreeModel::fit(data, &Subset::full(data.p()), max_depth, min_leaf);
    let mut gains = vec![0.0; data.p()];
    for &(j, g) in tree.feature_gains() {
        gains[j] = g;
    }
    gains
}

const LASSO_TOL: f64 = 1e-7;
const LASSO_MAX_SWEEPS: usize = 100_000;

/// Coefficients along a lasso path, on the original covariate scale. Columns
/// outside the kept subset, and constant columns, are always zero.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub intercepts: Vec<f64>,
    /// `coefs[l][j]` for grid point `l` and column `j`.
    pub coefs: Vec<Vec<f64>>,
}

impl LassoPath {
    pub fn predict(&self, l: usize, row: &[f64]) -> f64 {
        self.intercepts[l] + self.coefs[l].iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Standardized design summaries: `gram = X'X / n` and `xty = X'(y - ybar) / n`
/// for the kept, non-constant columns.
struct LassoProblem {
    cols: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    y_mean: f64,
    gram: Vec<f64>,
    xty: Vec<f64>,
}

impl LassoProblem {
    fn new(data: &Dataset, keep: &Subset) -> Self {
        let n = data.n() as f64;
        let (y_mean, _) = mean_sd(data.y());
        let mut cols = Vec::new();
        let mut center = Vec::new();
        let mut scale = Vec::new();
        let mut columns = Vec::new();
        for &j in keep.indices() {
            let col = data.column(j);
            let (m, s) = mean_sd(&col);
            if s > 0.0 {
                cols.push(j);
                center.push(m);
                scale.push(s);
                columns.push(col.iter().map(|x| (x - m) / s).collect::<Vec<f64>>());
            }
        }
        let q = cols.len();
        let mut gram = vec![0.0; q * q];
        let mut xty = vec![0.0; q];
        for a in 0..q {
            xty[a] = columns[a]
                .iter()
                .zip(data.y())
                .map(|(x, y)| x * (y - y_mean))
                .sum::<f64>()
                / n;
            for b in a..q {
                let g = columns[a].iter().zip(&columns[b]).map(|(u, v)| u * v).sum::<f64>() / n;
                gram[a * q + b] = g;
                gram[b * q + a] = g;
            }
        }
        Self {
            cols,
            center,
            scale,
            y_mean,
            gram,
            xty,
        }
    }

    fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cyclic coordinate descent with warm starts; `beta` is in the
    /// standardized scale and is updated in place.
    fn solve(&self, lambda: f64, beta: &mut [f64]) -> Result<()> {
        let q = self.cols.len();
        // c[a] = xty[a] - sum_b gram[a, b] beta[b]
        let mut c: Vec<f64> = (0..q)
            .map(|a| self.xty[a] - (0..q).map(|b| self.gram[a * q + b] * beta[b]).sum::<f64>())
            .collect();
        for _ in 0..LASSO_MAX_SWEEPS {
            let mut max_change = 0.0f64;
            for a in 0..q {
                let z = c[a] + beta[a];
                let next = soft_threshold(z, lambda);
                let delta = next - beta[a];
                if delta != 0.0 {
                    beta[a] = next;
                    for b in 0..q {
                        c[b] -= self.gram[b * q + a] * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < LASSO_TOL {
                return Ok(());
            }
        }
        Err(Error::Convergence { lambda })
    }

    fn original_scale(&self, p: usize, beta: &[f64]) -> (f64, Vec<f64>) {
        let mut coefs = vec![0.0; p];
        let mut intercept = self.y_mean;
        for (a, &j) in self.cols.iter().enumerate() {
            coefs[j] = beta[a] / self.scale[a];
            intercept -= coefs[j] * self.center[a];
        }
        (intercept, coefs)
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Solves the lasso `(1/2n)|y - b0 - Xb|^2 + lambda |b|_1` on standardized
/// kept columns at each point of a strictly decreasing grid.
pub fn lasso_path(data: &Dataset, lambda_grid: &[f64], keep: &Subset) -> Result<LassoPath> {
    if lambda_grid.is_empty() {
        return Err(invalid_arg("empty lambda grid"));
    }
    if lambda_grid.windows(2).any(|w| w[1] >= w[0]) || lambda_grid.iter().any(|&l| !(l >= 0.0)) {
        return Err(invalid_arg("lambda grid must be nonnegative and strictly decreasing"));
    }
    let problem = LassoProblem::new(data, keep);
    path_from_problem(&problem, data.p(), lambda_grid)
}

fn path_from_problem(problem: &LassoProblem, p: usize, grid: &[f64]) -> Result<LassoPath> {
    let mut beta = vec![0.0; problem.cols.len()];
    let mut intercepts = Vec::with_capacity(grid.len());
    let mut coefs = Vec::with_capacity(grid.len());
    for &lambda in grid {
        problem.solve(lambda, &mut beta)?;
        let (b0, b) = problem.original_scale(p, &beta);
        intercepts.push(b0);
        coefs.push(b);
    }
    Ok(LassoPath {
        lambdas: grid.to_vec(),
        intercepts,
        coefs,
    })
}

/// `size` log-spaced points from `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    let lambda_max = if lambda_max > 0.0 { lambda_max } else { 1.0 };
    (0..size)
        .map(|l| lambda_max * min_ratio.powf(l as f64 / (size - 1) as f64))
        .collect()
}

/// The default grid for `data`, anchored at its `lambda_max`.
pub fn default_grid(data: &Dataset, settings: &LassoSettings) -> Vec<f64> {
    let lmax = LassoProblem::new(data, &Subset::full(data.p())).lambda_max();
    lambda_grid(lmax, settings.grid_size, settings.min_ratio)
}

/// Cross-validated lasso: returns the full-data path and the grid index of
/// minimum CV mean squared error (ties go to the larger lambda).
pub fn lasso_cv(data: &Dataset, settings: &LassoSettings, seed: &SeedSpec) -> Result<(LassoPath, usize)> {
    settings.validate()?;
    let full = Subset::full(data.p());
    let grid = default_grid(data, settings);
    let folds = make_folds(data.n(), settings.folds.min(data.n()), &seed.derive("lasso-cv", 0))?;
    let mut sse = vec![0.0; grid.len()];
    for fold in 0..folds.k() {
        let train = data.select_rows(&folds.train_rows(fold));
        let path = path_from_problem(&LassoProblem::new(&train, &full), data.p(), &grid)?;
        for i in folds.fold_rows(fold) {
            let row = data.row(i);
            for (l, e) in sse.iter_mut().enumerate() {
                *e += (data.y()[i] - path.predict(l, row)).powi(2);
            }
        }
    }
    let best = (0..grid.len()).fold(0, |b, l| if sse[l] < sse[b] { l } else { b });
    let path = path_from_problem(&LassoProblem::new(data, &full), data.p(), &grid)?;
    Ok((path, best))
}

fn lasso_select(data: &Dataset, settings: &LassoSettings, seed: &SeedSpec) -> Result<Subset> {
    let (path, best) = lasso_cv(data, settings, seed)?;
    let coefs = &path.coefs[best];
    Subset::new((0..data.p()).filter(|&j| coefs[j] != 0.0).collect(), data.p())
}

fn lasso_rank(data: &Dataset, settings: &LassoSettings) -> Result<Ranking> {
    settings.validate()?;
    let path = lasso_path(data, &default_grid(data, settings), &Subset::full(data.p()))?;
    Ranking::new(entry_order(&path), data.p())
}

/// Order of first entry into the active set; variables entering at the same
/// grid point go by index, and never-active variables come last.
fn entry_order(path: &LassoPath) -> Vec<usize> {
    let p = path.coefs[0].len();
    let mut order = Vec::with_capacity(p);
    for coefs in &path.coefs {
        for j in 0..p {
            if coefs[j] != 0.0 && !order.contains(&j) {
                order.push(j);
            }
        }
    }
    let last = path.coefs.last().unwrap();
    let rest: Vec<usize> = (0..p).filter(|j| !order.contains(j)).collect();
    let scores: Vec<f64> = rest.iter().map(|&j| last[j].abs()).collect();
    order.extend(order_by_decreasing(&scores).into_iter().map(|a| rest[a]));
    order
}

struct StepwiseRun {
    order: Vec<usize>,
    selected: Subset,
}

fn cv_ols_mse(data: &Dataset, keep: &Subset, folds: &crate::data::FoldAssignment) -> Result<f64> {
    let mut sse = 0.0;
    for fold in 0..folds.k() {
        let train = data.select_rows(&folds.train_rows(fold));
        let held = folds.fold_rows(fold);
        if keep.is_empty() {
            let mean = train.y().iter().sum::<f64>() / train.n() as f64;
            sse += held.iter().map(|&i| (data.y()[i] - mean).powi(2)).sum::<f64>();
        } else {
            let model = LinearModel::ols(&train, keep)?;
            sse += held
                .iter()
                .map(|&i| (data.y()[i] - model.predict(data.row(i))).powi(2))
                .sum::<f64>();
        }
    }
    Ok(sse / data.n() as f64)
}

/// Greedy forward selection of OLS terms by K-fold CV error, stopping when no
/// addition strictly improves it.
fn forward_stepwise(data: &Dataset, folds: usize, seed: &SeedSpec) -> Result<StepwiseRun> {
    let p = data.p();
    let assignment = make_folds(data.n(), folds.min(data.n()), &seed.derive("stepwise-cv", 0))?;
    let mut order: Vec<usize> = Vec::new();
    let mut current = cv_ols_mse(data, &Subset::empty(), &assignment)?;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..p).filter(|j| !order.contains(j)) {
            let mut trial = order.clone();
            trial.push(j);
            let mse = cv_ols_mse(data, &Subset::new(trial, p)?, &assignment)?;
            if best.is_none_or(|(_, b)| mse < b) {
                best = Some((j, mse));
            }
        }
        match best {
            Some((j, mse)) if mse < current => {
                order.push(j);
                current = mse;
            }
            _ => break,
        }
    }
    let selected = Subset::new(order.clone(), p)?;
    Ok(StepwiseRun { order, selected })
}

/// Correlation of each column with the full-data OLS residuals on `keep`.
fn residual_correlations(data: &Dataset, keep: &Subset) -> Result<Vec<f64>> {
    let resid: Vec<f64> = if keep.is_empty() {
        let (m, _) = mean_sd(data.y());
        data.y().iter().map(|y| y - m).collect()
    } else {
        let model = LinearModel::ols(data, keep)?;
        (0..data.n())
            .map(|i| data.y()[i] - model.predict(data.row(i)))
            .collect()
    };
    let (mr, sr) = mean_sd(&resid);
    Ok((0..data.p())
        .map(|j| {
            let col = data.column(j);
            let (mx, sx) = mean_sd(&col);
            if sx == 0.0 || sr == 0.0 {
                return 0.0;
            }
            col.iter().zip(&resid).map(|(x, r)| (x - mx) * (r - mr)).sum::<f64>() / (col.len() as f64 * sx * sr)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn seed() -> SeedSpec {
        SeedSpec::new(11, "algorithms", 0)
    }

    fn linear_data(n: usize, beta: &[f64], noise: f64, s: u64) -> Dataset {
        let mut rng = SeedSpec::new(s, "alg-data", 0).rng();
        let p = beta.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    /// Columns of a scaled Hadamard matrix: centered, orthogonal, unit
    /// variance under the 1/n convention.
    fn orthonormal_design(y: Vec<f64>) -> Dataset {
        let h = [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, 1.0],
            [-1.0, -1.0, 1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, -1.0],
        ];
        let rows: Vec<Vec<f64>> = h.iter().map(|r| r.to_vec()).collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn orthonormal_design_matches_soft_threshold() {
        let y = vec![3.0, -1.0, 2.5, 0.5, 1.0, -2.0, 0.25, 4.0];
        let d = orthonormal_design(y.clone());
        let ybar = y.iter().sum::<f64>() / 8.0;
        let ols: Vec<f64> = (0..3)
            .map(|j| (0..8).map(|i| d.get(i, j) * (y[i] - ybar)).sum::<f64>() / 8.0)
            .collect();
        let grid = [2.0, 1.0, 0.5, 0.3, 0.1, 0.0];
        let path = lasso_path(&d, &grid, &Subset::full(3)).unwrap();
        for (l, &lambda) in grid.iter().enumerate() {
            for j in 0..3 {
                let expected = ols[j].signum() * (ols[j].abs() - lambda).max(0.0);
                assert!((path.coefs[l][j] - expected).abs() < 1e-6, "lambda {lambda} col {j}");
            }
        }
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let d = linear_data(200, &[1.0, -2.0, 0.5], 1.0, 1);
        let problem = LassoProblem::new(&d, &Subset::full(3));
        let lmax = problem.lambda_max();
        let path = lasso_path(&d, &[lmax * 1.5, lmax, lmax * 0.99], &Subset::full(3)).unwrap();
        assert!(path.coefs[0].iter().all(|&b| b == 0.0));
        assert!(path.coefs[1].iter().all(|&b| b == 0.0));
        assert!(path.coefs[2].iter().any(|&b| b != 0.0));
    }

    #[test]
    fn zero_penalty_is_ols() {
        let d = linear_data(150, &[1.0, -2.0, 0.5, 0.0], 1.0, 2);
        let keep = Subset::full(4);
        let path = lasso_path(&d, &[1.0, 0.1, 0.0], &keep).unwrap();
        let ols = LinearModel::ols(&d, &keep).unwrap();
        for j in 0..4 {
            assert!((path.coefs[2][j] - ols.coefs[j]).abs() < 1e-5);
        }
        assert!((path.intercepts[2] - ols.intercept).abs() < 1e-5);
    }

    #[test]
    fn path_respects_keep_and_grid_order() {
        let d = linear_data(100, &[1.0, 1.0, 1.0], 0.5, 3);
        let keep = Subset::new(vec![0, 2], 3).unwrap();
        let path = lasso_path(&d, &[0.5, 0.01], &keep).unwrap();
        assert!(path.coefs.iter().all(|b| b[1] == 0.0));
        assert!(lasso_path(&d, &[0.01, 0.5], &keep).is_err());
    }

    #[test]
    fn lasso_ranks_by_entry_order() {
        let d = linear_data(500, &[0.3, 3.0, 0.0, 1.0], 0.5, 4);
        let r = rank(&RankerSpec::lasso(), &d, &seed()).unwrap();
        assert_eq!(&r.order()[..3], &[1, 3, 0]);
        let s = select(&SelectorSpec::lasso(), &d, &seed()).unwrap();
        assert!(s.contains(0) && s.contains(1) && s.contains(3));
    }

    #[test]
    fn lasso_deterministic_across_seeds_for_ranking() {
        let d = linear_data(200, &[1.0, 0.5, 0.0], 1.0, 5);
        let a = rank(&RankerSpec::lasso(), &d, &SeedSpec::new(1, "x", 0)).unwrap();
        let b = rank(&RankerSpec::lasso(), &d, &SeedSpec::new(2, "y", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginal_regression_threshold() {
        let d = linear_data(2000, &[1.0, 0.1, 0.0], 0.5, 6);
        let coefs = standardized_coefficients(&d);
        let sel = select(&SelectorSpec::MarginalRegression { threshold: 0.5 }, &d, &seed()).unwrap();
        assert_eq!(sel.indices(), &[0]);
        for j in 0..3 {
            assert_eq!(sel.contains(j), coefs[j].abs() > 0.5);
        }
        assert!(SelectorSpec::MarginalRegression { threshold: 0.0 }.validate().is_err());
    }

    #[test]
    fn noise_outcome_large_threshold_selects_nothing() {
        let d = linear_data(300, &[0.0, 0.0, 0.0], 1.0, 7);
        let sel = select(&SelectorSpec::MarginalRegression { threshold: 0.5 }, &d, &seed()).unwrap();
        assert!(sel.is_empty());
    }

    #[test]
    fn single_covariate_ranking() {
        let d = linear_data(50, &[1.0], 1.0, 8);
        for spec in [
            RankerSpec::MarginalRegression,
            RankerSpec::lasso(),
            RankerSpec::ForwardStepwise { folds: 5 },
        ] {
            assert_eq!(rank(&spec, &d, &seed()).unwrap().order(), &[0]);
        }
    }

    #[test]
    fn duplicate_column_ties_break_by_index() {
        let base = linear_data(300, &[0.2, 2.0], 0.5, 9);
        let rows: Vec<Vec<f64>> = (0..base.n())
            .map(|i| {
                let r = base.row(i);
                vec![r[1], r[0], r[1]]
            })
            .collect();
        let d = Dataset::from_rows(&rows, base.y().to_vec()).unwrap();
        let r = rank(&RankerSpec::MarginalRegression, &d, &seed()).unwrap();
        assert_eq!(r.order(), &[0, 2, 1]);
    }

    #[test]
    fn stepwise_picks_signal_in_order() {
        let d = linear_data(400, &[0.0, 2.0, 0.0, 1.0, 0.0], 1.0, 10);
        let r = rank(&RankerSpec::ForwardStepwise { folds: 5 }, &d, &seed()).unwrap();
        assert_eq!(&r.order()[..2], &[1, 3]);
        let s = select(&SelectorSpec::ForwardStepwise { folds: 5 }, &d, &seed()).unwrap();
        assert!(s.contains(1) && s.contains(3));
    }

    #[test]
    fn tree_importance_finds_step() {
        let mut rng = SeedSpec::new(12, "tree-imp", 0).rng();
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[2] > 0.5 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let spec = RankerSpec::TreeImportance {
            max_depth: 1,
            min_leaf: 5,
        };
        assert_eq!(rank(&spec, &d, &seed()).unwrap().order(), &[2, 0, 1]);
        let sel = select(
            &SelectorSpec::TreeImportance {
                max_depth: 1,
                min_leaf: 5,
            },
            &d,
            &seed(),
        )
        .unwrap();
        assert_eq!(sel.indices(), &[2]);
    }

    #[test]
    fn fixed_specs_pass_through() {
        let d = linear_data(20, &[1.0, 1.0], 1.0, 13);
        let r = Ranking::new(vec![1, 0], 2).unwrap();
        assert_eq!(rank(&RankerSpec::Fixed(r.clone()), &d, &seed()).unwrap(), r);
        let bad = Ranking::new(vec![2, 0, 1], 3).unwrap();
        assert!(rank(&RankerSpec::Fixed(bad), &d, &seed()).is_err());
    }

    #[test]
    fn spec_parsing() {
        let s: SelectorSpec = toml::from_str("kind = \"lasso\"\nfolds = 5").unwrap();
        assert_eq!(
            s,
            SelectorSpec::Lasso {
                settings: LassoSettings {
                    folds: 5,
                    ..LassoSettings::default()
                }
            }
        );
        let r: RankerSpec = toml::from_str("kind = \"marginal_regression\"").unwrap();
        assert_eq!(r, RankerSpec::MarginalRegression);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn column_permutation_equivariance(s in 0u64..1000, perm_idx in 0usize..6) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let perm = perms[perm_idx];
            let d = linear_data(120, &[1.5, -0.7, 0.3], 1.0, s);
            let pd = d.permute_columns(&perm).unwrap();
            // column a of pd is column perm[a] of d
            for spec in [RankerSpec::MarginalRegression, RankerSpec::lasso()] {
                let r = rank(&spec, &d, &seed()).unwrap();
                let pr = rank(&spec, &pd, &seed()).unwrap();
                let mapped: Vec<usize> = pr.order().iter().map(|&a| perm[a]).collect();
                prop_assert_eq!(mapped, r.order().to_vec());
            }
            let t = SelectorSpec::MarginalRegression { threshold: 0.2 };
            let sel = select(&t, &d, &seed()).unwrap();
            let psel = select(&t, &pd, &seed()).unwrap();
            let mut mapped: Vec<usize> = psel.indices().iter().map(|&a| perm[a]).collect();
            mapped.sort_unstable();
            prop_assert_eq!(mapped, sel.indices().to_vec());
        }

        #[test]
        fn lower_threshold_never_removes(s in 0u64..1000, t in 0.01f64..0.9, dt in 0.0f64..0.3) {
            let d = linear_data(80, &[1.0, 0.5, 0.2, 0.0], 1.0, s);
            let hi = select(&SelectorSpec::MarginalRegression { threshold: t + dt }, &d, &seed()).unwrap();
            let lo = select(&SelectorSpec::MarginalRegression { threshold: t }, &d, &seed()).unwrap();
            prop_assert!(hi.is_subset_of(&lo));
        }
    }
}

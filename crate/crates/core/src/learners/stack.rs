use crate::data::{make_folds, Dataset, Subset};
use crate::error::{invalid_arg, Result};
use crate::rng::SeedSpec;

use super::{fit_model, LearnerSpec, Model};

const PG_ITERATIONS: usize = 500;

/// Convex combination of candidate models. Weights minimize the squared
/// error of out-of-fold candidate predictions over the probability simplex.
#[derive(Debug, Clone)]
pub struct StackModel {
    weights: Vec<f64>,
    members: Vec<(f64, Model)>,
}

impl StackModel {
    pub fn fit(
        candidates: &[LearnerSpec],
        inner_folds: usize,
        data: &Dataset,
        keep: &Subset,
        seed: &SeedSpec,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(invalid_arg("stack needs at least one candidate"));
        }
        let n = data.n();
        let k = inner_folds.min(n / 2).max(2);
        let folds = make_folds(n, k, &seed.derive("stack-folds", 0))?;
        let mut oof = vec![vec![0.0; n]; candidates.len()];
        for fold in 0..k {
            let train = data.select_rows(&folds.train_rows(fold));
            let held = folds.fold_rows(fold);
            for (c, spec) in candidates.iter().enumerate() {
                let model = fit_model(
                    spec,
                    &train,
                    keep,
                    &seed.derive("stack-inner", (fold * candidates.len() + c) as u64),
                )?;
                for &i in &held {
                    oof[c][i] = model.predict_raw(data.row(i));
                }
            }
        }
        let weights = simplex_least_squares(&oof, data.y())?;
        let mut members = Vec::new();
        for (c, spec) in candidates.iter().enumerate() {
            if weights[c] > 0.0 {
                let model = fit_model(spec, data, keep, &seed.derive("stack-full", c as u64))?;
                members.push((weights[c], model));
            }
        }
        Ok(Self { weights, members })
    }

    /// Weight per candidate, in candidate order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.members.iter().map(|(w, m)| w * m.predict_raw(row)).sum()
    }
}

/// Minimizes `|y - sum_c w_c z_c|^2` over `w >= 0, sum w = 1`, where
/// `columns[c]` is `z_c`. Uses accelerated projected gradient, then keeps the
/// best single candidate instead whenever that has lower error.
pub fn simplex_least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let m = columns.len();
    if m == 0 {
        return Err(invalid_arg("no candidate columns"));
    }
    if columns.iter().any(|c| c.len() != y.len()) || y.is_empty() {
        return Err(invalid_arg("candidate columns must match the outcome length"));
    }
    let n = y.len() as f64;
    let mut gram = vec![0.0; m * m];
    let mut cross = vec![0.0; m];
    for a in 0..m {
        cross[a] = columns[a].iter().zip(y).map(|(z, y)| z * y).sum::<f64>() / n;
        for b in a..m {
            let g = columns[a].iter().zip(&columns[b]).map(|(u, v)| u * v).sum::<f64>() / n;
            gram[a * m + b] = g;
            gram[b * m + a] = g;
        }
    }
    let yy = y.iter().map(|v| v * v).sum::<f64>() / n;
    let risk = |w: &[f64]| -> f64 {
        let mut r = yy;
        for a in 0..m {
            r -= 2.0 * w[a] * cross[a];
            for b in 0..m {
                r += w[a] * w[b] * gram[a * m + b];
            }
        }
        r
    };

    let trace: f64 = (0..m).map(|a| gram[a * m + a]).sum();
    let step = if trace > 0.0 { 1.0 / (2.0 * trace) } else { 1.0 };
    let mut w = vec![1.0 / m as f64; m];
    let mut v = w.clone();
    let mut t = 1.0f64;
    let mut grad = vec![0.0; m];
    for _ in 0..PG_ITERATIONS {
        for a in 0..m {
            grad[a] = 2.0 * ((0..m).map(|b| gram[a * m + b] * v[b]).sum::<f64>() - cross[a]);
        }
        let next = project_simplex(&(0..m).map(|a| v[a] - step * grad[a]).collect::<Vec<_>>());
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        for a in 0..m {
            v[a] = next[a] + (t - 1.0) / t_next * (next[a] - w[a]);
        }
        w = next;
        t = t_next;
    }

    let mut best = w.clone();
    let mut best_risk = risk(&w);
    for c in 0..m {
        let mut vertex = vec![0.0; m];
        vertex[c] = 1.0;
        let r = risk(&vertex);
        if r < best_risk {
            best_risk = r;
            best = vertex;
        }
    }
    Ok(best)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

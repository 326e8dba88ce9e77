use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Subset};
use crate::error::{Error, Result};

/// `intercept + sum_j coef_j * x[col_j]`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub intercept: f64,
    pub cols: Vec<usize>,
    pub coefs: Vec<f64>,
}

/// Centered cross-products of the kept columns.
struct Moments {
    x_mean: Vec<f64>,
    y_mean: f64,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

fn moments(data: &Dataset, cols: &[usize]) -> Moments {
    let n = data.n() as f64;
    let q = cols.len();
    let mut x_mean = vec![0.0; q];
    for i in 0..data.n() {
        let row = data.row(i);
        for (a, &c) in cols.iter().enumerate() {
            x_mean[a] += row[c];
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n);
    let y_mean = data.y().iter().sum::<f64>() / n;
    let mut xtx = DMatrix::zeros(q, q);
    let mut xty = DVector::zeros(q);
    let mut centered = vec![0.0; q];
    for i in 0..data.n() {
        let row = data.row(i);
        for (a, &c) in cols.iter().enumerate() {
            centered[a] = row[c] - x_mean[a];
        }
        let yc = data.y()[i] - y_mean;
        for a in 0..q {
            xty[a] += centered[a] * yc;
            for b in a..q {
                xtx[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
    }
    Moments {
        x_mean,
        y_mean,
        xtx,
        xty,
    }
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(b))
}

fn is_well_conditioned(a: &DMatrix<f64>) -> bool {
    let eig = a.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min > 1e-12 * max
}

impl LinearModel {
    /// Least squares with intercept. A singular design falls back to a
    /// ridge penalty of `1e-8 * trace / q` on the centered cross-products.
    pub fn ols(data: &Dataset, keep: &Subset) -> Result<Self> {
        let cols = keep.indices().to_vec();
        let m = moments(data, &cols);
        let coefs = if is_well_conditioned(&m.xtx) {
            solve_spd(m.xtx.clone(), &m.xty)
        } else {
            None
        };
        let coefs = match coefs {
            Some(c) => c,
            None => {
                let q = cols.len();
                let lambda = 1e-8 * m.xtx.trace().max(f64::MIN_POSITIVE) / q as f64;
                let mut a = m.xtx.clone();
                for d in 0..q {
                    a[(d, d)] += lambda;
                }
                solve_spd(a, &m.xty)
                    .ok_or_else(|| Error::InvalidState("ridge fallback failed on a degenerate design".into()))?
            }
        };
        Ok(Self::assemble(cols, &m, coefs))
    }

    /// Ridge regression on standardized columns:
    /// minimizes `(1/n)|y - Xb|^2 + lambda |b|^2` in the standardized scale.
    pub fn ridge(data: &Dataset, keep: &Subset, lambda: f64) -> Result<Self> {
        let cols = keep.indices().to_vec();
        let m = moments(data, &cols);
        let n = data.n() as f64;
        let q = cols.len();
        let scale: Vec<f64> = (0..q)
            .map(|a| {
                let s = (m.xtx[(a, a)] / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let mut a = DMatrix::zeros(q, q);
        let mut b = DVector::zeros(q);
        for r in 0..q {
            b[r] = m.xty[r] / (n * scale[r]);
            for c in 0..q {
                a[(r, c)] = m.xtx[(r, c)] / (n * scale[r] * scale[c]);
            }
            a[(r, r)] += lambda.max(1e-12);
        }
        let beta_std =
            solve_spd(a, &b).ok_or_else(|| Error::InvalidState("ridge system is not positive definite".into()))?;
        let coefs = DVector::from_iterator(q, (0..q).map(|r| beta_std[r] / scale[r]));
        Ok(Self::assemble(cols, &m, coefs))
    }

    fn assemble(cols: Vec<usize>, m: &Moments, coefs: DVector<f64>) -> Self {
        let coefs: Vec<f64> = coefs.iter().cloned().collect();
        let intercept = m.y_mean - coefs.iter().zip(&m.x_mean).map(|(b, x)| b * x).sum::<f64>();
        Self { intercept, cols, coefs }
    }

    #[inline]
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.cols.iter().zip(&self.coefs).map(|(&c, b)| b * row[c]).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tests::random_data;

    #[test]
    fn exact_line_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.7 - 2.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] + 3.0).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let m = LinearModel::ols(&d, &Subset::full(1)).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-8);
        assert!((m.coefs[0] - 2.0).abs() < 1e-8);
        for i in 0..d.n() {
            assert!((m.predict(d.row(i)) - d.y()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let d = random_data(80, 4, 9);
        let keep = Subset::new(vec![0, 1, 3], 4).unwrap();
        let m = LinearModel::ols(&d, &keep).unwrap();
        let resid: Vec<f64> = (0..d.n()).map(|i| d.y()[i] - m.predict(d.row(i))).collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-8);
        for &j in keep.indices() {
            let dot: f64 = (0..d.n()).map(|i| resid[i] * d.get(i, j)).sum();
            assert!(dot.abs() < 1e-8, "column {j}: {dot}");
        }
    }

    #[test]
    fn duplicated_column_falls_back_to_ridge() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 1.0 + 4.0 * i as f64).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let m = LinearModel::ols(&d, &Subset::full(2)).unwrap();
        assert!((m.coefs[0] + m.coefs[1] - 4.0).abs() < 1e-6);
        assert!((m.predict(&[3.0, 3.0]) - 13.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_shrinks_toward_zero() {
        let d = random_data(50, 2, 4);
        let keep = Subset::full(2);
        let ols = LinearModel::ols(&d, &keep).unwrap();
        let light = LinearModel::ridge(&d, &keep, 1e-9).unwrap();
        let heavy = LinearModel::ridge(&d, &keep, 100.0).unwrap();
        for a in 0..2 {
            assert!((ols.coefs[a] - light.coefs[a]).abs() < 1e-6);
        }
        let norm = |m: &LinearModel| m.coefs.iter().map(|b| b * b).sum::<f64>();
        assert!(norm(&heavy) < 0.01 * norm(&ols));
    }
}

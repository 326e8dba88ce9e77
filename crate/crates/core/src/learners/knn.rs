use crate::data::{Dataset, Subset};
use crate::error::{invalid_arg, Result};

/// k-nearest-neighbour regression on standardized kept columns.
/// Distance ties resolve toward the lower training row index.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    cols: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Standardized training points, row-major over `cols`.
    points: Vec<f64>,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn fit(data: &Dataset, keep: &Subset, k: usize) -> Result<Self> {
        if k > data.n() {
            return Err(invalid_arg(format!("knn k = {k} exceeds n = {}", data.n())));
        }
        let cols = keep.indices().to_vec();
        let n = data.n() as f64;
        let mut center = Vec::with_capacity(cols.len());
        let mut scale = Vec::with_capacity(cols.len());
        for &c in &cols {
            let col = data.column(c);
            let mu = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            center.push(mu);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        let mut points = Vec::with_capacity(data.n() * cols.len());
        for i in 0..data.n() {
            let row = data.row(i);
            for (a, &c) in cols.iter().enumerate() {
                points.push((row[c] - center[a]) / scale[a]);
            }
        }
        Ok(Self {
            k,
            cols,
            center,
            scale,
            points,
            y: data.y().to_vec(),
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let q = self.cols.len();
        let query: Vec<f64> = self
            .cols
            .iter()
            .enumerate()
            .map(|(a, &c)| (row[c] - self.center[a]) / self.scale[a])
            .collect();
        let mut dist: Vec<(f64, usize)> = self
            .points
            .chunks_exact(q)
            .enumerate()
            .map(|(i, pt)| {
                let d2 = pt.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        dist[..self.k].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.k as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::tests::random_data;

    #[test]
    fn one_neighbour_reproduces_training_outcomes() {
        let d = random_data(30, 3, 2);
        let m = KnnModel::fit(&d, &Subset::full(3), 1).unwrap();
        for i in 0..d.n() {
            assert_eq!(m.predict(d.row(i)), d.y()[i]);
        }
    }

    #[test]
    fn all_neighbours_give_the_mean() {
        let d = random_data(12, 2, 3);
        let m = KnnModel::fit(&d, &Subset::full(2), 12).unwrap();
        let mean = d.y().iter().sum::<f64>() / 12.0;
        assert!((m.predict(&[0.3, -0.2]) - mean).abs() < 1e-12);
    }

    #[test]
    fn equidistant_tie_prefers_lower_index() {
        let d = Dataset::from_rows(
            &[vec![-1.0], vec![1.0], vec![3.0], vec![-3.0]],
            vec![10.0, 20.0, 30.0, 40.0],
        )
        .unwrap();
        let m = KnnModel::fit(&d, &Subset::full(1), 1).unwrap();
        // 0.0 is the midpoint of rows 0 and 1
        assert_eq!(m.predict(&[0.0]), 10.0);
    }

    #[test]
    fn k_larger_than_n_rejected() {
        let d = random_data(5, 1, 1);
        assert!(KnnModel::fit(&d, &Subset::full(1), 6).is_err());
    }
}

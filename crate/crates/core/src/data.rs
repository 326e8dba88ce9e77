//! Data containers: datasets, empirical measures, covariate subsets,
//! rankings and fold assignments.
//!
//! Covariate indices are 0-based everywhere inside the crate. Display
//! implementations and [`Dataset::column_label`] switch to column names, or
//! 1-based indices when the dataset is unnamed.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::rng::SeedSpec;

/// `n` observations of `p` real covariates plus a real outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    p: usize,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from a row-major covariate buffer.
    pub fn new(x: Vec<f64>, y: Vec<f64>, p: usize) -> Result<Self> {
        let n = y.len();
        if p == 0 {
            return Err(invalid_arg("dataset needs at least one covariate"));
        }
        if n < 2 {
            return Err(invalid_arg(format!("dataset needs n >= 2, got {n}")));
        }
        if x.len() != n * p {
            return Err(invalid_arg(format!(
                "covariate buffer has {} values, expected {n} x {p}",
                x.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(invalid_arg(format!(
                "non-finite covariate at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(invalid_arg(format!("non-finite outcome at row {i}")));
        }
        Ok(Self {
            x,
            y,
            n,
            p,
            column_names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(invalid_arg(format!(
                "{} covariate rows but {} outcomes",
                rows.len(),
                y.len()
            )));
        }
        if rows.iter().any(|r| r.len() != p) {
            return Err(invalid_arg("ragged covariate rows"));
        }
        Self::new(rows.concat(), y, p)
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p {
            return Err(invalid_arg(format!(
                "{} column names for {} covariates",
                names.len(),
                self.p
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.p + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// User-facing label of covariate `j`: its name, or `j + 1`.
    pub fn column_label(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => (j + 1).to_string(),
        }
    }

    /// A new dataset made of the listed rows, duplicates kept.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.p);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset {
            n: rows.len(),
            p: self.p,
            x,
            y,
            column_names: self.column_names.clone(),
        }
    }

    /// The same observations with covariate columns reordered:
    /// new column `c` is old column `order[c]`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Dataset> {
        Ranking::new(order.to_vec(), self.p)?;
        let mut x = Vec::with_capacity(self.x.len());
        for i in 0..self.n {
            let row = self.row(i);
            x.extend(order.iter().map(|&j| row[j]));
        }
        let column_names = self
            .column_names
            .as_ref()
            .map(|names| order.iter().map(|&j| names[j].clone()).collect());
        Ok(Dataset {
            x,
            y: self.y.clone(),
            n: self.n,
            p: self.p,
            column_names,
        })
    }

    pub fn full_measure(&self) -> EmpiricalMeasure<'_> {
        EmpiricalMeasure {
            data: self,
            indices: (0..self.n).collect(),
        }
    }
}

/// An empirical distribution over dataset rows. Duplicated indices carry
/// multiplicity, which is how bootstrap measures are represented.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure<'a> {
    data: &'a Dataset,
    indices: Vec<usize>,
}

impl<'a> EmpiricalMeasure<'a> {
    pub fn new(data: &'a Dataset, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= data.n()) {
            return Err(invalid_arg(format!(
                "measure index {bad} out of range for n = {}",
                data.n()
            )));
        }
        Ok(Self { data, indices })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.indices.iter().map(|&i| self.data.y()[i])
    }

    /// `P h`: the average of `h(x, y)` over the listed rows.
    pub fn integrate<H>(&self, h: H) -> Result<f64>
    where
        H: Fn(&[f64], f64) -> f64,
    {
        if self.indices.is_empty() {
            return Err(Error::InvalidState("cannot integrate over an empty measure".into()));
        }
        let total: f64 = self
            .indices
            .iter()
            .map(|&i| h(self.data.row(i), self.data.y()[i]))
            .sum();
        Ok(total / self.indices.len() as f64)
    }
}

/// A set of covariate indices, kept sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid_arg("duplicate index in subset"));
        }
        if let Some(&bad) = indices.last().filter(|&&j| j >= p) {
            return Err(invalid_arg(format!("subset index {bad} out of range for p = {p}")));
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn full(p: usize) -> Self {
        Self((0..p).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }

    /// `{0..p} \ self`.
    pub fn complement(&self, p: usize) -> Subset {
        Subset((0..p).filter(|&j| !self.contains(j)).collect())
    }

    pub fn labels(&self, data: &Dataset) -> Vec<String> {
        self.0.iter().map(|&j| data.column_label(j)).collect()
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, j) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

/// A permutation of the covariate indices, most predictive first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ranking(Vec<usize>);

impl Ranking {
    pub fn new(order: Vec<usize>, p: usize) -> Result<Self> {
        if order.len() != p {
            return Err(invalid_arg(format!(
                "ranking has {} entries, expected {p}",
                order.len()
            )));
        }
        let mut seen = vec![false; p];
        for &j in &order {
            if j >= p {
                return Err(invalid_arg(format!("ranking index {j} out of range for p = {p}")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(invalid_arg(format!("index {j} appears twice in ranking")));
            }
        }
        Ok(Self(order))
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The first `j` ranked covariates as a subset, `1 <= j <= p`.
    pub fn prefix(&self, j: usize) -> Result<Subset> {
        if j == 0 || j > self.0.len() {
            return Err(invalid_arg(format!("prefix length {j} outside 1..={}", self.0.len())));
        }
        let mut idx = self.0[..j].to_vec();
        idx.sort_unstable();
        Ok(Subset(idx))
    }
}

impl fmt::Display for Ranking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, j) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, ")")
    }
}

/// A partition of the rows into `k` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Wraps explicit fold labels; every fold must be nonempty.
    pub fn from_labels(k: usize, fold_of: Vec<usize>) -> Result<Self> {
        if k < 2 {
            return Err(invalid_arg(format!("need at least 2 folds, got {k}")));
        }
        let mut sizes = vec![0usize; k];
        for &f in &fold_of {
            if f >= k {
                return Err(invalid_arg(format!("fold label {f} out of range for k = {k}")));
            }
            sizes[f] += 1;
        }
        if sizes.contains(&0) {
            return Err(invalid_arg("every fold must be nonempty"));
        }
        Ok(Self { k, fold_of })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Uniformly random balanced partition of `0..n` into `k` folds.
pub fn make_folds(n: usize, k: usize, seed: &SeedSpec) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(invalid_arg(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(invalid_arg(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    FoldAssignment::from_labels(k, fold_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seed() -> SeedSpec {
        SeedSpec::new(11, "folds", 0)
    }

    #[test]
    fn folds_exact_division() {
        let f = make_folds(10, 5, &seed()).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
    }

    #[test]
    fn folds_remainder_spread() {
        let f = make_folds(11, 5, &seed()).unwrap();
        let mut sizes = f.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn folds_deterministic() {
        let a = make_folds(10, 5, &seed()).unwrap();
        let b = make_folds(10, 5, &seed()).unwrap();
        assert_eq!(a.fold_of(), b.fold_of());
    }

    #[test]
    fn folds_reject_bad_k() {
        assert!(matches!(make_folds(3, 4, &seed()), Err(Error::InvalidArgument(_))));
        assert!(matches!(make_folds(3, 1, &seed()), Err(Error::InvalidArgument(_))));
    }

    fn toy() -> Dataset {
        Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![2.0, 4.0]).unwrap()
    }

    #[test]
    fn integrate_constant() {
        let d = toy();
        let m = EmpiricalMeasure::new(&d, vec![1, 1, 0]).unwrap();
        assert_eq!(m.integrate(|_, _| 1.0).unwrap(), 1.0);
    }

    #[test]
    fn integrate_counts_multiplicity() {
        let d = toy();
        let m = EmpiricalMeasure::new(&d, vec![0, 0, 1]).unwrap();
        let v = m.integrate(|_, y| y).unwrap();
        assert!((v - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_centered_outcome_is_zero() {
        let d = Dataset::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0], vec![5.0]],
            vec![1.5, -2.0, 7.25, 3.0],
        )
        .unwrap();
        let ybar = d.y().iter().sum::<f64>() / 4.0;
        let v = d.full_measure().integrate(|_, y| y - ybar).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn integrate_empty_is_invalid_state() {
        let d = toy();
        let m = EmpiricalMeasure::new(&d, vec![]).unwrap();
        assert!(matches!(m.integrate(|_, y| y), Err(Error::InvalidState(_))));
    }

    #[test]
    fn prefix_examples() {
        // (3,2,1) in 1-based indices
        let r = Ranking::new(vec![2, 1, 0], 3).unwrap();
        assert_eq!(r.prefix(2).unwrap().indices(), &[1, 2]);
        assert_eq!(r.prefix(3).unwrap(), Subset::full(3));
        assert_eq!(r.prefix(1).unwrap().indices(), &[2]);
        assert!(r.prefix(0).is_err());
        assert!(r.prefix(4).is_err());
    }

    #[test]
    fn ranking_rejects_non_permutations() {
        assert!(Ranking::new(vec![0, 0, 1], 3).is_err());
        assert!(Ranking::new(vec![0, 1], 3).is_err());
        assert!(Ranking::new(vec![0, 1, 3], 3).is_err());
    }

    #[test]
    fn dataset_rejects_non_finite() {
        assert!(Dataset::from_rows(&[vec![f64::NAN], vec![1.0]], vec![0.0, 1.0]).is_err());
        assert!(Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0.0, f64::INFINITY]).is_err());
        assert!(Dataset::from_rows(&[vec![0.0]], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_balance(n in 2usize..200, k in 2usize..12, s in any::<u64>()) {
            prop_assume!(k <= n);
            let f = make_folds(n, k, &SeedSpec::new(s, "folds", 0)).unwrap();
            let mut all: Vec<usize> = (0..k).flat_map(|j| f.fold_rows(j)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes = f.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn integrate_is_linear(
            ys in proptest::collection::vec(-100.0f64..100.0, 2..40),
            a in -5.0f64..5.0, b in -5.0f64..5.0,
        ) {
            let rows: Vec<Vec<f64>> = ys.iter().map(|v| vec![v * 0.5]).collect();
            let d = Dataset::from_rows(&rows, ys.clone()).unwrap();
            let m = d.full_measure();
            let h1 = |x: &[f64], y: f64| y * y + x[0];
            let h2 = |x: &[f64], y: f64| (y - x[0]).sin();
            let lhs = m.integrate(|x, y| a * h1(x, y) + b * h2(x, y)).unwrap();
            let rhs = a * m.integrate(h1).unwrap() + b * m.integrate(h2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn prefixes_nest(perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle()) {
            let r = Ranking::new(perm, 8).unwrap();
            for j in 1..8 {
                let a = r.prefix(j).unwrap();
                let b = r.prefix(j + 1).unwrap();
                prop_assert!(a.is_subset_of(&b));
                prop_assert_eq!(a.len() + 1, b.len());
            }
        }
    }
}

//! Built-in regression learners used to estimate the full and reduced
//! conditional-mean functions.
//!
//! Every fitted model refers to covariates by their original column index and
//! only ever reads the columns it was trained on, so a learner fitted on
//! `keep` is a function of `x[keep]` alone. Binary outcomes are fitted by
//! least squares on the 0/1 labels and predictions are clamped to `[0, 1]`.

mod knn;
mod linear;
mod stack;
pub(crate) mod tree;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Subset};
use crate::error::{invalid_arg, Result};
use crate::metrics::{OutcomeKind, PredictionFunction};
use crate::rng::SeedSpec;

pub use knn::KnnModel;
pub use linear::LinearModel;
pub use stack::{simplex_least_squares, StackModel};
pub use tree::{BoostedModel, TreeModel};

/// Which learner to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    /// The sample mean of the outcome, ignoring covariates.
    Constant,
    Ols,
    Ridge {
        #[serde(default = "defaults::ridge_lambda")]
        lambda: f64,
    },
    Knn {
        #[serde(default = "defaults::knn_k")]
        k: usize,
    },
    RegressionTree {
        #[serde(default = "defaults::tree_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
    },
    /// Squared-error gradient boosting of shallow trees.
    BoostedStumps {
        #[serde(default = "defaults::rounds")]
        rounds: usize,
        #[serde(default = "defaults::shrinkage")]
        shrinkage: f64,
        #[serde(default = "defaults::boost_depth")]
        depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
    },
    /// Convex combination of candidates, weights chosen by inner
    /// cross-validation.
    Stack {
        #[serde(default = "defaults::stack_candidates")]
        candidates: Vec<LearnerSpec>,
        #[serde(default = "defaults::inner_folds")]
        inner_folds: usize,
    },
}

pub mod defaults {
    use super::LearnerSpec;

    pub fn ridge_lambda() -> f64 {
        1.0
    }
    pub fn knn_k() -> usize {
        10
    }
    pub fn tree_depth() -> usize {
        4
    }
    pub fn min_leaf() -> usize {
        5
    }
    pub fn rounds() -> usize {
        300
    }
    pub fn shrinkage() -> f64 {
        0.1
    }
    pub fn boost_depth() -> usize {
        2
    }
    pub fn inner_folds() -> usize {
        5
    }
    pub fn stack_candidates() -> Vec<LearnerSpec> {
        vec![LearnerSpec::Ols, LearnerSpec::boosted(), LearnerSpec::Knn { k: 20 }]
    }
}

impl LearnerSpec {
    pub fn boosted() -> Self {
        LearnerSpec::BoostedStumps {
            rounds: defaults::rounds(),
            shrinkage: defaults::shrinkage(),
            depth: defaults::boost_depth(),
            min_leaf: defaults::min_leaf(),
        }
    }

    pub fn regression_tree() -> Self {
        LearnerSpec::RegressionTree {
            max_depth: defaults::tree_depth(),
            min_leaf: defaults::min_leaf(),
        }
    }

    pub fn stack() -> Self {
        LearnerSpec::Stack {
            candidates: defaults::stack_candidates(),
            inner_folds: defaults::inner_folds(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Constant => "constant",
            LearnerSpec::Ols => "ols",
            LearnerSpec::Ridge { .. } => "ridge",
            LearnerSpec::Knn { .. } => "knn",
            LearnerSpec::RegressionTree { .. } => "regression_tree",
            LearnerSpec::BoostedStumps { .. } => "boosted_stumps",
            LearnerSpec::Stack { .. } => "stack",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Constant | LearnerSpec::Ols => Ok(()),
            LearnerSpec::Ridge { lambda } if !(*lambda >= 0.0 && lambda.is_finite()) => Err(invalid_arg(format!(
                "ridge lambda must be finite and >= 0, got {lambda}"
            ))),
            LearnerSpec::Ridge { .. } => Ok(()),
            LearnerSpec::Knn { k } if *k == 0 => Err(invalid_arg("knn k must be >= 1")),
            LearnerSpec::Knn { .. } => Ok(()),
            LearnerSpec::RegressionTree { max_depth, min_leaf } => {
                if *max_depth == 0 || *min_leaf == 0 {
                    return Err(invalid_arg("tree depth and min_leaf must be >= 1"));
                }
                Ok(())
            }
            LearnerSpec::BoostedStumps {
                rounds,
                shrinkage,
                depth,
                min_leaf,
            } => {
                if *rounds == 0 || *depth == 0 || *min_leaf == 0 {
                    return Err(invalid_arg("boosting rounds, depth and min_leaf must be >= 1"));
                }
                if !(*shrinkage > 0.0 && *shrinkage <= 1.0) {
                    return Err(invalid_arg(format!("shrinkage must lie in (0, 1], got {shrinkage}")));
                }
                Ok(())
            }
            LearnerSpec::Stack {
                candidates,
                inner_folds,
            } => {
                if candidates.is_empty() {
                    return Err(invalid_arg("stack needs at least one candidate"));
                }
                if *inner_folds < 2 {
                    return Err(invalid_arg("stack needs at least 2 inner folds"));
                }
                candidates.iter().try_for_each(LearnerSpec::validate)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Constant(f64),
    Linear(LinearModel),
    Knn(KnnModel),
    Tree(TreeModel),
    Boosted(BoostedModel),
    Stack(StackModel),
}

impl Model {
    fn predict_raw(&self, row: &[f64]) -> f64 {
        match self {
            Model::Constant(c) => *c,
            Model::Linear(m) => m.predict(row),
            Model::Knn(m) => m.predict(row),
            Model::Tree(m) => m.predict(row),
            Model::Boosted(m) => m.predict(row),
            Model::Stack(m) => m.predict(row),
        }
    }
}

/// A learner fitted on the columns in `keep`.
#[derive(Debug, Clone)]
pub struct FittedLearner {
    keep: Subset,
    model: Model,
    outcome_kind: OutcomeKind,
}

impl FittedLearner {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn predict_rows(&self, data: &Dataset, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.predict(data.row(i))).collect()
    }
}

impl PredictionFunction for FittedLearner {
    fn predict(&self, row: &[f64]) -> f64 {
        let raw = self.model.predict_raw(row);
        match self.outcome_kind {
            OutcomeKind::Continuous => raw,
            OutcomeKind::Binary => raw.clamp(0.0, 1.0),
        }
    }

    fn feature_subset(&self) -> &Subset {
        &self.keep
    }
}

/// Fits `spec` on `data` using only the columns in `keep`. An empty `keep`
/// always yields the constant mean predictor.
pub fn fit(
    spec: &LearnerSpec,
    data: &Dataset,
    keep: &Subset,
    outcome_kind: OutcomeKind,
    seed: &SeedSpec,
) -> Result<FittedLearner> {
    spec.validate()?;
    if data.n() == 0 {
        return Err(invalid_arg("cannot fit on empty data"));
    }
    if keep.indices().iter().any(|&j| j >= data.p()) {
        return Err(invalid_arg("kept column out of range"));
    }
    if outcome_kind == OutcomeKind::Binary && data.y().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(invalid_arg("binary outcome must be coded 0/1"));
    }
    let model = fit_model(spec, data, keep, seed)?;
    Ok(FittedLearner {
        keep: keep.clone(),
        model,
        outcome_kind,
    })
}

/// Stacking entry point; identical to [`fit`] but insists on a stack spec
/// with at least two candidates.
pub fn fit_stack(
    spec: &LearnerSpec,
    data: &Dataset,
    keep: &Subset,
    outcome_kind: OutcomeKind,
    seed: &SeedSpec,
) -> Result<FittedLearner> {
    match spec {
        LearnerSpec::Stack { candidates, .. } if candidates.len() >= 2 => fit(spec, data, keep, outcome_kind, seed),
        LearnerSpec::Stack { .. } => Err(invalid_arg("stacking needs at least 2 candidates")),
        other => Err(invalid_arg(format!("expected a stack spec, got {}", other.name()))),
    }
}

pub(crate) fn fit_model(spec: &LearnerSpec, data: &Dataset, keep: &Subset, seed: &SeedSpec) -> Result<Model> {
    let y = data.y();
    if keep.is_empty() {
        return Ok(Model::Constant(y.iter().sum::<f64>() / y.len() as f64));
    }
    Ok(match spec {
        LearnerSpec::Constant => Model::Constant(y.iter().sum::<f64>() / y.len() as f64),
        LearnerSpec::Ols => Model::Linear(LinearModel::ols(data, keep)?),
        LearnerSpec::Ridge { lambda } => Model::Linear(LinearModel::ridge(data, keep, *lambda)?),
        LearnerSpec::Knn { k } => Model::Knn(KnnModel::fit(data, keep, *k)?),
        LearnerSpec::RegressionTree { max_depth, min_leaf } => {
            Model::Tree(TreeModel::fit(data, keep, *max_depth, *min_leaf))
        }
        LearnerSpec::BoostedStumps {
            rounds,
            shrinkage,
            depth,
            min_leaf,
        } => Model::Boosted(BoostedModel::fit(data, keep, *rounds, *shrinkage, *depth, *min_leaf)),
        LearnerSpec::Stack {
            candidates,
            inner_folds,
        } => Model::Stack(StackModel::fit(candidates, *inner_folds, data, keep, seed)?),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn seed() -> SeedSpec {
        SeedSpec::new(5, "learner", 0)
    }

    pub(crate) fn random_data(n: usize, p: usize, s: u64) -> Dataset {
        let mut rng = SeedSpec::new(s, "test-data", 0).rng();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| r[0] * 2.0 + r.get(1).map_or(0.0, |v| v * v) + rng.random::<f64>() * 0.3)
            .collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    fn all_specs() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::Constant,
            LearnerSpec::Ols,
            LearnerSpec::Ridge { lambda: 0.5 },
            LearnerSpec::Knn { k: 3 },
            LearnerSpec::regression_tree(),
            LearnerSpec::BoostedStumps {
                rounds: 20,
                shrinkage: 0.1,
                depth: 2,
                min_leaf: 3,
            },
            LearnerSpec::Stack {
                candidates: vec![LearnerSpec::Ols, LearnerSpec::Knn { k: 5 }],
                inner_folds: 3,
            },
        ]
    }

    #[test]
    fn empty_keep_gives_mean() {
        let d = Dataset::from_rows(&[vec![0.0], vec![5.0], vec![1.0]], vec![1.0, 2.0, 3.0]).unwrap();
        for spec in all_specs() {
            let f = fit(&spec, &d, &Subset::empty(), OutcomeKind::Continuous, &seed()).unwrap();
            assert_eq!(f.predict(&[100.0]), 2.0, "{}", spec.name());
        }
    }

    #[test]
    fn every_learner_predicts_finite_values_on_training_rows() {
        let d = random_data(60, 3, 1);
        let keep = Subset::full(3);
        for spec in all_specs() {
            let f = fit(&spec, &d, &keep, OutcomeKind::Continuous, &seed()).unwrap();
            for i in 0..d.n() {
                assert!(f.predict(d.row(i)).is_finite(), "{}", spec.name());
            }
        }
    }

    #[test]
    fn binary_predictions_are_clamped() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let f = fit(&LearnerSpec::Ols, &d, &Subset::full(1), OutcomeKind::Binary, &seed()).unwrap();
        assert_eq!(f.predict(&[1000.0]), 1.0);
        assert_eq!(f.predict(&[-1000.0]), 0.0);
        let bad = Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0.0, 2.0]).unwrap();
        assert!(fit(&LearnerSpec::Ols, &bad, &Subset::full(1), OutcomeKind::Binary, &seed()).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(LearnerSpec::Knn { k: 0 }.validate().is_err());
        assert!(LearnerSpec::Ridge { lambda: -1.0 }.validate().is_err());
        assert!(LearnerSpec::Stack {
            candidates: vec![],
            inner_folds: 5
        }
        .validate()
        .is_err());
        let d = random_data(20, 2, 3);
        let single = LearnerSpec::Stack {
            candidates: vec![LearnerSpec::Ols],
            inner_folds: 3,
        };
        assert!(fit_stack(&single, &d, &Subset::full(2), OutcomeKind::Continuous, &seed()).is_err());
        assert!(fit_stack(
            &LearnerSpec::Ols,
            &d,
            &Subset::full(2),
            OutcomeKind::Continuous,
            &seed()
        )
        .is_err());
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec: LearnerSpec = toml::from_str("kind = \"boosted_stumps\"\nrounds = 50").unwrap();
        assert_eq!(
            spec,
            LearnerSpec::BoostedStumps {
                rounds: 50,
                shrinkage: 0.1,
                depth: 2,
                min_leaf: 5
            }
        );
        let stack: LearnerSpec = toml::from_str("kind = \"stack\"").unwrap();
        assert_eq!(stack, LearnerSpec::stack());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn untouched_columns_never_matter(s in any::<u64>(), spec_idx in 0usize..7, noise in -50.0f64..50.0) {
            let d = random_data(40, 3, s);
            let spec = &all_specs()[spec_idx];
            let keep = Subset::new(vec![0, 2], 3).unwrap();
            let f = fit(spec, &d, &keep, OutcomeKind::Continuous, &seed()).unwrap();
            // refit on data whose excluded column is scrambled
            let rows: Vec<Vec<f64>> = (0..d.n()).map(|i| {
                let mut r = d.row(i).to_vec();
                r[1] = noise * (i as f64).sin();
                r
            }).collect();
            let d2 = Dataset::from_rows(&rows, d.y().to_vec()).unwrap();
            let g = fit(spec, &d2, &keep, OutcomeKind::Continuous, &seed()).unwrap();
            for i in 0..d.n() {
                let a = f.predict(d.row(i));
                prop_assert_eq!(a.to_bits(), g.predict(d2.row(i)).to_bits());
                let mut probe = d.row(i).to_vec();
                probe[1] += noise;
                prop_assert_eq!(a.to_bits(), f.predict(&probe).to_bits());
            }
        }
    }
}

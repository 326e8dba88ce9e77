//! Predictiveness metrics of the form `V(f, P) = U(zeta(f, P), eta(P))`,
//! where `zeta(f, P) = P[zeta_dot(f)]` is linear in `P`.
//!
//! Besides `U` itself a metric supplies both partial derivatives of `U`, the
//! per-observation loss `zeta_dot`, a plug-in estimate of `eta` and the
//! influence function `phi` of that estimate. Together these give the
//! per-observation influence values used for Wald inference:
//!
//! ```text
//! V_dot(x, y) = dU/dzeta * (zeta_dot(x, y) - zeta) + dU/deta * phi(x, y)
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{EmpiricalMeasure, Subset};
use crate::error::{invalid_arg, Error, Result};

/// Lower/upper clamp applied to probabilities scored by the deviance metric.
pub const DEVIANCE_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// A fitted predictor `x -> f(x)`.
pub trait PredictionFunction: Send + Sync {
    fn predict(&self, row: &[f64]) -> f64;

    /// Covariates the predictor may read.
    fn feature_subset(&self) -> &Subset;
}

/// Plug-in quantities of the outcome distribution: `eta` and the location
/// used by `phi` (the outcome mean, or the success proportion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nuisance {
    pub eta: f64,
    pub center: f64,
}

pub trait PredictivenessMetric: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn outcome_kind(&self) -> OutcomeKind;

    fn u(&self, zeta: f64, eta: f64) -> f64;

    fn u_dzeta(&self, zeta: f64, eta: f64) -> f64;

    fn u_deta(&self, zeta: f64, eta: f64) -> f64;

    /// Maps a learner's raw output onto the prediction this metric scores
    /// (probability clamping, Bayes thresholding).
    fn prepare(&self, raw: f64) -> f64 {
        raw
    }

    fn zeta_dot(&self, prediction: f64, y: f64) -> Result<f64>;

    fn nuisance(&self, ys: &[f64]) -> Result<Nuisance>;

    /// Influence function of the plug-in `eta`, evaluated at `y`.
    fn phi(&self, nuisance: &Nuisance, y: f64) -> f64;
}

/// R-squared: `1 - E(Y - f)^2 / Var(Y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RSquared;

/// Deviance complement: `1 - E nu(Y, f) / nu(pi, pi)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deviance;

/// Classification accuracy: `P(Y = f(X))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accuracy;

pub fn metric_rsquared() -> RSquared {
    RSquared
}

pub fn metric_deviance() -> Deviance {
    Deviance
}

pub fn metric_accuracy() -> Accuracy {
    Accuracy
}

/// Looks up a built-in metric by its configuration name.
pub fn metric_by_name(name: &str) -> Result<Box<dyn PredictivenessMetric>> {
    match name {
        "r_squared" => Ok(Box::new(RSquared)),
        "deviance" => Ok(Box::new(Deviance)),
        "accuracy" => Ok(Box::new(Accuracy)),
        other => Err(invalid_arg(format!(
            "unknown metric '{other}' (expected r_squared, deviance or accuracy)"
        ))),
    }
}

fn mean(ys: &[f64]) -> f64 {
    ys.iter().sum::<f64>() / ys.len() as f64
}

fn require_nonempty(ys: &[f64]) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::InvalidState("empty measure".into()));
    }
    Ok(())
}

fn require_binary(ys: &[f64]) -> Result<()> {
    if let Some(y) = ys.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(invalid_arg(format!("binary outcome expected, found {y}")));
    }
    Ok(())
}

/// `nu(u, v) = u log v + (1 - u) log(1 - v)`.
fn nu(u: f64, v: f64) -> f64 {
    u * v.ln() + (1.0 - u) * (1.0 - v).ln()
}

impl PredictivenessMetric for RSquared {
    fn name(&self) -> &'static str {
        "r_squared"
    }

    fn outcome_kind(&self) -> OutcomeKind {
        OutcomeKind::Continuous
    }

    fn u(&self, zeta: f64, eta: f64) -> f64 {
        1.0 - zeta / eta
    }

    fn u_dzeta(&self, _zeta: f64, eta: f64) -> f64 {
        -1.0 / eta
    }

    fn u_deta(&self, zeta: f64, eta: f64) -> f64 {
        zeta / (eta * eta)
    }

    fn zeta_dot(&self, prediction: f64, y: f64) -> Result<f64> {
        let r = y - prediction;
        Ok(r * r)
    }

    fn nuisance(&self, ys: &[f64]) -> Result<Nuisance> {
        require_nonempty(ys)?;
        let center = mean(ys);
        let eta = ys.iter().map(|y| (y - center).powi(2)).sum::<f64>() / ys.len() as f64;
        if eta <= 0.0 {
            return Err(Error::DegenerateMetric(
                "outcome variance is zero; R-squared is undefined".into(),
            ));
        }
        Ok(Nuisance { eta, center })
    }

    fn phi(&self, nuisance: &Nuisance, y: f64) -> f64 {
        (y - nuisance.center).powi(2) - nuisance.eta
    }
}

impl PredictivenessMetric for Deviance {
    fn name(&self) -> &'static str {
        "deviance"
    }

    fn outcome_kind(&self) -> OutcomeKind {
        OutcomeKind::Binary
    }

    fn u(&self, zeta: f64, eta: f64) -> f64 {
        1.0 - zeta / eta
    }

    fn u_dzeta(&self, _zeta: f64, eta: f64) -> f64 {
        -1.0 / eta
    }

    fn u_deta(&self, zeta: f64, eta: f64) -> f64 {
        zeta / (eta * eta)
    }

    fn prepare(&self, raw: f64) -> f64 {
        raw.clamp(DEVIANCE_CLAMP, 1.0 - DEVIANCE_CLAMP)
    }

    fn zeta_dot(&self, prediction: f64, y: f64) -> Result<f64> {
        Ok(nu(y, self.prepare(prediction)))
    }

    fn nuisance(&self, ys: &[f64]) -> Result<Nuisance> {
        require_nonempty(ys)?;
        require_binary(ys)?;
        let pi = mean(ys);
        if pi <= 0.0 || pi >= 1.0 {
            return Err(Error::DegenerateMetric(format!(
                "success proportion {pi} must lie strictly inside (0, 1)"
            )));
        }
        Ok(Nuisance {
            eta: nu(pi, pi),
            center: pi,
        })
    }

    fn phi(&self, nuisance: &Nuisance, y: f64) -> f64 {
        let pi = nuisance.center;
        let indicator = if y == 1.0 { 1.0 } else { 0.0 };
        (indicator - pi) * (pi / (1.0 - pi)).ln()
    }
}

impl PredictivenessMetric for Accuracy {
    fn name(&self) -> &'static str {
        "accuracy"
    }

    fn outcome_kind(&self) -> OutcomeKind {
        OutcomeKind::Binary
    }

    fn u(&self, zeta: f64, _eta: f64) -> f64 {
        zeta
    }

    fn u_dzeta(&self, _zeta: f64, _eta: f64) -> f64 {
        1.0
    }

    fn u_deta(&self, _zeta: f64, _eta: f64) -> f64 {
        0.0
    }

    /// Bayes classifier: strictly greater than one half maps to 1.
    fn prepare(&self, raw: f64) -> f64 {
        if raw > 0.5 {
            1.0
        } else {
            0.0
        }
    }

    fn zeta_dot(&self, prediction: f64, y: f64) -> Result<f64> {
        if prediction != 0.0 && prediction != 1.0 {
            return Err(invalid_arg(format!(
                "accuracy needs predictions in {{0, 1}}, got {prediction}"
            )));
        }
        Ok(if prediction == y { 1.0 } else { 0.0 })
    }

    fn nuisance(&self, ys: &[f64]) -> Result<Nuisance> {
        require_nonempty(ys)?;
        require_binary(ys)?;
        Ok(Nuisance {
            eta: 1.0,
            center: mean(ys),
        })
    }

    fn phi(&self, _nuisance: &Nuisance, _y: f64) -> f64 {
        0.0
    }
}

/// `eta` estimated on measure `m`.
pub fn eta(metric: &dyn PredictivenessMetric, m: &EmpiricalMeasure<'_>) -> Result<f64> {
    let ys: Vec<f64> = m.ys().collect();
    Ok(metric.nuisance(&ys)?.eta)
}

/// `zeta(f, m) = m[zeta_dot(f)]`.
pub fn zeta(metric: &dyn PredictivenessMetric, f: &dyn PredictionFunction, m: &EmpiricalMeasure<'_>) -> Result<f64> {
    let dots = zeta_dots(metric, f, m)?;
    if dots.is_empty() {
        return Err(Error::InvalidState("cannot integrate over an empty measure".into()));
    }
    Ok(dots.iter().sum::<f64>() / dots.len() as f64)
}

fn zeta_dots(
    metric: &dyn PredictivenessMetric,
    f: &dyn PredictionFunction,
    m: &EmpiricalMeasure<'_>,
) -> Result<Vec<f64>> {
    let data = m.data();
    m.indices()
        .iter()
        .map(|&i| metric.zeta_dot(metric.prepare(f.predict(data.row(i))), data.y()[i]))
        .collect()
}

/// `U(zeta(f, m), eta(eta_m))`. The two measures differ under cross-fitting,
/// where `zeta` is taken on the held-out fold and `eta` on the training rows.
pub fn evaluate(
    metric: &dyn PredictivenessMetric,
    f: &dyn PredictionFunction,
    m: &EmpiricalMeasure<'_>,
    eta_m: &EmpiricalMeasure<'_>,
) -> Result<f64> {
    let z = zeta(metric, f, m)?;
    Ok(metric.u(z, eta(metric, eta_m)?))
}

/// Per-observation influence values of `evaluate`, one per listed index of
/// `m` (with multiplicity). The `phi` term is built from `eta_m` and
/// re-centered on `m`, so the values always average to zero under `m`.
pub fn influence_values(
    metric: &dyn PredictivenessMetric,
    f: &dyn PredictionFunction,
    m: &EmpiricalMeasure<'_>,
    eta_m: &EmpiricalMeasure<'_>,
) -> Result<Vec<f64>> {
    let dots = zeta_dots(metric, f, m)?;
    if dots.is_empty() {
        return Err(Error::InvalidState("cannot integrate over an empty measure".into()));
    }
    let eta_ys: Vec<f64> = eta_m.ys().collect();
    let nuisance = metric.nuisance(&eta_ys)?;
    let ys: Vec<f64> = m.ys().collect();
    Ok(influence_from_parts(metric, &dots, &ys, &nuisance))
}

/// Influence values from precomputed `zeta_dot` values and outcomes, all
/// rows weighted equally.
pub(crate) fn influence_from_parts(
    metric: &dyn PredictivenessMetric,
    dots: &[f64],
    ys: &[f64],
    nuisance: &Nuisance,
) -> Vec<f64> {
    let m = dots.len() as f64;
    let z = dots.iter().sum::<f64>() / m;
    let phis: Vec<f64> = ys.iter().map(|&y| metric.phi(nuisance, y)).collect();
    let phi_bar = phis.iter().sum::<f64>() / m;
    let dz = metric.u_dzeta(z, nuisance.eta);
    let de = metric.u_deta(z, nuisance.eta);
    dots.iter()
        .zip(&phis)
        .map(|(&d, &ph)| dz * (d - z) + de * (ph - phi_bar))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use proptest::prelude::*;

    /// Returns a fixed prediction per row, looked up by the first covariate.
    struct TablePredictor {
        values: Vec<f64>,
        keep: Subset,
    }

    impl PredictionFunction for TablePredictor {
        fn predict(&self, row: &[f64]) -> f64 {
            self.values[row[0] as usize]
        }

        fn feature_subset(&self) -> &Subset {
            &self.keep
        }
    }

    fn indexed(y: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..y.len()).map(|i| vec![i as f64]).collect();
        Dataset::from_rows(&rows, y.to_vec()).unwrap()
    }

    fn table(values: &[f64]) -> TablePredictor {
        TablePredictor {
            values: values.to_vec(),
            keep: Subset::full(1),
        }
    }

    fn value(metric: &dyn PredictivenessMetric, y: &[f64], f: &[f64]) -> Result<f64> {
        let d = indexed(y);
        let m = d.full_measure();
        evaluate(metric, &table(f), &m, &m)
    }

    #[test]
    fn rsquared_null_and_perfect() {
        let y = [0.3, 1.7, -2.0, 4.1, 0.0];
        let ybar = y.iter().sum::<f64>() / 5.0;
        assert!(value(&RSquared, &y, &[ybar; 5]).unwrap().abs() < 1e-14);
        assert_eq!(value(&RSquared, &y, &y).unwrap(), 1.0);
    }

    #[test]
    fn rsquared_hand_arithmetic() {
        let y = [0.0, 1.0, 2.0, 3.0];
        let d = indexed(&y);
        let m = d.full_measure();
        let f = table(&[1.5; 4]);
        assert!((zeta(&RSquared, &f, &m).unwrap() - 1.25).abs() < 1e-15);
        assert!((eta(&RSquared, &m).unwrap() - 1.25).abs() < 1e-15);
        assert_eq!(evaluate(&RSquared, &f, &m, &m).unwrap(), 0.0);
    }

    #[test]
    fn rsquared_constant_outcome_is_degenerate() {
        let err = value(&RSquared, &[2.0, 2.0, 2.0], &[2.0; 3]).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric(_)));
    }

    #[test]
    fn deviance_marginal_predictor_is_zero() {
        let y = [1.0, 0.0, 0.0, 1.0, 1.0];
        let v = value(&Deviance, &y, &[0.6; 5]).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn deviance_hand_arithmetic() {
        let v = value(&Deviance, &[1.0, 0.0], &[0.8, 0.2]).unwrap();
        let expected = 1.0 - 0.8f64.ln() / 0.5f64.ln();
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 0.678).abs() < 1e-3);
    }

    #[test]
    fn deviance_approaches_perfect_prediction_limit() {
        let y = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let pi = 0.5f64;
        let eta = nu(pi, pi);
        let limit = 1.0 - (1.0 - DEVIANCE_CLAMP).ln() / eta;
        let mut last = f64::NEG_INFINITY;
        for delta in [0.3, 0.1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let f: Vec<f64> = y.iter().map(|&v| if v == 1.0 { 1.0 - delta } else { delta }).collect();
            let v = value(&Deviance, &y, &f).unwrap();
            assert!(v > last);
            assert!(v <= limit + 1e-15);
            last = v;
        }
        assert!((last - limit).abs() < 1e-12);
        // exact 0/1 predictions are clamped to the same limit
        assert!((value(&Deviance, &y, &y).unwrap() - limit).abs() < 1e-12);
    }

    #[test]
    fn deviance_degenerate_proportion() {
        let err = value(&Deviance, &[1.0, 1.0], &[0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::DegenerateMetric(_)));
    }

    #[test]
    fn accuracy_examples() {
        let y = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(value(&Accuracy, &y, &y).unwrap(), 1.0);
        assert_eq!(value(&Accuracy, &y, &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(value(&Accuracy, &y, &[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_threshold_is_strict() {
        assert_eq!(Accuracy.prepare(0.5), 0.0);
        assert_eq!(Accuracy.prepare(0.5000001), 1.0);
        assert!(Accuracy.zeta_dot(0.7, 1.0).is_err());
    }

    #[test]
    fn accuracy_influence_is_centered_indicator() {
        let y = [1.0, 1.0, 0.0, 0.0, 1.0];
        let f = [1.0, 0.0, 0.0, 1.0, 1.0];
        let d = indexed(&y);
        let m = d.full_measure();
        let inf = influence_values(&Accuracy, &table(&f), &m, &m).unwrap();
        let acc = 0.6;
        for (i, v) in inf.iter().enumerate() {
            let hit = if y[i] == f[i] { 1.0 } else { 0.0 };
            assert!((v - (hit - acc)).abs() < 1e-15);
        }
        assert!(inf.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn rsquared_mean_predictor_influence_vanishes() {
        let y = [0.5, -1.0, 2.5, 3.0, 0.25, 1.0];
        let ybar = y.iter().sum::<f64>() / 6.0;
        let d = indexed(&y);
        let m = d.full_measure();
        let inf = influence_values(&RSquared, &table(&[ybar; 6]), &m, &m).unwrap();
        assert!(inf.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn influence_centered_with_separate_eta_measure() {
        let y = [0.5, -1.0, 2.5, 3.0, 0.25, 1.0, 4.0, -0.5];
        let f = [0.0, 0.0, 2.0, 2.0, 1.0, 1.0, 3.0, 0.0];
        let d = indexed(&y);
        let m = EmpiricalMeasure::new(&d, vec![0, 1, 2, 3]).unwrap();
        let eta_m = EmpiricalMeasure::new(&d, vec![4, 5, 6, 7]).unwrap();
        let inf = influence_values(&RSquared, &table(&f), &m, &eta_m).unwrap();
        assert_eq!(inf.len(), 4);
        assert!(inf.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn metric_lookup() {
        assert_eq!(metric_by_name("deviance").unwrap().name(), "deviance");
        assert!(metric_by_name("auc").is_err());
    }

    fn central_difference(g: impl Fn(f64) -> f64, at: f64) -> f64 {
        let h = 1e-5 * at.abs().max(1e-3);
        (g(at + h) - g(at - h)) / (2.0 * h)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-8)
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(v in 0.05f64..5.0, w in 0.1f64..5.0, dv in -2.0f64..-0.05, dw in -0.7f64..-0.05) {
            let metrics: [(&dyn PredictivenessMetric, f64, f64); 3] =
                [(&RSquared, v, w), (&Deviance, dv, dw), (&Accuracy, v.min(1.0), 1.0)];
            for (metric, zeta, eta) in metrics {
                let fd_z = central_difference(|z| metric.u(z, eta), zeta);
                let fd_e = central_difference(|e| metric.u(zeta, e), eta);
                prop_assert!(rel_close(metric.u_dzeta(zeta, eta), fd_z, 1e-6));
                prop_assert!(rel_close(metric.u_deta(zeta, eta), fd_e, 1e-6) || (metric.u_deta(zeta, eta) == 0.0 && fd_e.abs() < 1e-9));
            }
        }

        #[test]
        fn zeta_is_linear_in_the_measure(
            y in proptest::collection::vec(-10.0f64..10.0, 8),
            f in proptest::collection::vec(-10.0f64..10.0, 8),
        ) {
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
            let d = indexed(&y);
            let pred = table(&f);
            let a = EmpiricalMeasure::new(&d, vec![0, 1, 2, 3]).unwrap();
            let b = EmpiricalMeasure::new(&d, vec![4, 5, 6, 7]).unwrap();
            let all = d.full_measure();
            let za = zeta(&RSquared, &pred, &a).unwrap();
            let zb = zeta(&RSquared, &pred, &b).unwrap();
            let eta_all = eta(&RSquared, &all).unwrap();
            let joint = evaluate(&RSquared, &pred, &all, &all).unwrap();
            prop_assert!((joint - RSquared.u((za + zb) / 2.0, eta_all)).abs() < 1e-10);
        }

        #[test]
        fn influence_mean_zero_all_metrics(
            bits in proptest::collection::vec(0u8..2, 12),
            probs in proptest::collection::vec(0.01f64..0.99, 12),
        ) {
            let y: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
            prop_assume!(y.contains(&1.0) && y.contains(&0.0));
            let d = indexed(&y);
            let m = d.full_measure();
            let f = table(&probs);
            for metric in [&RSquared as &dyn PredictivenessMetric, &Deviance, &Accuracy] {
                let inf = influence_values(metric, &f, &m, &m).unwrap();
                let mean = inf.iter().sum::<f64>() / inf.len() as f64;
                prop_assert!(mean.abs() < 1e-10);
            }
        }

        #[test]
        fn rsquared_shift_invariant(
            y in proptest::collection::vec(-10.0f64..10.0, 6),
            f in proptest::collection::vec(-10.0f64..10.0, 6),
            c in -50.0f64..50.0,
        ) {
            prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-2));
            let base = value(&RSquared, &y, &f).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let fs: Vec<f64> = f.iter().map(|v| v + c).collect();
            let shifted = value(&RSquared, &ys, &fs).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-8 * (1.0 + base.abs()));
        }
    }
}

//! Influence-function inference: variances, Wald intervals, simultaneous
//! bands for VROC curves, delta-method AUVROC intervals and comparisons of
//! two curves estimated on the same observations.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid_arg, Result};
use crate::estimation::{auvroc_weights, SelectionEstimate, VimEstimate, VrocEstimate};
use crate::rng::SeedSpec;

pub const DEFAULT_MC_DRAWS: usize = 100_000;
const MC_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Wald,
    Uniform,
    Efron,
    Percentile,
    PercentileT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid_arg(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7). `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `sum_i w_i a_i b_i`: the fold-averaged empirical second moment.
fn weighted_cross(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    a.iter().zip(b).zip(weights).map(|((x, y), w)| w * x * y).sum()
}

/// `sigma^2`: the (fold-averaged) mean squared influence value.
pub fn variance_psi(est: &VimEstimate) -> f64 {
    weighted_cross(&est.influence, &est.influence, &est.row_weights)
}

pub fn variance_selection(est: &SelectionEstimate) -> f64 {
    weighted_cross(&est.influence, &est.influence, &est.row_weights)
}

/// `Sigma`: (fold-averaged) mean products of the VROC influence columns.
pub fn covariance_vroc(est: &VrocEstimate) -> DMatrix<f64> {
    covariance_of(&est.influence, &est.row_weights)
}

fn covariance_of(columns: &[Vec<f64>], weights: &[f64]) -> DMatrix<f64> {
    let p = columns.len();
    let mut sigma = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = weighted_cross(&columns[a], &columns[b], weights);
            sigma[(a, b)] = v;
            sigma[(b, a)] = v;
        }
    }
    sigma
}

/// `psi_hat +/- z_{1 - alpha/2} sqrt(sigma2 / n)`.
pub fn wald_interval(psi_hat: f64, sigma2: f64, n: usize, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if !(sigma2 >= 0.0) {
        return Err(invalid_arg(format!("variance must be >= 0, got {sigma2}")));
    }
    if n == 0 {
        return Err(invalid_arg("sample size must be positive"));
    }
    let half = normal_quantile(0.5 + level / 2.0) * (sigma2 / n as f64).sqrt();
    Ok(ConfidenceInterval {
        lower: psi_hat - half,
        upper: psi_hat + half,
        level,
        method: IntervalMethod::Wald,
    })
}

/// Returns a warning when the estimate is within two standard errors of
/// zero, where the Wald interval's normal approximation is unreliable.
pub fn near_zero_warning(psi_hat: f64, sigma2: f64, n: usize) -> Option<String> {
    let se = (sigma2 / n as f64).sqrt();
    (psi_hat.abs() < 2.0 * se).then(|| {
        format!("estimate {psi_hat:.4} lies within two standard errors ({se:.4}) of zero; the Wald interval may be unreliable")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformBand {
    pub z_uniform: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Quantile `Z` of `max_j |U_j|` for `U ~ N(0, D^{-1/2} Sigma D^{-1/2})`,
/// floored at the pointwise critical value so the band always contains the
/// pointwise intervals.
pub fn uniform_quantile(sigma: &DMatrix<f64>, level: f64, mc_draws: usize, seed: &SeedSpec) -> Result<f64> {
    check_level(level)?;
    let p = sigma.nrows();
    if p == 0 || sigma.ncols() != p {
        return Err(invalid_arg("covariance matrix must be square and nonempty"));
    }
    if mc_draws < 2 {
        return Err(invalid_arg("need at least 2 Monte Carlo draws"));
    }
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let d = sigma[(j, j)];
            if d > 0.0 {
                d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let corr = DMatrix::from_fn(p, p, |a, b| sigma[(a, b)] / (scale[a] * scale[b]));
    let eig = corr.symmetric_eigen();
    let root = DMatrix::from_fn(p, p, |a, b| {
        eig.eigenvectors[(a, b)] * eig.eigenvalues[b].max(0.0).sqrt()
    });

    let chunks = mc_draws.div_ceil(MC_CHUNK);
    let mut maxima: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = seed.derive("uniform-band", 0).with_stream(c as u64).rng();
            let count = MC_CHUNK.min(mc_draws - c * MC_CHUNK);
            let root = &root;
            let mut z = DVector::zeros(p);
            (0..count)
                .map(move |_| {
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    (root * &z).amax()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let z_mc = quantile_type7(&maxima, level);
    Ok(z_mc.max(normal_quantile(0.5 + level / 2.0)))
}

/// Simultaneous band `psi_j +/- Z sqrt(Sigma_jj / n)`.
pub fn uniform_band(
    psi_seq: &[f64],
    sigma: &DMatrix<f64>,
    n: usize,
    level: f64,
    mc_draws: usize,
    seed: &SeedSpec,
) -> Result<UniformBand> {
    if psi_seq.len() != sigma.nrows() {
        return Err(invalid_arg("curve length does not match the covariance dimension"));
    }
    let z = uniform_quantile(sigma, level, mc_draws, seed)?;
    let half: Vec<f64> = (0..psi_seq.len())
        .map(|j| z * (sigma[(j, j)].max(0.0) / n as f64).sqrt())
        .collect();
    Ok(UniformBand {
        z_uniform: z,
        lower: psi_seq.iter().zip(&half).map(|(p, h)| p - h).collect(),
        upper: psi_seq.iter().zip(&half).map(|(p, h)| p + h).collect(),
    })
}

/// Delta-method interval for `AUVROC = w . psi`, variance `w' Sigma w / n`.
pub fn auvroc_interval(vroc: &VrocEstimate, sigma: &DMatrix<f64>, level: f64) -> Result<ConfidenceInterval> {
    let p = vroc.psi_seq.len();
    let area = vroc
        .auvroc
        .ok_or_else(|| invalid_arg("AUVROC needs at least two covariates"))?;
    let w = DVector::from_vec(auvroc_weights(p));
    let var = (w.transpose() * sigma * &w)[(0, 0)].max(0.0);
    wald_interval(area, var, vroc.n(), level)
}

#[derive(Debug, Clone, Serialize)]
pub struct VrocInference {
    #[serde(skip)]
    pub sigma: DMatrix<f64>,
    pub pointwise: Vec<ConfidenceInterval>,
    pub band: UniformBand,
    pub auvroc_interval: Option<ConfidenceInterval>,
    pub warnings: Vec<String>,
}

/// Pointwise Wald intervals, the uniform band and the AUVROC interval.
pub fn vroc_inference(vroc: &VrocEstimate, level: f64, mc_draws: usize, seed: &SeedSpec) -> Result<VrocInference> {
    let sigma = covariance_vroc(vroc);
    let n = vroc.n();
    let pointwise = vroc
        .psi_seq
        .iter()
        .enumerate()
        .map(|(j, &psi)| wald_interval(psi, sigma[(j, j)].max(0.0), n, level))
        .collect::<Result<Vec<_>>>()?;
    let warnings = vroc
        .psi_seq
        .iter()
        .enumerate()
        .filter_map(|(j, &psi)| near_zero_warning(psi, sigma[(j, j)], n).map(|w| format!("point {}: {w}", j + 1)))
        .collect();
    let band = uniform_band(&vroc.psi_seq, &sigma, n, level, mc_draws, seed)?;
    let auvroc_interval = if vroc.auvroc.is_some() {
        Some(auvroc_interval(vroc, &sigma, level)?)
    } else {
        None
    };
    Ok(VrocInference {
        sigma,
        pointwise,
        band,
        auvroc_interval,
        warnings,
    })
}

/// Tests of `H0: curve_a = curve_b` and `H0: AUVROC_a = AUVROC_b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveComparison {
    pub auvroc_difference: f64,
    pub auvroc_z: f64,
    pub auvroc_p_value: f64,
    pub curve_statistic: f64,
    pub curve_df: usize,
    pub curve_p_value: f64,
}

/// Moore-Penrose inverse of a symmetric PSD matrix and its numerical rank.
fn symmetric_pinv(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let p = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = max * p as f64 * 1e-10;
    let mut inv = DMatrix::zeros(p, p);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
        }
    }
    (inv, rank)
}

fn two_sided_normal_p(z: f64) -> f64 {
    2.0 * (1.0 - Normal::standard().cdf(z.abs()))
}

/// Compares two VROC curves estimated on the same rows with the same folds.
/// The curve test is a Wald chi-square on the scaled difference with a
/// pseudo-inverse covariance and degrees of freedom equal to its rank.
pub fn compare_curves(a: &VrocEstimate, b: &VrocEstimate) -> Result<CurveComparison> {
    let p = a.psi_seq.len();
    if b.psi_seq.len() != p {
        return Err(invalid_arg("curves have different lengths"));
    }
    if a.n() != b.n() {
        return Err(invalid_arg(format!(
            "curves use different sample sizes ({} vs {})",
            a.n(),
            b.n()
        )));
    }
    if a.row_weights != b.row_weights {
        return Err(invalid_arg("curves were estimated with different fold assignments"));
    }
    let n = a.n() as f64;
    let diff_inf: Vec<Vec<f64>> = (0..p)
        .map(|j| a.influence[j].iter().zip(&b.influence[j]).map(|(x, y)| x - y).collect())
        .collect();
    let sigma = covariance_of(&diff_inf, &a.row_weights);
    let diff = DVector::from_iterator(p, (0..p).map(|j| a.psi_seq[j] - b.psi_seq[j]));

    let (pinv, rank) = symmetric_pinv(&sigma);
    let z = &diff * n.sqrt();
    let (curve_statistic, curve_p_value) = if rank == 0 {
        (0.0, if diff.amax() == 0.0 { 1.0 } else { 0.0 })
    } else {
        let stat = (z.transpose() * &pinv * &z)[(0, 0)].max(0.0);
        let chi = ChiSquared::new(rank as f64).expect("positive degrees of freedom");
        (stat, 1.0 - chi.cdf(stat))
    };

    let (auvroc_difference, auvroc_z, auvroc_p_value) = if p >= 2 {
        let w = DVector::from_vec(auvroc_weights(p));
        let d = w.dot(&diff);
        let var = (w.transpose() * &sigma * &w)[(0, 0)].max(0.0) / n;
        let z = if var > 0.0 {
            d / var.sqrt()
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        };
        (d, z, two_sided_normal_p(z))
    } else {
        (0.0, 0.0, 1.0)
    };
    Ok(CurveComparison {
        auvroc_difference,
        auvroc_z,
        auvroc_p_value,
        curve_statistic,
        curve_df: rank,
        curve_p_value,
    })
}

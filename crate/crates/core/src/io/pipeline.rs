use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AlgorithmEntry, RunConfig};
use super::{ingest_csv, ingest_external_ranking, ingest_external_subset};
use crate::algorithms::{rank, select, RankerSpec, SelectorSpec};
use crate::bootstrap::{bootstrap_interval, partial_bootstrap, BootstrapDraws, BootstrapPlan, BootstrapTarget};
use crate::data::{Dataset, Ranking, Subset};
use crate::error::{invalid_arg, Result};
use crate::estimation::{estimate_selection, estimate_vroc, CrossFitPlan, Mode, VrocEstimate};
use crate::inference::{
    compare_curves, near_zero_warning, normal_quantile, variance_selection, vroc_inference, wald_interval,
    ConfidenceInterval,
};
use crate::learners::LearnerSpec;
use crate::metrics::{metric_by_name, PredictivenessMetric};
use crate::rng::SeedSpec;

pub const VROC_CSV: &str = "vroc.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const BOOTSTRAP_CSV: &str = "bootstrap_draws.csv";
pub const VROC_COLUMNS: [&str; 9] = [
    "algorithm",
    "j",
    "variable",
    "psi",
    "se",
    "ci_lo",
    "ci_hi",
    "band_lo",
    "band_hi",
];
const BOOTSTRAP_COLUMNS: [&str; 6] = ["algorithm", "statistic", "replicate", "theta", "se", "variables"];

/// Which entries of the config to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmFilter {
    All,
    Rankings,
    Selections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VrocPoint {
    pub j: usize,
    pub variable: String,
    pub psi: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub ranking: Vec<String>,
    pub v_full: f64,
    pub points: Vec<VrocPoint>,
    pub z_uniform: f64,
    pub auvroc: Option<f64>,
    pub auvroc_interval: Option<ConfidenceInterval>,
    #[serde(default)]
    pub bootstrap_intervals: Vec<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub subset: Vec<String>,
    pub size: usize,
    pub psi: f64,
    pub se: f64,
    pub psi_interval: ConfidenceInterval,
    /// `None` when nothing was selected.
    pub ppsv: Option<f64>,
    pub ppsv_interval: Option<ConfidenceInterval>,
    #[serde(default)]
    pub bootstrap_intervals: Vec<ConfidenceInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub name: String,
    /// Algorithm kind, or `"file"` for an externally supplied ranking or subset.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionResult>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub a: String,
    pub b: String,
    pub auvroc_difference: f64,
    pub auvroc_z: f64,
    pub auvroc_p_value: f64,
    pub curve_statistic: f64,
    pub curve_df: usize,
    pub curve_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub version: String,
    pub seed: u64,
    pub outcome: String,
    pub metric: String,
    pub learner: LearnerSpec,
    pub mode: Mode,
    pub folds: Option<usize>,
    pub n: usize,
    pub p: usize,
    pub level: f64,
    pub mc_draws: usize,
    pub bootstrap_replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub metadata: BundleMetadata,
    pub algorithms: Vec<AlgorithmResult>,
    pub comparisons: Vec<ComparisonRow>,
}

#[derive(Debug, Clone)]
pub struct BootstrapRow {
    pub algorithm: String,
    pub statistic: String,
    pub replicate: usize,
    pub theta: f64,
    pub se: f64,
    pub variables: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bundle: ResultBundle,
    pub bootstrap_rows: Vec<BootstrapRow>,
}

enum Resolved {
    Ranking(Ranking, RankerSpec),
    Selection(Subset, SelectorSpec),
}

fn resolve(entry: &AlgorithmEntry, data: &Dataset, seed: &SeedSpec) -> Result<(Resolved, String)> {
    Ok(
        match (&entry.ranker, &entry.selector, &entry.ranking_file, &entry.subset_file) {
            (Some(spec), ..) => (
                Resolved::Ranking(rank(spec, data, seed)?, spec.clone()),
                spec.name().to_string(),
            ),
            (_, Some(spec), ..) => (
                Resolved::Selection(select(spec, data, seed)?, spec.clone()),
                spec.name().to_string(),
            ),
            (_, _, Some(path), _) => {
                let r = ingest_external_ranking(path, data)?;
                (Resolved::Ranking(r.clone(), RankerSpec::Fixed(r)), "file".into())
            }
            (_, _, _, Some(path)) => {
                let s = ingest_external_subset(path, data)?;
                (Resolved::Selection(s.clone(), SelectorSpec::Fixed(s)), "file".into())
            }
            _ => return Err(invalid_arg(format!("algorithm '{}' has no source", entry.name))),
        },
    )
}

fn labels(data: &Dataset, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| data.column_label(j)).collect()
}

struct Context<'a> {
    config: &'a RunConfig,
    data: &'a Dataset,
    plan: &'a CrossFitPlan<'a>,
    metric: &'a dyn PredictivenessMetric,
    base: SeedSpec,
}

impl Context<'_> {
    fn bootstrap(
        &self,
        target: BootstrapTarget,
        theta_hat: f64,
        se_hat: f64,
        name: &str,
        rows: &mut Vec<BootstrapRow>,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<ConfidenceInterval>> {
        let Some(settings) = &self.config.bootstrap else {
            return Ok(Vec::new());
        };
        let plan = BootstrapPlan {
            replicates: settings.replicates,
            seed: self.base.derive("bootstrap", 0),
        };
        let draws: BootstrapDraws = partial_bootstrap(self.plan, self.metric, &target, &plan)?;
        warnings.extend(draws.warnings());
        if settings.export_draws {
            for r in &draws.replicates {
                let vars = match (&r.ranking, &r.selection) {
                    (Some(rk), _) => labels(self.data, rk.order()),
                    (_, Some(s)) => labels(self.data, s.indices()),
                    _ => Vec::new(),
                };
                rows.push(BootstrapRow {
                    algorithm: name.to_string(),
                    statistic: target.name().to_string(),
                    replicate: r.index,
                    theta: r.theta,
                    se: r.se,
                    variables: vars.join(" "),
                });
            }
        }
        settings
            .methods
            .iter()
            .map(|&m| bootstrap_interval(&draws, theta_hat, se_hat, m, self.config.inference.level))
            .collect()
    }

    fn ranking(
        &self,
        name: &str,
        ranking: &Ranking,
        spec: RankerSpec,
        rows: &mut Vec<BootstrapRow>,
    ) -> Result<(RankingResult, VrocEstimate, Vec<String>)> {
        let level = self.config.inference.level;
        let vroc = estimate_vroc(self.plan, self.metric, ranking)?;
        let inf = vroc_inference(
            &vroc,
            level,
            self.config.inference.mc_draws,
            &self.base.derive("band", 0),
        )?;
        let n = self.data.n() as f64;
        let points = vroc
            .psi_seq
            .iter()
            .enumerate()
            .map(|(k, &psi)| VrocPoint {
                j: k + 1,
                variable: self.data.column_label(ranking.order()[k]),
                psi,
                se: (inf.sigma[(k, k)].max(0.0) / n).sqrt(),
                ci_lo: inf.pointwise[k].lower,
                ci_hi: inf.pointwise[k].upper,
                band_lo: inf.band.lower[k],
                band_hi: inf.band.upper[k],
            })
            .collect();
        let mut warnings = inf.warnings.clone();
        let mut bootstrap_intervals = Vec::new();
        if let (Some(area), Some(ci)) = (vroc.auvroc, inf.auvroc_interval) {
            let se = ci.width() / (2.0 * normal_quantile(0.5 + level / 2.0));
            bootstrap_intervals = self.bootstrap(
                BootstrapTarget::Auvroc { ranker: spec },
                area,
                se,
                name,
                rows,
                &mut warnings,
            )?;
        }
        let result = RankingResult {
            ranking: labels(self.data, ranking.order()),
            v_full: vroc.v_full,
            points,
            z_uniform: inf.band.z_uniform,
            auvroc: vroc.auvroc,
            auvroc_interval: inf.auvroc_interval,
            bootstrap_intervals,
        };
        Ok((result, vroc, warnings))
    }

    fn selection(
        &self,
        name: &str,
        subset: &Subset,
        spec: SelectorSpec,
        rows: &mut Vec<BootstrapRow>,
    ) -> Result<(SelectionResult, Vec<String>)> {
        let level = self.config.inference.level;
        let n = self.data.n();
        let est = estimate_selection(self.plan, self.metric, subset)?;
        let sigma2 = variance_selection(&est);
        let psi_interval = wald_interval(est.psi, sigma2, n, level)?;
        let se = (sigma2 / n as f64).sqrt();
        let mut warnings: Vec<String> = near_zero_warning(est.psi, sigma2, n).into_iter().collect();
        let (ppsv_interval, bootstrap_intervals) = if est.size == 0 {
            warnings.push("empty selection: PPSV is undefined and the bootstrap was skipped".into());
            (None, Vec::new())
        } else {
            let s = est.size as f64;
            let ci = ConfidenceInterval {
                lower: psi_interval.lower / s,
                upper: psi_interval.upper / s,
                ..psi_interval
            };
            let theta = est.psi / s;
            let boot = self.bootstrap(
                BootstrapTarget::Ppsv { selector: spec },
                theta,
                se / s,
                name,
                rows,
                &mut warnings,
            )?;
            (Some(ci), boot)
        };
        Ok((
            SelectionResult {
                subset: labels(self.data, subset.indices()),
                size: est.size,
                psi: est.psi,
                se,
                psi_interval,
                ppsv: est.ppsv,
                ppsv_interval,
                bootstrap_intervals,
            },
            warnings,
        ))
    }
}

/// Runs the configured analysis on already-loaded data.
pub fn run_in_memory(config: &RunConfig, data: &Dataset, filter: AlgorithmFilter) -> Result<RunOutput> {
    config.validate()?;
    let metric = metric_by_name(&config.metric)?;
    let base = SeedSpec::new(config.seed, "run", 0);
    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let plan_seed = base.derive("plan", 0);
    let plan = match config.mode {
        Mode::Plugin => CrossFitPlan::plugin(data, config.learner.clone(), metric.outcome_kind(), plan_seed)?,
        Mode::Crossfit => CrossFitPlan::crossfit(
            data,
            config.learner.clone(),
            metric.outcome_kind(),
            config.folds,
            plan_seed,
        )?,
    };
    let ctx = Context {
        config,
        data,
        plan: &plan,
        metric: metric.as_ref(),
        base: base.clone(),
    };
    let entries: Vec<&AlgorithmEntry> = config
        .algorithms
        .iter()
        .filter(|a| match filter {
            AlgorithmFilter::All => true,
            AlgorithmFilter::Rankings => a.is_ranking(),
            AlgorithmFilter::Selections => !a.is_ranking(),
        })
        .collect();
    if entries.is_empty() {
        return Err(invalid_arg("no algorithm entries of the requested kind"));
    }
    let mut algorithms = Vec::new();
    let mut curves: Vec<(String, VrocEstimate)> = Vec::new();
    let mut rows = Vec::new();
    for entry in entries {
        let t = Instant::now();
        // one seed for every entry, so identical entries give identical output
        let (resolved, source) = resolve(entry, data, &base.derive("algorithm", 0))
            .map_err(|e| e.context(format!("algorithm '{}'", entry.name)))?;
        let mut result = AlgorithmResult {
            name: entry.name.clone(),
            source,
            ranking: None,
            selection: None,
            warnings: Vec::new(),
        };
        match resolved {
            Resolved::Ranking(r, spec) => {
                let (res, vroc, w) = ctx.ranking(&entry.name, &r, spec, &mut rows)?;
                result.ranking = Some(res);
                result.warnings = w;
                curves.push((entry.name.clone(), vroc));
            }
            Resolved::Selection(s, spec) => {
                let (res, w) = ctx.selection(&entry.name, &s, spec, &mut rows)?;
                result.selection = Some(res);
                result.warnings = w;
            }
        }
        timings.insert(format!("algorithm:{}", entry.name), t.elapsed().as_secs_f64());
        algorithms.push(result);
    }
    let mut comparisons = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let c = compare_curves(&curves[i].1, &curves[j].1)?;
            comparisons.push(ComparisonRow {
                a: curves[i].0.clone(),
                b: curves[j].0.clone(),
                auvroc_difference: c.auvroc_difference,
                auvroc_z: c.auvroc_z,
                auvroc_p_value: c.auvroc_p_value,
                curve_statistic: c.curve_statistic,
                curve_df: c.curve_df,
                curve_p_value: c.curve_p_value,
            });
        }
    }
    timings.insert("total".into(), start.elapsed().as_secs_f64());
    let metadata = BundleMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        outcome: config.outcome.clone(),
        metric: metric.name().to_string(),
        learner: config.learner.clone(),
        mode: config.mode,
        folds: (config.mode == Mode::Crossfit).then_some(config.folds),
        n: data.n(),
        p: data.p(),
        level: config.inference.level,
        mc_draws: config.inference.mc_draws,
        bootstrap_replicates: config.bootstrap.as_ref().map(|b| b.replicates),
        timings: config.timings.then_some(timings),
    };
    Ok(RunOutput {
        bundle: ResultBundle {
            metadata,
            algorithms,
            comparisons,
        },
        bootstrap_rows: rows,
    })
}

/// Loads the input, runs the analysis and writes the output files.
pub fn run(config: &RunConfig, filter: AlgorithmFilter) -> Result<RunOutput> {
    let data = ingest_csv(&config.input, &config.outcome)?;
    let out = run_in_memory(config, &data, filter)?;
    write_bundle(
        &out,
        &config.output_dir,
        config.bootstrap.as_ref().is_some_and(|b| b.export_draws),
    )?;
    Ok(out)
}

fn vroc_csv(bundle: &ResultBundle) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(VROC_COLUMNS)?;
    for a in &bundle.algorithms {
        for p in a.ranking.iter().flat_map(|r| &r.points) {
            w.write_record([
                a.name.clone(),
                p.j.to_string(),
                p.variable.clone(),
                p.psi.to_string(),
                p.se.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                p.band_lo.to_string(),
                p.band_hi.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))
}

fn bootstrap_csv(rows: &[BootstrapRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BOOTSTRAP_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.statistic.clone(),
            r.replicate.to_string(),
            r.theta.to_string(),
            r.se.to_string(),
            r.variables.clone(),
        ])?;
    }
    w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))
}

/// Writes all files, or none: anything already written is removed if a
/// later write fails.
pub fn write_bundle(out: &RunOutput, dir: &Path, export_draws: bool) -> Result<()> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        (dir.join(VROC_CSV), vroc_csv(&out.bundle)?),
        (dir.join(SUMMARY_JSON), {
            let mut s = serde_json::to_string_pretty(&out.bundle)?;
            s.push('\n');
            s.into_bytes()
        }),
    ];
    if export_draws {
        files.push((dir.join(BOOTSTRAP_CSV), bootstrap_csv(&out.bootstrap_rows)?));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (path, bytes) in &files {
        if let Err(e) = fs::write(path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path.clone());
    }
    Ok(())
}

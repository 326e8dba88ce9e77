//! Benchmarks for the expensive paths: learner fits, the lasso path with
//! cross-validation, cross-fitted VROC estimation and the partial bootstrap.

use std::hint::black_box;

use criterion::{BatchSize, Criterion};
use vroc_core::algorithms::{lasso_cv, LassoSettings};
use vroc_core::learners::{fit, LearnerSpec};
use vroc_core::simulation::{draw, DgpKind, DgpSpec};
use vroc_core::{
    estimate_vroc, partial_bootstrap, BootstrapPlan, BootstrapTarget, CrossFitPlan, Dataset, OutcomeKind, RSquared,
    RankerSpec, Ranking, SeedSpec, Subset,
};

fn main_data(n: usize) -> Dataset {
    draw(&DgpSpec {
        kind: DgpKind::Main,
        n,
        seed: SeedSpec::new(1, "bench", 0),
    })
    .expect("simulated data")
}

pub fn benchmarks(c: &mut Criterion) {
    let data = main_data(2000);
    let seed = SeedSpec::new(2, "bench", 0);

    c.bench_function("boosted_fit_n2000", |b| {
        b.iter(|| {
            fit(
                &LearnerSpec::boosted(),
                black_box(&data),
                &Subset::full(5),
                OutcomeKind::Continuous,
                &seed,
            )
        })
    });

    let settings = LassoSettings::default();
    c.bench_function("lasso_cv_n2000", |b| {
        b.iter(|| lasso_cv(black_box(&data), &settings, &seed))
    });

    let ranking = Ranking::new(vec![0, 1, 2, 3, 4], 5).expect("valid ranking");
    c.bench_function("crossfit_vroc_ols_n2000", |b| {
        b.iter_batched(
            || CrossFitPlan::crossfit(&data, LearnerSpec::Ols, OutcomeKind::Continuous, 5, seed.clone()).expect("plan"),
            |plan| estimate_vroc(&plan, &RSquared, &ranking),
            BatchSize::LargeInput,
        )
    });

    let plan = CrossFitPlan::crossfit(&data, LearnerSpec::Ols, OutcomeKind::Continuous, 5, seed.clone()).expect("plan");
    estimate_vroc(&plan, &RSquared, &ranking).expect("warm memo");
    let target = BootstrapTarget::Auvroc {
        ranker: RankerSpec::MarginalRegression,
    };
    let boot = BootstrapPlan {
        replicates: 100,
        seed: seed.clone(),
    };
    let mut group = c.benchmark_group("partial_bootstrap");
    group.sample_size(10);
    group.bench_function("auvroc_b100_n2000", |b| {
        b.iter(|| partial_bootstrap(&plan, &RSquared, &target, &boot))
    });
    group.finish();
}

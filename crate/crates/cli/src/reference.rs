//! Markdown reference for the configuration files, with defaults read from
//! the library so the page cannot drift from the code.

use std::fmt::Write;

use vroc_core::algorithms::defaults as alg;
use vroc_core::io::{BootstrapSettings, InferenceSettings, RunConfig};
use vroc_core::learners::defaults as learn;
use vroc_core::simulation::{ExperimentConfig, OracleSettings};

const MINIMAL_RUN: &str = r#"
input = "data.csv"
outcome = "y"
[[algorithms]]
name = "lasso"
ranker = { kind = "lasso" }
"#;

const MINIMAL_EXPERIMENT: &str = r#"
dgp = "main"
targets = [{ statistic = "auvroc", ranker = { kind = "lasso" } }]
"#;

pub fn render(inference: &InferenceSettings, bootstrap: &BootstrapSettings, oracle: &OracleSettings) -> String {
    let run = RunConfig::from_toml(MINIMAL_RUN).expect("minimal run config parses");
    let exp: ExperimentConfig = toml::from_str(MINIMAL_EXPERIMENT).expect("minimal experiment parses");
    let mut s = String::new();
    let _ = writeln!(s, "# vroc configuration reference\n");
    let _ = writeln!(s, "## Run config (rank-eval, select-eval, compare)\n");
    let _ = writeln!(s, "| key | default |\n|---|---|");
    let _ = writeln!(s, "| input | required; CSV with a header row |");
    let _ = writeln!(s, "| outcome | required; outcome column name |");
    let _ = writeln!(s, "| metric | {} (or deviance, accuracy) |", run.metric);
    let _ = writeln!(s, "| learner | {} |", json(&run.learner));
    let _ = writeln!(s, "| mode | {:?} |", run.mode);
    let _ = writeln!(s, "| folds | {} |", run.folds);
    let _ = writeln!(s, "| seed | {} |", run.seed);
    let _ = writeln!(s, "| output_dir | {} |", run.output_dir.display());
    let _ = writeln!(s, "| timings | {} |", run.timings);
    let _ = writeln!(s, "| inference.level | {} |", inference.level);
    let _ = writeln!(s, "| inference.mc_draws | {} |", inference.mc_draws);
    let _ = writeln!(s, "| bootstrap.replicates | {} |", bootstrap.replicates);
    let _ = writeln!(s, "| bootstrap.methods | {} |", json(&bootstrap.methods));
    let _ = writeln!(s, "| bootstrap.export_draws | {} |", bootstrap.export_draws);
    let _ = writeln!(
        s,
        "\nEach `[[algorithms]]` entry has a `name` and exactly one of `ranker`, `selector`, \
         `ranking_file` or `subset_file`. Files list one column name or 1-based index per line.\n"
    );
    let _ = writeln!(s, "## Algorithms\n");
    let _ = writeln!(s, "| kind | parameters |\n|---|---|");
    let _ = writeln!(s, "| marginal_regression | threshold (selector only) |");
    let _ = writeln!(
        s,
        "| lasso | folds = {}, grid_size = {}, min_ratio = {} |",
        alg::lasso_folds(),
        alg::lasso_grid_size(),
        alg::lasso_min_ratio()
    );
    let _ = writeln!(s, "| forward_stepwise | folds = {} |", alg::stepwise_folds());
    let _ = writeln!(
        s,
        "| tree_importance | max_depth = {}, min_leaf = {} |",
        alg::tree_depth(),
        alg::min_leaf()
    );
    let _ = writeln!(s, "\n## Learners\n");
    let _ = writeln!(s, "| kind | parameters |\n|---|---|");
    let _ = writeln!(s, "| constant | |\n| ols | |");
    let _ = writeln!(s, "| ridge | lambda = {} |", learn::ridge_lambda());
    let _ = writeln!(s, "| knn | k = {} |", learn::knn_k());
    let _ = writeln!(
        s,
        "| regression_tree | max_depth = {}, min_leaf = {} |",
        learn::tree_depth(),
        learn::min_leaf()
    );
    let _ = writeln!(
        s,
        "| boosted_stumps | rounds = {}, shrinkage = {}, depth = {}, min_leaf = {} |",
        learn::rounds(),
        learn::shrinkage(),
        learn::boost_depth(),
        learn::min_leaf()
    );
    let _ = writeln!(
        s,
        "| stack | candidates = {}, inner_folds = {} |",
        json(&learn::stack_candidates()),
        learn::inner_folds()
    );
    let _ = writeln!(s, "\n## Experiment config (simulate)\n");
    let _ = writeln!(s, "| key | default |\n|---|---|");
    let _ = writeln!(s, "| dgp | required; illustrative or main |");
    let _ = writeln!(
        s,
        "| targets | required; e.g. {{ statistic = \"ppsv\", selector = {{ kind = \"lasso\" }} }} |"
    );
    let _ = writeln!(s, "| n_grid | {:?} |", exp.n_grid);
    let _ = writeln!(s, "| reps | {} |", exp.reps);
    let _ = writeln!(s, "| modes | {} |", json(&exp.modes));
    let _ = writeln!(s, "| learner | {} |", json(&exp.learner));
    let _ = writeln!(s, "| folds | {} |", exp.folds);
    let _ = writeln!(s, "| level | {} |", exp.level);
    let _ = writeln!(s, "| bootstrap | none; {{ replicates, methods }} |");
    let _ = writeln!(s, "| oracle.outer_draws | {} |", oracle.outer_draws);
    let _ = writeln!(s, "| oracle.inner_draws | {} |", oracle.inner_draws);
    let _ = writeln!(s, "| oracle.denominator_draws | {} |", oracle.denominator_draws);
    s
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable default")
}

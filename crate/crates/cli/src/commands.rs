use std::fs;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use pinet::autodiff::{finite_difference_check, GradCheckReport};
use pinet::data::{generate_iso_dataset, write_tu_dataset, Dataset, IsoGenConfig};
use pinet::graph::er_sample;
use pinet::model::{init_params, AnyModel, DataShape, Model, ModelConfig, ModelKind};
use pinet::propagation::{PropagationMode, PropagationSpec};
use pinet::train::{
    best_epoch_cv_accuracy, derive_seed, stratified_split, train_model, TrainConfig,
};

use crate::error::{CliError, CliResult};
use crate::output::{self, mean, sample_std};
use crate::{
    BenchmarkArgs, GenerateIsoArgs, GradcheckArgs, IsoCurveArgs, MpCompareArgs, TrainingArgs,
};

/// Largest graph `gradcheck` accepts.
pub const GRADCHECK_MAX_VERTICES: usize = 8;
/// `gradcheck` passes below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn fmt(x: f64) -> String {
    format!("{x}")
}

// ---- generate-iso ----

pub fn iso_config(a: &GenerateIsoArgs) -> IsoGenConfig {
    IsoGenConfig {
        n_vertices: a.n,
        edge_p: a.p,
        n_classes: a.classes,
        copies_per_class: a.copies,
        rewire_steps: a.rewire_steps,
        max_attempts: a.max_attempts,
        seed: a.seed,
    }
}

fn tu_files(dir: &std::path::Path, name: &str) -> Vec<std::path::PathBuf> {
    ["A", "graph_indicator", "graph_labels", "node_labels"]
        .iter()
        .map(|s| dir.join(format!("{name}_{s}.txt")))
        .collect()
}

pub fn cmd_generate_iso(a: &GenerateIsoArgs) -> CliResult<()> {
    let cfg = iso_config(a);
    let ds = generate_iso_dataset(&cfg)?;
    write_tu_dataset(&ds, &a.out)?;
    output::write_manifest(
        &a.out.join("manifest.json"),
        "generate-iso",
        a.seed,
        json!({ "dataset": ds.name, "generator": cfg }),
        &tu_files(&a.out, &ds.name)
            .iter()
            .map(|p| p.as_path())
            .collect::<Vec<_>>(),
    )?;
    println!(
        "{}: {} graphs, {} classes, written to {}",
        ds.name,
        ds.len(),
        ds.num_classes(),
        a.out.display()
    );
    Ok(())
}

// ---- iso-curve ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub model: ModelKind,
    pub per_class_train: usize,
    pub trial: usize,
    /// Validation accuracy after the final epoch.
    pub accuracy: f64,
}

/// Stratified split, train and evaluate for every (model, size, trial).
/// Rows come back ordered by model, then size, then trial. Every model
/// sees the same splits for a given (size, trial).
pub fn iso_curve(
    dataset: &Dataset,
    models: &[ModelKind],
    sizes: &[usize],
    trials: usize,
    t: &TrainingArgs,
) -> CliResult<Vec<TrialResult>> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let smallest = dataset.class_counts().into_iter().min().unwrap_or(0);
    if let Some(&s) = sizes.iter().find(|&&s| s + 1 > smallest) {
        return Err(pinet::Error::Parameter(format!(
            "{s} training examples per class leave no validation graph (smallest class has {smallest})"
        ))
        .into());
    }
    let base = t.train_config();
    base.validate()?;

    let mut jobs = Vec::new();
    for &model in models {
        for &size in sizes {
            for trial in 0..trials {
                jobs.push((model, size, trial));
            }
        }
    }
    jobs.par_iter()
        .map(|&(model, size, trial)| {
            let stream = derive_seed(base.seed, ((size as u64) << 32) | trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let (train, val) = stratified_split(dataset, size, &mut rng)?;
            let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(stream, 1));
            let m = init_params(&t.model_config(model), dataset.shape(), &mut init_rng)?;
            let cfg = TrainConfig {
                seed: derive_seed(stream, 2),
                ..base.clone()
            };
            let (_, history) = train_model(m, &train, &val, &cfg)?;
            Ok(TrialResult {
                model,
                per_class_train: size,
                trial,
                accuracy: *history.val_accuracy.last().expect("epochs >= 1"),
            })
        })
        .collect()
}

/// Mean accuracy per (model, size), in first-seen order.
pub fn curve_means(rows: &[TrialResult]) -> Vec<(ModelKind, usize, Vec<f64>)> {
    let mut groups: Vec<(ModelKind, usize, Vec<f64>)> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|g| g.0 == r.model && g.1 == r.per_class_train)
        {
            Some(g) => g.2.push(r.accuracy),
            None => groups.push((r.model, r.per_class_train, vec![r.accuracy])),
        }
    }
    groups
}

/// Raw rows followed by `mean` and, with two or more trials, `std` rows.
pub fn iso_curve_csv_rows(rows: &[TrialResult]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.to_string(),
                r.per_class_train.to_string(),
                r.trial.to_string(),
                fmt(r.accuracy),
            ]
        })
        .collect();
    for (model, size, accs) in curve_means(rows) {
        out.push(vec![
            model.to_string(),
            size.to_string(),
            "mean".into(),
            fmt(mean(&accs)),
        ]);
        if let Some(s) = sample_std(&accs) {
            out.push(vec![
                model.to_string(),
                size.to_string(),
                "std".into(),
                fmt(s),
            ]);
        }
    }
    out
}

pub fn cmd_iso_curve(a: &IsoCurveArgs) -> CliResult<()> {
    let ds = crate::load_dataset(&a.data, a.name.as_deref())?;
    let rows = crate::with_jobs(a.train.jobs, || {
        iso_curve(&ds, &a.model, &a.sizes, a.trials, &a.train)
    })??;
    output::write_csv(
        &a.out,
        &["model", "per_class_train", "trial", "accuracy"],
        &iso_curve_csv_rows(&rows),
    )?;
    let mut outputs = vec![a.out.as_path()];
    let means = curve_means(&rows);
    if let Some(svg) = &a.svg {
        let mut series: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
        for (model, size, accs) in &means {
            let name = model.to_string();
            match series.iter_mut().find(|s| s.0 == name) {
                Some(s) => s.1.push((*size, mean(accs))),
                None => series.push((name, vec![(*size, mean(accs))])),
            }
        }
        output::create_parent(svg)?;
        fs::write(svg, output::curve_svg(&series)).map_err(|e| CliError::io(svg, e))?;
        outputs.push(svg.as_path());
    }
    output::write_manifest(
        &output::manifest_path(&a.out),
        "iso-curve",
        a.train.seed,
        json!({
            "dataset": ds.name,
            "sizes": a.sizes,
            "trials": a.trials,
            "models": a.model,
            "train": a.train.train_config(),
            "model_config": a.model.iter().map(|&m| a.train.model_config(m)).collect::<Vec<_>>(),
        }),
        &outputs,
    )?;
    for (model, size, accs) in means {
        println!(
            "{model} per_class_train={size} mean_accuracy={:.4}",
            mean(&accs)
        );
    }
    Ok(())
}

// ---- mp-compare ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeResult {
    pub mode: PropagationMode,
    pub best_epoch: usize,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnedPq {
    pub fold: usize,
    pub head: &'static str,
    pub layer: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpComparison {
    /// The four fixed corners, then the learned mode.
    pub modes: Vec<ModeResult>,
    /// Mean best-epoch accuracy over the four fixed corners.
    pub manual_search_mean: f64,
    pub learned: Vec<LearnedPq>,
}

pub fn mp_compare(dataset: &Dataset, folds: usize, t: &TrainingArgs) -> CliResult<MpComparison> {
    let cfg = t.train_config();
    let mut modes = Vec::new();
    let mut learned = Vec::new();
    for mode in PropagationMode::ALL {
        let model_cfg = ModelConfig {
            kind: if mode == PropagationMode::Learned {
                ModelKind::PinetGcnLearned
            } else {
                ModelKind::PinetGcn
            },
            prop_mode: if mode == PropagationMode::Learned {
                ModelConfig::default().prop_mode
            } else {
                mode
            },
            ..t.model_config(ModelKind::PinetGcn)
        };
        let report = best_epoch_cv_accuracy(&model_cfg, dataset, &cfg, folds)?;
        if mode == PropagationMode::Learned {
            for (fold, m) in report.models.iter().enumerate() {
                for (head, layer, p, q) in m.learned_pq() {
                    learned.push(LearnedPq {
                        fold,
                        head,
                        layer,
                        p,
                        q,
                    });
                }
            }
        }
        modes.push(ModeResult {
            mode,
            best_epoch: report.best_epoch,
            mean_accuracy: report.mean_accuracy,
        });
    }
    let fixed: Vec<f64> = modes
        .iter()
        .filter(|m| m.mode != PropagationMode::Learned)
        .map(|m| m.mean_accuracy)
        .collect();
    Ok(MpComparison {
        manual_search_mean: mean(&fixed),
        modes,
        learned,
    })
}

pub fn cmd_mp_compare(a: &MpCompareArgs) -> CliResult<()> {
    let ds = crate::load_dataset(&a.data, a.name.as_deref())?;
    let cmp = crate::with_jobs(a.train.jobs, || mp_compare(&ds, a.folds, &a.train))??;

    let mut rows: Vec<Vec<String>> = cmp
        .modes
        .iter()
        .map(|m| {
            vec![
                m.mode.to_string(),
                m.best_epoch.to_string(),
                fmt(m.mean_accuracy),
            ]
        })
        .collect();
    rows.push(vec![
        "manual_search_mean".into(),
        String::new(),
        fmt(cmp.manual_search_mean),
    ]);
    output::write_csv(&a.out, &["mode", "best_epoch", "mean_accuracy"], &rows)?;

    let pq_path = output::sibling(&a.out, "learned_pq");
    let pq_rows: Vec<Vec<String>> = cmp
        .learned
        .iter()
        .map(|l| {
            vec![
                l.fold.to_string(),
                l.head.into(),
                l.layer.to_string(),
                fmt(l.p),
                fmt(l.q),
            ]
        })
        .collect();
    output::write_csv(&pq_path, &["fold", "head", "layer", "p", "q"], &pq_rows)?;
    output::write_manifest(
        &output::manifest_path(&a.out),
        "mp-compare",
        a.train.seed,
        json!({
            "dataset": ds.name,
            "folds": a.folds,
            "train": a.train.train_config(),
            "model_config": a.train.model_config(ModelKind::PinetGcn),
        }),
        &[a.out.as_path(), pq_path.as_path()],
    )?;
    for m in &cmp.modes {
        println!(
            "{:<18} best_epoch={:<4} mean_accuracy={:.4}",
            m.mode, m.best_epoch, m.mean_accuracy
        );
    }
    println!("manual search mean: {:.4}", cmp.manual_search_mean);
    Ok(())
}

// ---- benchmark ----

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub dataset: String,
    pub model: ModelKind,
    pub best_epoch: usize,
    /// Validation accuracy of every fold at the best epoch.
    pub fold_accuracies: Vec<f64>,
}

impl BenchmarkResult {
    pub fn mean(&self) -> f64 {
        mean(&self.fold_accuracies)
    }

    pub fn std(&self) -> Option<f64> {
        sample_std(&self.fold_accuracies)
    }
}

pub fn benchmark(
    dataset: &Dataset,
    model: ModelKind,
    folds: usize,
    t: &TrainingArgs,
) -> CliResult<BenchmarkResult> {
    let report = best_epoch_cv_accuracy(&t.model_config(model), dataset, &t.train_config(), folds)?;
    Ok(BenchmarkResult {
        dataset: dataset.name.clone(),
        model,
        best_epoch: report.best_epoch,
        fold_accuracies: report.fold_accuracies,
    })
}

pub fn benchmark_csv_rows(results: &[BenchmarkResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in results {
        let head = |fold: String, acc: f64| {
            vec![
                r.dataset.clone(),
                r.model.to_string(),
                fold,
                r.best_epoch.to_string(),
                fmt(acc),
            ]
        };
        for (f, &acc) in r.fold_accuracies.iter().enumerate() {
            rows.push(head(f.to_string(), acc));
        }
        rows.push(head("mean".into(), r.mean()));
        if let Some(s) = r.std() {
            rows.push(head("std".into(), s));
        }
    }
    rows
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> CliResult<()> {
    let datasets: Vec<Dataset> = a
        .data
        .iter()
        .map(|d| crate::load_dataset(d, None))
        .collect::<CliResult<_>>()?;
    let mut results = Vec::new();
    for ds in &datasets {
        for &model in &a.model {
            let r = crate::with_jobs(a.train.jobs, || benchmark(ds, model, a.folds, &a.train))??;
            println!(
                "{} {} best_epoch={} accuracy={:.4} ± {:.4}",
                r.dataset,
                r.model,
                r.best_epoch,
                r.mean(),
                r.std().unwrap_or(0.0)
            );
            results.push(r);
        }
    }
    output::write_csv(
        &a.out,
        &["dataset", "model", "fold", "best_epoch", "accuracy"],
        &benchmark_csv_rows(&results),
    )?;
    output::write_manifest(
        &output::manifest_path(&a.out),
        "benchmark",
        a.train.seed,
        json!({
            "datasets": datasets.iter().map(|d| d.name.clone()).collect::<Vec<_>>(),
            "models": a.model,
            "folds": a.folds,
            "train": a.train.train_config(),
            "model_config": a.model.iter().map(|&m| a.train.model_config(m)).collect::<Vec<_>>(),
        }),
        &[a.out.as_path()],
    )?;
    Ok(())
}

// ---- gradcheck ----

/// Random graph with one-hot features and a learned-propagation PiNet
/// whose p and q logits are drawn away from zero.
pub fn gradcheck_fixture(n: usize, seed: u64) -> CliResult<(AnyModel, pinet::graph::Graph)> {
    if n == 0 || n > GRADCHECK_MAX_VERTICES {
        return Err(CliError::Usage(format!(
            "gradcheck needs 1 to {GRADCHECK_MAX_VERTICES} vertices, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = 3;
    let classes = 2;
    let g = er_sample(n, 0.5, &mut rng)?;
    let x = one_hot_features(n, features, &mut rng);
    let label = rng.gen_range(0..classes);
    let g = g.with_features(x)?.with_label(label);

    let cfg = ModelConfig {
        kind: ModelKind::PinetGcnLearned,
        hidden1: 4,
        hidden2_attention: 3,
        hidden2_features: 3,
        ..ModelConfig::default()
    };
    let shape = DataShape {
        feature_dim: features,
        num_classes: classes,
        max_vertices: n,
    };
    let mut model = init_params(&cfg, shape, &mut rng)?;
    if let AnyModel::PiNet(p) = &mut model {
        for head in [&mut p.head_attention, &mut p.head_features] {
            for spec in head.props.iter_mut() {
                *spec =
                    PropagationSpec::learned(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            }
        }
    }
    Ok((model, g))
}

fn one_hot_features(n: usize, f: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, f);
    for i in 0..n {
        x[(i, rng.gen_range(0..f))] = 1.0;
    }
    x
}

/// Finite-difference check of the cross-entropy loss with respect to every
/// parameter, the propagation logits included.
pub fn gradcheck(n: usize, seed: u64, epsilon: f64) -> CliResult<GradCheckReport> {
    let (model, g) = gradcheck_fixture(n, seed)?;
    let params: Vec<_> = model.parameters().into_iter().cloned().collect();
    let report = finite_difference_check(
        |tape, vars| {
            let z = model.forward(tape, vars, &g)?;
            tape.cross_entropy(z, g.label())
        },
        &params,
        epsilon,
    )?;
    Ok(report)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let report = gradcheck(a.n, a.seed, a.epsilon)?;
    println!(
        "max relative error {:.3e} over {} coordinates (n = {}, seed = {})",
        report.max_relative_error, report.coordinates, a.n, a.seed
    );
    if report.max_relative_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        )))
    }
}

use std::path::{Path, PathBuf};

use interlab_core::analysis::{
    attack_all, build_zoo, correlation_csv, correlation_sweep, curve_csv, evaluate_transfer,
    heatmap_csv, interaction_only_curve, lambda_csv, lambda_sweep, loo_select, neighbor_heatmap,
    pilot_tau, proposition_suite, NamedModel, PropositionConfig, Tags, TransferReport,
};
use interlab_core::attacks::{run_attack, AttackConfig, AttackTrace, Method};
use interlab_core::game::{
    mean_interaction_eq4, mean_interaction_pairwise, mean_interaction_sampled, CoalitionGame,
    SamplingPlan,
};
use interlab_core::nn::{accuracy, load_model, save_model, Dataset, LossKind, Model, Sample};
use interlab_core::verify::{run_all, run_suite, Suite, SuiteReport, VerifyOptions};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::{sha256_hex, ExperimentManifest, MeasureEstimator, NamedAttack};
use crate::output::{read_json, Stage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub role: String,
    pub arch: String,
    pub file: String,
    pub sha256: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub example: usize,
    pub label: usize,
    pub stem: String,
    pub blob_sha256: String,
    pub success: bool,
    pub steps_taken: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceIndex {
    pub attack: String,
    pub method: Method,
    pub config: AttackConfig,
    pub traces: Vec<TraceEntry>,
}

fn model_file(id: &str) -> String {
    format!("{id}.model")
}

fn traces_dir(out: &Path) -> PathBuf {
    out.join("traces")
}

pub fn train(manifest: &ExperimentManifest, out: &Path, force: bool, jobs: usize) -> Result<()> {
    let zoo = build_zoo(&manifest.setup())?;
    let stage = Stage::create(manifest.models_dir(out), manifest, force)?;
    let mut entries = Vec::new();
    let roles =
        std::iter::once(("source", &zoo.source)).chain(zoo.targets.iter().map(|t| ("target", t)));
    for (role, m) in roles {
        let file = model_file(&m.id);
        save_model(&m.model, &stage.path(&file))?;
        let bytes =
            std::fs::read(stage.path(&file)).map_err(|e| CliError::io(stage.path(&file), e))?;
        println!(
            "{role} {:<16} {:<28} train {:.3}  test {:.3}",
            m.id, m.arch, m.train_accuracy, m.test_accuracy
        );
        entries.push(ModelEntry {
            id: m.id.clone(),
            role: role.into(),
            arch: m.arch.clone(),
            file,
            sha256: sha256_hex(&bytes),
            train_accuracy: m.train_accuracy,
            test_accuracy: m.test_accuracy,
        });
    }
    stage.write_json("models.json", "models", &entries)?;
    stage.finish(jobs)
}

struct Loaded {
    dataset: Dataset,
    source: NamedModel,
    targets: Vec<NamedModel>,
}

fn missing(what: &[PathBuf], run_first: &str) -> CliError {
    let list: Vec<String> = what.iter().map(|p| p.display().to_string()).collect();
    CliError::Data(format!(
        "missing upstream artifacts: {}; run `interlab {run_first}` first",
        list.join(", ")
    ))
}

fn load_models(manifest: &ExperimentManifest, out: &Path, dataset: Dataset) -> Result<Loaded> {
    let dir = manifest.models_dir(out);
    let specs: Vec<_> = std::iter::once(&manifest.source)
        .chain(&manifest.targets)
        .collect();
    let absent: Vec<PathBuf> = specs
        .iter()
        .map(|s| dir.join(model_file(&s.id)))
        .filter(|p| !p.exists())
        .collect();
    if !absent.is_empty() {
        return Err(missing(&absent, "train"));
    }
    let mut models = specs
        .iter()
        .map(|s| {
            let model = load_model(&dir.join(model_file(&s.id)))?;
            if model.input_dim() != dataset.dim() || model.num_classes() != dataset.num_classes {
                return Err(CliError::Data(format!(
                    "model {} expects {} inputs and {} classes; the dataset has {} and {}",
                    s.id,
                    model.input_dim(),
                    model.num_classes(),
                    dataset.dim(),
                    dataset.num_classes
                )));
            }
            Ok(NamedModel {
                id: s.id.clone(),
                arch: s.arch.describe(),
                train_accuracy: accuracy(&model, &dataset.train),
                test_accuracy: accuracy(&model, &dataset.test),
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = models.split_off(1);
    Ok(Loaded {
        dataset,
        source: models.pop().expect("source model"),
        targets,
    })
}

fn examples(manifest: &ExperimentManifest, dataset: &Dataset) -> Result<Vec<Sample>> {
    if dataset.test.len() < manifest.examples {
        return Err(CliError::Data(format!(
            "{} examples requested but the test split has {}",
            manifest.examples,
            dataset.test.len()
        )));
    }
    Ok(dataset.test[..manifest.examples].to_vec())
}

fn validate_attacks(manifest: &ExperimentManifest, n: usize) -> Result<()> {
    for a in &manifest.attacks {
        manifest
            .attack_config(a)
            .validate(n)
            .map_err(|e| CliError::Usage(format!("attack {}: {e}", a.name)))?;
    }
    Ok(())
}

pub fn attack(manifest: &ExperimentManifest, out: &Path, force: bool, jobs: usize) -> Result<()> {
    let dataset = manifest.dataset.load()?;
    validate_attacks(manifest, dataset.dim())?;
    let loaded = load_models(manifest, out, dataset)?;
    let samples = examples(manifest, &loaded.dataset)?;
    let stage = Stage::create(traces_dir(out), manifest, force)?;
    for a in &manifest.attacks {
        let cfg = manifest.attack_config(a);
        let traces = attack_all(&loaded.source.model, &samples, &cfg, run_attack)?;
        let dir = stage.path(&a.name);
        let mut entries = Vec::new();
        for (k, (t, s)) in traces.iter().zip(&samples).enumerate() {
            let stem = format!("{k:04}");
            t.save(&dir, &stem)?;
            entries.push(TraceEntry {
                example: k,
                label: s.label,
                blob_sha256: sha256_hex(&t.blob()),
                stem,
                success: t.success,
                steps_taken: t.steps_taken(),
            });
        }
        let rate = entries.iter().filter(|e| e.success).count() as f64 / entries.len() as f64;
        println!(
            "{:<12} {:<16} white-box success {:.3}",
            a.name,
            cfg.method.name(),
            rate
        );
        stage.write_json(
            &format!("{}/index.json", a.name),
            "trace-index",
            &TraceIndex {
                attack: a.name.clone(),
                method: cfg.method,
                config: cfg,
                traces: entries,
            },
        )?;
    }
    stage.finish(jobs)
}

fn load_traces(
    manifest: &ExperimentManifest,
    out: &Path,
) -> Result<Vec<(NamedAttack, TraceIndex, Vec<AttackTrace>)>> {
    let root = traces_dir(out);
    let absent: Vec<PathBuf> = manifest
        .attacks
        .iter()
        .map(|a| root.join(&a.name).join("index.json"))
        .filter(|p| !p.exists())
        .collect();
    if !absent.is_empty() {
        return Err(missing(&absent, "attack"));
    }
    manifest
        .attacks
        .iter()
        .map(|a| {
            let dir = root.join(&a.name);
            let index: TraceIndex = read_json(&dir.join("index.json"))?;
            let traces = index
                .traces
                .iter()
                .map(|e| AttackTrace::load(&dir, &e.stem).map_err(CliError::from))
                .collect::<Result<Vec<_>>>()?;
            Ok((a.clone(), index, traces))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct Measurement {
    attack: String,
    estimator: MeasureEstimator,
    sampling: Option<SamplingPlan>,
    grid: usize,
    values: Vec<f64>,
    mean: f64,
}

pub fn measure(
    manifest: &ExperimentManifest,
    out: &Path,
    force: bool,
    jobs: usize,
    estimator: Option<MeasureEstimator>,
) -> Result<()> {
    let dataset = manifest.dataset.load()?;
    let loaded = load_models(manifest, out, dataset)?;
    let samples = examples(manifest, &loaded.dataset)?;
    let traces = load_traces(manifest, out)?;
    let estimator = estimator.unwrap_or(manifest.measure.estimator);
    let model = &loaded.source.model;
    let stage = Stage::create(out.join("measure"), manifest, force)?;
    let mut rows = Vec::new();
    for (a, index, list) in &traces {
        let grid = index.config.grid_partition(model.input_dim())?;
        let mut values = Vec::new();
        for (entry, t) in index.traces.iter().zip(list) {
            if t.final_delta.len() != model.input_dim() {
                return Err(CliError::Data(format!(
                    "trace {}/{} has {} inputs but model {} expects {}",
                    a.name,
                    entry.stem,
                    t.final_delta.len(),
                    loaded.source.id,
                    model.input_dim()
                )));
            }
            let s = samples.get(entry.example).ok_or_else(|| {
                CliError::Data(format!(
                    "trace {}/{} refers to a missing example",
                    a.name, entry.stem
                ))
            })?;
            if s.label != entry.label {
                return Err(CliError::Data(format!(
                    "trace {}/{} was made for label {} but example {} has label {}",
                    a.name, entry.stem, entry.label, entry.example, s.label
                )));
            }
            let game = CoalitionGame::new(model, &s.x, &t.final_delta, grid.partition(), s.label)?;
            let report = match estimator {
                MeasureEstimator::Eq4 => mean_interaction_eq4(&game)?,
                MeasureEstimator::Sampled => {
                    mean_interaction_sampled(&game, &manifest.measure.sampling)?
                }
                MeasureEstimator::BruteForce => mean_interaction_pairwise(&game)?,
            };
            values.push(report.mean_interaction);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        println!("{:<12} {:?} mean interaction {mean:.6e}", a.name, estimator);
        rows.push(Measurement {
            attack: a.name.clone(),
            estimator,
            sampling: (estimator == MeasureEstimator::Sampled).then_some(manifest.measure.sampling),
            grid: grid.l,
            values,
            mean,
        });
    }
    stage.write_json("interactions.json", "interactions", &rows)?;
    stage.finish(jobs)
}

#[derive(Debug, Clone, Serialize)]
struct LooTable {
    attack: String,
    target: String,
    loo_steps: Vec<usize>,
    loo_success_rate: f64,
    final_step: TransferReport,
}

pub fn report(manifest: &ExperimentManifest, out: &Path, force: bool, jobs: usize) -> Result<()> {
    let r = &manifest.report;
    let points = r.c_values.len() * r.p_values.len();
    if points < 3 {
        return Err(CliError::Usage(format!(
            "the correlation sweep needs at least 3 (c, p) points, got {points}"
        )));
    }
    if !r.lambdas.contains(&0.0) {
        return Err(CliError::Usage("report.lambdas must include 0".into()));
    }
    let dataset = manifest.dataset.load()?;
    let base = manifest.report_attack();
    base.validate(dataset.dim())
        .map_err(|e| CliError::Usage(format!("report.attack: {e}")))?;
    let loaded = load_models(manifest, out, dataset)?;
    let traces = load_traces(manifest, out)?;
    let samples = examples(manifest, &loaded.dataset)?;
    let grid = base.grid_partition(loaded.dataset.dim())?;
    let stage = Stage::create(out.join("report"), manifest, force)?;

    let mut loo = Vec::new();
    for (a, _, list) in &traces {
        let deltas: Vec<Vec<f64>> = list.iter().map(|t| t.final_delta.clone()).collect();
        for t in &loaded.targets {
            let steps = loo_select(list, &t.model, &samples)?;
            let hits = samples
                .iter()
                .zip(list)
                .zip(&steps)
                .filter(|((s, tr), &step)| {
                    let k = tr
                        .step_indices
                        .iter()
                        .position(|&i| i == step)
                        .expect("selected step is stored");
                    let xd: Vec<f64> = s.x.iter().zip(&tr.deltas[k]).map(|(a, b)| a + b).collect();
                    t.model.predict(&xd).map(|p| p != s.label).unwrap_or(false)
                })
                .count();
            let cfg = &a.config;
            let tags = Tags {
                method: cfg.method.name().into(),
                c: (cfg.method == Method::Opt).then_some(cfg.c),
                p_relax: (cfg.method == Method::Opt).then_some(cfg.p_relax),
                lambda: matches!(cfg.method, Method::Ir | Method::InteractionOnly)
                    .then_some(cfg.lambda),
            };
            let mut final_step =
                evaluate_transfer(&loaded.source.id, &t.id, &t.model, &samples, &deltas, tags)?;
            final_step.loo_steps = Some(steps.clone());
            let rate = hits as f64 / samples.len() as f64;
            println!("loo {:<12} -> {:<16} {rate:.3}", a.name, t.id);
            loo.push(LooTable {
                attack: a.name.clone(),
                target: t.id.clone(),
                loo_steps: steps,
                loo_success_rate: rate,
                final_step,
            });
        }
    }
    stage.write_json("loo.json", "loo", &loo)?;

    let tau = pilot_tau(&loaded.source.model, &samples, &base)?;
    let sweep = correlation_sweep(
        &loaded.source,
        &loaded.targets,
        &samples,
        &r.c_values,
        &r.p_values,
        tau,
        &base,
        &grid,
    )?;
    for c in &sweep.correlations {
        println!("correlation {:<16} r = {:?}", c.target_id, c.correlation.r);
    }
    stage.write_json("correlation.json", "correlation-sweep", &sweep)?;
    stage.write_csv("correlation.csv", |w| correlation_csv(&sweep, w))?;

    let lambdas = lambda_sweep(
        &loaded.source,
        &loaded.targets,
        &samples,
        &r.lambdas,
        &base,
        &grid,
    )?;
    stage.write_json("lambda.json", "lambda-sweep", &lambdas)?;
    stage.write_csv("lambda.csv", |w| lambda_csv(&lambdas, w))?;

    let io_cfg = AttackConfig {
        lambda: r.interaction_only_lambda,
        ..base.clone()
    };
    let curve = interaction_only_curve(&loaded.source, &loaded.targets, &samples, &io_cfg)?;
    for t in &curve.targets {
        println!(
            "interaction-only {:<16} peak {:.3} noise {:.3}",
            t.target_id,
            t.peak_success(),
            t.noise_success_rate
        );
    }
    stage.write_json("interaction_only.json", "interaction-only-curve", &curve)?;
    stage.write_csv("interaction_only.csv", |w| curve_csv(&curve, w))?;

    let models: Vec<&Model> = std::iter::once(&loaded.source)
        .chain(&loaded.targets)
        .map(|m| &m.model)
        .collect();
    let count = r.proposition_examples.min(loaded.dataset.test.len());
    let prop_cfg = PropositionConfig {
        attack: AttackConfig {
            loss: LossKind::Margin,
            ..base.clone()
        },
        grid: base.grid,
        bootstrap_resamples: r.bootstrap_resamples,
        seed: manifest.seed,
        ..PropositionConfig::default()
    };
    let props = proposition_suite(&models, &loaded.dataset.test[..count], &prop_cfg)?;
    for c in &props.comparisons {
        println!(
            "{:<16} mean {:+.3e} ci [{:+.3e}, {:+.3e}] {:?}",
            c.name, c.interval.mean, c.interval.lo, c.interval.hi, c.verdict
        );
    }
    stage.write_json("propositions.json", "proposition-suite", &props)?;

    for (a, index, list) in &traces {
        let g = index.config.grid_partition(loaded.dataset.dim())?;
        let s = &samples[0];
        let cells = neighbor_heatmap(
            &loaded.source.model,
            &s.x,
            s.label,
            &list[0].final_delta,
            &g,
            r.heatmap_estimator,
        )?;
        stage.write_csv(&format!("heatmap_{}.csv", a.name), |w| {
            heatmap_csv(&cells, w)
        })?;
    }
    stage.finish(jobs)
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    passed: bool,
    suites: &'a [SuiteReport],
}

pub fn verify(suite: Option<&str>, cases: Option<usize>, seed: u64) -> Result<()> {
    let opts = VerifyOptions {
        seed,
        cases: cases.unwrap_or(VerifyOptions::default().cases),
        ..VerifyOptions::default()
    };
    let reports = match suite {
        Some(name) => vec![run_suite(
            name.parse::<Suite>()
                .map_err(|e| CliError::Usage(e.to_string()))?,
            &opts,
        )?],
        None => run_all(&opts)?,
    };
    let passed = reports.iter().all(|r| r.passed);
    let summary = VerifySummary {
        passed,
        suites: &reports,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    if passed {
        Ok(())
    } else {
        let failed: Vec<String> = reports
            .iter()
            .filter(|r| !r.passed)
            .flat_map(|r| {
                r.checks.iter().filter(|c| !c.passed).map(move |c| {
                    format!(
                        "{}/{} (max error {:.3e} > {:e})",
                        r.suite, c.name, c.max_error, c.tolerance
                    )
                })
            })
            .collect();
        Err(CliError::Verify(failed.join(", ")))
    }
}

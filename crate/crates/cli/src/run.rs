//! The `run` orchestration: data → preprocessing → block split → random
//! search per pipeline → held-out evaluation → report and artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rsvp_core::eval::{
    block_split, fit_pipeline, one_way_anova, random_search_in, CvContext, FittedPipeline, PipelineKind,
};
use rsvp_core::io;
use rsvp_core::preprocess::{self, ContinuousRecording, EpochSet, Label};
use rsvp_core::spatial::FilterMethod;
use rsvp_core::synth::synth_rsvp;

use crate::artifacts;
use crate::config::{DataSource, PreprocessConfig, Reference, RunConfig};
use crate::report::{
    AnovaEntry, DatasetResult, EvaluationReport, PipelineResult, PreprocessSummary, SummaryRow, REPORT_VERSION,
};
use crate::StageError;

pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const ERP_DIFF_FILE: &str = "erp_diff.csv";
/// Present in the output directory while a run is incomplete or after it
/// failed.
pub const PARTIAL_MARKER: &str = "PARTIAL";

/// Preprocessed epochs of one participant.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub epochs: EpochSet,
    pub summary: PreprocessSummary,
}

/// EOG channels named in the config that the recording actually has.
fn present<'a>(names: &'a [String], channels: &[String]) -> Vec<&'a str> {
    names
        .iter()
        .filter(|n| channels.contains(n))
        .map(String::as_str)
        .collect()
}

/// Reference, filter, resample, epoch, reject, then drop the EOG channels.
pub fn preprocess_recording(rec: &ContinuousRecording, cfg: &PreprocessConfig) -> rsvp_core::Result<Dataset> {
    let eog = present(&cfg.eog_channels, &rec.channels);
    let (lo, hi) = cfg.band;
    let rec = match cfg.reference {
        Reference::CarFirst => {
            preprocess::bandpass(&preprocess::common_average_reference_excluding(rec, &eog)?, lo, hi)?
        }
        Reference::BandpassFirst => {
            preprocess::common_average_reference_excluding(&preprocess::bandpass(rec, lo, hi)?, &eog)?
        }
        Reference::None => preprocess::bandpass(rec, lo, hi)?,
    };
    let rec = match cfg.target_rate {
        Some(rate) => preprocess::resample(&rec, rate)?,
        None => rec,
    };
    let cut = preprocess::epoch(&rec, cfg.window)?;
    let (set, rejected_targets, rejected_standards) = match cfg.rejection_uv {
        Some(threshold) if !eog.is_empty() => {
            let r = preprocess::reject_trials(&cut.set, &eog, threshold)?;
            (r.set, r.removed_targets, r.removed_standards)
        }
        Some(_) => {
            warn!("no EOG channel present, trial rejection skipped");
            (cut.set, 0, 0)
        }
        None => (cut.set, 0, 0),
    };
    let set = set.without_channels(&eog);
    set.require_both_classes()?;
    Ok(Dataset {
        name: String::new(),
        summary: summarize(&set, cut.dropped, rejected_targets, rejected_standards),
        epochs: set,
    })
}

fn summarize(set: &EpochSet, dropped: usize, rejected_targets: usize, rejected_standards: usize) -> PreprocessSummary {
    PreprocessSummary {
        rate: set.rate,
        channels: set.channels.clone(),
        epochs: set.len(),
        targets: set.count(Label::Target),
        standards: set.count(Label::Standard),
        dropped_at_edges: dropped,
        rejected_targets,
        rejected_standards,
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Names must be unique since each dataset gets its own output directory.
fn unique_names(mut datasets: Vec<Dataset>) -> Vec<Dataset> {
    let mut seen = std::collections::HashMap::<String, usize>::new();
    for d in &mut datasets {
        let n = seen.entry(d.name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            d.name = format!("{}-{}", d.name, n);
        }
    }
    datasets
}

/// Loads or synthesizes every participant and preprocesses it.
pub fn load_datasets(cfg: &RunConfig, seed: u64) -> Result<Vec<Dataset>, StageError> {
    let datasets = match &cfg.data {
        DataSource::Synth { participants, generator } => (0..*participants)
            .map(|i| {
                let mut g = generator.clone();
                g.seed = seed.wrapping_add(i as u64);
                let (rec, _) = synth_rsvp(&g).map_err(StageError::at("synth"))?;
                let mut d = preprocess_recording(&rec, &cfg.preprocess)
                    .map_err(StageError::at(format!("preprocess synth-{i}")))?;
                d.name = format!("synth-{i}");
                Ok(d)
            })
            .collect::<Result<Vec<_>, StageError>>()?,
        DataSource::Recordings(paths) => paths
            .iter()
            .map(|p| {
                let rec = io::read_recording(p).map_err(StageError::at(format!("load {}", p.display())))?;
                let mut d = preprocess_recording(&rec, &cfg.preprocess)
                    .map_err(StageError::at(format!("preprocess {}", p.display())))?;
                d.name = file_stem(p);
                Ok(d)
            })
            .collect::<Result<Vec<_>, StageError>>()?,
        DataSource::Epochs(paths) => paths
            .iter()
            .map(|p| {
                let set = io::read_training_epochs(p).map_err(StageError::at(format!("load {}", p.display())))?;
                Ok(Dataset {
                    name: file_stem(p),
                    summary: summarize(&set, 0, 0, 0),
                    epochs: set,
                })
            })
            .collect::<Result<Vec<_>, StageError>>()?,
    };
    Ok(unique_names(datasets))
}

struct Evaluated {
    result: PipelineResult,
    fitted: FittedPipeline,
}

fn evaluate_dataset(
    cfg: &RunConfig,
    seed: u64,
    data: &Dataset,
) -> Result<(EpochSet, EpochSet, Vec<Evaluated>), StageError> {
    let stage = |s: &str| format!("{s} {}", data.name);
    let (train, test) =
        block_split(&data.epochs, cfg.preprocess.test_blocks_per_task, seed).map_err(StageError::at(stage("split")))?;
    train.require_both_classes().map_err(StageError::at(stage("split")))?;
    test.require_both_classes().map_err(StageError::at(stage("split")))?;
    let ctx = CvContext::new(&train, cfg.search.k, seed).map_err(StageError::at(stage("search")))?;
    let mut out = Vec::with_capacity(cfg.pipelines.len());
    for &kind in &cfg.pipelines {
        let tag = format!("{} {}", kind, data.name);
        let search = random_search_in(&ctx, &cfg.search.space, kind, cfg.search.budget, seed)
            .map_err(StageError::at(format!("search {tag}")))?;
        let fitted = fit_pipeline(&search.best, &train).map_err(StageError::at(format!("fit {tag}")))?;
        let test_auc = fitted.auc(&test).map_err(StageError::at(format!("evaluate {tag}")))?;
        let best_cv_auc = search.best_row().mean_auc.unwrap_or(f64::NAN);
        info!("{tag}: cv {best_cv_auc:.4} test {test_auc:.4}");
        out.push(Evaluated {
            result: PipelineResult {
                pipeline: kind,
                best_index: search.best_index,
                best_hyper: search.best.hyper,
                best_cv_auc,
                test_auc,
                candidates: search.candidates,
                model: fitted.model.clone(),
            },
            fitted,
        });
    }
    Ok((train, test, out))
}

/// Writes the per-dataset plot files and returns their paths relative to
/// `out`.
fn write_artifacts(
    cfg: &RunConfig,
    out: &Path,
    data: &Dataset,
    train: &EpochSet,
    evaluated: &[Evaluated],
) -> Result<Vec<String>, StageError> {
    let stage = StageError::at(format!("artifacts {}", data.name));
    let dir = out.join(&data.name);
    let mut files = Vec::new();
    if !cfg.artifacts.erp_diff && !cfg.artifacts.topomaps {
        return Ok(files);
    }
    fs::create_dir_all(&dir).map_err(|e| StageError::new(format!("artifacts {}", data.name), e.into()))?;
    if cfg.artifacts.erp_diff {
        artifacts::write_erp_diff(train, &dir.join(ERP_DIFF_FILE)).map_err(stage)?;
        files.push(format!("{}/{ERP_DIFF_FILE}", data.name));
    }
    if cfg.artifacts.topomaps {
        if let Err(e) = rsvp_core::montage::positions(&train.channels) {
            warn!("{}: topomaps skipped: {e}", data.name);
            return Ok(files);
        }
        for method in FilterMethod::ALL {
            // the filter bank of the best cross-validated pipeline for this method
            let best = evaluated
                .iter()
                .filter(|e| e.result.pipeline.filter == Some(method))
                .fold(None::<&Evaluated>, |b, e| match b {
                    Some(b) if !(e.result.best_cv_auc > b.result.best_cv_auc) => Some(b),
                    _ => Some(e),
                });
            let Some(bank) = best.and_then(|b| b.fitted.front.bank.as_ref()) else {
                continue;
            };
            let names = artifacts::emit_bank(bank, &train.channels, &dir)
                .map_err(StageError::at(format!("artifacts {}", data.name)))?;
            files.extend(names.into_iter().map(|n| format!("{}/{n}", data.name)));
        }
    }
    Ok(files)
}

fn summary_rows(pipelines: &[PipelineKind], datasets: &[DatasetResult]) -> Vec<SummaryRow> {
    pipelines
        .iter()
        .enumerate()
        .map(|(i, &pipeline)| {
            let test_auc: Vec<f64> = datasets.iter().map(|d| d.pipelines[i].test_auc).collect();
            SummaryRow {
                pipeline,
                mean: test_auc.iter().sum::<f64>() / test_auc.len() as f64,
                test_auc,
            }
        })
        .collect()
}

/// Per-dataset mean test AUC over the classifiers of each filter.
fn filter_groups(pipelines: &[PipelineKind], datasets: &[DatasetResult]) -> Vec<(String, Vec<f64>)> {
    let filters = FilterMethod::ALL
        .iter()
        .map(|&f| Some(f))
        .chain(std::iter::once(None));
    filters
        .filter_map(|filter| {
            let idx: Vec<usize> = (0..pipelines.len()).filter(|&i| pipelines[i].filter == filter).collect();
            if idx.is_empty() {
                return None;
            }
            let values = datasets
                .iter()
                .map(|d| idx.iter().map(|&i| d.pipelines[i].test_auc).sum::<f64>() / idx.len() as f64)
                .collect();
            Some((filter.map_or(PipelineKind::NO_FILTER, FilterMethod::name).to_string(), values))
        })
        .collect()
}

fn anova_entry(groups: Vec<(String, Vec<f64>)>) -> AnovaEntry {
    let (names, values): (Vec<String>, Vec<Vec<f64>>) = groups.into_iter().unzip();
    let (result, note) = match one_way_anova(&values) {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    AnovaEntry {
        groups: names,
        values,
        result,
        note,
    }
}

fn anova_entries(pipelines: &[PipelineKind], datasets: &[DatasetResult]) -> Vec<AnovaEntry> {
    let groups = filter_groups(pipelines, datasets);
    if groups.len() < 2 {
        return vec![];
    }
    let mut out = Vec::new();
    let pick = |name: &str| groups.iter().find(|(n, _)| n == name).cloned();
    if let (Some(m), Some(x)) = (pick(FilterMethod::Mtwlb.name()), pick(FilterMethod::Xdawn.name())) {
        out.push(anova_entry(vec![m, x]));
    }
    if groups.len() > 2 {
        out.push(anova_entry(groups));
    }
    out
}

/// Writes `bytes` to `path` through a temporary file so readers never see
/// a truncated file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn io_stage(stage: &str) -> impl Fn(std::io::Error) -> StageError + '_ {
    move |e| StageError::new(stage, e.into())
}

/// Runs every configured pipeline on every dataset and writes all outputs
/// into `out`. The report is written last; until then a `PARTIAL` marker
/// flags the directory as incomplete, and it stays behind on failure.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<EvaluationReport, StageError> {
    cfg.validate()?;
    let seed = cfg.master_seed()?;
    fs::create_dir_all(out).map_err(io_stage("output"))?;
    let marker = out.join(PARTIAL_MARKER);
    fs::write(&marker, "run in progress or failed; outputs here are incomplete\n").map_err(io_stage("output"))?;
    let report = run_inner(cfg, seed, out);
    match &report {
        Ok(_) => fs::remove_file(&marker).map_err(io_stage("output"))?,
        Err(e) => {
            let _ = fs::write(&marker, format!("failed: {e}\n"));
        }
    }
    report
}

fn run_inner(cfg: &RunConfig, seed: u64, out: &Path) -> Result<EvaluationReport, StageError> {
    let datasets = load_datasets(cfg, seed)?;
    let mut results = Vec::with_capacity(datasets.len());
    for data in &datasets {
        info!(
            "{}: {} epochs ({} targets) at {} Hz",
            data.name, data.summary.epochs, data.summary.targets, data.summary.rate
        );
        let (train, test, evaluated) = evaluate_dataset(cfg, seed, data)?;
        let files = write_artifacts(cfg, out, data, &train, &evaluated)?;
        results.push(DatasetResult {
            name: data.name.clone(),
            preprocessing: data.summary.clone(),
            train_epochs: train.len(),
            test_epochs: test.len(),
            pipelines: evaluated.into_iter().map(|e| e.result).collect(),
            artifacts: files,
        });
    }
    let mut anova = anova_entries(&cfg.pipelines, &results);
    if results.len() < 2 {
        for a in &mut anova {
            a.note = Some("needs at least 2 datasets".into());
            a.result = None;
        }
    }
    let report = EvaluationReport {
        version: REPORT_VERSION,
        seed,
        config: RunConfig {
            seed: Some(seed),
            ..cfg.clone()
        },
        summary: summary_rows(&cfg.pipelines, &results),
        datasets: results,
        anova,
    };
    write_atomic(&out.join(RESULTS_FILE), report.results_csv().as_bytes()).map_err(io_stage("report"))?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| StageError::new("report", e.into()))?;
    write_atomic(&out.join(REPORT_FILE), &json).map_err(io_stage("report"))?;
    Ok(report)
}

/// Reads a report back.
pub fn read_report(path: &Path) -> Result<EvaluationReport, StageError> {
    let bytes = fs::read(path).map_err(io_stage("report"))?;
    serde_json::from_slice(&bytes).map_err(|e| StageError::new("report", e.into()))
}

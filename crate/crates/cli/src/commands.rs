//! One function per subcommand. Each writes its files into the output
//! directory and returns what the manifest needs.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use mvp_core::dataset::{join_partition, JoinOptions, TableFormat};
use mvp_core::ensemble::{ablation_run, train_cv_with, AblationReport, CvReport};
use mvp_core::gbdt::FeatureImportance;
use mvp_core::pipeline::PooledVideos;
use mvp_core::synth::{describe, generate, write_summary};
use mvp_core::{compute_label, load_embeddings, load_posts, load_users, Dataset, EmbeddingKind, Error, MetricsReport};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bundle::ModelBundle;
use crate::config::{Paths, RunConfig};
use crate::error::{CliError, CliResult};

pub const MODEL_FILE: &str = "model.json";
pub const CV_REPORT_FILE: &str = "cv_report.json";
pub const OOF_FILE: &str = "oof_predictions.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_JSON: &str = "ablation.json";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const IMPORTANCE_GROUPS_FILE: &str = "importance_groups.csv";
pub const IMPORTANCE_BLOCKS_FILE: &str = "importance_blocks.csv";
pub const SUMMARY_FILE: &str = "synth_summary.json";

/// What a command read and wrote, plus a one-line stdout summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    /// File names inside the output directory.
    pub outputs: Vec<String>,
    pub summary: Value,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Core(e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn flush<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("paths.{key} is not set (config file or flag)")))
}

/// Reads and joins the tables and embeddings named in `paths`.
pub fn load_dataset(paths: &Paths, strict: bool) -> CliResult<(Dataset, Vec<PathBuf>)> {
    let posts_path = required(&paths.posts, "posts")?;
    let users_path = required(&paths.users, "users")?;
    let posts = load_posts(posts_path, TableFormat::from_path(posts_path))?;
    let users = load_users(users_path, TableFormat::from_path(users_path))?;
    let mut inputs = vec![posts_path.to_path_buf(), users_path.to_path_buf()];
    let video = match &paths.video_embeddings {
        Some(p) => {
            inputs.push(p.clone());
            Some(load_embeddings(p, EmbeddingKind::VideoFrames)?)
        }
        None => None,
    };
    let text = match &paths.text_embeddings {
        Some(p) => {
            inputs.push(p.clone());
            Some(load_embeddings(p, EmbeddingKind::Text)?)
        }
        None => None,
    };
    let (ds, rejected) = join_partition(&posts, &users, video.as_ref(), text.as_ref(), JoinOptions { strict })?;
    if let Some(first) = rejected.into_iter().next() {
        return Err(first.into());
    }
    if ds.is_empty() {
        return Err(Error::Data("no posts to work on".into()).into());
    }
    log::info!("loaded {} posts", ds.len());
    Ok((ds, inputs))
}

fn write_predictions(path: &Path, ids: impl Iterator<Item = String>, yhat: &[f64]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["post_id", "yhat"]).map_err(Error::from)?;
    for (id, p) in ids.zip(yhat) {
        w.write_record([id, p.to_string()]).map_err(Error::from)?;
    }
    flush(w, path)
}

fn write_metrics(out: &Path, report: &MetricsReport) -> CliResult<()> {
    write_json(&out.join(METRICS_FILE), report)?;
    let path = out.join(HISTOGRAM_FILE);
    report.histograms.write_csv(create(&path)?)?;
    Ok(())
}

pub fn cmd_synth(config: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let data = generate(&config.synth)?;
    let paths = data.write(out)?;
    let summary = describe(&data.posts, &data.users, config.synth.max_posts_per_user)?;
    write_summary(&summary, create(&out.join(SUMMARY_FILE))?)?;
    let name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let sidecar = mvp_core::dataset::sidecar_path(&paths.video);
    Ok(Outcome {
        inputs: vec![],
        outputs: vec![
            name(&paths.posts),
            name(&paths.users),
            name(&paths.video),
            name(&sidecar),
            name(&paths.truth),
            SUMMARY_FILE.into(),
        ],
        summary: json!({
            "n_posts": summary.n_posts,
            "n_users": summary.n_users,
            "max_post_count": summary.max_post_count,
            "power_law_exponent": summary.power_law_exponent,
        }),
    })
}

pub fn cmd_train(config: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let (ds, inputs) = load_dataset(&config.paths, config.pipeline.strict_join)?;
    let pooled = PooledVideos::from_dataset(&ds)?;
    let cv = train_cv_with(&ds, &pooled, &config.pipeline, None)?;
    let bundle = ModelBundle::new(cv.ensemble);
    bundle.save(&out.join(MODEL_FILE))?;
    let report: &CvReport = &cv.report;
    write_json(&out.join(CV_REPORT_FILE), report)?;
    write_predictions(
        &out.join(OOF_FILE),
        ds.examples.iter().map(|e| e.post.post_id.clone()),
        &report.oof_predictions,
    )?;
    let mut metrics =
        MetricsReport::from_predictions(&ds.labels(), &report.oof_predictions, config.pipeline.histogram_bins)?;
    metrics.importance = bundle.ensemble.importance().entries;
    write_metrics(out, &metrics)?;
    Ok(Outcome {
        inputs,
        outputs: vec![
            MODEL_FILE.into(),
            CV_REPORT_FILE.into(),
            OOF_FILE.into(),
            METRICS_FILE.into(),
            HISTOGRAM_FILE.into(),
        ],
        summary: json!({
            "n_posts": ds.len(),
            "oof_mape": report.oof_mape.mape,
            "baseline_oof_mape": report.baseline_oof_mape.mape,
            "fold_mape": report.folds.iter().map(|f| f.validation_mape).collect::<Vec<_>>(),
        }),
    })
}

pub fn cmd_predict(config: &RunConfig, model: &Path, out: &Path) -> CliResult<Outcome> {
    let bundle = ModelBundle::load(model)?;
    let (ds, mut inputs) = load_dataset(&config.paths, bundle.ensemble.config.strict_join)?;
    bundle.check_inputs(&ds)?;
    let pooled = PooledVideos::from_dataset(&ds)?;
    let yhat = bundle.ensemble.predict_dataset(&ds, &pooled)?;
    write_predictions(
        &out.join(PREDICTIONS_FILE),
        ds.examples.iter().map(|e| e.post.post_id.clone()),
        &yhat,
    )?;
    inputs.insert(0, model.to_path_buf());
    Ok(Outcome {
        inputs,
        outputs: vec![PREDICTIONS_FILE.into()],
        summary: json!({ "n_predictions": yhat.len() }),
    })
}

/// Where evaluation labels come from.
#[derive(Debug, Clone)]
pub enum LabelSource {
    /// A `post_id,label` table.
    Labels(PathBuf),
    /// A posts table; labels are computed from views and age.
    Posts(PathBuf),
}

fn read_predictions(path: &Path) -> CliResult<HashMap<String, f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut map = HashMap::new();
    for (i, rec) in r.deserialize::<(String, f64)>().enumerate() {
        let (id, y) = rec.map_err(Error::from)?;
        if map.insert(id.clone(), y).is_some() {
            return Err(Error::DuplicateId { kind: "prediction", id }.into());
        }
        if !y.is_finite() {
            return Err(Error::Data(format!("prediction row {} is not finite", i + 1)).into());
        }
    }
    Ok(map)
}

fn read_labels(source: &LabelSource) -> CliResult<Vec<(String, f64)>> {
    match source {
        LabelSource::Posts(p) => load_posts(p, TableFormat::from_path(p))?
            .into_iter()
            .map(|post| Ok((post.post_id, compute_label(post.raw_views, post.days_since_publish)?)))
            .collect(),
        LabelSource::Labels(p) => {
            let file = File::open(p).map_err(|e| CliError::io(p, e))?;
            let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
            r.deserialize::<(String, f64)>()
                .map(|rec| rec.map_err(|e| Error::from(e).into()))
                .collect()
        }
    }
}

pub fn cmd_evaluate(config: &RunConfig, predictions: &Path, labels: &LabelSource, out: &Path) -> CliResult<Outcome> {
    let preds = read_predictions(predictions)?;
    let labeled = read_labels(labels)?;
    let mut y = Vec::with_capacity(labeled.len());
    let mut yhat = Vec::with_capacity(labeled.len());
    for (id, label) in &labeled {
        let p = preds
            .get(id)
            .ok_or_else(|| Error::Data(format!("no prediction for post `{id}`")))?;
        y.push(*label);
        yhat.push(*p);
    }
    if preds.len() > labeled.len() {
        log::warn!(
            "{} predictions have no label and were ignored",
            preds.len() - labeled.len()
        );
    }
    let metrics = MetricsReport::from_predictions(&y, &yhat, config.pipeline.histogram_bins)?;
    write_metrics(out, &metrics)?;
    let label_path = match labels {
        LabelSource::Labels(p) | LabelSource::Posts(p) => p.clone(),
    };
    Ok(Outcome {
        inputs: vec![predictions.to_path_buf(), label_path],
        outputs: vec![METRICS_FILE.into(), HISTOGRAM_FILE.into()],
        summary: json!({
            "mape": metrics.mape,
            "n": metrics.n,
            "excluded_near_zero": metrics.excluded_near_zero,
        }),
    })
}

pub fn cmd_ablate(config: &RunConfig, out: &Path) -> CliResult<Outcome> {
    let (ds, inputs) = load_dataset(&config.paths, config.pipeline.strict_join)?;
    let report: AblationReport = ablation_run(&ds, &config.pipeline, &config.ablation_groups)?;
    let csv_path = out.join(ABLATION_CSV);
    report.write_csv(create(&csv_path)?)?;
    write_json(&out.join(ABLATION_JSON), &report)?;
    let table: serde_json::Map<String, Value> = report
        .rows
        .iter()
        .map(|r| (r.configuration.clone(), json!(r.mape)))
        .collect();
    Ok(Outcome {
        inputs,
        outputs: vec![ABLATION_CSV.into(), ABLATION_JSON.into()],
        summary: json!({ "mape": table, "skipped": report.skipped }),
    })
}

fn write_importance(out: &Path, imp: &FeatureImportance) -> CliResult<()> {
    let path = out.join(IMPORTANCE_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["feature", "block", "group", "share"])
        .map_err(Error::from)?;
    for e in imp.ranked() {
        w.write_record([e.feature.as_str(), e.block.name(), e.group.name(), &e.share.to_string()])
            .map_err(Error::from)?;
    }
    flush(w, &path)?;

    let path = out.join(IMPORTANCE_GROUPS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["group", "share"]).map_err(Error::from)?;
    for (g, s) in imp.by_group() {
        w.write_record([g.name(), &s.to_string()]).map_err(Error::from)?;
    }
    flush(w, &path)?;

    let path = out.join(IMPORTANCE_BLOCKS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["block", "share"]).map_err(Error::from)?;
    for (b, s) in imp.by_block() {
        w.write_record([b.name(), &s.to_string()]).map_err(Error::from)?;
    }
    flush(w, &path)
}

pub fn cmd_importance(model: &Path, out: &Path) -> CliResult<Outcome> {
    let bundle = ModelBundle::load(model)?;
    let imp = bundle.ensemble.importance();
    write_importance(out, &imp)?;
    let blocks: serde_json::Map<String, Value> = imp
        .by_block()
        .into_iter()
        .map(|(b, s)| (b.name().to_string(), json!(s)))
        .collect();
    Ok(Outcome {
        inputs: vec![model.to_path_buf()],
        outputs: vec![
            IMPORTANCE_FILE.into(),
            IMPORTANCE_GROUPS_FILE.into(),
            IMPORTANCE_BLOCKS_FILE.into(),
        ],
        summary: json!({ "blocks": blocks, "no_splits": imp.no_splits }),
    })
}

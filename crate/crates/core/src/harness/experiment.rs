use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, GafConfig, LeadSelector, SourceFormat};
use super::metrics::{compute_metrics, Average, Metrics};
use super::{HarnessError, Result};
use crate::beats::{self, minmax_normalize, segment_beats, Beat, Dataset, DatasetManifest, SmoteReport};
use crate::fusion::{dst_fuse_with, score_fuse_slices, FeatureFusionHead, FusedDecision, FusionConfig};
use crate::gaf::image_features;
use crate::models::{self, write_history_csv, Architecture, EpochStats, ModelParams, TrainConfig, ViewKind};
use crate::wfdb::{load_beat_csv, select_lead, AamiClass, EcgRecord};

/// Decision rules compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    View1,
    View2,
    Dst,
    ScoreMean,
    FeatureLevel,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::View1,
        Method::View2,
        Method::Dst,
        Method::ScoreMean,
        Method::FeatureLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::View1 => "view1",
            Method::View2 => "view2",
            Method::Dst => "DST",
            Method::ScoreMean => "ScoreMean",
            Method::FeatureLevel => "FeatureLevel",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_source(config: &ExperimentConfig) -> Result<()> {
    let d = &config.dataset;
    if !d.source.exists() {
        return Err(HarnessError::Config(format!(
            "dataset.source: {} does not exist",
            d.source.display()
        )));
    }
    Ok(())
}

/// Names of the records a WFDB source contributes, after `exclude`.
pub fn record_names(config: &ExperimentConfig) -> Result<Vec<String>> {
    check_source(config)?;
    let d = &config.dataset;
    let mut names = if d.records.is_empty() {
        let entries = std::fs::read_dir(&d.source).map_err(HarnessError::io(&d.source))?;
        let mut names = Vec::new();
        for entry in entries {
            let path = entry.map_err(HarnessError::io(&d.source))?.path();
            if path.extension().is_some_and(|e| e == "hea") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        names
    } else {
        d.records.clone()
    };
    names.retain(|n| !d.exclude.contains(n));
    if names.is_empty() {
        return Err(HarnessError::Data(format!("no records found in {}", d.source.display())));
    }
    Ok(names)
}

fn lead_index(record: &EcgRecord, lead: Option<&LeadSelector>) -> Result<usize> {
    Ok(match lead {
        None => select_lead(&record.header, None)?,
        Some(LeadSelector::Index(i)) => select_lead(&record.header, Some(*i))?,
        Some(LeadSelector::Name(name)) => record
            .header
            .signals
            .iter()
            .position(|s| s.description.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                HarnessError::Data(format!(
                    "record {} has no lead {name:?}",
                    record.header.record_name
                ))
            })?,
    })
}

/// Reads and segments one WFDB record.
pub fn record_beats(config: &ExperimentConfig, name: &str) -> Result<Vec<Beat>> {
    let d = &config.dataset;
    let record = EcgRecord::read(&d.source, name, &d.annotator)?;
    let bad = record.consistency_failures();
    if !bad.is_empty() {
        return Err(HarnessError::Data(format!(
            "record {name}: initial value or checksum mismatch on channel(s) {bad:?}"
        )));
    }
    if record.annotations.is_empty() {
        return Err(HarnessError::Data(format!(
            "record {name} has no {} annotations",
            d.annotator
        )));
    }
    let lead = lead_index(&record, d.lead.as_ref())?;
    Ok(segment_beats(
        &record.physical(lead),
        record.header.sampling_rate,
        &record.annotations,
        &d.window(),
        d.classes,
        name,
    )?)
}

/// All beats of the configured source, plus the names of the records used.
pub fn load_beats(config: &ExperimentConfig) -> Result<(Vec<Beat>, Vec<String>)> {
    check_source(config)?;
    let d = &config.dataset;
    match d.format {
        SourceFormat::Wfdb => {
            let names = record_names(config)?;
            let mut all = Vec::new();
            for name in &names {
                all.extend(record_beats(config, name)?);
            }
            Ok((all, names))
        }
        SourceFormat::Csv => {
            let rows = load_beat_csv(&d.source, config.n_classes())?;
            let id = d.source.file_stem().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
            let beats = rows
                .into_iter()
                .enumerate()
                .map(|(i, row)| {
                    if row.samples.len() != d.beat_len {
                        return Err(HarnessError::Data(format!(
                            "row {i} has {} samples but L is {}",
                            row.samples.len(),
                            d.beat_len
                        )));
                    }
                    Ok(Beat {
                        samples: row.samples,
                        label: AamiClass::from_index(row.label).expect("label checked by loader"),
                        record_id: id.clone(),
                        r_peak: i,
                        synthetic: false,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((beats, vec![id]))
        }
    }
}

/// Split dataset plus the normalized, balanced training set.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Beats as segmented (mV).
    pub dataset: Dataset,
    /// Normalized training beats, SMOTE-balanced when enabled.
    pub train: Vec<Beat>,
    pub smote: SmoteReport,
    pub records: Vec<String>,
}

impl PreparedData {
    pub fn manifest(&self, config: &ExperimentConfig) -> DatasetManifest {
        let mut m = DatasetManifest::describe(&self.dataset, config.dataset.split_mode, Some(&self.train));
        m.records = self.records.clone();
        m
    }

    /// Normalized test beats.
    pub fn test_inputs(&self) -> Vec<Vec<f64>> {
        self.dataset.test.iter().map(|b| minmax_normalize(&b.samples)).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.dataset.test.iter().map(|b| b.label.index()).collect()
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedData> {
    let (all, records) = load_beats(config)?;
    let d = &config.dataset;
    let dataset = beats::split(all, d.split_mode, d.train_ratio, config.seed, config.n_classes())?;
    let normalized: Vec<Beat> = dataset.train.iter().map(Beat::normalized).collect();
    let (train, smote) = if d.smote {
        beats::smote(&normalized, d.smote_k, config.seed)
    } else {
        (normalized, SmoteReport::default())
    };
    Ok(PreparedData {
        dataset,
        train,
        smote,
        records,
    })
}

pub fn rnn_arch(config: &ExperimentConfig) -> Architecture {
    let r = &config.models.rnn;
    Architecture::BiRnn {
        input_len: config.dataset.beat_len,
        stride: r.stride,
        hidden: r.hidden,
        dense: r.dense.clone(),
        classes: config.n_classes(),
    }
}

pub fn mlp_arch(config: &ExperimentConfig) -> Architecture {
    Architecture::Mlp {
        inputs: config.gaf.res * config.gaf.res,
        hidden: config.models.mlp.hidden.clone(),
        classes: config.n_classes(),
    }
}

/// Training config for one of the three trained components
/// (0 recurrent view, 1 image view, 2 fusion head).
pub fn component_train_config(config: &ExperimentConfig, component: u64) -> TrainConfig {
    TrainConfig {
        seed: config.seed.wrapping_add(component),
        ..config.models.train.clone()
    }
}

/// Per-beat outputs of both views and every fusion rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatOutputs {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub dst: FusedDecision,
    pub score: FusedDecision,
    pub feature: FusedDecision,
}

impl BeatOutputs {
    pub fn chosen(&self, method: Method) -> usize {
        match method {
            Method::View1 => models::argmax(&self.p1),
            Method::View2 => models::argmax(&self.p2),
            Method::Dst => self.dst.chosen,
            Method::ScoreMean => self.score.chosen,
            Method::FeatureLevel => self.feature.chosen,
        }
    }
}

/// Both view models, the feature-fusion head and the settings needed to
/// apply them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub rnn: ModelParams,
    pub mlp: ModelParams,
    pub head: FeatureFusionHead,
    pub gaf: GafConfig,
    pub fusion: FusionConfig,
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(HarnessError::Numeric(format!("{what} produced a non-finite value")))
    }
}

const CHECKPOINTS: [&str; 3] = ["rnn.ckpt.json", "mlp.ckpt.json", "head.ckpt.json"];

impl TrainedSystem {
    pub fn image_input(&self, unit_beat: &[f64]) -> Result<Vec<f64>> {
        Ok(image_features(unit_beat, self.gaf.range, self.gaf.res)?)
    }

    /// Runs every method on one normalized beat.
    pub fn predict(&self, unit_beat: &[f64]) -> Result<BeatOutputs> {
        let (p1, f1) = self.rnn.predict_with_features(unit_beat)?;
        let (p2, f2) = self.mlp.predict_with_features(&self.image_input(unit_beat)?)?;
        check_finite("recurrent view", &p1.p)?;
        check_finite("image view", &p2.p)?;
        let dst = dst_fuse_with(&p1.p, &p2.p, self.fusion)?;
        let score = score_fuse_slices(&p1.p, &p2.p)?;
        let feature = self.head.predict(&f1, &f2)?;
        check_finite("feature fusion", &feature.p)?;
        Ok(BeatOutputs {
            p1: p1.p,
            p2: p2.p,
            dst,
            score,
            feature,
        })
    }

    /// [`TrainedSystem::predict`] over many beats, in input order.
    pub fn predict_all(&self, unit_beats: &[Vec<f64>]) -> Result<Vec<BeatOutputs>> {
        unit_beats.par_iter().map(|b| self.predict(b)).collect()
    }

    pub fn save(&self, dir: &Path, config: &ExperimentConfig) -> Result<()> {
        let params = [&self.rnn, &self.mlp, &self.head.params];
        for (i, (p, file)) in params.into_iter().zip(CHECKPOINTS).enumerate() {
            let tc = component_train_config(config, i as u64);
            p.save(&dir.join(file), tc.seed, &tc)?;
        }
        Ok(())
    }

    /// Loads checkpoints written by [`TrainedSystem::save`] and checks them
    /// against the architectures `config` describes.
    pub fn load(dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        let load = |file: &str| -> Result<ModelParams> {
            let path = dir.join(file);
            if !path.exists() {
                return Err(HarnessError::Data(format!("missing checkpoint {}", path.display())));
            }
            let ckpt = ModelParams::load(&path)?;
            if !ckpt.params.is_finite() {
                return Err(HarnessError::Numeric(format!("{} holds non-finite weights", path.display())));
            }
            Ok(ckpt.params)
        };
        let rnn = load(CHECKPOINTS[0])?;
        let mlp = load(CHECKPOINTS[1])?;
        let head_params = load(CHECKPOINTS[2])?;
        let dim1 = rnn.arch.feature_len();
        let dim2 = mlp.arch.feature_len();
        let expected = [
            (&rnn.arch, rnn_arch(config)),
            (&mlp.arch, mlp_arch(config)),
            (
                &head_params.arch,
                FeatureFusionHead::zeros(dim1, dim2, config.n_classes()).params.arch,
            ),
        ];
        for (file, (found, want)) in CHECKPOINTS.iter().zip(expected) {
            if *found != want {
                return Err(HarnessError::Config(format!(
                    "{file}: checkpoint architecture {found:?} does not match config {want:?}"
                )));
            }
        }
        Ok(Self {
            rnn,
            mlp,
            head: FeatureFusionHead {
                dim1,
                dim2,
                params: head_params,
            },
            gaf: config.gaf,
            fusion: config.fusion,
        })
    }
}

/// A trained system together with the training curves of both views.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub system: TrainedSystem,
    pub rnn_history: Vec<EpochStats>,
    pub mlp_history: Vec<EpochStats>,
}

pub fn train_system(config: &ExperimentConfig, data: &PreparedData) -> Result<TrainingRun> {
    let labels: Vec<usize> = data.train.iter().map(|b| b.label.index()).collect();
    let series: Vec<Vec<f64>> = data.train.iter().map(|b| b.samples.clone()).collect();
    let images = series
        .par_iter()
        .map(|s| Ok(image_features(s, config.gaf.range, config.gaf.res)?))
        .collect::<Result<Vec<_>>>()?;

    log::info!("training recurrent view on {} beats", series.len());
    let rnn = models::train(
        rnn_arch(config),
        ViewKind::TimeSeries,
        &series,
        &labels,
        &component_train_config(config, 0),
    )?;
    log::info!("training image view");
    let mlp = models::train(
        mlp_arch(config),
        ViewKind::Image,
        &images,
        &labels,
        &component_train_config(config, 1),
    )?;

    let f1 = series
        .par_iter()
        .map(|s| rnn.params.penultimate(s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let f2 = images
        .par_iter()
        .map(|s| mlp.params.penultimate(s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    log::info!("training feature-fusion head");
    let head = FeatureFusionHead::train(&f1, &f2, &labels, config.n_classes(), &component_train_config(config, 2))?;

    Ok(TrainingRun {
        system: TrainedSystem {
            rnn: rnn.params,
            mlp: mlp.params,
            head,
            gaf: config.gaf,
            fusion: config.fusion,
        },
        rnn_history: rnn.history,
        mlp_history: mlp.history,
    })
}

/// Outputs and metrics of every method on one set of beats.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub truths: Vec<usize>,
    pub outputs: Vec<BeatOutputs>,
    pub metrics: BTreeMap<Method, Metrics>,
}

impl Evaluation {
    pub fn accuracy(&self, method: Method) -> f64 {
        self.metrics[&method].accuracy
    }
}

pub fn evaluate(system: &TrainedSystem, unit_beats: &[Vec<f64>], truths: &[usize], m: usize) -> Result<Evaluation> {
    let outputs = system.predict_all(unit_beats)?;
    let metrics = metrics_by_method(&outputs, truths, m)?;
    Ok(Evaluation {
        truths: truths.to_vec(),
        outputs,
        metrics,
    })
}

pub fn metrics_by_method(outputs: &[BeatOutputs], truths: &[usize], m: usize) -> Result<BTreeMap<Method, Metrics>> {
    Method::ALL
        .iter()
        .map(|&method| {
            let preds: Vec<usize> = outputs.iter().map(|o| o.chosen(method)).collect();
            Ok((method, compute_metrics(truths, &preds, m)?))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub data: PreparedData,
    pub training: TrainingRun,
    pub evaluation: Evaluation,
}

/// Prepares the data, trains both views and the fusion head, evaluates all
/// methods on the clean test split and, with `out_dir`, writes metrics,
/// predictions, manifest, checkpoints and training curves there.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    let data = prepare(config)?;
    let training = train_system(config, &data)?;
    let evaluation = evaluate(
        &training.system,
        &data.test_inputs(),
        &data.test_labels(),
        config.n_classes(),
    )?;
    let report = ExperimentReport {
        data,
        training,
        evaluation,
    };
    if let Some(dir) = out_dir {
        report.write(dir, config)?;
    }
    Ok(report)
}

fn create(path: PathBuf) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(&path)
        .map(std::io::BufWriter::new)
        .map_err(HarnessError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path.to_path_buf())?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::Data(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(HarnessError::io(path))
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    seed: u64,
    n_test: usize,
    average: Average,
    methods: BTreeMap<&'static str, &'a Metrics>,
}

impl ExperimentReport {
    pub fn write(&self, dir: &Path, config: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        write_metrics(&dir.join("metrics.json"), &self.evaluation, config)?;
        write_predictions(&dir.join("predictions.csv"), &self.evaluation, &self.data.dataset.test, config.n_classes())?;
        write_json(&dir.join("manifest.json"), &self.data.manifest(config))?;
        self.training.system.save(dir, config)?;
        for (file, history) in [
            ("history_rnn.csv", &self.training.rnn_history),
            ("history_mlp.csv", &self.training.mlp_history),
        ] {
            let path = dir.join(file);
            write_history_csv(history, create(path.clone())?).map_err(HarnessError::io(path))?;
        }
        Ok(())
    }
}

pub fn write_metrics(path: &Path, evaluation: &Evaluation, config: &ExperimentConfig) -> Result<()> {
    let file = MetricsFile {
        seed: config.seed,
        n_test: evaluation.truths.len(),
        average: config.metrics.average,
        methods: evaluation.metrics.iter().map(|(m, v)| (m.name(), v)).collect(),
    };
    write_json(path, &file)
}

/// One row per test beat: ids, truth, both view vectors, the DST vector and
/// the class chosen by each method.
pub fn write_predictions(path: &Path, evaluation: &Evaluation, test: &[Beat], m: usize) -> Result<()> {
    let mut w = create(path.to_path_buf())?;
    let letters: Vec<char> = (0..m)
        .map(|c| AamiClass::from_index(c).expect("class index").letter())
        .collect();
    let mut header = vec!["beat_id".to_string(), "record_id".into(), "r_peak".into(), "true_label".into()];
    for prefix in ["p1", "p2", "dst"] {
        header.extend(letters.iter().map(|l| format!("{prefix}_{l}")));
    }
    header.extend(Method::ALL.iter().map(|m| m.name().to_string()));

    let mut lines = vec![header.join(",")];
    for (i, ((out, truth), beat)) in evaluation.outputs.iter().zip(&evaluation.truths).zip(test).enumerate() {
        let mut cells = vec![i.to_string(), beat.record_id.clone(), beat.r_peak.to_string(), truth.to_string()];
        for v in [&out.p1, &out.p2, &out.dst.p] {
            cells.extend(v.iter().map(|x| x.to_string()));
        }
        cells.extend(Method::ALL.iter().map(|&m| out.chosen(m).to_string()));
        lines.push(cells.join(","));
    }
    let text = lines.join("\n") + "\n";
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(HarnessError::io(path))
}

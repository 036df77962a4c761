use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::Average;
use super::{HarnessError, Result};
use crate::beats::{BeatWindow, SplitMode};
use crate::fusion::FusionConfig;
use crate::gaf::GafRange;
use crate::models::TrainConfig;
use crate::noise::NoiseKind;
use crate::wfdb::ClassSet;

/// Top-level experiment configuration (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; split, SMOTE, model initialization, shuffling and noise
    /// all derive from it.
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub gaf: GafConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    /// A directory of WFDB records.
    #[default]
    Wfdb,
    /// A beat CSV file.
    Csv,
}

/// Lead by index into the header's signal list, or by its description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeadSelector {
    Index(usize),
    Name(String),
}

fn default_len() -> usize {
    187
}
fn default_pre_ms() -> f64 {
    250.0
}
fn default_post_ms() -> f64 {
    400.0
}
fn default_ratio() -> f64 {
    0.8
}
fn default_k() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_annotator() -> String {
    "atr".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: PathBuf,
    #[serde(default)]
    pub format: SourceFormat,
    /// Record names; empty means every `.hea` in `source`.
    #[serde(default)]
    pub records: Vec<String>,
    /// Defaults to the `MLII` or `II` signal.
    #[serde(default)]
    pub lead: Option<LeadSelector>,
    #[serde(rename = "L", default = "default_len")]
    pub beat_len: usize,
    #[serde(default)]
    pub split_mode: SplitMode,
    /// Record names to drop.
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub classes: ClassSet,
    #[serde(default = "default_annotator")]
    pub annotator: String,
    #[serde(default = "default_pre_ms")]
    pub pre_ms: f64,
    #[serde(default = "default_post_ms")]
    pub post_ms: f64,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    #[serde(default = "default_true")]
    pub smote: bool,
    #[serde(default = "default_k")]
    pub smote_k: usize,
}

impl DatasetConfig {
    pub fn window(&self) -> BeatWindow {
        BeatWindow {
            pre_ms: self.pre_ms,
            post_ms: self.post_ms,
            len: self.beat_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GafConfig {
    pub range: GafRange,
    /// Side of the pooled image fed to the MLP.
    pub res: usize,
}

impl Default for GafConfig {
    fn default() -> Self {
        Self {
            range: GafRange::Unit,
            res: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnConfig {
    pub stride: usize,
    pub hidden: usize,
    pub dense: Vec<usize>,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            hidden: 32,
            dense: vec![64, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub rnn: RnnConfig,
    pub mlp: MlpConfig,
    /// Shared by both views and the feature-fusion head. Its `seed` is
    /// replaced by values derived from the root seed.
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snrs: Vec<f64>,
    pub kinds: Vec<NoiseKind>,
    /// Directory holding NSTDB `bw`, `em`, `ma` records.
    pub noise_dir: Option<PathBuf>,
    /// Length of recorded-noise excerpts; defaults to the beat window.
    pub excerpt_ms: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snrs: vec![15.0, 10.0, 5.0, 0.0],
            kinds: NoiseKind::SYNTHETIC.to_vec(),
            noise_dir: None,
            excerpt_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub average: Average,
}

impl ExperimentConfig {
    /// Minimal config over a dataset location with every other key at its
    /// default.
    pub fn for_source(source: impl Into<PathBuf>, format: SourceFormat) -> Self {
        let json = serde_json::json!({ "dataset": { "source": source.into(), "format": format } });
        serde_json::from_value(json).expect("defaults deserialize")
    }

    /// Parses JSON text; errors name the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.source);
        if let Some(dir) = &mut self.sweep.noise_dir {
            fix(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let d = &self.dataset;
        if d.beat_len < 2 {
            return bad(format!("dataset.L: must be at least 2, got {}", d.beat_len));
        }
        if !(d.pre_ms > 0.0 && d.post_ms > 0.0) {
            return bad("dataset.pre_ms/post_ms: must be positive".into());
        }
        if !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            return bad(format!("dataset.train_ratio: must lie in (0, 1), got {}", d.train_ratio));
        }
        if d.smote_k == 0 {
            return bad("dataset.smote_k: must be at least 1".into());
        }
        if d.format == SourceFormat::Csv && d.split_mode == SplitMode::Record {
            return bad("dataset.split_mode: beat CSV carries no record ids; use \"stratified\"".into());
        }
        if self.gaf.res == 0 {
            return bad("gaf.res: must be at least 1".into());
        }
        let r = &self.models.rnn;
        if r.stride == 0 || r.hidden == 0 || r.dense.contains(&0) {
            return bad("models.rnn: stride, hidden and dense sizes must be positive".into());
        }
        if self.models.mlp.hidden.contains(&0) {
            return bad("models.mlp.hidden: sizes must be positive".into());
        }
        self.models
            .train
            .validate()
            .map_err(|e| HarnessError::Config(format!("models.train: {e}")))?;
        if let Some(s) = self.sweep.snrs.iter().find(|s| !s.is_finite()) {
            return bad(format!("sweep.snrs: {s} is not a finite SNR"));
        }
        if let Some(ms) = self.sweep.excerpt_ms {
            if !(ms > 0.0) {
                return bad("sweep.excerpt_ms: must be positive".into());
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.dataset.classes.n_classes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = ExperimentConfig::from_json(r#"{"dataset": {"source": "data"}}"#).unwrap();
        assert_eq!(c.dataset.beat_len, 187);
        assert_eq!(c.dataset.split_mode, SplitMode::Stratified);
        assert_eq!(c.gaf.res, 16);
        assert_eq!(c.models.rnn.dense, vec![64, 32]);
        assert_eq!(c.models.train.batch_size, 32);
        assert_eq!(c.sweep.snrs, vec![15.0, 10.0, 5.0, 0.0]);
        assert_eq!(c.sweep.kinds.len(), 4);
        assert!(!c.fusion.renormalize);
        assert_eq!(c, ExperimentConfig::for_source("data", SourceFormat::Wfdb));
    }

    #[test]
    fn full_config_parses() {
        let text = r#"{
            "seed": 7,
            "dataset": {"source": "beats.csv", "format": "csv", "L": 100, "split_mode": "stratified",
                        "lead": "MLII", "exclude": ["102"], "classes": "nsv3"},
            "gaf": {"range": "symmetric", "res": 8},
            "models": {"rnn": {"stride": 5, "hidden": 16, "dense": [32]},
                       "mlp": {"hidden": [64]},
                       "train": {"lr": 0.01, "max_epochs": 3, "patience": null}},
            "fusion": {"conflict_reduction": "max", "renormalize": true},
            "sweep": {"snrs": [6, 0], "kinds": ["awgn", "nstdb_ma"]},
            "metrics": {"average": "weighted"}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.dataset.lead, Some(LeadSelector::Name("MLII".into())));
        assert_eq!(c.gaf.range, GafRange::Symmetric);
        assert_eq!(c.models.train.patience, None);
        assert_eq!(c.sweep.kinds, vec![NoiseKind::Awgn, NoiseKind::NstdbMa]);
        assert_eq!(c.metrics.average, Average::Weighted);
    }

    #[test]
    fn errors_carry_key_path() {
        let e = ExperimentConfig::from_json(r#"{"dataset": {"source": "d", "L": "long"}}"#).unwrap_err();
        assert!(e.to_string().contains("dataset.L"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"dataset": {"source": "d"}, "gaf": {"resolution": 3}}"#).unwrap_err();
        assert!(e.to_string().contains("gaf"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"dataset": {"source": "d"}, "sweep": {"kinds": ["pink"]}}"#).unwrap_err();
        assert!(e.to_string().contains("sweep.kinds[0]"), "{e}");
        assert!(matches!(e, HarnessError::Config(_)));
    }

    #[test]
    fn semantic_checks() {
        for text in [
            r#"{"dataset": {"source": "d", "train_ratio": 1.0}}"#,
            r#"{"dataset": {"source": "d", "format": "csv", "split_mode": "record"}}"#,
            r#"{"dataset": {"source": "d"}, "gaf": {"res": 0}}"#,
            r#"{"dataset": {"source": "d"}, "models": {"train": {"lr": -1.0}}}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(HarnessError::Config(_))), "{text}");
        }
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"dataset": {"source": "recs"}}"#).unwrap();
        let c = ExperimentConfig::from_path(&path).unwrap();
        assert_eq!(c.dataset.source, dir.path().join("recs"));
    }
}

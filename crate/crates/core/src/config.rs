//! Declarative run file: data source, preprocessing, split, model and training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SyntheticSpec;
use crate::datasplit::{SplitMode, SplitRatios};
use crate::decoders::{LstmConfig, TransformerConfig};
use crate::encoder::{EncoderConfig, SignalNormalization};
use crate::error::{Error, Result};
use crate::model::DecoderConfig;
use crate::textprep::MAX_REPORT_LEN;
use crate::trainer::{PretrainConfig, TrainConfig};

/// Environment variable that replaces the configured output root.
pub const OUTPUT_ROOT_ENV: &str = "ECG_REPORT_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Short run name; artifacts go to `<output_root>/<name>`.
    pub name: String,
    #[serde(default = "default_output_root")]
    pub output_root: PathBuf,
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pretrain: Option<PretrainConfig>,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    /// Path of this file once loaded; relative data paths resolve against its directory.
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

fn default_output_root() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Manifest of an on-disk corpus. For synthetic runs, where `synth` writes it.
    pub manifest: PathBuf,
    /// Generator settings for `synth`; the bundled five-class spec when `"five_class"`.
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
    /// Pass reports through the translation hook before anything else.
    #[serde(default)]
    pub translate: bool,
    #[serde(default = "yes")]
    pub unify_abbreviations: bool,
    #[serde(default = "yes")]
    pub deduplicate: bool,
    #[serde(default = "default_min_frequency")]
    pub min_token_frequency: usize,
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
    #[serde(default = "default_max_len")]
    pub max_report_len: usize,
}

fn yes() -> bool {
    true
}
fn default_min_frequency() -> usize {
    1
}
fn default_max_vocab() -> usize {
    1024
}
fn default_max_len() -> usize {
    MAX_REPORT_LEN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SyntheticSource {
    Named(String),
    Inline(Box<SyntheticSpec>),
}

impl SyntheticSource {
    pub fn resolve(&self) -> Result<SyntheticSpec> {
        match self {
            SyntheticSource::Named(n) if n == "five_class" => Ok(SyntheticSpec::five_class()),
            SyntheticSource::Named(n) => Err(Error::config(format!("unknown synthetic spec {n:?}; use \"five_class\" or an inline table"))),
            SyntheticSource::Inline(s) => Ok((**s).clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    /// Defaults to 0.8/0.1/0.1 for grouped and 0.64/0.16/0.2 for random splits.
    #[serde(default)]
    pub ratios: Option<[f64; 3]>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { mode: SplitMode::Grouped, ratios: None }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        match (self.ratios, self.mode) {
            (Some(r), _) => SplitRatios(r),
            (None, SplitMode::Random) => SplitRatios::RANDOM_DEFAULT,
            (None, _) => SplitRatios::GROUPED_DEFAULT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    pub encoder: EncoderConfig,
    pub decoder: DecoderSettings,
    #[serde(default)]
    pub normalization: SignalNormalization,
}

/// Decoder hyperparameters; feature width and vocabulary size come from the
/// encoder and the prepared vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DecoderSettings {
    Lstm {
        #[serde(default = "d512")]
        embed_dim: usize,
        #[serde(default = "d512")]
        hidden_dim: usize,
        #[serde(default = "d512")]
        attention_dim: usize,
        #[serde(default = "default_dropout")]
        dropout: f64,
    },
    Transformer {
        #[serde(default = "d512")]
        model_dim: usize,
        #[serde(default = "default_layers")]
        layers: usize,
        #[serde(default = "default_heads")]
        heads: usize,
        #[serde(default = "default_ff")]
        ff_dim: usize,
        #[serde(default = "default_dropout")]
        dropout: f64,
    },
}

fn d512() -> usize {
    512
}
fn default_dropout() -> f64 {
    0.5
}
fn default_layers() -> usize {
    12
}
fn default_heads() -> usize {
    8
}
fn default_ff() -> usize {
    2048
}

impl DecoderSettings {
    pub fn family(&self) -> &'static str {
        match self {
            DecoderSettings::Lstm { .. } => "lstm",
            DecoderSettings::Transformer { .. } => "transformer",
        }
    }

    pub fn resolve(&self, encoder: &EncoderConfig, vocab_size: usize, max_report_len: usize) -> DecoderConfig {
        let feature_dim = encoder.output_channels();
        match *self {
            DecoderSettings::Lstm { embed_dim, hidden_dim, attention_dim, dropout } => {
                DecoderConfig::Lstm(LstmConfig { feature_dim, embed_dim, hidden_dim, attention_dim, vocab_size, dropout })
            }
            DecoderSettings::Transformer { model_dim, layers, heads, ff_dim, dropout } => DecoderConfig::Transformer(TransformerConfig {
                feature_dim,
                model_dim,
                layers,
                heads,
                ff_dim,
                vocab_size,
                feature_positions: encoder.output_positions,
                max_tokens: max_report_len,
                dropout,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    #[serde(default = "one")]
    pub top_k: usize,
    /// Enables METEOR's stem-matching stage.
    #[serde(default = "yes")]
    pub meteor_stem: bool,
    /// Episodes exported by `attn`, taken from the start of the test split.
    #[serde(default = "default_attention_episodes")]
    pub attention_episodes: usize,
    #[serde(default = "default_image_format")]
    pub image_format: String,
}

fn one() -> usize {
    1
}
fn default_attention_episodes() -> usize {
    4
}
fn default_image_format() -> String {
    "png".into()
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { top_k: 1, meteor_stem: true, attention_episodes: default_attention_episodes(), image_format: default_image_format() }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Reads and validates a run file.
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a run file and checks its settings; the data need not exist yet.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.source = Some(path.to_path_buf());
        cfg.validate_settings()?;
        Ok(cfg)
    }

    fn base_dir(&self) -> PathBuf {
        self.source.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.base_dir().join(&self.data.manifest)
    }

    /// `<root>/<name>` where the root is the environment override or `output_root`
    /// (relative roots resolve against the working directory).
    pub fn run_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| self.output_root.clone());
        root.join(&self.name)
    }

    /// Collects every problem; the manifest must exist unless `synth` will create it.
    pub fn validate(&self) -> Result<()> {
        let mut p = match self.validate_settings() {
            Err(Error::Config(p)) => p,
            Err(e) => return Err(e),
            Ok(()) => Vec::new(),
        };
        if self.data.synthetic.is_none() && !self.manifest_path().is_file() {
            p.push(format!("manifest {} does not exist", self.manifest_path().display()));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Every check except the manifest's existence.
    pub fn validate_settings(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            p.push("name must be a nonempty single path component".to_string());
        }
        if let Some(s) = &self.data.synthetic {
            match s.resolve().and_then(|spec| spec.validate().map(|_| spec)) {
                Ok(spec) => {
                    if spec.leads != self.model.encoder.input_leads {
                        p.push(format!("synthetic spec has {} leads, encoder expects {}", spec.leads, self.model.encoder.input_leads));
                    }
                }
                Err(e) => p.push(e.to_string()),
            }
        }
        if self.data.max_vocab == 0 {
            p.push("max_vocab must be at least 1".into());
        }
        if self.data.max_report_len < 3 {
            p.push("max_report_len must be at least 3".into());
        }
        if self.split.mode != SplitMode::Official {
            if let Err(e) = self.split.ratios().validate() {
                p.push(e.to_string());
            }
        }
        if let Err(Error::Config(e)) = self.model.encoder.validate() {
            p.extend(e);
        }
        // Vocabulary size is unknown here; validate the decoder with a placeholder.
        let decoder = self.model.decoder.resolve(&self.model.encoder, 5, self.data.max_report_len);
        let r = match &decoder {
            DecoderConfig::Lstm(c) => c.validate(),
            DecoderConfig::Transformer(c) => c.validate(),
        };
        if let Err(Error::Config(e)) = r {
            p.extend(e);
        }
        if let Err(Error::Config(e)) = self.train.validate() {
            p.extend(e);
        }
        if let Some(pre) = &self.pretrain {
            if self.model.encoder.pretrain_classes.is_none() {
                p.push("pretrain needs model.encoder.pretrain_classes".into());
            }
            if pre.epochs == 0 || pre.batch_size == 0 || !(pre.lr > 0.0) {
                p.push("pretrain epochs, batch_size and lr must be positive".into());
            }
        }
        if self.evaluate.top_k == 0 {
            p.push("evaluate.top_k must be at least 1".into());
        }
        if !matches!(self.evaluate.image_format.as_str(), "png" | "bmp") {
            p.push(format!("image_format {:?} is not png or bmp", self.evaluate.image_format));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

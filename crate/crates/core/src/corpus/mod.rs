//! Episode/report data model, manifest I/O, corpus statistics and synthetic corpora.

mod manifest;
mod stats;
mod synthetic;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use manifest::{load_manifest, write_corpus, write_manifest, MANIFEST_FILE};
pub use stats::{corpus_stats, normalize_report, CorpusStats};
pub use synthetic::{generate_synthetic, ClassTemplate, SyntheticSpec};

/// Partition label, also accepted as a manifest column for externally fixed splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "validation" | "val" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Raw multi-lead waveform, lead-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalTensor {
    leads: usize,
    samples: usize,
    data: Vec<f32>,
}

impl SignalTensor {
    pub fn new(leads: usize, samples: usize, data: Vec<f32>) -> Result<Self> {
        if leads == 0 || samples == 0 {
            return Err(Error::Shape(format!("signal must be non-empty, got {leads}x{samples}")));
        }
        if data.len() != leads * samples {
            return Err(Error::Shape(format!("{} values do not fill {leads}x{samples}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("signal value {i}")));
        }
        Ok(Self { leads, samples, data })
    }

    /// All-ones tensor of the given shape.
    pub fn ones(leads: usize, samples: usize) -> Self {
        Self { leads, samples, data: vec![1.0; leads * samples] }
    }

    pub fn leads(&self) -> usize {
        self.leads
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.leads, self.samples)
    }

    pub fn lead(&self, i: usize) -> &[f32] {
        &self.data[i * self.samples..(i + 1) * self.samples]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.leads, self.samples, self.data.iter().map(|&v| v as f64).collect())
    }
}

/// Where an episode's waveform lives.
#[derive(Clone, Debug, PartialEq)]
pub enum SignalRef {
    File(PathBuf),
    Memory(Arc<SignalTensor>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EcgEpisode {
    pub episode_id: String,
    /// Patient id (PTB-XL style) or device id (implant style).
    pub group_id: String,
    pub sampling_rate_hz: u32,
    pub leads: usize,
    pub samples: usize,
    pub signal: SignalRef,
    pub rhythm_class: Option<String>,
    pub recorded_at: Option<NaiveDate>,
    pub report: String,
    /// Externally fixed partition, when the manifest carries one.
    pub split: Option<Split>,
}

impl EcgEpisode {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.episode_id.is_empty() {
            return Err("empty episode_id".into());
        }
        if self.leads == 0 {
            return Err("leads must be at least 1".into());
        }
        if self.samples == 0 {
            return Err("samples must be at least 1".into());
        }
        if self.sampling_rate_hz == 0 {
            return Err("sampling_rate_hz must be positive".into());
        }
        if let SignalRef::Memory(s) = &self.signal {
            if s.shape() != (self.leads, self.samples) {
                return Err(format!("in-memory signal is {:?}, metadata says {}x{}", s.shape(), self.leads, self.samples));
            }
        }
        Ok(())
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples as f64 / self.sampling_rate_hz as f64
    }
}

/// Reads an episode's waveform, validating payload size and finiteness.
pub fn read_signal(episode: &EcgEpisode) -> Result<SignalTensor> {
    match &episode.signal {
        SignalRef::Memory(s) => Ok(s.as_ref().clone()),
        SignalRef::File(path) => {
            let bytes = std::fs::read(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingSignal { episode: episode.episode_id.clone(), path: path.clone() },
                _ => Error::Io(e),
            })?;
            let expected = episode.leads * episode.samples * 4;
            if bytes.len() != expected {
                return Err(Error::Signal {
                    episode: episode.episode_id.clone(),
                    message: format!("payload has {} bytes, expected {expected} ({} leads x {} samples x 4)", bytes.len(), episode.leads, episode.samples),
                });
            }
            let data: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::Signal { episode: episode.episode_id.clone(), message: format!("non-finite value at index {i}") });
            }
            SignalTensor::new(episode.leads, episode.samples, data)
        }
    }
}

/// Ordered, immutable collection of episodes with unique ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    episodes: Vec<EcgEpisode>,
}

impl Corpus {
    pub fn new(episodes: Vec<EcgEpisode>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(episodes.len());
        for e in &episodes {
            e.validate().map_err(|m| Error::Signal { episode: e.episode_id.clone(), message: m })?;
            if !seen.insert(e.episode_id.as_str()) {
                return Err(Error::DuplicateEpisode(e.episode_id.clone()));
            }
        }
        Ok(Self { episodes })
    }

    pub fn episodes(&self) -> &[EcgEpisode] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EcgEpisode> {
        self.episodes.iter()
    }

    pub fn get(&self, episode_id: &str) -> Option<&EcgEpisode> {
        self.episodes.iter().find(|e| e.episode_id == episode_id)
    }

    /// Sub-corpus of the episodes accepted by `keep`, order preserved.
    pub fn filtered(&self, keep: impl Fn(&EcgEpisode) -> bool) -> Corpus {
        Corpus { episodes: self.episodes.iter().filter(|e| keep(e)).cloned().collect() }
    }

    pub fn into_episodes(self) -> Vec<EcgEpisode> {
        self.episodes
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a EcgEpisode;
    type IntoIter = std::slice::Iter<'a, EcgEpisode>;

    fn into_iter(self) -> Self::IntoIter {
        self.episodes.iter()
    }
}

#[cfg(test)]
pub(crate) fn test_episode(id: &str, group: &str, report: &str) -> EcgEpisode {
    EcgEpisode {
        episode_id: id.into(),
        group_id: group.into(),
        sampling_rate_hz: 100,
        leads: 1,
        samples: 4,
        signal: SignalRef::Memory(Arc::new(SignalTensor::new(1, 4, vec![0.0, 1.0, 0.0, -1.0]).unwrap())),
        rhythm_class: Some("SR".into()),
        recorded_at: None,
        report: report.into(),
        split: None,
    }
}

//! Deduplication and train/validation/test partitioning.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_report, Corpus, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Grouped,
    Random,
    Official,
}

impl SplitMode {
    fn as_str(self) -> &'static str {
        match self {
            SplitMode::Grouped => "grouped",
            SplitMode::Random => "random",
            SplitMode::Official => "official",
        }
    }
}

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl SplitRatios {
    pub const GROUPED_DEFAULT: SplitRatios = SplitRatios([0.80, 0.10, 0.10]);
    pub const RANDOM_DEFAULT: SplitRatios = SplitRatios([0.64, 0.16, 0.20]);

    /// Every ratio strictly positive and finite; the sum is one.
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::InvalidRatios(format!("{:?}: every ratio must be positive", self.0)));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidRatios(format!("{:?} sums to {sum}, not 1", self.0)));
        }
        Ok(())
    }
}

/// Episode → split map in corpus order.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitAssignment {
    pub assignments: Vec<(String, Split)>,
    pub ratios: SplitRatios,
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn split_of(&self, episode_id: &str) -> Option<Split> {
        self.assignments.iter().find(|(id, _)| id == episode_id).map(|(_, s)| *s)
    }

    pub fn lookup(&self) -> HashMap<&str, Split> {
        self.assignments.iter().map(|(id, s)| (id.as_str(), *s)).collect()
    }

    /// Episode counts per split, indexed by [`Split::index`].
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for (_, s) in &self.assignments {
            c[s.index()] += 1;
        }
        c
    }

    pub fn realized_fractions(&self) -> [f64; 3] {
        let n = self.assignments.len().max(1) as f64;
        self.counts().map(|c| c as f64 / n)
    }

    /// Sub-corpus of the episodes assigned to `split`, corpus order preserved.
    pub fn subset(&self, corpus: &Corpus, split: Split) -> Corpus {
        let map = self.lookup();
        corpus.filtered(|e| map.get(e.episode_id.as_str()) == Some(&split))
    }

    /// `episode_id<TAB>split` lines after one `#` header line carrying mode, seed and ratios.
    pub fn to_tsv(&self) -> String {
        let r = self.ratios.0;
        let mut out = format!("# mode={} seed={} ratios={},{},{}\n", self.mode.as_str(), self.seed, r[0], r[1], r[2]);
        for (id, s) in &self.assignments {
            out.push_str(&format!("{id}\t{}\n", s.as_str()));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut out = SplitAssignment { assignments: Vec::new(), ratios: SplitRatios([0.0; 3]), mode: SplitMode::Official, seed: 0 };
        for (i, line) in text.lines().enumerate() {
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    match field.split_once('=') {
                        Some(("mode", "grouped")) => out.mode = SplitMode::Grouped,
                        Some(("mode", "random")) => out.mode = SplitMode::Random,
                        Some(("seed", v)) => out.seed = v.parse().unwrap_or(0),
                        Some(("ratios", v)) => {
                            let parsed: Vec<f64> = v.split(',').filter_map(|x| x.parse().ok()).collect();
                            if let [a, b, c] = parsed[..] {
                                out.ratios = SplitRatios([a, b, c]);
                            }
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::config(format!("split file line {}: expected episode_id<TAB>split", i + 1));
            let (id, s) = line.split_once('\t').ok_or_else(bad)?;
            out.assignments.push((id.to_string(), Split::parse(s).ok_or_else(bad)?));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

type DedupKey = (String, String, Option<String>, Option<NaiveDate>);

/// Keeps one episode per (group, normalized report, rhythm class, date) key, chosen
/// uniformly under `seed`. Survivors keep their corpus order.
pub fn deduplicate(corpus: &Corpus, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<DedupKey, usize> = HashMap::new();
    for (i, e) in corpus.iter().enumerate() {
        let key = (e.group_id.clone(), normalize_report(&e.report), e.rhythm_class.clone(), e.recorded_at);
        let b = *index.entry(key).or_insert_with(|| {
            buckets.push(Vec::new());
            buckets.len() - 1
        });
        buckets[b].push(i);
    }
    let mut keep = vec![false; corpus.len()];
    for bucket in &buckets {
        let pick = if bucket.len() == 1 { 0 } else { rng.gen_range(0..bucket.len()) };
        keep[bucket[pick]] = true;
    }
    let kept = corpus.iter().zip(&keep).filter(|(_, k)| **k).map(|(e, _)| e.clone()).collect();
    Corpus::new(kept).expect("subset of a valid corpus")
}

/// Group-exclusive split. Groups are shuffled by `seed` and stably ordered largest
/// first; each then goes to the split whose episode count lags its target by the
/// largest fraction. Splits still empty take the final groups when only that many
/// remain.
pub fn split_grouped(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let mut order: Vec<&str> = Vec::new();
    let mut sizes: HashMap<&str, usize> = HashMap::new();
    for e in corpus {
        let n = sizes.entry(e.group_id.as_str()).or_insert_with(|| {
            order.push(e.group_id.as_str());
            0
        });
        *n += 1;
    }
    if order.len() < 3 {
        return Err(Error::TooFewForSplit { available: order.len(), unit: "groups", splits: 3 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order.sort_by_key(|g| std::cmp::Reverse(sizes[g]));

    let total = corpus.len() as f64;
    let mut filled = [0usize; 3];
    let mut group_split: HashMap<&str, Split> = HashMap::new();
    for (k, g) in order.iter().enumerate() {
        let remaining = order.len() - k;
        let empty: Vec<usize> = (0..3).filter(|&s| filled[s] == 0).collect();
        let target = if remaining <= empty.len() {
            empty[0]
        } else {
            let deficit = |s: usize| 1.0 - filled[s] as f64 / (ratios.0[s] * total);
            (0..3).fold(0, |best, s| if deficit(s) > deficit(best) { s } else { best })
        };
        filled[target] += sizes[g];
        group_split.insert(g, Split::ALL[target]);
    }
    Ok(SplitAssignment {
        assignments: corpus.iter().map(|e| (e.episode_id.clone(), group_split[e.group_id.as_str()])).collect(),
        ratios,
        mode: SplitMode::Grouped,
        seed,
    })
}

/// Episode-level shuffle cut at `round(r1 n)` and `round((r1 + r2) n)`, with each
/// split holding at least one episode.
pub fn split_random(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    let n = corpus.len();
    if n < 3 {
        return Err(Error::TooFewForSplit { available: n, unit: "episodes", splits: 3 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let b1 = ((ratios.0[0] * n as f64).round() as usize).clamp(1, n - 2);
    let b2 = (((ratios.0[0] + ratios.0[1]) * n as f64).round() as usize).clamp(b1 + 1, n - 1);
    let mut split = vec![Split::Train; n];
    for (pos, &i) in order.iter().enumerate() {
        split[i] = if pos < b1 {
            Split::Train
        } else if pos < b2 {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(SplitAssignment {
        assignments: corpus.iter().zip(split).map(|(e, s)| (e.episode_id.clone(), s)).collect(),
        ratios,
        mode: SplitMode::Random,
        seed,
    })
}

/// Assignment taken from the manifest's `split` column.
pub fn split_official(corpus: &Corpus) -> Result<SplitAssignment> {
    let mut assignments = Vec::with_capacity(corpus.len());
    for e in corpus {
        let s = e.split.ok_or_else(|| Error::config(format!("episode {:?} has no split in the manifest", e.episode_id)))?;
        assignments.push((e.episode_id.clone(), s));
    }
    let mut out = SplitAssignment { assignments, ratios: SplitRatios([0.0; 3]), mode: SplitMode::Official, seed: 0 };
    out.ratios = SplitRatios(out.realized_fractions());
    Ok(out)
}

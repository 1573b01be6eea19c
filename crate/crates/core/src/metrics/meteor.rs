//! Unigram METEOR with exact and optional stem matching stages.
//!
//! Each stage aligns still-unmatched tokens that agree under the stage's key.
//! Within a stage every key contributes `min(count_cand, count_ref)` pairs, so the
//! match count is fixed; among the ways to choose which occurrences pair up
//! (paired in order), the alignment with the fewest crossings against all pairs
//! so far wins, then the fewest chunks.

use std::collections::BTreeMap;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeteorConfig {
    /// Enables the second, stem-matching stage.
    pub stem: bool,
    /// Upper bound on enumerated occurrence choices per stage before a greedy
    /// search takes over.
    pub search_limit: usize,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        Self { stem: true, search_limit: 20_000 }
    }
}

impl MeteorConfig {
    pub const EXACT_ONLY: MeteorConfig = MeteorConfig { stem: false, search_limit: 20_000 };
}

/// Aligned `(candidate index, reference index)` pairs.
pub type Alignment = Vec<(usize, usize)>;

pub fn crossings(pairs: &[(usize, usize)]) -> usize {
    let mut n = 0;
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for &(k, l) in &pairs[a + 1..] {
            if (i < k) != (j < l) {
                n += 1;
            }
        }
    }
    n
}

/// Maximal runs of pairs adjacent in both candidate and reference.
pub fn chunks(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
}

/// Occurrence lists per key for one stage.
struct Group {
    cand: Vec<usize>,
    reference: Vec<usize>,
}

impl Group {
    fn matches(&self) -> usize {
        self.cand.len().min(self.reference.len())
    }

    fn choices(&self) -> usize {
        let (n, k) = (self.cand.len().max(self.reference.len()), self.matches());
        binomial(n, k)
    }

    /// Pairs for the `index`-th `k`-subset of the longer side, paired in order.
    fn pairs(&self, subset: &[usize]) -> Vec<(usize, usize)> {
        if self.cand.len() >= self.reference.len() {
            subset.iter().zip(&self.reference).map(|(&s, &r)| (self.cand[s], r)).collect()
        } else {
            self.cand.iter().zip(subset).map(|(&c, &s)| (c, self.reference[s])).collect()
        }
    }

    fn longer(&self) -> usize {
        self.cand.len().max(self.reference.len())
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

fn next_subset(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    for i in (0..k).rev() {
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Crossings, then chunks, then the sorted pair list, so exact ties resolve the
/// same way whatever order the search visits them in.
fn cost(pairs: &[(usize, usize)]) -> (usize, usize, Vec<(usize, usize)>) {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    (crossings(pairs), chunks(pairs), sorted)
}

/// Extends `fixed` with one stage over `groups`.
fn align_stage(fixed: &[(usize, usize)], groups: &[Group], limit: usize) -> Alignment {
    let groups: Vec<&Group> = groups.iter().filter(|g| g.matches() > 0).collect();
    let total = groups.iter().try_fold(1usize, |acc, g| acc.checked_mul(g.choices()));
    let mut subsets: Vec<Vec<usize>> = groups.iter().map(|g| (0..g.matches()).collect()).collect();
    let assemble = |subsets: &[Vec<usize>]| {
        let mut pairs = fixed.to_vec();
        for (g, s) in groups.iter().zip(subsets) {
            pairs.extend(g.pairs(s));
        }
        pairs
    };
    let mut best = assemble(&subsets);
    let mut best_cost = cost(&best);
    if total.is_some_and(|t| t <= limit) {
        // Odometer over the Cartesian product of per-group subsets.
        loop {
            let mut i = 0;
            while i < groups.len() && !next_subset(&mut subsets[i], groups[i].longer()) {
                subsets[i] = (0..groups[i].matches()).collect();
                i += 1;
            }
            if i == groups.len() {
                break;
            }
            let pairs = assemble(&subsets);
            let c = cost(&pairs);
            if c < best_cost {
                best_cost = c;
                best = pairs;
            }
        }
        return best;
    }
    // Coordinate descent: re-optimize one group at a time until no improvement.
    let mut improved = true;
    while improved {
        improved = false;
        for gi in 0..groups.len() {
            if groups[gi].choices() > limit {
                continue;
            }
            let mut s: Vec<usize> = (0..groups[gi].matches()).collect();
            loop {
                let mut trial = subsets.clone();
                trial[gi] = s.clone();
                let pairs = assemble(&trial);
                let c = cost(&pairs);
                if c < best_cost {
                    best_cost = c;
                    best = pairs;
                    subsets = trial;
                    improved = true;
                }
                if !next_subset(&mut s, groups[gi].longer()) {
                    break;
                }
            }
        }
    }
    best
}

fn stage_groups(cand_keys: &[String], ref_keys: &[String], used_c: &[bool], used_r: &[bool]) -> Vec<Group> {
    let mut map: BTreeMap<&str, Group> = BTreeMap::new();
    for (i, k) in cand_keys.iter().enumerate().filter(|(i, _)| !used_c[*i]) {
        map.entry(k).or_insert_with(|| Group { cand: vec![], reference: vec![] }).cand.push(i);
    }
    for (j, k) in ref_keys.iter().enumerate().filter(|(j, _)| !used_r[*j]) {
        if let Some(g) = map.get_mut(k.as_str()) {
            g.reference.push(j);
        }
    }
    map.into_values().collect()
}

/// Staged alignment between `candidate` and `reference`.
pub fn align<S: AsRef<str>>(candidate: &[S], reference: &[S], config: &MeteorConfig) -> Alignment {
    let lower = |xs: &[S]| xs.iter().map(|s| s.as_ref().to_lowercase()).collect::<Vec<_>>();
    let (c, r) = (lower(candidate), lower(reference));
    let mut pairs = align_stage(&[], &stage_groups(&c, &r, &vec![false; c.len()], &vec![false; r.len()]), config.search_limit);
    if config.stem {
        let stemmer = Stemmer::create(Algorithm::English);
        let stem = |xs: &[String]| xs.iter().map(|s| stemmer.stem(s).into_owned()).collect::<Vec<_>>();
        let mut used_c = vec![false; c.len()];
        let mut used_r = vec![false; r.len()];
        for &(i, j) in &pairs {
            used_c[i] = true;
            used_r[j] = true;
        }
        pairs = align_stage(&pairs, &stage_groups(&stem(&c), &stem(&r), &used_c, &used_r), config.search_limit);
    }
    pairs
}

/// Sentence METEOR: `Fmean · (1 − 0.5 · (chunks/m)³)` with `Fmean = 10PR / (R + 9P)`.
pub fn meteor<S: AsRef<str>>(candidate: &[S], reference: &[S], config: &MeteorConfig) -> f64 {
    let pairs = align(candidate, reference, config);
    score_alignment(&pairs, candidate.len(), reference.len())
}

pub fn score_alignment(pairs: &[(usize, usize)], cand_len: usize, ref_len: usize) -> f64 {
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand_len as f64;
    let r = m as f64 / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks(pairs) as f64 / m as f64;
    fmean * (1.0 - 0.5 * frag.powi(3))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn hand_computed_scores() {
        let s = t("atrial fibrillation detected");
        assert!((meteor(&s, &s, &MeteorConfig::default()) - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
        assert_eq!(meteor(&t("x"), &t("x"), &MeteorConfig::default()), 0.5);
        assert_eq!(meteor(&t("a b"), &t("c d"), &MeteorConfig::default()), 0.0);
        assert_eq!(meteor::<&str>(&[], &[], &MeteorConfig::default()), 0.0);
    }

    #[test]
    fn case_is_ignored() {
        assert_eq!(meteor(&t("Sinus"), &t("sinus"), &MeteorConfig::EXACT_ONLY), 0.5);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let c = t("premature contractions");
        let r = t("premature contraction");
        assert_eq!(align(&c, &r, &MeteorConfig::EXACT_ONLY).len(), 1);
        assert_eq!(align(&c, &r, &MeteorConfig::default()).len(), 2);
    }

    #[test]
    fn repeated_tokens_pick_the_uncrossed_occurrence() {
        // The second "a" in the candidate continues the chunk "a b".
        let c = t("a x a b");
        let r = t("a b");
        let pairs = align(&c, &r, &MeteorConfig::EXACT_ONLY);
        assert_eq!(crossings(&pairs), 0);
        assert_eq!(chunks(&pairs), 1);
        assert!(pairs.contains(&(2, 0)));
    }

    #[test]
    fn chunk_and_crossing_counts() {
        assert_eq!(chunks(&[(0, 0), (1, 1), (3, 2)]), 2);
        assert_eq!(chunks(&[(0, 1), (1, 0)]), 2);
        assert_eq!(crossings(&[(0, 1), (1, 0), (2, 2)]), 1);
    }

    #[test]
    fn greedy_fallback_still_aligns_everything() {
        let c: Vec<String> = (0..40).map(|i| if i % 2 == 0 { "a".into() } else { format!("w{i}") }).collect();
        let r: Vec<String> = (0..30).map(|i| if i % 3 == 0 { "a".into() } else { format!("v{i}") }).collect();
        let cfg = MeteorConfig { stem: false, search_limit: 10 };
        assert_eq!(align(&c, &r, &cfg).len(), 10);
    }
}

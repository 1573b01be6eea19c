//! Brute-force metric definitions used as test oracles. Nothing here calls into the
//! library's metric code; the only shared dependency is the English stemmer.

use rust_stemmers::{Algorithm, Stemmer};

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return vec![];
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn occurrences<T: PartialEq>(items: &[T], x: &T) -> usize {
    items.iter().filter(|y| *y == x).count()
}

/// Corpus BLEU by direct enumeration of every candidate n-gram.
pub fn bleu(cands: &[Vec<String>], refs: &[Vec<String>], max_n: usize) -> f64 {
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    if c == 0 {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (cand, reference) in cands.iter().zip(refs) {
            let cg = ngrams(cand, n);
            let rg = ngrams(reference, n);
            total += cg.len();
            let mut seen: Vec<Vec<String>> = vec![];
            for g in &cg {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                matched += occurrences(&cg, g).min(occurrences(&rg, g));
            }
        }
        if matched == 0 {
            return 0.0;
        }
        log_p += (matched as f64 / total as f64).ln();
    }
    let bp = (1.0 - r as f64 / c as f64).exp().min(1.0);
    bp * (log_p / max_n as f64).exp()
}

/// `(precision, recall, f1)` from unigram overlap.
pub fn rouge1(cand: &[String], reference: &[String]) -> (f64, f64, f64) {
    let mut seen: Vec<&String> = vec![];
    let mut overlap = 0usize;
    for t in cand {
        if seen.contains(&t) {
            continue;
        }
        seen.push(t);
        overlap += occurrences(cand, t).min(occurrences(reference, t));
    }
    let p = if cand.is_empty() { 0.0 } else { overlap as f64 / cand.len() as f64 };
    let r = if reference.is_empty() { 0.0 } else { overlap as f64 / reference.len() as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn crossing_count(pairs: &[(usize, usize)]) -> usize {
    let mut n = 0;
    for a in pairs {
        for b in pairs {
            if a.0 < b.0 && a.1 > b.1 {
                n += 1;
            }
        }
    }
    n
}

fn chunk_count(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort();
    let mut chunks = 0;
    for (i, p) in sorted.iter().enumerate() {
        let continues = i > 0 && sorted[i - 1].0 + 1 == p.0 && sorted[i - 1].1 + 1 == p.1;
        if !continues {
            chunks += 1;
        }
    }
    chunks
}

/// Every matching over the allowed edges, by recursion over candidate positions.
fn all_matchings(allowed: &dyn Fn(usize, usize) -> bool, n_c: usize, n_r: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        i: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
        allowed: &dyn Fn(usize, usize) -> bool,
        n_c: usize,
    ) {
        if i == n_c {
            out.push(cur.clone());
            return;
        }
        rec(i + 1, used, cur, out, allowed, n_c);
        for j in 0..used.len() {
            if !used[j] && allowed(i, j) {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, used, cur, out, allowed, n_c);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = vec![];
    rec(0, &mut vec![false; n_r], &mut vec![], &mut out, allowed, n_c);
    out
}

/// Largest matching among `allowed` edges, ties broken by fewest crossings, then
/// fewest chunks (both counted together with `fixed`), then the smallest sorted pair list.
fn best_stage(fixed: &[(usize, usize)], allowed: &dyn Fn(usize, usize) -> bool, n_c: usize, n_r: usize) -> Vec<(usize, usize)> {
    let mut best: Option<(usize, usize, usize, Vec<(usize, usize)>)> = None;
    for m in all_matchings(allowed, n_c, n_r) {
        let mut all = fixed.to_vec();
        all.extend(&m);
        all.sort();
        let key = (usize::MAX - m.len(), crossing_count(&all), chunk_count(&all), all);
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    best.map(|b| b.3).unwrap_or_default()
}

/// METEOR with an exact stage and an optional stem stage.
pub fn meteor(cand: &[String], reference: &[String], stem: bool) -> f64 {
    let lc: Vec<String> = cand.iter().map(|s| s.to_lowercase()).collect();
    let lr: Vec<String> = reference.iter().map(|s| s.to_lowercase()).collect();
    let (n_c, n_r) = (lc.len(), lr.len());
    let mut pairs = best_stage(&[], &|i, j| lc[i] == lr[j], n_c, n_r);
    if stem {
        let stemmer = Stemmer::create(Algorithm::English);
        let sc: Vec<String> = lc.iter().map(|s| stemmer.stem(s).to_string()).collect();
        let sr: Vec<String> = lr.iter().map(|s| stemmer.stem(s).to_string()).collect();
        let fixed = pairs.clone();
        let free = |i: usize, j: usize| !fixed.iter().any(|p| p.0 == i || p.1 == j);
        pairs = best_stage(&fixed, &|i, j| free(i, j) && sc[i] == sr[j], n_c, n_r);
    }
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / n_c as f64;
    let r = m as f64 / n_r as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunk_count(&pairs) as f64 / m as f64;
    fmean * (1.0 - 0.5 * frag * frag * frag)
}

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Smoothing constant substituted for zero n-gram matches.
pub const BLEU_EPSILON: f64 = 1e-9;
pub const BLEU_MAX_N: usize = 4;

/// Lowercases and splits on runs of non-alphanumeric characters. Digits are
/// kept as tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn non_empty(a: &[String], b: &[String]) -> Result<(), MetricError> {
    if a.is_empty() || b.is_empty() {
        Err(MetricError::EmptyText)
    } else {
        Ok(())
    }
}

/// Modified n-gram precision as (clipped matches, candidate n-gram total).
pub fn modified_precision(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let total = candidate.len().saturating_sub(n - 1);
    let clipped = cand
        .iter()
        .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    (clipped, total)
}

/// Sentence BLEU-4 with uniform weights.
///
/// A precision with zero matches becomes `BLEU_EPSILON / max(1, total)`.
/// Brevity penalty is `exp(min(0, 1 - |ref|/|cand|))`.
pub fn bleu(candidate: &[String], reference: &[String]) -> Result<f64, MetricError> {
    non_empty(candidate, reference)?;
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_N {
        let (clipped, total) = modified_precision(candidate, reference, n);
        let p = if clipped == 0 {
            BLEU_EPSILON / total.max(1) as f64
        } else {
            clipped as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = (1.0 - reference.len() as f64 / candidate.len() as f64)
        .min(0.0)
        .exp();
    Ok((bp * (log_sum / BLEU_MAX_N as f64).exp()).clamp(0.0, 1.0))
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64, MetricError> {
    non_empty(candidate, reference)?;
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Document frequencies over a corpus, for TF-IDF weighting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub df: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn build<S: AsRef<[String]>>(docs: &[S]) -> Self {
        let mut df = BTreeMap::new();
        for doc in docs {
            let unique: HashSet<&String> = doc.as_ref().iter().collect();
            for term in unique {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        Self {
            n_docs: docs.len(),
            df,
        }
    }

    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    fn vector(&self, tokens: &[String]) -> HashMap<String, f64> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in tokens {
            *tf.entry(t.clone()).or_insert(0.0) += 1.0;
        }
        for (term, w) in tf.iter_mut() {
            *w *= self.idf(term);
        }
        tf
    }
}

/// Cosine of the TF-IDF vectors (raw term counts times smoothed idf).
pub fn cosine_sim(a: &[String], b: &[String], stats: &CorpusStats) -> Result<f64, MetricError> {
    non_empty(a, b)?;
    let va = stats.vector(a);
    let vb = stats.vector(b);
    let dot: f64 = va
        .iter()
        .filter_map(|(t, w)| vb.get(t).map(|x| w * x))
        .sum();
    let na = va.values().map(|w| w * w).sum::<f64>().sqrt();
    let nb = vb.values().map(|w| w * w).sum::<f64>().sqrt();
    if dot == 0.0 || na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

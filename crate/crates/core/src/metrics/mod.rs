//! Diversity metrics over record text and model-judged accuracy and
//! dialogue quality.

mod judged;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::judge::JudgeError;

pub use judged::{
    judge_dialogue, judge_record_accuracy, semantic_similarity, AccuracySummary, AccuracyVerdict,
    DialogueScores, FallbackPolicy, RUBRIC_MAX, RUBRIC_MIN, VERDICT_RETRIES,
};
pub use text::{
    bleu, cosine_sim, lcs_len, modified_precision, rouge_l, tokenize, CorpusStats, BLEU_EPSILON,
    BLEU_MAX_N,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("text is empty after tokenization")]
    EmptyText,
    #[error("need at least 2 records, got {0}")]
    InsufficientRecords(usize),
    #[error("malformed verdict after {attempts} attempts: {last_error}")]
    MalformedVerdict { attempts: u32, last_error: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("transcript has no patient turns")]
    NoPatientTurns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub a: usize,
    pub b: usize,
    /// Mean of bleu(a, b) and bleu(b, a).
    pub bleu: f64,
    pub rouge_l: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub n_records: usize,
    pub mean_pairwise_bleu: f64,
    pub mean_pairwise_rouge_l: f64,
    pub mean_pairwise_cosine: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_pair_detail: Option<Vec<PairScores>>,
}

/// Means of each metric over all n(n-1)/2 unordered pairs. Lower means
/// more diverse. IDF statistics come from the evaluated texts themselves.
pub fn corpus_diversity(
    texts: &[String],
    keep_detail: bool,
) -> Result<DiversityReport, MetricError> {
    if texts.len() < 2 {
        return Err(MetricError::InsufficientRecords(texts.len()));
    }
    let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let stats = CorpusStats::build(&docs);
    let mut pairs = Vec::new();
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            let (a, b) = (&docs[i], &docs[j]);
            pairs.push(PairScores {
                a: i,
                b: j,
                bleu: (bleu(a, b)? + bleu(b, a)?) / 2.0,
                rouge_l: rouge_l(a, b)?,
                cosine: cosine_sim(a, b, &stats)?,
            });
        }
    }
    let n = pairs.len() as f64;
    let mean = |f: fn(&PairScores) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(DiversityReport {
        n_records: texts.len(),
        mean_pairwise_bleu: mean(|p| p.bleu),
        mean_pairwise_rouge_l: mean(|p| p.rouge_l),
        mean_pairwise_cosine: mean(|p| p.cosine),
        per_pair_detail: keep_detail.then_some(pairs),
    })
}

/// Two decimals and a percent sign: `0.97 -> "97.00%"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

/// One row of a results table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub accuracy: Option<f64>,
    pub bleu: Option<f64>,
    pub rouge_l: Option<f64>,
    pub cosine: Option<f64>,
}

/// Aligned plain-text table with columns Acc, BLEU, R-L, COS. Missing
/// values print as `-`.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut cells: Vec<[String; 5]> = vec![[
        "".into(),
        "Acc".into(),
        "BLEU".into(),
        "R-L".into(),
        "COS".into(),
    ]];
    let num = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    for r in rows {
        cells.push([
            r.label.clone(),
            r.accuracy.map_or("-".to_string(), format_percent),
            num(r.bleu),
            num(r.rouge_l),
            num(r.cosine),
        ]);
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| {
            cells
                .iter()
                .map(|row| row[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    cells
        .iter()
        .map(|row| {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for c in 1..5 {
                line.push_str(&format!("  {:>w$}", row[c], w = widths[c]));
            }
            line.trim_end().to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_records_score_one() {
        let text = "Patient is a 47 year old woman with severe acute abdominal pain".to_string();
        let r = corpus_diversity(&[text.clone(), text], false).unwrap();
        assert!((r.mean_pairwise_bleu - 1.0).abs() < 1e-9);
        assert!((r.mean_pairwise_rouge_l - 1.0).abs() < 1e-9);
        assert!((r.mean_pairwise_cosine - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_record_is_insufficient() {
        assert!(matches!(
            corpus_diversity(&["a b".into()], false),
            Err(MetricError::InsufficientRecords(1))
        ));
    }

    #[test]
    fn pair_count_and_order_invariance() {
        let texts: Vec<String> = ["a b c d e", "a b x y z", "q r c d s", "a r c y e"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let r = corpus_diversity(&texts, true).unwrap();
        assert_eq!(r.per_pair_detail.as_ref().unwrap().len(), 6);
        let mut rev = texts.clone();
        rev.reverse();
        let r2 = corpus_diversity(&rev, false).unwrap();
        assert!((r.mean_pairwise_bleu - r2.mean_pairwise_bleu).abs() < 1e-12);
        assert!((r.mean_pairwise_rouge_l - r2.mean_pairwise_rouge_l).abs() < 1e-12);
        assert!((r.mean_pairwise_cosine - r2.mean_pairwise_cosine).abs() < 1e-12);
    }

    #[test]
    fn percent_format() {
        assert_eq!(format_percent(0.97), "97.00%");
        assert_eq!(format_percent(59.0 / 60.0), "98.33%");
    }

    #[test]
    fn table_layout() {
        let table = format_table(&[TableRow {
            label: "gpt".into(),
            accuracy: Some(0.97),
            bleu: Some(0.06),
            rouge_l: Some(0.4019),
            cosine: None,
        }]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(
            lines[0].contains("Acc")
                && lines[0].contains("BLEU")
                && lines[0].contains("R-L")
                && lines[0].ends_with("COS")
        );
        assert!(
            lines[1].contains("97.00%") && lines[1].contains("0.0600") && lines[1].ends_with('-')
        );
    }
}

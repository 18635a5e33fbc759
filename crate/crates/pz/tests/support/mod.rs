//! Brute-force reference implementations of the text metrics, kept apart from
//! the library code they check. Quadratic or exponential on purpose.

pub const EPSILON: f64 = 1e-9;

fn occurrences(seq: &[String], gram: &[String]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len())
        .filter(|&i| &seq[i..i + gram.len()] == gram)
        .count()
}

/// Sentence BLEU-4, uniform weights. A zero-match order contributes
/// `EPSILON / max(1, candidate n-grams)`.
pub fn bleu(cand: &[String], reference: &[String]) -> f64 {
    let mut product = 1.0f64;
    for n in 1..=4usize {
        let total = if cand.len() >= n {
            cand.len() - n + 1
        } else {
            0
        };
        let mut seen: Vec<&[String]> = Vec::new();
        let mut clipped = 0usize;
        for i in 0..total {
            let gram = &cand[i..i + n];
            if seen.contains(&gram) {
                continue;
            }
            seen.push(gram);
            clipped += occurrences(cand, gram).min(occurrences(reference, gram));
        }
        let p = if clipped == 0 {
            EPSILON / total.max(1) as f64
        } else {
            clipped as f64 / total as f64
        };
        product *= p;
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * product.powf(0.25)).min(1.0)
}

fn is_subsequence(needle: &[&String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == *n))
}

/// Longest common subsequence by trying every subsequence of `a`.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16, "subset enumeration is for short sequences");
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<&String> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &a[i])
            .collect();
        if picked.len() > best && is_subsequence(&picked, b) {
            best = picked.len();
        }
    }
    best
}

pub fn rouge_l(cand: &[String], reference: &[String]) -> f64 {
    let l = lcs(cand, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / cand.len() as f64;
    let r = l / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// TF-IDF cosine over dense vectors, with the corpus being `docs`.
/// Weight is raw count times `ln((1 + N) / (1 + df)) + 1`.
pub fn cosine(a: &[String], b: &[String], docs: &[Vec<String>]) -> f64 {
    let mut vocab: Vec<&String> = docs.iter().flatten().chain(a).chain(b).collect();
    vocab.sort();
    vocab.dedup();
    let n = docs.len() as f64;
    let weights = |doc: &[String]| -> Vec<f64> {
        vocab
            .iter()
            .map(|t| {
                let tf = doc.iter().filter(|x| x == t).count() as f64;
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0)
            })
            .collect()
    };
    let (va, vb) = (weights(a), weights(b));
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    if dot == 0.0 {
        return 0.0;
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(&va) * norm(&vb))
}

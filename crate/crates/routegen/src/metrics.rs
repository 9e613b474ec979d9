//! BLEU scoring (up to 4-grams) for generated instructions, at sentence and
//! corpus level.

use std::collections::HashMap;

pub const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate totals for one order.
fn order_stats(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refr = ngram_counts(reference, n);
    let total: usize = cand.values().sum();
    let matched: usize = cand
        .iter()
        .map(|(g, c)| (*c).min(refr.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, total)
}

/// Combine per-order statistics into a score. Orders with no candidate
/// n-grams are skipped; a zero precision at order >= 2 is smoothed add-one;
/// zero unigram precision makes the whole score zero.
fn combine(stats: &[(usize, usize); MAX_ORDER], cand_len: usize, ref_len: usize) -> f64 {
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for (n, (matched, total)) in stats.iter().enumerate() {
        if *total == 0 {
            continue;
        }
        let p = if *matched == 0 {
            if n == 0 {
                return 0.0;
            }
            1.0 / (*total as f64 + 1.0)
        } else {
            *matched as f64 / *total as f64
        };
        log_sum += p.ln();
        used += 1;
    }
    if used == 0 {
        return 0.0;
    }
    let bp = brevity_penalty(cand_len, ref_len);
    bp * (log_sum / used as f64).exp()
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        return 0.0;
    }
    if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// BLEU for a single candidate-reference pair, in [0, 100].
pub fn bleu_sentence(candidate: &[String], reference: &[String]) -> f64 {
    let mut stats = [(0usize, 0usize); MAX_ORDER];
    for n in 1..=MAX_ORDER {
        stats[n - 1] = order_stats(candidate, reference, n);
    }
    100.0 * combine(&stats, candidate.len(), reference.len())
}

#[derive(Debug, Clone)]
pub struct BleuReport {
    /// Mean of per-pair sentence scores.
    pub sentence_mean: f64,
    /// Micro-averaged score over pooled n-gram statistics.
    pub corpus: f64,
    pub per_pair: Vec<f64>,
    /// Pooled precision per order (0.0 where no n-grams existed).
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
}

/// Corpus-level BLEU: n-gram statistics pooled over all pairs before
/// combining, alongside the per-pair sentence scores.
pub fn evaluate(pairs: &[(Vec<String>, Vec<String>)]) -> BleuReport {
    let mut pooled = [(0usize, 0usize); MAX_ORDER];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    let mut per_pair = Vec::with_capacity(pairs.len());
    for (cand, refr) in pairs {
        for n in 1..=MAX_ORDER {
            let (m, t) = order_stats(cand, refr, n);
            pooled[n - 1].0 += m;
            pooled[n - 1].1 += t;
        }
        cand_len += cand.len();
        ref_len += refr.len();
        per_pair.push(bleu_sentence(cand, refr));
    }
    let corpus = 100.0 * combine(&pooled, cand_len, ref_len);
    let sentence_mean = if per_pair.is_empty() {
        0.0
    } else {
        per_pair.iter().sum::<f64>() / per_pair.len() as f64
    };
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if pooled[n].1 > 0 {
            precisions[n] = pooled[n].0 as f64 / pooled[n].1 as f64;
        }
    }
    BleuReport {
        sentence_mean,
        corpus,
        per_pair,
        precisions,
        brevity_penalty: brevity_penalty(cand_len, ref_len),
    }
}

/// Corpus-level score alone, for callers that do not need the full report.
pub fn bleu_corpus(pairs: &[(Vec<String>, Vec<String>)]) -> f64 {
    evaluate(pairs).corpus
}

pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokens(s)
    }

    #[test]
    fn identical_sentences_score_100() {
        let s = t("walk to the blue chair then turn left");
        assert!((bleu_sentence(&s, &s) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_sentences_score_0() {
        assert_eq!(bleu_sentence(&t("alpha beta"), &t("gamma delta")), 0.0);
    }

    #[test]
    fn hand_computed_partial_match() {
        // cand: "a b c d", ref: "a b x d"
        // p1 = 3/4; p2: cand bigrams {ab, bc, cd}, ref {ab, bx, xd} -> 1/3
        // p3: 0/2 smoothed to 1/3; p4: 0/1 smoothed to 1/2; BP = 1
        let expected = 100.0 * ((3.0f64 / 4.0) * (1.0 / 3.0) * (1.0 / 3.0) * 0.5).powf(0.25);
        let got = bleu_sentence(&t("a b c d"), &t("a b x d"));
        assert!((got - expected).abs() < 1e-9, "got {got} expected {expected}");
    }

    #[test]
    fn brevity_penalty_applies() {
        // cand "a b" vs ref "a b c d": perfect precisions, BP = e^(1 - 4/2)
        let got = bleu_sentence(&t("a b"), &t("a b c d"));
        let p2 = 1.0f64; // 1 bigram, matched
        let expected = 100.0 * (1.0 - 2.0f64).exp() * (1.0 * p2).powf(0.5);
        assert!((got - expected).abs() < 1e-9, "got {got} expected {expected}");
    }

    #[test]
    fn short_sentences_skip_missing_orders() {
        // single-token pair: only unigrams exist
        assert!((bleu_sentence(&t("left"), &t("left")) - 100.0).abs() < 1e-12);
        assert_eq!(bleu_sentence(&t("left"), &t("right")), 0.0);
    }

    #[test]
    fn clipping_limits_repeats() {
        // cand repeats "the" 4 times, ref has it twice: p1 = 2/4
        let got = bleu_sentence(&t("the the the the"), &t("the cat the hat"));
        // p2 cand {the the x3}, ref has no "the the" -> 0/3 smoothed 1/4
        // p3 0/2 -> 1/3, p4 0/1 -> 1/2
        let expected = 100.0 * ((0.5f64) * (0.25) * (1.0 / 3.0) * 0.5).powf(0.25);
        assert!((got - expected).abs() < 1e-9, "got {got} expected {expected}");
    }

    #[test]
    fn corpus_report_consistency() {
        let pairs = vec![
            (t("a b c d"), t("a b c d")),
            (t("a b"), t("a x")),
        ];
        let report = evaluate(&pairs);
        assert_eq!(report.per_pair.len(), 2);
        assert!((report.per_pair[0] - 100.0).abs() < 1e-12);
        assert!((report.sentence_mean - (report.per_pair[0] + report.per_pair[1]) / 2.0).abs() < 1e-12);
        // pooled p1 = (4 + 1) / (4 + 2)
        assert!((report.precisions[0] - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(report.brevity_penalty, 1.0);
        assert!(report.corpus > 0.0 && report.corpus < 100.0);
    }

    #[test]
    fn scrambling_never_beats_identity() {
        let refr = t("go down the hall past the lamp then turn right at the sofa");
        let scrambled = t("sofa the at right turn then lamp the past hall the down go");
        assert!(bleu_sentence(&scrambled, &refr) < 100.0);
        assert!(bleu_sentence(&scrambled, &refr) <= bleu_sentence(&refr, &refr));
    }

    #[test]
    fn empty_inputs() {
        assert_eq!(bleu_sentence(&[], &t("a")), 0.0);
        assert_eq!(bleu_sentence(&t("a"), &[]), 0.0);
        let report = evaluate(&[]);
        assert_eq!(report.sentence_mean, 0.0);
        assert_eq!(report.corpus, 0.0);
    }
}

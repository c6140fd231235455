//! Answer scoring: normalized exact match, BLEU, ROUGE-L, binomial SD.

use std::collections::HashMap;

use crate::llm::tokenize_approx;
use crate::table::parse_number_tolerant;

pub const BLEU_VARIANT: &str = "BLEU-4, uniform weights, brevity penalty against the closest reference length, \
add-one smoothing of zero higher-order n-gram matches, lowercase whitespace/punctuation tokenization";

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
const SENTENCE_PUNCT: &[char] = &['.', '!', '?', ';', ',', ':'];

fn canonical_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn normalize_answer(s: &str) -> String {
    let mut t = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    loop {
        let before = t.len();
        t = t.trim_end_matches(SENTENCE_PUNCT).trim().to_string();
        if t.len() >= 2 && t.starts_with(QUOTES) && t.ends_with(QUOTES) {
            let first = t.chars().next().map_or(0, char::len_utf8);
            let last = t.chars().next_back().map_or(0, char::len_utf8);
            t = t[first..t.len() - last].trim().to_string();
        }
        if t.len() == before {
            break;
        }
    }
    match parse_number_tolerant(&t) {
        Some(x) => canonical_number(x),
        None => t,
    }
}

fn numbers_close(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y || (x - y).abs() <= 1e-6 * x.abs().max(y.abs()),
        _ => false,
    }
}

pub fn exact_match(pred: &str, golds: &[String]) -> bool {
    let p = normalize_answer(pred);
    golds.iter().any(|g| {
        let g = normalize_answer(g);
        p == g || numbers_close(&p, &g)
    })
}

fn tokens(s: &str) -> Vec<String> {
    let lower = s.to_lowercase();
    tokenize_approx(&lower).into_iter().map(str::to_string).collect()
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

pub fn bleu(pred: &str, refs: &[String]) -> f64 {
    let cand = tokens(pred);
    let refs: Vec<Vec<String>> = refs.iter().map(|r| tokens(r)).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let total: usize = cand_counts.values().sum();
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let matched: usize = cand_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0)))
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln() / 4.0;
    }
    let c = cand.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| ((len as i64 - cand.len() as i64).abs(), len))
        .unwrap_or(0) as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// LCS-based F1 (β = 1).
pub fn rouge_l(pred: &str, reference: &str) -> f64 {
    let (p, r) = (tokens(pred), tokens(reference));
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    2.0 * lcs(&p, &r) as f64 / (p.len() + r.len()) as f64
}

/// Best ROUGE-L over several references.
pub fn rouge_l_multi(pred: &str, refs: &[String]) -> f64 {
    refs.iter().map(|r| rouge_l(pred, r)).fold(0.0, f64::max)
}

pub fn accuracy_sd(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  Algeria. "), "algeria");
        assert_eq!(normalize_answer("6.0"), "6");
        assert_eq!(normalize_answer("1,964"), "1964");
        assert_eq!(normalize_answer("\"New  York\""), "new york");
        assert_eq!(normalize_answer("$2,500"), "2500");
        assert_eq!(normalize_answer("45%"), "45");
        assert_eq!(normalize_answer("4.933"), "4.933");
    }

    #[test]
    fn matching() {
        assert!(exact_match("6", &v(&["6"])));
        assert!(exact_match("4.933", &v(&["4.933"])));
        assert!(exact_match("Qatar.", &v(&["qatar"])));
        assert!(exact_match("2.2640000001", &v(&["2.264"])));
        assert!(!exact_match("2.27", &v(&["2.264"])));
        assert!(exact_match("x", &v(&["y", "X"])));
    }

    #[test]
    fn bleu_hand_oracle() {
        // p1 = 4/5, p2 = 3/4, p3 = 2/3, p4 = 1/2, BP = exp(1 - 6/5)
        let got = bleu("the cat sat on rug", &v(&["the cat sat on the mat"]));
        let want = (-0.2f64).exp() * (0.8f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn bleu_edges() {
        assert_eq!(bleu("a b c d e", &v(&["a b c d e"])), 1.0);
        assert!(bleu("a b c", &v(&["x y z"])) < 0.01);
        assert_eq!(bleu("", &v(&["x"])), 0.0);
    }

    #[test]
    fn rouge_cases() {
        assert_eq!(rouge_l("a b c", "a x c"), 2.0 / 3.0);
        assert_eq!(rouge_l("", "a"), 0.0);
        assert_eq!(rouge_l("same words", "same words"), 1.0);
    }

    #[test]
    fn binomial_sd() {
        assert!((accuracy_sd(0.7020, 198) - 0.0325).abs() < 1e-4);
        assert!((accuracy_sd(0.6364, 198) - 0.0342).abs() < 1e-4);
        assert_eq!(accuracy_sd(0.0, 50), 0.0);
    }

    proptest! {
        #[test]
        fn match_is_symmetric(a in "[ A-Za-z0-9.,$%]{0,12}", b in "[ A-Za-z0-9.,$%]{0,12}") {
            prop_assert_eq!(exact_match(&a, std::slice::from_ref(&b)), exact_match(&b, std::slice::from_ref(&a)));
        }

        #[test]
        fn self_scores_are_one(x in "[a-z]{1,6}( [a-z]{1,6}){0,8}") {
            prop_assert!((bleu(&x, std::slice::from_ref(&x)) - 1.0).abs() < 1e-12);
            prop_assert_eq!(rouge_l(&x, &x), 1.0);
        }
    }
}

//! Keyword rules that tag questions with a coarse type.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_QTYPE: &str = "lookup";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRule {
    pub qtype: String,
    pub pattern: String,
}

pub fn default_rules() -> Vec<QuestionRule> {
    [
        ("ratio", r"times as \w+|times (larger|bigger|more|higher|greater)|\bratio\b|\brelative to\b"),
        ("difference", r"\bdifference\b|how (much|many) (more|less|fewer|higher|lower)|\bgap\b"),
        ("count", r"\bhow many\b|\bnumber of\b|\bcount\b"),
        ("average", r"\baverage\b|\bmean\b"),
        ("sum", r"\bsum\b|\btotal\b|\bcombined\b"),
        ("which", r"\bwhich\b"),
        ("who", r"\bwho\b|\bwhom\b|\bwhose\b"),
        ("max", r"\b(most|highest|largest|latest|newest|maximum|biggest|greatest|longest)\b"),
        ("min", r"\b(least|lowest|smallest|oldest|earliest|minimum|fewest|shortest)\b"),
        ("order", r"\b(order|rank|ranked|sort|sorted)\b"),
    ]
    .into_iter()
    .map(|(q, p)| QuestionRule { qtype: q.into(), pattern: p.into() })
    .collect()
}

/// Ordered rule table; the first matching rule wins.
#[derive(Debug, Clone)]
pub struct QuestionClassifier {
    rules: Vec<(String, Regex)>,
}

impl QuestionClassifier {
    pub fn new(rules: &[QuestionRule]) -> Result<Self, regex::Error> {
        let rules = rules
            .iter()
            .map(|r| Ok((r.qtype.clone(), Regex::new(&r.pattern)?)))
            .collect::<Result<_, regex::Error>>()?;
        Ok(QuestionClassifier { rules })
    }

    pub fn classify(&self, question: &str) -> String {
        let q = question.to_lowercase();
        self.rules
            .iter()
            .find(|(_, re)| re.is_match(&q))
            .map(|(t, _)| t.clone())
            .unwrap_or_else(|| DEFAULT_QTYPE.to_string())
    }
}

impl Default for QuestionClassifier {
    fn default() -> Self {
        QuestionClassifier::new(&default_rules()).expect("default rules compile")
    }
}

pub fn classify_question(question: &str) -> String {
    static DEFAULT: OnceLock<QuestionClassifier> = OnceLock::new();
    DEFAULT.get_or_init(QuestionClassifier::default).classify(question)
}

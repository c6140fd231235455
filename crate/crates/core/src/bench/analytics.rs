//! Token budget split between markup and content for each text format.

use serde::{Deserialize, Serialize};

use crate::observation::TextFormat;
use crate::table::Table;

const MARKUP: &[char] = &['{', '}', '[', ']', '"', ':', ',', '|', '-', '&', '\\'];
const LATEX_KEYWORDS: &[&str] = &["begin", "end", "tabular"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatAnalytics {
    pub structural: usize,
    pub content: usize,
    pub total: usize,
    pub overhead_ratio: f64,
}

/// Splits on whitespace, then into alphanumeric runs and single
/// punctuation characters.
pub fn analytics_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = None;
        for (i, c) in chunk.char_indices() {
            if c.is_alphanumeric() {
                start.get_or_insert(i);
            } else {
                if let Some(s) = start.take() {
                    out.push(&chunk[s..i]);
                }
                out.push(&chunk[i..i + c.len_utf8()]);
            }
        }
        if let Some(s) = start {
            out.push(&chunk[s..]);
        }
    }
    out
}

pub fn is_structural(token: &str) -> bool {
    (!token.is_empty() && token.chars().all(|c| MARKUP.contains(&c))) || LATEX_KEYWORDS.contains(&token)
}

pub fn text_analytics(text: &str) -> FormatAnalytics {
    let tokens = analytics_tokens(text);
    let structural = tokens.iter().filter(|t| is_structural(t)).count();
    let total = tokens.len();
    FormatAnalytics {
        structural,
        content: total - structural,
        total,
        overhead_ratio: if total == 0 { 0.0 } else { structural as f64 / total as f64 },
    }
}

pub fn format_analytics(table: &Table, format: TextFormat) -> FormatAnalytics {
    text_analytics(&format.serialize(table))
}

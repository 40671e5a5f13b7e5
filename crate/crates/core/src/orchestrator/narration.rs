//! Rendering of tool results into prose, with every numeral traced to the
//! payload field it came from.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::tools::ToolResult;

/// A number as it appears in text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumeralToken {
    pub text: String,
    pub value: f64,
    /// Digits after the decimal point as displayed.
    pub decimals: usize,
    pub start: usize,
}

/// Where one displayed numeral came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub text: String,
    pub value: f64,
    pub tool: String,
    /// Index of the tool result within the turn.
    pub result: usize,
    /// JSON pointer into that result's payload.
    pub field: String,
}

/// Numerals in `text`, skipping digits that are part of identifiers such as
/// `case118` or `N-1`. A hyphen between two numbers (`110-112`) separates
/// them.
pub fn extract_numerals(text: &str) -> Vec<NumeralToken> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        let glued = start > 0 && {
            let p = b[start - 1];
            p.is_ascii_alphanumeric()
                || p == b'_'
                || p == b'.'
                || (p == b'-' && start > 1 && b[start - 2].is_ascii_alphabetic())
        };
        // Integer part with optional groups of three after commas.
        let mut j = i;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        let group_at = |j: usize| {
            b[j] == b','
                && j + 3 < b.len()
                && b[j + 1..j + 4].iter().all(u8::is_ascii_digit)
                && !(j + 4 < b.len() && b[j + 4].is_ascii_digit())
        };
        while j < b.len() && group_at(j) {
            j += 4;
        }
        let mut decimals = 0;
        if j + 1 < b.len() && b[j] == b'.' && b[j + 1].is_ascii_digit() {
            j += 1;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
                decimals += 1;
            }
        }
        let trailing_glue = j < b.len() && (b[j].is_ascii_alphabetic() && !unit_follows(&text[j..]));
        if !glued && !trailing_glue {
            let raw = &text[start..j];
            if let Ok(value) = raw.replace(',', "").parse::<f64>() {
                out.push(NumeralToken {
                    text: raw.to_string(),
                    value,
                    decimals,
                    start,
                });
            }
        }
        // Skip the rest of a glued word.
        while j < b.len() && (b[j].is_ascii_alphanumeric() || b[j] == b'_') && (glued || trailing_glue) {
            j += 1;
        }
        i = j.max(start + 1);
    }
    out
}

/// Units written directly after a number ("50MW", "1.02pu").
fn unit_follows(rest: &str) -> bool {
    let lower = rest.to_ascii_lowercase();
    ["mw", "mvar", "mva", "pu", "kv", "hr", "h", "x", "th", "st", "nd", "rd"]
        .iter()
        .any(|u| lower.starts_with(u) && !lower[u.len()..].starts_with(|c: char| c.is_ascii_alphanumeric()))
}

/// `1234567.891` with two decimals becomes `1,234,567.89`.
pub fn format_number(value: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, value.abs());
    let (int, frac) = match s.split_once('.') {
        Some((a, b)) => (a.to_string(), Some(b.to_string())),
        None => (s.clone(), None),
    };
    let mut grouped = String::new();
    for (k, ch) in int.chars().enumerate() {
        if k > 0 && (int.len() - k) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    let negative = value < 0.0 && s.chars().any(|c| c.is_ascii_digit() && c != '0');
    let mut out = if negative { format!("-{grouped}") } else { grouped };
    if let Some(f) = frac {
        out.push('.');
        out.push_str(&f);
    }
    out
}

/// Builds prose piece by piece, recording each numeral's source.
#[derive(Debug, Default)]
pub struct Narrator {
    text: String,
    entries: Vec<ProvenanceEntry>,
}

impl Narrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self
    }

    /// Appends `payload[field]` with the given precision. Negative values
    /// are shown as magnitudes when `magnitude` is set, for wording such as
    /// "down by".
    fn push_number(&mut self, result: &ToolResult, index: usize, field: &str, decimals: usize, magnitude: bool) -> bool {
        let Some(v) = result.payload.pointer(field).and_then(Value::as_f64) else {
            return false;
        };
        let shown = if magnitude { v.abs() } else { v };
        let text = format_number(shown, decimals);
        self.entries.push(ProvenanceEntry {
            text: text.clone(),
            value: shown,
            tool: result.tool_name.clone(),
            result: index,
            field: field.to_string(),
        });
        self.text.push_str(&text);
        true
    }

    pub fn num(&mut self, result: &ToolResult, index: usize, field: &str, decimals: usize) -> &mut Self {
        if !self.push_number(result, index, field, decimals, false) {
            self.text.push_str("n/a");
        }
        self
    }

    pub fn magnitude(&mut self, result: &ToolResult, index: usize, field: &str, decimals: usize) -> &mut Self {
        if !self.push_number(result, index, field, decimals, true) {
            self.text.push_str("n/a");
        }
        self
    }

    /// Appends a string field verbatim, recording any numerals inside it.
    pub fn field_text(&mut self, result: &ToolResult, index: usize, field: &str) -> &mut Self {
        let s = result.payload.pointer(field).and_then(Value::as_str).unwrap_or("").to_string();
        for tok in extract_numerals(&s) {
            self.entries.push(ProvenanceEntry {
                text: tok.text.clone(),
                value: tok.value,
                tool: result.tool_name.clone(),
                result: index,
                field: field.to_string(),
            });
        }
        self.text.push_str(&s);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn finish(self) -> (String, Vec<ProvenanceEntry>) {
        (self.text, self.entries)
    }
}

fn leaves(v: &Value, path: String, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                leaves(x, format!("{path}/{}", k.replace('~', "~0").replace('/', "~1")), out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                leaves(x, format!("{path}/{i}"), out);
            }
        }
        other => out.push((path, other.clone())),
    }
}

fn matches_display(tok: &NumeralToken, v: f64) -> bool {
    let half = 0.5 * 10f64.powi(-(tok.decimals as i32));
    let slack = 1e-9 * v.abs().max(1.0);
    (v - tok.value).abs() <= half + slack || (v.abs() - tok.value).abs() <= half + slack
}

/// Resolves every numeral in `text` against the payloads independently of
/// any recorded provenance. Returns the resolution for each numeral, or the
/// orphans.
pub fn resolve_numerals(text: &str, results: &[ToolResult]) -> Result<Vec<ProvenanceEntry>, Vec<NumeralToken>> {
    let mut fields = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let mut l = Vec::new();
        leaves(&r.payload, String::new(), &mut l);
        fields.extend(l.into_iter().map(|(p, v)| (i, r.tool_name.clone(), p, v)));
    }
    let mut resolved = Vec::new();
    let mut orphans = Vec::new();
    for tok in extract_numerals(text) {
        let hit = fields.iter().find(|(_, _, _, v)| match v {
            Value::Number(n) => n.as_f64().is_some_and(|x| matches_display(&tok, x)),
            Value::String(s) => extract_numerals(s).iter().any(|t| t.text == tok.text),
            _ => false,
        });
        match hit {
            Some((i, tool, path, _)) => resolved.push(ProvenanceEntry {
                text: tok.text.clone(),
                value: tok.value,
                tool: tool.clone(),
                result: *i,
                field: path.clone(),
            }),
            None => orphans.push(tok),
        }
    }
    if orphans.is_empty() {
        Ok(resolved)
    } else {
        Err(orphans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(text: &str) -> Vec<f64> {
        extract_numerals(text).iter().map(|t| t.value).collect()
    }

    #[test]
    fn identifiers_are_not_numerals() {
        assert_eq!(values("Solved case118 after N-1 and T-1 screening"), Vec::<f64>::new());
        assert_eq!(values("line 110-112 at 4.57%"), vec![110.0, 112.0, 4.57]);
        assert_eq!(values("cost $41,532.17/hr"), vec![41532.17]);
        assert_eq!(values("bus 10 to 50MW"), vec![10.0, 50.0]);
        assert_eq!(values("1. Line 8-5, score 34.00."), vec![1.0, 8.0, 5.0, 34.0]);
        assert_eq!(values("a 1,23 b"), vec![1.0, 23.0]);
    }

    #[test]
    fn thousands_and_rounding() {
        assert_eq!(format_number(41532.1749, 2), "41,532.17");
        assert_eq!(format_number(-1234.5, 1), "-1,234.5");
        assert_eq!(format_number(999.999, 2), "1,000.00");
        assert_eq!(format_number(-0.0001, 2), "0.00");
        assert_eq!(format_number(12.0, 0), "12");
    }
}

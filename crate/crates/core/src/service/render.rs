//! Terminal rendering of tool results.

use clap::ValueEnum;
use serde_json::{json, Value};

use crate::tools::ToolResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    /// Aligned text tables.
    #[default]
    Table,
    /// One JSON document per result.
    Document,
}

/// Left-aligned text columns separated by two spaces.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let s: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        s.join("  ").trim_end().to_string()
    };
    let mut out = vec![line(headers.to_vec())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        out.push(line(r.iter().map(String::as_str).collect()));
    }
    out.join("\n") + "\n"
}

fn cell(v: &Value, decimals: usize) -> String {
    match v {
        Value::Null => "-".into(),
        Value::Number(n) if n.is_f64() => format!("{:.*}", decimals, n.as_f64().unwrap_or(0.0)),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn key_values(p: &Value, fields: &[(&str, &str, usize)]) -> String {
    let rows: Vec<Vec<String>> = fields
        .iter()
        .filter(|(k, _, _)| p.get(*k).is_some())
        .map(|(k, label, d)| vec![label.to_string(), cell(&p[*k], *d)])
        .collect();
    table(&["quantity", "value"], &rows)
}

/// Summary table for an optimal power flow payload.
pub fn solution_table(p: &Value) -> String {
    key_values(
        p,
        &[
            ("case_name", "case", 0),
            ("objective_cost", "objective cost ($/hr)", 2),
            ("total_generation_mw", "generation (MW)", 2),
            ("total_load_mw", "load (MW)", 2),
            ("losses_mw", "losses (MW)", 3),
            ("min_voltage_pu", "min voltage (pu)", 4),
            ("max_voltage_pu", "max voltage (pu)", 4),
            ("max_loading_percent", "max loading (%)", 2),
            ("iterations", "iterations", 0),
            ("max_mismatch_pu", "max mismatch (pu)", 10),
            ("cost_change", "cost change ($/hr)", 2),
            ("diff_count", "modifications", 0),
        ],
    )
}

/// Ranking table for a sweep or stored-sweep payload.
pub fn ranking_table(p: &Value) -> String {
    let rows: Vec<Vec<String>> = p["critical"]
        .as_array()
        .map(Vec::as_slice)
        .unwrap_or_default()
        .iter()
        .map(|c| {
            vec![
                cell(&c["rank"], 0),
                cell(&c["element_index"], 0),
                cell(&c["label"], 0),
                cell(&c["kind"], 0),
                cell(&c["status"], 0),
                cell(&c["score"], 2),
                cell(&c["max_loading_percent"], 2),
                cell(&c["min_voltage_pu"], 4),
            ]
        })
        .collect();
    table(
        &["rank", "index", "element", "kind", "status", "score", "max loading %", "min V pu"],
        &rows,
    )
}

fn sweep_summary(p: &Value) -> String {
    key_values(
        p,
        &[
            ("case_name", "case", 0),
            ("scope", "scope", 0),
            ("total", "outages", 0),
            ("secure", "secure", 0),
            ("violations", "violations", 0),
            ("islanding", "islanding", 0),
            ("diverged", "diverged", 0),
            ("max_loading_percent", "max loading (%)", 2),
            ("cache_hits", "cache hits", 0),
            ("fresh_evaluations", "fresh evaluations", 0),
        ],
    )
}

fn outage_table(p: &Value) -> String {
    key_values(
        p,
        &[
            ("element_index", "index", 0),
            ("label", "element", 0),
            ("kind", "kind", 0),
            ("status", "status", 0),
            ("score", "score", 2),
            ("max_loading_percent", "max loading (%)", 2),
            ("min_voltage_pu", "min voltage (pu)", 4),
            ("min_voltage_bus", "min voltage bus", 0),
            ("curtailment_mw", "curtailment (MW)", 2),
            ("n_overloads", "overloads", 0),
            ("justification", "evidence", 0),
        ],
    )
}

/// Table rendering for one result; empty for results without a table view.
pub fn result_table(r: &ToolResult) -> String {
    if !r.ok {
        let msg = r.payload["clarification"]
            .as_str()
            .or_else(|| r.payload["error"].as_str())
            .unwrap_or("failed");
        return format!("{}: {msg}\n", r.tool_name);
    }
    match r.tool_name.as_str() {
        "solve_acopf_case" | "modify_bus_load" | "solve_base_case" => solution_table(&r.payload),
        "run_n1_contingency_analysis" => sweep_summary(&r.payload) + "\n" + &ranking_table(&r.payload),
        "get_contingency_status" if r.payload["available"] == true => {
            sweep_summary(&r.payload) + "\n" + &ranking_table(&r.payload)
        }
        "analyze_specific_contingency" => outage_table(&r.payload),
        _ => String::new(),
    }
}

pub fn result_document(r: &ToolResult) -> Value {
    json!({
        "tool": r.tool_name,
        "ok": r.ok,
        "payload": r.payload,
        "validation": r.validation,
        "provenance": r.provenance,
        "artifact": r.artifact.map(|a| a.to_string()),
    })
}

pub fn render(results: &[ToolResult], format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => results.iter().map(result_table).filter(|s| !s.is_empty()).collect::<Vec<_>>().join("\n"),
        OutputFormat::Document => {
            let docs: Vec<Value> = results.iter().map(result_document).collect();
            let v = if docs.len() == 1 { docs.into_iter().next().unwrap_or_default() } else { Value::Array(docs) };
            serde_json::to_string_pretty(&v).unwrap_or_default() + "\n"
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align() {
        let t = table(&["a", "long"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    long\n---  ----\nxyz  1\n");
    }
}

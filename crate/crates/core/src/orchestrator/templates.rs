//! One prose template per tool. Every numeral is written through the
//! narrator so it carries a pointer back into the payload.

use serde_json::Value;

use super::narration::{Narrator, ProvenanceEntry};
use crate::tools::ToolResult;

/// Prose for a turn's results, in order. No results gives empty text.
pub fn narrate(results: &[ToolResult]) -> (String, Vec<ProvenanceEntry>) {
    let mut n = Narrator::new();
    for (i, r) in results.iter().enumerate() {
        if !n.is_empty() {
            n.text(" ");
        }
        if !r.ok {
            failure(&mut n, r, i);
            continue;
        }
        match r.tool_name.as_str() {
            "solve_acopf_case" => acopf(&mut n, r, i),
            "modify_bus_load" => modify(&mut n, r, i),
            "get_network_status" => network_status(&mut n, r, i),
            "solve_base_case" => base_case(&mut n, r, i),
            "run_n1_contingency_analysis" => sweep(&mut n, r, i),
            "analyze_specific_contingency" => single(&mut n, r, i),
            "get_contingency_status" => contingency_status(&mut n, r, i),
            other => {
                n.text(&format!("{other} completed."));
            }
        }
    }
    n.finish()
}

fn has_number(r: &ToolResult, field: &str) -> bool {
    r.payload.pointer(field).is_some_and(Value::is_number)
}

fn failure(n: &mut Narrator, r: &ToolResult, i: usize) {
    if r.payload.get("clarification").is_some() {
        n.text(&format!("{} did not produce a result I can trust. ", r.tool_name));
        n.field_text(r, i, "/clarification");
    } else {
        n.text(&format!("{} failed: ", r.tool_name));
        n.field_text(r, i, "/error");
        n.text(".");
    }
}

fn voltages_and_loading(n: &mut Narrator, r: &ToolResult, i: usize) {
    n.text("Voltages range from ")
        .num(r, i, "/min_voltage_pu", 3)
        .text(" to ")
        .num(r, i, "/max_voltage_pu", 3)
        .text(" pu");
    if has_number(r, "/max_loading_percent") {
        n.text(" and the most loaded branch is at ").num(r, i, "/max_loading_percent", 1).text("% of its rating");
    }
    n.text(".");
}

fn acopf(n: &mut Narrator, r: &ToolResult, i: usize) {
    n.field_text(r, i, "/case_name")
        .text(" solved by AC optimal power flow in ")
        .num(r, i, "/iterations", 0)
        .text(" iterations. Total cost is $")
        .num(r, i, "/objective_cost", 2)
        .text("/hr for ")
        .num(r, i, "/total_generation_mw", 1)
        .text(" MW of generation serving ")
        .num(r, i, "/total_load_mw", 1)
        .text(" MW of load, with ")
        .num(r, i, "/losses_mw", 2)
        .text(" MW of losses. ");
    voltages_and_loading(n, r, i);
    let binding = r.payload["binding_constraints"].as_array().map_or(0, Vec::len);
    if binding > 0 {
        n.text(" Binding limits: ");
        for k in 0..binding.min(4) {
            if k > 0 {
                n.text(", ");
            }
            n.field_text(r, i, &format!("/binding_constraints/{k}/label"));
        }
        if binding > 4 {
            n.text(" and others");
        }
        n.text(".");
    }
}

fn modify(n: &mut Narrator, r: &ToolResult, i: usize) {
    n.text("Set the load at bus ")
        .num(r, i, "/bus", 0)
        .text(" to ")
        .num(r, i, "/p_mw", 1)
        .text(" MW (it was ")
        .num(r, i, "/previous_p_mw", 1)
        .text(" MW) and re-optimized. The cost is now $")
        .num(r, i, "/objective_cost", 2)
        .text("/hr");
    if let Some(change) = r.payload["cost_change"].as_f64() {
        let word = if change >= 0.0 { "up" } else { "down" };
        n.text(&format!(", {word} $")).magnitude(r, i, "/cost_change", 2).text("/hr from $").num(
            r,
            i,
            "/previous_objective_cost",
            2,
        );
    }
    n.text(". ");
    voltages_and_loading(n, r, i);
}

fn network_status(n: &mut Narrator, r: &ToolResult, i: usize) {
    n.field_text(r, i, "/case_name")
        .text(" has ")
        .num(r, i, "/bus_count", 0)
        .text(" buses, ")
        .num(r, i, "/generator_count", 0)
        .text(" generators, ")
        .num(r, i, "/line_count", 0)
        .text(" lines and ")
        .num(r, i, "/transformer_count", 0)
        .text(" transformers, carrying ")
        .num(r, i, "/total_load_mw", 1)
        .text(" MW of load. Modifications applied: ")
        .num(r, i, "/diff_count", 0)
        .text(". Stored results: optimal power flow ")
        .field_text(r, i, "/acopf")
        .text(", base power flow ")
        .field_text(r, i, "/power_flow")
        .text(", contingency sweep ")
        .field_text(r, i, "/contingency")
        .text(".");
    if has_number(r, "/objective_cost") {
        n.text(" Latest cost is $").num(r, i, "/objective_cost", 2).text("/hr.");
    }
}

fn base_case(n: &mut Narrator, r: &ToolResult, i: usize) {
    let source = if r.payload["reused_acopf"] == true {
        "from the stored optimal dispatch"
    } else {
        "from a new optimal power flow"
    };
    n.text("Base case for ")
        .field_text(r, i, "/case_name")
        .text(&format!(" is ready {source}. "));
    if r.payload["reused_power_flow"] == true {
        n.text("The stored base power flow is still current. ");
    } else {
        n.text("The power flow converged in ").num(r, i, "/iterations", 0).text(" iterations. ");
    }
    voltages_and_loading(n, r, i);
}

fn outage_line(n: &mut Narrator, r: &ToolResult, i: usize, at: &str) {
    n.field_text(r, i, &format!("{at}/label"))
        .text(" (")
        .field_text(r, i, &format!("{at}/kind"))
        .text(", ")
        .field_text(r, i, &format!("{at}/status"))
        .text(")");
    if has_number(r, &format!("{at}/score")) {
        n.text(" score ").num(r, i, &format!("{at}/score"), 2);
    }
    n.text(": ").field_text(r, i, &format!("{at}/justification"));
}

fn sweep(n: &mut Narrator, r: &ToolResult, i: usize) {
    n.text("Screened ")
        .num(r, i, "/total", 0)
        .text(" single outages (scope ")
        .field_text(r, i, "/scope")
        .text("): ")
        .num(r, i, "/secure", 0)
        .text(" secure, ")
        .num(r, i, "/violations", 0)
        .text(" with violations, ")
        .num(r, i, "/islanding", 0)
        .text(" islanding and ")
        .num(r, i, "/diverged", 0)
        .text(" diverged.");
    if has_number(r, "/max_loading_percent") {
        n.text(" Worst post-outage loading is ").num(r, i, "/max_loading_percent", 1).text("%.");
    }
    if r.payload["cache_hits"].as_u64().unwrap_or(0) > 0 {
        n.text(" Reused ").num(r, i, "/cache_hits", 0).text(" cached results.");
    }
    critical_list(n, r, i);
}

fn critical_list(n: &mut Narrator, r: &ToolResult, i: usize) {
    let count = r.payload["critical"].as_array().map_or(0, Vec::len);
    if count == 0 {
        return;
    }
    n.text(" Most critical, in order:");
    for k in 0..count {
        n.text(" ").num(r, i, &format!("/critical/{k}/rank"), 0).text(". ");
        outage_line(n, r, i, &format!("/critical/{k}"));
    }
}

fn single(n: &mut Narrator, r: &ToolResult, i: usize) {
    n.text("Outage of ");
    outage_line(n, r, i, "");
    if has_number(r, "/max_loading_percent") {
        n.text(" Post-outage maximum loading is ")
            .num(r, i, "/max_loading_percent", 1)
            .text("% and the lowest voltage is ")
            .num(r, i, "/min_voltage_pu", 3)
            .text(" pu at bus ")
            .num(r, i, "/min_voltage_bus", 0)
            .text(".");
    }
}

fn contingency_status(n: &mut Narrator, r: &ToolResult, i: usize) {
    if r.payload["available"] != true {
        n.text("No contingency sweep has been run for this case yet.");
        return;
    }
    n.text("The last sweep on ")
        .field_text(r, i, "/case_name")
        .text(" covered ")
        .num(r, i, "/total", 0)
        .text(" outages: ")
        .num(r, i, "/secure", 0)
        .text(" secure, ")
        .num(r, i, "/violations", 0)
        .text(" with violations, ")
        .num(r, i, "/islanding", 0)
        .text(" islanding, ")
        .num(r, i, "/diverged", 0)
        .text(" diverged.");
    if r.payload["fresh"] == true {
        n.text(" It is current.");
    } else {
        n.text(" It is stale: ").num(r, i, "/stale_edits", 0).text(" edits since it ran.");
    }
    critical_list(n, r, i);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::narration::resolve_numerals;
    use crate::session::Provenance;
    use chrono::Utc;
    use serde_json::json;

    fn result(tool: &str, ok: bool, payload: Value) -> ToolResult {
        ToolResult {
            tool_name: tool.into(),
            ok,
            payload,
            validation: Default::default(),
            provenance: Provenance::new(tool, Value::Null),
            artifact: None,
            context_version: 1,
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn empty_results_have_no_numerals() {
        let (text, prov) = narrate(&[]);
        assert!(text.is_empty() && prov.is_empty());
    }

    #[test]
    fn failure_text_traces_numerals_to_the_error() {
        let r = result("modify_bus_load", false, json!({"error": "bus 999 does not exist in case14"}));
        let (text, prov) = narrate(std::slice::from_ref(&r));
        assert!(text.contains("999"));
        assert_eq!(prov.len(), 1);
        assert_eq!(prov[0].field, "/error");
        assert!(resolve_numerals(&text, &[r]).is_ok());
    }

    #[test]
    fn modify_template_resolves() {
        let r = result(
            "modify_bus_load",
            true,
            json!({"bus": 10, "p_mw": 50.0, "previous_p_mw": 0.0, "objective_cost": 130_000.5,
                   "previous_objective_cost": 129_660.7, "cost_change": 339.8,
                   "min_voltage_pu": 0.943, "max_voltage_pu": 1.06, "max_loading_percent": 4.6}),
        );
        let (text, prov) = narrate(std::slice::from_ref(&r));
        assert!(text.contains("up $339.80/hr"), "{text}");
        assert!(resolve_numerals(&text, &[r]).is_ok());
        assert!(prov.iter().all(|p| p.result == 0));
    }
}

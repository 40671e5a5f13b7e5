use std::collections::HashMap;

use crate::network::{
    validate_network, Branch, BranchKind, Bus, BusType, CostModel, Generator, PowerSystem,
};

use super::CaseError;

struct Matrix {
    line: usize,
    rows: Vec<Vec<f64>>,
}

enum State {
    Top,
    Matrix { name: String, rows: Vec<Vec<f64>>, row: Vec<f64>, start: usize },
    Cell,
}

fn syntax(line: usize, column: usize, expected: &str) -> CaseError {
    CaseError::Syntax {
        line,
        column,
        expected: expected.to_string(),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Consume matrix body text starting at byte offset `from` of `line`.
/// Returns true when the closing bracket was seen.
fn scan_matrix(
    text: &str,
    lineno: usize,
    offset: usize,
    rows: &mut Vec<Vec<f64>>,
    row: &mut Vec<f64>,
) -> Result<bool, CaseError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() || c == ',' {
            i += 1;
        } else if c == ';' {
            if !row.is_empty() {
                rows.push(std::mem::take(row));
            }
            i += 1;
        } else if c == ']' {
            if !row.is_empty() {
                rows.push(std::mem::take(row));
            }
            let rest = text[i + 1..].trim();
            if !(rest.is_empty() || rest == ";") {
                return Err(syntax(lineno, offset + i + 2, "';' after ']'"));
            }
            return Ok(true);
        } else {
            let start = i;
            while i < bytes.len() {
                let d = bytes[i] as char;
                if d.is_whitespace() || d == ',' || d == ';' || d == ']' {
                    break;
                }
                i += 1;
            }
            let tok = &text[start..i];
            let v = parse_number(tok).ok_or_else(|| syntax(lineno, offset + start + 1, "number"))?;
            row.push(v);
        }
    }
    // End of line terminates a row.
    if !row.is_empty() {
        rows.push(std::mem::take(row));
    }
    Ok(false)
}

/// Parse the matrix subset of the MATPOWER case format.
pub fn parse_case_named(text: &str, default_name: &str) -> Result<PowerSystem, CaseError> {
    let mut case_name = default_name.to_string();
    let mut base_mva: Option<f64> = None;
    let mut matrices: HashMap<String, Matrix> = HashMap::new();
    let mut state = State::Top;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw);
        match &mut state {
            State::Cell => {
                if line.contains('}') {
                    state = State::Top;
                }
                continue;
            }
            State::Matrix {
                name,
                rows,
                row,
                start,
            } => {
                if scan_matrix(line, lineno, 0, rows, row)? {
                    let m = Matrix {
                        line: *start,
                        rows: std::mem::take(rows),
                    };
                    matrices.insert(std::mem::take(name), m);
                    state = State::Top;
                }
                continue;
            }
            State::Top => {}
        }

        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix("function") {
            let rest = rest.trim();
            let name = rest
                .split_once('=')
                .map(|(_, n)| n.trim())
                .ok_or_else(|| syntax(lineno, lead + 9, "'mpc = <name>'"))?;
            let name = name.trim_end_matches(';').trim();
            if !is_ident(name) {
                return Err(syntax(lineno, lead + 10, "function name"));
            }
            case_name = name.to_string();
            continue;
        }
        let Some((lhs, rhs)) = trimmed.split_once('=') else {
            return Err(syntax(lineno, lead + 1, "assignment"));
        };
        let lhs = lhs.trim();
        let field = lhs
            .strip_prefix("mpc.")
            .filter(|f| is_ident(f))
            .ok_or_else(|| syntax(lineno, lead + 1, "'mpc.<field>'"))?;
        let rhs_offset = lead + trimmed.find('=').unwrap_or(0) + 1;
        let rhs_trim = rhs.trim_start();
        let rhs_col = rhs_offset + (rhs.len() - rhs_trim.len());
        if let Some(body) = rhs_trim.strip_prefix('[') {
            let mut rows = Vec::new();
            let mut row = Vec::new();
            if scan_matrix(body, lineno, rhs_col + 1, &mut rows, &mut row)? {
                matrices.insert(field.to_string(), Matrix { line: lineno, rows });
            } else {
                state = State::Matrix {
                    name: field.to_string(),
                    rows,
                    row,
                    start: lineno,
                };
            }
        } else if rhs_trim.starts_with('{') {
            if !rhs_trim.contains('}') {
                state = State::Cell;
            }
        } else if rhs_trim.starts_with('\'') {
            // version string and similar scalars
        } else {
            let value = rhs_trim.trim_end_matches(';').trim();
            let v = parse_number(value).ok_or_else(|| syntax(lineno, rhs_col + 1, "number"))?;
            if field == "baseMVA" {
                base_mva = Some(v);
            }
        }
    }

    if let State::Matrix { start, .. } = state {
        return Err(syntax(start, 1, "closing ']'"));
    }

    let base_mva = base_mva.ok_or_else(|| CaseError::UnsupportedFeature("missing baseMVA".into()))?;
    let take = |name: &str| -> Result<&Matrix, CaseError> {
        matrices
            .get(name)
            .ok_or_else(|| CaseError::UnsupportedFeature(format!("missing matrix {name}")))
    };

    let bus_m = take("bus")?;
    let mut buses = Vec::with_capacity(bus_m.rows.len());
    for (i, r) in bus_m.rows.iter().enumerate() {
        if r.len() < 13 {
            return Err(syntax(bus_m.line + i + 1, 1, "13 bus columns"));
        }
        let bus_type = match r[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            4 => return Err(CaseError::UnsupportedFeature("isolated bus type 4".into())),
            other => {
                return Err(CaseError::Semantics(format!(
                    "bus {} has unknown type {other}",
                    r[0]
                )))
            }
        };
        buses.push(Bus {
            id: r[0] as u32,
            index: i,
            bus_type,
            pd_mw: r[2],
            qd_mvar: r[3],
            gs_mw: r[4],
            bs_mvar: r[5],
            area: r[6] as u32,
            vm_pu: r[7],
            va_deg: r[8],
            base_kv: r[9],
            zone: r[10] as u32,
            vmax_pu: r[11],
            vmin_pu: r[12],
        });
    }
    let kv: HashMap<u32, f64> = buses.iter().map(|b| (b.id, b.base_kv)).collect();

    let gen_m = take("gen")?;
    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for (i, r) in gen_m.rows.iter().enumerate() {
        if r.len() < 10 {
            return Err(syntax(gen_m.line + i + 1, 1, "10 generator columns"));
        }
        let bus_id = r[0] as u32;
        if !kv.contains_key(&bus_id) {
            return Err(CaseError::Semantics(format!(
                "generator {i} references absent bus {bus_id}"
            )));
        }
        generators.push(Generator {
            bus_id,
            pg_mw: r[1],
            qg_mvar: r[2],
            qmax_mvar: r[3],
            qmin_mvar: r[4],
            vg_pu: r[5],
            mbase_mva: r[6],
            in_service: r[7] > 0.0,
            pmax_mw: r[8],
            pmin_mw: r[9],
        });
    }

    let br_m = take("branch")?;
    let mut branches = Vec::with_capacity(br_m.rows.len());
    for (i, r) in br_m.rows.iter().enumerate() {
        if r.len() < 11 {
            return Err(syntax(br_m.line + i + 1, 1, "11 branch columns"));
        }
        let (f, t) = (r[0] as u32, r[1] as u32);
        for end in [f, t] {
            if !kv.contains_key(&end) {
                return Err(CaseError::Semantics(format!(
                    "branch {i} references absent bus {end}"
                )));
            }
        }
        let raw_tap = r[8];
        let shift = r[9];
        let kv_differs = {
            let (a, b) = (kv[&f], kv[&t]);
            a > 0.0 && b > 0.0 && a != b
        };
        let kind = if (raw_tap != 0.0 && raw_tap != 1.0) || shift != 0.0 || kv_differs {
            BranchKind::Transformer
        } else {
            BranchKind::Line
        };
        branches.push(Branch {
            from_bus: f,
            to_bus: t,
            r_pu: r[2],
            x_pu: r[3],
            b_pu: r[4],
            rating_mva: r[5],
            rate_b_mva: r[6],
            rate_c_mva: r[7],
            tap_ratio: if raw_tap == 0.0 { 1.0 } else { raw_tap },
            shift_deg: shift,
            in_service: r[10] > 0.0,
            angmin_deg: r.get(11).copied().unwrap_or(-360.0),
            angmax_deg: r.get(12).copied().unwrap_or(360.0),
            kind,
        });
    }

    let cost_m = take("gencost")?;
    if cost_m.rows.len() != generators.len() {
        if cost_m.rows.len() == 2 * generators.len() {
            return Err(CaseError::UnsupportedFeature("reactive power costs".into()));
        }
        return Err(CaseError::Semantics(format!(
            "{} gencost rows for {} generators",
            cost_m.rows.len(),
            generators.len()
        )));
    }
    let mut cost_models = Vec::with_capacity(cost_m.rows.len());
    for (i, r) in cost_m.rows.iter().enumerate() {
        if r.len() < 4 {
            return Err(syntax(cost_m.line + i + 1, 1, "gencost header columns"));
        }
        match r[0] as i64 {
            1 => return Err(CaseError::UnsupportedFeature("piecewise-linear cost".into())),
            2 => {}
            m => return Err(CaseError::Semantics(format!("unknown cost model {m}"))),
        }
        let n = r[3] as usize;
        if n > 3 {
            return Err(CaseError::UnsupportedFeature(format!(
                "polynomial cost of degree {}",
                n - 1
            )));
        }
        if r.len() < 4 + n {
            return Err(syntax(cost_m.line + i + 1, 1, "polynomial coefficients"));
        }
        cost_models.push(CostModel {
            startup: r[1],
            shutdown: r[2],
            coefficients: r[4..4 + n].to_vec(),
        });
    }

    let net = PowerSystem {
        case_name,
        base_mva,
        buses,
        generators,
        branches,
        cost_models,
    };
    let report = validate_network(&net);
    if !report.is_empty() {
        return Err(CaseError::Semantics(report.messages().join("; ")));
    }
    Ok(net)
}

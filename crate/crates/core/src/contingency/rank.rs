use serde::{Deserialize, Serialize};

use super::{ContingencyCase, ContingencyResult, ContingencyStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    pub per_overload: f64,
    /// Per 10 percentage points of worst loading above 100%.
    pub per_ten_percent_excess: f64,
    /// Per p.u. of minimum voltage below the low threshold.
    pub per_pu_voltage_deficit: f64,
    pub per_mw_curtailed: f64,
    pub diverged_penalty: f64,
}

impl Default for ScoringWeights {
    fn default() -> Self {
        ScoringWeights {
            per_overload: 2.0,
            per_ten_percent_excess: 1.0,
            per_pu_voltage_deficit: 50.0,
            per_mw_curtailed: 0.5,
            diverged_penalty: 10.0,
        }
    }
}

/// Only what the evaluation actually computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub n_overloads: usize,
    /// max(0, worst loading − 100), percentage points.
    pub worst_overload_excess_percent: f64,
    /// max(0, v_low − minimum voltage), p.u.
    pub worst_voltage_deficit_pu: f64,
    pub curtailment_mw: f64,
    pub diverged: bool,
    /// Buses above the upper voltage limit. Reported, not scored.
    #[serde(default)]
    pub n_high_voltage_buses: usize,
}

impl Evidence {
    pub fn from_result(r: &ContingencyResult, v_low_pu: f64) -> Self {
        Evidence {
            n_overloads: r.overloaded_branches.len(),
            worst_overload_excess_percent: r.max_loading_percent.map_or(0.0, |l| (l - 100.0).max(0.0)),
            worst_voltage_deficit_pu: r.min_voltage_pu.map_or(0.0, |v| (v_low_pu - v).max(0.0)),
            curtailment_mw: r.curtailment_mw.max(0.0),
            diverged: r.status == ContingencyStatus::Diverged,
            n_high_voltage_buses: r.high_voltage_buses.len(),
        }
    }

    pub fn score(&self, w: &ScoringWeights) -> f64 {
        w.per_overload * self.n_overloads as f64
            + w.per_ten_percent_excess * self.worst_overload_excess_percent / 10.0
            + w.per_pu_voltage_deficit * self.worst_voltage_deficit_pu
            + w.per_mw_curtailed * self.curtailment_mw
            + if self.diverged { w.diverged_penalty } else { 0.0 }
    }

    /// Plain-language summary whose numerals all come from the fields.
    pub fn justification(&self) -> String {
        if self.diverged {
            let mut s = "Post-outage power flow did not converge from either start".to_string();
            if self.curtailment_mw > 0.0 {
                s.push_str(&format!("; {:.1} MW of load is islanded", self.curtailment_mw));
            }
            s.push('.');
            return s;
        }
        let mut parts = Vec::new();
        match self.n_overloads {
            0 => {}
            1 => parts.push(format!(
                "overloads one branch, {:.1}% above its rating",
                self.worst_overload_excess_percent
            )),
            n => parts.push(format!(
                "overloads {n} branches, the worst {:.1}% above its rating",
                self.worst_overload_excess_percent
            )),
        }
        if self.worst_voltage_deficit_pu > 0.0 {
            parts.push(format!(
                "drops the lowest voltage {:.3} p.u. below the limit",
                self.worst_voltage_deficit_pu
            ));
        }
        if self.curtailment_mw > 0.0 {
            parts.push(format!("islands {:.1} MW of load", self.curtailment_mw));
        }
        match self.n_high_voltage_buses {
            0 => {}
            1 => parts.push("raises one bus above the upper voltage limit".to_string()),
            n => parts.push(format!("raises {n} buses above the upper voltage limit")),
        }
        if parts.is_empty() {
            return "No thermal or voltage violations.".to_string();
        }
        let mut text = parts.join("; ");
        text[..1].make_ascii_uppercase();
        text.push('.');
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalElement {
    pub contingency: ContingencyCase,
    pub score: f64,
    pub evidence: Evidence,
    pub justification: String,
}

/// Orders results by score, highest first; ties go to the lower element
/// index. Returns the first `k`.
pub fn rank_critical(
    results: &[ContingencyResult],
    k: usize,
    v_low_pu: f64,
    weights: &ScoringWeights,
) -> Vec<CriticalElement> {
    let mut ranked: Vec<CriticalElement> = results
        .iter()
        .map(|r| {
            let evidence = Evidence::from_result(r, v_low_pu);
            CriticalElement {
                contingency: r.contingency.clone(),
                score: evidence.score(weights),
                justification: evidence.justification(),
                evidence,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.contingency.element_index.cmp(&b.contingency.element_index))
    });
    ranked.truncate(k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contingency::{OutageKind, OverloadEntry};
    use proptest::prelude::*;

    pub(crate) fn result(index: usize, overloads: &[f64], curtail: f64) -> ContingencyResult {
        ContingencyResult {
            contingency: ContingencyCase {
                outage_kind: OutageKind::Line,
                element_index: index,
                label: format!("{}-{}", index + 1, index + 2),
            },
            status: if curtail > 0.0 {
                ContingencyStatus::Islanding
            } else if overloads.is_empty() {
                ContingencyStatus::Secure
            } else {
                ContingencyStatus::Violations
            },
            max_loading_percent: Some(overloads.iter().copied().fold(80.0, f64::max)),
            overloaded_branches: overloads
                .iter()
                .enumerate()
                .map(|(i, &l)| OverloadEntry::new(i + 100, format!("x-{i}"), l, 110.0, 115.0))
                .collect(),
            min_voltage_pu: Some(1.0),
            min_voltage_bus: Some(1),
            low_voltage_buses: vec![],
            high_voltage_buses: vec![],
            curtailment_mw: curtail,
            solve_iterations: 3,
            from_cache: false,
        }
    }

    #[test]
    fn curtailing_outage_outranks_marginal_one() {
        let a = result(9, &[108.0, 112.0, 117.0], 12.0);
        let b = result(2, &[101.0], 0.0);
        let ranked = rank_critical(&[b, a], 2, 0.94, &ScoringWeights::default());
        assert_eq!(ranked[0].contingency.element_index, 9);
        assert!(ranked[0].score > ranked[1].score);
    }

    #[test]
    fn all_secure_ties_order_by_index() {
        let results: Vec<_> = [4, 1, 3].iter().map(|&i| result(i, &[], 0.0)).collect();
        let ranked = rank_critical(&results, 3, 0.94, &ScoringWeights::default());
        assert!(ranked.iter().all(|c| c.score == 0.0));
        let order: Vec<usize> = ranked.iter().map(|c| c.contingency.element_index).collect();
        assert_eq!(order, vec![1, 3, 4]);
        assert_eq!(ranked[0].justification, "No thermal or voltage violations.");
    }

    #[test]
    fn justification_states_evidence() {
        let e = Evidence::from_result(&result(0, &[104.0, 137.25], 12.0), 0.94);
        assert_eq!(
            e.justification(),
            "Overloads 2 branches, the worst 37.2% above its rating; islands 12.0 MW of load."
        );
    }

    proptest! {
        #[test]
        fn extra_overload_never_lowers_score(
            n in 0usize..6,
            excess in 0.0f64..80.0,
            deficit in 0.0f64..0.2,
            curtail in 0.0f64..500.0,
            extra_excess in 0.0f64..40.0,
        ) {
            let w = ScoringWeights::default();
            let e = Evidence {
                n_overloads: n,
                worst_overload_excess_percent: excess,
                worst_voltage_deficit_pu: deficit,
                curtailment_mw: curtail,
                diverged: false,
                n_high_voltage_buses: 0,
            };
            let mut more = e.clone();
            more.n_overloads += 1;
            more.worst_overload_excess_percent = excess.max(extra_excess);
            prop_assert!(more.score(&w) >= e.score(&w));
            prop_assert!(e.score(&w) >= 0.0);
        }
    }
}

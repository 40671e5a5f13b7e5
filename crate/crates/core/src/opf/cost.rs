use crate::network::{CostModel, PowerSystem};

/// Total cost in $/h and per-generator marginal cost in $/MWh.
pub fn cost_eval(costs: &[CostModel], dispatch_mw: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(costs.len(), dispatch_mw.len(), "one dispatch value per cost model");
    let total = costs.iter().zip(dispatch_mw).map(|(c, &p)| c.eval(p)).sum();
    let grad = costs.iter().zip(dispatch_mw).map(|(c, &p)| c.marginal(p)).collect();
    (total, grad)
}

/// Cost of a lossless, network-free economic dispatch serving the total
/// load within generator P limits. A lower bound on any ACOPF objective
/// with non-decreasing costs.
///
/// Returns `None` when the load is outside the aggregate capacity range.
pub fn economic_dispatch_bound(net: &PowerSystem) -> Option<f64> {
    let units: Vec<(&CostModel, f64, f64)> = net
        .in_service_generators()
        .map(|(g, gen)| (&net.cost_models[g], gen.pmin_mw, gen.pmax_mw))
        .collect();
    let demand = net.total_load_mw();
    let cap_lo: f64 = units.iter().map(|u| u.1).sum();
    let cap_hi: f64 = units.iter().map(|u| u.2).sum();
    if units.is_empty() || demand < cap_lo - 1e-9 || demand > cap_hi + 1e-9 {
        return None;
    }

    // Output at incremental cost λ; flat-cost units sit at pmin below
    // their price and pmax above it (or at it, with `above`).
    let output = |lambda: f64, above: bool| -> Vec<f64> {
        units
            .iter()
            .map(|(c, lo, hi)| {
                let (c2, c1) = (c.c2(), c.c1());
                if c2 > 0.0 {
                    ((lambda - c1) / (2.0 * c2)).clamp(*lo, *hi)
                } else if lambda > c1 || (above && lambda == c1) {
                    *hi
                } else {
                    *lo
                }
            })
            .collect()
    };
    let total = |p: &[f64]| p.iter().sum::<f64>();

    let mut lo = units
        .iter()
        .map(|(c, lo, _)| c.marginal(*lo))
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut hi = units
        .iter()
        .map(|(c, _, hi)| c.marginal(*hi))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(&output(mid, false)) < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Below the clearing price output falls short of demand; units whose
    // output jumps across it make up the difference.
    let mut p = output(lo, false);
    let upper = output(hi, true);
    let mut remaining = demand - total(&p);
    for k in 0..units.len() {
        if remaining <= 0.0 {
            break;
        }
        let take = (upper[k] - p[k]).min(remaining).max(0.0);
        p[k] += take;
        remaining -= take;
    }
    Some(units.iter().zip(&p).map(|((c, _, _), &pk)| c.eval(pk)).sum())
}

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PowerSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModificationError {
    #[error("unknown target: {0}")]
    UnknownTarget(String),
    #[error("branch {0} is already out of service")]
    AlreadyOutOfService(usize),
    #[error("branch {0} is already in service")]
    AlreadyInService(usize),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

/// The edit itself, without bookkeeping. Its JSON encoding is the canonical
/// form hashed into the session diff log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModKind {
    SetBusLoad {
        bus_id: u32,
        p_mw: f64,
        /// Reactive load is left unchanged when absent.
        q_mvar: Option<f64>,
    },
    ScaleBusLoad {
        bus_id: u32,
        factor: f64,
    },
    BranchOutage {
        index: usize,
    },
    BranchRestore {
        index: usize,
    },
    SetGenLimit {
        index: usize,
        pmin_mw: Option<f64>,
        pmax_mw: Option<f64>,
    },
}

impl ModKind {
    pub fn describe(&self) -> String {
        match self {
            ModKind::SetBusLoad { bus_id, p_mw, q_mvar } => match q_mvar {
                Some(q) => format!("set load at bus {bus_id} to {p_mw} MW / {q} MVAr"),
                None => format!("set load at bus {bus_id} to {p_mw} MW"),
            },
            ModKind::ScaleBusLoad { bus_id, factor } => {
                format!("scale load at bus {bus_id} by {factor}")
            }
            ModKind::BranchOutage { index } => format!("take branch {index} out of service"),
            ModKind::BranchRestore { index } => format!("restore branch {index}"),
            ModKind::SetGenLimit {
                index,
                pmin_mw,
                pmax_mw,
            } => format!("set limits of generator {index} to [{pmin_mw:?}, {pmax_mw:?}] MW"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    #[serde(flatten)]
    pub kind: ModKind,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub note: String,
}

impl Modification {
    pub fn new(kind: ModKind) -> Self {
        Modification {
            kind,
            timestamp: Utc::now(),
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// The modification that undoes `self` when applied to the result of
    /// applying `self` to `before`.
    pub fn inverse(&self, before: &PowerSystem) -> Result<Modification, ModificationError> {
        let kind = match &self.kind {
            ModKind::SetBusLoad { bus_id, .. } | ModKind::ScaleBusLoad { bus_id, .. } => {
                let bus = before
                    .buses
                    .iter()
                    .find(|b| b.id == *bus_id)
                    .ok_or_else(|| ModificationError::UnknownTarget(format!("bus {bus_id}")))?;
                ModKind::SetBusLoad {
                    bus_id: *bus_id,
                    p_mw: bus.pd_mw,
                    q_mvar: Some(bus.qd_mvar),
                }
            }
            ModKind::BranchOutage { index } => ModKind::BranchRestore { index: *index },
            ModKind::BranchRestore { index } => ModKind::BranchOutage { index: *index },
            ModKind::SetGenLimit { index, .. } => {
                let g = before.generators.get(*index).ok_or_else(|| {
                    ModificationError::UnknownTarget(format!("generator {index}"))
                })?;
                ModKind::SetGenLimit {
                    index: *index,
                    pmin_mw: Some(g.pmin_mw),
                    pmax_mw: Some(g.pmax_mw),
                }
            }
        };
        Ok(Modification {
            kind,
            timestamp: self.timestamp,
            note: format!("inverse of: {}", self.kind.describe()),
        })
    }
}

fn finite(v: f64, what: &str) -> Result<f64, ModificationError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModificationError::InvalidPayload(format!("{what} is not finite")))
    }
}

/// Pure transformation: returns the edited network, leaving `net` as is.
pub fn apply_modification(
    net: &PowerSystem,
    modification: &Modification,
) -> Result<PowerSystem, ModificationError> {
    let mut out = net.clone();
    match &modification.kind {
        ModKind::SetBusLoad {
            bus_id,
            p_mw,
            q_mvar,
        } => {
            let bus = out
                .buses
                .iter_mut()
                .find(|b| b.id == *bus_id)
                .ok_or_else(|| ModificationError::UnknownTarget(format!("bus {bus_id}")))?;
            bus.pd_mw = finite(*p_mw, "p_mw")?;
            if let Some(q) = q_mvar {
                bus.qd_mvar = finite(*q, "q_mvar")?;
            }
        }
        ModKind::ScaleBusLoad { bus_id, factor } => {
            let factor = finite(*factor, "factor")?;
            let bus = out
                .buses
                .iter_mut()
                .find(|b| b.id == *bus_id)
                .ok_or_else(|| ModificationError::UnknownTarget(format!("bus {bus_id}")))?;
            bus.pd_mw *= factor;
            bus.qd_mvar *= factor;
        }
        ModKind::BranchOutage { index } => {
            let br = out
                .branches
                .get_mut(*index)
                .ok_or_else(|| ModificationError::UnknownTarget(format!("branch {index}")))?;
            if !br.in_service {
                return Err(ModificationError::AlreadyOutOfService(*index));
            }
            br.in_service = false;
        }
        ModKind::BranchRestore { index } => {
            let br = out
                .branches
                .get_mut(*index)
                .ok_or_else(|| ModificationError::UnknownTarget(format!("branch {index}")))?;
            if br.in_service {
                return Err(ModificationError::AlreadyInService(*index));
            }
            br.in_service = true;
        }
        ModKind::SetGenLimit {
            index,
            pmin_mw,
            pmax_mw,
        } => {
            let g = out
                .generators
                .get_mut(*index)
                .ok_or_else(|| ModificationError::UnknownTarget(format!("generator {index}")))?;
            let pmin = finite(pmin_mw.unwrap_or(g.pmin_mw), "pmin_mw")?;
            let pmax = finite(pmax_mw.unwrap_or(g.pmax_mw), "pmax_mw")?;
            if pmin > pmax {
                return Err(ModificationError::InvalidPayload(format!(
                    "pmin {pmin} exceeds pmax {pmax}"
                )));
            }
            g.pmin_mw = pmin;
            g.pmax_mw = pmax;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::two_bus;
    use proptest::prelude::*;

    #[test]
    fn unknown_bus_is_rejected() {
        let m = Modification::new(ModKind::SetBusLoad {
            bus_id: 42,
            p_mw: 1.0,
            q_mvar: None,
        });
        assert_eq!(
            apply_modification(&two_bus(), &m),
            Err(ModificationError::UnknownTarget("bus 42".into()))
        );
    }

    #[test]
    fn double_outage_is_rejected() {
        let net = two_bus();
        let m = Modification::new(ModKind::BranchOutage { index: 0 });
        let once = apply_modification(&net, &m).unwrap();
        assert_eq!(
            apply_modification(&once, &m),
            Err(ModificationError::AlreadyOutOfService(0))
        );
    }

    #[test]
    fn gen_limit_ordering_enforced() {
        let m = Modification::new(ModKind::SetGenLimit {
            index: 0,
            pmin_mw: Some(600.0),
            pmax_mw: None,
        });
        assert!(matches!(
            apply_modification(&two_bus(), &m),
            Err(ModificationError::InvalidPayload(_))
        ));
    }

    fn arb_kind() -> impl Strategy<Value = ModKind> {
        prop_oneof![
            (-200.0f64..200.0, proptest::option::of(-50.0f64..50.0)).prop_map(|(p, q)| {
                ModKind::SetBusLoad {
                    bus_id: 2,
                    p_mw: p,
                    q_mvar: q,
                }
            }),
            (0.1f64..3.0).prop_map(|f| ModKind::ScaleBusLoad {
                bus_id: 2,
                factor: f
            }),
            Just(ModKind::BranchOutage { index: 0 }),
            (0.0f64..100.0, 100.0f64..900.0).prop_map(|(lo, hi)| ModKind::SetGenLimit {
                index: 0,
                pmin_mw: Some(lo),
                pmax_mw: Some(hi),
            }),
        ]
    }

    proptest! {
        #[test]
        fn inverse_restores_exactly(kind in arb_kind()) {
            let net = two_bus();
            let m = Modification::new(kind);
            let after = apply_modification(&net, &m).unwrap();
            let inv = m.inverse(&net).unwrap();
            prop_assert_eq!(apply_modification(&after, &inv).unwrap(), net);
        }

        #[test]
        fn application_is_pure(kind in arb_kind()) {
            let net = two_bus();
            let m = Modification::new(kind);
            let a = apply_modification(&net, &m).unwrap();
            let b = apply_modification(&net, &m).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(net, two_bus());
        }
    }
}

//! Limited real-time observability: which branch flows the system operator
//! measures, and how much those measurements move between scenarios.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BranchId, BranchKind, Network};
use crate::powerflow::PfSolution;

/// Label of the interconnection record, always observed.
pub const EXTERNAL_GRID: &str = "External Grid";

/// Which end of a branch carries the meter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementEnd {
    From,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskRule {
    /// Lines strictly longer than this are observed; `None` for a full mask.
    pub min_length_km: Option<f64>,
    pub measurement_end: MeasurementEnd,
}

/// Observable branches plus the interconnection. Measurement noise is not
/// modelled; observed values equal the solved flows.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityMask {
    branches: Vec<(BranchId, String)>,
    pub rule: MaskRule,
}

impl ObservabilityMask {
    /// Every branch observed (identity projection).
    pub fn full(net: &Network) -> Self {
        ObservabilityMask {
            branches: net.branches().iter().map(|b| (b.id, b.label())).collect(),
            rule: MaskRule {
                min_length_km: None,
                measurement_end: MeasurementEnd::From,
            },
        }
    }

    pub fn observable_branches(&self) -> BTreeSet<BranchId> {
        self.branches.iter().map(|(id, _)| *id).collect()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.branches
            .iter()
            .map(|(_, l)| l.as_str())
            .chain(std::iter::once(EXTERNAL_GRID))
    }
}

/// Lines longer than `min_length_km`, in branch id order.
pub fn build_mask(net: &Network, min_length_km: f64) -> Result<ObservabilityMask> {
    if !(min_length_km > 0.0) {
        return Err(Error::Validation(format!(
            "threshold must be positive, got {min_length_km}"
        )));
    }
    let mut branches: Vec<(BranchId, String)> = net
        .branches()
        .iter()
        .filter(|b| b.kind == BranchKind::Line && b.length() > min_length_km)
        .map(|b| (b.id, b.label()))
        .collect();
    branches.sort_by_key(|(id, _)| *id);
    Ok(ObservabilityMask {
        branches,
        rule: MaskRule {
            min_length_km: Some(min_length_km),
            measurement_end: MeasurementEnd::From,
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservedRecord {
    pub label: String,
    pub branch: Option<BranchId>,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Measured values: masked branch flows at the from-end, then the
/// interconnection exchange.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedState {
    pub records: Vec<ObservedRecord>,
}

pub fn observe(sol: &PfSolution, mask: &ObservabilityMask) -> Result<ObservedState> {
    if !sol.converged {
        return Err(Error::State("cannot observe a non-converged solution".into()));
    }
    let mut records = Vec::with_capacity(mask.branches.len() + 1);
    for (id, label) in &mask.branches {
        let f = sol
            .flow(*id)
            .ok_or_else(|| Error::Integrity(format!("masked branch {id} not in solution")))?;
        records.push(ObservedRecord {
            label: label.clone(),
            branch: Some(*id),
            p_mw: f.p_from_mw,
            q_mvar: f.q_from_mvar,
        });
    }
    records.push(ObservedRecord {
        label: EXTERNAL_GRID.to_string(),
        branch: None,
        p_mw: sol.slack_p_mw,
        q_mvar: sol.slack_q_mvar,
    });
    Ok(ObservedState { records })
}

/// Percentage change of one observed record; `None` when the base value is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordDelta {
    pub label: String,
    pub dp_percent: Option<f64>,
    pub dq_percent: Option<f64>,
}

fn percent_change(base: f64, alt: f64) -> Option<f64> {
    (base.abs() > 1e-12).then(|| 100.0 * (alt - base) / base)
}

pub fn compare_observed(base: &ObservedState, alt: &ObservedState) -> Result<Vec<RecordDelta>> {
    let same_records = base.records.len() == alt.records.len()
        && base
            .records
            .iter()
            .zip(&alt.records)
            .all(|(a, b)| a.label == b.label && a.branch == b.branch);
    if !same_records {
        return Err(Error::Validation("observed states use different masks".into()));
    }
    Ok(base
        .records
        .iter()
        .zip(&alt.records)
        .map(|(b, a)| RecordDelta {
            label: b.label.clone(),
            dp_percent: percent_change(b.p_mw, a.p_mw),
            dq_percent: percent_change(b.q_mvar, a.q_mvar),
        })
        .collect())
}

/// Two-decimal percentage, `undefined` for a zero base, no negative zero.
pub fn format_percent(v: Option<f64>) -> String {
    match v {
        None => "undefined".to_string(),
        Some(x) => {
            let s = format!("{x:.2}");
            if s == "-0.00" {
                "0.00".to_string()
            } else {
                s
            }
        }
    }
}

/// Rows of the `scenario,record,dP_percent,dQ_percent` report.
pub fn comparison_csv_rows(scenario: &str, deltas: &[RecordDelta]) -> String {
    deltas
        .iter()
        .map(|d| {
            format!(
                "{scenario},{},{},{}\n",
                d.label,
                format_percent(d.dp_percent),
                format_percent(d.dq_percent)
            )
        })
        .collect()
}

pub const COMPARISON_HEADER: &str = "scenario,record,dP_percent,dQ_percent\n";

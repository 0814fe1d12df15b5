use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::masks::MaskSet;
use crate::error::{check_dim, Error, Result};
use crate::solver::ObservationSet;

pub const DEFAULT_TAU: f64 = 0.6;

/// Outcome for one observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDecision {
    pub view_id: String,
    pub label: i32,
    /// Best-matching cluster, -1 when the mask overlaps no cluster.
    pub cluster: i32,
    pub iou: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskReport {
    pub decisions: Vec<MaskDecision>,
}

impl MaskReport {
    pub fn kept(&self) -> usize {
        self.decisions.iter().filter(|d| d.kept).count()
    }

    pub fn dropped(&self) -> usize {
        self.decisions.len() - self.kept()
    }

    /// `(view_id, label)` of every retained mask.
    pub fn kept_set(&self) -> std::collections::BTreeSet<(String, i32)> {
        self.decisions
            .iter()
            .filter(|d| d.kept)
            .map(|d| (d.view_id.clone(), d.label))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("view_id,label,iou,decision\n");
        for d in &self.decisions {
            let _ = writeln!(
                s,
                "{},{},{:.6},{}",
                d.view_id,
                d.label,
                d.iou,
                if d.kept { "kept" } else { "dropped" }
            );
        }
        s
    }
}

pub fn validate_tau(tau: f64) -> Result<()> {
    // tau = 0 is accepted as "no filtering"
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

/// Drop every observation mask whose best IoU with a projected cluster mask is below `tau`.
///
/// Decisions are made per (view, label); dropped masks become label -1.
pub fn filter_observations(b: &ObservationSet, masks: &MaskSet, tau: f64) -> Result<(ObservationSet, MaskReport)> {
    validate_tau(tau)?;
    let labels = b
        .labels()
        .ok_or_else(|| Error::invalid("mask filtering requires label-backed observations"))?;
    check_dim("mask views vs observation views", b.views().len(), masks.views().len())?;
    if masks.views() != b.views() {
        return Err(Error::invalid("mask set layout differs from observations"));
    }

    let per_view: Vec<(BTreeMap<i32, bool>, Vec<MaskDecision>)> = (0..b.views().len())
        .into_par_iter()
        .map(|v| {
            let view_id = &b.views()[v].view_id;
            let mut keep = BTreeMap::new();
            let mut out = Vec::new();
            for (label, (cluster, iou)) in masks.best_matches(v) {
                let kept = iou >= tau;
                keep.insert(label, kept);
                out.push(MaskDecision {
                    view_id: view_id.clone(),
                    label,
                    cluster,
                    iou,
                    kept,
                });
            }
            (keep, out)
        })
        .collect();

    let mut new_labels = labels.to_vec();
    let mut report = MaskReport::default();
    for (v, (keep, decisions)) in per_view.into_iter().enumerate() {
        for l in &mut new_labels[b.views()[v].rows()] {
            if *l >= 0 && !keep[l] {
                *l = -1;
            }
        }
        report.decisions.extend(decisions);
    }
    Ok((b.with_labels(new_labels)?, report))
}

//! Funnel statistics, kill rates, calibration and ground-truth scoring.
//!
//! Everything here is a pure function of candidate histories and ledgers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidate::{Candidate, EventKind, GateOutcome, LifecycleState, Stage};
use crate::state::CampaignState;
use crate::validation::cvss::Direction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerStage<T> {
    #[serde(rename = "A")]
    pub a: T,
    #[serde(rename = "B")]
    pub b: T,
    #[serde(rename = "C")]
    pub c: T,
    #[serde(rename = "D")]
    pub d: T,
}

impl<T: Copy> PerStage<T> {
    pub fn get(&self, s: Stage) -> T {
        match s {
            Stage::A => self.a,
            Stage::B => self.b,
            Stage::C => self.c,
            Stage::D => self.d,
        }
    }

    fn slot(&mut self, s: Stage) -> &mut T {
        match s {
            Stage::A => &mut self.a,
            Stage::B => &mut self.b,
            Stage::C => &mut self.c,
            Stage::D => &mut self.d,
        }
    }

    pub fn set(&mut self, s: Stage, v: T) {
        *self.slot(s) = v;
    }
}

impl PerStage<u64> {
    fn add(&mut self, s: Stage, n: u64) {
        *self.slot(s) += n;
    }

    pub fn is_monotone(&self) -> bool {
        self.a >= self.b && self.b >= self.c && self.c >= self.d
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WaveFunnel {
    pub wave: u32,
    pub entrants: PerStage<u64>,
    pub kills: PerStage<u64>,
    pub intake_rejected: u64,
    pub survivors: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub per_wave: Vec<WaveFunnel>,
    /// Sums of the per-wave counts (`wave` is 0).
    pub aggregate: WaveFunnel,
    /// Distinct candidates dispatched at each stage, summed over processing
    /// windows. Unlike per-wave entrants this need not decrease.
    pub merged_rosters: PerStage<u64>,
    pub kill_rate_overall: Option<f64>,
    pub kill_rate_by_stage: PerStage<Option<f64>>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Whole-percent display rounding, half away from zero.
pub fn percent(x: f64) -> u32 {
    (x * 100.0).round() as u32
}

/// Stages a candidate has entered, read from its history.
pub fn stages_entered(c: &Candidate) -> BTreeSet<Stage> {
    let mut out = BTreeSet::from([Stage::A]);
    for e in &c.history {
        match &e.kind {
            EventKind::Dispatched { stage, .. }
            | EventKind::VerdictRecorded { stage }
            | EventKind::GateDecided { stage, .. } => {
                out.insert(*stage);
            }
            EventKind::Validated { .. } => {
                out.insert(Stage::C);
            }
            _ => {}
        }
    }
    out
}

pub fn funnel(state: &CampaignState) -> FunnelReport {
    let mut waves: BTreeMap<u32, WaveFunnel> = BTreeMap::new();
    let mut windows: BTreeMap<(u32, Stage), BTreeSet<&str>> = BTreeMap::new();
    for cid in &state.order {
        let c = &state.candidates[cid];
        let w = waves.entry(c.origin.wave).or_insert_with(|| WaveFunnel {
            wave: c.origin.wave,
            ..WaveFunnel::default()
        });
        for s in stages_entered(c) {
            w.entrants.add(s, 1);
        }
        match &c.state {
            LifecycleState::Killed { stage, .. } => w.kills.add(*stage, 1),
            LifecycleState::DisclosureReady => w.survivors += 1,
            _ => w.in_flight += 1,
        }
        for e in &c.history {
            if let EventKind::Dispatched { stage, window, .. } = &e.kind {
                windows.entry((*window, *stage)).or_default().insert(cid);
            }
        }
    }
    for r in &state.intake_rejections {
        waves
            .entry(r.wave)
            .or_insert_with(|| WaveFunnel {
                wave: r.wave,
                ..WaveFunnel::default()
            })
            .intake_rejected += 1;
    }
    let per_wave: Vec<WaveFunnel> = waves.into_values().collect();
    let mut agg = WaveFunnel::default();
    for w in &per_wave {
        for s in Stage::ALL {
            agg.entrants.add(s, w.entrants.get(s));
            agg.kills.add(s, w.kills.get(s));
        }
        agg.intake_rejected += w.intake_rejected;
        agg.survivors += w.survivors;
        agg.in_flight += w.in_flight;
    }
    let mut merged = PerStage::<u64>::default();
    for ((_, s), set) in &windows {
        merged.add(*s, set.len() as u64);
    }
    let mut by_stage = PerStage::<Option<f64>>::default();
    for s in Stage::ALL {
        by_stage.set(s, ratio(agg.kills.get(s), agg.entrants.get(s)));
    }
    FunnelReport {
        kill_rate_overall: ratio(agg.kills.total(), agg.entrants.a),
        kill_rate_by_stage: by_stage,
        per_wave,
        aggregate: agg,
        merged_rosters: merged,
    }
}

/// Fraction of each stage's entrants killed at that stage; absent when no
/// candidate entered the stage.
pub fn stage_kill_rates(state: &CampaignState) -> PerStage<Option<f64>> {
    funnel(state).kill_rate_by_stage
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub down: u64,
    pub up: u64,
    pub unchanged: u64,
}

/// Direction of every Stage-C recalibration on a promoted candidate.
pub fn calibration_report(state: &CampaignState) -> CalibrationReport {
    let mut r = CalibrationReport::default();
    for d in &state.decisions {
        let promoted = matches!(d.outcome, GateOutcome::Promote | GateOutcome::PromoteProvisional);
        if d.stage != Stage::C || !promoted {
            continue;
        }
        match d.recalibration.as_ref().map(|x| x.direction) {
            Some(Direction::Down) => r.down += 1,
            Some(Direction::Up) => r.up += 1,
            Some(Direction::Unchanged) => r.unchanged += 1,
            None => {}
        }
    }
    r
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    /// True positives among DisclosureReady candidates; absent when none survived.
    pub precision: Option<f64>,
    /// Surviving share of ground-truth-true candidates; absent when there are none.
    pub recall: Option<f64>,
    pub false_kills: Vec<String>,
}

/// Score a campaign against ground-truth labels (`true` = real defect).
/// Candidates without a label are ignored.
pub fn precision_recall(state: &CampaignState, truth: &BTreeMap<String, bool>) -> PrecisionRecall {
    let (mut ready, mut ready_true, mut positives) = (0u64, 0u64, 0u64);
    let mut false_kills = vec![];
    for cid in &state.order {
        let Some(&is_true) = truth.get(cid) else {
            continue;
        };
        let c = &state.candidates[cid];
        positives += is_true as u64;
        match c.state {
            LifecycleState::DisclosureReady => {
                ready += 1;
                ready_true += is_true as u64;
            }
            LifecycleState::Killed { .. } if is_true => false_kills.push(cid.clone()),
            _ => {}
        }
    }
    PrecisionRecall {
        precision: ratio(ready_true, ready),
        recall: ratio(ready_true, positives),
        false_kills,
    }
}

fn rate(x: Option<f64>) -> String {
    x.map(|v| format!("{}%", percent(v))).unwrap_or_else(|| "-".into())
}

/// Plain-text funnel table.
pub fn render_table(report: &FunnelReport) -> String {
    let mut out = String::new();
    let agg = &report.aggregate;
    let _ = writeln!(out, "{:<8}{:>10}{:>10}{:>12}{:>10}", "stage", "entrants", "killed", "kill rate", "roster");
    for s in Stage::ALL {
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>10}{:>12}{:>10}",
            s.to_string(),
            agg.entrants.get(s),
            agg.kills.get(s),
            rate(report.kill_rate_by_stage.get(s)),
            report.merged_rosters.get(s)
        );
    }
    let _ = writeln!(
        out,
        "{:<8}{:>10}{:>10}{:>12}",
        "overall",
        agg.entrants.a,
        agg.kills.total(),
        rate(report.kill_rate_overall)
    );
    let _ = writeln!(
        out,
        "survivors {}  in flight {}  intake rejected {}",
        agg.survivors, agg.in_flight, agg.intake_rejected
    );
    if report.per_wave.len() > 1 {
        for w in &report.per_wave {
            let _ = writeln!(
                out,
                "wave {}: entrants {}/{}/{}/{} kills {}/{}/{}/{}",
                w.wave,
                w.entrants.a,
                w.entrants.b,
                w.entrants.c,
                w.entrants.d,
                w.kills.a,
                w.kills.b,
                w.kills.c,
                w.kills.d
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent(135.0 / 171.0), 79);
        assert_eq!(percent(25.0 / 30.0), 83);
        assert_eq!(percent(0.625), 63);
        assert_eq!(percent(64.0 / 171.0), 37);
    }

    #[test]
    fn empty_stage_rate_is_absent() {
        let state = CampaignState::default();
        let r = funnel(&state);
        assert_eq!(r.kill_rate_overall, None);
        assert_eq!(r.kill_rate_by_stage.get(Stage::B), None);
        assert_eq!(calibration_report(&state), CalibrationReport::default());
    }
}

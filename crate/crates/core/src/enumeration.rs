//! Constructive enumeration of terminal trial outcomes.
//!
//! Outcomes are grown stage by stage from the active arm set. At each stage
//! only code grids that some vector of arm means can realise are kept; that is
//! decided exactly by a system of difference constraints (`x_a - x_b` inside
//! an open interval per pair) via Floyd-Warshall cycle detection. Because each
//! stage adds independent full-support data, a trajectory has positive
//! probability iff every one of its stage grids is feasible.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::correlation::information;
use crate::error::{Error, Result};
use crate::model::{
    active_set_transition, eta, hypothesis_family, ArmSet, BoundarySet, HypothesisIndex,
    OutcomeConfiguration, RegionCode, StopReason, TrialDesign, TrialLayout,
};
use crate::mvn::Rectangle;

/// A cycle of the constraint graph with weight at or below this is infeasible.
const CYCLE_TOLERANCE: f64 = 1e-12;

/// Size guards for enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnumerationLimits {
    /// Largest `eta * J` accepted.
    pub max_cells: usize,
    /// Largest family size accepted.
    pub max_configurations: usize,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            max_cells: 40,
            max_configurations: 2_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FamilyKind {
    /// Every terminal outcome.
    AllOutcomes,
    /// Outcomes in which `relevant` is the only survivor.
    LfcPower { relevant: usize },
    /// Outcomes in which exactly `relevant` survives.
    MultiRelevant { relevant: ArmSet },
}

impl FamilyKind {
    fn required(self) -> Option<ArmSet> {
        match self {
            FamilyKind::AllOutcomes => None,
            FamilyKind::LfcPower { relevant } => Some(ArmSet::from_arms([relevant])),
            FamilyKind::MultiRelevant { relevant } => Some(relevant),
        }
    }
}

/// How a trial ended and which arms were recruited for how long.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TerminalProfile {
    pub survivors: ArmSet,
    /// Zero-based index of the last analysis.
    pub stop_stage: usize,
    pub reason: StopReason,
    /// `last_stage[k]`: zero-based last stage in which arm `k` recruited.
    pub last_stage: Vec<usize>,
}

impl TerminalProfile {
    /// `N = sum_k n_{k, last_stage[k]}`.
    pub fn sample_size(&self, layout: &TrialLayout) -> u64 {
        self.last_stage
            .iter()
            .enumerate()
            .map(|(k, &j)| layout.group_size(k, j) as u64)
            .sum()
    }
}

/// Replays a configuration through the decision rules.
///
/// Rejects grids that do not follow them: codes outside the active set other
/// than `a6`, `a7` on a pair without a newly dropped arm, or anything but `a6`
/// after the trial has ended.
pub fn terminal_profile(arms: usize, config: &OutcomeConfiguration) -> Result<TerminalProfile> {
    if config.eta() != eta(arms) {
        return Err(Error::Grid(format!(
            "configuration has {} hypotheses, expected {}",
            config.eta(),
            eta(arms)
        )));
    }
    let stages = config.stages();
    let mut active = ArmSet::full(arms);
    let mut last_stage = vec![0usize; arms];
    for j in 0..stages {
        let codes = config.stage(j);
        let t = active_set_transition(arms, active, codes, true)?;
        for pair in hypothesis_family(arms) {
            if codes[pair.position(arms)] == RegionCode::A7
                && !(t.dropped.contains(pair.k) || t.dropped.contains(pair.k_star))
            {
                return Err(Error::Grid(format!(
                    "pair {pair} coded a7 at stage {} but neither arm is dropped",
                    j + 1
                )));
            }
        }
        for k in active.iter() {
            last_stage[k] = j;
        }
        let reason = if j + 1 == stages && t.stop == StopReason::Continue {
            StopReason::SimilarityStop
        } else {
            t.stop
        };
        if reason != StopReason::Continue {
            for later in j + 1..stages {
                if config.stage(later).iter().any(|&c| c != RegionCode::A6) {
                    return Err(Error::Grid(format!(
                        "trial ended at stage {} but stage {} is coded",
                        j + 1,
                        later + 1
                    )));
                }
            }
            return Ok(TerminalProfile {
                survivors: t.survivors,
                stop_stage: j,
                reason,
                last_stage,
            });
        }
        active = t.survivors;
    }
    unreachable!("the final stage always ends the trial")
}

/// A family of outcome configurations with their terminal profiles, in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigurationFamily {
    kind: FamilyKind,
    arms: usize,
    configs: Vec<OutcomeConfiguration>,
    profiles: Vec<TerminalProfile>,
}

impl ConfigurationFamily {
    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[OutcomeConfiguration] {
        &self.configs
    }

    pub fn profiles(&self) -> &[TerminalProfile] {
        &self.profiles
    }

    /// Integration rectangles over all `eta * J` coordinates, stage-major.
    pub fn rectangles(&self, boundaries: &BoundarySet) -> Vec<Rectangle> {
        self.configs
            .iter()
            .map(|c| config_rectangle(c, boundaries))
            .collect()
    }

    pub fn sample_sizes(&self, layout: &TrialLayout) -> Vec<u64> {
        self.profiles.iter().map(|p| p.sample_size(layout)).collect()
    }

    /// One row per configuration, one column per coded cell.
    pub fn to_csv(&self) -> String {
        let pairs = hypothesis_family(self.arms);
        let stages = self.configs.first().map_or(0, |c| c.stages());
        let mut out = String::from("config");
        for j in 0..stages {
            for p in &pairs {
                let _ = write!(out, ",{}_{}_stage{}", p.k + 1, p.k_star + 1, j + 1);
            }
        }
        out.push_str(",survivors,stop_stage\n");
        for (i, (c, p)) in self.configs.iter().zip(&self.profiles).enumerate() {
            let _ = write!(out, "{}", i + 1);
            for code in c.codes() {
                let _ = write!(out, ",{code}");
            }
            let survivors: Vec<String> = p.survivors.iter().map(|k| format!("{}", k + 1)).collect();
            let _ = writeln!(out, ",{},{}", survivors.join(" "), p.stop_stage + 1);
        }
        out
    }
}

/// Bounds of every cell of `config`; `a6` cells are unbounded.
pub fn config_rectangle(config: &OutcomeConfiguration, boundaries: &BoundarySet) -> Rectangle {
    let eta = config.eta();
    let mut lower = Vec::with_capacity(config.codes().len());
    let mut upper = Vec::with_capacity(config.codes().len());
    for (i, code) in config.codes().iter().enumerate() {
        let j = i / eta;
        let (lo, hi) = code.bounds(boundaries.outer[j], boundaries.inner[j]);
        lower.push(lo);
        upper.push(hi);
    }
    Rectangle { lower, upper }
}

/// One feasible grid for the arms active at a stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagePattern {
    /// One code per hypothesis of the full trial; pairs outside the active set are `a6`.
    pub codes: Vec<RegionCode>,
    pub dropped: ArmSet,
    pub survivors: ArmSet,
    pub stop: StopReason,
}

/// All decision-consistent code grids for `active` at `stage` that a vector
/// of arm means can realise.
///
/// With `similarity_test` false (or `u* = 0`) the non-significant cells are
/// `a8`; otherwise they split into `a2`, `a3`, `a4`. Cells of pairs involving
/// an arm dropped at this stage are `a7`. Codes with empty intervals are
/// skipped.
pub fn feasible_stage_patterns(
    layout: &TrialLayout,
    stage: usize,
    active: ArmSet,
    boundaries: &BoundarySet,
    similarity_test: bool,
) -> Result<Vec<StagePattern>> {
    let arms = layout.arms();
    if active.len() < 2 {
        return Err(Error::Grid(format!("active set {active} has fewer than 2 arms")));
    }
    if stage >= layout.stages() || boundaries.stages() != layout.stages() {
        return Err(Error::Grid(format!("stage {} outside the design", stage + 1)));
    }
    let u = boundaries.outer[stage];
    let us = boundaries.inner[stage];
    let final_stage = stage + 1 == layout.stages();
    let split = (similarity_test || final_stage) && us > 0.0;

    let pairs: Vec<HypothesisIndex> = active.pairs().collect();
    let arm_list: Vec<usize> = active.iter().collect();
    let node = |arm: usize| arm_list.iter().position(|&a| a == arm).unwrap();
    let scales: Vec<f64> = pairs
        .iter()
        .map(|&p| 1.0 / libm::sqrt(information(layout, p, stage)))
        .collect();
    let edges = Edges {
        nodes: arm_list.len(),
        pairs: pairs.iter().map(|p| (node(p.k), node(p.k_star))).collect(),
        scales,
    };

    let nonempty = |c: RegionCode| {
        let (lo, hi) = c.bounds(u, us);
        lo < hi
    };
    let first: Vec<RegionCode> = [RegionCode::A1, RegionCode::A7, RegionCode::A5]
        .into_iter()
        .filter(|&c| nonempty(c))
        .collect();
    let inner_codes: Vec<RegionCode> = [RegionCode::A2, RegionCode::A3, RegionCode::A4]
        .into_iter()
        .filter(|&c| nonempty(c))
        .collect();

    let mut coarse = Vec::new();
    let mut partial = Vec::with_capacity(pairs.len());
    search(&edges, u, us, &|_| first.clone(), &mut partial, &mut coarse);

    let mut out = Vec::new();
    for assignment in coarse {
        let mut dropped = ArmSet::empty();
        for (p, &c) in pairs.iter().zip(&assignment) {
            match c {
                RegionCode::A1 => dropped.insert(p.k),
                RegionCode::A5 => dropped.insert(p.k_star),
                _ => {}
            }
        }
        let refine = |i: usize| -> Vec<RegionCode> {
            let c = assignment[i];
            let p = pairs[i];
            if c != RegionCode::A7 {
                vec![c]
            } else if dropped.contains(p.k) || dropped.contains(p.k_star) {
                vec![RegionCode::A7]
            } else if split {
                inner_codes.clone()
            } else {
                vec![RegionCode::A8]
            }
        };
        let mut fine = Vec::new();
        let mut partial = Vec::with_capacity(pairs.len());
        search(&edges, u, us, &refine, &mut partial, &mut fine);
        for assignment in fine {
            let mut codes = vec![RegionCode::A6; eta(arms)];
            for (p, &c) in pairs.iter().zip(&assignment) {
                codes[p.position(arms)] = c;
            }
            let t = active_set_transition(arms, active, &codes, true)?;
            out.push(StagePattern {
                codes,
                dropped: t.dropped,
                survivors: t.survivors,
                stop: t.stop,
            });
        }
    }
    Ok(out)
}

struct Edges {
    nodes: usize,
    /// Node indices `(k, k*)` of each pair.
    pairs: Vec<(usize, usize)>,
    /// Mean-scale width of one unit of each pair's statistic.
    scales: Vec<f64>,
}

fn search(
    edges: &Edges,
    u: f64,
    us: f64,
    choices: &dyn Fn(usize) -> Vec<RegionCode>,
    partial: &mut Vec<RegionCode>,
    out: &mut Vec<Vec<RegionCode>>,
) {
    let i = partial.len();
    if i == edges.pairs.len() {
        out.push(partial.clone());
        return;
    }
    for c in choices(i) {
        partial.push(c);
        if feasible(edges, partial, u, us) {
            search(edges, u, us, choices, partial, out);
        }
        partial.pop();
    }
}

/// Whether some arm means satisfy the interval of every coded pair.
fn feasible(edges: &Edges, codes: &[RegionCode], u: f64, us: f64) -> bool {
    let m = edges.nodes;
    let mut d = vec![f64::INFINITY; m * m];
    for i in 0..m {
        d[i * m + i] = 0.0;
    }
    for (idx, &code) in codes.iter().enumerate() {
        let (a, b) = edges.pairs[idx];
        let (lo, hi) = code.bounds(u, us);
        let s = edges.scales[idx];
        // x_a - x_b < hi: edge b -> a; x_b - x_a < -lo: edge a -> b.
        if hi < f64::INFINITY {
            let w = &mut d[b * m + a];
            *w = w.min(hi * s);
        }
        if lo > f64::NEG_INFINITY {
            let w = &mut d[a * m + b];
            *w = w.min(-lo * s);
        }
    }
    for k in 0..m {
        for i in 0..m {
            let dik = d[i * m + k];
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..m {
                let via = dik + d[k * m + j];
                if via < d[i * m + j] {
                    d[i * m + j] = via;
                }
            }
        }
    }
    (0..m).all(|i| d[i * m + i] > -CYCLE_TOLERANCE)
        && (0..m).all(|i| (0..m).all(|j| i == j || d[i * m + j] + d[j * m + i] > CYCLE_TOLERANCE))
}

struct Builder<'a> {
    layout: &'a TrialLayout,
    boundaries: &'a BoundarySet,
    honor_inner: bool,
    kind: FamilyKind,
    limits: EnumerationLimits,
    cache: BTreeMap<(usize, u32), Vec<StagePattern>>,
    configs: Vec<OutcomeConfiguration>,
}

impl Builder<'_> {
    fn patterns(&mut self, stage: usize, active: ArmSet) -> Result<&[StagePattern]> {
        let key = (stage, active.bits());
        if !self.cache.contains_key(&key) {
            let final_stage = stage + 1 == self.layout.stages();
            let similarity = self.honor_inner || final_stage;
            let p = feasible_stage_patterns(self.layout, stage, active, self.boundaries, similarity)?;
            self.cache.insert(key, p);
        }
        Ok(&self.cache[&key])
    }

    fn extend(&mut self, stage: usize, active: ArmSet, prefix: &mut Vec<RegionCode>) -> Result<()> {
        let required = self.kind.required();
        let stages = self.layout.stages();
        let eta = self.layout.eta();
        let patterns: Vec<StagePattern> = self.patterns(stage, active)?.to_vec();
        for pat in patterns {
            if let Some(req) = required {
                if !req.is_subset(pat.survivors) {
                    continue;
                }
            }
            let len = prefix.len();
            prefix.extend_from_slice(&pat.codes);
            let terminal = pat.stop != StopReason::Continue || stage + 1 == stages;
            if terminal {
                if required.map_or(true, |req| req == pat.survivors) {
                    if self.configs.len() >= self.limits.max_configurations {
                        return Err(Error::TooLarge {
                            what: "outcome configurations",
                            count: self.configs.len() as u64 + 1,
                            limit: self.limits.max_configurations as u64,
                        });
                    }
                    let mut codes = prefix.clone();
                    codes.resize(stages * eta, RegionCode::A6);
                    self.configs.push(OutcomeConfiguration::new(eta, codes)?);
                }
            } else {
                self.extend(stage + 1, pat.survivors, prefix)?;
            }
            prefix.truncate(len);
        }
        Ok(())
    }
}

/// Builds a family for the given design.
///
/// With `honor_inner` false the similarity stop is never taken before the
/// final analysis, as if every interim inner boundary were zero.
pub fn build_family(
    design: &TrialDesign,
    kind: FamilyKind,
    honor_inner: bool,
    limits: EnumerationLimits,
) -> Result<ConfigurationFamily> {
    let layout = &design.layout;
    let arms = layout.arms();
    let cells = layout.eta() * layout.stages();
    if cells > limits.max_cells {
        return Err(Error::TooLarge {
            what: "hypotheses times stages",
            count: cells as u64,
            limit: limits.max_cells as u64,
        });
    }
    match kind {
        FamilyKind::AllOutcomes => {}
        FamilyKind::LfcPower { relevant } => {
            if relevant >= arms {
                return Err(Error::Invalid(format!("relevant arm {} out of range", relevant + 1)));
            }
        }
        FamilyKind::MultiRelevant { relevant } => {
            if relevant.is_empty() || !relevant.is_subset(ArmSet::full(arms)) {
                return Err(Error::Invalid(format!(
                    "relevant set {relevant} must be a non-empty subset of the arms"
                )));
            }
        }
    }
    let mut builder = Builder {
        layout,
        boundaries: &design.boundaries,
        honor_inner,
        kind,
        limits,
        cache: BTreeMap::new(),
        configs: Vec::new(),
    };
    builder.extend(0, ArmSet::full(arms), &mut Vec::new())?;
    let mut configs = builder.configs;
    configs.sort();
    let profiles = configs
        .iter()
        .map(|c| terminal_profile(arms, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfigurationFamily {
        kind,
        arms,
        configs,
        profiles,
    })
}

/// Every terminal outcome, honouring similarity stops.
pub fn build_all_outcomes(design: &TrialDesign) -> Result<ConfigurationFamily> {
    build_family(design, FamilyKind::AllOutcomes, true, EnumerationLimits::default())
}

/// Outcomes in which `relevant` alone survives.
pub fn build_lfc_power(design: &TrialDesign, relevant: usize) -> Result<ConfigurationFamily> {
    build_family(
        design,
        FamilyKind::LfcPower { relevant },
        true,
        EnumerationLimits::default(),
    )
}

/// Outcomes in which exactly `relevant` survives.
pub fn build_multi_relevant(design: &TrialDesign, relevant: ArmSet) -> Result<ConfigurationFamily> {
    build_family(
        design,
        FamilyKind::MultiRelevant { relevant },
        true,
        EnumerationLimits::default(),
    )
}

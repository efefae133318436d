//! Domain types shared by every module and the stage-wise decision rules.
//!
//! Arms and stages are zero-based internally; `Display` impls print the
//! one-based labels used in trial reports.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// A set of arms stored as a bit mask (at most 32 arms).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ArmSet(u32);

impl ArmSet {
    pub const MAX_ARMS: usize = 32;

    pub const fn empty() -> Self {
        ArmSet(0)
    }

    pub fn full(arms: usize) -> Self {
        debug_assert!(arms <= Self::MAX_ARMS);
        if arms == 32 {
            ArmSet(u32::MAX)
        } else {
            ArmSet((1u32 << arms) - 1)
        }
    }

    pub fn from_arms<I: IntoIterator<Item = usize>>(arms: I) -> Self {
        let mut set = ArmSet::empty();
        for arm in arms {
            set.insert(arm);
        }
        set
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn from_bits(bits: u32) -> Self {
        ArmSet(bits)
    }

    #[inline]
    pub fn contains(self, arm: usize) -> bool {
        arm < 32 && self.0 & (1 << arm) != 0
    }

    #[inline]
    pub fn insert(&mut self, arm: usize) {
        self.0 |= 1 << arm;
    }

    #[inline]
    pub fn remove(&mut self, arm: usize) {
        self.0 &= !(1 << arm);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ArmSet) -> ArmSet {
        ArmSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ArmSet) -> ArmSet {
        ArmSet(self.0 & other.0)
    }

    pub fn difference(self, other: ArmSet) -> ArmSet {
        ArmSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: ArmSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |&arm| bits & (1 << arm) != 0)
    }

    /// Ordered pairs `(k, k*)` with `k < k*`, both in the set.
    pub fn pairs(self) -> impl Iterator<Item = HypothesisIndex> {
        let arms: Vec<usize> = self.iter().collect();
        let mut out = Vec::with_capacity(arms.len() * arms.len().saturating_sub(1) / 2);
        for (i, &k) in arms.iter().enumerate() {
            for &k_star in &arms[i + 1..] {
                out.push(HypothesisIndex { k, k_star });
            }
        }
        out.into_iter()
    }
}

impl fmt::Debug for ArmSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ArmSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, arm) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", arm + 1)?;
        }
        f.write_str("}")
    }
}

/// Identifier of the null hypothesis comparing arm `k` with arm `k_star`, `k < k_star`.
///
/// The statistic for the pair is oriented `mean(k) - mean(k_star)`: a large
/// positive value drops `k_star`, a large negative value drops `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisIndex {
    pub k: usize,
    pub k_star: usize,
}

impl HypothesisIndex {
    pub fn new(k: usize, k_star: usize) -> Result<Self> {
        if k >= k_star {
            return Err(Error::Invalid(format!(
                "hypothesis index needs k < k*, got ({}, {})",
                k + 1,
                k_star + 1
            )));
        }
        Ok(HypothesisIndex { k, k_star })
    }

    /// Lexicographic position among the `K(K-1)/2` pairs of a `K`-arm trial.
    #[inline]
    pub fn position(self, arms: usize) -> usize {
        self.k * (2 * arms - self.k - 1) / 2 + (self.k_star - self.k - 1)
    }

    pub fn involves(self, arm: usize) -> bool {
        self.k == arm || self.k_star == arm
    }
}

impl fmt::Display for HypothesisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k + 1, self.k_star + 1)
    }
}

/// All hypothesis indices of a `arms`-arm trial in lexicographic order.
pub fn hypothesis_family(arms: usize) -> Vec<HypothesisIndex> {
    ArmSet::full(arms).pairs().collect()
}

/// Number of pairwise hypotheses, `K(K-1)/2`.
pub fn eta(arms: usize) -> usize {
    arms * arms.saturating_sub(1) / 2
}

/// Arms, stages and cumulative group sizes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "LayoutRepr", try_from = "LayoutRepr"))]
pub struct TrialLayout {
    arms: usize,
    stages: usize,
    /// `group_sizes[k][j]`: patients on arm `k` by the end of stage `j`.
    group_sizes: Vec<Vec<u32>>,
}

/// Serialised form: the group sizes alone, validated on the way in.
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutRepr {
    group_sizes: Vec<Vec<u32>>,
}

#[cfg(feature = "serde")]
impl From<TrialLayout> for LayoutRepr {
    fn from(layout: TrialLayout) -> Self {
        LayoutRepr {
            group_sizes: layout.group_sizes,
        }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<LayoutRepr> for TrialLayout {
    type Error = Error;

    fn try_from(repr: LayoutRepr) -> Result<Self> {
        TrialLayout::new(repr.group_sizes)
    }
}

impl TrialLayout {
    pub fn new(group_sizes: Vec<Vec<u32>>) -> Result<Self> {
        let arms = group_sizes.len();
        if arms < 2 {
            return Err(Error::Layout(format!("need at least 2 arms, got {arms}")));
        }
        if arms > ArmSet::MAX_ARMS {
            return Err(Error::Layout(format!("at most {} arms supported", ArmSet::MAX_ARMS)));
        }
        let stages = group_sizes[0].len();
        if stages == 0 {
            return Err(Error::Layout("need at least 1 stage".into()));
        }
        for (k, sizes) in group_sizes.iter().enumerate() {
            if sizes.len() != stages {
                return Err(Error::Layout(format!(
                    "arm {} has {} stages, expected {stages}",
                    k + 1,
                    sizes.len()
                )));
            }
            if sizes[0] == 0 {
                return Err(Error::Layout(format!("arm {} has an empty first stage", k + 1)));
            }
            if sizes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Layout(format!(
                    "cumulative sizes of arm {} must increase strictly",
                    k + 1
                )));
            }
        }
        Ok(TrialLayout {
            arms,
            stages,
            group_sizes,
        })
    }

    /// `n` patients per arm per stage.
    pub fn equal(arms: usize, stages: usize, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::Layout("group size must be positive".into()));
        }
        let sizes = (1..=stages as u32).map(|j| j * n).collect::<Vec<_>>();
        TrialLayout::new(alloc::vec![sizes; arms])
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn eta(&self) -> usize {
        eta(self.arms)
    }

    pub fn group_size(&self, arm: usize, stage: usize) -> u32 {
        self.group_sizes[arm][stage]
    }

    pub fn group_sizes(&self) -> &[Vec<u32>] {
        &self.group_sizes
    }

    /// `r_{k,j} = n_{k,j} / n_{1,1}`.
    pub fn allocation_ratio(&self, arm: usize, stage: usize) -> f64 {
        self.group_sizes[arm][stage] as f64 / self.group_sizes[0][0] as f64
    }

    /// True when every arm has the same cumulative sizes.
    pub fn is_equal_allocation(&self) -> bool {
        self.group_sizes.iter().all(|s| *s == self.group_sizes[0])
    }

    pub fn hypotheses(&self) -> Vec<HypothesisIndex> {
        hypothesis_family(self.arms)
    }

    /// `max(N) = sum_k n_{k,J}`.
    pub fn max_n(&self) -> u64 {
        self.group_sizes
            .iter()
            .map(|s| s[self.stages - 1] as u64)
            .sum()
    }

    /// Information fractions of the first comparison, `I_j / I_J`.
    pub fn information_fractions(&self) -> Vec<f64> {
        let pair = HypothesisIndex { k: 0, k_star: 1 };
        let last = crate::correlation::information(self, pair, self.stages - 1);
        (0..self.stages)
            .map(|j| crate::correlation::information(self, pair, j) / last)
            .collect()
    }
}

/// Outer (rejection) and inner (similarity) boundaries on the z scale.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundarySet {
    #[cfg_attr(feature = "serde", serde(with = "extended_reals"))]
    pub outer: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(with = "extended_reals"))]
    pub inner: Vec<f64>,
}

impl BoundarySet {
    pub fn new(outer: Vec<f64>, inner: Vec<f64>) -> Result<Self> {
        let set = BoundarySet { outer, inner };
        set.validate()?;
        Ok(set)
    }

    pub fn stages(&self) -> usize {
        self.outer.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer.is_empty() || self.outer.len() != self.inner.len() {
            return Err(Error::Boundary {
                stage: 0,
                reason: format!(
                    "outer and inner need the same non-zero length, got {} and {}",
                    self.outer.len(),
                    self.inner.len()
                ),
            });
        }
        let last = self.outer.len() - 1;
        for (j, (&u, &us)) in self.outer.iter().zip(&self.inner).enumerate() {
            let fail = |reason: String| Error::Boundary { stage: j + 1, reason };
            if u.is_nan() || us.is_nan() || u < 0.0 || us < 0.0 {
                return Err(fail(format!("boundaries must be non-negative, got u={u}, u*={us}")));
            }
            if us > u {
                return Err(fail(format!("inner {us} exceeds outer {u}")));
            }
            if j == last && us != u {
                return Err(fail(format!("final stage must close: u={u}, u*={us}")));
            }
        }
        Ok(())
    }
}

/// Treatment effect of each arm on the standardised (unit observation variance) scale.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffectConfiguration {
    pub psi: Vec<f64>,
}

impl EffectConfiguration {
    pub fn new(psi: Vec<f64>) -> Self {
        EffectConfiguration { psi }
    }

    pub fn global_null(arms: usize) -> Self {
        EffectConfiguration {
            psi: alloc::vec![0.0; arms],
        }
    }

    /// Least favourable configuration: `relevant` is `theta` ahead of the rest.
    pub fn lfc(arms: usize, relevant: usize, theta: f64) -> Self {
        Self::with_relevant(arms, ArmSet::from_arms([relevant]), theta)
    }

    /// The first `count` arms are `theta` ahead (`Θ_count` in trial reports).
    pub fn leading(arms: usize, count: usize, theta: f64) -> Self {
        Self::with_relevant(arms, ArmSet::from_arms(0..count.min(arms)), theta)
    }

    pub fn with_relevant(arms: usize, relevant: ArmSet, theta: f64) -> Self {
        EffectConfiguration {
            psi: (0..arms)
                .map(|k| if relevant.contains(k) { theta } else { 0.0 })
                .collect(),
        }
    }

    pub fn arms(&self) -> usize {
        self.psi.len()
    }

    /// Arms attaining the largest effect.
    pub fn best_arms(&self) -> ArmSet {
        let max = self.psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ArmSet::from_arms((0..self.psi.len()).filter(|&k| self.psi[k] == max))
    }

    pub(crate) fn check(&self, arms: usize) -> Result<()> {
        if self.psi.len() != arms {
            return Err(Error::Effects(format!(
                "expected {arms} effects, got {}",
                self.psi.len()
            )));
        }
        if self.psi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Effects("effects must be finite".into()));
        }
        Ok(())
    }
}

/// A fully specified trial design.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialDesign {
    pub layout: TrialLayout,
    pub boundaries: BoundarySet,
    /// Whether the similarity stop is mandatory and credited in the error rate.
    pub binding: bool,
}

impl TrialDesign {
    pub fn new(layout: TrialLayout, boundaries: BoundarySet, binding: bool) -> Result<Self> {
        boundaries.validate()?;
        if boundaries.stages() != layout.stages() {
            return Err(Error::Boundary {
                stage: 0,
                reason: format!(
                    "{} boundary stages for a {}-stage layout",
                    boundaries.stages(),
                    layout.stages()
                ),
            });
        }
        Ok(TrialDesign {
            layout,
            boundaries,
            binding,
        })
    }
}

/// Interval class of one statistic at one analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RegionCode {
    /// `(-inf, -u)`: `k` is inferior to `k*`.
    A1,
    /// `(-u, -u*)`
    A2,
    /// `(-u*, u*)`: similar.
    A3,
    /// `(u*, u)`
    A4,
    /// `(u, inf)`: `k*` is inferior to `k`.
    A5,
    /// Not tested any more.
    A6,
    /// `(-u, u)` for a pair involving an arm dropped at this analysis.
    A7,
    /// `(-u, u)` at a stage without a similarity test.
    A8,
}

impl RegionCode {
    pub const ALL: [RegionCode; 8] = [
        RegionCode::A1,
        RegionCode::A2,
        RegionCode::A3,
        RegionCode::A4,
        RegionCode::A5,
        RegionCode::A6,
        RegionCode::A7,
        RegionCode::A8,
    ];

    /// Interval `(lower, upper)` for outer boundary `u` and inner boundary `u*`.
    pub fn bounds(self, outer: f64, inner: f64) -> (f64, f64) {
        match self {
            RegionCode::A1 => (f64::NEG_INFINITY, -outer),
            RegionCode::A2 => (-outer, -inner),
            RegionCode::A3 => (-inner, inner),
            RegionCode::A4 => (inner, outer),
            RegionCode::A5 => (outer, f64::INFINITY),
            RegionCode::A6 => (f64::NEG_INFINITY, f64::INFINITY),
            RegionCode::A7 | RegionCode::A8 => (-outer, outer),
        }
    }

    pub fn is_significant(self) -> bool {
        matches!(self, RegionCode::A1 | RegionCode::A5)
    }

    /// Region of an observed statistic (strict inequalities; ties fall inside).
    pub fn classify(z: f64, outer: f64, inner: f64) -> RegionCode {
        if z < -outer {
            RegionCode::A1
        } else if z > outer {
            RegionCode::A5
        } else if inner == 0.0 {
            RegionCode::A8
        } else if z <= -inner {
            RegionCode::A2
        } else if z >= inner {
            RegionCode::A4
        } else {
            RegionCode::A3
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RegionCode::A1 => "a1",
            RegionCode::A2 => "a2",
            RegionCode::A3 => "a3",
            RegionCode::A4 => "a4",
            RegionCode::A5 => "a5",
            RegionCode::A6 => "a6",
            RegionCode::A7 => "a7",
            RegionCode::A8 => "a8",
        }
    }
}

impl fmt::Display for RegionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Region codes for every hypothesis at every stage, stored stage-major.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeConfiguration {
    eta: usize,
    codes: Vec<RegionCode>,
}

impl OutcomeConfiguration {
    pub fn new(eta: usize, codes: Vec<RegionCode>) -> Result<Self> {
        if eta == 0 || codes.is_empty() || codes.len() % eta != 0 {
            return Err(Error::Grid(format!(
                "{} codes do not form a grid of {eta} hypotheses",
                codes.len()
            )));
        }
        Ok(OutcomeConfiguration { eta, codes })
    }

    pub fn eta(&self) -> usize {
        self.eta
    }

    pub fn stages(&self) -> usize {
        self.codes.len() / self.eta
    }

    pub fn codes(&self) -> &[RegionCode] {
        &self.codes
    }

    pub fn stage(&self, stage: usize) -> &[RegionCode] {
        &self.codes[stage * self.eta..(stage + 1) * self.eta]
    }

    pub fn code(&self, position: usize, stage: usize) -> RegionCode {
        self.codes[stage * self.eta + position]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    Continue,
    SimilarityStop,
    SingleSurvivor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub dropped: ArmSet,
    pub survivors: ArmSet,
    pub stop: StopReason,
}

/// Applies one analysis to the arms active at its start.
///
/// `stage_codes` holds one code per hypothesis of the `arms`-arm trial; pairs
/// within `active` must be coded and every other pair must be `A6`. An arm is
/// dropped when any comparison against an arm active at the start of the
/// stage declares it inferior, even if that arm is itself dropped. With
/// `honor_inner`, the trial stops for similarity when at least two arms
/// survive and every comparison among the survivors is `A3`.
pub fn active_set_transition(
    arms: usize,
    active: ArmSet,
    stage_codes: &[RegionCode],
    honor_inner: bool,
) -> Result<Transition> {
    if active.len() < 2 {
        return Err(Error::Grid(format!("active set {active} has fewer than 2 arms")));
    }
    if stage_codes.len() != eta(arms) {
        return Err(Error::Grid(format!(
            "{} codes for {} hypotheses",
            stage_codes.len(),
            eta(arms)
        )));
    }
    let mut dropped = ArmSet::empty();
    for pair in hypothesis_family(arms) {
        let code = stage_codes[pair.position(arms)];
        let within = active.contains(pair.k) && active.contains(pair.k_star);
        match (within, code) {
            (false, RegionCode::A6) => {}
            (false, other) => {
                return Err(Error::Grid(format!(
                    "pair {pair} is outside active set {active} but coded {other}"
                )))
            }
            (true, RegionCode::A6) => {
                return Err(Error::Grid(format!(
                    "pair {pair} within active set {active} is coded a6"
                )))
            }
            (true, RegionCode::A1) => dropped.insert(pair.k),
            (true, RegionCode::A5) => dropped.insert(pair.k_star),
            (true, _) => {}
        }
    }
    let survivors = active.difference(dropped);
    if survivors.is_empty() {
        return Err(Error::Grid(format!("every arm of {active} is declared inferior")));
    }
    let stop = if survivors.len() == 1 {
        StopReason::SingleSurvivor
    } else if honor_inner
        && survivors
            .pairs()
            .all(|p| stage_codes[p.position(arms)] == RegionCode::A3)
    {
        StopReason::SimilarityStop
    } else {
        StopReason::Continue
    };
    Ok(Transition {
        dropped,
        survivors,
        stop,
    })
}

#[cfg(feature = "serde")]
pub(crate) mod extended_reals {
    //! Boundary vectors may hold `inf`; JSON has no literal for it.
    use alloc::vec::Vec;

    use serde::de::{self, Deserializer, SeqAccess, Visitor};
    use serde::ser::{SerializeSeq, Serializer};
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(alloc::string::String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for &v in values {
            if v == f64::INFINITY {
                seq.serialize_element("inf")?;
            } else if v == f64::NEG_INFINITY {
                seq.serialize_element("-inf")?;
            } else {
                seq.serialize_element(&v)?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
                f.write_str("a list of numbers or \"inf\"")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::new();
                while let Some(item) = seq.next_element::<Repr>()? {
                    out.push(match item {
                        Repr::Num(v) => v,
                        Repr::Text(t) if t == "inf" || t == "Infinity" => f64::INFINITY,
                        Repr::Text(t) if t == "-inf" || t == "-Infinity" => f64::NEG_INFINITY,
                        Repr::Text(other) => {
                            return Err(de::Error::custom(alloc::format!(
                                "invalid boundary value {other:?}"
                            )))
                        }
                    });
                }
                Ok(out)
            }
        }
        d.deserialize_seq(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RegionCode::*;

    fn grid3(c12: RegionCode, c13: RegionCode, c23: RegionCode) -> [RegionCode; 3] {
        [c12, c13, c23]
    }

    #[test]
    fn hypothesis_counts() {
        assert_eq!(hypothesis_family(2), [HypothesisIndex { k: 0, k_star: 1 }]);
        let four = hypothesis_family(4);
        assert_eq!(four.len(), 6);
        assert_eq!(four[0].to_string(), "(1,2)");
        assert_eq!(four[5].to_string(), "(3,4)");
        assert_eq!(hypothesis_family(8).len(), 28);
        for (i, h) in hypothesis_family(7).into_iter().enumerate() {
            assert_eq!(h.position(7), i);
        }
    }

    #[test]
    fn all_inner_stops_for_similarity() {
        let t = active_set_transition(4, ArmSet::full(4), &[A3; 6], true).unwrap();
        assert_eq!(t.stop, StopReason::SimilarityStop);
        assert!(t.dropped.is_empty());
        let t = active_set_transition(4, ArmSet::full(4), &[A3; 6], false).unwrap();
        assert_eq!(t.stop, StopReason::Continue);
    }

    #[test]
    fn one_significant_comparison_drops_one_arm() {
        let t = active_set_transition(3, ArmSet::full(3), &grid3(A5, A7, A7), true).unwrap();
        assert_eq!(t.dropped, ArmSet::from_arms([1]));
        assert_eq!(t.survivors, ArmSet::from_arms([0, 2]));
        assert_eq!(t.stop, StopReason::Continue);
    }

    #[test]
    fn simultaneous_drops_leave_single_survivor() {
        let t = active_set_transition(3, ArmSet::full(3), &grid3(A5, A7, A5), true).unwrap();
        assert_eq!(t.dropped, ArmSet::from_arms([1, 2]));
        assert_eq!(t.stop, StopReason::SingleSurvivor);
    }

    #[test]
    fn drop_then_similar_survivors_stops() {
        // arm 3 dropped, arms 1 and 2 similar
        let t = active_set_transition(3, ArmSet::full(3), &grid3(A3, A5, A5), true).unwrap();
        assert_eq!(t.survivors, ArmSet::from_arms([0, 1]));
        assert_eq!(t.stop, StopReason::SimilarityStop);
    }

    #[test]
    fn rejects_mismatched_grids() {
        let active = ArmSet::from_arms([0, 2]);
        assert!(active_set_transition(3, active, &grid3(A3, A3, A6), true).is_err());
        assert!(active_set_transition(3, active, &grid3(A6, A6, A6), true).is_err());
        assert!(active_set_transition(3, active, &grid3(A6, A3, A6), true).is_ok());
        assert!(active_set_transition(3, ArmSet::from_arms([0]), &grid3(A6, A6, A6), true).is_err());
        assert!(active_set_transition(3, ArmSet::full(3), &[A3; 2], true).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(TrialLayout::new(vec![vec![10, 20]]).is_err());
        assert!(TrialLayout::new(vec![vec![10, 10], vec![10, 20]]).is_err());
        assert!(TrialLayout::new(vec![vec![10, 20], vec![10]]).is_err());
        let l = TrialLayout::new(vec![vec![10, 20], vec![20, 40]]).unwrap();
        assert_eq!(l.allocation_ratio(0, 0), 1.0);
        assert_eq!(l.allocation_ratio(1, 1), 4.0);
        assert_eq!(l.max_n(), 60);
        assert!(!l.is_equal_allocation());
        let sepsis = TrialLayout::equal(4, 3, 81).unwrap();
        assert_eq!(sepsis.max_n(), 972);
        assert_eq!(sepsis.eta(), 6);
    }

    #[test]
    fn boundary_validation() {
        assert!(BoundarySet::new(vec![3.0, 2.0], vec![0.0, 2.0]).is_ok());
        assert!(BoundarySet::new(vec![3.0, 2.0], vec![0.0, 1.9]).is_err());
        assert!(BoundarySet::new(vec![3.0, 2.0], vec![3.5, 2.0]).is_err());
        assert!(BoundarySet::new(vec![f64::INFINITY, 1.5], vec![2.2, 1.5]).is_ok());
        assert!(BoundarySet::new(vec![3.0], vec![]).is_err());
    }

    #[test]
    fn region_intervals_match_table() {
        let (u, us) = (2.8, 1.7);
        assert_eq!(A1.bounds(u, us), (f64::NEG_INFINITY, -u));
        assert_eq!(A2.bounds(u, us), (-u, -us));
        assert_eq!(A3.bounds(u, us), (-us, us));
        assert_eq!(A4.bounds(u, us), (us, u));
        assert_eq!(A5.bounds(u, us), (u, f64::INFINITY));
        assert_eq!(A6.bounds(u, us), (f64::NEG_INFINITY, f64::INFINITY));
        assert_eq!(A7.bounds(u, us), (-u, u));
        assert_eq!(A8.bounds(u, 0.0), (-u, u));
        for z in [-5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0] {
            let (lo, hi) = RegionCode::classify(z, u, us).bounds(u, us);
            assert!(lo < z && z < hi);
        }
        assert_eq!(RegionCode::classify(0.3, u, 0.0), A8);
    }

    #[test]
    fn effect_constructors() {
        let lfc = EffectConfiguration::lfc(4, 2, 0.5);
        assert_eq!(lfc.psi, vec![0.0, 0.0, 0.5, 0.0]);
        assert_eq!(lfc.best_arms(), ArmSet::from_arms([2]));
        let theta2 = EffectConfiguration::leading(4, 2, 0.5);
        assert_eq!(theta2.psi, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(EffectConfiguration::global_null(3).best_arms(), ArmSet::full(3));
    }
}

//! Alternative designs built from two-arm trials, for side-by-side reports.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::characteristics::{
    evaluate_design, outcome_distribution, Breakdown, OutcomeDistribution, SampleSizeEstimate,
};
use crate::error::{Error, Result};
use crate::model::{eta, ArmSet, BoundarySet, EffectConfiguration, TrialDesign};
use crate::mvn::ProbabilityEstimate;
use crate::solver::{solve_design, AllocationTemplate, BoundaryShape, DesignTargets, SolvedDesign, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ComparatorKind {
    /// One two-arm trial per pair at the unadjusted level.
    SeparateTrials,
    /// One two-arm trial per pair, levels chosen so the trials jointly meet the targets.
    FwerAdjustedSeparate,
    /// Two-arm boundaries and group size used in a single all-pairs trial.
    WhiteheadUnadjusted,
    /// Two-arm design at `alpha / eta` and power `1 - beta / (K - 1)` used in a single trial.
    BonferroniWhitehead,
    /// `K - 1` two-arm trials run one after another, the winner going forward.
    SequentialSeparate,
    FwerAdjustedSequential,
}

impl ComparatorKind {
    pub const ALL: [ComparatorKind; 6] = [
        ComparatorKind::WhiteheadUnadjusted,
        ComparatorKind::BonferroniWhitehead,
        ComparatorKind::SeparateTrials,
        ComparatorKind::FwerAdjustedSeparate,
        ComparatorKind::SequentialSeparate,
        ComparatorKind::FwerAdjustedSequential,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ComparatorKind::SeparateTrials => "separate trials",
            ComparatorKind::FwerAdjustedSeparate => "FWER controlled separate trials",
            ComparatorKind::WhiteheadUnadjusted => "Whitehead design",
            ComparatorKind::BonferroniWhitehead => "Bonferroni adjusted Whitehead design",
            ComparatorKind::SequentialSeparate => "sequential separate trials",
            ComparatorKind::FwerAdjustedSequential => "FWER controlled sequential separate trials",
        }
    }

    /// Two-arm level and power implied by the overall targets.
    pub fn pairwise_targets(self, arms: usize, alpha: f64, beta: f64) -> (f64, f64) {
        let eta = eta(arms) as f64;
        let later = (arms - 1) as f64;
        match self {
            ComparatorKind::SeparateTrials
            | ComparatorKind::WhiteheadUnadjusted
            | ComparatorKind::SequentialSeparate => (alpha, 1.0 - beta),
            ComparatorKind::FwerAdjustedSeparate => (
                1.0 - libm::pow(1.0 - alpha, 1.0 / eta),
                libm::pow(1.0 - beta, 1.0 / later),
            ),
            ComparatorKind::BonferroniWhitehead => (alpha / eta, 1.0 - beta / later),
            ComparatorKind::FwerAdjustedSequential => (
                1.0 - libm::pow(1.0 - alpha, 1.0 / later),
                libm::pow(1.0 - beta, 1.0 / later),
            ),
        }
    }
}

impl fmt::Display for ComparatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ComparatorSpec {
    pub kind: ComparatorKind,
    /// Overrides the two-arm level derived from the overall targets.
    #[cfg_attr(feature = "serde", serde(default))]
    pub pairwise_alpha: Option<f64>,
    /// Overrides the two-arm power derived from the overall targets.
    #[cfg_attr(feature = "serde", serde(default))]
    pub pairwise_power: Option<f64>,
}

impl ComparatorSpec {
    pub fn new(kind: ComparatorKind) -> Self {
        ComparatorSpec {
            kind,
            pairwise_alpha: None,
            pairwise_power: None,
        }
    }
}

/// What the comparator designs are measured against.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparatorContext {
    pub arms: usize,
    pub stages: usize,
    pub shape: BoundaryShape,
    pub targets: DesignTargets,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparatorReport {
    pub kind: ComparatorKind,
    pub pairwise_alpha: f64,
    pub pairwise_power: f64,
    pub boundaries: BoundarySet,
    pub group_size: u32,
    /// Two-arm trials run; 1 for the single-trial designs.
    pub trials: usize,
    /// Probability of at least one false rejection under the global null.
    pub fwer: ProbabilityEstimate,
    /// Power with arm 1 ahead.
    pub power: ProbabilityEstimate,
    /// Power with arm `k` ahead, `k = 1..K`.
    pub arm_powers: Vec<ProbabilityEstimate>,
    pub max_n: u64,
    /// `E(N)` with the first `i` arms ahead, `i = 0..K-1`.
    pub expected_n: Vec<SampleSizeEstimate>,
    /// `E(N)` with arm `k` alone ahead, `k = 1..K`.
    pub arm_expected_n: Vec<SampleSizeEstimate>,
    /// Single-trial designs only; first `i` arms ahead, `i = 0..K`.
    pub breakdown: Vec<Breakdown>,
    pub caveat: Option<String>,
}

/// Solved two-arm trial with its outcome probabilities at no effect and at `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseTrial {
    pub solved: SolvedDesign,
    /// Equal arms.
    pub null: PairOutcome,
    /// First arm ahead by `theta`.
    pub ahead: PairOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairOutcome {
    /// First arm found superior.
    pub first: ProbabilityEstimate,
    /// Second arm found superior.
    pub second: ProbabilityEstimate,
    pub similar: ProbabilityEstimate,
    pub expected_n: SampleSizeEstimate,
}

impl PairOutcome {
    fn from_distribution(dist: &OutcomeDistribution) -> Self {
        let mut out = PairOutcome {
            first: ProbabilityEstimate::ZERO,
            second: ProbabilityEstimate::ZERO,
            similar: ProbabilityEstimate::ZERO,
            expected_n: dist.expected_n,
        };
        for &(s, p) in &dist.by_survivors {
            match (s.contains(0), s.contains(1)) {
                (true, false) => out.first = p,
                (false, true) => out.second = p,
                _ => out.similar = p,
            }
        }
        out
    }

    /// The same trial with the arms exchanged.
    fn swapped(self) -> Self {
        PairOutcome {
            first: self.second,
            second: self.first,
            ..self
        }
    }

    /// Any rejection.
    pub fn rejection(&self) -> f64 {
        self.first.value + self.second.value
    }
}

/// Solves and evaluates the two-arm trial at the given level and power.
pub fn pairwise_trial(
    context: &ComparatorContext,
    alpha: f64,
    power: f64,
    options: &SolverOptions,
) -> Result<PairwiseTrial> {
    let targets = DesignTargets {
        alpha,
        beta: 1.0 - power,
        ..context.targets
    };
    let solved = solve_design(&AllocationTemplate::equal(2, context.stages), &context.shape, targets, options)?;
    let theta = context.targets.theta;
    let outcome = |effects: EffectConfiguration| -> Result<PairOutcome> {
        let dist = outcome_distribution(&solved.design, &effects, &options.evaluation)?;
        Ok(PairOutcome::from_distribution(&dist))
    };
    let null = outcome(EffectConfiguration::global_null(2))?;
    let ahead = outcome(EffectConfiguration::lfc(2, 0, theta))?;
    Ok(PairwiseTrial { solved, null, ahead })
}

pub fn comparator_report(
    spec: &ComparatorSpec,
    context: &ComparatorContext,
    options: &SolverOptions,
) -> Result<ComparatorReport> {
    let arms = context.arms;
    if !(2..=ArmSet::MAX_ARMS).contains(&arms) {
        return Err(Error::Invalid(format!("comparators need 2 to {} arms, got {arms}", ArmSet::MAX_ARMS)));
    }
    let (alpha, power) = spec
        .kind
        .pairwise_targets(arms, context.targets.alpha, context.targets.beta);
    let alpha = spec.pairwise_alpha.unwrap_or(alpha);
    let power = spec.pairwise_power.unwrap_or(power);
    let pair = pairwise_trial(context, alpha, power, options)?;
    let mut report = match spec.kind {
        ComparatorKind::SeparateTrials | ComparatorKind::FwerAdjustedSeparate => separate_trials(arms, &pair),
        ComparatorKind::SequentialSeparate | ComparatorKind::FwerAdjustedSequential => {
            sequential_separate(arms, &pair)
        }
        ComparatorKind::WhiteheadUnadjusted | ComparatorKind::BonferroniWhitehead => {
            joint_trial(arms, context, &pair, options)?
        }
    };
    report.kind = spec.kind;
    report.pairwise_alpha = alpha;
    report.pairwise_power = power;
    Ok(report)
}

fn base_report(pair: &PairwiseTrial, trials: usize) -> ComparatorReport {
    ComparatorReport {
        kind: ComparatorKind::SeparateTrials,
        pairwise_alpha: 0.0,
        pairwise_power: 0.0,
        boundaries: pair.solved.design.boundaries.clone(),
        group_size: pair.solved.group_size,
        trials,
        fwer: ProbabilityEstimate::ZERO,
        power: ProbabilityEstimate::ZERO,
        arm_powers: Vec::new(),
        max_n: trials as u64 * pair.solved.design.layout.max_n(),
        expected_n: Vec::new(),
        arm_expected_n: Vec::new(),
        breakdown: Vec::new(),
        caveat: None,
    }
}

/// `eta` independent two-arm trials.
fn separate_trials(arms: usize, pair: &PairwiseTrial) -> ComparatorReport {
    let trials = eta(arms);
    let mut report = base_report(pair, trials);
    let level = pair.null.rejection();
    let level_se = libm::hypot(pair.null.first.std_error, pair.null.second.std_error);
    let keep = libm::pow(1.0 - level, trials as f64);
    report.fwer = estimate(1.0 - keep, trials as f64 * keep / (1.0 - level) * level_se);
    // The leading arm has to win each of its K - 1 trials.
    let p = pair.ahead.first;
    let m = (arms - 1) as f64;
    report.power = estimate(libm::pow(p.value, m), m * libm::pow(p.value, m - 1.0) * p.std_error);
    report.arm_powers = vec![report.power; arms];
    let (e0, e1) = (pair.null.expected_n, pair.ahead.expected_n);
    report.expected_n = (0..arms)
        .map(|i| {
            let crossing = (i * (arms - i)) as f64;
            let same = trials as f64 - crossing;
            SampleSizeEstimate {
                value: same * e0.value + crossing * e1.value,
                std_error: same * e0.std_error + crossing * e1.std_error,
            }
        })
        .collect();
    report.arm_expected_n = vec![report.expected_n[1]; arms];
    report.caveat = Some("separate trials can reach contradictory conclusions across pairs; this is not modelled".into());
    report
}

/// Arms are tested in order: arm 1 against arm 2, the arm going forward
/// against arm 3, and so on. On similarity the incumbent goes forward.
fn sequential_separate(arms: usize, pair: &PairwiseTrial) -> ComparatorReport {
    let mut report = base_report(pair, arms - 1);
    // Global null: no rejection means every trial ends in similarity.
    let similar = pair.null.similar;
    let m = (arms - 1) as f64;
    let keep = libm::pow(similar.value, m);
    report.fwer = estimate(1.0 - keep, m * libm::pow(similar.value, m - 1.0) * similar.std_error);
    let mut powers = Vec::with_capacity(arms);
    let mut arm_n = Vec::with_capacity(arms);
    for r in 0..arms {
        let walk = sequential_walk(arms, ArmSet::from_arms([r]), pair);
        powers.push(walk.power(r));
        arm_n.push(walk.expected_n);
    }
    report.power = powers[0];
    report.arm_powers = powers;
    report.arm_expected_n = arm_n;
    report.expected_n = (0..arms)
        .map(|i| sequential_walk(arms, ArmSet::from_arms(0..i), pair).expected_n)
        .collect();
    report
}

struct Walk {
    /// `clean[k]`: probability that arm `k` goes forward having won every trial it was in.
    clean: Vec<f64>,
    clean_se: Vec<f64>,
    expected_n: SampleSizeEstimate,
}

impl Walk {
    fn power(&self, arm: usize) -> ProbabilityEstimate {
        estimate(self.clean[arm], self.clean_se[arm])
    }
}

/// Probability flow over (incumbent, has won all its trials) with the arms in
/// `ahead` leading the rest by `theta`. Standard errors are first order and
/// treat the per-outcome errors as fully correlated.
fn sequential_walk(arms: usize, ahead: ArmSet, pair: &PairwiseTrial) -> Walk {
    // States: incumbent arm x {clean, not clean}; the first incumbent has won nothing yet.
    let mut prob = vec![[0.0f64; 2]; arms];
    let mut prob_se = vec![[0.0f64; 2]; arms];
    prob[0][1] = 1.0;
    let mut n = 0.0;
    let mut n_se = 0.0;
    for challenger in 1..arms {
        let mut next = vec![[0.0f64; 2]; arms];
        let mut next_se = vec![[0.0f64; 2]; arms];
        for incumbent in 0..challenger {
            let outcome = match (ahead.contains(incumbent), ahead.contains(challenger)) {
                (true, false) => pair.ahead,
                (false, true) => pair.ahead.swapped(),
                _ => pair.null,
            };
            for clean in 0..2 {
                let w = prob[incumbent][clean];
                let w_se = prob_se[incumbent][clean];
                if w == 0.0 && w_se == 0.0 {
                    continue;
                }
                let moves = [
                    (incumbent, clean, outcome.first),
                    (incumbent, 0, outcome.similar),
                    (challenger, 1, outcome.second),
                ];
                for (arm, flag, p) in moves {
                    next[arm][flag] += w * p.value;
                    next_se[arm][flag] += w * p.std_error + w_se * p.value;
                }
                n += w * outcome.expected_n.value;
                n_se += w * outcome.expected_n.std_error + w_se * outcome.expected_n.value;
            }
        }
        prob = next;
        prob_se = next_se;
    }
    Walk {
        clean: prob.iter().map(|p| p[1]).collect(),
        clean_se: prob_se.iter().map(|p| p[1]).collect(),
        expected_n: SampleSizeEstimate {
            value: n,
            std_error: n_se,
        },
    }
}

/// Two-arm boundaries and group size used in one all-pairs trial.
fn joint_trial(
    arms: usize,
    context: &ComparatorContext,
    pair: &PairwiseTrial,
    options: &SolverOptions,
) -> Result<ComparatorReport> {
    let layout = AllocationTemplate::equal(arms, context.stages).layout(pair.solved.group_size)?;
    let design = TrialDesign::new(layout, pair.solved.design.boundaries.clone(), context.targets.binding)?;
    let op = evaluate_design(&design, context.targets.theta, &options.evaluation)?;
    let mut report = base_report(pair, 1);
    report.max_n = op.max_n;
    report.fwer = op.fwer;
    report.power = op.power_lfc;
    report.arm_powers = vec![op.power_lfc; arms];
    report.expected_n = op.expected_n.iter().map(|s| s.expected_n).collect();
    report.arm_expected_n = vec![report.expected_n[1]; arms];
    report.breakdown = op.breakdown;
    Ok(report)
}

fn estimate(value: f64, std_error: f64) -> ProbabilityEstimate {
    ProbabilityEstimate {
        value,
        std_error: std_error.abs(),
        evaluations: 0,
    }
}

//! Familywise error rates, strong-control certificate, power, expected sample
//! size and outcome breakdowns of a design.
//!
//! Family sums are computed to a target standard error on the total: every
//! rectangle first gets a small lattice, then the rectangles contributing most
//! of the variance are refined until the total meets the target.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::correlation::{build_model, JointGaussianModel};
use crate::enumeration::{build_family, ConfigurationFamily, EnumerationLimits, FamilyKind};
use crate::error::{Error, Result};
use crate::model::{ArmSet, EffectConfiguration, HypothesisIndex, TrialDesign};
use crate::mvn::{rect_prob_stream, ProbabilityEstimate, QuadratureOptions, Rectangle};
use crate::partitions::{two_block_partitions, two_block_representatives, PartitionHypothesisSet};
use crate::{par, sum};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationOptions {
    /// Target standard error applies to each reported total.
    pub quadrature: QuadratureOptions,
    pub seed: u64,
    /// For non-binding designs: evaluate power, sample size and breakdowns as
    /// if the similarity stop is followed. Binding designs always follow it.
    pub honor_inner: bool,
    pub limits: EnumerationLimits,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            quadrature: QuadratureOptions::reporting(),
            seed: 1,
            honor_inner: true,
            limits: EnumerationLimits::default(),
        }
    }
}

impl EvaluationOptions {
    pub fn with_precision(precision: f64) -> Self {
        EvaluationOptions {
            quadrature: QuadratureOptions::with_target(precision),
            ..Self::default()
        }
    }

    fn follows_inner(&self, design: &TrialDesign) -> bool {
        design.binding || self.honor_inner
    }
}

/// Estimates rectangle probabilities so that their sum has at most the target standard error.
pub fn evaluate_rectangles(
    model: &JointGaussianModel,
    rects: &[Rectangle],
    options: &EvaluationOptions,
) -> Result<Vec<ProbabilityEstimate>> {
    let q = options.quadrature;
    let seed = options.seed;
    let run = |i: usize, points: usize| {
        let o = QuadratureOptions {
            initial_points: points,
            fixed: true,
            ..q
        };
        rect_prob_stream(model, &rects[i], &o, seed, i as u64)
    };
    let mut points = vec![q.initial_points.max(1); rects.len()];
    let idx: Vec<usize> = (0..rects.len()).collect();
    let mut est = par::map_indexed(&idx, |_, &i| run(i, points[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    if q.fixed {
        return Ok(est);
    }
    loop {
        let var: Vec<f64> = est.iter().map(|e| e.std_error * e.std_error).collect();
        let total = sum::pairwise(&var);
        if libm::sqrt(total) <= q.target_std_error {
            return Ok(est);
        }
        let mut order: Vec<usize> = (0..rects.len()).filter(|&i| var[i] > 0.0).collect();
        order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
        let mut chosen = Vec::new();
        let mut acc = 0.0;
        for i in order {
            chosen.push(i);
            acc += var[i];
            if acc >= 0.5 * total {
                break;
            }
        }
        for &i in &chosen {
            points[i] *= 4;
            if (2 * points[i] * q.shifts) as u64 > q.max_evaluations {
                return Err(Error::Precision {
                    target: q.target_std_error,
                    achieved: libm::sqrt(total),
                    evaluations: est.iter().map(|e| e.evaluations).sum(),
                });
            }
        }
        let fresh = par::map_indexed(&chosen, |_, &i| run(i, points[i]));
        for (&i, e) in chosen.iter().zip(fresh) {
            est[i] = e?;
        }
    }
}

fn sum_estimates(est: &[ProbabilityEstimate]) -> ProbabilityEstimate {
    ProbabilityEstimate::combine(est.iter().map(|&e| (1.0, e)))
}

/// `1 - P(|Z_{h,j}| < u_j for all h, j)` under the global null: the error
/// rate when similarity stops are ignored.
pub fn fwer_nonbinding_global(design: &TrialDesign, options: &EvaluationOptions) -> Result<ProbabilityEstimate> {
    let layout = &design.layout;
    let model = build_model(layout, &EffectConfiguration::global_null(layout.arms()), None)?;
    let eta = layout.eta();
    let lower: Vec<f64> = (0..eta * layout.stages())
        .map(|i| -design.boundaries.outer[i / eta])
        .collect();
    let upper = lower.iter().map(|x| -x).collect();
    let est = evaluate_rectangles(&model, &[Rectangle { lower, upper }], options)?;
    Ok(est[0].complement())
}

/// Error rate under the global null when the similarity stop is followed.
///
/// With `A_j` the event that every statistic is inside `(-u_j, u_j)` and
/// `S_j` that every one is inside `(-u*_j, u*_j)`, the trial makes no
/// rejection iff for some `j` it passes `A_i \ S_i` for `i < j` and then
/// `S_j`. Expanding `1[A \ S] = 1[A] - 1[S]` gives `2^J - 1` signed
/// rectangles; those containing an empty `S_i` (`u*_i = 0`) or following an
/// empty `A_i \ S_i` (`u*_i = u_i`) vanish and are skipped.
pub fn fwer_binding_global(design: &TrialDesign, options: &EvaluationOptions) -> Result<ProbabilityEstimate> {
    let layout = &design.layout;
    let b = &design.boundaries;
    let stages = layout.stages();
    let eta = layout.eta();
    let model = build_model(layout, &EffectConfiguration::global_null(layout.arms()), None)?;
    let mut signs = Vec::new();
    let mut rects = Vec::new();
    for j in 0..stages {
        if b.inner[j] == 0.0 {
            continue;
        }
        if (0..j).any(|i| b.inner[i] >= b.outer[i]) {
            break;
        }
        for q in 0u32..(1 << j) {
            if (0..j).any(|i| q & (1 << i) != 0 && b.inner[i] == 0.0) {
                continue;
            }
            let mut lower = vec![f64::NEG_INFINITY; eta * stages];
            let mut upper = vec![f64::INFINITY; eta * stages];
            for i in 0..=j {
                let bound = if i == j || q & (1 << i) != 0 {
                    b.inner[i]
                } else {
                    b.outer[i]
                };
                for h in 0..eta {
                    lower[i * eta + h] = -bound;
                    upper[i * eta + h] = bound;
                }
            }
            signs.push(if q.count_ones() % 2 == 0 { 1.0 } else { -1.0 });
            rects.push(Rectangle { lower, upper });
        }
    }
    let est = evaluate_rectangles(&model, &rects, options)?;
    let none = ProbabilityEstimate::combine(signs.iter().copied().zip(est));
    Ok(none.complement())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificateEntry {
    pub partition: PartitionHypothesisSet,
    /// Number of two-block partitions this entry stands for.
    pub represents: u64,
    /// `P(no within-block statistic crosses an outer boundary)`.
    pub no_rejection: ProbabilityEstimate,
    pub verdict: Verdict,
}

impl CertificateEntry {
    pub fn fwer(&self) -> f64 {
        1.0 - self.no_rejection.value
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Certificate {
    /// Global-null error rate the design is calibrated to: similarity stop
    /// followed for binding designs, ignored otherwise.
    pub global_fwer: ProbabilityEstimate,
    pub entries: Vec<CertificateEntry>,
    /// Whether block-size representatives replaced the full partition list.
    pub reduced: bool,
    pub verdict: Verdict,
}

/// Checks that no two-block configuration of true nulls has a larger error
/// rate than the global null.
///
/// Each two-block partition is scored with the rectangle over its
/// within-block statistics only, at the outer boundaries (no credit for
/// similarity stops). With equal allocation one partition per block-size split
/// is enough. An entry passes when it is below the global rate by more than
/// three combined standard errors and fails when it is above by as much.
pub fn strong_control_certificate(design: &TrialDesign, options: &EvaluationOptions) -> Result<Certificate> {
    let global = global_reference(design, options)?;
    strong_control_certificate_against(design, global, options)
}

/// [`strong_control_certificate`] with the global-null rate already known,
/// e.g. from the boundary solve.
pub fn strong_control_certificate_against(
    design: &TrialDesign,
    global: ProbabilityEstimate,
    options: &EvaluationOptions,
) -> Result<Certificate> {
    let arms = design.layout.arms();
    if design.layout.is_equal_allocation() {
        let reps = two_block_representatives(arms);
        certify(design, &reps, true, global, options)
    } else {
        let all: Vec<_> = two_block_partitions(arms).into_iter().map(|p| (p, 1)).collect();
        certify(design, &all, false, global, options)
    }
}

fn global_reference(design: &TrialDesign, options: &EvaluationOptions) -> Result<ProbabilityEstimate> {
    if design.binding {
        fwer_binding_global(design, options)
    } else {
        fwer_nonbinding_global(design, options)
    }
}

/// [`strong_control_certificate`] over an explicit list of partitions.
pub fn strong_control_certificate_for(
    design: &TrialDesign,
    partitions: &[(PartitionHypothesisSet, u64)],
    reduced: bool,
    options: &EvaluationOptions,
) -> Result<Certificate> {
    let global = global_reference(design, options)?;
    certify(design, partitions, reduced, global, options)
}

fn certify(
    design: &TrialDesign,
    partitions: &[(PartitionHypothesisSet, u64)],
    reduced: bool,
    global: ProbabilityEstimate,
    options: &EvaluationOptions,
) -> Result<Certificate> {
    let mut entries = Vec::new();
    for (partition, represents) in partitions {
        if partition.arms() != design.layout.arms() {
            return Err(Error::Invalid(format!(
                "partition {partition} does not match a {}-arm design",
                design.layout.arms()
            )));
        }
        let no_rejection = partition_no_rejection(design, partition, options)?;
        let Some(no_rejection) = no_rejection else { continue };
        let margin = global.value - (1.0 - no_rejection.value);
        let se = libm::sqrt(global.std_error * global.std_error + no_rejection.std_error * no_rejection.std_error);
        let verdict = if margin > 3.0 * se {
            Verdict::Pass
        } else if margin < -3.0 * se {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        entries.push(CertificateEntry {
            partition: partition.clone(),
            represents: *represents,
            no_rejection,
            verdict,
        });
    }
    let verdict = if entries.iter().any(|e| e.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if entries.iter().any(|e| e.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(Certificate {
        global_fwer: global,
        entries,
        reduced,
        verdict,
    })
}

/// `None` when the partition has no within-block pair.
fn partition_no_rejection(
    design: &TrialDesign,
    partition: &PartitionHypothesisSet,
    options: &EvaluationOptions,
) -> Result<Option<ProbabilityEstimate>> {
    let pairs = partition.indices();
    if pairs.is_empty() {
        return Ok(None);
    }
    let layout = &design.layout;
    let coords: Vec<(HypothesisIndex, usize)> = (0..layout.stages())
        .flat_map(|j| pairs.iter().map(move |&h| (h, j)))
        .collect();
    let model = build_model(layout, &EffectConfiguration::global_null(layout.arms()), Some(&coords))?;
    let lower: Vec<f64> = coords.iter().map(|&(_, j)| -design.boundaries.outer[j]).collect();
    let upper = lower.iter().map(|x| -x).collect();
    let est = evaluate_rectangles(&model, &[Rectangle { lower, upper }], options)?;
    Ok(Some(est[0]))
}

/// Sum of rectangle probabilities of a family under `effects`.
pub fn family_probability(
    design: &TrialDesign,
    family: &ConfigurationFamily,
    effects: &EffectConfiguration,
    options: &EvaluationOptions,
) -> Result<ProbabilityEstimate> {
    let est = family_estimates(design, family, effects, options)?;
    Ok(sum_estimates(&est))
}

fn family_estimates(
    design: &TrialDesign,
    family: &ConfigurationFamily,
    effects: &EffectConfiguration,
    options: &EvaluationOptions,
) -> Result<Vec<ProbabilityEstimate>> {
    let model = build_model(&design.layout, effects, None)?;
    let rects = family.rectangles(&design.boundaries);
    evaluate_rectangles(&model, &rects, options)
}

/// Probability that arm 1 alone survives when it leads the others by `theta`.
pub fn power_lfc(design: &TrialDesign, theta: f64, options: &EvaluationOptions) -> Result<ProbabilityEstimate> {
    let family = build_family(
        design,
        FamilyKind::LfcPower { relevant: 0 },
        options.follows_inner(design),
        options.limits,
    )?;
    let effects = EffectConfiguration::lfc(design.layout.arms(), 0, theta);
    family_probability(design, &family, &effects, options)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleSizeEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Probability of each terminal survivor set and the expected sample size.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OutcomeDistribution {
    pub effects: EffectConfiguration,
    pub configurations: usize,
    /// Sum over every outcome; one up to quadrature error.
    pub total: ProbabilityEstimate,
    pub expected_n: SampleSizeEstimate,
    /// Ordered by survivor set.
    pub by_survivors: Vec<(ArmSet, ProbabilityEstimate)>,
}

pub fn outcome_distribution(
    design: &TrialDesign,
    effects: &EffectConfiguration,
    options: &EvaluationOptions,
) -> Result<OutcomeDistribution> {
    let family = build_family(design, FamilyKind::AllOutcomes, options.follows_inner(design), options.limits)?;
    outcome_distribution_of(design, &family, effects, options)
}

/// [`outcome_distribution`] over a prebuilt all-outcomes family.
pub fn outcome_distribution_of(
    design: &TrialDesign,
    family: &ConfigurationFamily,
    effects: &EffectConfiguration,
    options: &EvaluationOptions,
) -> Result<OutcomeDistribution> {
    if family.kind() != FamilyKind::AllOutcomes {
        return Err(Error::Invalid("outcome distribution needs the all-outcomes family".into()));
    }
    let est = family_estimates(design, family, effects, options)?;
    let sizes = family.sample_sizes(&design.layout);
    // Ratio form: the probabilities are known to sum to one, so constant
    // sample sizes come out exactly and quadrature error in the total cancels.
    let base = sizes.iter().copied().min().unwrap_or(0) as f64;
    let total: f64 = sum::pairwise(&est.iter().map(|e| e.value).collect::<Vec<_>>());
    let excess: Vec<f64> = est.iter().zip(&sizes).map(|(e, &n)| e.value * (n as f64 - base)).collect();
    let value = if total > 0.0 { base + sum::pairwise(&excess) / total } else { base };
    let weighted_var: Vec<f64> = est
        .iter()
        .zip(&sizes)
        .map(|(e, &n)| {
            let s = e.std_error * (n as f64 - value);
            s * s
        })
        .collect();
    let expected_n = SampleSizeEstimate {
        value,
        std_error: libm::sqrt(sum::pairwise(&weighted_var)),
    };
    let mut groups: alloc::collections::BTreeMap<ArmSet, Vec<ProbabilityEstimate>> = Default::default();
    for (e, p) in est.iter().zip(family.profiles()) {
        groups.entry(p.survivors).or_default().push(*e);
    }
    Ok(OutcomeDistribution {
        effects: effects.clone(),
        configurations: family.len(),
        total: sum_estimates(&est),
        expected_n,
        by_survivors: groups.into_iter().map(|(s, v)| (s, sum_estimates(&v))).collect(),
    })
}

/// `E(N)` under `effects`.
pub fn expected_sample_size(
    design: &TrialDesign,
    effects: &EffectConfiguration,
    options: &EvaluationOptions,
) -> Result<SampleSizeEstimate> {
    Ok(outcome_distribution(design, effects, options)?.expected_n)
}

/// How many relevant arms a trial ends with, or how many null arms remain when
/// it does not end with relevant arms only.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Breakdown {
    pub relevant: ArmSet,
    /// `relevant_found[i - 1]`: the survivors are `i` relevant arms and nothing else.
    pub relevant_found: Vec<ProbabilityEstimate>,
    /// `null_remaining[i - 1]`: `i` non-relevant arms survive.
    pub null_remaining: Vec<ProbabilityEstimate>,
}

impl Breakdown {
    pub fn from_distribution(arms: usize, dist: &OutcomeDistribution, relevant: ArmSet) -> Self {
        let mut found = vec![Vec::new(); relevant.len()];
        let mut nulls = vec![Vec::new(); arms - relevant.len()];
        for &(survivors, p) in &dist.by_survivors {
            if survivors.is_subset(relevant) {
                found[survivors.len() - 1].push(p);
            } else {
                nulls[survivors.difference(relevant).len() - 1].push(p);
            }
        }
        Breakdown {
            relevant,
            relevant_found: found.iter().map(|v| sum_estimates(v)).collect(),
            null_remaining: nulls.iter().map(|v| sum_estimates(v)).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.relevant_found
            .iter()
            .chain(&self.null_remaining)
            .map(|e| e.value)
            .sum()
    }
}

pub fn outcome_breakdown(
    design: &TrialDesign,
    effects: &EffectConfiguration,
    relevant: ArmSet,
    options: &EvaluationOptions,
) -> Result<Breakdown> {
    let arms = design.layout.arms();
    if !relevant.is_subset(ArmSet::full(arms)) {
        return Err(Error::Invalid(format!("relevant set {relevant} outside the arms")));
    }
    let dist = outcome_distribution(design, effects, options)?;
    Ok(Breakdown::from_distribution(arms, &dist, relevant))
}

/// Expected sample size under the configuration with `relevant` leading arms.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSize {
    pub relevant: usize,
    pub expected_n: SampleSizeEstimate,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OperatingReport {
    /// Global-null error rate with the similarity stop followed.
    pub fwer: ProbabilityEstimate,
    /// Global-null error rate with the similarity stop ignored.
    pub fwer_nonbinding: ProbabilityEstimate,
    pub theta: f64,
    pub power_lfc: ProbabilityEstimate,
    pub max_n: u64,
    /// `E(N)` with the first `i` arms ahead by `theta`, `i = 0..K-1`.
    pub expected_n: Vec<ScenarioSize>,
    /// Breakdowns with the first `i` arms ahead, `i = 0..K`.
    pub breakdown: Vec<Breakdown>,
    pub outcomes: usize,
    pub strong_control: Option<Certificate>,
}

/// Full set of operating characteristics for a design.
pub fn evaluate_design(design: &TrialDesign, theta: f64, options: &EvaluationOptions) -> Result<OperatingReport> {
    let arms = design.layout.arms();
    let fwer = fwer_binding_global(design, options)?;
    let fwer_nonbinding = fwer_nonbinding_global(design, options)?;
    let power = power_lfc(design, theta, options)?;
    let family = build_family(design, FamilyKind::AllOutcomes, options.follows_inner(design), options.limits)?;
    let mut expected_n = Vec::new();
    let mut breakdown = Vec::new();
    let mut null_dist = None;
    for i in 0..arms {
        let effects = EffectConfiguration::leading(arms, i, theta);
        let dist = outcome_distribution_of(design, &family, &effects, options)?;
        expected_n.push(ScenarioSize {
            relevant: i,
            expected_n: dist.expected_n,
        });
        breakdown.push(Breakdown::from_distribution(arms, &dist, ArmSet::from_arms(0..i)));
        if i == 0 {
            null_dist = Some(dist);
        }
    }
    // All arms ahead is the global null shifted.
    if let Some(dist) = null_dist {
        breakdown.push(Breakdown::from_distribution(arms, &dist, ArmSet::full(arms)));
    }
    Ok(OperatingReport {
        fwer,
        fwer_nonbinding,
        theta,
        power_lfc: power,
        max_n: design.layout.max_n(),
        expected_n,
        breakdown,
        outcomes: family.len(),
        strong_control: None,
    })
}

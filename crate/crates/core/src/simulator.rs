//! Monte Carlo replay of the decision rules on simulated stage-wise arm means.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::model::{
    active_set_transition, hypothesis_family, ArmSet, EffectConfiguration, RegionCode, StopReason, TrialDesign,
};
use crate::normal;
use crate::par;
use crate::partitions::PartitionHypothesisSet;

/// Replications per parallel work item.
const CHUNK: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationOptions {
    pub replications: u64,
    pub seed: u64,
    /// Non-binding designs only: follow the similarity stop. Binding designs
    /// always follow it.
    pub honor_inner: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            replications: 100_000,
            seed: 1,
            honor_inner: true,
        }
    }
}

impl SimulationOptions {
    pub fn new(replications: u64, seed: u64) -> Self {
        SimulationOptions {
            replications,
            seed,
            ..Default::default()
        }
    }
}

/// Proportion with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Proportion {
    pub value: f64,
    pub std_error: f64,
}

impl Proportion {
    pub fn from_count(count: u64, replications: u64) -> Self {
        let n = replications as f64;
        let p = count as f64 / n;
        Proportion {
            value: p,
            std_error: libm::sqrt(p * (1.0 - p) / n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeanEstimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationResult {
    pub replications: u64,
    pub seed: u64,
    pub effects: EffectConfiguration,
    /// Any rejection of a pair with equal effects.
    pub fwer_hat: Proportion,
    /// The trial ends with exactly the best arms.
    pub power_hat: Proportion,
    pub expected_n_hat: MeanEstimate,
    pub min_n: u64,
    pub max_n: u64,
    pub terminal_set_counts: BTreeMap<ArmSet, u64>,
    pub similarity_stops: u64,
}

impl SimulationResult {
    /// Proportion of trials ending with exactly `survivors`.
    pub fn terminal_probability(&self, survivors: ArmSet) -> Proportion {
        let count = self.terminal_set_counts.get(&survivors).copied().unwrap_or(0);
        Proportion::from_count(count, self.replications)
    }

    /// `(relevant_found, null_remaining)` as in the analytic breakdown.
    pub fn breakdown(&self, arms: usize, relevant: ArmSet) -> (Vec<Proportion>, Vec<Proportion>) {
        let mut found = vec![0u64; relevant.len()];
        let mut nulls = vec![0u64; arms - relevant.len()];
        for (&s, &c) in &self.terminal_set_counts {
            if s.is_subset(relevant) {
                found[s.len() - 1] += c;
            } else {
                nulls[s.difference(relevant).len() - 1] += c;
            }
        }
        let to = |v: Vec<u64>| v.into_iter().map(|c| Proportion::from_count(c, self.replications)).collect();
        (to(found), to(nulls))
    }
}

#[derive(Clone, Debug, Default)]
struct Tally {
    errors: u64,
    successes: u64,
    n_sum: f64,
    n_sq: f64,
    min_n: u64,
    max_n: u64,
    similarity: u64,
    terminal: BTreeMap<ArmSet, u64>,
}

impl Tally {
    fn merge(&mut self, other: Tally) {
        self.errors += other.errors;
        self.successes += other.successes;
        self.n_sum += other.n_sum;
        self.n_sq += other.n_sq;
        self.min_n = if self.terminal.is_empty() {
            other.min_n
        } else {
            self.min_n.min(other.min_n)
        };
        self.max_n = self.max_n.max(other.max_n);
        self.similarity += other.similarity;
        for (s, c) in other.terminal {
            *self.terminal.entry(s).or_default() += c;
        }
    }
}

/// Outcome of one simulated trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialRun {
    pub survivors: ArmSet,
    pub sample_size: u64,
    pub stop: StopReason,
    /// Analysis at which the trial ended, zero based.
    pub stop_stage: usize,
    /// Some pair with equal effects was rejected.
    pub false_rejection: bool,
}

/// Runs one trial with standard normal draws supplied by `draw`.
pub fn run_trial(
    design: &TrialDesign,
    effects: &EffectConfiguration,
    honor_inner: bool,
    mut draw: impl FnMut() -> f64,
) -> Result<TrialRun> {
    let layout = &design.layout;
    let arms = layout.arms();
    let stages = layout.stages();
    let psi = &effects.psi;
    let pairs = hypothesis_family(arms);
    let follow = design.binding || honor_inner;
    let mut sums = vec![0.0f64; arms];
    let mut last = vec![0usize; arms];
    let mut codes = vec![RegionCode::A6; pairs.len()];
    let mut active = ArmSet::full(arms);
    let mut false_rejection = false;
    for j in 0..stages {
        for k in active.iter() {
            let prev = if j == 0 { 0 } else { layout.group_size(k, j - 1) };
            let dn = (layout.group_size(k, j) - prev) as f64;
            sums[k] += psi[k] * dn + libm::sqrt(dn) * draw();
            last[k] = j;
        }
        let (u, u_star) = (design.boundaries.outer[j], design.boundaries.inner[j]);
        for (i, p) in pairs.iter().enumerate() {
            codes[i] = if active.contains(p.k) && active.contains(p.k_star) {
                let (nk, nks) = (layout.group_size(p.k, j) as f64, layout.group_size(p.k_star, j) as f64);
                let info = 1.0 / (1.0 / nk + 1.0 / nks);
                let z = (sums[p.k] / nk - sums[p.k_star] / nks) * libm::sqrt(info);
                let code = RegionCode::classify(z, u, u_star);
                if code.is_significant() && psi[p.k] == psi[p.k_star] {
                    false_rejection = true;
                }
                code
            } else {
                RegionCode::A6
            };
        }
        let t = active_set_transition(arms, active, &codes, follow)?;
        active = t.survivors;
        if t.stop != StopReason::Continue || j + 1 == stages {
            let stop = if t.stop == StopReason::Continue {
                StopReason::SimilarityStop
            } else {
                t.stop
            };
            let sample_size = (0..arms).map(|k| layout.group_size(k, last[k]) as u64).sum();
            return Ok(TrialRun {
                survivors: active,
                sample_size,
                stop,
                stop_stage: j,
                false_rejection,
            });
        }
    }
    unreachable!("the final analysis always ends the trial")
}

/// Standard normal draw by inversion of a 53-bit uniform on (0, 1).
#[inline]
fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    normal::quantile(u)
}

/// Replication `r` uses ChaCha8 stream `r` under `seed`, so results do not
/// depend on scheduling.
pub fn simulate(
    design: &TrialDesign,
    effects: &EffectConfiguration,
    options: &SimulationOptions,
) -> Result<SimulationResult> {
    if options.replications == 0 {
        return Err(Error::Invalid("at least one replication is required".into()));
    }
    effects.check(design.layout.arms())?;
    let best = effects.best_arms();
    let reps = options.replications;
    let chunks = reps.div_ceil(CHUNK);
    let parts = par::map_range(0..chunks, |c| -> Result<Tally> {
        let mut tally = Tally {
            min_n: u64::MAX,
            ..Default::default()
        };
        for r in c * CHUNK..((c + 1) * CHUNK).min(reps) {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(r);
            let run = run_trial(design, effects, options.honor_inner, || normal_draw(&mut rng))?;
            tally.errors += run.false_rejection as u64;
            tally.successes += (run.survivors == best) as u64;
            let n = run.sample_size as f64;
            tally.n_sum += n;
            tally.n_sq += n * n;
            tally.min_n = tally.min_n.min(run.sample_size);
            tally.max_n = tally.max_n.max(run.sample_size);
            tally.similarity += (run.stop == StopReason::SimilarityStop) as u64;
            *tally.terminal.entry(run.survivors).or_default() += 1;
        }
        Ok(tally)
    });
    let mut total = Tally::default();
    for part in parts {
        total.merge(part?);
    }
    let n = reps as f64;
    let mean = total.n_sum / n;
    let var = (total.n_sq / n - mean * mean).max(0.0);
    Ok(SimulationResult {
        replications: reps,
        seed: options.seed,
        effects: effects.clone(),
        fwer_hat: Proportion::from_count(total.errors, reps),
        power_hat: Proportion::from_count(total.successes, reps),
        expected_n_hat: MeanEstimate {
            value: mean,
            std_error: libm::sqrt(var / n),
        },
        min_n: total.min_n,
        max_n: total.max_n,
        terminal_set_counts: total.terminal,
        similarity_stops: total.similarity,
    })
}

/// Effects constant within blocks, block `b` shifted by `b * shift`.
pub fn partition_effects(partition: &PartitionHypothesisSet, shift: f64) -> EffectConfiguration {
    let psi = partition.block_of().iter().map(|&b| b as f64 * shift).collect();
    EffectConfiguration::new(psi)
}

/// Simulated FWER under the configuration `partition` describes.
pub fn simulate_type_i_profile(
    design: &TrialDesign,
    partition: &PartitionHypothesisSet,
    shift: f64,
    options: &SimulationOptions,
) -> Result<Proportion> {
    if partition.arms() != design.layout.arms() {
        return Err(Error::Invalid("partition and design have different arms".into()));
    }
    Ok(simulate(design, &partition_effects(partition, shift), options)?.fwer_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundarySet, TrialLayout};

    fn design(arms: usize, n: u32, outer: Vec<f64>, inner: Vec<f64>, binding: bool) -> TrialDesign {
        let stages = outer.len();
        TrialDesign::new(
            TrialLayout::equal(arms, stages, n).unwrap(),
            BoundarySet::new(outer, inner).unwrap(),
            binding,
        )
        .unwrap()
    }

    #[test]
    fn untestable_design_never_rejects() {
        let inf = f64::INFINITY;
        let d = design(3, 5, vec![inf, inf], vec![0.0, inf], true);
        let r = simulate(&d, &EffectConfiguration::global_null(3), &SimulationOptions::new(2000, 3)).unwrap();
        assert_eq!(r.fwer_hat.value, 0.0);
        assert_eq!(r.min_n, 30);
        assert_eq!(r.max_n, 30);
        assert_eq!(r.terminal_set_counts[&ArmSet::full(3)], 2000);
    }

    #[test]
    fn single_analysis_rate() {
        let d = design(2, 4, vec![1.96], vec![1.96], true);
        let r = simulate(&d, &EffectConfiguration::global_null(2), &SimulationOptions::new(200_000, 9)).unwrap();
        let exact = 2.0 * normal::sf(1.96);
        assert!((r.fwer_hat.value - exact).abs() < 4.0 * r.fwer_hat.std_error, "{r:?}");
        let counts: u64 = r.terminal_set_counts.values().sum();
        assert_eq!(counts, 200_000);
    }

    #[test]
    fn deterministic_and_chunk_independent() {
        let d = design(3, 10, vec![2.5, 2.2], vec![0.0, 2.2], true);
        let e = EffectConfiguration::lfc(3, 1, 0.5);
        let a = simulate(&d, &e, &SimulationOptions::new(10_000, 42)).unwrap();
        let b = simulate(&d, &e, &SimulationOptions::new(10_000, 42)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&d, &e, &SimulationOptions::new(10_000, 43)).unwrap();
        assert_ne!(a.terminal_set_counts, c.terminal_set_counts);
        // The first replications do not depend on the total count.
        let short = simulate(&d, &e, &SimulationOptions::new(1, 42)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        rng.set_stream(0);
        let run = run_trial(&d, &e, true, || normal_draw(&mut rng)).unwrap();
        assert_eq!(short.terminal_set_counts.keys().next(), Some(&run.survivors));
    }

    #[test]
    fn sample_size_bounds() {
        let d = design(4, 7, vec![2.8, 2.4, 2.3], vec![0.0, 1.4, 2.3], true);
        let r = simulate(&d, &EffectConfiguration::lfc(4, 2, 0.6), &SimulationOptions::new(5000, 1)).unwrap();
        assert!(r.min_n >= 28);
        assert!(r.max_n <= 84);
        assert!(r.expected_n_hat.value > 28.0 && r.expected_n_hat.value < 84.0);
    }

    #[test]
    fn partition_shift() {
        let p = PartitionHypothesisSet::new(3, vec![ArmSet::from_arms([0]), ArmSet::from_arms([1, 2])]).unwrap();
        assert_eq!(partition_effects(&p, 5.0).psi, vec![0.0, 5.0, 5.0]);
    }
}

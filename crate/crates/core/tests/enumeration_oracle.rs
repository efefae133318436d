//! The all-outcomes family must partition the space of statistic vectors:
//! every realisation lies in exactly one configuration rectangle, and every
//! configuration is reachable. Checked by sampling trial data directly.

use std::collections::BTreeMap;

use mamsap_core::enumeration::{build_family, EnumerationLimits, FamilyKind};
use mamsap_core::model::{hypothesis_family, BoundarySet, TrialDesign, TrialLayout};
use mamsap_core::normal;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draw(rng: &mut ChaCha8Rng) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    normal::quantile(u)
}

/// Statistics of every pair at every stage, stage-major. Cumulative means at
/// different stages are drawn independently: with continuous data any
/// combination is reachable, so every feasible configuration has positive
/// probability.
fn statistics(layout: &TrialLayout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let arms = layout.arms();
    let mut z = Vec::new();
    for j in 0..layout.stages() {
        let scale = [0.3, 1.0, 2.0, 4.0, 8.0][(rng.next_u64() % 5) as usize];
        let means: Vec<f64> = (0..arms)
            .map(|k| scale * draw(rng) / (layout.group_size(k, j) as f64).sqrt())
            .collect();
        for h in hypothesis_family(arms) {
            let (a, b) = (layout.group_size(h.k, j) as f64, layout.group_size(h.k_star, j) as f64);
            let info = 1.0 / (1.0 / a + 1.0 / b);
            z.push((means[h.k] - means[h.k_star]) * info.sqrt());
        }
    }
    z
}

fn check_partition(design: &TrialDesign, honor_inner: bool, samples: usize) {
    let family = build_family(design, FamilyKind::AllOutcomes, honor_inner, EnumerationLimits::default()).unwrap();
    let rects = family.rectangles(&design.boundaries);
    let mut hits = vec![0u64; rects.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..samples {
        let z = statistics(&design.layout, &mut rng);
        let inside: Vec<usize> = rects
            .iter()
            .enumerate()
            .filter(|(_, r)| z.iter().enumerate().all(|(i, &x)| r.lower[i] < x && x < r.upper[i]))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(inside.len(), 1, "statistics {z:?} fall in {} configurations", inside.len());
        hits[inside[0]] += 1;
    }
    let missed: Vec<String> = hits
        .iter()
        .zip(family.configs())
        .filter(|(&h, _)| h == 0)
        .map(|(_, c)| c.codes().iter().map(|c| c.label()).collect::<Vec<_>>().join(" "))
        .collect();
    assert!(missed.is_empty(), "{} of {} configurations never reached: {missed:?}", missed.len(), family.len());
}

#[test]
fn three_arms_two_stages_binding() {
    let layout = TrialLayout::equal(3, 2, 10).unwrap();
    let b = BoundarySet::new(vec![2.4, 2.1], vec![0.8, 2.1]).unwrap();
    let design = TrialDesign::new(layout, b, true).unwrap();
    check_partition(&design, true, 300_000);
}

#[test]
fn three_arms_two_stages_without_similarity_stop() {
    let layout = TrialLayout::equal(3, 2, 10).unwrap();
    let b = BoundarySet::new(vec![2.4, 2.1], vec![0.8, 2.1]).unwrap();
    let design = TrialDesign::new(layout, b, false).unwrap();
    check_partition(&design, false, 300_000);
}

#[test]
fn three_arms_two_stages_no_interim_similarity_test() {
    let layout = TrialLayout::equal(3, 2, 10).unwrap();
    let b = BoundarySet::new(vec![2.6, 2.0], vec![0.0, 2.0]).unwrap();
    let design = TrialDesign::new(layout, b, true).unwrap();
    check_partition(&design, true, 300_000);
}

#[test]
fn unequal_allocation() {
    let layout = TrialLayout::new(vec![vec![10, 20], vec![14, 26], vec![8, 30]]).unwrap();
    let b = BoundarySet::new(vec![2.4, 2.1], vec![0.8, 2.1]).unwrap();
    let design = TrialDesign::new(layout, b, true).unwrap();
    check_partition(&design, true, 300_000);
}

#[test]
fn two_arms_two_stages_by_hand() {
    // Stage 1 has no similarity test: stop with a1 or a5, otherwise one of
    // three final outcomes.
    let layout = TrialLayout::equal(2, 2, 10).unwrap();
    let b = BoundarySet::new(vec![2.5, 2.0], vec![0.0, 2.0]).unwrap();
    let design = TrialDesign::new(layout, b, true).unwrap();
    let family = build_family(&design, FamilyKind::AllOutcomes, true, EnumerationLimits::default()).unwrap();
    let mut by_stop: BTreeMap<usize, usize> = BTreeMap::new();
    for p in family.profiles() {
        *by_stop.entry(p.stop_stage).or_default() += 1;
    }
    assert_eq!(family.len(), 5);
    assert_eq!(by_stop[&0], 2);
    assert_eq!(by_stop[&1], 3);
    check_partition(&design, true, 50_000);
}

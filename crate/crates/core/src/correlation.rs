//! Joint Gaussian law of all pairwise statistics across stages.
//!
//! Statistics use the information convention: `Z = (mean_k - mean_k*) * sqrt(I)`
//! with `I = (1/n_k + 1/n_k*)^-1` under unit observation variance, so the drift
//! of `Z_{(k,k*),j}` is `(psi_k - psi_k*) * sqrt(I_{(k,k*),j})`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{hypothesis_family, EffectConfiguration, HypothesisIndex, TrialLayout};

/// Rank cut-off for pivots, relative to the largest pivot.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// `(1/n_{k,j} + 1/n_{k*,j})^-1`.
pub fn information(layout: &TrialLayout, pair: HypothesisIndex, stage: usize) -> f64 {
    let a = layout.group_size(pair.k, stage) as f64;
    let b = layout.group_size(pair.k_star, stage) as f64;
    1.0 / (1.0 / a + 1.0 / b)
}

/// `corr(Z_{pair1,stage1}, Z_{pair2,stage2})`.
///
/// Cumulative means of the same arm at stages `j1 <= j2` have covariance
/// `1/n_{a,j2}`; different arms are independent.
pub fn correlation(
    layout: &TrialLayout,
    pair1: HypothesisIndex,
    stage1: usize,
    pair2: HypothesisIndex,
    stage2: usize,
) -> f64 {
    let later = stage1.max(stage2);
    let sigma = |a: usize, b: usize| {
        if a == b {
            1.0 / layout.group_size(a, later) as f64
        } else {
            0.0
        }
    };
    let cov = sigma(pair1.k, pair2.k) + sigma(pair1.k_star, pair2.k_star)
        - sigma(pair1.k, pair2.k_star)
        - sigma(pair1.k_star, pair2.k);
    let scale = libm::sqrt(information(layout, pair1, stage1) * information(layout, pair2, stage2));
    (cov * scale).clamp(-1.0, 1.0)
}

/// Drift vector and correlation matrix over a set of `(hypothesis, stage)` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGaussianModel {
    coordinates: Vec<(HypothesisIndex, usize)>,
    drift: Vec<f64>,
    /// Row-major, `dims x dims`.
    corr: Vec<f64>,
}

impl JointGaussianModel {
    /// Builds a model directly from its parts. `corr` is row-major.
    pub fn from_parts(
        coordinates: Vec<(HypothesisIndex, usize)>,
        drift: Vec<f64>,
        corr: Vec<f64>,
    ) -> Result<Self> {
        let d = drift.len();
        if coordinates.len() != d || corr.len() != d * d {
            return Err(Error::Invalid(format!(
                "model parts disagree: {} coordinates, {} drifts, {} correlations",
                coordinates.len(),
                d,
                corr.len()
            )));
        }
        Ok(JointGaussianModel {
            coordinates,
            drift,
            corr,
        })
    }

    pub fn dims(&self) -> usize {
        self.drift.len()
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn corr(&self) -> &[f64] {
        &self.corr
    }

    #[inline]
    pub fn corr_at(&self, i: usize, j: usize) -> f64 {
        self.corr[i * self.dims() + j]
    }

    pub fn coordinates(&self) -> &[(HypothesisIndex, usize)] {
        &self.coordinates
    }

    /// Position of `(pair, stage)` in the model, if present.
    pub fn coordinate_index(&self, pair: HypothesisIndex, stage: usize) -> Option<usize> {
        self.coordinates.iter().position(|&c| c == (pair, stage))
    }

    /// Sub-model over the given positions, in the given order.
    pub fn restrict(&self, positions: &[usize]) -> JointGaussianModel {
        let d = self.dims();
        let mut corr = Vec::with_capacity(positions.len() * positions.len());
        for &i in positions {
            for &j in positions {
                corr.push(self.corr[i * d + j]);
            }
        }
        JointGaussianModel {
            coordinates: positions.iter().map(|&i| self.coordinates[i]).collect(),
            drift: positions.iter().map(|&i| self.drift[i]).collect(),
            corr,
        }
    }

    /// Numerical rank from a fully pivoted Cholesky factorisation.
    pub fn rank(&self) -> usize {
        let d = self.dims();
        let mut a = self.corr.clone();
        let mut rank = 0;
        let mut largest = 0.0f64;
        let mut remaining: Vec<usize> = (0..d).collect();
        while !remaining.is_empty() {
            let (slot, &p) = remaining
                .iter()
                .enumerate()
                .max_by(|x, y| a[x.1 * d + x.1].total_cmp(&a[y.1 * d + y.1]))
                .unwrap();
            let pivot = a[p * d + p];
            largest = largest.max(pivot);
            if pivot <= RANK_TOLERANCE * largest {
                break;
            }
            remaining.swap_remove(slot);
            rank += 1;
            for &i in &remaining {
                let f = a[i * d + p] / pivot;
                for &j in &remaining {
                    a[i * d + j] -= f * a[p * d + j];
                }
            }
        }
        rank
    }
}

/// Model over all `eta * J` statistics (stage-major), or over `restriction` when given.
pub fn build_model(
    layout: &TrialLayout,
    effects: &EffectConfiguration,
    restriction: Option<&[(HypothesisIndex, usize)]>,
) -> Result<JointGaussianModel> {
    effects.check(layout.arms())?;
    let coordinates: Vec<(HypothesisIndex, usize)> = match restriction {
        Some([]) => return Err(Error::Restriction("empty coordinate restriction".into())),
        Some(coords) => {
            for &(pair, stage) in coords {
                if pair.k >= pair.k_star || pair.k_star >= layout.arms() || stage >= layout.stages() {
                    return Err(Error::Restriction(format!(
                        "coordinate {pair} at stage {} is outside the layout",
                        stage + 1
                    )));
                }
            }
            coords.to_vec()
        }
        None => (0..layout.stages())
            .flat_map(|j| hypothesis_family(layout.arms()).into_iter().map(move |h| (h, j)))
            .collect(),
    };
    let drift = coordinates
        .iter()
        .map(|&(h, j)| (effects.psi[h.k] - effects.psi[h.k_star]) * libm::sqrt(information(layout, h, j)))
        .collect();
    let d = coordinates.len();
    let mut corr = alloc::vec![0.0; d * d];
    for a in 0..d {
        corr[a * d + a] = 1.0;
        for b in 0..a {
            let (h1, j1) = coordinates[a];
            let (h2, j2) = coordinates[b];
            let rho = correlation(layout, h1, j1, h2, j2);
            corr[a * d + b] = rho;
            corr[b * d + a] = rho;
        }
    }
    Ok(JointGaussianModel {
        coordinates,
        drift,
        corr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(k: usize, k_star: usize) -> HypothesisIndex {
        HypothesisIndex { k, k_star }
    }

    #[test]
    fn information_values() {
        let sepsis = TrialLayout::equal(4, 3, 81).unwrap();
        assert!((information(&sepsis, h(0, 1), 0) - 40.5).abs() < 1e-12);
        let tiny = TrialLayout::equal(2, 1, 2).unwrap();
        assert!((information(&tiny, h(0, 1), 0) - 1.0).abs() < 1e-12);
        let uneven = TrialLayout::new(vec![vec![10], vec![40]]).unwrap();
        assert!((information(&uneven, h(0, 1), 0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_correlations() {
        let l = TrialLayout::equal(4, 3, 10).unwrap();
        assert!((correlation(&l, h(0, 1), 0, h(0, 1), 2) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((correlation(&l, h(0, 1), 1, h(0, 2), 1) - 0.5).abs() < 1e-12);
        assert!((correlation(&l, h(0, 1), 1, h(1, 2), 1) + 0.5).abs() < 1e-12);
        assert_eq!(correlation(&l, h(0, 1), 1, h(2, 3), 1), 0.0);
        assert!((correlation(&l, h(1, 3), 2, h(1, 3), 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_and_global_null_models() {
        let l = TrialLayout::equal(2, 1, 5).unwrap();
        let m = build_model(&l, &EffectConfiguration::new(vec![0.3, 0.3]), None).unwrap();
        assert_eq!(m.dims(), 1);
        assert_eq!(m.drift(), &[0.0]);
        assert_eq!(m.corr(), &[1.0]);

        let l = TrialLayout::equal(4, 3, 81).unwrap();
        let m = build_model(&l, &EffectConfiguration::global_null(4), None).unwrap();
        assert_eq!(m.dims(), 18);
        assert!(m.drift().iter().all(|&d| d == 0.0));
        assert_eq!(m.rank(), 9);
    }

    #[test]
    fn lfc_drift() {
        let delta = 1.5f64.ln();
        let l = TrialLayout::equal(4, 3, 81).unwrap();
        let m = build_model(&l, &EffectConfiguration::lfc(4, 0, delta), None).unwrap();
        for (i, &(pair, stage)) in m.coordinates().iter().enumerate() {
            let expected = if pair.k == 0 {
                delta * (81.0 * (stage + 1) as f64 / 2.0).sqrt()
            } else {
                0.0
            };
            assert!((m.drift()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn restriction() {
        let l = TrialLayout::equal(3, 2, 4).unwrap();
        let coords = [(h(0, 1), 1), (h(1, 2), 0)];
        let m = build_model(&l, &EffectConfiguration::global_null(3), Some(&coords)).unwrap();
        assert_eq!(m.dims(), 2);
        assert_eq!(m.coordinate_index(h(1, 2), 0), Some(1));
        assert!(build_model(&l, &EffectConfiguration::global_null(3), Some(&[])).is_err());
        assert!(build_model(&l, &EffectConfiguration::global_null(2), None).is_err());
    }
}

//! Rectangle probabilities `P(l < Z < u)` for multivariate normal vectors whose
//! correlation matrix may be singular.
//!
//! The integral is transformed by sequential conditioning on a pivoted
//! Cholesky factor (Genz's separation of variables). At each step the pivot is
//! the remaining coordinate with the smallest expected conditional interval
//! probability, among those with non-negligible conditional variance.
//! Coordinates that are exact linear functions of the already-sampled latent
//! variables carry no variance of their own: their interval constraint is
//! folded into the interval of the last latent variable they depend on, so the
//! integrand stays a product of conditional interval probabilities.
//!
//! The remaining `rank - 1` dimensional integral over the unit cube is
//! estimated with a randomly shifted Richtmyer lattice, a baker's transform
//! and antithetic pairs. The spread of the per-shift means gives the standard
//! error; the point count doubles until the target is met.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::correlation::{JointGaussianModel, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::normal;

/// A dependent coordinate within this distance of a bound counts as inside.
const DEPENDENT_SLACK: f64 = 1e-9;

/// Integration region, one open interval per model coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Rectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rectangle {
    /// Zero-width intervals are allowed and make the probability zero.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                model: lower.len(),
                rectangle: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::Invalid("rectangle needs lower <= upper in every coordinate".into()));
        }
        Ok(Rectangle { lower, upper })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l >= u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub evaluations: u64,
}

impl ProbabilityEstimate {
    pub const ZERO: ProbabilityEstimate = ProbabilityEstimate::exact(0.0);
    pub const ONE: ProbabilityEstimate = ProbabilityEstimate::exact(1.0);

    pub const fn exact(value: f64) -> Self {
        ProbabilityEstimate {
            value,
            std_error: 0.0,
            evaluations: 0,
        }
    }

    /// `1 - self`.
    pub fn complement(self) -> Self {
        ProbabilityEstimate {
            value: 1.0 - self.value,
            ..self
        }
    }

    /// Weighted sum of independent estimates.
    pub fn combine<I: IntoIterator<Item = (f64, ProbabilityEstimate)>>(terms: I) -> Self {
        let mut values = Vec::new();
        let mut variance = 0.0;
        let mut evaluations = 0;
        for (w, e) in terms {
            values.push(w * e.value);
            variance += w * w * e.std_error * e.std_error;
            evaluations += e.evaluations;
        }
        ProbabilityEstimate {
            value: crate::sum::pairwise(&values),
            std_error: libm::sqrt(variance),
            evaluations,
        }
    }
}

/// Point budget and stopping rule for [`rect_prob`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureOptions {
    /// Stop once the standard error is at or below this.
    pub target_std_error: f64,
    /// Independent random shifts of the lattice.
    pub shifts: usize,
    /// Lattice points per shift in the first round (each point is evaluated
    /// with its antithetic partner).
    pub initial_points: usize,
    /// Give up after this many integrand evaluations.
    pub max_evaluations: u64,
    /// Evaluate exactly `initial_points` per shift and never fail. Makes the
    /// estimate a smooth deterministic function of the bounds, which root
    /// finders need.
    pub fixed: bool,
}

impl QuadratureOptions {
    pub fn with_target(target_std_error: f64) -> Self {
        QuadratureOptions {
            target_std_error,
            ..Self::default()
        }
    }

    /// Default for root finding.
    pub fn solving() -> Self {
        Self::with_target(1e-5)
    }

    /// Default for reported operating characteristics.
    pub fn reporting() -> Self {
        Self::with_target(1e-4)
    }

    pub fn fixed(points: usize) -> Self {
        QuadratureOptions {
            initial_points: points,
            fixed: true,
            ..Self::default()
        }
    }
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            target_std_error: 1e-4,
            shifts: 12,
            initial_points: 8,
            max_evaluations: 400_000_000,
            fixed: false,
        }
    }
}

/// Drops coordinates whose interval is the whole real line. The probability is unchanged.
pub fn reduce_rectangle(model: &JointGaussianModel, rect: &Rectangle) -> (JointGaussianModel, Rectangle) {
    let keep: Vec<usize> = (0..rect.dims())
        .filter(|&i| rect.lower[i] > f64::NEG_INFINITY || rect.upper[i] < f64::INFINITY)
        .collect();
    let reduced = Rectangle {
        lower: keep.iter().map(|&i| rect.lower[i]).collect(),
        upper: keep.iter().map(|&i| rect.upper[i]).collect(),
    };
    (model.restrict(&keep), reduced)
}

/// Estimates `P(lower < Z < upper)` for `Z ~ N(drift, corr)`. Deterministic for a given seed.
pub fn rect_prob(
    model: &JointGaussianModel,
    rect: &Rectangle,
    options: &QuadratureOptions,
    seed: u64,
) -> Result<ProbabilityEstimate> {
    rect_prob_stream(model, rect, options, seed, 0)
}

/// [`rect_prob`] with an explicit randomisation stream, so that batches of
/// rectangles get independent shifts regardless of evaluation order.
pub fn rect_prob_stream(
    model: &JointGaussianModel,
    rect: &Rectangle,
    options: &QuadratureOptions,
    seed: u64,
    stream: u64,
) -> Result<ProbabilityEstimate> {
    if model.dims() != rect.dims() {
        return Err(Error::Dimension {
            model: model.dims(),
            rectangle: rect.dims(),
        });
    }
    if rect.is_empty() {
        return Ok(ProbabilityEstimate::ZERO);
    }
    let (model, rect) = reduce_rectangle(model, rect);
    if model.dims() == 0 {
        return Ok(ProbabilityEstimate::ONE);
    }
    let factor = Factor::new(&model, &rect);
    if factor.rank() == 1 {
        let mut y = [0.0f64; 1];
        return Ok(ProbabilityEstimate::exact(factor.integrand(&[], &mut y)));
    }
    integrate(&factor, options, seed, stream)
}

struct Row {
    /// Coefficients on the latent variables, the last one being this row's own column.
    coeffs: Vec<f64>,
    lower: f64,
    upper: f64,
}

/// Pivoted, rank-revealing factorisation of one standardised rectangle problem.
struct Factor {
    pivots: Vec<Row>,
    /// `dependents[c]`: rows whose last non-zero coefficient is at column `c`.
    dependents: Vec<Vec<Row>>,
}

impl Factor {
    fn new(model: &JointGaussianModel, rect: &Rectangle) -> Self {
        let d = model.dims();
        let lower: Vec<f64> = (0..d).map(|i| rect.lower[i] - model.drift()[i]).collect();
        let upper: Vec<f64> = (0..d).map(|i| rect.upper[i] - model.drift()[i]).collect();

        // l[i]: coefficients of original coordinate i on the columns chosen so far.
        let mut l: Vec<Vec<f64>> = vec![Vec::new(); d];
        let mut remaining: Vec<usize> = (0..d).collect();
        let mut expected: Vec<f64> = Vec::new();
        let mut pivots: Vec<Row> = Vec::new();
        let mut dependents: Vec<Vec<Row>> = Vec::new();
        let mut largest = 0.0f64;

        while !remaining.is_empty() {
            let c = pivots.len();
            let mut best: Option<(usize, f64, f64, f64)> = None;
            let mut still = Vec::with_capacity(remaining.len());
            for &i in &remaining {
                let var = model.corr_at(i, i) - l[i].iter().map(|x| x * x).sum::<f64>();
                if c > 0 && var <= RANK_TOLERANCE * largest {
                    dependents[c - 1].push(Row {
                        coeffs: l[i].clone(),
                        lower: lower[i] - DEPENDENT_SLACK,
                        upper: upper[i] + DEPENDENT_SLACK,
                    });
                    continue;
                }
                still.push(i);
                let sd = libm::sqrt(var);
                let shift: f64 = l[i].iter().zip(&expected).map(|(a, b)| a * b).sum();
                let a = (lower[i] - shift) / sd;
                let b = (upper[i] - shift) / sd;
                let p = normal::interval(a, b);
                if best.map_or(true, |(_, bp, _, _)| p < bp) {
                    best = Some((i, p, a, b));
                }
            }
            remaining = still;
            let Some((p, prob, a, b)) = best else { break };
            remaining.retain(|&i| i != p);

            let var = model.corr_at(p, p) - l[p].iter().map(|x| x * x).sum::<f64>();
            largest = largest.max(var);
            let diag = libm::sqrt(var);
            for &i in &remaining {
                let dot: f64 = l[i].iter().zip(&l[p]).map(|(x, y)| x * y).sum();
                let coeff = (model.corr_at(i, p) - dot) / diag;
                l[i].push(coeff);
            }
            let mut coeffs = l[p].clone();
            coeffs.push(diag);
            pivots.push(Row {
                coeffs,
                lower: lower[p],
                upper: upper[p],
            });
            dependents.push(Vec::new());
            expected.push(truncated_mean(a, b, prob));
            // Columns of chosen pivots are no longer updated.
            l[p].clear();
        }
        Factor { pivots, dependents }
    }

    fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Product of conditional interval probabilities for one point of the
    /// `rank - 1` dimensional unit cube.
    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let r = self.pivots.len();
        let mut prod = 1.0;
        for c in 0..r {
            let row = &self.pivots[c];
            let s = dot(&row.coeffs[..c], &y[..c]);
            let diag = row.coeffs[c];
            let mut lo = (row.lower - s) / diag;
            let mut hi = (row.upper - s) / diag;
            for dep in &self.dependents[c] {
                let s = dot(&dep.coeffs[..c], &y[..c]);
                let coeff = dep.coeffs[c];
                let a = (dep.lower - s) / coeff;
                let b = (dep.upper - s) / coeff;
                if coeff > 0.0 {
                    lo = lo.max(a);
                    hi = hi.min(b);
                } else {
                    lo = lo.max(b);
                    hi = hi.min(a);
                }
            }
            if !(hi > lo) {
                return 0.0;
            }
            let last = c + 1 == r;
            if lo > 0.0 {
                let e = normal::sf(hi);
                let p = normal::sf(lo) - e;
                prod *= p;
                if !last {
                    y[c] = -normal::quantile(clamp_unit(e + w[c] * p));
                }
            } else {
                let e = normal::cdf(lo);
                let p = normal::cdf(hi) - e;
                prod *= p;
                if !last {
                    y[c] = normal::quantile(clamp_unit(e + w[c] * p));
                }
            }
            if prod <= 0.0 {
                return 0.0;
            }
        }
        prod
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn clamp_unit(t: f64) -> f64 {
    t.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn truncated_mean(a: f64, b: f64, prob: f64) -> f64 {
    if prob > 1e-300 {
        (normal::pdf(a) - normal::pdf(b)) / prob
    } else if a.is_finite() && b.is_finite() {
        0.5 * (a + b)
    } else if a.is_finite() {
        a
    } else if b.is_finite() {
        b
    } else {
        0.0
    }
}

/// Fractional parts of square roots of the first `n` primes.
fn richtmyer(n: usize) -> Vec<f64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
        .into_iter()
        .map(|p| {
            let s = libm::sqrt(p as f64);
            s - libm::floor(s)
        })
        .collect()
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn integrate(factor: &Factor, options: &QuadratureOptions, seed: u64, stream: u64) -> Result<ProbabilityEstimate> {
    let dim = factor.rank() - 1;
    let generator = richtmyer(dim);
    let shifts = options.shifts.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let offsets: Vec<Vec<f64>> = (0..shifts)
        .map(|_| (0..dim).map(|_| unit_f64(&mut rng)).collect())
        .collect();

    let mut sums = vec![0.0f64; shifts];
    let mut w = vec![0.0f64; dim];
    let mut w_anti = vec![0.0f64; dim];
    let mut y = vec![0.0f64; dim + 1];
    let mut done = 0usize;
    let mut batch = options.initial_points.max(1);
    loop {
        for (m, offset) in offsets.iter().enumerate() {
            let mut acc = 0.0;
            for k in done..done + batch {
                let kf = k as f64;
                for i in 0..dim {
                    let x = kf * generator[i] + offset[i];
                    let frac = x - libm::floor(x);
                    let baker = libm::fabs(2.0 * frac - 1.0);
                    w[i] = baker;
                    w_anti[i] = 1.0 - baker;
                }
                acc += 0.5 * (factor.integrand(&w, &mut y) + factor.integrand(&w_anti, &mut y));
            }
            sums[m] += acc;
        }
        done += batch;
        let means: Vec<f64> = sums.iter().map(|s| s / done as f64).collect();
        let mean = means.iter().sum::<f64>() / shifts as f64;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (shifts - 1) as f64;
        let std_error = libm::sqrt(var / shifts as f64);
        let evaluations = (2 * done * shifts) as u64;
        let estimate = ProbabilityEstimate {
            value: mean.clamp(0.0, 1.0),
            std_error,
            evaluations,
        };
        if options.fixed || std_error <= options.target_std_error {
            return Ok(estimate);
        }
        if evaluations.saturating_mul(2) > options.max_evaluations {
            return Err(Error::Precision {
                target: options.target_std_error,
                achieved: std_error,
                evaluations,
            });
        }
        batch = done;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::build_model;
    use crate::model::{EffectConfiguration, HypothesisIndex, TrialLayout};

    fn model(corr: Vec<f64>, drift: Vec<f64>) -> JointGaussianModel {
        let coords = (0..drift.len())
            .map(|j| (HypothesisIndex { k: 0, k_star: 1 }, j))
            .collect();
        JointGaussianModel::from_parts(coords, drift, corr).unwrap()
    }

    #[test]
    fn one_dimensional_is_exact() {
        let m = model(vec![1.0], vec![0.0]);
        let r = Rectangle::new(vec![-1.96], vec![1.96]).unwrap();
        let p = rect_prob(&m, &r, &QuadratureOptions::default(), 1).unwrap();
        assert!((p.value - normal::interval(-1.96, 1.96)).abs() < 1e-12);
        assert_eq!(p.std_error, 0.0);
    }

    #[test]
    fn bivariate_orthant_matches_arcsine() {
        let rho = 0.5f64;
        let m = model(vec![1.0, rho, rho, 1.0], vec![0.0, 0.0]);
        let r = Rectangle::new(vec![f64::NEG_INFINITY; 2], vec![0.0; 2]).unwrap();
        let p = rect_prob(&m, &r, &QuadratureOptions::with_target(1e-6), 3).unwrap();
        let exact = 0.25 + rho.asin() / (2.0 * core::f64::consts::PI);
        assert!((p.value - exact).abs() < 5.0 * p.std_error.max(1e-9), "{p:?} vs {exact}");
    }

    #[test]
    fn empty_and_full_rectangles() {
        let m = model(vec![1.0, 0.2, 0.2, 1.0], vec![0.0, 0.0]);
        let full = Rectangle::new(vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2]).unwrap();
        assert_eq!(rect_prob(&m, &full, &QuadratureOptions::default(), 0).unwrap().value, 1.0);
        let empty = Rectangle::new(vec![0.0, -1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(rect_prob(&m, &empty, &QuadratureOptions::default(), 0).unwrap().value, 0.0);
        assert!(Rectangle::new(vec![1.0], vec![0.0]).is_err());
        let wrong = Rectangle::new(vec![0.0], vec![1.0]).unwrap();
        assert!(rect_prob(&m, &wrong, &QuadratureOptions::default(), 0).is_err());
    }

    #[test]
    fn singular_three_arm_constraint() {
        // Z23 = (Z13 - Z12)/1 in equal allocation; Z12 > c and Z23 > c force Z13 > 2c.
        let l = TrialLayout::equal(3, 1, 10).unwrap();
        let m = build_model(&l, &EffectConfiguration::global_null(3), None).unwrap();
        let c = 1.0;
        let r = Rectangle::new(vec![c, f64::NEG_INFINITY, c], vec![f64::INFINITY, 1.9 * c, f64::INFINITY]).unwrap();
        let p = rect_prob(&m, &r, &QuadratureOptions::default(), 5).unwrap();
        assert!(p.value <= 3.0 * p.std_error + 1e-12, "{p:?}");
        let r = Rectangle::new(vec![c, f64::NEG_INFINITY, c], vec![f64::INFINITY, 2.1 * c, f64::INFINITY]).unwrap();
        let p = rect_prob(&m, &r, &QuadratureOptions::default(), 5).unwrap();
        assert!(p.value > 0.0);
    }

    #[test]
    fn seed_determinism() {
        let l = TrialLayout::equal(4, 2, 10).unwrap();
        let m = build_model(&l, &EffectConfiguration::global_null(4), None).unwrap();
        let r = Rectangle::new(vec![-2.5; 12], vec![2.5; 12]).unwrap();
        let o = QuadratureOptions::with_target(1e-4);
        let a = rect_prob(&m, &r, &o, 42).unwrap();
        let b = rect_prob(&m, &r, &o, 42).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn unreachable_precision_fails() {
        let l = TrialLayout::equal(4, 2, 10).unwrap();
        let m = build_model(&l, &EffectConfiguration::global_null(4), None).unwrap();
        let r = Rectangle::new(vec![-1.0; 12], vec![1.5; 12]).unwrap();
        let o = QuadratureOptions {
            target_std_error: 1e-12,
            max_evaluations: 10_000,
            ..QuadratureOptions::default()
        };
        match rect_prob(&m, &r, &o, 1) {
            Err(Error::Precision { achieved, .. }) => assert!(achieved > 1e-12),
            other => panic!("expected precision failure, got {other:?}"),
        }
    }
}

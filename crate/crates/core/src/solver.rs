//! Boundary shapes, the boundary scale that spends exactly `alpha`, and the
//! smallest group size that reaches the power target.

use alloc::format;
use alloc::vec::Vec;

use crate::characteristics::{fwer_binding_global, fwer_nonbinding_global, power_lfc, EvaluationOptions};
use crate::error::{Error, Result};
use crate::model::{BoundarySet, TrialDesign, TrialLayout};
use crate::mvn::{ProbabilityEstimate, QuadratureOptions};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum BoundaryShape {
    /// `u_j = C (t^-1/2 + t^1/2)`, `u*_j = max(0, C (3 t^1/2 - t^-1/2))`.
    DoubleTriangular,
    /// `u_j = C` throughout, similarity tested only at the final analysis.
    FlatFinalOnly,
    /// Interim boundaries as given, `u_J = u*_J = C`.
    FixedInterim {
        #[cfg_attr(feature = "serde", serde(with = "crate::model::extended_reals"))]
        outer: Vec<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::model::extended_reals"))]
        inner: Vec<f64>,
    },
    /// Fixed vectors multiplied by the scale.
    Custom {
        #[cfg_attr(feature = "serde", serde(with = "crate::model::extended_reals"))]
        outer: Vec<f64>,
        #[cfg_attr(feature = "serde", serde(with = "crate::model::extended_reals"))]
        inner: Vec<f64>,
    },
}

/// A boundary shape with its scale `C`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundaryFamily {
    pub shape: BoundaryShape,
    pub scale: f64,
}

impl BoundaryFamily {
    pub fn new(shape: BoundaryShape, scale: f64) -> Self {
        BoundaryFamily { shape, scale }
    }

    pub fn double_triangular(scale: f64) -> Self {
        Self::new(BoundaryShape::DoubleTriangular, scale)
    }

    /// Unscaled boundaries passed through as given.
    pub fn custom(outer: Vec<f64>, inner: Vec<f64>) -> Self {
        Self::new(BoundaryShape::Custom { outer, inner }, 1.0)
    }

    /// Boundaries at the given information fractions.
    pub fn boundaries(&self, fractions: &[f64]) -> Result<BoundarySet> {
        let c = self.scale;
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Boundary {
                stage: 0,
                reason: format!("scale must be positive and finite, got {c}"),
            });
        }
        let stages = fractions.len();
        let (outer, inner) = match &self.shape {
            BoundaryShape::DoubleTriangular => fractions
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    if j + 1 == stages {
                        // Exact closure regardless of rounding in t.
                        (2.0 * c, 2.0 * c)
                    } else {
                        let (a, b) = (libm::sqrt(t), 1.0 / libm::sqrt(t));
                        (c * (b + a), (c * (3.0 * a - b)).max(0.0))
                    }
                })
                .unzip(),
            BoundaryShape::FlatFinalOnly => (0..stages)
                .map(|j| (c, if j + 1 == stages { c } else { 0.0 }))
                .unzip(),
            BoundaryShape::FixedInterim { outer, inner } => {
                if outer.len() + 1 != stages || inner.len() + 1 != stages {
                    return Err(Error::Boundary {
                        stage: 0,
                        reason: format!(
                            "{} and {} interim boundaries for a {stages}-stage layout",
                            outer.len(),
                            inner.len()
                        ),
                    });
                }
                let mut outer = outer.clone();
                let mut inner = inner.clone();
                outer.push(c);
                inner.push(c);
                (outer, inner)
            }
            BoundaryShape::Custom { outer, inner } => {
                if outer.len() != stages || inner.len() != stages {
                    return Err(Error::Boundary {
                        stage: 0,
                        reason: format!(
                            "custom boundaries have {} and {} stages, layout has {stages}",
                            outer.len(),
                            inner.len()
                        ),
                    });
                }
                (
                    outer.iter().map(|u| u * c).collect(),
                    inner.iter().map(|u| u * c).collect(),
                )
            }
        };
        BoundarySet::new(outer, inner)
    }
}

/// Expands a boundary family over the layout's information fractions.
pub fn assemble_design(layout: &TrialLayout, family: &BoundaryFamily, binding: bool) -> Result<TrialDesign> {
    let boundaries = family.boundaries(&layout.information_fractions())?;
    TrialDesign::new(layout.clone(), boundaries, binding)
}

/// Cumulative allocation per arm and stage relative to `n_{1,1}`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AllocationTemplate {
    ratios: Vec<Vec<f64>>,
}

impl AllocationTemplate {
    pub fn new(ratios: Vec<Vec<f64>>) -> Result<Self> {
        let first = ratios.first().and_then(|r| r.first()).copied();
        if first != Some(1.0) {
            return Err(Error::Layout("allocation ratio of arm 1 at stage 1 must be 1".into()));
        }
        if ratios.iter().flatten().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Layout("allocation ratios must be positive".into()));
        }
        let template = AllocationTemplate { ratios };
        template.layout(1)?;
        Ok(template)
    }

    /// `n` per arm per stage.
    pub fn equal(arms: usize, stages: usize) -> Self {
        AllocationTemplate {
            ratios: alloc::vec![(1..=stages).map(|j| j as f64).collect(); arms],
        }
    }

    pub fn arms(&self) -> usize {
        self.ratios.len()
    }

    pub fn stages(&self) -> usize {
        self.ratios.first().map_or(0, |r| r.len())
    }

    /// Layout with `n_{k,j} = ceil(r_{k,j} n)`.
    pub fn layout(&self, n: u32) -> Result<TrialLayout> {
        let sizes = self
            .ratios
            .iter()
            .map(|row| {
                row.iter()
                    .map(|r| libm::ceil(r * n as f64 - 1e-9).max(1.0) as u32)
                    .collect()
            })
            .collect();
        TrialLayout::new(sizes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverOptions {
    /// Used for power evaluations and the final error-rate confirmation.
    pub evaluation: EvaluationOptions,
    /// Lattice points per shift for the fixed-seed error-rate objective.
    pub solve_points: usize,
    pub scale_bracket: (f64, f64),
    /// Largest accepted `|FWER - alpha|` at the confirmed solution.
    pub fwer_tolerance: f64,
    pub max_group_size: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            evaluation: EvaluationOptions::default(),
            solve_points: 4096,
            scale_bracket: (0.1, 10.0),
            fwer_tolerance: 5e-4,
            max_group_size: 100_000,
        }
    }
}

impl SolverOptions {
    fn objective_options(&self) -> EvaluationOptions {
        EvaluationOptions {
            quadrature: QuadratureOptions {
                initial_points: self.solve_points,
                fixed: true,
                ..self.evaluation.quadrature
            },
            ..self.evaluation
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScaleStep {
    pub scale: f64,
    pub fwer: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SizeStep {
    pub group_size: u32,
    pub power: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverTrace {
    pub scale: Vec<ScaleStep>,
    pub size: Vec<SizeStep>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScaleSolution {
    pub family: BoundaryFamily,
    pub boundaries: BoundarySet,
    /// Confirmation at the evaluation precision.
    pub fwer: ProbabilityEstimate,
    pub trace: Vec<ScaleStep>,
}

fn fwer_of(design: &TrialDesign, options: &EvaluationOptions) -> Result<ProbabilityEstimate> {
    if design.binding {
        fwer_binding_global(design, options)
    } else {
        fwer_nonbinding_global(design, options)
    }
}

/// Scale `C` with `FWER(C) = alpha`, the similarity stop credited when `binding`.
pub fn solve_boundary_scale(
    layout: &TrialLayout,
    shape: &BoundaryShape,
    alpha: f64,
    binding: bool,
    options: &SolverOptions,
) -> Result<ScaleSolution> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let objective_options = options.objective_options();
    let mut trace = Vec::new();
    let mut f = |c: f64| -> Result<f64> {
        let design = assemble_design(layout, &BoundaryFamily::new(shape.clone(), c), binding)?;
        let fwer = fwer_of(&design, &objective_options)?.value;
        trace.push(ScaleStep { scale: c, fwer });
        Ok(fwer - alpha)
    };
    let (lo, hi) = options.scale_bracket;
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::NoBracket {
            lo,
            hi,
            f_lo: f_lo + alpha,
            f_hi: f_hi + alpha,
        });
    }
    let mut c = brent(&mut f, lo, hi, f_lo, f_hi, 1e-9, 100)?;
    let confirm = |c: f64| -> Result<(BoundaryFamily, TrialDesign, ProbabilityEstimate)> {
        let family = BoundaryFamily::new(shape.clone(), c);
        let design = assemble_design(layout, &family, binding)?;
        let fwer = fwer_of(&design, &options.evaluation)?;
        Ok((family, design, fwer))
    };
    let (mut family, mut design, mut fwer) = confirm(c)?;
    if (fwer.value - alpha).abs() > options.fwer_tolerance {
        // The fixed lattice is too coarse in high dimension. Newton steps on
        // reporting-precision evaluations, with the slope of the smooth
        // fixed-lattice objective.
        let h = 1e-3 * c;
        let slope = (f(c + h)? - f(c)?) / h;
        if slope < 0.0 {
            for _ in 0..4 {
                c -= (fwer.value - alpha) / slope;
                (family, design, fwer) = confirm(c)?;
                if (fwer.value - alpha).abs() <= options.fwer_tolerance {
                    break;
                }
            }
        }
    }
    if (fwer.value - alpha).abs() > options.fwer_tolerance {
        return Err(Error::Solver(format!(
            "confirmed FWER {:.5} at scale {c:.6} misses alpha {alpha} by more than {}",
            fwer.value, options.fwer_tolerance
        )));
    }
    Ok(ScaleSolution {
        family,
        boundaries: design.boundaries,
        fwer,
        trace,
    })
}

/// Brent's method on a bracket with `f(a) > 0 > f(b)` or the reverse.
fn brent<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::Solver(format!("root not isolated after {max_iter} iterations")))
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SizeSolution {
    pub group_size: u32,
    pub layout: TrialLayout,
    pub power: ProbabilityEstimate,
    /// Power at `group_size - 1`, absent when the solution is 1.
    pub power_below: Option<ProbabilityEstimate>,
    pub trace: Vec<SizeStep>,
}

/// Smallest `n` whose layout reaches power `1 - beta` against `theta`.
pub fn solve_group_size(
    template: &AllocationTemplate,
    boundaries: &BoundarySet,
    binding: bool,
    theta: f64,
    beta: f64,
    options: &SolverOptions,
) -> Result<SizeSolution> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Invalid(format!("beta must be in (0, 1), got {beta}")));
    }
    let target = 1.0 - beta;
    let mut trace = Vec::new();
    let mut power = |n: u32| -> Result<ProbabilityEstimate> {
        let design = TrialDesign::new(template.layout(n)?, boundaries.clone(), binding)?;
        let p = power_lfc(&design, theta, &options.evaluation)?;
        trace.push(SizeStep {
            group_size: n,
            power: p.value,
        });
        Ok(p)
    };
    let first = power(1)?;
    let (mut lo, mut hi, mut p_lo, mut p_hi) = if first.value >= target {
        (0, 1, None, first)
    } else {
        let mut lo: u32 = 1;
        let mut p_lo = first;
        loop {
            let hi = lo.saturating_mul(2).min(options.max_group_size);
            if hi == lo {
                return Err(Error::PowerUnreachable {
                    target,
                    max_n: options.max_group_size,
                    achieved: p_lo.value,
                });
            }
            let p = power(hi)?;
            if p.value >= target {
                break (lo, hi, Some(p_lo), p);
            }
            lo = hi;
            p_lo = p;
        }
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let p = power(mid)?;
        if p.value >= target {
            hi = mid;
            p_hi = p;
        } else {
            lo = mid;
            p_lo = Some(p);
        }
    }
    Ok(SizeSolution {
        group_size: hi,
        layout: template.layout(hi)?,
        power: p_hi,
        power_below: p_lo,
        trace,
    })
}

/// Error-rate and power targets of a design search.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignTargets {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub binding: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolvedDesign {
    pub design: TrialDesign,
    pub family: BoundaryFamily,
    pub targets: DesignTargets,
    pub group_size: u32,
    pub fwer: ProbabilityEstimate,
    pub power: ProbabilityEstimate,
    pub power_below: Option<ProbabilityEstimate>,
    pub trace: SolverTrace,
}

/// Solves the boundary scale, then the group size.
///
/// Boundaries depend on the allocation only through the information
/// fractions, so the scale is solved once on the template at `n = 1`.
pub fn solve_design(
    template: &AllocationTemplate,
    shape: &BoundaryShape,
    targets: DesignTargets,
    options: &SolverOptions,
) -> Result<SolvedDesign> {
    let scale = solve_boundary_scale(&template.layout(1)?, shape, targets.alpha, targets.binding, options)?;
    let size = solve_group_size(
        template,
        &scale.boundaries,
        targets.binding,
        targets.theta,
        targets.beta,
        options,
    )?;
    let design = TrialDesign::new(size.layout, scale.boundaries, targets.binding)?;
    Ok(SolvedDesign {
        design,
        family: scale.family,
        targets,
        group_size: size.group_size,
        fwer: scale.fwer,
        power: size.power,
        power_below: size.power_below,
        trace: SolverTrace {
            scale: scale.trace,
            size: size.trace,
        },
    })
}

/// Effect size on the unit-variance scale implied by a two-arm design.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    /// Midpoint of `[lower, upper)`.
    pub theta: f64,
    /// Smallest effect for which `group_size` reaches the power target.
    pub lower: f64,
    /// Smallest effect for which `group_size - 1` reaches it.
    pub upper: f64,
    pub group_size: u32,
    pub boundaries: BoundarySet,
}

/// Finds the effects for which `group_size` is the minimal two-arm group size
/// at level `alpha` and power `1 - beta`.
///
/// With equal allocation the two-arm power depends on `theta sqrt(n)` only, so
/// the upper end is `lower * sqrt(n / (n - 1))`.
pub fn calibrate_theta(
    stages: usize,
    shape: &BoundaryShape,
    alpha: f64,
    beta: f64,
    group_size: u32,
    binding: bool,
    options: &SolverOptions,
) -> Result<Calibration> {
    if group_size < 2 {
        return Err(Error::Invalid("calibration needs a group size of at least 2".into()));
    }
    let template = AllocationTemplate::equal(2, stages);
    let scale = solve_boundary_scale(&template.layout(1)?, shape, alpha, binding, options)?;
    let design = TrialDesign::new(template.layout(group_size)?, scale.boundaries.clone(), binding)?;
    let objective_options = options.objective_options();
    let target = 1.0 - beta;
    let mut f = |theta: f64| -> Result<f64> { Ok(power_lfc(&design, theta, &objective_options)?.value - target) };
    let (lo, hi) = (1e-4, 20.0);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::NoBracket {
            lo,
            hi,
            f_lo: f_lo + target,
            f_hi: f_hi + target,
        });
    }
    let lower = brent(&mut f, lo, hi, f_lo, f_hi, 1e-10, 100)?;
    let n = group_size as f64;
    let upper = lower * libm::sqrt(n / (n - 1.0));
    Ok(Calibration {
        theta: 0.5 * (lower + upper),
        lower,
        upper,
        group_size,
        boundaries: scale.boundaries,
    })
}

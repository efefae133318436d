//! Run configuration: parsing, validation and translation into engine options.

use std::path::Path;

use mamsap_core::characteristics::EvaluationOptions;
use mamsap_core::enumeration::EnumerationLimits;
use mamsap_core::mvn::QuadratureOptions;
use mamsap_core::solver::{calibrate_theta, AllocationTemplate, BoundaryShape, Calibration, DesignTargets, SolverOptions};
use mamsap_core::ComparatorSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub layout: LayoutConfig,
    pub targets: TargetsConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub execution: ExecutionConfig,
    #[serde(default)]
    pub comparators: Vec<ComparatorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub arms: usize,
    pub stages: usize,
    /// Cumulative allocation per arm and stage relative to arm 1 at stage 1.
    /// Equal allocation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Clinically relevant effect on the unit-variance scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<f64>,
    /// Derive the effect from a two-arm design instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
}

/// The effect for which `group_size` is the minimal two-arm group size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub group_size: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default = "default_shape")]
    pub shape: BoundaryShape,
    #[serde(default = "yes")]
    pub binding: bool,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            shape: default_shape(),
            binding: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionConfig {
    /// Target standard error of reported probabilities.
    #[serde(default = "default_precision")]
    pub precision: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Non-binding designs: follow the similarity stop in power, sample size
    /// and simulation.
    #[serde(default = "yes")]
    pub honor_inner: bool,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
    #[serde(default = "default_max_configurations")]
    pub max_configurations: usize,
    #[serde(default = "default_solve_points")]
    pub solve_points: usize,
    #[serde(default = "default_replications")]
    pub replications: u64,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            precision: default_precision(),
            seed: default_seed(),
            threads: None,
            honor_inner: true,
            max_cells: default_max_cells(),
            max_configurations: default_max_configurations(),
            solve_points: default_solve_points(),
            replications: default_replications(),
        }
    }
}

/// Grid for the strong-control sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub arms: Vec<usize>,
    pub stages: Vec<usize>,
    pub alphas: Vec<f64>,
}

fn default_shape() -> BoundaryShape {
    BoundaryShape::DoubleTriangular
}

fn yes() -> bool {
    true
}

fn default_precision() -> f64 {
    1e-4
}

fn default_seed() -> u64 {
    1
}

fn default_max_cells() -> usize {
    EnumerationLimits::default().max_cells
}

fn default_max_configurations() -> usize {
    EnumerationLimits::default().max_configurations
}

fn default_solve_points() -> usize {
    SolverOptions::default().solve_points
}

fn default_replications() -> u64 {
    100_000
}

fn config_error(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

fn in_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let l = &self.layout;
        if !(2..=32).contains(&l.arms) {
            return Err(config_error("layout.arms must be between 2 and 32"));
        }
        if l.stages == 0 {
            return Err(config_error("layout.stages must be at least 1"));
        }
        if let Some(ratios) = &l.ratios {
            if ratios.len() != l.arms || ratios.iter().any(|r| r.len() != l.stages) {
                return Err(config_error("layout.ratios must have one row per arm and one entry per stage"));
            }
            AllocationTemplate::new(ratios.clone()).map_err(|e| config_error(format!("layout.ratios: {e}")))?;
        }
        let t = &self.targets;
        if !in_unit(t.alpha) {
            return Err(config_error("targets.alpha out of range"));
        }
        if !in_unit(t.beta) {
            return Err(config_error("targets.beta out of range"));
        }
        match (t.theta_prime, &t.calibration) {
            (Some(theta), None) => {
                if !(theta > 0.0 && theta.is_finite()) {
                    return Err(config_error("targets.theta_prime must be positive"));
                }
            }
            (None, Some(c)) => {
                if c.group_size < 2 {
                    return Err(config_error("targets.calibration.group_size must be at least 2"));
                }
            }
            _ => return Err(config_error("targets needs exactly one of theta_prime and calibration")),
        }
        let e = &self.execution;
        if !(e.precision > 0.0 && e.precision < 0.1) {
            return Err(config_error("execution.precision out of range"));
        }
        if e.threads == Some(0) {
            return Err(config_error("execution.threads must be at least 1"));
        }
        if e.solve_points == 0 || e.replications == 0 {
            return Err(config_error("execution.solve_points and execution.replications must be positive"));
        }
        for c in &self.comparators {
            if c.pairwise_alpha.is_some_and(|a| !in_unit(a)) || c.pairwise_power.is_some_and(|p| !in_unit(p)) {
                return Err(config_error(format!("comparators: {} targets out of range", c.kind)));
            }
        }
        if let Some(s) = &self.sweep {
            if s.arms.iter().any(|&k| !(2..=32).contains(&k)) || s.stages.contains(&0) {
                return Err(config_error("sweep.arms and sweep.stages out of range"));
            }
            if s.alphas.iter().any(|&a| !in_unit(a)) {
                return Err(config_error("sweep.alphas out of range"));
            }
        }
        Ok(())
    }

    pub fn template(&self) -> AllocationTemplate {
        match &self.layout.ratios {
            Some(r) => AllocationTemplate::new(r.clone()).expect("validated"),
            None => AllocationTemplate::equal(self.layout.arms, self.layout.stages),
        }
    }

    pub fn evaluation_options(&self) -> EvaluationOptions {
        let e = &self.execution;
        EvaluationOptions {
            quadrature: QuadratureOptions::with_target(e.precision),
            seed: e.seed,
            honor_inner: e.honor_inner,
            limits: EnumerationLimits {
                max_cells: e.max_cells,
                max_configurations: e.max_configurations,
            },
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            evaluation: self.evaluation_options(),
            solve_points: self.execution.solve_points,
            ..SolverOptions::default()
        }
    }

    /// The effect to design for, with the calibration behind it if any.
    pub fn theta(&self) -> Result<(f64, Option<Calibration>), CliError> {
        if let Some(theta) = self.targets.theta_prime {
            return Ok((theta, None));
        }
        let c = self.targets.calibration.as_ref().expect("validated");
        let cal = calibrate_theta(
            self.layout.stages,
            &self.boundary.shape,
            self.targets.alpha,
            self.targets.beta,
            c.group_size,
            self.boundary.binding,
            &self.solver_options(),
        )?;
        Ok((cal.theta, Some(cal)))
    }

    pub fn design_targets(&self, theta: f64) -> DesignTargets {
        DesignTargets {
            alpha: self.targets.alpha,
            beta: self.targets.beta,
            theta,
            binding: self.boundary.binding,
        }
    }

    /// Applies the worker thread count, once per process.
    pub fn apply_threads(&self) {
        if let Some(n) = self.execution.threads {
            // Fails only when a pool already exists.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

//! The six workflows. Each writes its outputs under `out` and returns the
//! files written with the process exit code.

use std::path::{Path, PathBuf};

use mamsap_core::characteristics::{
    evaluate_design, strong_control_certificate, strong_control_certificate_against, Certificate, OperatingReport,
    Verdict,
};
use mamsap_core::comparators::{comparator_report, ComparatorContext, ComparatorKind, ComparatorReport, ComparatorSpec};
use mamsap_core::model::{ArmSet, EffectConfiguration, TrialDesign, TrialLayout};
use mamsap_core::simulator::{simulate, SimulationOptions, SimulationResult};
use mamsap_core::solver::{solve_boundary_scale, solve_design, Calibration, SolvedDesign};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{self, AgreementRow, TableRow};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
    /// Short human-readable result for stdout.
    pub summary: String,
}

/// Run-independent description of the producer. Kept free of timestamps so
/// that outputs are byte-identical across reruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
}

impl Metadata {
    fn new(command: &str) -> Self {
        Metadata {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
        }
    }
}

/// `design.json`. Only `design` and `theta` are needed to load a design;
/// hand-written files may omit the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    #[serde(default = "unknown_metadata")]
    pub metadata: Metadata,
    pub theta: f64,
    pub design: TrialDesign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solved: Option<SolvedDesign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<OperatingReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

fn unknown_metadata() -> Metadata {
    Metadata::new("external")
}

impl DesignFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read design file {}: {e}", path.display())))?;
        let file: DesignFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("design file {}: {e}", path.display())))?;
        file.design.boundaries.validate()?;
        TrialDesign::new(file.design.layout.clone(), file.design.boundaries.clone(), file.design.binding)?;
        Ok(file)
    }
}

fn write_file(out: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        context: format!("creating {}", out.display()),
        source,
    })?;
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        context: format!("writing {}", path.display()),
        source,
    })?;
    files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn exit_for(verdict: Verdict) -> i32 {
    if verdict == Verdict::Inconclusive {
        3
    } else {
        0
    }
}

fn design_label(design: &TrialDesign) -> String {
    format!("MAMSAP ({})", if design.binding { "binding" } else { "non-binding" })
}

fn mamsap_row(design: &TrialDesign, report: &OperatingReport) -> TableRow {
    TableRow {
        label: design_label(design),
        boundaries: design.boundaries.clone(),
        group_sizes: design.layout.group_sizes()[0].clone(),
        fwer: report.fwer.value,
        power: report.power_lfc.value,
        max_n: report.max_n,
        expected_n: report.expected_n.iter().map(|s| s.expected_n.value).collect(),
    }
}

fn comparator_row(r: &ComparatorReport, stages: usize) -> TableRow {
    TableRow {
        label: r.kind.label().into(),
        boundaries: r.boundaries.clone(),
        group_sizes: (1..=stages as u32).map(|j| j * r.group_size).collect(),
        fwer: r.fwer.value,
        power: r.power.value,
        max_n: r.max_n,
        expected_n: r.expected_n.iter().map(|e| e.value).collect(),
    }
}

fn design_text(file: &DesignFile, report: &OperatingReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("theta' = {:.5}", file.theta));
    if let Some(c) = &file.calibration {
        out.push_str(&format!(
            " (two-arm calibration at n = {}: [{:.5}, {:.5}))",
            c.group_size, c.lower, c.upper
        ));
    }
    out.push('\n');
    if let Some(s) = &file.solved {
        out.push_str(&format!(
            "boundary scale C = {:.6}; power {:.4} at n = {}{}\n",
            s.family.scale,
            s.power.value,
            s.group_size,
            s.power_below
                .map(|p| format!(", {:.4} at n = {}", p.value, s.group_size - 1))
                .unwrap_or_default()
        ));
    }
    out.push_str(&format!(
        "FWER {:.4} (similarity stop followed), {:.4} (ignored); {} outcome configurations\n\n",
        report.fwer.value, report.fwer_nonbinding.value, report.outcomes
    ));
    out.push_str(&report::design_table(&[mamsap_row(&file.design, report)], &[]));
    out.push('\n');
    out.push_str(&report::breakdown_table("Trial conclusions with the first i arms ahead", &report.breakdown));
    if let Some(cert) = &report.strong_control {
        out.push('\n');
        out.push_str(&report::certificate_table(cert));
    }
    out
}

/// Solves boundaries and group size, then reports the design.
pub fn cmd_design(config: &RunConfig, out: &Path) -> Result<CommandOutput, CliError> {
    let (theta, calibration) = config.theta()?;
    let options = config.solver_options();
    let solved = solve_design(
        &config.template(),
        &config.boundary.shape,
        config.design_targets(theta),
        &options,
    )?;
    let mut report = evaluate_design(&solved.design, theta, &options.evaluation)?;
    let cert = strong_control_certificate(&solved.design, &options.evaluation)?;
    let exit_code = exit_for(cert.verdict);
    report.strong_control = Some(cert);
    let file = DesignFile {
        metadata: Metadata::new("design"),
        theta,
        design: solved.design.clone(),
        calibration,
        solved: Some(solved),
        report: Some(report.clone()),
        config: Some(config.clone()),
    };
    let mut files = Vec::new();
    write_file(out, "design.json", &to_json(&file), &mut files)?;
    write_file(out, "design.txt", &design_text(&file, &report), &mut files)?;
    let b = &file.design.boundaries;
    Ok(CommandOutput {
        files,
        exit_code,
        summary: format!(
            "u = {:.3?}, u* = {:.3?}, n = {}, FWER {:.4}, power {:.4}",
            b.outer,
            b.inner,
            file.design.layout.group_size(0, 0),
            report.fwer.value,
            report.power_lfc.value
        ),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparatorRow {
    pub spec: ComparatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ComparatorReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn run_comparators(config: &RunConfig, specs: &[ComparatorSpec], theta: f64) -> Vec<ComparatorRow> {
    let context = ComparatorContext {
        arms: config.layout.arms,
        stages: config.layout.stages,
        shape: config.boundary.shape.clone(),
        targets: config.design_targets(theta),
    };
    let options = config.solver_options();
    specs
        .iter()
        .map(|spec| match comparator_report(spec, &context, &options) {
            Ok(r) => ComparatorRow {
                spec: *spec,
                report: Some(r),
                error: None,
            },
            Err(e) => ComparatorRow {
                spec: *spec,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

fn comparison_text(mamsap: Option<(&TrialDesign, &OperatingReport)>, rows: &[ComparatorRow], stages: usize) -> String {
    let mut table = Vec::new();
    let mut failed = Vec::new();
    if let Some((d, r)) = mamsap {
        table.push(mamsap_row(d, r));
    }
    for row in rows {
        match (&row.report, &row.error) {
            (Some(r), _) => table.push(comparator_row(r, stages)),
            (None, e) => failed.push((row.spec.kind.label().to_string(), e.clone().unwrap_or_default())),
        }
    }
    let mut out = report::design_table(&table, &failed);
    for r in rows.iter().filter_map(|r| r.report.as_ref()) {
        if matches!(
            r.kind,
            ComparatorKind::SequentialSeparate | ComparatorKind::FwerAdjustedSequential
        ) {
            out.push_str(&format!("\n{}: by arm ahead\n", r.kind));
            for (k, (p, e)) in r.arm_powers.iter().zip(&r.arm_expected_n).enumerate() {
                out.push_str(&format!("  arm {}: power {:.3}, E(N) {:.1}\n", k + 1, p.value, e.value));
            }
        }
        if !r.breakdown.is_empty() {
            out.push('\n');
            out.push_str(&report::breakdown_table(&format!("{}: trial conclusions", r.kind), &r.breakdown));
        }
        if let Some(c) = &r.caveat {
            out.push_str(&format!("\n{}: {c}\n", r.kind));
        }
    }
    out
}

/// Reports a design without solving anything.
pub fn cmd_evaluate(config: &RunConfig, design_path: &Path, out: &Path) -> Result<CommandOutput, CliError> {
    let input = DesignFile::load(design_path)?;
    let options = config.evaluation_options();
    let mut report = evaluate_design(&input.design, input.theta, &options)?;
    let cert = strong_control_certificate(&input.design, &options)?;
    let exit_code = exit_for(cert.verdict);
    report.strong_control = Some(cert);
    let comparators = if config.comparators.is_empty() {
        Vec::new()
    } else {
        run_comparators(config, &config.comparators, input.theta)
    };
    #[derive(Serialize)]
    struct Evaluation<'a> {
        metadata: Metadata,
        theta: f64,
        design: &'a TrialDesign,
        report: &'a OperatingReport,
        #[serde(skip_serializing_if = "<[_]>::is_empty")]
        comparators: &'a [ComparatorRow],
    }
    let mut files = Vec::new();
    write_file(
        out,
        "evaluation.json",
        &to_json(&Evaluation {
            metadata: Metadata::new("evaluate"),
            theta: input.theta,
            design: &input.design,
            report: &report,
            comparators: &comparators,
        }),
        &mut files,
    )?;
    let shown = DesignFile {
        report: None,
        solved: None,
        ..input.clone()
    };
    let mut text = design_text(&shown, &report);
    if !comparators.is_empty() {
        text.push('\n');
        text.push_str(&comparison_text(None, &comparators, input.design.layout.stages()));
    }
    write_file(out, "evaluation.txt", &text, &mut files)?;
    Ok(CommandOutput {
        files,
        exit_code,
        summary: format!("FWER {:.4}, power {:.4}", report.fwer.value, report.power_lfc.value),
    })
}

/// One line of the strong-control sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub arms: usize,
    pub stages: usize,
    pub alpha: f64,
    pub scale: Option<f64>,
    pub certificate: Option<Certificate>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn verdict(&self) -> Option<Verdict> {
        self.certificate.as_ref().map(|c| c.verdict)
    }
}

/// Certificate for `arms` x `stages` equal allocation at level `alpha`.
pub fn sweep_point(config: &RunConfig, arms: usize, stages: usize, alpha: f64) -> SweepRow {
    let options = config.solver_options();
    let run = || -> Result<(f64, Certificate), mamsap_core::Error> {
        // Boundaries and the null distribution depend on the fractions only.
        let layout = TrialLayout::equal(arms, stages, 1)?;
        let s = solve_boundary_scale(&layout, &config.boundary.shape, alpha, config.boundary.binding, &options)?;
        let design = TrialDesign::new(layout, s.boundaries, config.boundary.binding)?;
        let cert = strong_control_certificate_against(&design, s.fwer, &options.evaluation)?;
        Ok((s.family.scale, cert))
    };
    match run() {
        Ok((scale, cert)) => SweepRow {
            arms,
            stages,
            alpha,
            scale: Some(scale),
            certificate: Some(cert),
            error: None,
        },
        Err(e) => SweepRow {
            arms,
            stages,
            alpha,
            scale: None,
            certificate: None,
            error: Some(e.to_string()),
        },
    }
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("arms,stages,alpha,scale,global_fwer,global_se,worst_partition,worst_fwer,verdict\n");
    for r in rows {
        match &r.certificate {
            Some(c) => {
                let worst = c
                    .entries
                    .iter()
                    .max_by(|a, b| a.fwer().total_cmp(&b.fwer()));
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{:?}\n",
                    r.arms,
                    r.stages,
                    r.alpha,
                    r.scale.map(|s| s.to_string()).unwrap_or_default(),
                    c.global_fwer.value,
                    c.global_fwer.std_error,
                    worst.map(|e| e.partition.to_string()).unwrap_or_default(),
                    worst.map(|e| e.fwer().to_string()).unwrap_or_default(),
                    c.verdict
                ));
            }
            None => out.push_str(&format!(
                "{},{},{},,,,,,ERROR: {}\n",
                r.arms,
                r.stages,
                r.alpha,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            )),
        }
    }
    out
}

/// Strong-control certificate for a design and/or the configured sweep.
pub fn cmd_strong_check(config: &RunConfig, design_path: Option<&Path>, out: &Path) -> Result<CommandOutput, CliError> {
    if design_path.is_none() && config.sweep.is_none() {
        return Err(CliError::Config("strong-check needs --design or a sweep block".into()));
    }
    let mut files = Vec::new();
    let mut verdicts = Vec::new();
    let mut summary = Vec::new();
    if let Some(path) = design_path {
        let input = DesignFile::load(path)?;
        let cert = strong_control_certificate(&input.design, &config.evaluation_options())?;
        write_file(out, "certificate.json", &to_json(&cert), &mut files)?;
        write_file(out, "certificate.txt", &report::certificate_table(&cert), &mut files)?;
        verdicts.push(cert.verdict);
        summary.push(format!("certificate {:?}", cert.verdict));
    }
    if let Some(sweep) = &config.sweep {
        let mut rows = Vec::new();
        for &k in &sweep.arms {
            for &j in &sweep.stages {
                for &a in &sweep.alphas {
                    rows.push(sweep_point(config, k, j, a));
                }
            }
        }
        write_file(out, "strong_sweep.csv", &sweep_csv(&rows), &mut files)?;
        write_file(out, "strong_sweep.json", &to_json(&rows), &mut files)?;
        let pass = rows.iter().filter(|r| r.verdict() == Some(Verdict::Pass)).count();
        summary.push(format!("sweep {pass}/{} PASS", rows.len()));
        for r in &rows {
            // A point that could not be computed is not a certificate.
            verdicts.push(r.verdict().unwrap_or(Verdict::Inconclusive));
        }
    }
    let exit_code = if verdicts.contains(&Verdict::Inconclusive) { 3 } else { 0 };
    Ok(CommandOutput {
        files,
        exit_code,
        summary: summary.join("; "),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationFile {
    pub metadata: Metadata,
    pub replications: u64,
    pub seed: u64,
    pub honor_inner: bool,
    /// First `i` arms ahead, `i = 0..K-1`.
    pub results: Vec<SimulationResult>,
    pub agreement: Vec<AgreementRow>,
}

/// Analytic against simulated operating characteristics.
pub fn agreement_rows(design: &TrialDesign, report: &OperatingReport, sims: &[SimulationResult], honor_inner: bool) -> Vec<AgreementRow> {
    let arms = design.layout.arms();
    let mut rows = Vec::new();
    let fwer = if design.binding || honor_inner {
        report.fwer
    } else {
        report.fwer_nonbinding
    };
    let f = sims[0].fwer_hat;
    rows.push(AgreementRow::new(0, "FWER", (fwer.value, fwer.std_error), (f.value, f.std_error)));
    if let Some(s) = sims.get(1) {
        let p = report.power_lfc;
        rows.push(AgreementRow::new(
            1,
            "power",
            (p.value, p.std_error),
            (s.power_hat.value, s.power_hat.std_error),
        ));
    }
    for (i, s) in sims.iter().enumerate() {
        if let Some(e) = report.expected_n.get(i) {
            rows.push(AgreementRow::new(
                i,
                "E(N)",
                (e.expected_n.value, e.expected_n.std_error),
                (s.expected_n_hat.value, s.expected_n_hat.std_error),
            ));
        }
    }
    // The all-arms-ahead breakdown reuses the global-null runs.
    for (i, b) in report.breakdown.iter().enumerate() {
        let s = if i < sims.len() { &sims[i] } else { &sims[0] };
        let (found, nulls) = s.breakdown(arms, b.relevant);
        for (k, (a, m)) in b.relevant_found.iter().zip(&found).enumerate() {
            rows.push(AgreementRow::new(
                i,
                format!("rel={}", k + 1),
                (a.value, a.std_error),
                (m.value, m.std_error),
            ));
        }
        for (k, (a, m)) in b.null_remaining.iter().zip(&nulls).enumerate() {
            rows.push(AgreementRow::new(
                i,
                format!("null={}", k + 1),
                (a.value, a.std_error),
                (m.value, m.std_error),
            ));
        }
    }
    rows
}

/// Simulates the design with the first `i` arms ahead, `i = 0..K-1`.
pub fn simulate_scenarios(design: &TrialDesign, theta: f64, options: &SimulationOptions) -> Result<Vec<SimulationResult>, CliError> {
    let arms = design.layout.arms();
    (0..arms)
        .map(|i| Ok(simulate(design, &EffectConfiguration::leading(arms, i, theta), options)?))
        .collect()
}

pub fn cmd_simulate(config: &RunConfig, design_path: &Path, out: &Path) -> Result<CommandOutput, CliError> {
    let input = DesignFile::load(design_path)?;
    let report = match &input.report {
        Some(r) => r.clone(),
        None => evaluate_design(&input.design, input.theta, &config.evaluation_options())?,
    };
    let options = SimulationOptions {
        replications: config.execution.replications,
        seed: config.execution.seed,
        honor_inner: config.execution.honor_inner,
    };
    let results = simulate_scenarios(&input.design, input.theta, &options)?;
    let agreement = agreement_rows(&input.design, &report, &results, options.honor_inner);
    let worst = agreement.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let file = SimulationFile {
        metadata: Metadata::new("simulate"),
        replications: options.replications,
        seed: options.seed,
        honor_inner: options.honor_inner,
        results,
        agreement,
    };
    let mut files = Vec::new();
    write_file(out, "simulation.json", &to_json(&file), &mut files)?;
    write_file(out, "agreement.txt", &report::agreement_table(&file.agreement), &mut files)?;
    Ok(CommandOutput {
        files,
        exit_code: 0,
        summary: format!("{} replications per configuration, max |z| = {worst:.2}", options.replications),
    })
}

/// Comparator designs side by side, with the MAMSAP design when given.
pub fn cmd_compare(config: &RunConfig, design_path: Option<&Path>, out: &Path) -> Result<CommandOutput, CliError> {
    let mamsap = match design_path {
        Some(p) => {
            let input = DesignFile::load(p)?;
            let report = match &input.report {
                Some(r) => r.clone(),
                None => evaluate_design(&input.design, input.theta, &config.evaluation_options())?,
            };
            Some((input, report))
        }
        None => None,
    };
    let theta = match &mamsap {
        Some((input, _)) => input.theta,
        None => config.theta()?.0,
    };
    let specs: Vec<ComparatorSpec> = if config.comparators.is_empty() {
        ComparatorKind::ALL.iter().map(|&k| ComparatorSpec::new(k)).collect()
    } else {
        config.comparators.clone()
    };
    let rows = run_comparators(config, &specs, theta);
    #[derive(Serialize)]
    struct Comparison<'a> {
        metadata: Metadata,
        theta: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        mamsap: Option<&'a OperatingReport>,
        comparators: &'a [ComparatorRow],
    }
    let mut files = Vec::new();
    write_file(
        out,
        "comparison.json",
        &to_json(&Comparison {
            metadata: Metadata::new("compare"),
            theta,
            mamsap: mamsap.as_ref().map(|(_, r)| r),
            comparators: &rows,
        }),
        &mut files,
    )?;
    let text = comparison_text(
        mamsap.as_ref().map(|(i, r)| (&i.design, r)),
        &rows,
        config.layout.stages,
    );
    write_file(out, "comparison.txt", &text, &mut files)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    Ok(CommandOutput {
        files,
        exit_code: if failed > 0 { 4 } else { 0 },
        summary: format!("{} comparator rows, {failed} failed", rows.len()),
    })
}

pub fn cmd_plot_data(design_path: &Path, out: &Path) -> Result<CommandOutput, CliError> {
    let input = DesignFile::load(design_path)?;
    let fractions = input.design.layout.information_fractions();
    let mut files = Vec::new();
    write_file(out, "boundaries.csv", &report::boundary_csv(&fractions, &input.design.boundaries), &mut files)?;
    Ok(CommandOutput {
        files,
        exit_code: 0,
        summary: format!("{} stages", fractions.len()),
    })
}

/// Arm set of the first `count` arms, as used for scenario labels.
pub fn leading(count: usize) -> ArmSet {
    ArmSet::from_arms(0..count)
}

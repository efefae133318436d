//! Fixed-width text tables and CSV rendering.

use std::fmt::Write;

use mamsap_core::characteristics::{Breakdown, Certificate};
use mamsap_core::model::BoundarySet;

/// One design in an operating-characteristics table.
#[derive(Clone, Debug)]
pub struct TableRow {
    pub label: String,
    pub boundaries: BoundarySet,
    /// Cumulative group size of arm 1 per stage.
    pub group_sizes: Vec<u32>,
    pub fwer: f64,
    pub power: f64,
    pub max_n: u64,
    pub expected_n: Vec<f64>,
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.3}")
    }
}

/// Rows as laid out in the published comparison tables: one line per stage,
/// summary columns on the first line.
pub fn design_table(rows: &[TableRow], failed: &[(String, String)]) -> String {
    let scenarios = rows.iter().map(|r| r.expected_n.len()).max().unwrap_or(0);
    let width = rows
        .iter()
        .map(|r| r.label.len())
        .chain(failed.iter().map(|f| f.0.len()))
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = String::new();
    write!(out, "{:<width$}  {:>5}  {:>7}  {:>7}  {:>6}  {:>6}  {:>6}  {:>6}", "Design", "stage", "u", "u*", "n", "FWER", "Power", "max N").unwrap();
    for i in 0..scenarios {
        write!(out, "  {:>9}", format!("E(N|Θ{i})")).unwrap();
    }
    out.push('\n');
    for r in rows {
        for (j, (&u, &us)) in r.boundaries.outer.iter().zip(&r.boundaries.inner).enumerate() {
            let label = if j == 0 { r.label.as_str() } else { "" };
            let n = r.group_sizes.get(j).map_or(String::new(), |n| n.to_string());
            write!(out, "{label:<width$}  {:>5}  {:>7}  {:>7}  {n:>6}", j + 1, num(u), num(us)).unwrap();
            if j == 0 {
                write!(out, "  {:>6.3}  {:>6.3}  {:>6}", r.fwer, r.power, r.max_n).unwrap();
                for e in &r.expected_n {
                    write!(out, "  {e:>9.1}").unwrap();
                }
            }
            out.push('\n');
        }
    }
    for (label, message) in failed {
        writeln!(out, "{label:<width$}  FAILED: {message}").unwrap();
    }
    out
}

/// Probabilities of ending with `i` relevant arms or `i` remaining null arms.
pub fn breakdown_table(label: &str, breakdowns: &[Breakdown]) -> String {
    let arms = breakdowns.first().map_or(0, |b| b.relevant_found.len() + b.null_remaining.len());
    let mut out = String::new();
    writeln!(out, "{label}").unwrap();
    write!(out, "{:<8}", "Config").unwrap();
    for i in 1..=arms {
        write!(out, "  {:>7}", format!("rel={i}")).unwrap();
    }
    for i in 1..=arms {
        write!(out, "  {:>7}", format!("null={i}")).unwrap();
    }
    out.push('\n');
    for (i, b) in breakdowns.iter().enumerate() {
        write!(out, "{:<8}", format!("Θ{i}")).unwrap();
        for k in 0..arms {
            match b.relevant_found.get(k) {
                Some(p) => write!(out, "  {:>7.3}", p.value).unwrap(),
                None => write!(out, "  {:>7}", "").unwrap(),
            }
        }
        for k in 0..arms {
            match b.null_remaining.get(k) {
                Some(p) => write!(out, "  {:>7.3}", p.value).unwrap(),
                None => write!(out, "  {:>7}", "").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

pub fn certificate_table(cert: &Certificate) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "global FWER {:.4} (se {:.1e}){}",
        cert.global_fwer.value,
        cert.global_fwer.std_error,
        if cert.reduced { ", block-size representatives" } else { "" }
    )
    .unwrap();
    writeln!(out, "{:<24}  {:>6}  {:>10}  {:>8}  {:>8}  verdict", "partition", "count", "P(no rej)", "se", "FWER").unwrap();
    for e in &cert.entries {
        writeln!(
            out,
            "{:<24}  {:>6}  {:>10.4}  {:>8.1e}  {:>8.4}  {:?}",
            e.partition.to_string(),
            e.represents,
            e.no_rejection.value,
            e.no_rejection.std_error,
            e.fwer(),
            e.verdict
        )
        .unwrap();
    }
    writeln!(out, "verdict: {:?}", cert.verdict).unwrap();
    out
}

/// Analytic against simulated value for one quantity.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AgreementRow {
    pub scenario: usize,
    pub quantity: String,
    pub analytic: f64,
    pub analytic_se: f64,
    pub simulated: f64,
    pub simulated_se: f64,
    pub z: f64,
}

impl AgreementRow {
    pub fn new(scenario: usize, quantity: impl Into<String>, analytic: (f64, f64), simulated: (f64, f64)) -> Self {
        let se = (analytic.1 * analytic.1 + simulated.1 * simulated.1).sqrt();
        let diff = simulated.0 - analytic.0;
        let z = if se > 0.0 {
            diff / se
        } else if diff.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        AgreementRow {
            scenario,
            quantity: quantity.into(),
            analytic: analytic.0,
            analytic_se: analytic.1,
            simulated: simulated.0,
            simulated_se: simulated.1,
            z,
        }
    }
}

pub fn agreement_table(rows: &[AgreementRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<8}  {:<14}  {:>10}  {:>8}  {:>10}  {:>8}  {:>7}", "Config", "quantity", "analytic", "se", "simulated", "se", "z").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<8}  {:<14}  {:>10.4}  {:>8.1e}  {:>10.4}  {:>8.1e}  {:>7.2}",
            format!("Θ{}", r.scenario),
            r.quantity,
            r.analytic,
            r.analytic_se,
            r.simulated,
            r.simulated_se,
            r.z
        )
        .unwrap();
    }
    let worst = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    writeln!(out, "max |z| = {worst:.2}").unwrap();
    out
}

/// Stage, information fraction and the four boundary lines.
pub fn boundary_csv(fractions: &[f64], boundaries: &BoundarySet) -> String {
    let mut out = String::from("stage,information_fraction,u,neg_u,u_star,neg_u_star\n");
    for (j, t) in fractions.iter().enumerate() {
        let (u, us) = (boundaries.outer[j], boundaries.inner[j]);
        writeln!(out, "{},{},{},{},{},{}", j + 1, t, csv_num(u), csv_num(-u), csv_num(us), csv_num(-us)).unwrap();
    }
    out
}

pub fn csv_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // Avoids printing the negated zero inner boundary as "-0".
        format!("{}", x + 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_rows() {
        let b = BoundarySet::new(vec![f64::INFINITY, 1.5], vec![2.2, 1.5]).unwrap();
        let csv = boundary_csv(&[0.5, 1.0], &b);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[1], "1,0.5,inf,-inf,2.2,-2.2");
        let zero = BoundarySet::new(vec![2.0, 1.5], vec![0.0, 1.5]).unwrap();
        assert!(boundary_csv(&[0.5, 1.0], &zero).lines().nth(1).unwrap().ends_with(",2,-2,0,0"));
        assert_eq!(lines[2], "2,1,1.5,-1.5,1.5,-1.5");
    }

    #[test]
    fn table_layout() {
        let row = TableRow {
            label: "MAMSAP".into(),
            boundaries: BoundarySet::new(vec![3.166, 2.798, 2.742], vec![0.0, 1.679, 2.742]).unwrap(),
            group_sizes: vec![81, 162, 243],
            fwer: 0.05,
            power: 0.9,
            max_n: 972,
            expected_n: vec![749.9, 647.5],
        };
        let t = design_table(&[row], &[("broken".into(), "no bracket".into())]);
        let lines: Vec<_> = t.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].contains("3.166") && lines[1].contains("0.050") && lines[1].contains("749.9"));
        assert!(lines[3].contains("2.742") && lines[3].contains("243"));
        assert!(lines[4].contains("FAILED: no bracket"));
    }

    #[test]
    fn z_scores() {
        assert_eq!(AgreementRow::new(0, "x", (0.5, 0.0), (0.5, 0.0)).z, 0.0);
        assert!((AgreementRow::new(0, "x", (0.5, 0.03), (0.54, 0.04)).z - 0.8).abs() < 1e-12);
    }
}

//! Stored metric rows and the markdown results table.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use solcur::metrics::{format_pm, MetricKind, MetricReport};

/// One line of `eval/metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredReport {
    pub dataset: String,
    pub method: String,
    pub metric: MetricKind,
    pub point: f64,
    pub ci_halfwidth: f64,
    pub n_records: usize,
    pub n_molecules: usize,
    pub formatted: String,
}

impl StoredReport {
    pub fn new(dataset: &str, method: &str, r: &MetricReport) -> Self {
        StoredReport {
            dataset: dataset.to_string(),
            method: method.to_string(),
            metric: r.metric_name,
            point: r.point,
            ci_halfwidth: r.ci_halfwidth,
            n_records: r.n_records,
            n_molecules: r.n_molecules,
            formatted: r.formatted.clone(),
        }
    }

    pub fn cell(&self) -> String {
        format_pm(self.point, self.ci_halfwidth)
    }
}

pub fn read_reports<R: Read>(input: R) -> csv::Result<Vec<StoredReport>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_reports<W: Write>(rows: &[StoredReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Row and column order of a table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
}

impl Layout {
    /// Datasets and methods in order of first appearance.
    pub fn of(rows: &[StoredReport]) -> Layout {
        let mut l = Layout::default();
        for r in rows {
            if !l.datasets.contains(&r.dataset) {
                l.datasets.push(r.dataset.clone());
            }
            if !l.methods.contains(&r.method) {
                l.methods.push(r.method.clone());
            }
        }
        l
    }
}

/// One "dataset × method" table per metric, metrics in order of first
/// appearance. In each row the smallest point value is bold, all of them
/// when tied. A later row for the same cell replaces an earlier one.
pub fn emit_report(rows: &[StoredReport], layout: &Layout) -> String {
    let mut metrics: Vec<MetricKind> = Vec::new();
    for r in rows {
        if !metrics.contains(&r.metric) {
            metrics.push(r.metric);
        }
    }
    let mut out = String::new();
    for (i, metric) in metrics.iter().enumerate() {
        let cells: BTreeMap<(&str, &str), &StoredReport> = rows
            .iter()
            .filter(|r| r.metric == *metric)
            .map(|r| ((r.dataset.as_str(), r.method.as_str()), r))
            .collect();
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("### {}\n\n", metric.name()));
        out.push_str("| dataset |");
        for m in &layout.methods {
            out.push_str(&format!(" {m} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(layout.methods.len()));
        out.push('\n');
        for d in &layout.datasets {
            let row: Vec<Option<&StoredReport>> = layout
                .methods
                .iter()
                .map(|m| cells.get(&(d.as_str(), m.as_str())).copied())
                .collect();
            if row.iter().all(Option::is_none) {
                continue;
            }
            let best = row
                .iter()
                .flatten()
                .map(|r| r.point)
                .fold(f64::INFINITY, f64::min);
            out.push_str(&format!("| {d} |"));
            for cell in row {
                match cell {
                    Some(r) if r.point == best => out.push_str(&format!(" **{}** |", r.cell())),
                    Some(r) => out.push_str(&format!(" {} |", r.cell())),
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dataset: &str, method: &str, point: f64, hw: f64) -> StoredReport {
        StoredReport {
            dataset: dataset.into(),
            method: method.into(),
            metric: MetricKind::Rmse,
            point,
            ci_halfwidth: hw,
            n_records: 10,
            n_molecules: 10,
            formatted: format_pm(point, hw),
        }
    }

    fn emit(rows: &[StoredReport]) -> String {
        emit_report(rows, &Layout::of(rows))
    }

    #[test]
    fn single_cell() {
        let md = emit(&[row("ESOL", "ridge", 0.58, 0.02)]);
        assert_eq!(
            md,
            "### rmse\n\n| dataset | ridge |\n|---|---|\n| ESOL | **0.58 ± 0.02** |\n"
        );
    }

    #[test]
    fn tied_minima_are_both_bold() {
        let md = emit(&[
            row("A", "x", 0.5, 0.01),
            row("A", "y", 0.5, 0.02),
            row("A", "z", 0.7, 0.01),
        ]);
        assert!(
            md.contains("| A | **0.50 ± 0.01** | **0.50 ± 0.02** | 0.70 ± 0.01 |"),
            "{md}"
        );
    }

    #[test]
    fn smallest_of_three_is_bold() {
        let rows = [
            row("AQUA", "chemprop", 0.61, 0.02),
            row("AQUA", "attfp", 0.58, 0.02),
            row("AQUA", "tcnn", 0.59, 0.03),
            row("ESOL", "chemprop", 0.55, 0.03),
            row("ESOL", "attfp", 0.57, 0.03),
            row("ESOL", "tcnn", 0.56, 0.02),
        ];
        let md = emit(&rows);
        assert!(
            md.contains("| AQUA | 0.61 ± 0.02 | **0.58 ± 0.02** | 0.59 ± 0.03 |"),
            "{md}"
        );
        assert!(
            md.contains("| ESOL | **0.55 ± 0.03** | 0.57 ± 0.03 | 0.56 ± 0.02 |"),
            "{md}"
        );
    }

    #[test]
    fn missing_cells_and_csv_round_trip() {
        let rows = [row("A", "x", 0.3, 0.1), row("B", "y", 0.2, 0.1)];
        let md = emit(&rows);
        assert!(md.contains("| A | **0.30 ± 0.10** | n/a |"), "{md}");
        let mut buf = Vec::new();
        write_reports(&rows, &mut buf).unwrap();
        assert_eq!(read_reports(buf.as_slice()).unwrap(), rows);
    }
}

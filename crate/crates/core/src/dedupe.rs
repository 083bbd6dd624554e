//! Cleaning a single dataset: standardize, filter, drop duplicate records,
//! then weight the remaining records of each molecule to sum to one.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataTable;
use crate::standardize::{record_key, standardize_smiles, RejectReason, StandardizeOptions};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub dataset: String,
    pub input_records: usize,
    pub parse_failures: usize,
    pub metals_removed: usize,
    pub single_atom_removed: usize,
    pub duplicates_removed: usize,
    pub output_records: usize,
    pub unique_molecules_stereo: usize,
    pub unique_molecules_plain: usize,
}

impl CleanReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "dataset",
        "input_records",
        "parse_failures",
        "metals_removed",
        "single_atom_removed",
        "duplicates_removed",
        "output_records",
        "unique_molecules_stereo",
        "unique_molecules_plain",
    ];

    pub fn csv_row(&self) -> [String; 9] {
        [
            self.dataset.clone(),
            self.input_records.to_string(),
            self.parse_failures.to_string(),
            self.metals_removed.to_string(),
            self.single_atom_removed.to_string(),
            self.duplicates_removed.to_string(),
            self.output_records.to_string(),
            self.unique_molecules_stereo.to_string(),
            self.unique_molecules_plain.to_string(),
        ]
    }

    pub fn is_conserved(&self) -> bool {
        self.input_records
            == self.output_records
                + self.parse_failures
                + self.metals_removed
                + self.single_atom_removed
                + self.duplicates_removed
    }
}

impl fmt::Display for CleanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset {}", self.dataset)?;
        writeln!(f, "  input records            {}", self.input_records)?;
        writeln!(f, "  parse failures           {}", self.parse_failures)?;
        writeln!(f, "  metal-containing removed {}", self.metals_removed)?;
        writeln!(
            f,
            "  single heavy atom removed {}",
            self.single_atom_removed
        )?;
        writeln!(f, "  duplicates removed       {}", self.duplicates_removed)?;
        writeln!(f, "  output records           {}", self.output_records)?;
        write!(
            f,
            "  unique molecules         {} ({} ignoring stereo)",
            self.unique_molecules_stereo, self.unique_molecules_plain
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovalReason {
    Rejected(RejectReason),
    Duplicate,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::Rejected(r) => r.as_str(),
            RemovalReason::Duplicate => "duplicate",
        }
    }
}

/// A dropped input record, by position in the input table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub index: usize,
    pub reason: RemovalReason,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct CleanOutcome {
    pub table: DataTable,
    pub report: CleanReport,
    pub removals: Vec<Removal>,
}

/// Runs the cleaning pipeline. Structures are standardized in parallel; the
/// duplicate scan walks records in input order so the first occurrence of a
/// record key is the one kept.
pub fn clean_set(t: &DataTable, opts: StandardizeOptions) -> CleanOutcome {
    let standardized: Vec<_> = t
        .records
        .par_iter()
        .map(|r| standardize_smiles(&r.raw_smiles, opts))
        .collect();

    let mut report = CleanReport {
        dataset: t.name.clone(),
        input_records: t.len(),
        ..CleanReport::default()
    };
    let mut removals = Vec::new();
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for (index, (record, std)) in t.records.iter().zip(standardized).enumerate() {
        if let Some(reason) = std.report.rejected_reason {
            match reason {
                RejectReason::ParseError => report.parse_failures += 1,
                RejectReason::Metal => report.metals_removed += 1,
                RejectReason::SingleHeavyAtom => report.single_atom_removed += 1,
            }
            let detail = std.parse_error.map(|e| e.to_string()).unwrap_or_default();
            removals.push(Removal {
                index,
                reason: RemovalReason::Rejected(reason),
                detail,
            });
            continue;
        }
        let key = std.key.expect("accepted structures carry a key");
        // Values were validated as finite at ingestion.
        let rk = record_key(&key, record.value).expect("finite value");
        if !seen.insert(rk.clone()) {
            report.duplicates_removed += 1;
            removals.push(Removal {
                index,
                reason: RemovalReason::Duplicate,
                detail: rk,
            });
            continue;
        }
        let mut out = record.clone();
        out.key = Some(key);
        kept.push(out);
    }
    report.output_records = kept.len();
    report.unique_molecules_stereo = kept
        .iter()
        .filter_map(|r| r.key.as_ref().map(|k| &k.stereo_key))
        .collect::<HashSet<_>>()
        .len();
    report.unique_molecules_plain = kept
        .iter()
        .filter_map(|r| r.plain_key())
        .collect::<HashSet<_>>()
        .len();
    log::info!(
        "{}: {} in, {} out, {} duplicates",
        report.dataset,
        report.input_records,
        report.output_records,
        report.duplicates_removed
    );
    CleanOutcome {
        table: DataTable::new(t.name.clone(), kept),
        report,
        removals,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DedupeError {
    #[error("record {0} has no structure key")]
    MissingKey(usize),
}

/// Sets each record's weight to 1 / (records sharing its plain key).
pub fn assign_intra_weights(t: &DataTable) -> Result<DataTable, DedupeError> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (i, r) in t.records.iter().enumerate() {
        let k = r.plain_key().ok_or(DedupeError::MissingKey(i))?;
        *counts.entry(k).or_default() += 1;
    }
    let records = t
        .records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.weight = 1.0 / counts[r.plain_key().expect("checked")] as f64;
            r
        })
        .collect();
    Ok(DataTable::new(t.name.clone(), records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SolubilityRecord;
    use proptest::prelude::*;

    fn table(rows: &[(&str, f64)]) -> DataTable {
        DataTable::new(
            "t",
            rows.iter()
                .map(|&(s, v)| SolubilityRecord::new(s, v, "t"))
                .collect(),
        )
    }

    #[test]
    fn exact_duplicate_removed() {
        let out = clean_set(
            &table(&[("CCO", 1.23), ("OCC", 1.23)]),
            StandardizeOptions::default(),
        );
        assert_eq!(out.table.len(), 1);
        assert_eq!(out.report.duplicates_removed, 1);
        assert_eq!(out.table.records[0].raw_smiles, "CCO");
    }

    #[test]
    fn different_values_both_kept() {
        let out = clean_set(
            &table(&[("CCO", 1.23), ("OCC", 1.24)]),
            StandardizeOptions::default(),
        );
        assert_eq!(out.table.len(), 2);
        assert_eq!(out.report.unique_molecules_plain, 1);
    }

    #[test]
    fn rejections_are_counted() {
        let t = table(&[
            ("CCO", 0.0),
            ("C1CC", 0.0),
            ("[Mg+2]", 0.0),
            ("[CH4]", 0.0),
            ("CC[Hg]C", 0.0),
        ]);
        let out = clean_set(&t, StandardizeOptions::default());
        let r = &out.report;
        assert_eq!(
            (r.parse_failures, r.metals_removed, r.single_atom_removed),
            (1, 2, 1)
        );
        assert_eq!(r.output_records, 1);
        assert!(r.is_conserved());
        assert_eq!(out.removals.len(), 4);
        assert_eq!(out.removals[0].index, 1);
    }

    #[test]
    fn stereo_and_plain_counts() {
        let t = table(&[("F/C=C/F", 0.0), ("F/C=C\\F", 0.0), ("FC=CF", 0.5)]);
        let r = clean_set(&t, StandardizeOptions::default()).report;
        assert_eq!(r.duplicates_removed, 1);
        assert_eq!(r.unique_molecules_plain, 1);
        assert_eq!(r.unique_molecules_stereo, 2);
    }

    #[test]
    fn neutralize_switch_changes_keys() {
        let t = table(&[("CC(=O)[O-]", 0.0), ("CC(=O)O", 0.0)]);
        assert_eq!(
            clean_set(&t, StandardizeOptions { neutralize: true })
                .table
                .len(),
            1
        );
        assert_eq!(
            clean_set(&t, StandardizeOptions { neutralize: false })
                .table
                .len(),
            2
        );
    }

    #[test]
    fn intra_weights() {
        let t = clean_set(
            &table(&[("CCO", 1.0), ("OCC", 2.0), ("CCC", 0.0)]),
            StandardizeOptions::default(),
        )
        .table;
        let w: Vec<f64> = assign_intra_weights(&t)
            .unwrap()
            .records
            .iter()
            .map(|r| r.weight)
            .collect();
        assert_eq!(w, vec![0.5, 0.5, 1.0]);
        assert_eq!(
            assign_intra_weights(&table(&[("CC", 0.0)])),
            Err(DedupeError::MissingKey(0))
        );
    }

    #[test]
    fn report_text_and_row() {
        let r = clean_set(&table(&[("CCO", 1.0)]), StandardizeOptions::default()).report;
        assert!(r.to_string().contains("output records           1"));
        assert_eq!(r.csv_row().len(), CleanReport::CSV_HEADER.len());
    }

    const POOL: [&str; 8] = [
        "CCO",
        "OCC",
        "C(C)O",
        "c1ccccc1",
        "C1=CC=CC=C1",
        "CC(=O)O",
        "[Na+].CC(=O)[O-]",
        "[Cu]",
    ];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn conservation_idempotence_weights(rows in prop::collection::vec((0usize..POOL.len(), 0u8..4), 0..20)) {
            let t = DataTable::new(
                "t",
                rows.iter().map(|&(i, v)| SolubilityRecord::new(POOL[i], f64::from(v) * 0.5, "t")).collect(),
            );
            let out = clean_set(&t, StandardizeOptions::default());
            prop_assert!(out.report.is_conserved());
            prop_assert!(out.report.unique_molecules_plain <= out.report.unique_molecules_stereo);
            prop_assert!(out.report.unique_molecules_stereo <= out.report.output_records);
            let again = clean_set(&out.table, StandardizeOptions::default());
            prop_assert_eq!(again.report.output_records, out.report.output_records);
            prop_assert_eq!(&again.table, &out.table);
            let w = assign_intra_weights(&out.table).unwrap();
            let sum: f64 = w.records.iter().map(|r| r.weight).sum();
            let n = out.report.unique_molecules_plain as f64;
            prop_assert!((sum - n).abs() <= 1e-9 * w.len().max(1) as f64);
        }
    }
}

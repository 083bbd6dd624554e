//! Inter-set curation: extend a target set with other sets' records for
//! the same molecules, merge values that agree within `d`, and weight
//! records by the quality of the set they came from.
//!
//! Merged value is the weight-weighted mean of the members and the merged
//! weight is `min(1, sum of member weights)`. Both rules are choices made
//! here; the source material only says the weight is updated.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{write_table, DataTable, SolubilityRecord};

#[derive(Debug, Error, PartialEq)]
pub enum CurateError {
    #[error("set '{0}' has no quality weight")]
    UnknownSetId(String),
    #[error("quality weight for '{0}' must lie in (0, 1], got {1}")]
    BadQuality(String, f64),
    #[error("merge threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("record {index} of '{table}' has no structure key")]
    MissingKey { table: String, index: usize },
}

/// Quality weight per set id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityTable(pub BTreeMap<String, f64>);

impl Default for QualityTable {
    fn default() -> Self {
        let entries = [
            ("AQUA", 1.0),
            ("PHYSP", 1.0),
            ("ESOL", 1.0),
            ("OCHEM", 0.85),
            ("AQSOL", 0.4),
            ("CHEMBL", 0.8),
        ];
        QualityTable(entries.iter().map(|&(k, v)| (k.to_string(), v)).collect())
    }
}

impl QualityTable {
    /// Exact match first, then case-insensitive.
    pub fn get(&self, set_id: &str) -> Option<f64> {
        self.0.get(set_id).copied().or_else(|| {
            self.0
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case(set_id))
                .map(|(_, &v)| v)
        })
    }

    pub fn quality(&self, set_id: &str) -> Result<f64, CurateError> {
        self.get(set_id)
            .ok_or_else(|| CurateError::UnknownSetId(set_id.to_string()))
    }

    pub fn validate(&self) -> Result<(), CurateError> {
        for (k, &v) in &self.0 {
            if !(v > 0.0 && v <= 1.0) {
                return Err(CurateError::BadQuality(k.clone(), v));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub d: f64,
    pub qualities: QualityTable,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            d: 0.5,
            qualities: QualityTable::default(),
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurateError> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(CurateError::BadThreshold(self.d));
        }
        self.qualities.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub record: SolubilityRecord,
    pub quality: f64,
    pub from_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub plain_key: String,
    pub members: Vec<Member>,
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Curated {
    pub table: DataTable,
    pub clusters: Vec<Cluster>,
}

struct Open {
    members: Vec<Member>,
    sum_w: f64,
    sum_wv: f64,
}

impl Open {
    fn mean(&self) -> f64 {
        self.sum_wv / self.sum_w
    }

    fn close(self, plain_key: &str) -> Cluster {
        let value = if self.members.len() == 1 {
            self.members[0].record.value
        } else {
            self.mean()
        };
        Cluster {
            plain_key: plain_key.to_string(),
            weight: self.sum_w.min(1.0),
            value,
            members: self.members,
        }
    }
}

/// Sorts by value and sweeps left to right. A value joins the open cluster
/// when it is less than `d` above the cluster's weighted mean and adding it
/// keeps the new mean less than `d` above the cluster's smallest value; the
/// second condition keeps every member within `d` of the final mean.
fn cluster_members(plain_key: &str, mut members: Vec<Member>, d: f64) -> Vec<Cluster> {
    members.sort_by(|a, b| a.record.value.total_cmp(&b.record.value));
    let mut out = Vec::new();
    let mut open: Option<Open> = None;
    for m in members {
        let (v, w) = (m.record.value, m.quality);
        if let Some(c) = open.as_mut() {
            let lowest = c.members[0].record.value;
            let new_mean = (c.sum_wv + w * v) / (c.sum_w + w);
            if v - c.mean() < d && new_mean - lowest < d {
                c.sum_w += w;
                c.sum_wv += w * v;
                c.members.push(m);
                continue;
            }
            out.push(open.take().expect("open").close(plain_key));
        }
        open = Some(Open {
            sum_w: w,
            sum_wv: w * v,
            members: vec![m],
        });
    }
    if let Some(c) = open {
        out.push(c.close(plain_key));
    }
    out
}

fn output_record(c: &Cluster, target_name: &str) -> SolubilityRecord {
    if let [only] = c.members.as_slice() {
        let mut r = only.record.clone();
        r.weight = c.weight;
        return r;
    }
    let lead = c
        .members
        .iter()
        .find(|m| m.from_target)
        .unwrap_or(&c.members[0]);
    let mut sets: Vec<&str> = Vec::new();
    for m in &c.members {
        if !sets.contains(&m.record.set_id.as_str()) {
            sets.push(&m.record.set_id);
        }
    }
    SolubilityRecord {
        raw_smiles: lead.record.raw_smiles.clone(),
        key: lead.record.key.clone(),
        value: c.value,
        weight: c.weight,
        set_id: target_name.to_string(),
        source_id: Some(format!("merged:{}", sets.join(";"))),
        temperature_c: None,
        ph: None,
    }
}

/// Curates `target` against `others`. Output is ordered by plain key, then
/// by cluster value. Molecules absent from the target are never added.
pub fn curate_target(
    target: &DataTable,
    others: &[DataTable],
    cfg: &CurationConfig,
) -> Result<Curated, CurateError> {
    cfg.validate()?;
    let key_of = |t: &DataTable, i: usize, r: &SolubilityRecord| -> Result<String, CurateError> {
        r.plain_key()
            .map(str::to_string)
            .ok_or(CurateError::MissingKey {
                table: t.name.clone(),
                index: i,
            })
    };

    let mut gathered: BTreeMap<String, Vec<Member>> = BTreeMap::new();
    for (i, r) in target.records.iter().enumerate() {
        let quality = cfg.qualities.quality(&r.set_id)?;
        gathered
            .entry(key_of(target, i, r)?)
            .or_default()
            .push(Member {
                record: r.clone(),
                quality,
                from_target: true,
            });
    }
    for t in others {
        for (i, r) in t.records.iter().enumerate() {
            let key = key_of(t, i, r)?;
            if let Some(list) = gathered.get_mut(&key) {
                let quality = cfg.qualities.quality(&r.set_id)?;
                list.push(Member {
                    record: r.clone(),
                    quality,
                    from_target: false,
                });
            }
        }
    }

    let clusters: Vec<Cluster> = gathered
        .into_par_iter()
        .flat_map_iter(|(key, members)| cluster_members(&key, members, cfg.d))
        .collect();
    let records = clusters
        .iter()
        .map(|c| output_record(c, &target.name))
        .collect();
    Ok(Curated {
        table: DataTable::new(target.name.clone(), records),
        clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub dataset: String,
    pub records_before: usize,
    pub mean_weight_before: f64,
    pub records_after: usize,
    pub mean_weight_after: f64,
    /// Both tables hold the same records (order aside).
    pub unchanged: bool,
}

fn mean_weight(t: &DataTable) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    t.records.iter().map(|r| r.weight).sum::<f64>() / t.len() as f64
}

fn sorted_rows(t: &DataTable) -> Vec<String> {
    let mut buf = Vec::new();
    write_table(t, &mut buf).expect("writing to memory");
    let mut rows: Vec<String> = String::from_utf8(buf)
        .expect("utf-8")
        .lines()
        .map(str::to_string)
        .collect();
    rows.sort();
    rows
}

pub fn curation_summary(before: &DataTable, after: &DataTable) -> CurationSummary {
    CurationSummary {
        dataset: after.name.clone(),
        records_before: before.len(),
        mean_weight_before: mean_weight(before),
        records_after: after.len(),
        mean_weight_after: mean_weight(after),
        unchanged: sorted_rows(before) == sorted_rows(after),
    }
}

impl fmt::Display for CurationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} records (mean weight {:.3}) -> {} records (mean weight {:.3})",
            self.dataset,
            self.records_before,
            self.mean_weight_before,
            self.records_after,
            self.mean_weight_after
        )?;
        if self.unchanged {
            write!(f, "\nnotice: curation was a no-op for {}", self.dataset)?;
        }
        Ok(())
    }
}

/// Plain keys present in a table.
pub fn molecule_set(t: &DataTable) -> HashSet<&str> {
    t.records.iter().filter_map(|r| r.plain_key()).collect()
}

//! Molecule-coherent k-fold plans with an internal train/early-stop split.
//!
//! Unique plain keys are sorted, shuffled with `DetRng::new(seed)` and dealt
//! round-robin into `k` folds. For fold `f` the molecules outside it are
//! taken in sorted order, shuffled with `DetRng::derive(seed, f + 1)`, and
//! the first `round(m / 10)` become the early-stop slice. With `k = 10` this
//! gives 81% train, 9% early stop and 10% evaluation.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataTable;
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    #[serde(rename = "earlystop")]
    EarlyStop,
    Eval,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::EarlyStop => "earlystop",
            Role::Eval => "eval",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FoldError {
    #[error("{molecules} molecules cannot fill {k} folds")]
    FewerMoleculesThanFolds { molecules: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("fold index {index} out of range for {k} folds")]
    BadFoldIndex { index: usize, k: usize },
    #[error("record {0} has no structure key")]
    MissingKey(usize),
    #[error("molecule '{0}' is not covered by the plan")]
    UncoveredMolecule(String),
    #[error("plan file: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Evaluation fold of each molecule.
    pub assignment: BTreeMap<String, usize>,
    /// Per fold, the role of every molecule outside that fold.
    pub internal: Vec<BTreeMap<String, Role>>,
}

impl FoldPlan {
    pub fn role(&self, fold: usize, key: &str) -> Option<Role> {
        match self.assignment.get(key) {
            Some(&f) if f == fold => Some(Role::Eval),
            Some(_) => self.internal.get(fold)?.get(key).copied(),
            None => None,
        }
    }

    /// Molecules evaluated in `fold`, sorted.
    pub fn eval_molecules(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|&(_, &f)| f == fold)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn count(&self, fold: usize, role: Role) -> usize {
        self.assignment
            .keys()
            .filter(|k| self.role(fold, k) == Some(role))
            .count()
    }
}

fn unique_keys(t: &DataTable) -> Result<Vec<String>, FoldError> {
    let mut keys = Vec::with_capacity(t.len());
    for (i, r) in t.records.iter().enumerate() {
        keys.push(r.plain_key().ok_or(FoldError::MissingKey(i))?.to_string());
    }
    keys.sort_unstable();
    keys.dedup();
    Ok(keys)
}

pub fn assign_folds(t: &DataTable, k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    plan_for_keys(unique_keys(t)?, k, seed)
}

/// Builds a plan from a list of molecule keys (duplicates are ignored).
pub fn plan_for_keys(mut keys: Vec<String>, k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if k < 2 {
        return Err(FoldError::BadFoldCount(k));
    }
    keys.sort_unstable();
    keys.dedup();
    if keys.len() < k {
        return Err(FoldError::FewerMoleculesThanFolds {
            molecules: keys.len(),
            k,
        });
    }
    let mut shuffled = keys.clone();
    DetRng::new(seed).shuffle(&mut shuffled);
    let assignment: BTreeMap<String, usize> = shuffled
        .into_iter()
        .enumerate()
        .map(|(i, key)| (key, i % k))
        .collect();

    let internal = (0..k)
        .map(|f| {
            let mut rest: Vec<&String> = keys.iter().filter(|key| assignment[*key] != f).collect();
            DetRng::derive(seed, f as u64 + 1).shuffle(&mut rest);
            let n_stop = (rest.len() + 5) / 10;
            rest.iter()
                .enumerate()
                .map(|(i, key)| {
                    (
                        (*key).clone(),
                        if i < n_stop {
                            Role::EarlyStop
                        } else {
                            Role::Train
                        },
                    )
                })
                .collect()
        })
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        assignment,
        internal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: DataTable,
    pub earlystop: DataTable,
    pub eval: DataTable,
}

/// Splits the records of `t` for one fold. Record order is preserved.
pub fn materialize_split(t: &DataTable, plan: &FoldPlan, fold: usize) -> Result<Split, FoldError> {
    if fold >= plan.k {
        return Err(FoldError::BadFoldIndex {
            index: fold,
            k: plan.k,
        });
    }
    let name = |part: &str| format!("{}.fold{fold}.{part}", t.name);
    let mut split = Split {
        train: DataTable::new(name("train"), Vec::new()),
        earlystop: DataTable::new(name("earlystop"), Vec::new()),
        eval: DataTable::new(name("eval"), Vec::new()),
    };
    for (i, r) in t.records.iter().enumerate() {
        let key = r.plain_key().ok_or(FoldError::MissingKey(i))?;
        let role = plan
            .role(fold, key)
            .ok_or_else(|| FoldError::UncoveredMolecule(key.to_string()))?;
        let dest = match role {
            Role::Train => &mut split.train,
            Role::EarlyStop => &mut split.earlystop,
            Role::Eval => &mut split.eval,
        };
        dest.records.push(r.clone());
    }
    Ok(split)
}

#[derive(Debug, Serialize, Deserialize)]
struct PlanRow {
    plain_key: String,
    fold: usize,
    role: Role,
}

/// One row per (molecule, fold) with the molecule's role in that fold.
pub fn write_plan<W: Write>(plan: &FoldPlan, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["plain_key", "fold", "role"])?;
    for key in plan.assignment.keys() {
        for fold in 0..plan.k {
            let role = plan.role(fold, key).expect("complete plan");
            w.write_record([key.as_str(), &fold.to_string(), role.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a plan written by [`write_plan`]. The seed is not part of the
/// file and is supplied by the caller.
pub fn read_plan<R: Read>(input: R, seed: u64) -> Result<FoldPlan, FoldError> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize::<PlanRow>() {
        rows.push(row.map_err(|e| FoldError::Malformed(e.to_string()))?);
    }
    let k = rows.iter().map(|r| r.fold + 1).max().unwrap_or(0);
    let mut assignment = BTreeMap::new();
    let mut internal = vec![BTreeMap::new(); k];
    for r in rows {
        match r.role {
            Role::Eval => {
                if assignment.insert(r.plain_key.clone(), r.fold).is_some() {
                    return Err(FoldError::Malformed(format!(
                        "'{}' evaluated twice",
                        r.plain_key
                    )));
                }
            }
            role => {
                internal[r.fold].insert(r.plain_key, role);
            }
        }
    }
    let plan = FoldPlan {
        k,
        seed,
        assignment,
        internal,
    };
    for key in plan.assignment.keys() {
        if (0..k).any(|f| plan.role(f, key).is_none()) {
            return Err(FoldError::Malformed(format!(
                "'{key}' lacks a role in some fold"
            )));
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SolubilityRecord;
    use crate::standardize::StructureKey;
    use proptest::prelude::*;

    fn keyed(keys: &[String]) -> DataTable {
        let records = keys
            .iter()
            .map(|k| {
                let mut r = SolubilityRecord::new(k.clone(), 0.0, "t");
                r.key = Some(StructureKey {
                    stereo_key: k.clone(),
                    plain_key: k.clone(),
                });
                r
            })
            .collect();
        DataTable::new("t", records)
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("M{i:04}")).collect()
    }

    #[test]
    fn one_molecule_per_fold() {
        let plan = assign_folds(&keyed(&names(10)), 10, 3).unwrap();
        for f in 0..10 {
            assert_eq!(plan.eval_molecules(f).len(), 1);
            assert_eq!(plan.count(f, Role::EarlyStop), 1);
            assert_eq!(plan.count(f, Role::Train), 8);
        }
    }

    #[test]
    fn geometry_for_1000() {
        let plan = assign_folds(&keyed(&names(1000)), 10, 42).unwrap();
        for f in 0..10 {
            assert_eq!(plan.count(f, Role::Eval), 100);
            assert!(plan.count(f, Role::Train).abs_diff(810) <= 1);
            assert!(plan.count(f, Role::EarlyStop).abs_diff(90) <= 1);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            assign_folds(&keyed(&names(3)), 10, 0),
            Err(FoldError::FewerMoleculesThanFolds {
                molecules: 3,
                k: 10
            })
        );
        let t = keyed(&names(20));
        let plan = assign_folds(&t, 10, 0).unwrap();
        assert_eq!(
            materialize_split(&t, &plan, 10),
            Err(FoldError::BadFoldIndex { index: 10, k: 10 })
        );
    }

    #[test]
    fn records_of_a_molecule_move_together() {
        let mut ks = names(30);
        ks.push("M0007".into());
        ks.push("M0007".into());
        let t = keyed(&ks);
        let plan = assign_folds(&t, 10, 9).unwrap();
        for f in 0..10 {
            let s = materialize_split(&t, &plan, f).unwrap();
            let count =
                |d: &DataTable| d.records.iter().filter(|r| r.raw_smiles == "M0007").count();
            let counts = [count(&s.train), count(&s.earlystop), count(&s.eval)];
            assert!(
                counts.contains(&3) && counts.iter().sum::<usize>() == 3,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn plan_csv_round_trip() {
        let plan = assign_folds(&keyed(&names(37)), 5, 11).unwrap();
        let mut buf = Vec::new();
        write_plan(&plan, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 1 + 37 * 5);
        assert_eq!(read_plan(buf.as_slice(), 11).unwrap(), plan);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn partition_and_determinism(n in 10usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let t = keyed(&names(n));
            let plan = assign_folds(&t, k, seed).unwrap();
            prop_assert_eq!(&assign_folds(&t, k, seed).unwrap(), &plan);
            let sizes: Vec<usize> = (0..k).map(|f| plan.eval_molecules(f).len()).collect();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for (f, size) in sizes.iter().enumerate() {
                let s = materialize_split(&t, &plan, f).unwrap();
                prop_assert_eq!(s.train.len() + s.earlystop.len() + s.eval.len(), n);
                let m = n - size;
                prop_assert_eq!(s.earlystop.len(), (m + 5) / 10);
                prop_assert_eq!(&materialize_split(&t, &plan, f).unwrap(), &s);
            }
        }
    }
}

//! Hyperparameter selection harness.
//!
//! The naive protocol picks the configuration with the lowest pooled
//! cross-validation RMSE and reports that same number. The nested protocol
//! picks a configuration inside each outer fold by an inner cross-validation
//! over the outer training molecules, then reports the pooled RMSE of the
//! outer evaluation folds. Both protocols also score molecules held out
//! from selection: every fold model behind the reported number (the chosen
//! configuration's fold models, or each outer fold's model when nested)
//! predicts the held-out rows and the squared errors are pooled. Scoring the
//! same models keeps training-set size out of the comparison, so the gap
//! between the two numbers measures selection alone.
//!
//! Models are fitted on the train role of each fold. The early-stop slice is
//! kept in the plan for compatibility with exported splits but ridge has no
//! use for it.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{featurize_smiles, MAX_RADIUS};
use super::ridge::{fit_ridge, RidgeError, RidgeModel};
use crate::dataset::DataTable;
use crate::folds::{plan_for_keys, FoldError, FoldPlan, Role};
use crate::metrics::EvalPair;
use crate::rng::DetRng;

/// Stream used to draw the held-out molecules.
const HOLDOUT_STREAM: u64 = 0x484F_4C44;
/// Fraction of molecules kept away from selection.
pub const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum HpoError {
    #[error("configuration space is empty")]
    EmptySpace,
    #[error("configuration {0} appears twice")]
    DuplicateConfig(usize),
    #[error("configuration {index}: {reason}")]
    BadConfig { index: usize, reason: String },
    #[error("record {0} has no structure key")]
    MissingKey(usize),
    #[error("molecule '{0}' is not covered by the plan")]
    Uncovered(String),
    #[error("cannot featurize '{0}'")]
    BadKey(String),
    #[error("need at least 20 trials, got {0}")]
    TooFewTrials(usize),
    #[error("{0}")]
    Ridge(#[from] RidgeError),
    #[error("{0}")]
    Fold(#[from] FoldError),
    #[error("fold {0} has no {1} records")]
    EmptyRole(usize, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpoConfig {
    pub lambda: f64,
    pub radius: u8,
    pub n_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoConfigSpace {
    configs: Vec<HpoConfig>,
}

impl HpoConfigSpace {
    pub fn new(configs: Vec<HpoConfig>) -> Result<Self, HpoError> {
        if configs.is_empty() {
            return Err(HpoError::EmptySpace);
        }
        for (i, c) in configs.iter().enumerate() {
            let bad = |reason: &str| HpoError::BadConfig {
                index: i,
                reason: reason.to_string(),
            };
            if !(c.lambda.is_finite() && c.lambda >= 0.0) {
                return Err(bad("lambda must be finite and non-negative"));
            }
            if c.radius > MAX_RADIUS {
                return Err(bad("radius must be at most 3"));
            }
            if !c.n_bits.is_power_of_two() {
                return Err(bad("n_bits must be a power of two"));
            }
            if configs[..i].contains(c) {
                return Err(HpoError::DuplicateConfig(i));
            }
        }
        Ok(HpoConfigSpace { configs })
    }

    /// Cartesian product in (lambda, radius, n_bits) order.
    pub fn grid(lambdas: &[f64], radii: &[u8], n_bits: &[usize]) -> Result<Self, HpoError> {
        let mut configs = Vec::new();
        for &lambda in lambdas {
            for &radius in radii {
                for &bits in n_bits {
                    configs.push(HpoConfig {
                        lambda,
                        radius,
                        n_bits: bits,
                    });
                }
            }
        }
        HpoConfigSpace::new(configs)
    }

    pub fn configs(&self) -> &[HpoConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Naive,
    Nested,
}

/// Fold structure over a set of rows.
#[derive(Debug, Clone)]
pub struct CvLayout {
    pub k: usize,
    /// Evaluation fold of each row.
    pub eval_fold: Vec<usize>,
    /// Per fold, rows with the train role.
    pub train: Vec<Vec<usize>>,
    /// Per fold, rows evaluated.
    pub eval: Vec<Vec<usize>>,
}

impl CvLayout {
    pub fn new(keys: &[&str], plan: &FoldPlan) -> Result<Self, HpoError> {
        let mut eval_fold = Vec::with_capacity(keys.len());
        let mut train = vec![Vec::new(); plan.k];
        let mut eval = vec![Vec::new(); plan.k];
        for (row, key) in keys.iter().enumerate() {
            let f = *plan
                .assignment
                .get(*key)
                .ok_or_else(|| HpoError::Uncovered(key.to_string()))?;
            eval_fold.push(f);
            for fold in 0..plan.k {
                match plan.role(fold, key) {
                    Some(Role::Train) => train[fold].push(row),
                    Some(Role::Eval) => eval[fold].push(row),
                    Some(Role::EarlyStop) => {}
                    None => return Err(HpoError::Uncovered(key.to_string())),
                }
            }
        }
        Ok(CvLayout {
            k: plan.k,
            eval_fold,
            train,
            eval,
        })
    }
}

/// Per-config design matrices. Several configs may share one matrix.
#[derive(Debug, Clone)]
pub struct DesignSet {
    pub matrices: Vec<DMatrix<f64>>,
    pub config_matrix: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl DesignSet {
    fn len(&self) -> usize {
        self.lambdas.len()
    }

    fn matrix(&self, config: usize) -> &DMatrix<f64> {
        &self.matrices[self.config_matrix[config]]
    }
}

fn fit_predict(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    lambda: f64,
    train: &[usize],
    test_x: &DMatrix<f64>,
    test: &[usize],
) -> Result<Vec<f64>, HpoError> {
    let xt = x.select_rows(train);
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let wt: Vec<f64> = train.iter().map(|&i| w[i]).collect();
    let model = fit_ridge(&xt, &yt, Some(&wt), lambda)?;
    Ok(model.predict(&test_x.select_rows(test)))
}

fn pooled_rmse(sq_sum: f64, n: usize) -> f64 {
    (sq_sum / n as f64).sqrt()
}

/// Fits on `train[f]`, predicts `eval[f]` for each fold; returns the
/// predictions in fold order.
fn cv_predictions(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    lambda: f64,
    train: &[Vec<usize>],
    eval: &[Vec<usize>],
) -> Result<Vec<Vec<f64>>, HpoError> {
    train
        .iter()
        .zip(eval)
        .enumerate()
        .map(|(f, (tr, ev))| {
            if ev.is_empty() {
                return Ok(Vec::new());
            }
            if tr.is_empty() {
                return Err(HpoError::EmptyRole(f, "train"));
            }
            fit_predict(x, y, w, lambda, tr, x, ev)
        })
        .collect()
}

fn cv_rmse(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    lambda: f64,
    train: &[Vec<usize>],
    eval: &[Vec<usize>],
) -> Result<f64, HpoError> {
    let preds = cv_predictions(x, y, w, lambda, train, eval)?;
    let mut ss = 0.0;
    let mut n = 0;
    for (p, ev) in preds.iter().zip(eval) {
        for (pi, &row) in p.iter().zip(ev) {
            ss += (pi - y[row]).powi(2);
            n += 1;
        }
    }
    Ok(pooled_rmse(ss, n))
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v < xs[best] {
            best = i;
        }
    }
    best
}

/// Pooled CV RMSE of every configuration.
pub fn naive_scores(
    ds: &DesignSet,
    y: &[f64],
    w: &[f64],
    layout: &CvLayout,
) -> Result<Vec<f64>, HpoError> {
    (0..ds.len())
        .into_par_iter()
        .map(|c| {
            cv_rmse(
                ds.matrix(c),
                y,
                w,
                ds.lambdas[c],
                &layout.train,
                &layout.eval,
            )
        })
        .collect()
}

/// Nested selection: per outer fold, the configuration chosen by inner CV
/// and the reported pooled outer RMSE.
pub fn nested_selection(
    ds: &DesignSet,
    y: &[f64],
    w: &[f64],
    layout: &CvLayout,
) -> Result<(Vec<usize>, f64), HpoError> {
    let per_fold: Vec<(usize, Vec<f64>)> = (0..layout.k)
        .into_par_iter()
        .map(|f| -> Result<(usize, Vec<f64>), HpoError> {
            let outer_train = &layout.train[f];
            let chosen = if ds.len() == 1 {
                0
            } else {
                let inner_folds: Vec<usize> = (0..layout.k).filter(|&g| g != f).collect();
                let split = |g: usize, inside: bool| -> Vec<usize> {
                    outer_train
                        .iter()
                        .copied()
                        .filter(|&r| (layout.eval_fold[r] == g) == inside)
                        .collect()
                };
                let inner_train: Vec<Vec<usize>> =
                    inner_folds.iter().map(|&g| split(g, false)).collect();
                let inner_eval: Vec<Vec<usize>> =
                    inner_folds.iter().map(|&g| split(g, true)).collect();
                let scores = (0..ds.len())
                    .map(|c| cv_rmse(ds.matrix(c), y, w, ds.lambdas[c], &inner_train, &inner_eval))
                    .collect::<Result<Vec<_>, _>>()?;
                argmin(&scores)
            };
            let ev = &layout.eval[f];
            let pred = if ev.is_empty() {
                Vec::new()
            } else if outer_train.is_empty() {
                return Err(HpoError::EmptyRole(f, "train"));
            } else {
                let x = ds.matrix(chosen);
                fit_predict(x, y, w, ds.lambdas[chosen], outer_train, x, ev)?
            };
            Ok((chosen, pred))
        })
        .collect::<Result<_, _>>()?;
    let mut ss = 0.0;
    let mut n = 0;
    for (f, (_, pred)) in per_fold.iter().enumerate() {
        for (p, &row) in pred.iter().zip(&layout.eval[f]) {
            ss += (p - y[row]).powi(2);
            n += 1;
        }
    }
    Ok((
        per_fold.into_iter().map(|(c, _)| c).collect(),
        pooled_rmse(ss, n),
    ))
}

/// Most frequent entry; ties go to the smallest index.
fn mode(choices: &[usize]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in choices {
        *counts.entry(c).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, n)| n == top)
        .map(|(c, _)| c)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub protocol: Protocol,
    pub chosen_index: usize,
    pub reported_rmse: f64,
    pub holdout_rmse: f64,
    /// Chosen configuration per outer fold (nested) or the single choice
    /// repeated (naive).
    pub fold_choices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoOutcome {
    pub chosen: HpoConfig,
    pub result: SelectionResult,
}

/// Selection over prepared designs. Rows of `selection` take part in
/// selection. The holdout score pools, over folds, the errors on `holdout`
/// of each fold's train-role model under that fold's chosen configuration.
pub fn select_on_designs(
    selection: (&DesignSet, &[f64], &[f64], &CvLayout),
    holdout: (&DesignSet, &[f64]),
    protocol: Protocol,
) -> Result<SelectionResult, HpoError> {
    let (ds, y, w, layout) = selection;
    let (chosen_index, reported_rmse, fold_choices) = match protocol {
        Protocol::Naive => {
            let scores = naive_scores(ds, y, w, layout)?;
            let c = argmin(&scores);
            (c, scores[c], vec![c; layout.k])
        }
        Protocol::Nested => {
            let (choices, reported) = nested_selection(ds, y, w, layout)?;
            (mode(&choices), reported, choices)
        }
    };
    let holdout_rmse = holdout_score(ds, y, w, layout, holdout, &fold_choices)?;
    Ok(SelectionResult {
        protocol,
        chosen_index,
        reported_rmse,
        holdout_rmse,
        fold_choices,
    })
}

fn holdout_score(
    ds: &DesignSet,
    y: &[f64],
    w: &[f64],
    layout: &CvLayout,
    holdout: (&DesignSet, &[f64]),
    fold_choices: &[usize],
) -> Result<f64, HpoError> {
    let (hds, hy) = holdout;
    if hy.is_empty() {
        return Ok(f64::NAN);
    }
    let test: Vec<usize> = (0..hy.len()).collect();
    let mut ss = 0.0;
    let mut n = 0;
    for (f, &c) in fold_choices.iter().enumerate() {
        let train = &layout.train[f];
        if train.is_empty() {
            return Err(HpoError::EmptyRole(f, "train"));
        }
        let pred = fit_predict(
            ds.matrix(c),
            y,
            w,
            ds.lambdas[c],
            train,
            hds.matrix(c),
            &test,
        )?;
        ss += pred
            .iter()
            .zip(hy)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>();
        n += hy.len();
    }
    Ok(pooled_rmse(ss, n))
}

fn record_keys(t: &DataTable) -> Result<Vec<&str>, HpoError> {
    t.records
        .iter()
        .enumerate()
        .map(|(i, r)| r.plain_key().ok_or(HpoError::MissingKey(i)))
        .collect()
}

/// Count-fingerprint design matrix of the given molecules.
pub fn design_matrix(keys: &[&str], radius: u8, n_bits: usize) -> Result<DMatrix<f64>, HpoError> {
    let mut cache: HashMap<&str, Vec<u32>> = HashMap::new();
    let mut x = DMatrix::zeros(keys.len(), n_bits);
    for (row, key) in keys.iter().enumerate() {
        if !cache.contains_key(key) {
            let fv = featurize_smiles(key, radius, n_bits)
                .map_err(|_| HpoError::BadKey(key.to_string()))?;
            cache.insert(key, fv.counts);
        }
        for (j, &c) in cache[key].iter().enumerate() {
            x[(row, j)] = f64::from(c);
        }
    }
    Ok(x)
}

fn design_set(keys: &[&str], space: &[HpoConfig]) -> Result<DesignSet, HpoError> {
    let mut index: HashMap<(u8, usize), usize> = HashMap::new();
    let mut matrices = Vec::new();
    let mut config_matrix = Vec::new();
    for c in space {
        let id = match index.get(&(c.radius, c.n_bits)) {
            Some(&id) => id,
            None => {
                matrices.push(design_matrix(keys, c.radius, c.n_bits)?);
                index.insert((c.radius, c.n_bits), matrices.len() - 1);
                matrices.len() - 1
            }
        };
        config_matrix.push(id);
    }
    Ok(DesignSet {
        matrices,
        config_matrix,
        lambdas: space.iter().map(|c| c.lambda).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPredictions {
    pub fold: usize,
    pub pairs: Vec<EvalPair>,
}

/// Fits one configuration per fold on the train role and predicts the
/// evaluation fold. Every record is predicted exactly once overall.
pub fn evaluate_cv(
    t: &DataTable,
    plan: &FoldPlan,
    config: &HpoConfig,
) -> Result<Vec<FoldPredictions>, HpoError> {
    HpoConfigSpace::new(vec![*config])?;
    let keys = record_keys(t)?;
    let layout = CvLayout::new(&keys, plan)?;
    let x = design_matrix(&keys, config.radius, config.n_bits)?;
    let y: Vec<f64> = t.records.iter().map(|r| r.value).collect();
    let w: Vec<f64> = t.records.iter().map(|r| r.weight).collect();
    let preds = cv_predictions(&x, &y, &w, config.lambda, &layout.train, &layout.eval)?;
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(fold, p)| FoldPredictions {
            fold,
            pairs: p
                .into_iter()
                .zip(&layout.eval[fold])
                .map(|(pred, &row)| EvalPair::new(keys[row], pred, y[row], w[row]))
                .collect(),
        })
        .collect())
}

/// Splits molecules into (selection, holdout) key sets.
pub fn holdout_molecules(keys: &[&str], seed: u64) -> Vec<String> {
    let mut unique: Vec<&str> = keys.to_vec();
    unique.sort_unstable();
    unique.dedup();
    DetRng::derive(seed, HOLDOUT_STREAM).shuffle(&mut unique);
    let n = (unique.len() as f64 * HOLDOUT_FRACTION).round() as usize;
    let mut out: Vec<String> = unique[..n].iter().map(|s| s.to_string()).collect();
    out.sort_unstable();
    out
}

/// Runs one selection protocol on a table. A fifth of the molecules is
/// set aside before selection; the plan's folds are used for the rest.
pub fn hpo_select(
    t: &DataTable,
    plan: &FoldPlan,
    space: &HpoConfigSpace,
    protocol: Protocol,
    seed: u64,
) -> Result<HpoOutcome, HpoError> {
    let keys = record_keys(t)?;
    let held = holdout_molecules(&keys, seed);
    let (mut sel_rows, mut hold_rows) = (Vec::new(), Vec::new());
    for (i, k) in keys.iter().enumerate() {
        if held.binary_search_by(|h| h.as_str().cmp(k)).is_ok() {
            hold_rows.push(i);
        } else {
            sel_rows.push(i);
        }
    }
    let pick = |rows: &[usize]| -> (Vec<&str>, Vec<f64>, Vec<f64>) {
        (
            rows.iter().map(|&i| keys[i]).collect(),
            rows.iter().map(|&i| t.records[i].value).collect(),
            rows.iter().map(|&i| t.records[i].weight).collect(),
        )
    };
    let (sk, sy, sw) = pick(&sel_rows);
    let (hk, hy, _) = pick(&hold_rows);
    let layout = CvLayout::new(&sk, plan)?;
    let sds = design_set(&sk, space.configs())?;
    let hds = design_set(&hk, space.configs())?;
    let result = select_on_designs((&sds, &sy, &sw, &layout), (&hds, &hy), protocol)?;
    Ok(HpoOutcome {
        chosen: space.configs()[result.chosen_index],
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub configs: usize,
    pub trials: usize,
    pub mean_reported: f64,
    pub mean_holdout: f64,
    pub mean_gap: f64,
    pub std_err: f64,
}

/// Random ridge configurations for the synthetic experiment: a log-uniform
/// lambda in [1e-2, 1e3] and a random non-empty feature subset.
fn random_configs(rng: &mut DetRng, count: usize, n_features: usize) -> Vec<(f64, Vec<usize>)> {
    (0..count)
        .map(|_| {
            let lambda = 10f64.powf(-2.0 + 5.0 * rng.unit());
            let size = 1 + rng.below_usize(n_features);
            let mut cols: Vec<usize> = (0..n_features).collect();
            rng.shuffle(&mut cols);
            cols.truncate(size);
            cols.sort_unstable();
            (lambda, cols)
        })
        .collect()
}

fn normal_matrix(rng: &mut DetRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Per trial: standard normal features, pure-noise targets rescaled to unit
/// root mean square, and a 10-fold plan. The holdout score of the chosen
/// configuration pools its fold models' errors on unlimited fresh data,
/// which has a closed form here ([`population_rmse`]). Config lists are drawn
/// once per trial and the first `c` of them form the space of size `c`, so
/// all sizes share the same random numbers. The gap is holdout RMSE minus
/// the naive reported RMSE of the chosen configuration.
pub fn overfit_gap_experiment(
    n_samples: usize,
    n_features: usize,
    config_counts: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<GapRow>, HpoError> {
    if trials < 20 {
        return Err(HpoError::TooFewTrials(trials));
    }
    let max_c = config_counts.iter().copied().max().unwrap_or(0);
    if max_c == 0 || n_features == 0 {
        return Err(HpoError::EmptySpace);
    }
    let keys: Vec<String> = (0..n_samples).map(|i| format!("S{i:06}")).collect();
    let key_refs: Vec<&str> = keys.iter().map(String::as_str).collect();

    // (reported, holdout) per trial per config count.
    let per_trial: Vec<Vec<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<(f64, f64)>, HpoError> {
            let mut rng = DetRng::derive(seed, trial as u64);
            let x = normal_matrix(&mut rng, n_samples, n_features);
            let mut y: Vec<f64> = (0..n_samples).map(|_| rng.sample(StandardNormal)).collect();
            let rms = (y.iter().map(|v| v * v).sum::<f64>() / n_samples as f64).sqrt();
            y.iter_mut().for_each(|v| *v /= rms);
            let configs = random_configs(&mut rng, max_c, n_features);
            let plan = plan_for_keys(keys.clone(), 10, rand::RngCore::next_u64(&mut rng))?;
            let layout = CvLayout::new(&key_refs, &plan)?;
            let w = vec![1.0; n_samples];
            let ds = DesignSet {
                matrices: configs
                    .iter()
                    .map(|(_, cols)| x.select_columns(cols))
                    .collect(),
                config_matrix: (0..max_c).collect(),
                lambdas: configs.iter().map(|(l, _)| *l).collect(),
            };
            let scores = naive_scores(&ds, &y, &w, &layout)?;
            config_counts
                .iter()
                .map(|&c| {
                    let chosen = argmin(&scores[..c]);
                    let mut mse = 0.0;
                    for train in &layout.train {
                        let xt = ds.matrix(chosen).select_rows(train);
                        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                        let model = fit_ridge(&xt, &yt, None, ds.lambdas[chosen])?;
                        mse += population_rmse(&model).powi(2);
                    }
                    Ok((scores[chosen], (mse / layout.k as f64).sqrt()))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    Ok(config_counts
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let rep: Vec<f64> = per_trial.iter().map(|t| t[j].0).collect();
            let hold: Vec<f64> = per_trial.iter().map(|t| t[j].1).collect();
            let gaps: Vec<f64> = rep.iter().zip(&hold).map(|(r, h)| h - r).collect();
            let (mean_gap, sd) = mean_sd(&gaps);
            GapRow {
                configs: c,
                trials,
                mean_reported: mean_sd(&rep).0,
                mean_holdout: mean_sd(&hold).0,
                mean_gap,
                std_err: sd / (trials as f64).sqrt(),
            }
        })
        .collect())
}

/// RMSE of a linear model on unlimited fresh data when features and
/// targets are independent standard normals: `sqrt(1 + b^2 + |beta|^2)`.
pub fn population_rmse(model: &RidgeModel) -> f64 {
    let beta_sq: f64 = model.coefficients.iter().map(|b| b * b).sum();
    (1.0 + model.intercept.powi(2) + beta_sq).sqrt()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

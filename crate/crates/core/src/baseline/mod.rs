//! Count fingerprints, ridge regression and hyperparameter selection.

mod features;
mod hpo;
mod ridge;

pub use features::{
    featurize, featurize_smiles, fold_id, FeatureVector, FOLD_MULTIPLIER, MAX_RADIUS,
};
pub use hpo::{
    design_matrix, evaluate_cv, holdout_molecules, hpo_select, naive_scores, nested_selection,
    overfit_gap_experiment, select_on_designs, CvLayout, DesignSet, FoldPredictions, GapRow,
    HpoConfig, HpoConfigSpace, HpoError, HpoOutcome, Protocol, SelectionResult, HOLDOUT_FRACTION,
};
pub use ridge::{fit_ridge, objective, RidgeError, RidgeModel};

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::metrics::{Confusion, CvReport};
use super::{Criterion, HyperParams, LabelSource, LabeledExample, MaxFeatures, SmmError, SmmModel};
use crate::seed;

/// How examples are assigned to folds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    /// Stratified by class, examples shuffled independently of user.
    #[default]
    Record,
    /// Every user's examples land in a single fold.
    UserDisjoint,
}

/// Fold index per example. Only self-reported examples get a fold;
/// model-labeled examples are training-only (`None`).
pub fn assign_folds(examples: &[LabeledExample], k: usize, seed: u64, mode: FoldMode) -> Vec<Option<usize>> {
    let mut rng = seed::rng(seed);
    let mut fold = vec![None; examples.len()];
    match mode {
        FoldMode::Record => {
            let mut by_class: [Vec<usize>; 3] = Default::default();
            for (i, e) in examples.iter().enumerate() {
                if e.source == LabelSource::SelfReport {
                    by_class[e.label.index()].push(i);
                }
            }
            // Continue the round-robin across classes so fold sizes stay within one.
            let mut next = 0usize;
            for idx in &mut by_class {
                idx.shuffle(&mut rng);
                for &i in idx.iter() {
                    fold[i] = Some(next % k);
                    next += 1;
                }
            }
        }
        FoldMode::UserDisjoint => {
            let mut users: Vec<&str> = examples
                .iter()
                .filter(|e| e.source == LabelSource::SelfReport)
                .map(|e| e.user.as_str())
                .collect();
            users.sort_unstable();
            users.dedup();
            users.shuffle(&mut rng);
            let of: BTreeMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (*u, i % k)).collect();
            for (i, e) in examples.iter().enumerate() {
                if e.source == LabelSource::SelfReport {
                    fold[i] = of.get(e.user.as_str()).copied();
                }
            }
        }
    }
    fold
}

/// Stratified k-fold cross-validation with pooled predictions.
///
/// Each fold's model is trained (and imputed) on the other folds plus any
/// model-labeled examples, and evaluated on its self-reported examples only.
pub fn cross_validate(
    examples: &[LabeledExample],
    hp: &HyperParams,
    k: usize,
    seed: u64,
    mode: FoldMode,
) -> Result<CvReport, SmmError> {
    hp.validate()?;
    let evaluable = examples.iter().filter(|e| e.source == LabelSource::SelfReport).count();
    if k < 2 || evaluable < k {
        return Err(SmmError::TooFewExamples { need: k.max(2), got: evaluable });
    }
    let folds = assign_folds(examples, k, seed::derive(seed, 0), mode);
    let mut confusion = Confusion::default();
    for f in 0..k {
        let train: Vec<LabeledExample> =
            examples.iter().zip(&folds).filter(|(_, g)| **g != Some(f)).map(|(e, _)| e.clone()).collect();
        let test: Vec<&LabeledExample> =
            examples.iter().zip(&folds).filter(|(_, g)| **g == Some(f)).map(|(e, _)| e).collect();
        if test.is_empty() {
            continue;
        }
        let model = SmmModel::fit(&train, hp, seed::derive(seed, 1 + f as u64), "")?;
        let rows: Vec<&[f64]> = test.iter().map(|e| e.features.as_slice()).collect();
        for (e, (pred, _)) in test.iter().zip(model.predict_many(&rows)?) {
            confusion.add(e.label, pred);
        }
    }
    Ok(CvReport::from_confusion(confusion, k, seed))
}

/// Ranges sampled by the random search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub n_estimators: (usize, usize),
    /// Inclusive range; `None` (unbounded depth) is drawn with probability `p_no_max_depth`.
    pub max_depth: (usize, usize),
    pub p_no_max_depth: f64,
    pub min_samples_split: (usize, usize),
    pub min_samples_leaf: (usize, usize),
    pub criteria: Vec<Criterion>,
    pub bootstrap: Vec<bool>,
    pub max_features: Vec<MaxFeatures>,
    /// Leaf budgets to draw from; `None` means unlimited.
    pub max_leaf_nodes: Vec<Option<usize>>,
    pub folds: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            n_estimators: (50, 500),
            max_depth: (4, 32),
            p_no_max_depth: 0.2,
            min_samples_split: (2, 20),
            min_samples_leaf: (1, 10),
            criteria: vec![Criterion::Gini, Criterion::Entropy],
            bootstrap: vec![true, false],
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Log2, MaxFeatures::Fraction(0.3)],
            max_leaf_nodes: vec![None],
            folds: 5,
        }
    }
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut seed::Rng) -> HyperParams {
        let pick = |rng: &mut seed::Rng, (lo, hi): (usize, usize)| rng.random_range(lo..=hi.max(lo));
        let n_estimators = pick(rng, self.n_estimators);
        let max_depth = if rng.random_bool(self.p_no_max_depth.clamp(0.0, 1.0)) {
            None
        } else {
            Some(pick(rng, self.max_depth))
        };
        let min_samples_split = pick(rng, self.min_samples_split).max(2);
        let min_samples_leaf = pick(rng, self.min_samples_leaf).max(1);
        let criterion = *self.criteria.choose(rng).unwrap_or(&Criterion::Gini);
        let bootstrap = *self.bootstrap.choose(rng).unwrap_or(&true);
        let max_features = *self.max_features.choose(rng).unwrap_or(&MaxFeatures::Sqrt);
        let max_leaf_nodes = *self.max_leaf_nodes.choose(rng).unwrap_or(&None);
        HyperParams {
            criterion,
            bootstrap,
            max_features,
            max_depth,
            max_leaf_nodes,
            n_estimators,
            min_samples_split,
            min_samples_leaf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hyperparams: HyperParams,
    pub report: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: HyperParams,
    pub best_report: CvReport,
    pub trials: Vec<Trial>,
}

/// Seeded random search selecting by cross-validated macro-F1. All trials
/// share one fold assignment; ties keep the earlier trial.
pub fn search_hyperparams(
    examples: &[LabeledExample],
    budget: usize,
    seed: u64,
    space: &SearchSpace,
) -> Result<SearchOutcome, SmmError> {
    let budget = budget.max(1);
    let mut rng = seed::sub_rng(seed, 0);
    let cv_seed = seed::derive(seed, 1);
    let mut trials: Vec<Trial> = Vec::with_capacity(budget);
    let mut best = 0usize;
    for t in 0..budget {
        let hp = space.sample(&mut rng);
        let report = cross_validate(examples, &hp, space.folds, cv_seed, FoldMode::Record)?;
        log::info!("trial {t}: macro-F1 {:.4} with {hp:?}", report.macro_avg.f1);
        if t > 0 && report.macro_avg.f1 > trials[best].report.macro_avg.f1 {
            best = t;
        }
        trials.push(Trial { hyperparams: hp, report });
    }
    Ok(SearchOutcome { best: trials[best].hyperparams.clone(), best_report: trials[best].report.clone(), trials })
}

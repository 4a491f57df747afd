//! Sensor mood model: a seeded random-forest classifier from session
//! features to a three-class mood label.

mod cv;
mod metrics;
mod tree;

use std::io::{Read, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{map_likert, MoodClass, Session};
use crate::featurex::{FeatureRegistry, FeatureVector, Imputer};
use crate::seed;

pub use cv::{cross_validate, search_hyperparams, FoldMode, SearchOutcome, SearchSpace, Trial};
pub use metrics::{ClassMetrics, Confusion, CvReport};
pub use tree::{grow_tree, impurity, Node, TrainView, Tree};

pub const N_CLASSES: usize = 3;
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SmmError {
    #[error("class counts sum to zero")]
    EmptyCounts,
    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),
    #[error("need at least {need} examples, got {got}")]
    TooFewExamples { need: usize, got: usize },
    #[error("feature vector has {got} values, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("registry fingerprint mismatch: model {model}, registry {registry}")]
    Fingerprint { model: String, registry: String },
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Gini impurity `1 - sum p_i^2` of raw class counts.
pub fn gini(counts: &[f64]) -> Result<f64, SmmError> {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(SmmError::EmptyCounts);
    }
    Ok(1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    Fraction(f64),
}

impl MaxFeatures {
    /// Number of candidate features per node, at least 1.
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Sqrt => n.sqrt().floor(),
            MaxFeatures::Log2 => n.log2().floor(),
            MaxFeatures::Fraction(f) => (f * n).floor(),
        };
        (k as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub criterion: Criterion,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub max_leaf_nodes: Option<usize>,
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            criterion: Criterion::Gini,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            max_leaf_nodes: None,
            n_estimators: 100,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), SmmError> {
        let bad = |m: &str| Err(SmmError::HyperParams(m.to_string()));
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return bad("max_features fraction must be in (0, 1]");
            }
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be at least 1");
        }
        if self.max_leaf_nodes.is_some_and(|m| m < 2) {
            return bad("max_leaf_nodes must be at least 2");
        }
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    SelfReport,
    SmmPredicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// Raw or imputed features; NaNs are filled from training medians.
    pub features: Vec<f64>,
    pub label: MoodClass,
    pub source: LabelSource,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmmModel {
    pub version: u32,
    pub registry_fingerprint: String,
    pub hyperparams: HyperParams,
    pub seed: u64,
    pub n_features: usize,
    pub imputer: Imputer,
    pub trees: Vec<Tree>,
}

/// Class with the highest probability; ties go to neutral, then negative.
pub fn argmax_class(p: &[f64; N_CLASSES]) -> MoodClass {
    let mut best = MoodClass::Neutral;
    for c in [MoodClass::Negative, MoodClass::Positive] {
        if p[c.index()] > p[best.index()] {
            best = c;
        }
    }
    best
}

impl SmmModel {
    /// Train a forest on `examples`. Trees are grown in parallel from
    /// per-tree seeds, so the result does not depend on thread count.
    pub fn fit(
        examples: &[LabeledExample],
        hp: &HyperParams,
        seed: u64,
        registry_fingerprint: &str,
    ) -> Result<SmmModel, SmmError> {
        hp.validate()?;
        if examples.len() < hp.min_samples_split.max(1) {
            return Err(SmmError::TooFewExamples { need: hp.min_samples_split, got: examples.len() });
        }
        let n_features = examples[0].features.len();
        if let Some(e) = examples.iter().find(|e| e.features.len() != n_features) {
            return Err(SmmError::Dimension { expected: n_features, got: e.features.len() });
        }
        let imputer = Imputer::fit(examples.iter().map(|e| e.features.as_slice()), n_features);
        let mut x = Vec::with_capacity(examples.len() * n_features);
        for e in examples {
            x.extend(imputer.applied(&e.features));
        }
        let y: Vec<u8> = examples.iter().map(|e| e.label.index() as u8).collect();
        let view = TrainView { x: &x, y: &y, n_features };
        let n = examples.len();
        let trees = (0..hp.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::sub_rng(seed, t as u64);
                let rows: Vec<u32> = if hp.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                grow_tree(&view, rows, hp, &mut rng)
            })
            .collect();
        Ok(SmmModel {
            version: MODEL_VERSION,
            registry_fingerprint: registry_fingerprint.to_string(),
            hyperparams: hp.clone(),
            seed,
            n_features,
            imputer,
            trees,
        })
    }

    pub fn check_registry(&self, registry: &FeatureRegistry) -> Result<(), SmmError> {
        if self.registry_fingerprint != registry.fingerprint {
            return Err(SmmError::Fingerprint {
                model: self.registry_fingerprint.clone(),
                registry: registry.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Mean of per-tree leaf distributions. NaNs are imputed first.
    pub fn probabilities(&self, features: &[f64]) -> Result<[f64; N_CLASSES], SmmError> {
        if features.len() != self.n_features {
            return Err(SmmError::Dimension { expected: self.n_features, got: features.len() });
        }
        let x = if features.iter().all(|v| v.is_finite()) {
            std::borrow::Cow::Borrowed(features)
        } else {
            std::borrow::Cow::Owned(self.imputer.applied(features))
        };
        let mut p = [0.0; N_CLASSES];
        for t in &self.trees {
            let d = t.leaf_distribution(&x);
            for k in 0..N_CLASSES {
                p[k] += d[k];
            }
        }
        let n = self.trees.len() as f64;
        for v in &mut p {
            *v /= n;
        }
        Ok(p)
    }

    pub fn predict_one(&self, features: &[f64]) -> Result<(MoodClass, [f64; N_CLASSES]), SmmError> {
        let p = self.probabilities(features)?;
        Ok((argmax_class(&p), p))
    }

    /// Predict after checking the model was trained on this registry.
    pub fn predict(
        &self,
        registry: &FeatureRegistry,
        features: &[f64],
    ) -> Result<(MoodClass, [f64; N_CLASSES]), SmmError> {
        self.check_registry(registry)?;
        self.predict_one(features)
    }

    pub fn predict_many(&self, rows: &[&[f64]]) -> Result<Vec<(MoodClass, [f64; N_CLASSES])>, SmmError> {
        rows.par_iter().map(|r| self.predict_one(r)).collect()
    }

    /// Mean impurity decrease per feature: normalized within each tree,
    /// averaged over trees, renormalized. Sorted descending, ties by index.
    pub fn importances(&self) -> Vec<(usize, f64)> {
        let mut total = vec![0.0; self.n_features];
        let mut per_tree = vec![0.0; self.n_features];
        for t in &self.trees {
            per_tree.iter_mut().for_each(|v| *v = 0.0);
            t.add_importances(&mut per_tree);
            let s: f64 = per_tree.iter().sum();
            if s > 0.0 {
                for (acc, v) in total.iter_mut().zip(&per_tree) {
                    *acc += v / s;
                }
            }
        }
        let s: f64 = total.iter().sum();
        if s > 0.0 {
            total.iter_mut().for_each(|v| *v /= s);
        }
        let mut ranked: Vec<(usize, f64)> = total.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), SmmError> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<SmmModel, SmmError> {
        let m: SmmModel = serde_json::from_reader(r)?;
        if m.version != MODEL_VERSION {
            return Err(SmmError::Version(m.version));
        }
        Ok(m)
    }
}

/// Named importances for a model trained on `registry`.
/// Training examples from the sessions that carry a self-report and have
/// at least one sensor reading.
pub fn self_report_examples<'a>(
    pairs: impl IntoIterator<Item = (&'a Session, &'a FeatureVector)>,
) -> Vec<LabeledExample> {
    pairs
        .into_iter()
        .filter(|(_, fv)| fv.coverage > 0.0)
        .filter_map(|(s, fv)| {
            s.self_report().map(|r| LabeledExample {
                features: fv.values.clone(),
                label: map_likert(r.likert),
                source: LabelSource::SelfReport,
                user: s.user.clone(),
            })
        })
        .collect()
}

pub fn feature_importance(model: &SmmModel, registry: &FeatureRegistry) -> Result<Vec<(String, f64)>, SmmError> {
    model.check_registry(registry)?;
    Ok(model.importances().into_iter().map(|(i, s)| (registry.name(i).to_string(), s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(xs: &[(f64, MoodClass)]) -> Vec<LabeledExample> {
        xs.iter()
            .map(|(x, c)| LabeledExample { features: vec![*x], label: *c, source: LabelSource::SelfReport, user: "u".into() })
            .collect()
    }

    #[test]
    fn gini_rejects_empty() {
        assert!(gini(&[0.0, 0.0]).is_err());
        assert_eq!(gini(&[10.0, 10.0]).unwrap(), 0.5);
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax_class(&[0.5, 0.0, 0.5]), MoodClass::Negative);
        assert_eq!(argmax_class(&[0.4, 0.4, 0.2]), MoodClass::Neutral);
        assert_eq!(argmax_class(&[1.0 / 3.0; 3]), MoodClass::Neutral);
        assert_eq!(argmax_class(&[0.0, 0.0, 1.0]), MoodClass::Positive);
    }

    #[test]
    fn unanimous_forest() {
        let ex = examples(&[(1.0, MoodClass::Positive), (2.0, MoodClass::Positive)]);
        let m = SmmModel::fit(&ex, &HyperParams { n_estimators: 5, ..Default::default() }, 3, "fp").unwrap();
        assert_eq!(m.predict_one(&[1.5]).unwrap(), (MoodClass::Positive, [0.0, 0.0, 1.0]));
    }

    #[test]
    fn single_split_importance() {
        let ex = examples(&[(-1.0, MoodClass::Negative), (-2.0, MoodClass::Negative), (1.0, MoodClass::Positive), (3.0, MoodClass::Positive)]);
        let hp = HyperParams { n_estimators: 1, bootstrap: false, ..Default::default() };
        let m = SmmModel::fit(&ex, &hp, 0, "fp").unwrap();
        assert_eq!(m.importances(), vec![(0, 1.0)]);
    }

    #[test]
    fn fingerprint_mismatch() {
        let ex = examples(&[(1.0, MoodClass::Positive), (2.0, MoodClass::Negative)]);
        let m = SmmModel::fit(&ex, &HyperParams { n_estimators: 1, ..Default::default() }, 0, "nope").unwrap();
        assert!(matches!(m.predict(FeatureRegistry::standard(), &[0.0]), Err(SmmError::Fingerprint { .. })));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(HyperParams { min_samples_split: 1, ..Default::default() }.validate().is_err());
        assert!(HyperParams { max_features: MaxFeatures::Fraction(0.0), ..Default::default() }.validate().is_err());
        assert_eq!(MaxFeatures::Sqrt.resolve(136), 11);
        assert_eq!(MaxFeatures::Log2.resolve(136), 7);
        assert_eq!(MaxFeatures::Fraction(1.0).resolve(136), 136);
    }

    #[test]
    fn model_round_trip() {
        let ex = examples(&[(1.0, MoodClass::Positive), (2.0, MoodClass::Negative), (3.0, MoodClass::Neutral)]);
        let m = SmmModel::fit(&ex, &HyperParams { n_estimators: 3, ..Default::default() }, 9, "fp").unwrap();
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(SmmModel::load(buf.as_slice()).unwrap(), m);
    }
}

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    balance, evaluate_scores, label_sessions, session_tokens, train_qmm, Evaluation, QmmError, QmmModel, SessionLabel,
    SmmLabeler, Tokenizer, Vocabulary,
};
use crate::corpus::{map_likert, MoodClass, Session, SessionKey};
use crate::featurex::FeatureVector;
use crate::seed;
use crate::smm::{self_report_examples, HyperParams, SmmModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub splits: usize,
    pub train_fraction: f64,
    pub lambda: f64,
    pub min_count: u64,
    pub smm: HyperParams,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            splits: 10,
            train_fraction: 0.8,
            lambda: 1.0,
            min_count: super::DEFAULT_MIN_COUNT,
            smm: HyperParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    /// Labeled sessions before balancing.
    pub labeled: usize,
    pub from_smm: usize,
    /// Sessions left after balancing.
    pub train_size: usize,
    pub vocabulary: usize,
    pub nonzero_weights: usize,
    pub converged: bool,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub eval_size: usize,
    pub without_smm: VariantResult,
    pub with_smm: VariantResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub splits: Vec<SplitResult>,
    pub without_mean: f64,
    pub without_std: f64,
    pub with_mean: f64,
    pub with_std: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// One trained query model with its vocabulary.
#[derive(Debug, Clone)]
pub struct FittedQmm {
    pub vocabulary: Vocabulary,
    pub model: QmmModel,
    pub labeled: usize,
    pub train_size: usize,
}

/// Balance the labels, build the vocabulary on the balanced set, and train.
/// `labels` pairs an index into `tokens` with its polarity.
pub fn fit_on_labels(
    tokens: &[Vec<String>],
    labels: &[(usize, i8)],
    tokenizer_id: &str,
    min_count: u64,
    lambda: f64,
    seed: u64,
) -> Result<FittedQmm, QmmError> {
    let balanced = balance(labels, |l| l.1, seed::derive(seed, 0))?;
    let vocabulary = Vocabulary::build(balanced.iter().map(|(i, _)| tokens[*i].as_slice()), min_count, tokenizer_id)?;
    let active: Vec<Vec<u32>> = balanced.iter().map(|(i, _)| vocabulary.active(&tokens[*i])).collect();
    let rows: Vec<&[u32]> = active.iter().map(Vec::as_slice).collect();
    let polarity: Vec<i8> = balanced.iter().map(|l| l.1).collect();
    let model = train_qmm(&rows, &polarity, &vocabulary, lambda, seed)?;
    Ok(FittedQmm { vocabulary, model, labeled: labels.len(), train_size: balanced.len() })
}

/// Label sessions (self-reports, plus SMM predictions when given), keep
/// those with at least one token, and fit. Returns the fit and the labels used.
pub fn fit_sessions(
    sessions: &[Session],
    smm: Option<SmmLabeler<'_>>,
    tokenizer: &dyn Tokenizer,
    min_count: u64,
    lambda: f64,
    seed: u64,
) -> Result<(FittedQmm, Vec<SessionLabel>), QmmError> {
    let tokens: Vec<Vec<String>> = sessions.par_iter().map(|s| session_tokens(s, tokenizer)).collect();
    let index: HashMap<SessionKey, usize> = sessions.iter().enumerate().map(|(i, s)| (s.key(), i)).collect();
    let labels: Vec<SessionLabel> =
        label_sessions(sessions, smm)?.into_iter().filter(|l| !tokens[index[&l.key]].is_empty()).collect();
    let pairs: Vec<(usize, i8)> = labels.iter().map(|l| (index[&l.key], l.polarity)).collect();
    let fit = fit_on_labels(&tokens, &pairs, tokenizer.id(), min_count, lambda, seed)?;
    Ok((fit, labels))
}

/// Repeated random train/test splits of the self-reported sessions,
/// comparing a query model trained on self-reports alone against one
/// whose training set is extended with SMM-labeled unreported sessions.
///
/// Per split the SMM is retrained on the training self-reports, so no
/// evaluation label leaks into the supplementary labels. Evaluation uses
/// held-out self-reported sessions with a non-neutral label and at least
/// one query, unbalanced.
pub fn compare_label_bootstrapping(
    sessions: &[Session],
    features: &[FeatureVector],
    tokenizer: &dyn Tokenizer,
    registry_fingerprint: &str,
    cfg: &ComparisonConfig,
) -> Result<Comparison, QmmError> {
    if features.len() != sessions.len() {
        return Err(QmmError::Invalid(format!("{} feature vectors for {} sessions", features.len(), sessions.len())));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) || cfg.splits == 0 {
        return Err(QmmError::Invalid("need splits >= 1 and train_fraction in (0, 1)".into()));
    }
    let tokens: Vec<Vec<String>> = sessions.par_iter().map(|s| session_tokens(s, tokenizer)).collect();
    let reported: Vec<usize> = (0..sessions.len()).filter(|&i| sessions[i].self_report().is_some()).collect();
    let unreported: Vec<usize> = (0..sessions.len())
        .filter(|&i| {
            sessions[i].self_report().is_none() && !tokens[i].is_empty() && features[i].coverage > 0.0
        })
        .collect();
    let polarity = |i: usize| sessions[i].self_report().map(|r| map_likert(r.likert).value()).unwrap_or(0);

    let mut results = Vec::with_capacity(cfg.splits);
    for split in 0..cfg.splits {
        let split_seed = seed::derive(cfg.seed, split as u64);
        let mut order = reported.clone();
        order.shuffle(&mut seed::rng(split_seed));
        let cut = (order.len() as f64 * cfg.train_fraction).round() as usize;
        let (train, test) = order.split_at(cut);

        let eval: Vec<(usize, i8)> =
            test.iter().map(|&i| (i, polarity(i))).filter(|&(i, p)| p != 0 && !tokens[i].is_empty()).collect();
        if eval.is_empty() {
            return Err(QmmError::EmptyEvaluation);
        }
        let base: Vec<(usize, i8)> =
            train.iter().map(|&i| (i, polarity(i))).filter(|&(i, p)| p != 0 && !tokens[i].is_empty()).collect();

        let smm_train = self_report_examples(train.iter().map(|&i| (&sessions[i], &features[i])));
        let smm = SmmModel::fit(&smm_train, &cfg.smm, seed::derive(split_seed, 1), registry_fingerprint)?;
        let rows: Vec<&[f64]> = unreported.iter().map(|&i| features[i].values.as_slice()).collect();
        let predicted = smm.predict_many(&rows)?;
        let mut extended = base.clone();
        extended.extend(
            unreported
                .iter()
                .zip(&predicted)
                .filter(|(_, (c, _))| *c != MoodClass::Neutral)
                .map(|(&i, (c, _))| (i, c.value())),
        );

        let run = |labels: &[(usize, i8)], stream: u64| -> Result<VariantResult, QmmError> {
            let fit = fit_on_labels(&tokens, labels, tokenizer.id(), cfg.min_count, cfg.lambda, seed::derive(split_seed, stream))?;
            let scores: Vec<f64> =
                eval.iter().map(|(i, _)| fit.model.score_active(&fit.vocabulary.active(&tokens[*i]))).collect();
            let pol: Vec<i8> = eval.iter().map(|e| e.1).collect();
            Ok(VariantResult {
                labeled: fit.labeled,
                from_smm: labels.len() - base.len(),
                train_size: fit.train_size,
                vocabulary: fit.vocabulary.len(),
                nonzero_weights: fit.model.nonzero_weights(),
                converged: fit.model.converged,
                evaluation: evaluate_scores(&scores, &pol)?,
            })
        };
        let without_smm = run(&base, 2)?;
        let with_smm = run(&extended, 3)?;
        log::info!(
            "split {split}: without {:.4} (n={}), with {:.4} (n={})",
            without_smm.evaluation.accuracy,
            without_smm.train_size,
            with_smm.evaluation.accuracy,
            with_smm.train_size
        );
        results.push(SplitResult { split, eval_size: eval.len(), without_smm, with_smm });
    }
    let acc = |f: fn(&SplitResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
    let (without_mean, without_std) = mean_std(&acc(|r| r.without_smm.evaluation.accuracy));
    let (with_mean, with_std) = mean_std(&acc(|r| r.with_smm.evaluation.accuracy));
    Ok(Comparison { splits: results, without_mean, without_std, with_mean, with_std })
}

impl Comparison {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), QmmError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "split", "variant", "accuracy", "eval_size", "labeled", "from_smm", "train_size", "vocabulary",
            "nonzero_weights", "converged",
        ])?;
        for r in &self.splits {
            for (name, v) in [("without_smm", &r.without_smm), ("with_smm", &r.with_smm)] {
                wr.write_record([
                    r.split.to_string(),
                    name.to_string(),
                    format!("{:.6}", v.evaluation.accuracy),
                    r.eval_size.to_string(),
                    v.labeled.to_string(),
                    v.from_smm.to_string(),
                    v.train_size.to_string(),
                    v.vocabulary.to_string(),
                    v.nonzero_weights.to_string(),
                    v.converged.to_string(),
                ])?;
            }
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mean_of = |f: fn(&SplitResult) -> usize| {
            self.splits.iter().map(|r| f(r) as f64).sum::<f64>() / self.splits.len() as f64
        };
        format!(
            "query model accuracy over {} splits\n  without SMM: {:.1}% ± {:.1} (mean training size {:.0})\n  with SMM:    {:.1}% ± {:.1} (mean training size {:.0})\n  delta: {:+.1} points\n",
            self.splits.len(),
            100.0 * self.without_mean,
            100.0 * self.without_std,
            mean_of(|r| r.without_smm.train_size),
            100.0 * self.with_mean,
            100.0 * self.with_std,
            mean_of(|r| r.with_smm.train_size),
            100.0 * (self.with_mean - self.without_mean),
        )
    }
}

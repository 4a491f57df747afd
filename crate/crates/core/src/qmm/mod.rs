//! Query mood model: a linear score over binary query-token presence,
//! trained as a regularized logistic regression on session polarities.

mod compare;
mod optim;

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{map_likert, MoodClass, Session, SessionKey};
use crate::featurex::FeatureVector;
use crate::seed;
use crate::smm::{LabelSource, SmmError, SmmModel};

pub use compare::{compare_label_bootstrapping, fit_on_labels, fit_sessions, mean_std, Comparison, ComparisonConfig, FittedQmm, SplitResult, VariantResult};
pub use optim::{minimize, Problem, Solution};

pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_MIN_COUNT: u64 = 3;
pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum QmmError {
    #[error("vocabulary is empty (no token reaches min_count {0})")]
    EmptyVocabulary(u64),
    #[error("cannot balance: no {0} examples")]
    MissingPolarity(&'static str),
    #[error("evaluation set is empty")]
    EmptyEvaluation,
    #[error("vocabulary fingerprint mismatch: model {model}, vocabulary {vocabulary}")]
    Fingerprint { model: String, vocabulary: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error(transparent)]
    Smm(#[from] SmmError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Splits a raw query string into vocabulary tokens.
pub trait Tokenizer: Send + Sync {
    /// Stable identifier recorded in the vocabulary fingerprint.
    fn id(&self) -> &str;
    fn tokenize(&self, raw: &str) -> Vec<String>;
}

/// Unicode-whitespace split, surrounding punctuation stripped, ASCII lowercased.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn id(&self) -> &str {
        "whitespace-v1"
    }

    fn tokenize(&self, raw: &str) -> Vec<String> {
        raw.split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_ascii_lowercase())
            .filter(|w| !w.is_empty())
            .collect()
    }
}

pub fn tokenize(raw: &str) -> Vec<String> {
    WhitespaceTokenizer.tokenize(raw)
}

/// Distinct tokens over all of a session's queries, sorted.
pub fn session_tokens(session: &Session, tokenizer: &dyn Tokenizer) -> Vec<String> {
    let mut t: Vec<String> = session.queries.iter().flat_map(|q| tokenizer.tokenize(&q.raw_query)).collect();
    t.sort_unstable();
    t.dedup();
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub tokens: Vec<String>,
    /// Number of training sessions containing each token.
    pub frequency: Vec<u64>,
    pub min_count: u64,
    pub tokenizer_id: String,
    pub fingerprint: String,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, frequency: Vec<u64>, min_count: u64, tokenizer_id: &str) -> Self {
        let mut h = Sha256::new();
        h.update(format!("{tokenizer_id}\n{min_count}\n"));
        for (t, f) in tokens.iter().zip(&frequency) {
            h.update(format!("{t}\t{f}\n"));
        }
        let fingerprint = hex::encode(&h.finalize()[..8]);
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, frequency, min_count, tokenizer_id: tokenizer_id.to_string(), fingerprint, index }
    }

    /// Tokens present in at least `min_count` sessions, ordered by session
    /// frequency descending then lexicographically. Each item is one
    /// session's token list; duplicates within a session count once.
    pub fn build<'a, I>(sessions: I, min_count: u64, tokenizer_id: &str) -> Result<Self, QmmError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&'a str, u64> = HashMap::new();
        let mut seen: Vec<&'a str> = Vec::new();
        for tokens in sessions {
            seen.clear();
            seen.extend(tokens.iter().map(String::as_str));
            seen.sort_unstable();
            seen.dedup();
            for t in &seen {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        if kept.is_empty() {
            return Err(QmmError::EmptyVocabulary(min_count));
        }
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let (tokens, frequency) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
        Ok(Self::from_parts(tokens, frequency, min_count, tokenizer_id))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Sorted, distinct indices of in-vocabulary tokens.
    pub fn active(&self, tokens: &[String]) -> Vec<u32> {
        let mut a: Vec<u32> = tokens.iter().filter_map(|t| self.get(t)).collect();
        a.sort_unstable();
        a.dedup();
        a
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), QmmError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["token", "index", "frequency"])?;
        for (i, (t, f)) in self.tokens.iter().zip(&self.frequency).enumerate() {
            wr.write_record([t.as_str(), &i.to_string(), &f.to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, min_count: u64, tokenizer_id: &str) -> Result<Self, QmmError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut tokens = Vec::new();
        let mut frequency = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: &str| QmmError::Invalid(format!("vocabulary row {}: {m}", i + 2));
            let idx: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad index"))?;
            if idx != i {
                return Err(bad("indices must be dense and in order"));
            }
            let token = rec.get(0).filter(|t| !t.is_empty()).ok_or_else(|| bad("empty token"))?;
            tokens.push(token.to_string());
            frequency.push(rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad frequency"))?);
        }
        if tokens.is_empty() {
            return Err(QmmError::EmptyVocabulary(min_count));
        }
        let v = Self::from_parts(tokens, frequency, min_count, tokenizer_id);
        if v.index.len() != v.tokens.len() {
            return Err(QmmError::Invalid("duplicate tokens in vocabulary".into()));
        }
        Ok(v)
    }
}

/// A session's binary query features: the set of active vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySessionVector {
    pub key: SessionKey,
    pub active: Vec<u32>,
}

pub fn vectorize(session: &Session, vocabulary: &Vocabulary, tokenizer: &dyn Tokenizer) -> QuerySessionVector {
    QuerySessionVector { key: session.key(), active: vocabulary.active(&session_tokens(session, tokenizer)) }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLabel {
    pub key: SessionKey,
    /// −1 or +1.
    pub polarity: i8,
    pub source: LabelSource,
}

/// SMM model plus the feature vectors of the sessions being labeled,
/// aligned by position.
#[derive(Clone, Copy)]
pub struct SmmLabeler<'a> {
    pub model: &'a SmmModel,
    pub features: &'a [FeatureVector],
}

/// Binary training labels. A self-report always wins; sessions without
/// one are labeled by the SMM when given. Neutral outcomes and sessions
/// with neither a report nor sensor data produce no label.
pub fn label_sessions(sessions: &[Session], smm: Option<SmmLabeler<'_>>) -> Result<Vec<SessionLabel>, QmmError> {
    if let Some(l) = smm {
        if l.features.len() != sessions.len() {
            return Err(QmmError::Invalid(format!(
                "{} feature vectors for {} sessions",
                l.features.len(),
                sessions.len()
            )));
        }
    }
    let labels: Result<Vec<Option<SessionLabel>>, QmmError> = sessions
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let (class, source) = if let Some(r) = s.self_report() {
                (map_likert(r.likert), LabelSource::SelfReport)
            } else if let Some(l) = smm {
                let fv = &l.features[i];
                if fv.coverage == 0.0 {
                    return Ok(None);
                }
                (l.model.predict_one(&fv.values)?.0, LabelSource::SmmPredicted)
            } else {
                return Ok(None);
            };
            Ok(match class {
                MoodClass::Neutral => None,
                c => Some(SessionLabel { key: s.key(), polarity: c.value(), source }),
            })
        })
        .collect();
    Ok(labels?.into_iter().flatten().collect())
}

/// Downsample the majority polarity to the minority count, keeping input order.
pub fn balance<T: Clone>(items: &[T], polarity: impl Fn(&T) -> i8, seed: u64) -> Result<Vec<T>, QmmError> {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..items.len()).partition(|&i| polarity(&items[i]) > 0);
    if pos.is_empty() {
        return Err(QmmError::MissingPolarity("positive"));
    }
    if neg.is_empty() {
        return Err(QmmError::MissingPolarity("negative"));
    }
    let n = pos.len().min(neg.len());
    let mut rng = seed::rng(seed);
    for side in [&mut pos, &mut neg] {
        if side.len() > n {
            side.shuffle(&mut rng);
            side.truncate(n);
        }
    }
    let mut keep: Vec<usize> = pos.into_iter().chain(neg).collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

pub fn balance_labels(labels: &[SessionLabel], seed: u64) -> Result<Vec<SessionLabel>, QmmError> {
    balance(labels, |l| l.polarity, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmmModel {
    pub version: u32,
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub seed: u64,
    pub vocabulary_fingerprint: String,
    /// Settings the vocabulary was built with, needed to reload it.
    pub tokenizer_id: String,
    pub min_count: u64,
    pub iterations: usize,
    /// False when the iteration cap was hit before the gradient tolerance.
    pub converged: bool,
}

/// Fit intercept and weights on active-index rows with ±1 targets.
pub fn train_qmm(
    rows: &[&[u32]],
    polarity: &[i8],
    vocabulary: &Vocabulary,
    lambda: f64,
    seed: u64,
) -> Result<QmmModel, QmmError> {
    if rows.len() != polarity.len() || rows.is_empty() {
        return Err(QmmError::Invalid(format!("{} rows, {} labels", rows.len(), polarity.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(QmmError::Invalid(format!("lambda {lambda} must be finite and >= 0")));
    }
    let n = vocabulary.len();
    if let Some(bad) = rows.iter().flat_map(|r| r.iter()).find(|&&j| j as usize >= n) {
        return Err(QmmError::Invalid(format!("feature index {bad} outside vocabulary of {n}")));
    }
    let y: Vec<f64> = polarity.iter().map(|&p| if p > 0 { 1.0 } else { -1.0 }).collect();
    let problem = Problem { rows, y: &y, n_features: n, lambda };
    let mut theta = vec![0.0; n + 1];
    let sol = minimize(&problem, &mut theta, GRAD_TOL, MAX_ITER);
    if !sol.converged {
        log::warn!(
            "query model stopped after {} iterations with gradient norm {:.3e}",
            sol.iterations,
            sol.grad_inf_norm
        );
    }
    Ok(QmmModel {
        version: MODEL_VERSION,
        intercept: theta[0],
        weights: theta[1..].to_vec(),
        lambda,
        seed,
        vocabulary_fingerprint: vocabulary.fingerprint.clone(),
        tokenizer_id: vocabulary.tokenizer_id.clone(),
        min_count: vocabulary.min_count,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Sign convention shared by every classifier of raw scores: 0 maps to +1.
pub fn polarity_of(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

impl QmmModel {
    pub fn check_vocabulary(&self, vocabulary: &Vocabulary) -> Result<(), QmmError> {
        if self.vocabulary_fingerprint != vocabulary.fingerprint {
            return Err(QmmError::Fingerprint {
                model: self.vocabulary_fingerprint.clone(),
                vocabulary: vocabulary.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Raw linear score `intercept + sum of active weights`; not squashed.
    pub fn score_active(&self, active: &[u32]) -> f64 {
        self.intercept + active.iter().map(|&j| self.weights[j as usize]).sum::<f64>()
    }

    pub fn mood_score(&self, vocabulary: &Vocabulary, v: &QuerySessionVector) -> Result<f64, QmmError> {
        self.check_vocabulary(vocabulary)?;
        Ok(self.score_active(&v.active))
    }

    pub fn classify(&self, vocabulary: &Vocabulary, v: &QuerySessionVector) -> Result<i8, QmmError> {
        Ok(polarity_of(self.mood_score(vocabulary, v)?))
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), QmmError> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<QmmModel, QmmError> {
        let m: QmmModel = serde_json::from_reader(r)?;
        if m.version != MODEL_VERSION {
            return Err(QmmError::Version(m.version));
        }
        if m.weights.iter().chain([&m.intercept]).any(|w| !w.is_finite()) {
            return Err(QmmError::Invalid("non-finite weight in model".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `[actual][predicted]`, index 0 negative, 1 positive.
    pub confusion: [[u64; 2]; 2],
    pub n: usize,
}

/// Accuracy of sign predictions against ±1 labels.
pub fn evaluate_scores(scores: &[f64], polarity: &[i8]) -> Result<Evaluation, QmmError> {
    if scores.is_empty() {
        return Err(QmmError::EmptyEvaluation);
    }
    let mut confusion = [[0u64; 2]; 2];
    for (s, p) in scores.iter().zip(polarity) {
        let a = usize::from(*p > 0);
        let q = usize::from(polarity_of(*s) > 0);
        confusion[a][q] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    Ok(Evaluation { accuracy: correct as f64 / scores.len() as f64, confusion, n: scores.len() })
}

pub fn evaluate_qmm(
    model: &QmmModel,
    vocabulary: &Vocabulary,
    eval: &[(QuerySessionVector, i8)],
) -> Result<Evaluation, QmmError> {
    model.check_vocabulary(vocabulary)?;
    let scores: Vec<f64> = eval.iter().map(|(v, _)| model.score_active(&v.active)).collect();
    let polarity: Vec<i8> = eval.iter().map(|(_, p)| *p).collect();
    evaluate_scores(&scores, &polarity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedQueries {
    pub positive: Vec<(String, f64)>,
    pub negative: Vec<(String, f64)>,
    pub nonzero: usize,
}

/// Up to `k` strictly positive and strictly negative tokens by weight.
pub fn top_weighted_queries(model: &QmmModel, vocabulary: &Vocabulary, k: usize) -> Result<WeightedQueries, QmmError> {
    model.check_vocabulary(vocabulary)?;
    let mut order: Vec<usize> = (0..model.weights.len()).collect();
    order.sort_by(|&a, &b| model.weights[b].total_cmp(&model.weights[a]).then(a.cmp(&b)));
    let pick = |it: &mut dyn Iterator<Item = &usize>, keep: fn(f64) -> bool| -> Vec<(String, f64)> {
        it.filter(|&&i| keep(model.weights[i]))
            .take(k)
            .map(|&i| (vocabulary.tokens[i].clone(), model.weights[i]))
            .collect()
    };
    let positive = pick(&mut order.iter(), |w| w > 0.0);
    let negative = pick(&mut order.iter().rev(), |w| w < 0.0);
    Ok(WeightedQueries { positive, negative, nonzero: model.nonzero_weights() })
}

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::N_CLASSES;
use crate::corpus::MoodClass;

/// Counts indexed `[actual][predicted]` by class index (−1, 0, +1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (MoodClass, MoodClass)>) -> Self {
        let mut c = Confusion::default();
        for (actual, predicted) in pairs {
            c.add(actual, predicted);
        }
        c
    }

    pub fn add(&mut self, actual: MoodClass, predicted: MoodClass) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..N_CLASSES).map(|k| self.counts[k][k]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Indexed by class: negative, neutral, positive.
    pub per_class: [ClassMetrics; N_CLASSES],
    pub accuracy: f64,
    pub micro: ClassMetrics,
    pub macro_avg: ClassMetrics,
    pub confusion: Confusion,
    pub folds: usize,
    pub seed: u64,
    /// Classes with no support and no predictions.
    pub missing_classes: Vec<MoodClass>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(f1s: &[f64]) -> f64 {
    f1s.iter().sum::<f64>() / f1s.len() as f64
}

impl CvReport {
    pub fn from_confusion(confusion: Confusion, folds: usize, seed: u64) -> Self {
        let c = &confusion.counts;
        let mut per_class = [ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0 }; N_CLASSES];
        let mut missing_classes = Vec::new();
        for k in 0..N_CLASSES {
            let tp = c[k][k];
            let support: u64 = c[k].iter().sum();
            let predicted: u64 = (0..N_CLASSES).map(|a| c[a][k]).sum();
            if support == 0 {
                let class = MoodClass::ALL[k];
                log::warn!("class {class:?} has no examples; its metrics are reported as 0");
                missing_classes.push(class);
            }
            let (p, r) = (ratio(tp, predicted), ratio(tp, support));
            per_class[k] = ClassMetrics { precision: p, recall: r, f1: f1(p, r), support };
        }
        let total = confusion.total();
        let accuracy = ratio(confusion.correct(), total);
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / N_CLASSES as f64;
        let macro_avg = ClassMetrics {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: macro_f1(&per_class.map(|m| m.f1)),
            support: total,
        };
        // Single-label multiclass: pooled precision, recall and F1 all equal accuracy.
        let micro = ClassMetrics { precision: accuracy, recall: accuracy, f1: accuracy, support: total };
        CvReport { per_class, accuracy, micro, macro_avg, confusion, folds, seed, missing_classes }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["class", "precision", "recall", "f1", "support"])?;
        let mut row = |name: &str, m: &ClassMetrics| {
            wr.write_record([
                name.to_string(),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
                m.support.to_string(),
            ])
        };
        for (k, m) in self.per_class.iter().enumerate() {
            row(&MoodClass::ALL[k].value().to_string(), m)?;
        }
        row("micro avg", &self.micro)?;
        row("macro avg", &self.macro_avg)?;
        wr.write_record(["accuracy".to_string(), String::new(), String::new(), format!("{:.6}", self.accuracy), self.micro.support.to_string()])?;
        wr.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>10} {:>9} {:>9} {:>9} {:>9}", "", "precision", "recall", "f1-score", "support");
        for (k, m) in self.per_class.iter().enumerate() {
            let label = MoodClass::ALL[k].to_string();
            let _ = writeln!(s, "{:>10} {:>9.2} {:>9.2} {:>9.2} {:>9}", label, m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>10} {:>9} {:>9} {:>9.2} {:>9}", "accuracy", "", "", self.accuracy, self.micro.support);
        for (name, m) in [("micro avg", &self.micro), ("macro avg", &self.macro_avg)] {
            let _ = writeln!(s, "{:>10} {:>9.2} {:>9.2} {:>9.2} {:>9}", name, m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(s, "\n{} folds, seed {}", self.folds, self.seed);
        s
    }
}

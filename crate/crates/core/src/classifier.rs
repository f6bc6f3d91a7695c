//! In-silico perceptron: training, weight normalization into [-1, 1] and the
//! electronic reference `z = w . x + b` that chemical results are checked
//! against.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Match,
    Mismatch,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Match => "match",
            ClassLabel::Mismatch => "mismatch",
        }
    }

    fn target(&self) -> f64 {
        match self {
            ClassLabel::Match => 1.0,
            ClassLabel::Mismatch => 0.0,
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Match iff `z > 0`; an exact zero is a mismatch.
pub fn threshold(z: f64) -> ClassLabel {
    if z > 0.0 {
        ClassLabel::Match
    } else {
        ClassLabel::Mismatch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(rename = "foreground")]
    pub foreground_label: String,
}

impl TrainedClassifier {
    pub fn new(weights: Vec<f64>, bias: f64, foreground_label: impl Into<String>) -> Self {
        Self {
            weights,
            bias,
            foreground_label: foreground_label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn predict(&self, x: &[bool]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(x)
            .filter(|(_, &bit)| bit)
            .map(|(w, _)| w)
            .sum::<f64>()
            + self.bias)
    }

    pub fn classify(&self, x: &[bool]) -> Result<ClassLabel> {
        self.predict(x).map(threshold)
    }

    /// Largest magnitude among the weights and the bias.
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(std::iter::once(&self.bias))
            .fold(0.0f64, |m, w| m.max(w.abs()))
    }

    /// Scales weights and bias by the same positive factor so the largest
    /// magnitude is exactly 1. An all-zero classifier is returned unchanged.
    pub fn normalized(&self) -> Self {
        let m = self.max_abs();
        if m == 0.0 {
            return self.clone();
        }
        Self {
            weights: self.weights.iter().map(|w| w / m).collect(),
            bias: self.bias / m,
            foreground_label: self.foreground_label.clone(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.max_abs() <= 1.0 + 1e-12
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("classifier serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Weight map as a CSV grid, `cols` values per row.
    pub fn weight_grid_csv(&self, cols: usize) -> String {
        let mut out = String::new();
        for row in self.weights.chunks(cols.max(1)) {
            let line: Vec<String> = row.iter().map(|w| format!("{w:.6}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// When false the bias stays at zero.
    pub fit_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1.0,
            seed: 0,
            fit_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub classifier: TrainedClassifier,
    pub training_accuracy: f64,
    pub epochs_run: usize,
    pub converged: bool,
}

fn accuracy(weights: &[f64], bias: f64, features: &[Vec<bool>], labels: &[ClassLabel]) -> f64 {
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, t)| {
            let z: f64 = weights
                .iter()
                .zip(x.iter())
                .filter(|(_, &b)| b)
                .map(|(w, _)| w)
                .sum::<f64>()
                + bias;
            threshold(z) == **t
        })
        .count();
    correct as f64 / features.len() as f64
}

/// Perceptron with per-epoch shuffling, keeping the best weights seen
/// (pocket variant). The result is normalized into [-1, 1].
pub fn train(
    features: &[Vec<bool>],
    labels: &[ClassLabel],
    cfg: &TrainConfig,
    foreground_label: &str,
) -> Result<TrainReport> {
    if features.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if labels.len() != features.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let n = features[0].len();
    if let Some(bad) = features.iter().find(|x| x.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: bad.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut weights = vec![0.0; n];
    let mut bias = 0.0;
    let mut best = (
        accuracy(&weights, bias, features, labels),
        weights.clone(),
        bias,
    );
    let mut epochs_run = 0;
    let mut converged = best.0 == 1.0;

    while !converged && epochs_run < cfg.epochs {
        epochs_run += 1;
        order.shuffle(&mut rng);
        let mut mistakes = 0;
        for &i in &order {
            let x = &features[i];
            let z: f64 = weights
                .iter()
                .zip(x)
                .filter(|(_, &b)| b)
                .map(|(w, _)| w)
                .sum::<f64>()
                + bias;
            let err = labels[i].target() - threshold(z).target();
            if err != 0.0 {
                mistakes += 1;
                let step = cfg.learning_rate * err;
                for (w, &bit) in weights.iter_mut().zip(x) {
                    if bit {
                        *w += step;
                    }
                }
                if cfg.fit_bias {
                    bias += step;
                }
            }
        }
        let acc = accuracy(&weights, bias, features, labels);
        if acc > best.0 {
            best = (acc, weights.clone(), bias);
        }
        converged = mistakes == 0;
    }

    let (training_accuracy, weights, bias) = best;
    let classifier = TrainedClassifier::new(weights, bias, foreground_label).normalized();
    Ok(TrainReport {
        classifier,
        training_accuracy,
        epochs_run,
        converged,
    })
}

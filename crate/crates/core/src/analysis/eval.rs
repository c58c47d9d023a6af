//! Train/test protocol and advantage metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::design::Design;
use super::logreg::{train_logreg, train_softmax, LogRegParams};
use super::stats::DpBound;
use super::AnalysisError;
use crate::rng::{derive_seed, rng_from};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EvalConfig {
    pub trials: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub logreg: LogRegParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            trials: 5,
            train_fraction: 0.8,
            seed: 0,
            logreg: LogRegParams::default(),
        }
    }
}

/// Splits indices per class, sending `round(fraction * n_class)` of each
/// class to the train side. Both sides come back sorted.
pub fn stratified_split<R: Rng + ?Sized>(labels: &[usize], fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        idx.shuffle(rng);
        let k = libm::round(fraction * idx.len() as f64) as usize;
        train.extend_from_slice(&idx[..k.min(idx.len())]);
        test.extend_from_slice(&idx[k.min(idx.len())..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / n };
        let std = if values.len() < 2 {
            0.0
        } else {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        };
        Summary { mean, std, values }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Summary {
        Summary::of(self.values.iter().map(|&v| f(v)).collect())
    }
}

pub fn raw_advantage(accuracy: f64) -> f64 {
    (accuracy - 0.5).max(0.0)
}

pub fn normalized_advantage(accuracy: f64) -> f64 {
    raw_advantage(accuracy) / 0.5
}

/// Standard deviation of an accuracy estimate from `n` test samples when
/// the true accuracy is `p`.
pub fn accuracy_sigma(p: f64, n: usize) -> f64 {
    libm::sqrt(p * (1.0 - p) / n.max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdvantageEntry {
    pub name: String,
    pub test_accuracy: Summary,
    pub raw_advantage: Summary,
    pub normalized_advantage: Summary,
    /// Test-set size of each trial.
    pub n_test: usize,
}

impl AdvantageEntry {
    pub fn from_accuracies(name: &str, accuracies: Vec<f64>, n_test: usize) -> Self {
        let acc = Summary::of(accuracies);
        AdvantageEntry {
            name: name.into(),
            raw_advantage: acc.map(raw_advantage),
            normalized_advantage: acc.map(normalized_advantage),
            test_accuracy: acc,
            n_test,
        }
    }

    /// Worst-case standard deviation of one trial's normalized advantage,
    /// `2 * sqrt(1/4 / n_test)`.
    pub fn sigma(&self) -> f64 {
        2.0 * accuracy_sigma(0.5, self.n_test)
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdvantageReport {
    pub trials: usize,
    pub train_fraction: f64,
    pub entries: Vec<AdvantageEntry>,
    pub bound: Option<DpBound>,
}

impl AdvantageReport {
    pub fn entry(&self, name: &str) -> Option<&AdvantageEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Runs `cfg.trials` stratified train/test splits and reports the test
/// accuracy of a logistic-regression attacker. The split of trial `t`
/// depends only on `cfg.seed`, `t` and the labels, so every feature set
/// evaluated with the same config sees the same splits.
pub fn advantage_entry<D: Design>(name: &str, x: &D, y: &[bool], cfg: &EvalConfig) -> Result<AdvantageEntry, AnalysisError> {
    if x.rows() != y.len() {
        return Err(AnalysisError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    let labels: Vec<usize> = y.iter().map(|&b| b as usize).collect();
    let mut acc = Vec::with_capacity(cfg.trials);
    let mut n_test = 0;
    for t in 0..cfg.trials {
        let mut rng = rng_from(derive_seed(cfg.seed, t as u64));
        let (train, test) = stratified_split(&labels, cfg.train_fraction, &mut rng);
        if train.is_empty() || test.is_empty() {
            return Err(AnalysisError::SplitTooSmall);
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
        let model = train_logreg(&x.select(&train), &pick(&train), &cfg.logreg)?;
        acc.push(model.accuracy(&x.select(&test), &pick(&test)));
        n_test = test.len();
    }
    Ok(AdvantageEntry::from_accuracies(name, acc, n_test))
}

/// Success of a guesser relative to the best prior-only guess.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GameAdvantage {
    pub accuracy: Summary,
    pub baseline: f64,
    /// `max(0, accuracy - baseline)` per trial.
    pub raw: Summary,
    /// `raw / (1 - baseline)` per trial.
    pub normalized: Summary,
    pub n_test: usize,
}

impl GameAdvantage {
    pub fn from_accuracies(accuracies: Vec<f64>, baseline: f64, n_test: usize) -> Self {
        let acc = Summary::of(accuracies);
        GameAdvantage {
            raw: acc.map(|a| interest_advantage(a, baseline).0),
            normalized: acc.map(|a| interest_advantage(a, baseline).1),
            accuracy: acc,
            baseline,
            n_test,
        }
    }

    /// Standard deviation of one trial's normalized advantage if the
    /// attacker were no better than the baseline.
    pub fn sigma(&self) -> f64 {
        if self.baseline >= 1.0 {
            return 0.0;
        }
        accuracy_sigma(self.baseline, self.n_test) / (1.0 - self.baseline)
    }
}

/// `(max(0, acc - baseline), that / (1 - baseline))`.
pub fn interest_advantage(accuracy: f64, baseline: f64) -> (f64, f64) {
    let raw = (accuracy - baseline).max(0.0);
    let norm = if baseline < 1.0 { raw / (1.0 - baseline) } else { 0.0 };
    (raw, norm)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FingerprintReport {
    pub trials: usize,
    pub interest: GameAdvantage,
    pub fingerprint: GameAdvantage,
}

/// Membership classifier over all examples and a multinomial identity
/// classifier over member examples, sharing one stratified split per
/// trial. `identity[i]` is only read where `member[i]`.
pub fn fingerprint_advantage<D: Design>(
    x: &D,
    member: &[bool],
    identity: &[usize],
    s_c: f64,
    s_f: f64,
    cfg: &EvalConfig,
    softmax: &LogRegParams,
) -> Result<FingerprintReport, AnalysisError> {
    if x.rows() != member.len() || member.len() != identity.len() {
        return Err(AnalysisError::LengthMismatch {
            rows: x.rows(),
            labels: member.len(),
        });
    }
    if !member.iter().any(|&m| m) {
        return Err(AnalysisError::NoMembers);
    }
    let labels: Vec<usize> = member.iter().map(|&b| b as usize).collect();
    let (mut interest, mut finger) = (Vec::new(), Vec::new());
    let (mut n_test, mut n_test_members) = (0, 0);
    for t in 0..cfg.trials {
        let mut rng = rng_from(derive_seed(cfg.seed, t as u64));
        let (train, test) = stratified_split(&labels, cfg.train_fraction, &mut rng);
        if train.is_empty() || test.is_empty() {
            return Err(AnalysisError::SplitTooSmall);
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| member[i]).collect::<Vec<_>>();
        let acc = match train_logreg(&x.select(&train), &pick(&train), &cfg.logreg) {
            Ok(m) => m.accuracy(&x.select(&test), &pick(&test)),
            // one class only: the best guess is that class
            Err(AnalysisError::SingleClass) => {
                let c = member[train[0]];
                pick(&test).iter().filter(|&&m| m == c).count() as f64 / test.len() as f64
            }
            Err(e) => return Err(e),
        };
        interest.push(acc);
        n_test = test.len();

        let train_m: Vec<usize> = train.iter().copied().filter(|&i| member[i]).collect();
        let test_m: Vec<usize> = test.iter().copied().filter(|&i| member[i]).collect();
        if train_m.is_empty() || test_m.is_empty() {
            return Err(AnalysisError::NoMembers);
        }
        let ids = |idx: &[usize]| idx.iter().map(|&i| identity[i]).collect::<Vec<_>>();
        let acc = match train_softmax(&x.select(&train_m), &ids(&train_m), softmax) {
            Ok(m) => m.accuracy(&x.select(&test_m), &ids(&test_m)),
            Err(AnalysisError::SingleClass | AnalysisError::TooFewSamples { .. }) => {
                let c = identity[train_m[0]];
                ids(&test_m).iter().filter(|&&v| v == c).count() as f64 / test_m.len() as f64
            }
            Err(e) => return Err(e),
        };
        finger.push(acc);
        n_test_members = test_m.len();
    }
    Ok(FingerprintReport {
        trials: cfg.trials,
        interest: GameAdvantage::from_accuracies(interest, s_c, n_test),
        fingerprint: GameAdvantage::from_accuracies(finger, s_f, n_test_members),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{ngram_features, Matrix, SparseMatrix, NGRAM_DIMS};

    #[test]
    fn advantage_arithmetic() {
        assert_eq!(normalized_advantage(0.75), 0.5);
        assert_eq!(raw_advantage(0.4), 0.0);
        let (raw, norm) = interest_advantage(0.9, 0.8);
        assert!((raw - 0.1).abs() < 1e-12 && (norm - 0.5).abs() < 1e-12);
        let (raw, norm) = interest_advantage(0.7, 0.5);
        assert!((raw - 0.2).abs() < 1e-12 && (norm - 0.4).abs() < 1e-12);
    }

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..103).map(|i| (i % 3 == 0) as usize).collect();
        let (train, test) = stratified_split(&labels, 0.8, &mut rng_from(1));
        assert_eq!(train.len() + test.len(), 103);
        let ones = labels.iter().filter(|&&l| l == 1).count();
        let train_ones = train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(train_ones, libm::round(0.8 * ones as f64) as usize);
        let mut balanced = alloc::vec![0usize; 50];
        balanced.extend(alloc::vec![1usize; 50]);
        let (train, _) = stratified_split(&balanced, 0.8, &mut rng_from(2));
        assert_eq!(train.iter().filter(|&&i| balanced[i] == 1).count(), 40);
    }

    #[test]
    fn permuted_labels_give_chance() {
        let mut rng = rng_from(5);
        let rows: Vec<[f64; 4]> = (0..400).map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut y: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        y.shuffle(&mut rng);
        let e = advantage_entry("null", &Matrix::from_rows(&rows), &y, &EvalConfig::default()).unwrap();
        assert!((e.test_accuracy.mean - 0.5).abs() <= 0.05, "{}", e.test_accuracy.mean);
    }

    #[test]
    fn planted_token_is_found_by_ngram_model() {
        let mut rng = rng_from(6);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let mut seq: Vec<u32> = (0..50).map(|_| rng.gen_range(300..400)).collect();
            let label = i % 2 == 1;
            if label {
                let at = rng.gen_range(0..seq.len());
                seq.insert(at, 7);
            }
            rows.push(ngram_features(&seq, 3, NGRAM_DIMS));
            y.push(label);
        }
        let x = SparseMatrix::new(NGRAM_DIMS, rows);
        let e = advantage_entry("seq", &x, &y, &EvalConfig::default()).unwrap();
        assert!(e.normalized_advantage.mean >= 0.9, "{}", e.normalized_advantage.mean);
    }
}

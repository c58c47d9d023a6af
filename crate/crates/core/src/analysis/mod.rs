//! Attack models and leakage statistics: logistic-regression attackers,
//! advantage metrics, the DP advantage bound and a two-sample KS test.

mod design;
mod eval;
mod lbfgs;
mod logreg;
mod stats;

pub use design::{ngram_features, Design, Matrix, Scaler, SparseMatrix, SparseRow, NGRAM_DIMS};
pub use eval::{
    accuracy_sigma, advantage_entry, fingerprint_advantage, interest_advantage, normalized_advantage,
    raw_advantage, stratified_split, AdvantageEntry, AdvantageReport, EvalConfig, FingerprintReport,
    GameAdvantage, Summary,
};
pub use lbfgs::{lbfgs, LbfgsConfig, LbfgsResult};
pub use logreg::{
    logistic_loss, train_logreg, train_softmax, LogRegModel, LogRegParams, SoftmaxModel,
};
pub use stats::{dp_bound, ks_table, ks_test, DpBound, DpParams, KsResult, KsRow};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("feature matrix contains a non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("eps must be non-negative and finite")]
    Eps,
    #[error("delta must lie in [0, 1)")]
    Delta,
    #[error("no member examples to train the fingerprint classifier")]
    NoMembers,
    #[error("split leaves an empty train or test side")]
    SplitTooSmall,
}

//! Feature extraction over a dataset and the attacker evaluations.

use leaklab_core::analysis::{
    advantage_entry, dp_bound, fingerprint_advantage, ks_table, ngram_features, AdvantageReport, DpBound, DpParams,
    Design, EvalConfig, FingerprintReport, KsRow, LogRegParams, Matrix, SparseMatrix, NGRAM_DIMS,
};
use leaklab_core::features::{extract_features, feature_schema, tokenize, FeatureParams, FeatureSet};
use leaklab_core::games::WorkloadConfig;
use leaklab_core::trace::{ChannelSet, Trace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::config_hash;
use crate::dataset::{GameKind, LoadedDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeOptions {
    pub feature_sets: Vec<FeatureSet>,
    /// Also evaluate the token-sequence model.
    pub seq: bool,
    /// Largest n-gram order of the sequence model.
    pub ngram_max: usize,
    pub eval: EvalConfig,
    pub features: FeatureParams,
    /// Multinomial identity classifier of the fingerprint game.
    pub softmax: LogRegParams,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            feature_sets: FeatureSet::ALL.to_vec(),
            seq: false,
            ngram_max: 3,
            eval: EvalConfig::default(),
            features: FeatureParams::default(),
            softmax: LogRegParams {
                iterations: 200,
                ..LogRegParams::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Hash of the dataset config hash together with the options.
    pub config_hash: String,
    pub dataset_config_hash: String,
    pub game: GameKind,
    pub runs: usize,
    pub options: AnalyzeOptions,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantage: Option<AdvantageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<FingerprintReport>,
}

/// Row-per-trace feature matrix plus the channels the traces lack.
pub fn feature_matrix(traces: &[Trace], sets: &[FeatureSet], params: &FeatureParams) -> (Matrix, ChannelSet) {
    let cols: usize = feature_schema(sets, params).len();
    let rows: Vec<_> = traces.par_iter().map(|t| extract_features(t, sets, params)).collect();
    let mut missing = ChannelSet::NONE;
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        r.missing.iter().for_each(|c| missing.insert(c));
        data.extend(r.values);
    }
    (Matrix::new(cols, data), missing)
}

/// Hashed n-gram counts of every trace's token sequence.
pub fn sequence_matrix(traces: &[Trace], max_n: usize) -> SparseMatrix {
    let rows = traces
        .par_iter()
        .map(|t| ngram_features(&tokenize(t), max_n, NGRAM_DIMS))
        .collect();
    SparseMatrix::new(NGRAM_DIMS, rows)
}

/// Drops columns that take one value over the whole dataset. Labels are
/// not consulted, so this cannot leak the test side into training.
pub fn drop_constant_columns(x: &Matrix) -> Matrix {
    let keep: Vec<usize> = (0..x.cols())
        .filter(|&j| {
            let mut col = x.column(j);
            let first = col.next();
            col.any(|v| Some(v) != first)
        })
        .collect();
    if keep.is_empty() {
        return Matrix::new(1, vec![0.0; x.rows()]);
    }
    let data = (0..x.rows()).flat_map(|i| keep.iter().map(move |&j| x.row(i)[j])).collect();
    Matrix::new(keep.len(), data)
}

/// The analytical bound that applies to a dataset's workload, if any.
pub fn workload_bound(w: &WorkloadConfig) -> Option<DpBound> {
    match *w {
        WorkloadConfig::Phh {
            eps,
            delta,
            mitigated: true,
            ..
        }
        | WorkloadConfig::DummyLoop { eps, delta, .. } => dp_bound(DpParams { eps, delta }).ok(),
        _ => None,
    }
}

fn missing_warnings(missing: ChannelSet, sets: &[FeatureSet]) -> Vec<String> {
    sets.iter()
        .filter_map(|s| {
            let lacking: Vec<&str> = s.channels().iter().filter(|c| missing.contains(*c)).map(|c| c.name()).collect();
            (!lacking.is_empty()).then(|| {
                format!(
                    "{s} uses the {} channel(s), which the dataset lacks; those features are zero",
                    lacking.join(",")
                )
            })
        })
        .collect()
}

pub fn analyze(ds: &LoadedDataset, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    if opts.feature_sets.is_empty() {
        return Err(Error::Usage("no feature sets requested".into()));
    }
    let mut sets = opts.feature_sets.clone();
    sets.sort();
    sets.dedup();
    let mut warnings = Vec::new();
    let per_set: Vec<(FeatureSet, Matrix)> = sets
        .iter()
        .map(|&s| {
            let (m, missing) = feature_matrix(&ds.traces, &[s], &opts.features);
            warnings.extend(missing_warnings(missing, &[s]));
            (s, m)
        })
        .collect();
    let labels = ds.labels();
    let mut report = AnalysisReport {
        config_hash: config_hash(&(&ds.meta.config_hash, opts)),
        dataset_config_hash: ds.meta.config_hash.clone(),
        game: ds.kind(),
        runs: ds.traces.len(),
        options: opts.clone(),
        warnings,
        advantage: None,
        fingerprint: None,
    };
    match ds.kind() {
        GameKind::Distinguish => {
            let mut entries = per_set
                .par_iter()
                .map(|(s, m)| advantage_entry(s.name(), m, &labels, &opts.eval))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if per_set.len() > 1 {
                let parts: Vec<&Matrix> = per_set.iter().map(|(_, m)| m).collect();
                let union = drop_constant_columns(&Matrix::hstack(&parts));
                entries.push(advantage_entry("union", &union, &labels, &opts.eval)?);
            }
            if opts.seq {
                let x = sequence_matrix(&ds.traces, opts.ngram_max);
                entries.push(advantage_entry("seq", &x, &labels, &opts.eval)?);
            }
            report.advantage = Some(AdvantageReport {
                trials: opts.eval.trials,
                train_fraction: opts.eval.train_fraction,
                entries,
                bound: workload_bound(&ds.meta.config.workload),
            });
        }
        GameKind::Fingerprint => {
            let (s_c, s_f) = match (ds.meta.s_c, ds.meta.s_f) {
                (Some(c), Some(f)) => (c, f),
                _ => return Err(Error::Dataset("fingerprint dataset without baseline rates".into())),
            };
            let parts: Vec<&Matrix> = per_set.iter().map(|(_, m)| m).collect();
            let x = drop_constant_columns(&Matrix::hstack(&parts));
            report.fingerprint = Some(fingerprint_advantage(
                &x,
                &labels,
                &ds.identities(),
                s_c,
                s_f,
                &opts.eval,
                &opts.softmax,
            )?);
        }
    }
    Ok(report)
}

/// KS statistic of every feature of `sets` between the two label values.
pub fn ks_rows(ds: &LoadedDataset, sets: &[FeatureSet], params: &FeatureParams) -> Result<Vec<KsRow>> {
    let (x, _) = feature_matrix(&ds.traces, sets, params);
    let names: Vec<String> = feature_schema(sets, params).into_iter().map(|f| f.name).collect();
    Ok(ks_table(&x, &ds.labels(), &names)?)
}

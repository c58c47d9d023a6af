//! Dataset directories: `dataset.json`, `manifest.jsonl` and one trace
//! file per run under `traces/`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use leaklab_core::games::{execute_run, plan_game, GameConfig, GamePlan, Label, LabeledDataset, RunRecord};
use leaklab_core::trace::{parse_trace, write_trace, Trace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::config_hash;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.jsonl";
pub const META: &str = "dataset.json";
pub const TRACE_DIR: &str = "traces";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Distinguish,
    Fingerprint,
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub path: String,
    /// Class bit (distinguish) or membership bit (fingerprint).
    pub label: u8,
    pub game: GameKind,
    pub seed: u64,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config_hash: String,
    pub config: GameConfig,
    pub runs: usize,
    pub sybils: usize,
    pub s_c: Option<f64>,
    pub s_f: Option<f64>,
}

pub fn trace_file_name(index: usize) -> String {
    format!("{TRACE_DIR}/run-{index:06}.trace")
}

fn record_of(r: &RunRecord) -> ManifestRecord {
    let (game, label, identity) = match r.label {
        Label::Distinguish { class } => (GameKind::Distinguish, class as u8, None),
        Label::Fingerprint { member, identity } => (GameKind::Fingerprint, member as u8, identity),
    };
    ManifestRecord {
        path: trace_file_name(r.index),
        label,
        game,
        seed: r.seed,
        index: r.index,
        identity,
    }
}

/// Plans and simulates a game, spreading runs over `jobs` threads. The
/// result does not depend on `jobs`.
pub fn simulate(cfg: &GameConfig, jobs: usize) -> Result<(GamePlan, LabeledDataset)> {
    let plan = plan_game(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(e.to_string()))?;
    let records = pool.install(|| {
        plan.runs
            .par_iter()
            .map(|r| execute_run(cfg, &plan, r))
            .collect::<std::result::Result<Vec<_>, _>>()
    })?;
    let ds = LabeledDataset::assemble(cfg, &plan, records);
    Ok((plan, ds))
}

pub fn write_dataset(dir: &Path, ds: &LabeledDataset, sybils: usize) -> Result<DatasetMeta> {
    fs::create_dir_all(dir.join(TRACE_DIR)).map_err(Error::io(dir))?;
    let meta = DatasetMeta {
        config_hash: config_hash(&ds.config),
        config: ds.config.clone(),
        runs: ds.entries.len(),
        sybils,
        s_c: ds.s_c,
        s_f: ds.s_f,
    };
    let mpath = dir.join(MANIFEST);
    let mut manifest = BufWriter::new(fs::File::create(&mpath).map_err(Error::io(&mpath))?);
    for r in &ds.entries {
        let rec = record_of(r);
        let tpath = dir.join(&rec.path);
        fs::write(&tpath, write_trace(&r.trace)).map_err(Error::io(&tpath))?;
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(manifest, "{line}").map_err(Error::io(&mpath))?;
    }
    manifest.flush().map_err(Error::io(&mpath))?;
    write_json(&dir.join(META), &meta)?;
    Ok(meta)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedDataset {
    pub dir: PathBuf,
    pub meta: DatasetMeta,
    pub records: Vec<ManifestRecord>,
    pub traces: Vec<Trace>,
}

impl LoadedDataset {
    pub fn kind(&self) -> GameKind {
        self.records.first().map_or(GameKind::Distinguish, |r| r.game)
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label == 1).collect()
    }

    pub fn identities(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.identity.unwrap_or(usize::MAX)).collect()
    }

    /// In-memory dataset without files, e.g. straight from [`simulate`].
    pub fn from_memory(ds: &LabeledDataset, sybils: usize) -> Self {
        LoadedDataset {
            dir: PathBuf::new(),
            meta: DatasetMeta {
                config_hash: config_hash(&ds.config),
                config: ds.config.clone(),
                runs: ds.entries.len(),
                sybils,
                s_c: ds.s_c,
                s_f: ds.s_f,
            },
            records: ds.entries.iter().map(record_of).collect(),
            traces: ds.entries.iter().map(|e| e.trace.clone()).collect(),
        }
    }
}

pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(Error::io(&meta_path))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    let mpath = dir.join(MANIFEST);
    let file = fs::File::open(&mpath).map_err(Error::io(&mpath))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(&mpath))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("{}:{}: {e}", mpath.display(), n + 1)))?;
        records.push(rec);
    }
    if records.len() != meta.runs {
        return Err(Error::Dataset(format!(
            "manifest lists {} runs, {} expects {}",
            records.len(),
            META,
            meta.runs
        )));
    }
    if records.iter().any(|r| r.game != records[0].game) {
        return Err(Error::Dataset("manifest mixes game kinds".into()));
    }
    records.sort_by_key(|r| r.index);
    let traces = records
        .par_iter()
        .map(|r| {
            let p = dir.join(&r.path);
            let text = fs::read_to_string(&p).map_err(Error::io(&p))?;
            parse_trace(&text).map_err(|source| Error::Trace { path: p, source })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedDataset {
        dir: dir.to_path_buf(),
        meta,
        records,
        traces,
    })
}

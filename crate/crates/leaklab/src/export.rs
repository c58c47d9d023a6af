//! CSV and plain-text exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use leaklab_core::analysis::KsRow;
use leaklab_core::features::{feature_schema, tokenize, FeatureParams, FeatureSet};

use crate::analyze::feature_matrix;
use crate::dataset::LoadedDataset;
use crate::error::{Error, Result};

fn csv_writer(path: &Path, config_hash: &str) -> Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path).map_err(Error::io(path))?;
    writeln!(f, "# config_hash {config_hash}").map_err(Error::io(path))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// One row per trace: `index,label,<schema columns>`. The first line is
/// a `#` comment carrying the config hash.
pub fn write_feature_csv(path: &Path, ds: &LoadedDataset, sets: &[FeatureSet], params: &FeatureParams) -> Result<()> {
    let (x, _) = feature_matrix(&ds.traces, sets, params);
    let mut w = csv_writer(path, &ds.meta.config_hash)?;
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend(feature_schema(sets, params).into_iter().map(|f| f.name));
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, rec) in ds.records.iter().enumerate() {
        let mut row = vec![rec.index.to_string(), rec.label.to_string()];
        row.extend(x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// One line of space-separated token ids per trace, in run order.
pub fn write_tokens(path: &Path, ds: &LoadedDataset) -> Result<()> {
    let mut out = String::new();
    for t in &ds.traces {
        let ids: Vec<String> = tokenize(t).iter().map(u32::to_string).collect();
        out.push_str(&ids.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(Error::io(path))
}

pub fn write_ks_csv(path: &Path, rows: &[KsRow], config_hash: &str) -> Result<()> {
    let mut w = csv_writer(path, config_hash)?;
    w.write_record(["feature", "d", "p_value"]).map_err(csv_err(path))?;
    for r in rows {
        w.write_record([r.feature.clone(), r.d.to_string(), r.p_value.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// A sweep result: one row per ε.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub delta: f64,
    /// Mean normalized advantage per entry name.
    pub advantage: Vec<(String, f64)>,
    pub bound_normalized: f64,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow], config_hash: &str) -> Result<()> {
    let mut w = csv_writer(path, config_hash)?;
    let names: Vec<String> = rows
        .first()
        .map(|r| r.advantage.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["eps".to_string(), "delta".to_string()];
    header.extend(names.iter().cloned());
    header.push("bound_normalized".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut row = vec![r.eps.to_string(), r.delta.to_string()];
        row.extend(r.advantage.iter().map(|(_, v)| v.to_string()));
        row.push(r.bound_normalized.to_string());
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(Error::io(path))
}

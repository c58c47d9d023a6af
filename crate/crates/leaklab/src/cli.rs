//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use leaklab_core::analysis::{dp_bound, DpParams};
use leaklab_core::features::{parse_feature_sets, FeatureSet};
use leaklab_core::games::{plan_game, GameConfig};
use leaklab_core::trace::{parse_trace, write_trace};

use crate::analyze::{analyze, ks_rows, AnalyzeOptions};
use crate::config::{config_hash, load_game_config, seed_override};
use crate::dataset::{read_dataset, simulate, write_dataset, write_json};
use crate::error::{ConfigError, Error, Result};
use crate::export::{write_feature_csv, write_ks_csv, write_sweep_csv, write_tokens};
use crate::pipeline::{covert_message, covert_trace, evaluate_covert, sweep, sweep_template};
use crate::plot::{bar_chart, line_chart};

/// Exit code for a failed covert-channel check.
pub const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "leaklab", version, about = "Simulated side-channel leakage experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a privacy game and write the labeled trace dataset.
    Simulate(SimulateArgs),
    /// Train attackers on a dataset and report their advantage.
    Analyze(AnalyzeArgs),
    /// Print the advantage bound for (eps, delta).
    Bound(BoundArgs),
    /// Simulate and analyze a mitigated game for several eps values.
    Sweep(SweepArgs),
    /// Transmit a message over the ciphertext covert channel and decode it.
    Covert(CovertArgs),
    /// Export feature matrices and token sequences.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long, required_unless_present = "dry_run")]
    pub out: Option<PathBuf>,
    /// Print the planned runs without simulating or writing anything.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated feature sets, or `all`/`union`.
    #[arg(long, default_value = "all")]
    pub features: String,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub eval_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub l2_lambda: f64,
    /// Iteration cap of the multinomial fingerprint classifier.
    #[arg(long, default_value_t = 200)]
    pub softmax_iterations: usize,
}

impl EvalArgs {
    fn options(&self, seq: bool) -> Result<AnalyzeOptions> {
        let feature_sets = feature_sets(&self.features)?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) || self.trials == 0 {
            return Err(Error::Usage("need trials >= 1 and 0 < train-fraction < 1".into()));
        }
        let mut o = AnalyzeOptions {
            feature_sets,
            seq,
            ..AnalyzeOptions::default()
        };
        o.eval.trials = self.trials;
        o.eval.train_fraction = self.train_fraction;
        o.eval.seed = seed_override()?.unwrap_or(self.eval_seed);
        o.eval.logreg.l2_lambda = self.l2_lambda;
        o.softmax.l2_lambda = self.l2_lambda;
        o.softmax.iterations = self.softmax_iterations;
        Ok(o)
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Also evaluate the token-sequence model.
    #[arg(long)]
    pub seq: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Per-feature KS table as CSV.
    #[arg(long)]
    pub ks: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eps: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps_list: Vec<f64>,
    #[arg(long, default_value_t = 1e-9)]
    pub delta: f64,
    #[arg(long, default_value_t = 200)]
    pub traces_per_class: usize,
    /// Game config to sweep instead of the built-in mitigated PHH game.
    #[arg(long)]
    pub game: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct CovertArgs {
    #[arg(long, default_value_t = 48)]
    pub bytes: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Save the collected trace.
    #[arg(long)]
    pub save_trace: Option<PathBuf>,
    /// Decode a saved trace instead of simulating one.
    #[arg(long, conflicts_with = "save_trace")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "all")]
    pub features: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Token sequences, one line per trace.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
}

fn feature_sets(s: &str) -> Result<Vec<FeatureSet>> {
    parse_feature_sets(s).map_err(|e| {
        Error::Config(ConfigError {
            pointer: String::new(),
            message: format!("--features: {e}"),
        })
    })
}

fn io_out(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable output to `out`. Returns the exit code.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    match run(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Bound(a) => cmd_bound(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Covert(a) => cmd_covert(a, out),
        Command::Export(a) => cmd_export(a, out),
    }
}

fn game_config(path: &std::path::Path) -> Result<GameConfig> {
    let mut cfg = load_game_config(path)?;
    if let Some(seed) = seed_override()? {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<u8> {
    let cfg = game_config(&a.game)?;
    let hash = config_hash(&cfg);
    if a.dry_run {
        let plan = plan_game(&cfg)?;
        writeln!(out, "config_hash {hash}").map_err(io_out)?;
        writeln!(out, "{} runs, {} sybil inputs", plan.runs.len(), plan.sybils.len()).map_err(io_out)?;
        for r in &plan.runs {
            writeln!(out, "run {:6} seed {:20} {}", r.index, r.seed, r.label.describe()).map_err(io_out)?;
        }
        return Ok(0);
    }
    let dir = a.out.expect("clap requires --out");
    let (plan, ds) = simulate(&cfg, a.jobs)?;
    let meta = write_dataset(&dir, &ds, plan.sybils.len())?;
    let positives = ds.binary_labels().iter().filter(|&&b| b).count();
    writeln!(out, "config_hash {}", meta.config_hash).map_err(io_out)?;
    writeln!(
        out,
        "wrote {} traces to {} ({} labeled 1, {} labeled 0, {} sybil inputs)",
        meta.runs,
        dir.display(),
        positives,
        meta.runs - positives,
        meta.sybils
    )
    .map_err(io_out)?;
    if let (Some(c), Some(f)) = (meta.s_c, meta.s_f) {
        writeln!(out, "baselines s_c {c:.4} s_f {f:.4}").map_err(io_out)?;
    }
    Ok(0)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(e.to_string()))
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<u8> {
    let opts = a.eval.options(a.seq)?;
    let pool = pool(a.jobs)?;
    let ds = pool.install(|| read_dataset(&a.dataset))?;
    let report = pool.install(|| analyze(&ds, &opts))?;
    for w in &report.warnings {
        writeln!(out, "warning: {w}").map_err(io_out)?;
    }
    write_json(&a.out, &report)?;
    writeln!(out, "config_hash {}", report.config_hash).map_err(io_out)?;
    if let Some(adv) = &report.advantage {
        for e in &adv.entries {
            writeln!(
                out,
                "{:6} accuracy {:.4}  normalized advantage {:.4} ± {:.4}",
                e.name, e.test_accuracy.mean, e.normalized_advantage.mean, e.normalized_advantage.std
            )
            .map_err(io_out)?;
        }
        if let Some(b) = adv.bound {
            writeln!(out, "bound  normalized {:.4}", b.normalized).map_err(io_out)?;
        }
        if let Some(p) = &a.plot {
            let bars: Vec<_> = adv
                .entries
                .iter()
                .map(|e| (e.name.clone(), e.normalized_advantage.mean, e.normalized_advantage.std))
                .collect();
            let svg = bar_chart("Attacker advantage", &bars, adv.bound.map(|b| b.normalized), &report.config_hash);
            fs::write(p, svg).map_err(Error::io(p))?;
        }
    }
    if let Some(f) = &report.fingerprint {
        writeln!(
            out,
            "interest    accuracy {:.4} baseline {:.4} normalized advantage {:.4}",
            f.interest.accuracy.mean, f.interest.baseline, f.interest.normalized.mean
        )
        .map_err(io_out)?;
        writeln!(
            out,
            "fingerprint accuracy {:.4} baseline {:.4} normalized advantage {:.4}",
            f.fingerprint.accuracy.mean, f.fingerprint.baseline, f.fingerprint.normalized.mean
        )
        .map_err(io_out)?;
        if let Some(p) = &a.plot {
            let bars = vec![
                ("interest".to_string(), f.interest.normalized.mean, f.interest.normalized.std),
                ("fingerprint".to_string(), f.fingerprint.normalized.mean, f.fingerprint.normalized.std),
            ];
            fs::write(p, bar_chart("Fingerprinting advantage", &bars, None, &report.config_hash))
                .map_err(Error::io(p))?;
        }
    }
    if let Some(p) = &a.ks {
        let rows = pool.install(|| ks_rows(&ds, &opts.feature_sets, &opts.features))?;
        write_ks_csv(p, &rows, &report.config_hash)?;
    }
    Ok(0)
}

fn cmd_bound(a: BoundArgs, out: &mut dyn Write) -> Result<u8> {
    let b = dp_bound(DpParams {
        eps: a.eps,
        delta: a.delta,
    })
    .map_err(|e| {
        Error::Config(ConfigError {
            pointer: String::new(),
            message: e.to_string(),
        })
    })?;
    writeln!(out, "advantage  {:.4}", b.advantage).map_err(io_out)?;
    writeln!(out, "normalized {:.4}", b.normalized).map_err(io_out)?;
    if !b.useful {
        writeln!(
            out,
            "warning: eps >= ln(3 - 2*delta); the bound reaches 1/2 and constrains nothing"
        )
        .map_err(io_out)?;
    }
    Ok(0)
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Result<u8> {
    let opts = a.eval.options(false)?;
    let mut template = match &a.game {
        Some(p) => load_game_config(p)?,
        None => sweep_template(a.delta, a.traces_per_class),
    };
    if let Some(seed) = seed_override()? {
        template.base_seed = seed;
    }
    let hash = config_hash(&(&template, &a.eps_list, &opts));
    let rows = pool(a.jobs)?.install(|| sweep(&template, &a.eps_list, &opts, a.jobs))?;
    write_sweep_csv(&a.out, &rows, &hash)?;
    writeln!(out, "config_hash {hash}").map_err(io_out)?;
    for r in &rows {
        let cells: Vec<String> = r.advantage.iter().map(|(n, v)| format!("{n} {v:.4}")).collect();
        writeln!(out, "eps {:<6} {}  bound {:.4}", r.eps, cells.join("  "), r.bound_normalized).map_err(io_out)?;
    }
    if let Some(p) = &a.plot {
        let xs: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let names: Vec<String> = rows
            .first()
            .map(|r| r.advantage.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        let series: Vec<(String, Vec<f64>)> = names
            .iter()
            .enumerate()
            .map(|(k, n)| (n.clone(), rows.iter().map(|r| r.advantage[k].1).collect()))
            .collect();
        let bound: Vec<f64> = rows.iter().map(|r| r.bound_normalized).collect();
        let svg = line_chart("Advantage vs eps", "eps", &xs, &series, Some(("bound", &bound)), &hash);
        fs::write(p, svg).map_err(Error::io(p))?;
    }
    Ok(0)
}

fn cmd_covert(a: CovertArgs, out: &mut dyn Write) -> Result<u8> {
    let seed = seed_override()?.unwrap_or(a.seed);
    let msg = covert_message(a.bytes, a.reps, seed);
    let trace = match &a.trace {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(Error::io(p))?;
            parse_trace(&text).map_err(|source| Error::Trace {
                path: p.clone(),
                source,
            })?
        }
        None => covert_trace(&msg, seed)?,
    };
    if let Some(p) = &a.save_trace {
        fs::write(p, write_trace(&trace)).map_err(Error::io(p))?;
    }
    let o = evaluate_covert(&trace, &msg);
    writeln!(out, "config_hash {}", config_hash(&(a.bytes, a.reps, seed))).map_err(io_out)?;
    writeln!(out, "sent {} bytes, decoded {}", o.sent, o.decoded).map_err(io_out)?;
    if let Some(p) = o.decode_error {
        writeln!(out, "decode failed at byte {p}").map_err(io_out)?;
    }
    for &i in o.byte_errors.iter().take(20) {
        let show = |v: Option<&u8>| v.map_or("--".to_string(), |b| format!("{b:02x}"));
        let sent = msg.bytes.get(i % msg.bytes.len().max(1)).filter(|_| i < o.sent);
        let got = if o.decode_error.is_some() { None } else { trace_byte(&trace, i) };
        writeln!(out, "byte {i}: sent {} decoded {}", show(sent), show(got.as_ref())).map_err(io_out)?;
    }
    writeln!(out, "error rate {}", o.error_rate).map_err(io_out)?;
    match o.faults_per_byte {
        Some(f) => writeln!(out, "faults/byte {f}").map_err(io_out)?,
        None => writeln!(out, "faults/byte n/a").map_err(io_out)?,
    }
    Ok(if o.ok() { 0 } else { EXIT_CHECK_FAILED })
}

fn trace_byte(trace: &leaklab_core::trace::Trace, i: usize) -> Option<u8> {
    leaklab_core::workloads::covert::covert_decode(trace)
        .ok()
        .and_then(|d| d.get(i).copied())
}

fn cmd_export(a: ExportArgs, out: &mut dyn Write) -> Result<u8> {
    if a.out.is_none() && a.tokens.is_none() {
        return Err(Error::Usage("nothing to export: pass --out and/or --tokens".into()));
    }
    let sets = feature_sets(&a.features)?;
    let ds = read_dataset(&a.dataset)?;
    if let Some(p) = &a.out {
        write_feature_csv(p, &ds, &sets, &Default::default())?;
        writeln!(out, "wrote {}", p.display()).map_err(io_out)?;
    }
    if let Some(p) = &a.tokens {
        write_tokens(p, &ds)?;
        writeln!(out, "wrote {}", p.display()).map_err(io_out)?;
    }
    Ok(0)
}

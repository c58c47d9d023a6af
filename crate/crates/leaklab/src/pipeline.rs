//! Multi-step drivers: the covert-channel check and ε sweeps.

use leaklab_core::analysis::{dp_bound, DpParams};
use leaklab_core::games::{GameConfig, GameSpec, SybilStrategy, WorkloadConfig};
use leaklab_core::rng::derive_seed;
use leaklab_core::sim::{run_collect, CollectorPolicy, SimMachine};
use leaklab_core::trace::{Channel, Trace, TraceEvent};
use leaklab_core::workloads::covert::{covert_decode, CovertSender, SecretMessage};
use leaklab_core::workloads::phh::PhhStage;
use serde::Serialize;

use crate::analyze::{analyze, AnalyzeOptions};
use crate::dataset::{simulate, LoadedDataset};
use crate::error::{Error, Result};
use crate::export::SweepRow;

/// The message a covert run with `seed` transmits.
pub fn covert_message(bytes: usize, reps: usize, seed: u64) -> SecretMessage {
    SecretMessage::random(bytes, reps, derive_seed(seed, 0))
}

pub fn covert_policy() -> CollectorPolicy {
    CollectorPolicy::with_channels(&[Channel::Page, Channel::Cipher]).targeted(true)
}

/// Simulates the sender and collects its trace.
pub fn covert_trace(msg: &SecretMessage, seed: u64) -> Result<Trace> {
    let mut m = SimMachine::new(derive_seed(seed, 1));
    let tx = CovertSender::setup(&mut m);
    let (t, ()) = run_collect(&mut m, &covert_policy(), seed, |m| tx.send(m, msg)).map_err(|e| Error::Dataset(e.to_string()))?;
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovertOutcome {
    pub sent: usize,
    pub decoded: usize,
    /// Stream positions whose decoded byte differs from the sent one or
    /// is missing.
    pub byte_errors: Vec<usize>,
    pub error_rate: f64,
    /// Data faults inside the collection window.
    pub faults: usize,
    pub faults_per_byte: Option<f64>,
    /// First position the decoder could not recover; everything from
    /// there on counts as an error.
    pub decode_error: Option<usize>,
}

impl CovertOutcome {
    pub fn ok(&self) -> bool {
        self.byte_errors.is_empty() && self.decode_error.is_none()
    }
}

pub fn evaluate_covert(trace: &Trace, msg: &SecretMessage) -> CovertOutcome {
    let sent: Vec<u8> = msg
        .bytes
        .iter()
        .copied()
        .cycle()
        .take(msg.bytes.len() * msg.repetitions)
        .collect();
    let faults = trace
        .windowed()
        .filter(|e| matches!(e, TraceEvent::DataAccess { .. }))
        .count();
    let (decoded, decode_error) = match covert_decode(trace) {
        Ok(d) => (d, None),
        Err(e) => (Vec::new(), Some(e.position)),
    };
    let byte_errors: Vec<usize> = match decode_error {
        Some(p) => (p.min(sent.len())..sent.len().max(p + 1)).collect(),
        None => (0..sent.len().max(decoded.len()))
            .filter(|&i| sent.get(i) != decoded.get(i))
            .collect(),
    };
    let error_rate = if sent.is_empty() {
        (!byte_errors.is_empty()) as u8 as f64
    } else {
        byte_errors.len().min(sent.len()) as f64 / sent.len() as f64
    };
    CovertOutcome {
        sent: sent.len(),
        decoded: decoded.len(),
        byte_errors,
        error_rate,
        faults,
        faults_per_byte: (!sent.is_empty()).then(|| faults as f64 / sent.len() as f64),
        decode_error,
    }
}

/// Mitigated PHH distinguishing game with 99 Sybil copies of `URL0` and
/// markers around the noise-and-threshold stage.
pub fn sweep_template(delta: f64, traces_per_class: usize) -> GameConfig {
    GameConfig {
        game: GameSpec::Distinguish {
            x0: "URL0".into(),
            x1: "URL1".into(),
            traces_per_class,
        },
        workload: WorkloadConfig::Phh {
            eps: 0.1,
            delta,
            mitigated: true,
            stage: PhhStage::NoiseThreshold,
            ladder: leaklab_core::workloads::hashmap::DEFAULT_LADDER.to_vec(),
        },
        sybils: vec![SybilStrategy::FixedCopies {
            n: 99,
            value: "URL0".into(),
        }],
        policy: CollectorPolicy::with_channels(&[Channel::Page, Channel::Cache, Channel::Cipher]).targeted(true),
        base_seed: 0,
    }
}

/// `template` with its workload's ε replaced.
pub fn with_eps(template: &GameConfig, new_eps: f64) -> Result<GameConfig> {
    let mut cfg = template.clone();
    match &mut cfg.workload {
        WorkloadConfig::Phh { eps, .. } | WorkloadConfig::DummyLoop { eps, .. } => *eps = new_eps,
        WorkloadConfig::Pir { .. } => return Err(Error::Usage("sweeps need a phh or dummy_loop workload".into())),
    }
    Ok(cfg)
}

/// Simulates and analyzes `template` once per ε.
pub fn sweep(template: &GameConfig, eps_list: &[f64], opts: &AnalyzeOptions, jobs: usize) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = with_eps(template, eps)?;
        let delta = match cfg.workload {
            WorkloadConfig::Phh { delta, .. } | WorkloadConfig::DummyLoop { delta, .. } => delta,
            WorkloadConfig::Pir { .. } => unreachable!("rejected by with_eps"),
        };
        let (plan, ds) = simulate(&cfg, jobs)?;
        let loaded = LoadedDataset::from_memory(&ds, plan.sybils.len());
        let report = analyze(&loaded, opts)?;
        let entries = report.advantage.map(|a| a.entries).unwrap_or_default();
        rows.push(SweepRow {
            eps,
            delta,
            advantage: entries
                .into_iter()
                .map(|e| (e.name, e.normalized_advantage.mean))
                .collect(),
            bound_normalized: dp_bound(DpParams { eps, delta })?.normalized,
        });
    }
    Ok(rows)
}

//! Privacy games that turn workload runs into labeled trace datasets.
//!
//! In the distinguishing game the target contributes one of two known
//! values and the attacker must tell which. In the fingerprinting game the
//! target's value is drawn from a prior; the attacker first decides whether
//! it lies in an interest set and then which member it is.
//!
//! A game is split into [`plan_game`], which makes every random choice up
//! front, and [`execute_run`], which simulates one run from its plan. Runs
//! are independent, so callers may execute them in any order or in
//! parallel and assemble the dataset with [`LabeledDataset::assemble`].

mod urls;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

pub use urls::{bundled_url_list, country_code_entries, is_country_code, COUNTRY_CODE_ENTRIES, URL_LIST_LEN};

use crate::rng::{derive_seed, rng_from};
use crate::sim::{run_collect, CollectorPolicy, SimError, SimMachine};
use crate::trace::Trace;
use crate::workloads::dummy_loop::{DummyLoop, DummyLoopParams};
use crate::workloads::hashmap::{ladder_prime_at_least, DEFAULT_LADDER};
use crate::workloads::oram::{OramPir, OramPirParams};
use crate::workloads::phh::{Phh, PhhParams, PhhStage};
use crate::workloads::pir::{pir_database, NaivePir, ScanPir};

/// Namespace for attacker-generated filler keys.
pub const SYBIL_PREFIX: &str = "sybil://";

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    Config(String),
    #[error("run {run}: {source}")]
    Run { run: usize, source: SimError },
}

fn config_err(msg: impl Into<String>) -> GameError {
    GameError::Config(msg.into())
}

/// Probability distribution over target values, ranked by position.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorDistribution {
    support: Vec<String>,
    probs: Vec<f64>,
}

impl PriorDistribution {
    pub fn uniform_pair(x0: &str, x1: &str) -> Self {
        PriorDistribution {
            support: alloc::vec![x0.into(), x1.into()],
            probs: alloc::vec![0.5, 0.5],
        }
    }

    /// `prob_i ∝ (i + 1)^(-exponent)`.
    pub fn power_law(list: Vec<String>, exponent: f64) -> Result<Self, GameError> {
        if list.is_empty() || !exponent.is_finite() {
            return Err(config_err("power law needs a non-empty list and a finite exponent"));
        }
        let w: Vec<f64> = (0..list.len()).map(|i| libm::pow((i + 1) as f64, -exponent)).collect();
        let total: f64 = w.iter().sum();
        Ok(PriorDistribution {
            support: list,
            probs: w.iter().map(|x| x / total).collect(),
        })
    }

    /// Weights must be non-negative and sum to 1 within 1e-9; they are
    /// renormalized exactly.
    pub fn explicit(support: Vec<String>, probs: Vec<f64>) -> Result<Self, GameError> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(config_err("prior support and probabilities differ in length"));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(config_err("prior probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("prior probabilities sum to {total}, not 1")));
        }
        Ok(PriorDistribution {
            support,
            probs: probs.iter().map(|p| p / total).collect(),
        })
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Total probability of the values in `set`.
    pub fn mass_of(&self, set: &[String]) -> f64 {
        let set: BTreeSet<&str> = set.iter().map(String::as_str).collect();
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(x, _)| set.contains(x.as_str()))
            .map(|(_, p)| p)
            .sum()
    }
}

/// Prior-only success rates: `s_c` for guessing membership in `interest`
/// and `s_f` for guessing the member given membership.
pub fn baseline_rates(prior: &PriorDistribution, interest: &[String]) -> (f64, f64) {
    let p_in = prior.mass_of(interest);
    let s_c = p_in.max(1.0 - p_in);
    let set: BTreeSet<&str> = interest.iter().map(String::as_str).collect();
    let top = prior
        .support
        .iter()
        .zip(&prior.probs)
        .filter(|(x, _)| set.contains(x.as_str()))
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    let s_f = if p_in > 0.0 { top / p_in } else { 0.0 };
    (s_c, s_f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PirKind {
    Naive,
    Scan,
    Oram,
}

fn default_ladder() -> Vec<u64> {
    DEFAULT_LADDER.to_vec()
}

fn default_stash() -> usize {
    OramPirParams::default().stash_capacity
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case", deny_unknown_fields))]
pub enum WorkloadConfig {
    Phh {
        eps: f64,
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        mitigated: bool,
        #[cfg_attr(feature = "serde", serde(default))]
        stage: PhhStage,
        #[cfg_attr(feature = "serde", serde(default = "default_ladder"))]
        ladder: Vec<u64>,
    },
    Pir {
        kind: PirKind,
        db_size: usize,
        #[cfg_attr(feature = "serde", serde(default))]
        zero_fraction: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        db_seed: u64,
        /// Zero-block flaw of the ORAM back-end.
        #[cfg_attr(feature = "serde", serde(default))]
        flaw: bool,
        #[cfg_attr(feature = "serde", serde(default = "default_stash"))]
        stash_capacity: usize,
        #[cfg_attr(feature = "serde", serde(default))]
        warmup_accesses: usize,
    },
    DummyLoop {
        eps: f64,
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        base_iterations: u64,
    },
}

impl WorkloadConfig {
    pub fn phh(eps: f64, delta: f64) -> Self {
        WorkloadConfig::Phh {
            eps,
            delta,
            mitigated: false,
            stage: PhhStage::Full,
            ladder: default_ladder(),
        }
    }

    pub fn pir(kind: PirKind, db_size: usize) -> Self {
        WorkloadConfig::Pir {
            kind,
            db_size,
            zero_fraction: 0.0,
            db_seed: 0,
            flaw: false,
            stash_capacity: default_stash(),
            warmup_accesses: 0,
        }
    }

    fn phh_params(&self) -> Option<PhhParams> {
        match self {
            WorkloadConfig::Phh {
                eps,
                delta,
                mitigated,
                stage,
                ladder,
            } => Some(PhhParams {
                eps: *eps,
                delta: *delta,
                mitigated: *mitigated,
                stage: *stage,
                ladder: ladder.clone(),
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case", deny_unknown_fields))]
pub enum PriorSpec {
    UniformPair { x0: String, x1: String },
    /// Over `list`, or the bundled URL list when absent.
    PowerLaw {
        #[cfg_attr(feature = "serde", serde(default))]
        list: Option<Vec<String>>,
        exponent: f64,
    },
    Explicit { support: Vec<String>, probs: Vec<f64> },
}

impl PriorSpec {
    pub fn build(&self) -> Result<PriorDistribution, GameError> {
        match self {
            PriorSpec::UniformPair { x0, x1 } => Ok(PriorDistribution::uniform_pair(x0, x1)),
            PriorSpec::PowerLaw { list, exponent } => {
                PriorDistribution::power_law(list.clone().unwrap_or_else(bundled_url_list), *exponent)
            }
            PriorSpec::Explicit { support, probs } => PriorDistribution::explicit(support.clone(), probs.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InterestSpec {
    /// Prior support entries with a country-code TLD.
    CountryCodes,
    Explicit(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum GameSpec {
    Distinguish {
        x0: String,
        x1: String,
        traces_per_class: usize,
    },
    Fingerprint {
        prior: PriorSpec,
        interest: InterestSpec,
        traces: usize,
    },
}

/// Attacker-chosen inputs placed before the target's, applied in order.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case", deny_unknown_fields))]
pub enum SybilStrategy {
    FixedCopies { n: usize, value: String },
    /// One copy of every interest-set member.
    OneOfEach,
    /// `n` distinct keys from the filler namespace.
    OutOfDomainFill { n: usize },
    /// Pads with fresh fillers until the hash map holds exactly as many
    /// keys as buckets, so one more distinct key triggers a rehash.
    RehashForcer,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GameConfig {
    pub game: GameSpec,
    pub workload: WorkloadConfig,
    #[cfg_attr(feature = "serde", serde(default))]
    pub sybils: Vec<SybilStrategy>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub policy: CollectorPolicy,
    #[cfg_attr(feature = "serde", serde(default))]
    pub base_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "game", rename_all = "snake_case"))]
pub enum Label {
    Distinguish { class: bool },
    /// `identity` indexes the interest set when `member`.
    Fingerprint { member: bool, identity: Option<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub index: usize,
    pub seed: u64,
    pub label: Label,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GamePlan {
    pub sybils: Vec<String>,
    pub interest: Vec<String>,
    pub runs: Vec<RunPlan>,
    pub s_c: Option<f64>,
    pub s_f: Option<f64>,
}

/// Workload-side facts about one run, for sanity checks.
#[derive(Clone, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunInfo {
    pub loop_iterations: Option<u64>,
    pub dummies: Option<u64>,
    /// Whether inserting the target's value rehashed the map.
    pub rehashed_target: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub label: Label,
    pub trace: Trace,
    pub info: RunInfo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub config: GameConfig,
    pub entries: Vec<RunRecord>,
    pub s_c: Option<f64>,
    pub s_f: Option<f64>,
}

impl LabeledDataset {
    /// Orders records by run index.
    pub fn assemble(config: &GameConfig, plan: &GamePlan, mut entries: Vec<RunRecord>) -> Self {
        entries.sort_by_key(|r| r.index);
        LabeledDataset {
            config: config.clone(),
            entries,
            s_c: plan.s_c,
            s_f: plan.s_f,
        }
    }

    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.entries.iter().map(|e| &e.trace)
    }

    /// Class bits of a distinguishing dataset, or membership bits of a
    /// fingerprinting one.
    pub fn binary_labels(&self) -> Vec<bool> {
        self.entries
            .iter()
            .map(|e| match e.label {
                Label::Distinguish { class } => class,
                Label::Fingerprint { member, .. } => member,
            })
            .collect()
    }

    /// Interest-set indices, `usize::MAX` for non-members.
    pub fn identities(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| match e.label {
                Label::Fingerprint { identity: Some(i), .. } => i,
                _ => usize::MAX,
            })
            .collect()
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        self.policy
            .validate()
            .map_err(|e| config_err(format!("policy: {e}")))?;
        if let Some(p) = self.workload.phh_params() {
            p.validate().map_err(|e| config_err(format!("workload: {e}")))?;
        }
        match &self.workload {
            WorkloadConfig::Pir {
                kind,
                db_size,
                zero_fraction,
                ..
            } => {
                if *db_size == 0 {
                    return Err(config_err("workload.db_size must be positive"));
                }
                if !(0.0..=1.0).contains(zero_fraction) {
                    return Err(config_err("workload.zero_fraction must lie in [0, 1]"));
                }
                if let GameSpec::Distinguish { x0, x1, .. } = &self.game {
                    if *kind != PirKind::Naive {
                        for x in [x0, x1] {
                            match x.parse::<u64>() {
                                Ok(i) if (i as usize) < *db_size => {}
                                _ => return Err(config_err(format!("`{x}` is not a record index below {db_size}"))),
                            }
                        }
                    }
                }
            }
            WorkloadConfig::DummyLoop { eps, delta, .. } => {
                crate::mitigation::DummySampler::new(*eps, *delta).map_err(|e| config_err(format!("workload: {e}")))?;
            }
            WorkloadConfig::Phh { .. } => {}
        }
        let is_phh = matches!(self.workload, WorkloadConfig::Phh { .. });
        if !self.sybils.is_empty() && !is_phh {
            return Err(config_err("sybils only apply to the phh workload"));
        }
        match &self.game {
            GameSpec::Distinguish { traces_per_class, .. } => {
                if *traces_per_class < 10 {
                    return Err(config_err("traces_per_class must be at least 10"));
                }
                if self
                    .sybils
                    .iter()
                    .any(|s| matches!(s, SybilStrategy::OneOfEach | SybilStrategy::RehashForcer))
                {
                    return Err(config_err("one_of_each and rehash_forcer need a fingerprint game"));
                }
            }
            GameSpec::Fingerprint { traces, .. } => {
                if !is_phh {
                    return Err(config_err("the fingerprint game runs on the phh workload"));
                }
                if *traces < 20 {
                    return Err(config_err("fingerprint games need at least 20 traces"));
                }
            }
        }
        Ok(())
    }
}

fn sybil_inputs(cfg: &GameConfig, interest: &[String]) -> Result<Vec<String>, GameError> {
    let mut out: Vec<String> = Vec::new();
    let mut fill = 0usize;
    let mut next_filler = |out: &mut Vec<String>| {
        out.push(format!("{SYBIL_PREFIX}{fill}"));
        fill += 1;
    };
    for s in &cfg.sybils {
        match s {
            SybilStrategy::FixedCopies { n, value } => out.extend(core::iter::repeat(value.clone()).take(*n)),
            SybilStrategy::OneOfEach => out.extend(interest.iter().cloned()),
            SybilStrategy::OutOfDomainFill { n } => (0..*n).for_each(|_| next_filler(&mut out)),
            SybilStrategy::RehashForcer => {
                let ladder = match &cfg.workload {
                    WorkloadConfig::Phh { ladder, .. } => ladder.as_slice(),
                    _ => return Err(config_err("rehash_forcer needs the phh workload")),
                };
                let distinct = out.iter().collect::<BTreeSet<_>>().len() as u64;
                let target = ladder_prime_at_least(ladder, distinct)
                    .ok_or_else(|| config_err(format!("rehash_forcer: no ladder prime holds {distinct} keys")))?;
                (distinct..target).for_each(|_| next_filler(&mut out));
            }
        }
    }
    Ok(out)
}

/// Makes every random choice of the game: labels, targets and run seeds.
pub fn plan_game(cfg: &GameConfig) -> Result<GamePlan, GameError> {
    cfg.validate()?;
    match &cfg.game {
        GameSpec::Distinguish {
            x0,
            x1,
            traces_per_class,
        } => {
            let mut classes: Vec<bool> = core::iter::repeat(false)
                .take(*traces_per_class)
                .chain(core::iter::repeat(true).take(*traces_per_class))
                .collect();
            classes.shuffle(&mut rng_from(derive_seed(cfg.base_seed, u64::MAX)));
            let runs = classes
                .into_iter()
                .enumerate()
                .map(|(index, class)| RunPlan {
                    index,
                    seed: derive_seed(cfg.base_seed, index as u64),
                    label: Label::Distinguish { class },
                    target: if class { x1.clone() } else { x0.clone() },
                })
                .collect();
            Ok(GamePlan {
                sybils: sybil_inputs(cfg, &[])?,
                interest: Vec::new(),
                runs,
                s_c: None,
                s_f: None,
            })
        }
        GameSpec::Fingerprint {
            prior,
            interest,
            traces,
        } => {
            let prior = prior.build()?;
            let interest: Vec<String> = match interest {
                InterestSpec::CountryCodes => country_code_entries(prior.support()),
                InterestSpec::Explicit(v) => v.clone(),
            };
            if interest.iter().collect::<BTreeSet<_>>().len() < 2 {
                return Err(config_err("interest set needs at least two distinct values"));
            }
            let (s_c, s_f) = baseline_rates(&prior, &interest);
            let dist = WeightedIndex::new(prior.probs()).map_err(|_| config_err("prior has no mass"))?;
            let runs = (0..*traces)
                .map(|index| {
                    let seed = derive_seed(cfg.base_seed, index as u64);
                    let x = &prior.support()[dist.sample(&mut rng_from(seed ^ 0x7072_696f))];
                    let identity = interest.iter().position(|i| i == x);
                    RunPlan {
                        index,
                        seed,
                        label: Label::Fingerprint {
                            member: identity.is_some(),
                            identity,
                        },
                        target: x.clone(),
                    }
                })
                .collect();
            Ok(GamePlan {
                sybils: sybil_inputs(cfg, &interest)?,
                interest,
                runs,
                s_c: Some(s_c),
                s_f: Some(s_f),
            })
        }
    }
}

/// Simulates one planned run and collects its trace.
pub fn execute_run(cfg: &GameConfig, plan: &GamePlan, run: &RunPlan) -> Result<RunRecord, GameError> {
    let wrap = |source: SimError| GameError::Run { run: run.index, source };
    let mut m = SimMachine::new(derive_seed(run.seed, 1));
    let mut rng = rng_from(derive_seed(run.seed, 2));
    let mut info = RunInfo::default();
    let trace = match &cfg.workload {
        WorkloadConfig::Phh { .. } => {
            let params = cfg.workload.phh_params().expect("phh workload");
            let mut inputs = plan.sybils.clone();
            inputs.push(run.target.clone());
            let mut phh = Phh::setup(&mut m, &inputs, &params).map_err(wrap)?;
            let (t, out) = run_collect(&mut m, &cfg.policy, run.seed, |m| phh.run(m, &mut rng)).map_err(wrap)?;
            info.loop_iterations = Some(out.loop_iterations);
            info.dummies = Some(out.dummies);
            info.rehashed_target = Some(out.rehashed_inputs.last() == Some(&(inputs.len() - 1)));
            t
        }
        WorkloadConfig::Pir {
            kind,
            db_size,
            zero_fraction,
            db_seed,
            flaw,
            stash_capacity,
            warmup_accesses,
        } => {
            let db = pir_database(*db_size, *zero_fraction, *db_seed);
            let index = || {
                run.target
                    .parse::<u64>()
                    .map_err(|_| config_err(format!("`{}` is not a record index", run.target)))
            };
            match kind {
                PirKind::Naive => {
                    let pir = NaivePir::setup(&mut m, &db).map_err(wrap)?;
                    run_collect(&mut m, &cfg.policy, run.seed, |m| pir.lookup(m, run.target.as_bytes()))
                        .map_err(wrap)?
                        .0
                }
                PirKind::Scan => {
                    let i = index()?;
                    let pir = ScanPir::setup(&mut m, &db).map_err(wrap)?;
                    run_collect(&mut m, &cfg.policy, run.seed, |m| pir.lookup(m, i)).map_err(wrap)?.0
                }
                PirKind::Oram => {
                    let i = index()?;
                    let params = OramPirParams {
                        zero_block_flaw: *flaw,
                        stash_capacity: *stash_capacity,
                        warmup_accesses: *warmup_accesses,
                    };
                    let mut pir = OramPir::setup(&mut m, &db, params, derive_seed(run.seed, 3)).map_err(wrap)?;
                    run_collect(&mut m, &cfg.policy, run.seed, |m| pir.lookup(m, i, &mut rng))
                        .map_err(wrap)?
                        .0
                }
            }
        }
        WorkloadConfig::DummyLoop {
            eps,
            delta,
            base_iterations,
        } => {
            let params = DummyLoopParams {
                eps: *eps,
                delta: *delta,
                base_iterations: *base_iterations,
            };
            let w = DummyLoop::setup(&mut m, &params).map_err(wrap)?;
            let class = matches!(run.label, Label::Distinguish { class: true });
            let (t, n) = run_collect(&mut m, &cfg.policy, run.seed, |m| w.run(m, class, &mut rng)).map_err(wrap)?;
            info.loop_iterations = Some(n);
            t
        }
    };
    Ok(RunRecord {
        index: run.index,
        seed: run.seed,
        label: run.label,
        trace,
        info,
    })
}

fn run_game(cfg: &GameConfig) -> Result<LabeledDataset, GameError> {
    let plan = plan_game(cfg)?;
    let records = plan
        .runs
        .iter()
        .map(|r| execute_run(cfg, &plan, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset::assemble(cfg, &plan, records))
}

/// Runs the distinguishing game sequentially.
pub fn run_distinguishing_game(cfg: &GameConfig) -> Result<LabeledDataset, GameError> {
    if !matches!(cfg.game, GameSpec::Distinguish { .. }) {
        return Err(config_err("expected a distinguish game"));
    }
    run_game(cfg)
}

/// Runs the fingerprinting game sequentially.
pub fn run_fingerprinting_game(cfg: &GameConfig) -> Result<LabeledDataset, GameError> {
    if !matches!(cfg.game, GameSpec::Fingerprint { .. }) {
        return Err(config_err("expected a fingerprint game"));
    }
    run_game(cfg)
}

impl core::fmt::Display for PirKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            PirKind::Naive => "naive",
            PirKind::Scan => "scan",
            PirKind::Oram => "oram",
        })
    }
}

impl Label {
    pub fn describe(&self) -> String {
        match self {
            Label::Distinguish { class } => format!("c={}", *class as u8),
            Label::Fingerprint { member, identity } => match identity {
                Some(i) if *member => format!("member #{i}"),
                _ => "non-member".to_string(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::CollectorPolicy;
    use crate::trace::Channel;

    fn phh_distinguish(n: usize, x1: &str) -> GameConfig {
        GameConfig {
            game: GameSpec::Distinguish {
                x0: "URL0".into(),
                x1: x1.into(),
                traces_per_class: n,
            },
            workload: WorkloadConfig::phh(1.0, 1e-6),
            sybils: alloc::vec![SybilStrategy::FixedCopies {
                n: 99,
                value: "URL0".into()
            }],
            policy: CollectorPolicy::default(),
            base_seed: 7,
        }
    }

    #[test]
    fn worked_example_baselines() {
        let prior = PriorDistribution::explicit(
            alloc::vec!["example.com".into(), "example.org".into(), "example.co.uk".into(), "example.co.jp".into()],
            alloc::vec![0.6, 0.2, 0.1, 0.1],
        )
        .unwrap();
        let interest = country_code_entries(prior.support());
        let (s_c, s_f) = baseline_rates(&prior, &interest);
        assert!((s_c - 0.8).abs() < 1e-12);
        assert!((s_f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_law_normalized() {
        let p = PriorDistribution::power_law(bundled_url_list(), 0.5).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.probs()[0] / p.probs()[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distinguish_is_balanced_and_reproducible() {
        let cfg = phh_distinguish(10, "URL1");
        let d = run_distinguishing_game(&cfg).unwrap();
        assert_eq!(d.entries.len(), 20);
        assert_eq!(d.binary_labels().iter().filter(|&&c| c).count(), 10);
        assert_eq!(d, run_distinguishing_game(&cfg).unwrap());
        for e in &d.entries {
            let class = matches!(e.label, Label::Distinguish { class: true });
            assert_eq!(e.info.loop_iterations, Some(1 + class as u64));
        }
    }

    #[test]
    fn null_game_gives_identical_classes() {
        let d = run_distinguishing_game(&phh_distinguish(10, "URL0")).unwrap();
        let first = &d.entries[0].trace;
        assert!(d.traces().all(|t| t.events() == first.events()));
    }

    #[test]
    fn rehash_forcer_rehashes_iff_non_member() {
        let list: Vec<String> = (0..40).map(|i| format!("site{i}.{}", if i % 4 == 0 { "de" } else { "com" })).collect();
        let cfg = GameConfig {
            game: GameSpec::Fingerprint {
                prior: PriorSpec::PowerLaw {
                    list: Some(list),
                    exponent: 0.5,
                },
                interest: InterestSpec::CountryCodes,
                traces: 40,
            },
            workload: WorkloadConfig::phh(1.0, 1e-6),
            sybils: alloc::vec![SybilStrategy::OneOfEach, SybilStrategy::RehashForcer],
            policy: CollectorPolicy::with_channels(&[Channel::Page, Channel::Cache]),
            base_seed: 3,
        };
        let plan = plan_game(&cfg).unwrap();
        // 10 members, padded to the next ladder prime
        assert_eq!(plan.sybils.len(), 13);
        let d = run_fingerprinting_game(&cfg).unwrap();
        let params = cfg.workload.phh_params().unwrap();
        let mut fetches = Vec::new();
        for e in &d.entries {
            let Label::Fingerprint { member, .. } = e.label else { panic!() };
            assert_eq!(e.info.rehashed_target, Some(!member));
            let mut inputs = plan.sybils.clone();
            inputs.push(plan.runs[e.index].target.clone());
            let mut m = SimMachine::new(derive_seed(e.seed, 1));
            let rehash = Phh::setup(&mut m, &inputs, &params).unwrap().map().code().rehash;
            let n = e
                .trace
                .events()
                .iter()
                .filter(|ev| matches!(ev, crate::trace::TraceEvent::CodeFetch { gpn } if *gpn == rehash))
                .count();
            fetches.push((member, n));
        }
        // the trace alone shows the extra rehash
        let base = fetches.iter().filter(|f| f.0).map(|f| f.1).min().unwrap();
        assert!(fetches.iter().all(|&(member, n)| n > base || member));
        assert!(fetches.iter().all(|&(member, n)| n == base || !member));
        assert!(d.s_c.unwrap() >= 0.5);
    }

    #[test]
    fn infeasible_forcer_and_bad_configs() {
        let mut cfg = phh_distinguish(10, "URL1");
        cfg.sybils.push(SybilStrategy::RehashForcer);
        assert!(plan_game(&cfg).is_err());
        let mut cfg = phh_distinguish(9, "URL1");
        assert!(plan_game(&cfg).is_err());
        cfg.workload = WorkloadConfig::pir(PirKind::Scan, 10);
        cfg.sybils.clear();
        cfg.game = GameSpec::Distinguish {
            x0: "0".into(),
            x1: "10".into(),
            traces_per_class: 10,
        };
        assert!(plan_game(&cfg).is_err());
    }
}

//! Monte-Carlo memory experiments over a correlated detector error model.
//!
//! Shots are sampled straight from the model's mechanisms. Shot `i` draws
//! its errors from its own ChaCha8 stream and gets its own decoder seed, so
//! a report depends only on the configuration and never on the number of
//! worker threads.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_in, DecodeError, DecodeInput, DecodeOutcome, DecoderConfig, DecoderGraph, DecoderState};
use crate::ensemble::ensemble_decode_in;
use crate::gari::CorrelatedModel;
use crate::mask::ObsMask;
use crate::seed::{mix_seed, stream_rng};

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.5758;
/// Below this many failures a confidence interval is flagged.
pub const MIN_CONFIDENT_FAILURES: u64 = 100;

const SAMPLE_DOMAIN: u64 = 0x5348_4f54; // "SHOT"
const DECODE_DOMAIN: u64 = 0x4445_4344; // "DECD"
const CHUNK: u64 = 1 << 14;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("logical error rate {0} is outside [0, 0.5]")]
    LerDomain(f64),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// One sampled shot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    /// Fired columns of `D_XYZ`, increasing.
    pub errors: Vec<usize>,
    pub input: DecodeInput,
    pub true_obs: ObsMask,
}

/// Fires every column of `D_XYZ` independently with its prior.
pub fn sample_shot(cm: &CorrelatedModel, rng: &mut ChaCha8Rng) -> Shot {
    let errors: Vec<usize> = cm
        .priors
        .iter()
        .enumerate()
        .filter(|(_, &p)| rng.random::<f64>() < p)
        .map(|(c, _)| c)
        .collect();
    shot_from_errors(cm, errors)
}

/// Syndromes and observables of a given error pattern.
pub fn shot_from_errors(cm: &CorrelatedModel, errors: Vec<usize>) -> Shot {
    let s = cm.matrix.syndrome_of_support(&errors);
    let (s_x, s_z) = cm.split_syndrome(&s);
    let mut true_obs = ObsMask::new();
    for &c in &errors {
        true_obs.xor_assign(&cm.obs_masks[c]);
    }
    Shot { errors, input: DecodeInput { s_x, s_z }, true_obs }
}

/// Single decoder or lockstep ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decoding {
    Single,
    Ensemble { size: usize, base_seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub per_iter_ns: f64,
    pub budget_ns_per_round: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub shots: u64,
    pub rounds: u32,
    pub physical_p_label: Option<f64>,
    pub seed: u64,
    pub decoder: DecoderConfig,
    pub decoding: Decoding,
    pub latency: Option<LatencyParams>,
}

impl ExperimentConfig {
    pub fn new(shots: u64, rounds: u32, seed: u64) -> Self {
        Self {
            shots,
            rounds,
            physical_p_label: None,
            seed,
            decoder: DecoderConfig::default(),
            decoding: Decoding::Single,
            latency: None,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.shots == 0 {
            return Err(HarnessError::Config("shots must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(HarnessError::Config("rounds must be at least 1".into()));
        }
        if let Decoding::Ensemble { size: 0, .. } = self.decoding {
            return Err(HarnessError::Config("ensemble size must be at least 1".into()));
        }
        self.decoder.validate()?;
        Ok(())
    }

    /// Error-sampling stream of shot `i`.
    pub fn shot_rng(&self, i: u64) -> ChaCha8Rng {
        stream_rng(mix_seed(self.seed, SAMPLE_DOMAIN), i)
    }

    /// Decoder seeds of shot `i`, one per ensemble member.
    pub fn shot_decoder_seeds(&self, i: u64) -> Vec<u64> {
        match self.decoding {
            Decoding::Single => vec![mix_seed(mix_seed(self.seed, DECODE_DOMAIN), i)],
            Decoding::Ensemble { size, base_seed } => {
                let base = mix_seed(base_seed, i);
                (0..size as u64).map(|m| mix_seed(base, m)).collect()
            }
        }
    }
}

/// Per-shot result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: u64,
    pub converged: bool,
    pub iterations: usize,
    pub member: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProjection {
    pub per_iter_ns: f64,
    pub per_round_avg_ns: f64,
    pub budget_ns_per_round: Option<f64>,
    pub budget_iters: Option<u64>,
    pub fraction_within_budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub shots: u64,
    pub rounds: u32,
    pub physical_p: Option<f64>,
    pub seed: u64,
    pub decoding: Decoding,
    pub alpha: f64,
    pub max_iters: usize,
    pub failures: u64,
    pub non_convergences: u64,
    pub mis_corrections: u64,
    pub ler: f64,
    pub ler_per_round: f64,
    pub ci99: (f64, f64),
    /// `ci99` endpoints mapped through the per-round conversion.
    pub ci99_per_round: (f64, f64),
    pub low_confidence: bool,
    pub iteration_histogram: BTreeMap<usize, u64>,
    pub avg_iterations: f64,
    /// How often each ensemble member supplied the returned solution.
    pub member_histogram: BTreeMap<usize, u64>,
    pub latency_projection: Option<LatencyProjection>,
}

#[derive(Debug, Default)]
struct Tally {
    shots: u64,
    non_convergences: u64,
    mis_corrections: u64,
    iteration_sum: u64,
    iterations: BTreeMap<usize, u64>,
    members: BTreeMap<usize, u64>,
}

impl Tally {
    fn add(&mut self, r: &ShotRecord) {
        self.shots += 1;
        if !r.converged {
            self.non_convergences += 1;
        } else if r.failed {
            self.mis_corrections += 1;
        }
        self.iteration_sum += r.iterations as u64;
        *self.iterations.entry(r.iterations).or_default() += 1;
        *self.members.entry(r.member).or_default() += 1;
    }

    fn report(self, cfg: &ExperimentConfig) -> ExperimentReport {
        let failures = self.non_convergences + self.mis_corrections;
        let ler = failures as f64 / self.shots as f64;
        let ci = ci99(failures, self.shots);
        let per_round = |x: f64| ler_per_round(x.min(0.5), cfg.rounds).expect("clamped into domain");
        let avg_iterations = self.iteration_sum as f64 / self.shots as f64;
        let latency_projection = cfg.latency.as_ref().map(|l| {
            latency_projection(avg_iterations, l.per_iter_ns, cfg.rounds, &self.iterations, l.budget_ns_per_round)
        });
        ExperimentReport {
            shots: self.shots,
            rounds: cfg.rounds,
            physical_p: cfg.physical_p_label,
            seed: cfg.seed,
            decoding: cfg.decoding,
            alpha: cfg.decoder.alpha,
            max_iters: cfg.decoder.max_iters,
            failures,
            non_convergences: self.non_convergences,
            mis_corrections: self.mis_corrections,
            ler,
            ler_per_round: per_round(ler),
            ci99: (ci.lo, ci.hi),
            ci99_per_round: (per_round(ci.lo), per_round(ci.hi)),
            low_confidence: ci.low_confidence,
            iteration_histogram: self.iterations,
            avg_iterations,
            member_histogram: self.members,
            latency_projection,
        }
    }
}

/// Decoder states kept by one worker between shots.
#[derive(Default)]
struct Scratch {
    single: Option<DecoderState>,
    members: Vec<DecoderState>,
}

fn decode_shot(
    graph: &DecoderGraph,
    cfg: &ExperimentConfig,
    input: &DecodeInput,
    shot: u64,
    scratch: &mut Scratch,
) -> Result<(DecodeOutcome, usize), DecodeError> {
    let seeds = cfg.shot_decoder_seeds(shot);
    match cfg.decoding {
        Decoding::Single => {
            let dc = DecoderConfig { seed: seeds[0], ..cfg.decoder.clone() };
            decode_in(graph, input, &dc, &mut scratch.single).map(|o| (o, 0))
        }
        Decoding::Ensemble { .. } => ensemble_decode_in(graph, input, &cfg.decoder, &seeds, &mut scratch.members)
            .map(|e| (e.outcome, e.member)),
    }
}

fn run_shot(
    cm: &CorrelatedModel,
    graph: &DecoderGraph,
    cfg: &ExperimentConfig,
    i: u64,
    scratch: &mut Scratch,
) -> Result<ShotRecord, DecodeError> {
    let shot = sample_shot(cm, &mut cfg.shot_rng(i));
    let (out, member) = decode_shot(graph, cfg, &shot.input, i, scratch)?;
    Ok(ShotRecord {
        shot: i,
        converged: out.converged,
        iterations: out.iterations,
        member,
        failed: !out.converged || out.predicted_obs != shot.true_obs,
    })
}

/// Runs the experiment and keeps every per-shot record.
pub fn run_experiment_with_records(
    cm: &CorrelatedModel,
    graph: &DecoderGraph,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentReport, Vec<ShotRecord>), HarnessError> {
    let mut records = Vec::with_capacity(cfg.shots.min(1 << 24) as usize);
    let report = run_experiment_inner(cm, graph, cfg, |r| records.push(r.clone()))?;
    Ok((report, records))
}

pub fn run_experiment(cm: &CorrelatedModel, graph: &DecoderGraph, cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_experiment_inner(cm, graph, cfg, |_| {})
}

fn run_experiment_inner(
    cm: &CorrelatedModel,
    graph: &DecoderGraph,
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(&ShotRecord),
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let mut tally = Tally::default();
    let mut start = 0;
    while start < cfg.shots {
        let end = (start + CHUNK).min(cfg.shots);
        let chunk: Vec<ShotRecord> =
            (start..end)
            .into_par_iter()
            .map_init(Scratch::default, |scratch, i| run_shot(cm, graph, cfg, i, scratch))
            .collect::<Result<_, _>>()?;
        for r in &chunk {
            tally.add(r);
            sink(r);
        }
        log::info!("{end}/{} shots, {} failures", cfg.shots, tally.non_convergences + tally.mis_corrections);
        start = end;
    }
    Ok(tally.report(cfg))
}

/// Decodes given syndromes instead of sampled ones. A shot fails when the
/// decoder does not converge or, if expected observables are given, when the
/// prediction differs.
pub fn run_injected(
    graph: &DecoderGraph,
    inputs: &[DecodeInput],
    expected_obs: Option<&[ObsMask]>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, HarnessError> {
    let cfg = ExperimentConfig { shots: inputs.len() as u64, ..cfg.clone() };
    cfg.validate()?;
    let records: Vec<ShotRecord> = inputs
        .par_iter()
        .enumerate()
        .map_init(Scratch::default, |scratch, (i, input)| {
            let (out, member) = decode_shot(graph, &cfg, input, i as u64, scratch)?;
            let wrong = expected_obs.is_some_and(|e| e[i] != out.predicted_obs);
            Ok(ShotRecord {
                shot: i as u64,
                converged: out.converged,
                iterations: out.iterations,
                member,
                failed: !out.converged || wrong,
            })
        })
        .collect::<Result<_, DecodeError>>()?;
    let mut tally = Tally::default();
    records.iter().for_each(|r| tally.add(r));
    Ok(tally.report(&cfg))
}

/// Per-round error rate from the error rate after `rounds` rounds:
/// `(1 - (1 - 2 ler)^(1/r)) / 2`.
pub fn ler_per_round(ler: f64, rounds: u32) -> Result<f64, HarnessError> {
    if !(0.0..=0.5).contains(&ler) {
        return Err(HarnessError::LerDomain(ler));
    }
    if ler == 0.5 {
        return Ok(0.5);
    }
    Ok(-((-2.0 * ler).ln_1p() / rounds as f64).exp_m1() / 2.0)
}

/// Error rate after `rounds` independent rounds at per-round rate `p`:
/// `(1 - (1 - 2p)^r) / 2`.
pub fn compose_rounds(p: f64, rounds: u32) -> f64 {
    if p == 0.5 {
        return 0.5;
    }
    -((-2.0 * p).ln_1p() * rounds as f64).exp_m1() / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub low_confidence: bool,
}

/// 99% Wilson score interval for `failures / shots`.
pub fn ci99(failures: u64, shots: u64) -> ConfidenceInterval {
    let n = shots as f64;
    let p = failures as f64 / n;
    let z2 = Z_99 * Z_99;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_99 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ConfidenceInterval {
        lo: if failures == 0 { 0.0 } else { (center - half).max(0.0) },
        hi: if failures == shots { 1.0 } else { (center + half).min(1.0) },
        low_confidence: failures < MIN_CONFIDENT_FAILURES,
    }
}

/// Average decoding time per round and, given a per-round budget, the number
/// of iterations that fit and the fraction of shots that finished within it.
pub fn latency_projection(
    avg_iters: f64,
    per_iter_ns: f64,
    rounds: u32,
    hist: &BTreeMap<usize, u64>,
    budget_ns_per_round: Option<f64>,
) -> LatencyProjection {
    let budget_iters = budget_ns_per_round.map(|b| (b * rounds as f64 / per_iter_ns).floor() as u64);
    let total: u64 = hist.values().sum();
    let fraction_within_budget = budget_iters.filter(|_| total > 0).map(|k| {
        let within: u64 = hist.range(..=k as usize).map(|(_, c)| c).sum();
        within as f64 / total as f64
    });
    LatencyProjection {
        per_iter_ns,
        per_round_avg_ns: avg_iters * per_iter_ns / rounds as f64,
        budget_ns_per_round,
        budget_iters,
        fraction_within_budget,
    }
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "shots,rounds,physical_p,seed,ensemble_size,alpha,max_iters,failures,\
non_convergences,mis_corrections,ler,ler_per_round,ci99_lo,ci99_hi,ci99_round_lo,ci99_round_hi,\
low_confidence,avg_iterations,per_round_avg_ns,budget_iters,fraction_within_budget";

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_default();
        let lat = self.latency_projection.as_ref();
        let size = match self.decoding {
            Decoding::Single => 1,
            Decoding::Ensemble { size, .. } => size,
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{}",
            self.shots,
            self.rounds,
            opt(self.physical_p.map(|p| p.to_string())),
            self.seed,
            size,
            self.alpha,
            self.max_iters,
            self.failures,
            self.non_convergences,
            self.mis_corrections,
            self.ler,
            self.ler_per_round,
            self.ci99.0,
            self.ci99.1,
            self.ci99_per_round.0,
            self.ci99_per_round.1,
            self.low_confidence,
            self.avg_iterations,
            opt(lat.map(|l| l.per_round_avg_ns.to_string())),
            opt(lat.and_then(|l| l.budget_iters).map(|b| b.to_string())),
            opt(lat.and_then(|l| l.fraction_within_budget).map(|f| f.to_string())),
        )
    }
}

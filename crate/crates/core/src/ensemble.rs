//! Ensembles of differently seeded decoders run in lockstep.
//!
//! All members advance one iteration at a time. At the first iteration where
//! any member converges, the converged member with the smallest solution
//! weight wins (lowest index on ties). If no member converges, member 0's
//! outcome is returned.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{DecodeError, DecodeInput, DecodeOutcome, DecoderConfig, DecoderGraph, DecoderState};
use crate::gari::GariModel;
use crate::seed::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub size: usize,
    pub base_seed: u64,
    /// Shared member settings; the seed is replaced per member.
    pub decoder: DecoderConfig,
}

impl EnsembleConfig {
    pub fn member_seeds(&self) -> Vec<u64> {
        (0..self.size as u64).map(|i| mix_seed(self.base_seed, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutcome {
    pub outcome: DecodeOutcome,
    pub member: usize,
}

/// Runs one member per seed. Members are stepped in parallel between
/// convergence checks; the result does not depend on the worker count.
pub fn ensemble_decode_with_seeds(
    graph: &DecoderGraph,
    input: &DecodeInput,
    decoder: &DecoderConfig,
    seeds: &[u64],
) -> Result<EnsembleOutcome, DecodeError> {
    ensemble_decode_in(graph, input, decoder, seeds, &mut Vec::new())
}

/// Like [`ensemble_decode_with_seeds`], reusing the member states in
/// `members` (grown or truncated to the ensemble size).
pub fn ensemble_decode_in(
    graph: &DecoderGraph,
    input: &DecodeInput,
    decoder: &DecoderConfig,
    seeds: &[u64],
    members: &mut Vec<DecoderState>,
) -> Result<EnsembleOutcome, DecodeError> {
    decoder.validate()?;
    graph.check_input(input)?;
    if seeds.is_empty() {
        return Err(DecodeError::Config("ensemble size must be at least 1".into()));
    }
    members.truncate(seeds.len());
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = DecoderConfig { seed, ..decoder.clone() };
        match members.get_mut(i) {
            Some(st) => st.reset(graph, &cfg),
            None => members.push(DecoderState::new(graph, &cfg)),
        }
    }
    for _ in 0..decoder.max_iters {
        let converged: Vec<bool> = if members.len() > 1 {
            members.par_iter_mut().map(|m| m.step(graph, input)).collect()
        } else {
            members.iter_mut().map(|m| m.step(graph, input)).collect()
        };
        if converged.iter().any(|&c| c) {
            let best = (0..members.len())
                .filter(|&i| converged[i])
                .map(|i| (i, members[i].outcome(graph)))
                .min_by(|(ia, a), (ib, b)| a.weight.total_cmp(&b.weight).then(ia.cmp(ib)))
                .expect("at least one member converged");
            return Ok(EnsembleOutcome { outcome: best.1, member: best.0 });
        }
    }
    Ok(EnsembleOutcome { outcome: members[0].outcome(graph), member: 0 })
}

pub fn ensemble_decode_with_graph(
    graph: &DecoderGraph,
    input: &DecodeInput,
    cfg: &EnsembleConfig,
) -> Result<EnsembleOutcome, DecodeError> {
    ensemble_decode_with_seeds(graph, input, &cfg.decoder, &cfg.member_seeds())
}

pub fn ensemble_decode(gm: &GariModel, input: &DecodeInput, cfg: &EnsembleConfig) -> Result<EnsembleOutcome, DecodeError> {
    ensemble_decode_with_graph(&DecoderGraph::new(gm), input, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::decode_with_graph;
    use crate::dem::{classify_detectors, parse_dem, parse_sidecar};
    use crate::gari::{build_correlated, MemoryBasis};

    fn toy() -> GariModel {
        let m = parse_dem("error(0.01) D0\nerror(0.01) D1 L0\nerror(0.02) D0 D1 L0\n").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0\nZ: 1").unwrap()).unwrap();
        let cm = build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z).unwrap();
        GariModel::from_correlated(&cm).unwrap()
    }

    #[test]
    fn size_one_equals_single_decoder() {
        let g = DecoderGraph::new(&toy());
        let input = DecodeInput { s_x: vec![true], s_z: vec![true] };
        let cfg = EnsembleConfig { size: 1, base_seed: 9, decoder: DecoderConfig::default() };
        let ens = ensemble_decode_with_graph(&g, &input, &cfg).unwrap();
        let single = decode_with_graph(&g, &input, &DecoderConfig { seed: mix_seed(9, 0), ..Default::default() }).unwrap();
        assert_eq!(ens.outcome, single);
        assert_eq!(ens.member, 0);
    }

    #[test]
    fn identical_seeds_equal_single_decoder() {
        let g = DecoderGraph::new(&toy());
        let input = DecodeInput { s_x: vec![true], s_z: vec![false] };
        let dc = DecoderConfig { seed: 5, ..Default::default() };
        let ens = ensemble_decode_with_seeds(&g, &input, &dc, &[5, 5, 5]).unwrap();
        assert_eq!(ens.outcome, decode_with_graph(&g, &input, &dc).unwrap());
        assert_eq!(ens.member, 0);
    }

    #[test]
    fn reused_members_match_fresh_run() {
        let g = DecoderGraph::new(&toy());
        let input = DecodeInput { s_x: vec![true], s_z: vec![true] };
        let dc = DecoderConfig::default();
        let mut members = Vec::new();
        ensemble_decode_in(&g, &input, &dc, &[1, 2, 3, 4], &mut members).unwrap();
        let reused = ensemble_decode_in(&g, &input, &dc, &[7, 8], &mut members).unwrap();
        assert_eq!(members.len(), 2);
        assert_eq!(reused, ensemble_decode_with_seeds(&g, &input, &dc, &[7, 8]).unwrap());
    }

    #[test]
    fn empty_ensemble_is_rejected() {
        let g = DecoderGraph::new(&toy());
        let input = DecodeInput { s_x: vec![false], s_z: vec![false] };
        assert!(ensemble_decode_with_seeds(&g, &input, &DecoderConfig::default(), &[]).is_err());
    }
}
